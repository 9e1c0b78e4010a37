#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace corpusforge
{

// Binary embedding store, little-endian:
//   "CFE1" | u32 version=1 | u32 dim | u64 count
//   count x ( u16 id_len | id bytes | dim x f32 )
class EmbeddingStore
{
public:
    static constexpr std::uint32_t kVersion = 1;

    EmbeddingStore() = default;
    explicit EmbeddingStore(std::uint32_t dim) : dim_(dim) {}

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string> &ids() const noexcept { return ids_; }

    // Throws ValidationError on a duplicate id or a length != dim.
    void add(std::string id, std::span<const float> vec);

    // Empty optional when the id is unknown.
    std::optional<std::span<const float>> find(std::string_view id) const;

    static EmbeddingStore parse(std::string_view bytes);
    std::string serialize() const;

private:
    std::uint32_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

EmbeddingStore load_embeddings(const std::filesystem::path &path);
void write_embeddings(const EmbeddingStore &store, const std::filesystem::path &path);

struct EmbeddingRecord
{
    std::string sample_id;
    std::optional<std::vector<float>> image_vec;
    std::optional<std::vector<float>> text_vec;
};

// Image and text stores live in separate files; this joins them by id.
struct EmbeddingSet
{
    std::optional<EmbeddingStore> image;
    std::optional<EmbeddingStore> text;

    // Empty when neither store knows the id.
    std::optional<EmbeddingRecord> record(std::string_view id) const;
};

} // namespace corpusforge
