#include "corpusforge/embeddings.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <bit>
#include <cstring>

namespace corpusforge
{

namespace
{
constexpr char kMagic[4] = {'C', 'F', 'E', '1'};

class Reader
{
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    template <typename T>
    T read_le()
    {
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
        {
            v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }

    float read_f32() { return std::bit_cast<float>(read_le<std::uint32_t>()); }

    std::string_view take(std::size_t n)
    {
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
void write_le(std::string &out, T v)
{
    for (std::size_t i = 0; i < sizeof(T); ++i)
    {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}
} // namespace

void EmbeddingStore::add(std::string id, std::span<const float> vec)
{
    if (vec.size() != dim_)
    {
        throw ValidationError("embedding for '" + id + "' has length " + std::to_string(vec.size()) +
                              ", store dim is " + std::to_string(dim_));
    }
    if (id.size() > 0xFFFF)
    {
        throw ValidationError("embedding id too long");
    }
    if (index_.contains(id))
    {
        throw ValidationError("duplicate embedding id '" + id + "'");
    }
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    data_.insert(data_.end(), vec.begin(), vec.end());
}

std::optional<std::span<const float>> EmbeddingStore::find(std::string_view id) const
{
    auto it = index_.find(std::string(id));
    if (it == index_.end())
    {
        return std::nullopt;
    }
    return std::span<const float>(data_.data() + it->second * dim_, dim_);
}

EmbeddingStore EmbeddingStore::parse(std::string_view bytes)
{
    Reader r(bytes);
    if (!r.has(4) || std::memcmp(r.take(4).data(), kMagic, 4) != 0)
    {
        throw ValidationError("embedding store: magic mismatch (expected CFE1)");
    }
    if (!r.has(16))
    {
        throw ValidationError("embedding store: truncated header");
    }
    const auto version = r.read_le<std::uint32_t>();
    if (version != kVersion)
    {
        throw ValidationError("embedding store: unsupported version " + std::to_string(version));
    }
    const auto dim = r.read_le<std::uint32_t>();
    const auto count = r.read_le<std::uint64_t>();
    if (dim == 0)
    {
        throw ValidationError("embedding store: dim must be positive");
    }

    EmbeddingStore store(dim);
    std::vector<float> vec(dim);
    for (std::uint64_t rec = 0; rec < count; ++rec)
    {
        const std::string where = "truncated at record " + std::to_string(rec + 1);
        if (!r.has(2))
        {
            throw ValidationError("embedding store: " + where);
        }
        const auto id_len = r.read_le<std::uint16_t>();
        if (!r.has(id_len + static_cast<std::size_t>(dim) * 4))
        {
            throw ValidationError("embedding store: " + where);
        }
        std::string id(r.take(id_len));
        for (auto &x : vec)
        {
            x = r.read_f32();
        }
        store.add(std::move(id), vec);
    }
    if (r.remaining() != 0)
    {
        throw ValidationError("embedding store: " + std::to_string(r.remaining()) + " trailing bytes after " +
                              std::to_string(count) + " records");
    }
    return store;
}

std::string EmbeddingStore::serialize() const
{
    std::string out(kMagic, 4);
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint32_t>(out, dim_);
    write_le<std::uint64_t>(out, ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i)
    {
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(ids_[i].size()));
        out += ids_[i];
        for (std::size_t d = 0; d < dim_; ++d)
        {
            write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(data_[i * dim_ + d]));
        }
    }
    return out;
}

EmbeddingStore load_embeddings(const std::filesystem::path &path)
{
    try
    {
        return EmbeddingStore::parse(read_file(path));
    }
    catch (const ValidationError &e)
    {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_embeddings(const EmbeddingStore &store, const std::filesystem::path &path)
{
    write_file(path, store.serialize());
}

std::optional<EmbeddingRecord> EmbeddingSet::record(std::string_view id) const
{
    EmbeddingRecord rec;
    rec.sample_id = std::string(id);
    if (image)
    {
        if (auto v = image->find(id))
        {
            rec.image_vec.emplace(v->begin(), v->end());
        }
    }
    if (text)
    {
        if (auto v = text->find(id))
        {
            rec.text_vec.emplace(v->begin(), v->end());
        }
    }
    if (!rec.image_vec && !rec.text_vec)
    {
        return std::nullopt;
    }
    return rec;
}

} // namespace corpusforge
