#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace corpusforge
{

enum class Category
{
    CaptioningKnowledge,
    Mathematics,
    Science,
    ChartTable,
    NaiveOCR,
    OcrQA,
    GroundingCounting,
    GeneralVQA,
    TextOnly,
};

inline constexpr std::size_t kCategoryCount = 9;

enum class Modality
{
    TextOnly,
    ImageText,
};

enum class Role
{
    User,
    Assistant,
};

enum class Stage
{
    Stage1,
    Stage1_5,
    Stage2,
};

std::string_view to_string(Category c);
std::string_view to_string(Modality m);
std::string_view to_string(Stage s);
Category parse_category(std::string_view s);
Modality parse_modality(std::string_view s);
Stage parse_stage(std::string_view s);
const std::vector<Category> &all_categories();

struct ConversationTurn
{
    Role role = Role::User;
    std::string text;

    bool operator==(const ConversationTurn &) const = default;
};

struct ImageRef
{
    std::string path;
    std::optional<std::int64_t> width;
    std::optional<std::int64_t> height;

    bool operator==(const ImageRef &) const = default;
};

struct Sample
{
    std::string id;
    std::string source;
    Category category = Category::GeneralVQA;
    Modality modality = Modality::TextOnly;
    std::vector<ConversationTurn> turns;
    std::vector<ImageRef> images;
    std::optional<std::int64_t> token_length;
    std::int64_t repeat_factor = 1;
    // Free-form provenance, e.g. the original answer replaced by augmentation.
    std::map<std::string, std::string> provenance;

    bool operator==(const Sample &) const = default;

    // Index of the last assistant turn, or npos.
    std::size_t last_assistant_index() const;
    // Index of the last user turn preceding the last assistant turn, or npos.
    std::size_t last_question_index() const;
};

using Pool = std::vector<Sample>;

// Throws ValidationError describing the first violated invariant.
void validate_sample(const Sample &s);

Sample sample_from_json(const nlohmann::json &j);
nlohmann::json sample_to_json(const Sample &s);

// Canonical single-line encoding (sorted keys, UTF-8 kept verbatim).
std::string serialize_sample(const Sample &s);

Pool parse_corpus(std::string_view text);
Pool load_corpus(const std::filesystem::path &path);
std::string serialize_corpus(const Pool &pool);
void write_corpus(const Pool &pool, const std::filesystem::path &path);

// Throws ValidationError naming the first duplicate id.
void check_unique_ids(const Pool &pool);

struct DataSourceManifest
{
    std::string name;
    Category category = Category::GeneralVQA;
    std::filesystem::path corpus_path;
    std::optional<std::filesystem::path> image_embeddings;
    std::optional<std::filesystem::path> text_embeddings;
    std::optional<std::int64_t> quota_override;
    std::int64_t repeat_factor = 1;
    Stage stage = Stage::Stage2;
};

// Relative paths resolve against `base_dir`; every referenced path must exist.
std::vector<DataSourceManifest> parse_manifests(const nlohmann::json &j, const std::filesystem::path &base_dir);
std::vector<DataSourceManifest> load_manifests(const std::filesystem::path &path);

struct PoolStats
{
    std::size_t total = 0;
    std::int64_t total_effective = 0;
    std::map<Category, std::size_t> per_category;
    std::map<Category, std::int64_t> per_category_effective;
    std::map<std::string, std::size_t> per_source;
    std::map<std::string, std::int64_t> per_source_effective;
    std::size_t text_only = 0;
    std::size_t image_text = 0;
    // text_only / total; 0 with fraction_defined=false on an empty pool.
    double text_only_fraction = 0.0;
    bool fraction_defined = false;
    // Power-of-two buckets keyed by exclusive upper bound, over stored token_length.
    std::map<std::int64_t, std::size_t> token_length_histogram;
    std::size_t unknown_length = 0;
};

PoolStats pool_stats(const Pool &pool);
nlohmann::json pool_stats_to_json(const PoolStats &stats);

} // namespace corpusforge
