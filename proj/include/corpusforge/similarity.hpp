#pragma once

#include "corpusforge/corpus.hpp"
#include "corpusforge/embeddings.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace corpusforge
{

// Cosine similarity clamped to [0, 1]. Throws ValidationError on empty,
// mismatched or zero-norm inputs.
double cosine_sim(std::span<const float> u, std::span<const float> v);

// A sample's image and text vectors. An empty vector means "missing".
struct EmbeddedSample
{
    std::string id;
    std::vector<float> image;
    std::vector<float> text;
};

struct SampleMatch
{
    std::string sample_id;
    std::string best_pool_id;
    double image_sim = 0.0;
    double text_sim = 0.0;
    double product = 0.0;
};

struct SimilarityReport
{
    std::string source_name;
    Category category = Category::GeneralVQA;
    // Mean over new samples of the best image*text product against the pool.
    double score = 0.0;
    double max_term = 0.0;
    double dedup_threshold = 0.9;
    std::vector<SampleMatch> per_sample;
    std::vector<std::string> duplicates;
};

struct SimilarityOptions
{
    std::string source_name;
    double dedup_threshold = 0.9;
    // Pool vectors are visited in tiles of this many samples.
    std::size_t block_size = 256;
};

inline constexpr double kDefaultDedupThreshold = 0.9;
inline constexpr double kDefaultSourceThreshold = 0.3;

// Best-match pool id ties resolve to the lowest pool index.
SimilarityReport similarity_score(std::span<const EmbeddedSample> new_source, std::span<const EmbeddedSample> pool,
                                  Category category, const SimilarityOptions &opts = {});

struct DedupResult
{
    std::vector<std::string> kept;
    std::vector<std::string> removed;
    SimilarityReport report;
};

// Removes new samples whose best product is >= threshold. threshold must be in (0, 1].
DedupResult dedup(std::span<const EmbeddedSample> new_source, std::span<const EmbeddedSample> pool, double threshold,
                  Category category, std::string source_name = {});

enum class Admission
{
    Distinct,
    Review,
};

std::string_view to_string(Admission a);

// Distinct iff score < threshold. Anything at or above needs a human call.
Admission source_admission(const SimilarityReport &report, double source_threshold = kDefaultSourceThreshold);

nlohmann::json report_to_json(const SimilarityReport &report);

// Samples of `category` from the pool joined with their vectors. Samples with
// a missing vector are reported together in one ValidationError.
std::vector<EmbeddedSample> gather_embedded(const Pool &pool, const EmbeddingSet &embeddings, Category category);

} // namespace corpusforge
