#pragma once

#include "corpusforge/corpus.hpp"
#include "corpusforge/embeddings.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace corpusforge
{

struct QuotaRules
{
    std::int64_t no_selection_below = 20000;
    double keep_at_most_fraction = 0.5;
    std::int64_t large_source_threshold = 100000;
    std::int64_t large_source_cap = 50000;
};

void validate(const QuotaRules &rules);

// Number of samples to keep from a source of `size` samples.
std::int64_t quota_for_source(std::int64_t size, const QuotaRules &rules, std::optional<std::int64_t> override = {});

struct KMeansResult
{
    std::size_t k = 0;
    std::size_t dim = 0;
    // k x dim, row-major.
    std::vector<double> centroids;
    std::vector<std::size_t> assignments;
    double objective = 0.0;
    // Objective after every assignment step, in order.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
};

struct KMeansOptions
{
    std::size_t max_iter = 100;
    double tol = 1e-9;
};

// Lloyd's algorithm with seeded k-means++ initialization.
KMeansResult kmeans(std::span<const std::vector<float>> vectors, std::size_t k, std::uint64_t seed,
                    const KMeansOptions &opts = {});

std::size_t count_distinct(std::span<const std::vector<float>> vectors);

struct SelectionConfig
{
    QuotaRules quota;
    std::size_t target_cluster_size = 1000;
    KMeansOptions kmeans;
    std::set<Category> clustered_categories = {Category::Mathematics, Category::Science, Category::ChartTable,
                                               Category::OcrQA, Category::NaiveOCR};
    // Per source: clusters whose members are all taken before the
    // proportional split of the remaining quota.
    std::map<std::string, std::vector<std::size_t>> boost_clusters;
    // Per source quota overrides.
    std::map<std::string, std::int64_t> overrides;
};

SelectionConfig selection_config_from_json(const nlohmann::json &j);

struct SelectionPlan
{
    std::string source;
    std::int64_t quota = 0;
    std::size_t k = 0;
    std::string mode;
    std::uint64_t seed = 0;
    std::map<std::string, std::size_t> assignments;
    std::vector<std::int64_t> cluster_sizes;
    std::vector<std::int64_t> cluster_quotas;
    // In source order.
    std::vector<std::string> selected;
    std::vector<std::string> notes;
};

// Per-cluster quotas proportional to cluster sizes. When quota >= number of
// nonempty clusters every nonempty cluster gets at least one; leftover slots
// go round-robin by descending fractional share. Boosted clusters are taken
// whole first when they fit.
std::vector<std::int64_t> allocate_cluster_quotas(std::span<const std::int64_t> sizes, std::int64_t quota,
                                                  std::span<const std::size_t> boosted = {});

// Selects `quota` samples from one source. Falls back to seeded uniform
// sampling when clustering is off for the category or embeddings are missing.
SelectionPlan select_subset(std::span<const Sample> source, const EmbeddingStore *image_embeddings,
                            std::int64_t quota, const SelectionConfig &cfg, std::uint64_t seed);

nlohmann::json selection_plan_to_json(const SelectionPlan &plan);

} // namespace corpusforge
