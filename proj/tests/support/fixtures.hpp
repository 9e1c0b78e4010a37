#pragma once

#include "corpusforge/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fixtures
{

corpusforge::Sample make_sample(const std::string &id, const std::string &question, const std::string &answer,
                                corpusforge::Category category = corpusforge::Category::GeneralVQA,
                                const std::string &source = "src");

corpusforge::Sample make_image_sample(const std::string &id, const std::string &question, const std::string &answer,
                                      std::int64_t width, std::int64_t height,
                                      corpusforge::Category category = corpusforge::Category::GeneralVQA,
                                      const std::string &source = "src");

// 64-style instances: log-normal around `median` with sigma `sigma_log`,
// rounded and clipped to [lo, hi].
std::vector<std::int64_t> lognormal_lengths(std::uint64_t seed, std::size_t n, double median = 600.0,
                                            double sigma_log = 1.0, std::int64_t lo = 16, std::int64_t hi = 8192);

// Uniform lengths in [1, L].
std::vector<std::int64_t> uniform_lengths(std::uint64_t seed, std::size_t n, std::int64_t L);

// 20 samples with planted defects. `defective` lists the ids expected to drop.
struct PlantedCorpus
{
    corpusforge::Pool pool;
    std::vector<std::string> defective;
    std::size_t repetition = 0;
    std::size_t precision = 0;
    std::size_t refusal = 0;
};

PlantedCorpus planted_defect_corpus();

// Writes the 1K-sample fixture (corpus, image embeddings, step configs and a
// six-step pipeline config) into `dir`. Returns the pipeline config path.
std::filesystem::path write_pipeline_fixture(const std::filesystem::path &dir, std::size_t samples = 1000);

// Fresh empty directory under the test scratch root.
std::filesystem::path scratch_dir(const std::string &name);

// Every regular file below `root`, relative path -> contents.
std::vector<std::pair<std::string, std::string>> read_tree(const std::filesystem::path &root);

} // namespace fixtures
