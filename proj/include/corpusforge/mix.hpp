#pragma once

#include "corpusforge/corpus.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace corpusforge
{

struct MixConstraints
{
    double text_only_floor = 0.20;
    // Upper bound on a category's effective share. Empty by default.
    std::map<Category, double> max_fraction;
};

void validate(const MixConstraints &c);
MixConstraints mix_constraints_from_json(const nlohmann::json &j);

struct ConstraintResult
{
    std::string name;
    bool passed = false;
    std::string detail;
};

struct MixReport
{
    std::optional<Stage> stage;
    std::int64_t total_effective = 0;
    std::map<Category, std::int64_t> category_effective;
    std::map<Category, double> category_fraction;
    std::map<std::string, std::size_t> source_count;
    std::map<std::string, std::int64_t> source_effective;
    std::int64_t text_only_effective = 0;
    double text_only_fraction = 0.0;
    std::vector<ConstraintResult> constraints;

    bool all_passed() const;
};

// Category shares over effective counts. Throws on an empty pool.
MixReport distribution_report(const Pool &pool);

std::vector<ConstraintResult> check_constraints(const MixReport &report, const MixConstraints &c);

struct MixResult
{
    Pool corpus;
    MixReport report;
};

// Sources tagged with `stage`, in manifest order. A quota_override below the
// source size takes a seeded subset; repeat factors multiply into each
// sample. With strict set a failed constraint throws ConstraintError.
MixResult compose_stage(const std::vector<DataSourceManifest> &manifests, Stage stage, const MixConstraints &c,
                        std::uint64_t seed, bool strict);

nlohmann::json mix_report_to_json(const MixReport &report);
std::string mix_report_table(const MixReport &report);

} // namespace corpusforge
