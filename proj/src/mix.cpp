#include "corpusforge/mix.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <algorithm>
#include <cstdio>

namespace corpusforge
{

namespace
{
using json = nlohmann::json;

std::string format_fraction(double f)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", f);
    return buf;
}
} // namespace

bool MixReport::all_passed() const
{
    return std::all_of(constraints.begin(), constraints.end(), [](const ConstraintResult &r) { return r.passed; });
}

void validate(const MixConstraints &c)
{
    if (!(c.text_only_floor >= 0.0 && c.text_only_floor <= 1.0))
    {
        throw ValidationError("text_only_floor must be in [0, 1]");
    }
    for (const auto &[cat, f] : c.max_fraction)
    {
        if (!(f > 0.0 && f <= 1.0))
        {
            throw ValidationError("max_fraction for " + std::string(to_string(cat)) + " must be in (0, 1]");
        }
    }
}

MixConstraints mix_constraints_from_json(const json &j)
{
    if (!j.is_object())
    {
        throw ValidationError("mix constraints must be a JSON object");
    }
    MixConstraints c;
    try
    {
        for (const auto &[key, value] : j.items())
        {
            if (key == "text_only_floor")
            {
                c.text_only_floor = value.get<double>();
            }
            else if (key == "max_fraction")
            {
                for (const auto &[cat, f] : value.items())
                {
                    c.max_fraction[parse_category(cat)] = f.get<double>();
                }
            }
            else
            {
                throw ValidationError("unknown mix constraint '" + key + "'");
            }
        }
    }
    catch (const json::exception &e)
    {
        throw ValidationError(std::string("mix constraints: ") + e.what());
    }
    validate(c);
    return c;
}

MixReport distribution_report(const Pool &pool)
{
    if (pool.empty())
    {
        throw ValidationError("distribution_report: empty pool");
    }
    MixReport r;
    for (const auto &s : pool)
    {
        r.total_effective += s.repeat_factor;
        r.category_effective[s.category] += s.repeat_factor;
        r.source_count[s.source] += 1;
        r.source_effective[s.source] += s.repeat_factor;
        if (s.modality == Modality::TextOnly)
        {
            r.text_only_effective += s.repeat_factor;
        }
    }
    const auto total = static_cast<double>(r.total_effective);
    for (const auto &[cat, n] : r.category_effective)
    {
        r.category_fraction[cat] = static_cast<double>(n) / total;
    }
    r.text_only_fraction = static_cast<double>(r.text_only_effective) / total;
    return r;
}

std::vector<ConstraintResult> check_constraints(const MixReport &report, const MixConstraints &c)
{
    std::vector<ConstraintResult> out;
    {
        ConstraintResult r;
        r.name = "text_only_floor";
        r.passed = report.text_only_fraction >= c.text_only_floor;
        r.detail = "text-only fraction " + format_fraction(report.text_only_fraction) +
                   (r.passed ? " >= " : " < ") + format_fraction(c.text_only_floor);
        out.push_back(std::move(r));
    }
    for (const auto &[cat, limit] : c.max_fraction)
    {
        const auto it = report.category_fraction.find(cat);
        const double f = it == report.category_fraction.end() ? 0.0 : it->second;
        ConstraintResult r;
        r.name = "max_fraction:" + std::string(to_string(cat));
        r.passed = f <= limit;
        r.detail = std::string(to_string(cat)) + " fraction " + format_fraction(f) + (r.passed ? " <= " : " > ") +
                   format_fraction(limit);
        out.push_back(std::move(r));
    }
    return out;
}

MixResult compose_stage(const std::vector<DataSourceManifest> &manifests, Stage stage, const MixConstraints &c,
                        std::uint64_t seed, bool strict)
{
    validate(c);
    std::vector<const DataSourceManifest *> sources;
    for (const auto &m : manifests)
    {
        if (m.stage == stage)
        {
            sources.push_back(&m);
        }
    }
    if (sources.empty())
    {
        throw ValidationError("no sources tagged for " + std::string(to_string(stage)));
    }

    std::vector<Pool> loaded(sources.size());
    parallel_for(
        sources.size(), [&](std::size_t i) { loaded[i] = load_corpus(sources[i]->corpus_path); }, 1);

    MixResult result;
    for (std::size_t i = 0; i < sources.size(); ++i)
    {
        const auto &m = *sources[i];
        Pool &src = loaded[i];
        const auto size = static_cast<std::int64_t>(src.size());
        const std::int64_t take = m.quota_override ? std::min(*m.quota_override, size) : size;
        std::vector<std::size_t> keep;
        if (take < size)
        {
            Rng rng(hash_key(seed, m.name));
            keep = rng.sample_without_replacement(src.size(), static_cast<std::size_t>(take));
            std::sort(keep.begin(), keep.end());
        }
        else
        {
            keep.resize(src.size());
            for (std::size_t k = 0; k < keep.size(); ++k)
            {
                keep[k] = k;
            }
        }
        for (auto k : keep)
        {
            Sample s = std::move(src[k]);
            s.repeat_factor *= m.repeat_factor;
            if (s.source.empty())
            {
                s.source = m.name;
            }
            result.corpus.push_back(std::move(s));
        }
    }
    check_unique_ids(result.corpus);

    result.report = distribution_report(result.corpus);
    result.report.stage = stage;
    result.report.constraints = check_constraints(result.report, c);
    if (strict)
    {
        for (const auto &r : result.report.constraints)
        {
            if (!r.passed)
            {
                throw ConstraintError(r.name, r.detail);
            }
        }
    }
    return result;
}

json mix_report_to_json(const MixReport &r)
{
    json cats = json::object();
    for (const auto &[cat, n] : r.category_effective)
    {
        cats[std::string(to_string(cat))] = {{"effective", n}, {"fraction", r.category_fraction.at(cat)}};
    }
    json sources = json::object();
    for (const auto &[name, n] : r.source_count)
    {
        sources[name] = {{"count", n}, {"effective", r.source_effective.at(name)}};
    }
    json constraints = json::array();
    for (const auto &cr : r.constraints)
    {
        constraints.push_back({{"name", cr.name}, {"passed", cr.passed}, {"detail", cr.detail}});
    }
    json j = {{"total_effective", r.total_effective},
              {"categories", std::move(cats)},
              {"sources", std::move(sources)},
              {"text_only_effective", r.text_only_effective},
              {"text_only_fraction", r.text_only_fraction},
              {"constraints", std::move(constraints)}};
    if (r.stage)
    {
        j["stage"] = std::string(to_string(*r.stage));
    }
    return j;
}

std::string mix_report_table(const MixReport &r)
{
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %12s %9s\n", "category", "effective", "share");
    out += line;
    for (const auto &[cat, n] : r.category_effective)
    {
        std::snprintf(line, sizeof line, "%-22s %12lld %8.2f%%\n", std::string(to_string(cat)).c_str(),
                      static_cast<long long>(n), 100.0 * r.category_fraction.at(cat));
        out += line;
    }
    std::snprintf(line, sizeof line, "%-22s %12lld\n", "total", static_cast<long long>(r.total_effective));
    out += line;
    std::snprintf(line, sizeof line, "text-only share: %.2f%%\n", 100.0 * r.text_only_fraction);
    out += line;
    for (const auto &cr : r.constraints)
    {
        out += (cr.passed ? "[pass] " : "[FAIL] ") + cr.name + ": " + cr.detail + "\n";
    }
    return out;
}

} // namespace corpusforge
