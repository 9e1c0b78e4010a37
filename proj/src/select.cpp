#include "corpusforge/select.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace corpusforge
{

namespace
{
using json = nlohmann::json;
using i128 = __int128;

double squared_distance(const double *a, const double *b, std::size_t dim)
{
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d)
    {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

std::vector<double> to_matrix(std::span<const std::vector<float>> vectors, std::size_t dim)
{
    std::vector<double> m(vectors.size() * dim);
    for (std::size_t i = 0; i < vectors.size(); ++i)
    {
        for (std::size_t d = 0; d < dim; ++d)
        {
            m[i * dim + d] = vectors[i][d];
        }
    }
    return m;
}

std::vector<float> l2_normalized(std::span<const float> v)
{
    double norm = 0.0;
    for (float x : v)
    {
        norm += static_cast<double>(x) * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> out(v.begin(), v.end());
    if (norm > 0.0)
    {
        for (auto &x : out)
        {
            x = static_cast<float>(x / norm);
        }
    }
    return out;
}
} // namespace

void validate(const QuotaRules &rules)
{
    if (rules.no_selection_below < 0)
    {
        throw ValidationError("no_selection_below must be >= 0");
    }
    if (!(rules.keep_at_most_fraction > 0.0 && rules.keep_at_most_fraction <= 1.0))
    {
        throw ValidationError("keep_at_most_fraction must be in (0, 1]");
    }
    if (rules.large_source_threshold <= 0 || rules.large_source_cap <= 0)
    {
        throw ValidationError("large-source threshold and cap must be positive");
    }
}

std::int64_t quota_for_source(std::int64_t size, const QuotaRules &rules, std::optional<std::int64_t> override)
{
    validate(rules);
    if (size < 0)
    {
        throw ValidationError("source size must be >= 0");
    }
    if (override)
    {
        if (*override <= 0)
        {
            throw ValidationError("quota override must be positive");
        }
        if (*override > size)
        {
            throw ValidationError("quota override " + std::to_string(*override) + " exceeds source size " +
                                  std::to_string(size));
        }
        return *override;
    }
    if (size < rules.no_selection_below)
    {
        return size;
    }
    // The epsilon absorbs representation error in fractions such as 0.29.
    auto quota = static_cast<std::int64_t>(std::floor(static_cast<double>(size) * rules.keep_at_most_fraction + 1e-9));
    if (size > rules.large_source_threshold)
    {
        quota = std::min(quota, rules.large_source_cap);
    }
    return quota;
}

std::size_t count_distinct(std::span<const std::vector<float>> vectors)
{
    std::vector<const std::vector<float> *> ptrs;
    ptrs.reserve(vectors.size());
    for (const auto &v : vectors)
    {
        ptrs.push_back(&v);
    }
    std::sort(ptrs.begin(), ptrs.end(), [](auto *a, auto *b) { return *a < *b; });
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < ptrs.size(); ++i)
    {
        if (i == 0 || *ptrs[i] != *ptrs[i - 1])
        {
            ++distinct;
        }
    }
    return distinct;
}

KMeansResult kmeans(std::span<const std::vector<float>> vectors, std::size_t k, std::uint64_t seed,
                    const KMeansOptions &opts)
{
    if (vectors.empty())
    {
        throw ValidationError("kmeans: empty input");
    }
    if (k == 0)
    {
        throw ValidationError("kmeans: k must be >= 1");
    }
    const std::size_t dim = vectors.front().size();
    for (const auto &v : vectors)
    {
        if (v.size() != dim)
        {
            throw ValidationError("kmeans: vectors have mixed dimensions");
        }
    }
    const std::size_t distinct = count_distinct(vectors);
    if (k > distinct)
    {
        throw ValidationError("kmeans: k=" + std::to_string(k) + " exceeds " + std::to_string(distinct) +
                              " distinct vectors");
    }

    const std::size_t n = vectors.size();
    const std::vector<double> points = to_matrix(vectors, dim);
    auto point = [&](std::size_t i) { return points.data() + i * dim; };

    KMeansResult res;
    res.k = k;
    res.dim = dim;
    res.centroids.resize(k * dim);
    auto centroid = [&](std::size_t c) { return res.centroids.data() + c * dim; };

    // k-means++ seeding. Points already at distance 0 from a chosen center
    // have zero weight, so every center is a distinct point.
    Rng rng(seed);
    std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
    std::copy_n(point(first), dim, centroid(0));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        d2[i] = squared_distance(point(i), centroid(0), dim);
    }
    for (std::size_t c = 1; c < k; ++c)
    {
        double total = 0.0;
        for (double x : d2)
        {
            total += x;
        }
        const double target = rng.uniform01() * total;
        double acc = 0.0;
        std::size_t chosen = n;
        std::size_t last_positive = n;
        for (std::size_t i = 0; i < n; ++i)
        {
            if (d2[i] <= 0.0)
            {
                continue;
            }
            last_positive = i;
            acc += d2[i];
            if (acc > target)
            {
                chosen = i;
                break;
            }
        }
        if (chosen == n)
        {
            chosen = last_positive;
        }
        std::copy_n(point(chosen), dim, centroid(c));
        for (std::size_t i = 0; i < n; ++i)
        {
            d2[i] = std::min(d2[i], squared_distance(point(i), centroid(c), dim));
        }
    }

    res.assignments.assign(n, 0);
    std::vector<double> dist(n);
    const std::size_t max_iter = std::max<std::size_t>(1, opts.max_iter);
    for (std::size_t it = 0; it < max_iter; ++it)
    {
        parallel_for(n, [&](std::size_t i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c)
            {
                const double d = squared_distance(point(i), centroid(c), dim);
                if (d < best_d)
                {
                    best_d = d;
                    best = c;
                }
            }
            res.assignments[i] = best;
            dist[i] = best_d;
        });
        double objective = 0.0;
        for (double d : dist)
        {
            objective += d;
        }
        res.objective_history.push_back(objective);
        res.objective = objective;
        res.iterations = it + 1;

        const std::size_t h = res.objective_history.size();
        if (h >= 2 && res.objective_history[h - 2] - objective < opts.tol)
        {
            break;
        }
        if (it + 1 == max_iter)
        {
            break;
        }

        std::vector<double> sums(k * dim, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i)
        {
            const std::size_t c = res.assignments[i];
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d)
            {
                sums[c * dim + d] += point(i)[d];
            }
        }
        for (std::size_t c = 0; c < k; ++c)
        {
            // An empty cluster keeps its previous centroid.
            if (counts[c] == 0)
            {
                continue;
            }
            for (std::size_t d = 0; d < dim; ++d)
            {
                centroid(c)[d] = sums[c * dim + d] / static_cast<double>(counts[c]);
            }
        }
    }
    return res;
}

std::vector<std::int64_t> allocate_cluster_quotas(std::span<const std::int64_t> sizes, std::int64_t quota,
                                                  std::span<const std::size_t> boosted)
{
    std::int64_t total = 0;
    for (auto s : sizes)
    {
        if (s < 0)
        {
            throw ValidationError("cluster sizes must be >= 0");
        }
        total += s;
    }
    if (quota < 0 || quota > total)
    {
        throw ValidationError("cluster quota " + std::to_string(quota) + " outside [0, " + std::to_string(total) + "]");
    }

    std::vector<std::int64_t> out(sizes.size(), 0);
    std::vector<bool> fixed(sizes.size(), false);
    std::int64_t remaining = quota;

    std::int64_t boosted_total = 0;
    std::vector<std::size_t> boost_list;
    for (auto b : boosted)
    {
        if (b < sizes.size() && !fixed[b])
        {
            fixed[b] = true;
            boost_list.push_back(b);
            boosted_total += sizes[b];
        }
    }
    if (boosted_total <= remaining)
    {
        for (auto b : boost_list)
        {
            out[b] = sizes[b];
        }
        remaining -= boosted_total;
    }
    else
    {
        std::fill(fixed.begin(), fixed.end(), false);
    }

    std::vector<std::size_t> open;
    std::int64_t open_total = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c)
    {
        if (!fixed[c] && sizes[c] > 0)
        {
            open.push_back(c);
            open_total += sizes[c];
        }
    }
    if (open.empty() || remaining == 0)
    {
        return out;
    }

    const auto q = static_cast<i128>(remaining);
    const auto S = static_cast<i128>(open_total);
    const bool floor_one = remaining >= static_cast<std::int64_t>(open.size());
    std::int64_t assigned = 0;
    for (auto c : open)
    {
        auto base = static_cast<std::int64_t>(q * sizes[c] / S);
        if (floor_one)
        {
            base = std::max<std::int64_t>(base, 1);
        }
        out[c] = base;
        assigned += base;
    }

    // Undo the minimum-one bumps where they overshoot: take back from the
    // cluster whose allocation most exceeds its exact share.
    while (assigned > remaining)
    {
        std::size_t pick = sizes.size();
        i128 worst = 0;
        for (auto c : open)
        {
            if (out[c] <= 1)
            {
                continue;
            }
            const i128 excess = static_cast<i128>(out[c]) * S - q * sizes[c];
            if (pick == sizes.size() || excess > worst)
            {
                pick = c;
                worst = excess;
            }
        }
        --out[pick];
        --assigned;
    }

    std::vector<std::size_t> order = open;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return (q * sizes[a]) % S > (q * sizes[b]) % S;
    });
    while (assigned < remaining)
    {
        for (auto c : order)
        {
            if (assigned == remaining)
            {
                break;
            }
            if (out[c] < sizes[c])
            {
                ++out[c];
                ++assigned;
            }
        }
    }
    return out;
}

SelectionConfig selection_config_from_json(const json &j)
{
    if (!j.is_object())
    {
        throw ValidationError("selection rules must be a JSON object");
    }
    SelectionConfig cfg;
    try
    {
        if (auto it = j.find("quota"); it != j.end())
        {
            cfg.quota.no_selection_below = it->value("no_selection_below", cfg.quota.no_selection_below);
            cfg.quota.keep_at_most_fraction = it->value("keep_at_most_fraction", cfg.quota.keep_at_most_fraction);
            cfg.quota.large_source_threshold = it->value("large_source_threshold", cfg.quota.large_source_threshold);
            cfg.quota.large_source_cap = it->value("large_source_cap", cfg.quota.large_source_cap);
        }
        cfg.target_cluster_size = j.value("target_cluster_size", cfg.target_cluster_size);
        cfg.kmeans.max_iter = j.value("max_iter", cfg.kmeans.max_iter);
        cfg.kmeans.tol = j.value("tol", cfg.kmeans.tol);
        if (auto it = j.find("clustered_categories"); it != j.end())
        {
            cfg.clustered_categories.clear();
            for (const auto &c : *it)
            {
                cfg.clustered_categories.insert(parse_category(c.get<std::string>()));
            }
        }
        if (auto it = j.find("boost_clusters"); it != j.end())
        {
            cfg.boost_clusters = it->get<std::map<std::string, std::vector<std::size_t>>>();
        }
        if (auto it = j.find("overrides"); it != j.end())
        {
            cfg.overrides = it->get<std::map<std::string, std::int64_t>>();
        }
    }
    catch (const json::exception &e)
    {
        throw ValidationError(std::string("selection rules: ") + e.what());
    }
    validate(cfg.quota);
    if (cfg.target_cluster_size == 0)
    {
        throw ValidationError("target_cluster_size must be positive");
    }
    return cfg;
}

SelectionPlan select_subset(std::span<const Sample> source, const EmbeddingStore *image_embeddings,
                            std::int64_t quota, const SelectionConfig &cfg, std::uint64_t seed)
{
    const auto n = static_cast<std::int64_t>(source.size());
    if (quota < 0 || quota > n)
    {
        throw ValidationError("quota " + std::to_string(quota) + " outside [0, " + std::to_string(n) + "]");
    }

    SelectionPlan plan;
    plan.source = source.empty() ? std::string() : source.front().source;
    plan.quota = quota;
    plan.seed = seed;
    if (quota == 0)
    {
        plan.mode = "empty";
        return plan;
    }

    std::vector<std::vector<float>> vectors;
    bool clustered = cfg.clustered_categories.contains(source.front().category);
    if (!clustered)
    {
        plan.notes.push_back("clustered selection disabled for category " +
                             std::string(to_string(source.front().category)) + "; uniform sampling");
    }
    else if (image_embeddings == nullptr)
    {
        clustered = false;
        plan.notes.push_back("no image embeddings; uniform sampling fallback");
    }
    else
    {
        vectors.reserve(source.size());
        std::size_t missing = 0;
        for (const auto &s : source)
        {
            auto v = image_embeddings->find(s.id);
            if (!v)
            {
                ++missing;
                continue;
            }
            vectors.push_back(l2_normalized(*v));
        }
        if (missing > 0)
        {
            clustered = false;
            plan.notes.push_back(std::to_string(missing) + " samples lack image embeddings; uniform sampling fallback");
        }
    }

    std::vector<std::size_t> picked;
    if (!clustered)
    {
        plan.mode = "uniform";
        Rng rng(hash_key(seed, plan.source + "#uniform"));
        picked = rng.sample_without_replacement(source.size(), static_cast<std::size_t>(quota));
    }
    else
    {
        plan.mode = "kmeans";
        const auto target = static_cast<std::int64_t>(std::max<std::size_t>(1, cfg.target_cluster_size));
        std::int64_t k = std::clamp<std::int64_t>((quota + target - 1) / target, 1, quota);
        const auto distinct = static_cast<std::int64_t>(count_distinct(vectors));
        if (k > distinct)
        {
            plan.notes.push_back("k reduced from " + std::to_string(k) + " to " + std::to_string(distinct) +
                                 " distinct vectors");
            k = distinct;
        }
        plan.k = static_cast<std::size_t>(k);
        const auto km = kmeans(vectors, plan.k, seed, cfg.kmeans);

        std::vector<std::vector<std::size_t>> members(plan.k);
        for (std::size_t i = 0; i < source.size(); ++i)
        {
            members[km.assignments[i]].push_back(i);
            plan.assignments[source[i].id] = km.assignments[i];
        }
        for (const auto &m : members)
        {
            plan.cluster_sizes.push_back(static_cast<std::int64_t>(m.size()));
        }

        std::vector<std::size_t> boosted;
        if (auto it = cfg.boost_clusters.find(plan.source); it != cfg.boost_clusters.end())
        {
            boosted = it->second;
            std::int64_t boosted_total = 0;
            for (auto b : boosted)
            {
                boosted_total += b < plan.k ? plan.cluster_sizes[b] : 0;
            }
            if (boosted_total > quota)
            {
                plan.notes.push_back("boosted clusters exceed quota; boost ignored");
            }
        }
        plan.cluster_quotas = allocate_cluster_quotas(plan.cluster_sizes, quota, boosted);
        for (std::size_t c = 0; c < plan.k; ++c)
        {
            Rng rng(hash_key(seed, plan.source + "#cluster" + std::to_string(c)));
            for (auto idx :
                 rng.sample_without_replacement(members[c].size(), static_cast<std::size_t>(plan.cluster_quotas[c])))
            {
                picked.push_back(members[c][idx]);
            }
        }
    }

    std::sort(picked.begin(), picked.end());
    for (auto i : picked)
    {
        plan.selected.push_back(source[i].id);
    }
    return plan;
}

json selection_plan_to_json(const SelectionPlan &plan)
{
    return {
        {"source", plan.source},
        {"quota", plan.quota},
        {"k", plan.k},
        {"mode", plan.mode},
        {"seed", plan.seed},
        {"assignments", plan.assignments},
        {"cluster_sizes", plan.cluster_sizes},
        {"cluster_quotas", plan.cluster_quotas},
        {"selected", plan.selected},
        {"notes", plan.notes},
    };
}

} // namespace corpusforge
