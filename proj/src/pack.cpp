#include "corpusforge/pack.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace corpusforge
{

namespace
{
using json = nlohmann::json;

void check_lengths(const std::vector<std::int64_t> &lengths, std::int64_t L)
{
    if (L <= 0)
    {
        throw ValidationError("capacity L must be positive");
    }
    for (std::size_t i = 0; i < lengths.size(); ++i)
    {
        if (lengths[i] <= 0 || lengths[i] > L)
        {
            throw ValidationError("sample " + std::to_string(i) + " has length " + std::to_string(lengths[i]) +
                                  " outside (0, " + std::to_string(L) + "]");
        }
    }
}

// Descending by length, original order among equal lengths.
std::vector<PackItem> sorted_items(const std::vector<std::int64_t> &lengths)
{
    std::vector<PackItem> items(lengths.size());
    for (std::size_t i = 0; i < lengths.size(); ++i)
    {
        items[i] = {i, lengths[i]};
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const PackItem &a, const PackItem &b) { return a.length > b.length; });
    return items;
}

PackPlan finish(PackMethod method, std::int64_t L, std::int64_t delta, std::vector<Knapsack> knapsacks)
{
    PackPlan plan;
    plan.method = method;
    plan.capacity = L;
    plan.delta = delta;
    for (auto &k : knapsacks)
    {
        if (k.empty())
        {
            ++plan.dropped_empty;
        }
        else
        {
            plan.knapsacks.push_back(std::move(k));
        }
    }
    if (!plan.knapsacks.empty())
    {
        plan.stats = pack_stats(plan.knapsacks, L);
    }
    return plan;
}

double population_std(const std::vector<double> &xs)
{
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double acc = 0.0;
    for (double x : xs)
    {
        acc += (x - mean) * (x - mean);
    }
    return std::sqrt(acc / static_cast<double>(xs.size()));
}
} // namespace

TileGrid select_tile_grid(std::int64_t width, std::int64_t height, int max_tiles)
{
    if (width <= 0 || height <= 0 || max_tiles < 1)
    {
        return {1, 1};
    }
    const double log_aspect = std::log(static_cast<double>(width) / static_cast<double>(height));
    const double area = static_cast<double>(width) * static_cast<double>(height);
    TileGrid best{1, 1};
    double best_err = std::abs(log_aspect);
    for (int n = 2; n <= max_tiles; ++n)
    {
        for (int i = 1; i <= n; ++i)
        {
            if (n % i != 0)
            {
                continue;
            }
            const int j = n / i;
            const double err = std::abs(log_aspect - std::log(static_cast<double>(j) / static_cast<double>(i)));
            if (err < best_err)
            {
                best = {i, j};
                best_err = err;
            }
            else if (err == best_err && area > static_cast<double>(n) * kTileSize * kTileSize)
            {
                best = {i, j};
            }
        }
    }
    return best;
}

std::int64_t estimate_image_tokens(const TileGrid &grid)
{
    if (grid.i < 1 || grid.j < 1)
    {
        throw ValidationError("tile grid dimensions must be >= 1");
    }
    return (static_cast<std::int64_t>(grid.i) * grid.j + 1) * kTokensPerTile;
}

std::int64_t approx_text_tokens(std::string_view text)
{
    return static_cast<std::int64_t>((utf8_length(text) + 3) / 4);
}

std::int64_t estimate_sample_length(const Sample &sample, const TokenAdapter &adapter)
{
    if (sample.token_length)
    {
        return *sample.token_length;
    }
    std::int64_t total = 0;
    for (const auto &t : sample.turns)
    {
        total += adapter(t.text);
    }
    for (const auto &img : sample.images)
    {
        TileGrid grid{1, 1};
        if (img.width && img.height)
        {
            grid = select_tile_grid(*img.width, *img.height);
        }
        total += estimate_image_tokens(grid);
    }
    return total;
}

std::string_view to_string(PackMethod m)
{
    switch (m)
    {
    case PackMethod::Balanced:
        return "balanced";
    case PackMethod::NaiveGreedy:
        return "greedy";
    case PackMethod::SPFHP:
        return "spfhp";
    }
    return "unknown";
}

PackMethod parse_pack_method(std::string_view s)
{
    for (auto m : {PackMethod::Balanced, PackMethod::NaiveGreedy, PackMethod::SPFHP})
    {
        if (to_string(m) == s)
        {
            return m;
        }
    }
    throw ValidationError("unknown pack method '" + std::string(s) + "'");
}

std::int64_t stage_max_length(Stage stage)
{
    switch (stage)
    {
    case Stage::Stage1:
        return 4096;
    case Stage::Stage1_5:
        return 8192;
    case Stage::Stage2:
        return 16384;
    }
    return 0;
}

std::int64_t knapsack_total(const Knapsack &k)
{
    std::int64_t t = 0;
    for (const auto &item : k)
    {
        t += item.length;
    }
    return t;
}

PackPlan balanced_knapsack(const std::vector<std::int64_t> &lengths, std::int64_t L, std::int64_t delta)
{
    check_lengths(lengths, L);
    if (delta < 0)
    {
        throw ValidationError("delta must be >= 0");
    }
    if (lengths.empty())
    {
        return finish(PackMethod::Balanced, L, delta, {});
    }
    const auto items = sorted_items(lengths);
    const std::int64_t total = std::accumulate(lengths.begin(), lengths.end(), std::int64_t{0});
    const auto initial = static_cast<std::size_t>((total + L - 1) / L + delta);

    std::vector<Knapsack> knapsacks(initial);
    std::vector<std::int64_t> fill(initial, 0);
    // (fill, index): begin() is the argmin with ties to the lowest index.
    std::set<std::pair<std::int64_t, std::size_t>> order;
    for (std::size_t k = 0; k < initial; ++k)
    {
        order.emplace(0, k);
    }
    std::size_t ks = 0;
    std::size_t next = 0;
    while (next < items.size())
    {
        const auto &item = items[next];
        if (fill[ks] + item.length <= L)
        {
            order.erase({fill[ks], ks});
            knapsacks[ks].push_back(item);
            fill[ks] += item.length;
            order.emplace(fill[ks], ks);
            ++next;
        }
        else
        {
            knapsacks.emplace_back();
            fill.push_back(0);
            order.emplace(0, fill.size() - 1);
        }
        ks = order.begin()->second;
    }
    return finish(PackMethod::Balanced, L, delta, std::move(knapsacks));
}

PackPlan naive_greedy_knapsack(const std::vector<std::int64_t> &lengths, std::int64_t L)
{
    check_lengths(lengths, L);
    std::vector<Knapsack> knapsacks;
    std::int64_t fill = 0;
    for (const auto &item : sorted_items(lengths))
    {
        if (knapsacks.empty() || fill + item.length > L)
        {
            knapsacks.emplace_back();
            fill = 0;
        }
        knapsacks.back().push_back(item);
        fill += item.length;
    }
    return finish(PackMethod::NaiveGreedy, L, 0, std::move(knapsacks));
}

PackPlan spfhp(const std::vector<std::int64_t> &lengths, std::int64_t L)
{
    check_lengths(lengths, L);
    std::vector<Knapsack> knapsacks;
    std::vector<std::int64_t> fill;
    std::set<std::pair<std::int64_t, std::size_t>> order;
    for (const auto &item : sorted_items(lengths))
    {
        // If the shortest pack cannot take the item, no pack can.
        if (!order.empty() && order.begin()->first + item.length <= L)
        {
            const std::size_t k = order.begin()->second;
            order.erase(order.begin());
            knapsacks[k].push_back(item);
            fill[k] += item.length;
            order.emplace(fill[k], k);
        }
        else
        {
            knapsacks.push_back({item});
            fill.push_back(item.length);
            order.emplace(item.length, knapsacks.size() - 1);
        }
    }
    return finish(PackMethod::SPFHP, L, 0, std::move(knapsacks));
}

PackPlan pack_lengths(PackMethod method, const std::vector<std::int64_t> &lengths, std::int64_t L, std::int64_t delta)
{
    switch (method)
    {
    case PackMethod::Balanced:
        return balanced_knapsack(lengths, L, delta);
    case PackMethod::NaiveGreedy:
        return naive_greedy_knapsack(lengths, L);
    case PackMethod::SPFHP:
        return spfhp(lengths, L);
    }
    throw ValidationError("unknown pack method");
}

PackPlan chunked_pack(const std::vector<std::int64_t> &lengths, std::int64_t L, std::int64_t delta,
                      std::size_t chunk_size, PackMethod method)
{
    if (chunk_size == 0)
    {
        throw ValidationError("chunk size must be >= 1");
    }
    check_lengths(lengths, L);
    const std::size_t chunks = (lengths.size() + chunk_size - 1) / chunk_size;
    std::vector<PackPlan> parts(chunks);
    parallel_for(
        chunks,
        [&](std::size_t c) {
            const std::size_t begin = c * chunk_size;
            const std::size_t end = std::min(lengths.size(), begin + chunk_size);
            std::vector<std::int64_t> slice(lengths.begin() + static_cast<std::ptrdiff_t>(begin),
                                            lengths.begin() + static_cast<std::ptrdiff_t>(end));
            parts[c] = pack_lengths(method, slice, L, delta);
            for (auto &k : parts[c].knapsacks)
            {
                for (auto &item : k)
                {
                    item.index += begin;
                }
            }
        },
        1);

    PackPlan plan;
    plan.method = method;
    plan.capacity = L;
    plan.delta = method == PackMethod::Balanced ? delta : 0;
    for (auto &p : parts)
    {
        plan.dropped_empty += p.dropped_empty;
        for (auto &k : p.knapsacks)
        {
            plan.knapsacks.push_back(std::move(k));
        }
    }
    if (!plan.knapsacks.empty())
    {
        plan.stats = pack_stats(plan.knapsacks, L);
    }
    return plan;
}

PackStats pack_stats(const std::vector<Knapsack> &knapsacks, std::int64_t L)
{
    if (knapsacks.empty())
    {
        throw ValidationError("pack_stats: empty plan");
    }
    PackStats s;
    s.count = knapsacks.size();
    std::vector<double> totals;
    std::vector<double> maxima;
    for (const auto &k : knapsacks)
    {
        const std::int64_t t = knapsack_total(k);
        s.total_length += t;
        totals.push_back(static_cast<double>(t));
        std::int64_t m = 0;
        for (const auto &item : k)
        {
            m = std::max(m, item.length);
        }
        maxima.push_back(static_cast<double>(m));
    }
    s.mean_total = static_cast<double>(s.total_length) / static_cast<double>(s.count);
    s.std_total = population_std(totals);
    s.max_len_std = population_std(maxima);
    s.efficiency = static_cast<double>(s.total_length) / (static_cast<double>(s.count) * static_cast<double>(L));
    return s;
}

std::vector<PackInput> build_pack_inputs(const Pool &pool, const TokenAdapter &adapter)
{
    std::vector<std::int64_t> lengths(pool.size());
    parallel_for(pool.size(), [&](std::size_t i) { lengths[i] = estimate_sample_length(pool[i], adapter); });
    std::vector<PackInput> out;
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        for (std::int64_t r = 0; r < pool[i].repeat_factor; ++r)
        {
            out.push_back({i, lengths[i]});
        }
    }
    return out;
}

std::vector<std::int64_t> input_lengths(const std::vector<PackInput> &inputs)
{
    std::vector<std::int64_t> out;
    out.reserve(inputs.size());
    for (const auto &in : inputs)
    {
        out.push_back(in.length);
    }
    return out;
}

std::vector<PackedRecord> materialize_packs(const Pool &pool, const std::vector<PackInput> &inputs,
                                            const PackPlan &plan, const SeparatorPolicy &policy)
{
    std::vector<bool> used(inputs.size(), false);
    std::vector<PackedRecord> out;
    out.reserve(plan.knapsacks.size());
    for (std::size_t k = 0; k < plan.knapsacks.size(); ++k)
    {
        PackedRecord rec;
        char id[32];
        std::snprintf(id, sizeof id, "pack-%06zu", k);
        rec.pack_id = id;
        for (const auto &item : plan.knapsacks[k])
        {
            if (item.index >= inputs.size() || inputs[item.index].sample >= pool.size())
            {
                throw ValidationError("plan references unknown input " + std::to_string(item.index));
            }
            if (used[item.index])
            {
                throw ValidationError("plan references input " + std::to_string(item.index) + " twice");
            }
            used[item.index] = true;
            const Sample &s = pool[inputs[item.index].sample];
            rec.sample_ids.push_back(s.id);
            rec.lengths.push_back(item.length);
            rec.total_length += item.length;
            rec.boundaries.push_back(rec.turns.size());
            rec.turns.insert(rec.turns.end(), s.turns.begin(), s.turns.end());
            if (!policy.eos_marker.empty())
            {
                rec.turns.back().text += policy.eos_marker;
            }
            rec.images.insert(rec.images.end(), s.images.begin(), s.images.end());
        }
        if (rec.total_length > plan.capacity)
        {
            throw ConstraintError("capacity", rec.pack_id + " total " + std::to_string(rec.total_length) +
                                                  " exceeds L=" + std::to_string(plan.capacity));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

json packed_record_to_json(const PackedRecord &r)
{
    json turns = json::array();
    for (const auto &t : r.turns)
    {
        turns.push_back({{"from", t.role == Role::User ? "human" : "gpt"}, {"value", t.text}});
    }
    json images = json::array();
    for (const auto &img : r.images)
    {
        json j = {{"path", img.path}};
        if (img.width)
        {
            j["width"] = *img.width;
        }
        if (img.height)
        {
            j["height"] = *img.height;
        }
        images.push_back(std::move(j));
    }
    return {{"pack_id", r.pack_id},   {"sample_ids", r.sample_ids}, {"lengths", r.lengths},
            {"total_length", r.total_length}, {"conversations", std::move(turns)}, {"boundaries", r.boundaries},
            {"images", std::move(images)}};
}

std::string serialize_packed(const std::vector<PackedRecord> &records)
{
    std::string out;
    for (const auto &r : records)
    {
        out += packed_record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

json pack_stats_to_json(const PackStats &s)
{
    return {{"count", s.count},         {"total_length", s.total_length}, {"mean_total", s.mean_total},
            {"std_total", s.std_total}, {"max_len_std", s.max_len_std},   {"efficiency", s.efficiency}};
}

json pack_plan_to_json(const PackPlan &plan, const std::vector<std::string> *ids)
{
    json ks = json::array();
    for (const auto &k : plan.knapsacks)
    {
        json items = json::array();
        for (const auto &item : k)
        {
            json label = ids ? json(ids->at(item.index)) : json(item.index);
            items.push_back({{"id", std::move(label)}, {"length", item.length}});
        }
        ks.push_back(std::move(items));
    }
    return {{"method", std::string(to_string(plan.method))},
            {"capacity", plan.capacity},
            {"delta", plan.delta},
            {"dropped_empty", plan.dropped_empty},
            {"stats", pack_stats_to_json(plan.stats)},
            {"knapsacks", std::move(ks)}};
}

} // namespace corpusforge
