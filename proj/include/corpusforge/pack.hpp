#pragma once

#include "corpusforge/corpus.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace corpusforge
{

struct TileGrid
{
    int i = 1; // rows
    int j = 1; // cols

    bool operator==(const TileGrid &) const = default;
};

inline constexpr int kTileSize = 448;
inline constexpr int kDefaultMaxTiles = 12;
inline constexpr std::int64_t kTokensPerTile = 256;

TileGrid select_tile_grid(std::int64_t width, std::int64_t height, int max_tiles = kDefaultMaxTiles);
std::int64_t estimate_image_tokens(const TileGrid &grid);

using TokenAdapter = std::function<std::int64_t(std::string_view)>;

// ceil(codepoints / 4)
std::int64_t approx_text_tokens(std::string_view text);

// Stored token_length when present, otherwise text tokens plus image tokens.
// Images without dimensions count as a single tile.
std::int64_t estimate_sample_length(const Sample &sample, const TokenAdapter &adapter = approx_text_tokens);

enum class PackMethod
{
    Balanced,
    NaiveGreedy,
    SPFHP,
};

std::string_view to_string(PackMethod m);
PackMethod parse_pack_method(std::string_view s);

inline constexpr std::int64_t kDefaultDelta = 20;
inline constexpr std::size_t kDefaultChunk = 4096;

std::int64_t stage_max_length(Stage stage);

struct PackItem
{
    // Position in the input length list.
    std::size_t index = 0;
    std::int64_t length = 0;

    bool operator==(const PackItem &) const = default;
};

using Knapsack = std::vector<PackItem>;

struct PackStats
{
    std::size_t count = 0;
    std::int64_t total_length = 0;
    double mean_total = 0.0;
    double std_total = 0.0;
    // std over knapsacks of the longest sample in each.
    double max_len_std = 0.0;
    double efficiency = 0.0;
};

struct PackPlan
{
    PackMethod method = PackMethod::Balanced;
    std::int64_t capacity = 0;
    std::int64_t delta = 0;
    std::vector<Knapsack> knapsacks;
    // Pre-opened knapsacks that received nothing.
    std::size_t dropped_empty = 0;
    PackStats stats;
};

std::int64_t knapsack_total(const Knapsack &k);

PackPlan balanced_knapsack(const std::vector<std::int64_t> &lengths, std::int64_t L, std::int64_t delta = kDefaultDelta);
PackPlan naive_greedy_knapsack(const std::vector<std::int64_t> &lengths, std::int64_t L);
PackPlan spfhp(const std::vector<std::int64_t> &lengths, std::int64_t L);
PackPlan pack_lengths(PackMethod method, const std::vector<std::int64_t> &lengths, std::int64_t L,
                      std::int64_t delta = kDefaultDelta);

// Consecutive chunks packed independently, plans concatenated in chunk order.
PackPlan chunked_pack(const std::vector<std::int64_t> &lengths, std::int64_t L, std::int64_t delta,
                      std::size_t chunk_size = kDefaultChunk, PackMethod method = PackMethod::Balanced);

// Throws on an empty plan.
PackStats pack_stats(const std::vector<Knapsack> &knapsacks, std::int64_t L);

// One entry per packed copy; a sample with repeat_factor n appears n times.
struct PackInput
{
    std::size_t sample = 0;
    std::int64_t length = 0;
};

std::vector<PackInput> build_pack_inputs(const Pool &pool, const TokenAdapter &adapter = approx_text_tokens);
std::vector<std::int64_t> input_lengths(const std::vector<PackInput> &inputs);

struct SeparatorPolicy
{
    // Appended to the final assistant turn of every member sample.
    std::string eos_marker;
};

struct PackedRecord
{
    std::string pack_id;
    std::vector<std::string> sample_ids;
    std::vector<std::int64_t> lengths;
    std::int64_t total_length = 0;
    std::vector<ConversationTurn> turns;
    // Turn offset at which each member starts.
    std::vector<std::size_t> boundaries;
    std::vector<ImageRef> images;
};

std::vector<PackedRecord> materialize_packs(const Pool &pool, const std::vector<PackInput> &inputs,
                                            const PackPlan &plan, const SeparatorPolicy &policy = {});

nlohmann::json packed_record_to_json(const PackedRecord &r);
std::string serialize_packed(const std::vector<PackedRecord> &records);

nlohmann::json pack_stats_to_json(const PackStats &s);
// ids maps input positions to labels; item indices are used when null.
nlohmann::json pack_plan_to_json(const PackPlan &plan, const std::vector<std::string> *ids = nullptr);

} // namespace corpusforge
