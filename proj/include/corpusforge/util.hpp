#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace corpusforge
{

std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a over the key, mixed with the seed. Stable across platforms and runs.
std::uint64_t hash_key(std::uint64_t seed, std::string_view key);

// Uniform value in [0, 1) derived from (seed, key).
double unit_from_key(std::uint64_t seed, std::string_view key);

// Seeded generator with platform-independent draws. std::mt19937_64 output is
// fixed by the standard, the distribution helpers below are written out so
// results do not depend on the standard library implementation.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    // Uniform real in [0, 1).
    double uniform01();

    // Standard normal via Box-Muller.
    double normal();

    // Choose `count` distinct indices out of [0, n) (partial Fisher-Yates).
    // The result is in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

    template <typename T>
    void shuffle(std::vector<T> &items)
    {
        for (std::size_t i = items.size(); i > 1; --i)
        {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Runs fn(i) for i in [0, n) across hardware threads. Each index is visited
// exactly once; callers write results into per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn, std::size_t min_per_thread = 64);

// Text helpers.
std::vector<std::string_view> split_whitespace(std::string_view text);
std::string to_lower_ascii(std::string_view text);
std::string_view trim(std::string_view text);
std::size_t utf8_length(std::string_view text);

// A decimal literal found in free text: digits '.' digits, not part of a
// dotted sequence like a version string.
struct DecimalLiteral
{
    std::size_t pos = 0;
    std::size_t length = 0;
    std::size_t fraction_digits = 0;
};

std::vector<DecimalLiteral> find_decimal_literals(std::string_view text);

// Hex-encoded SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path &path);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view bytes);

} // namespace corpusforge
