#include "corpusforge/util.hpp"

#include "corpusforge/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace corpusforge
{

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_key(std::uint64_t seed, std::string_view key)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : key)
    {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(h ^ splitmix64(seed));
}

double unit_from_key(std::uint64_t seed, std::string_view key)
{
    return static_cast<double>(hash_key(seed, key) >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n)
{
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit)
    {
        x = engine_();
    }
    return x % n;
}

double Rng::uniform01()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    double u1 = uniform01();
    while (u1 <= 0.0)
    {
        u1 = uniform01();
    }
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t count)
{
    count = std::min(count, n);
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        pool[i] = i;
    }
    for (std::size_t i = 0; i < count; ++i)
    {
        std::size_t j = i + static_cast<std::size_t>(uniform_index(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn, std::size_t min_per_thread)
{
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t threads = std::min(hw, std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_per_thread)));
    if (threads <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            fn(i);
        }
        return;
    }

    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> workers;
    workers.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t)
    {
        workers.emplace_back([&, t] {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            try
            {
                for (std::size_t i = begin; i < end; ++i)
                {
                    fn(i);
                }
            }
            catch (...)
            {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto &w : workers)
    {
        w.join();
    }
    // Rethrow the error from the lowest chunk so failures are reproducible.
    for (auto &e : errors)
    {
        if (e)
        {
            std::rethrow_exception(e);
        }
    }
}

std::vector<std::string_view> split_whitespace(std::string_view text)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size())
    {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
        {
            ++i;
        }
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
        {
            ++i;
        }
        if (i > start)
        {
            out.push_back(text.substr(start, i - start));
        }
    }
    return out;
}

std::string to_lower_ascii(std::string_view text)
{
    std::string out(text);
    for (char &c : out)
    {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string_view trim(std::string_view text)
{
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b])))
    {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1])))
    {
        --e;
    }
    return text.substr(b, e - b);
}

std::size_t utf8_length(std::string_view text)
{
    std::size_t n = 0;
    for (unsigned char c : text)
    {
        if ((c & 0xC0) != 0x80)
        {
            ++n;
        }
    }
    return n;
}

namespace
{
bool is_digit(char c)
{
    return c >= '0' && c <= '9';
}
} // namespace

std::vector<DecimalLiteral> find_decimal_literals(std::string_view text)
{
    std::vector<DecimalLiteral> out;
    std::size_t i = 0;
    while (i < text.size())
    {
        if (!is_digit(text[i]) || (i > 0 && (is_digit(text[i - 1]) || text[i - 1] == '.')))
        {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < text.size() && is_digit(text[i]))
        {
            ++i;
        }
        if (i + 1 >= text.size() || text[i] != '.' || !is_digit(text[i + 1]))
        {
            continue;
        }
        ++i;
        const std::size_t frac_start = i;
        while (i < text.size() && is_digit(text[i]))
        {
            ++i;
        }
        const std::size_t frac_end = i;
        // 1.2.3 style sequences are not numbers.
        if (i + 1 < text.size() && text[i] == '.' && is_digit(text[i + 1]))
        {
            while (i < text.size() && (is_digit(text[i]) || text[i] == '.'))
            {
                ++i;
            }
            continue;
        }
        out.push_back({start, frac_end - start, frac_end - frac_start});
    }
    return out;
}

std::string sha256_hex(std::string_view bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    {
        throw Error("sha256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i)
    {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path &path)
{
    return sha256_hex(read_file(path));
}

std::string read_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path &path, std::string_view bytes)
{
    if (path.has_parent_path())
    {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
    {
        throw Error("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
    {
        throw Error("write failed for " + path.string());
    }
}

} // namespace corpusforge
