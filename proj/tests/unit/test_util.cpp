#include "doctest.h"

#include "corpusforge/util.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <stdexcept>

using namespace corpusforge;

TEST_CASE("hash_key and unit_from_key are stable")
{
    CHECK(hash_key(1, "abc") == hash_key(1, "abc"));
    CHECK(hash_key(1, "abc") != hash_key(2, "abc"));
    CHECK(hash_key(1, "abc") != hash_key(1, "abd"));
    for (int i = 0; i < 1000; ++i)
    {
        const double u = unit_from_key(7, std::to_string(i));
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("rng draws")
{
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i)
    {
        CHECK(a.next() == b.next());
    }
    Rng r(1);
    for (int i = 0; i < 1000; ++i)
    {
        CHECK(r.uniform_index(7) < 7);
        const double u = r.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    double sum = 0.0;
    double sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i)
    {
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.05).scale(1.0));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("sample without replacement")
{
    Rng r(5);
    const auto picks = r.sample_without_replacement(10, 10);
    std::set<std::size_t> unique(picks.begin(), picks.end());
    CHECK(unique.size() == 10);
    CHECK(r.sample_without_replacement(10, 0).empty());
    CHECK(r.sample_without_replacement(3, 8).size() == 3);
}

TEST_CASE("parallel_for visits every index once and rethrows")
{
    std::vector<std::atomic<int>> hits(5000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, 16);
    CHECK(std::all_of(hits.begin(), hits.end(), [](const std::atomic<int> &h) { return h == 1; }));

    CHECK_THROWS_AS(parallel_for(
                        1000,
                        [](std::size_t i) {
                            if (i == 700)
                            {
                                throw std::runtime_error("boom");
                            }
                        },
                        10),
                    std::runtime_error);
}

TEST_CASE("text helpers")
{
    const auto words = split_whitespace("  a  b\tc\n");
    REQUIRE(words.size() == 3);
    CHECK(words[2] == "c");
    CHECK(to_lower_ascii("AbC É") == "abc É");
    CHECK(trim("  x y \n") == "x y");
    CHECK(utf8_length("héllo") == 5);
    CHECK(utf8_length("日本") == 2);
}

TEST_CASE("decimal literals")
{
    auto lits = find_decimal_literals("pi is 3.14159, year 2024, v1.2.3 and 0.5.");
    REQUIRE(lits.size() == 2);
    CHECK(lits[0].fraction_digits == 5);
    CHECK(lits[1].fraction_digits == 1);
    CHECK(find_decimal_literals("version 1.2.3").empty());
    CHECK(find_decimal_literals("no numbers").empty());
    CHECK(find_decimal_literals(".5").empty());
}

TEST_CASE("sha256")
{
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
