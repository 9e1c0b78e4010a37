#include "doctest.h"

#include "corpusforge/errors.hpp"
#include "corpusforge/similarity.hpp"
#include "corpusforge/util.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>

using namespace corpusforge;

namespace
{
std::vector<float> unit2(double cos_to_x)
{
    return {static_cast<float>(cos_to_x), static_cast<float>(std::sqrt(1.0 - cos_to_x * cos_to_x))};
}

std::vector<EmbeddedSample> random_side(Rng &rng, std::size_t n, std::size_t dim, const std::string &prefix)
{
    std::vector<EmbeddedSample> out;
    for (std::size_t i = 0; i < n; ++i)
    {
        EmbeddedSample e;
        e.id = prefix + std::to_string(i);
        for (std::size_t d = 0; d < dim; ++d)
        {
            e.image.push_back(static_cast<float>(rng.normal()));
            e.text.push_back(static_cast<float>(rng.normal() + 0.3));
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<oracle::Embedded> plain(const std::vector<EmbeddedSample> &xs)
{
    std::vector<oracle::Embedded> out;
    for (const auto &x : xs)
    {
        out.push_back({x.image, x.text});
    }
    return out;
}
} // namespace

TEST_CASE("cosine")
{
    const std::vector<float> x{1, 0};
    const std::vector<float> y{0, 1};
    const std::vector<float> nx{-1, 0};
    const std::vector<float> z{0, 0};
    CHECK(cosine_sim(x, x) == doctest::Approx(1.0));
    CHECK(cosine_sim(x, y) == 0.0);
    CHECK(cosine_sim(x, nx) == 0.0);
    CHECK_THROWS_AS(cosine_sim(x, z), ValidationError);
    const std::vector<float> three{1, 2, 3};
    CHECK_THROWS_AS(cosine_sim(x, three), ValidationError);
}

TEST_CASE("single sample picks the larger product")
{
    std::vector<EmbeddedSample> fresh = {{"n", unit2(1.0), unit2(1.0)}};
    std::vector<EmbeddedSample> pool = {{"A", unit2(0.8), unit2(0.5)}, {"B", unit2(0.6), unit2(0.9)}};
    const auto r = similarity_score(fresh, pool, Category::Science);
    CHECK(r.score == doctest::Approx(0.54).epsilon(1e-6));
    CHECK(r.per_sample[0].best_pool_id == "B");
    CHECK(r.per_sample[0].image_sim == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(r.max_term == doctest::Approx(0.54).epsilon(1e-6));
}

TEST_CASE("identical source scores one")
{
    Rng rng(3);
    const auto pool = random_side(rng, 30, 8, "p");
    const std::vector<EmbeddedSample> fresh(pool.begin(), pool.begin() + 10);
    CHECK(similarity_score(fresh, pool, Category::Science).score == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ties go to the lowest pool index")
{
    std::vector<EmbeddedSample> fresh = {{"n", unit2(1.0), unit2(1.0)}};
    std::vector<EmbeddedSample> pool = {{"A", unit2(0.5), unit2(0.5)}, {"B", unit2(0.5), unit2(0.5)}};
    CHECK(similarity_score(fresh, pool, Category::Science).per_sample[0].best_pool_id == "A");
}

TEST_CASE("matches the brute force oracle")
{
    Rng rng(11);
    const auto fresh = random_side(rng, 50, 12, "n");
    const auto pool = random_side(rng, 80, 12, "p");
    SimilarityOptions opts;
    opts.block_size = 7;
    const auto r = similarity_score(fresh, pool, Category::Mathematics, opts);
    const auto o = oracle::similarity_bruteforce(plain(fresh), plain(pool));
    CHECK(std::abs(r.score - o.score) < 1e-6);
    for (std::size_t i = 0; i < fresh.size(); ++i)
    {
        CHECK(std::abs(r.per_sample[i].product - o.best[i]) < 1e-6);
    }
}

TEST_CASE("pool growth never lowers the score, shuffling keeps it")
{
    Rng rng(12);
    const auto fresh = random_side(rng, 20, 6, "n");
    auto pool = random_side(rng, 30, 6, "p");
    const double before = similarity_score(fresh, pool, Category::Science).score;
    const auto more = random_side(rng, 15, 6, "q");
    pool.insert(pool.end(), more.begin(), more.end());
    const double after = similarity_score(fresh, pool, Category::Science).score;
    CHECK(after >= before);
    rng.shuffle(pool);
    CHECK(similarity_score(fresh, pool, Category::Science).score == doctest::Approx(after).epsilon(1e-12));
    CHECK(after <= 1.0);
}

TEST_CASE("input errors")
{
    std::vector<EmbeddedSample> ok = {{"a", {1, 0}, {1, 0}}};
    std::vector<EmbeddedSample> missing = {{"gap", {1, 0}, {}}};
    std::vector<EmbeddedSample> none;
    CHECK_THROWS_AS(similarity_score(none, ok, Category::Science), ValidationError);
    CHECK_THROWS_AS(similarity_score(ok, none, Category::Science), ValidationError);
    CHECK_THROWS_WITH_AS(similarity_score(missing, ok, Category::Science), doctest::Contains("gap"), ValidationError);
}

TEST_CASE("dedup")
{
    std::vector<EmbeddedSample> pool = {{"p", unit2(1.0), unit2(1.0)}};
    // products 0.95 and 0.40
    std::vector<EmbeddedSample> fresh = {{"dup", unit2(0.95), unit2(1.0)}, {"new", unit2(0.8), unit2(0.5)}};
    const auto r = dedup(fresh, pool, 0.9, Category::Science);
    CHECK(r.removed == std::vector<std::string>{"dup"});
    CHECK(r.kept == std::vector<std::string>{"new"});
    CHECK(r.report.duplicates == r.removed);

    CHECK(dedup(fresh, pool, 1.0, Category::Science).removed.empty());
    CHECK(dedup(pool, pool, 0.9, Category::Science).kept.empty());
    CHECK_THROWS_AS(dedup(fresh, pool, 0.0, Category::Science), ValidationError);
    CHECK_THROWS_AS(dedup(fresh, pool, 1.5, Category::Science), ValidationError);
}

TEST_CASE("source admission")
{
    SimilarityReport r;
    r.score = 0.45;
    CHECK(source_admission(r) == Admission::Review);
    r.score = 0.02;
    CHECK(source_admission(r) == Admission::Distinct);
    r.score = 0.3;
    CHECK(source_admission(r) == Admission::Review);
}
