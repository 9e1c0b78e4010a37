#include "doctest.h"

#include "corpusforge/errors.hpp"
#include "corpusforge/mix.hpp"
#include "fixtures.hpp"

using namespace corpusforge;
namespace fs = std::filesystem;

namespace
{
Pool make_source(const std::string &name, Category cat, std::size_t n, bool text_only)
{
    Pool pool;
    for (std::size_t i = 0; i < n; ++i)
    {
        const std::string id = name + "-" + std::to_string(i);
        pool.push_back(text_only ? fixtures::make_sample(id, "q", "a", cat, name)
                                 : fixtures::make_image_sample(id, "q", "a", 448, 448, cat, name));
    }
    return pool;
}

DataSourceManifest write_source(const fs::path &dir, const std::string &name, Category cat, std::size_t n,
                                bool text_only, std::int64_t repeat = 1)
{
    DataSourceManifest m;
    m.name = name;
    m.category = cat;
    m.corpus_path = dir / (name + ".jsonl");
    m.repeat_factor = repeat;
    write_corpus(make_source(name, cat, n, text_only), m.corpus_path);
    return m;
}
} // namespace

TEST_CASE("repeat factor multiplies effective counts")
{
    const auto dir = fixtures::scratch_dir("mix_repeat");
    const std::vector<DataSourceManifest> ms = {write_source(dir, "ai2d", Category::Science, 120, false, 4),
                                                write_source(dir, "text", Category::TextOnly, 200, true)};
    const auto r = compose_stage(ms, Stage::Stage2, MixConstraints{}, 1, false);
    CHECK(r.corpus.size() == 320);
    CHECK(r.report.source_effective.at("ai2d") == 480);
    CHECK(r.report.total_effective == 680);
    std::int64_t sum = 0;
    for (const auto &[_, n] : r.report.source_effective)
    {
        sum += n;
    }
    CHECK(sum == r.report.total_effective);
}

TEST_CASE("text-only floor")
{
    const auto dir = fixtures::scratch_dir("mix_floor");
    const std::vector<DataSourceManifest> pass = {write_source(dir, "vqa", Category::GeneralVQA, 70, false),
                                                  write_source(dir, "txt", Category::TextOnly, 30, true)};
    const auto ok = compose_stage(pass, Stage::Stage2, MixConstraints{}, 1, true);
    CHECK(ok.report.text_only_fraction == doctest::Approx(0.30));
    CHECK(ok.report.all_passed());

    const std::vector<DataSourceManifest> fail = {write_source(dir, "vqa2", Category::GeneralVQA, 90, false),
                                                  write_source(dir, "txt2", Category::TextOnly, 10, true)};
    CHECK_THROWS_WITH_AS(compose_stage(fail, Stage::Stage2, MixConstraints{}, 1, true),
                         doctest::Contains("text_only_floor"), ConstraintError);
    const auto warn = compose_stage(fail, Stage::Stage2, MixConstraints{}, 1, false);
    CHECK_FALSE(warn.report.all_passed());
    CHECK(mix_report_table(warn.report).find("[FAIL]") != std::string::npos);
}

TEST_CASE("quota override and stage filter")
{
    const auto dir = fixtures::scratch_dir("mix_quota");
    auto big = write_source(dir, "big", Category::ChartTable, 100, false);
    big.quota_override = 25;
    auto other = write_source(dir, "early", Category::TextOnly, 40, true);
    other.stage = Stage::Stage1_5;
    const std::vector<DataSourceManifest> ms = {big, other};
    const auto a = compose_stage(ms, Stage::Stage2, MixConstraints{.text_only_floor = 0.0}, 9, false);
    CHECK(a.corpus.size() == 25);
    const auto b = compose_stage(ms, Stage::Stage2, MixConstraints{.text_only_floor = 0.0}, 9, false);
    CHECK(serialize_corpus(a.corpus) == serialize_corpus(b.corpus));
    CHECK_THROWS_AS(compose_stage(ms, Stage::Stage1, MixConstraints{}, 9, false), ValidationError);
}

TEST_CASE("distribution report")
{
    CHECK_THROWS_AS(distribution_report({}), ValidationError);

    const auto one = distribution_report(make_source("a", Category::Science, 5, false));
    CHECK(one.category_fraction.at(Category::Science) == 1.0);

    Pool mixed = make_source("a", Category::Science, 30, false);
    for (auto &s : make_source("b", Category::ChartTable, 10, false))
    {
        mixed.push_back(s);
    }
    const auto r = distribution_report(mixed);
    CHECK(r.category_fraction.at(Category::Science) == doctest::Approx(0.75));
    CHECK(r.category_fraction.at(Category::ChartTable) == doctest::Approx(0.25));

    for (std::size_t i = 30; i < 40; ++i)
    {
        mixed[i].repeat_factor = 3;
    }
    const auto rep = distribution_report(mixed);
    CHECK(rep.category_fraction.at(Category::Science) == doctest::Approx(0.5));
    double total = 0;
    for (const auto &[_, f] : rep.category_fraction)
    {
        total += f;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("max fraction constraint")
{
    Pool pool = make_source("cap", Category::CaptioningKnowledge, 60, false);
    for (auto &s : make_source("t", Category::TextOnly, 40, true))
    {
        pool.push_back(s);
    }
    auto report = distribution_report(pool);
    MixConstraints c;
    c.max_fraction[Category::CaptioningKnowledge] = 0.5;
    const auto results = check_constraints(report, c);
    REQUIRE(results.size() == 2);
    CHECK(results[0].passed);
    CHECK(results[1].name == "max_fraction:captioning_knowledge");
    CHECK_FALSE(results[1].passed);
    CHECK_THROWS_AS(mix_constraints_from_json(nlohmann::json::parse(R"({"floor":0.2})")), ValidationError);
}

TEST_CASE("re-reporting the composed corpus reproduces fractions")
{
    const auto dir = fixtures::scratch_dir("mix_idem");
    const std::vector<DataSourceManifest> ms = {write_source(dir, "s1", Category::Science, 50, false, 2),
                                                write_source(dir, "t1", Category::TextOnly, 40, true)};
    const auto r = compose_stage(ms, Stage::Stage2, MixConstraints{}, 2, false);
    const auto again = distribution_report(parse_corpus(serialize_corpus(r.corpus)));
    CHECK(again.category_fraction == r.report.category_fraction);
    CHECK(again.total_effective == r.report.total_effective);
}
