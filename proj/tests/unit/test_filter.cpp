#include "doctest.h"

#include "corpusforge/errors.hpp"
#include "corpusforge/filter.hpp"
#include "fixtures.hpp"

#include <algorithm>
#include <set>

using namespace corpusforge;

TEST_CASE("repetition")
{
    const RepetitionConfig cfg;
    auto hit = detect_repetition("the sky is blue. the sky is blue. the sky is blue.", cfg);
    REQUIRE(hit);
    CHECK(hit->repeats == 3);
    CHECK_FALSE(detect_repetition("aaaa aaaa", cfg));
    CHECK_FALSE(detect_repetition("The watermelon is larger than the orange.", cfg));
    CHECK_FALSE(detect_repetition("", cfg));
}

TEST_CASE("precision")
{
    const PrecisionConfig cfg;
    auto s = fixtures::make_sample("a", "What is the height?", "37.4529");
    auto hit = detect_numeric_precision(s, cfg);
    REQUIRE(hit);
    CHECK(hit->number == "37.4529");
    CHECK(hit->decimals == 4);

    auto licensed = fixtures::make_sample("b", "Step is 0.0001. Reading?", "37.4529");
    CHECK_FALSE(detect_numeric_precision(licensed, cfg));
    CHECK_FALSE(detect_numeric_precision(fixtures::make_sample("c", "q", "Version 1.2.3"), cfg));
    CHECK_FALSE(detect_numeric_precision(fixtures::make_sample("d", "q", "12.50"), cfg));
}

TEST_CASE("refusal")
{
    const RefusalConfig cfg;
    CHECK(detect_refusal("Sorry, I cannot.", cfg));
    CHECK(detect_refusal("  I'M UNABLE TO identify people.", cfg));
    CHECK_FALSE(detect_refusal("I cannot overstate how clear this chart is: every axis is labelled and the "
                               "legend sits outside the plot area so nothing needs guessing.",
                               cfg));
    CHECK_FALSE(detect_refusal("", cfg));
}

TEST_CASE("planted defect corpus")
{
    const auto planted = fixtures::planted_defect_corpus();
    const FilterConfig cfg;
    const auto r = run_filters(planted.pool, nullptr, cfg);

    CHECK(r.kept.size() == 15);
    CHECK(r.dropped == 5);
    CHECK(r.hits_per_rule.at(FilterRule::Repetition) == planted.repetition);
    CHECK(r.hits_per_rule.at(FilterRule::Precision) == planted.precision);
    CHECK(r.hits_per_rule.at(FilterRule::Refusal) == planted.refusal);

    const std::set<std::string> defective(planted.defective.begin(), planted.defective.end());
    REQUIRE(r.verdicts.size() == planted.pool.size());
    for (std::size_t i = 0; i < planted.pool.size(); ++i)
    {
        const auto &v = r.verdicts[i];
        CHECK(v.sample_id == planted.pool[i].id);
        if (defective.contains(v.sample_id))
        {
            CHECK_MESSAGE(v.decision == Decision::Drop, v.sample_id);
        }
        else
        {
            CHECK_MESSAGE(v.hits.empty(), v.sample_id);
        }
    }
    for (const auto &s : r.kept)
    {
        CHECK_FALSE(defective.contains(s.id));
    }
}

TEST_CASE("clean and empty pools")
{
    Pool clean = {fixtures::make_sample("a", "q", "A cat."), fixtures::make_sample("b", "q", "Yes")};
    const auto r = run_filters(clean, nullptr, FilterConfig{});
    CHECK(r.kept == clean);
    CHECK(r.hits_per_rule.empty());

    const auto e = run_filters({}, nullptr, FilterConfig{});
    CHECK(e.kept.empty());
    CHECK(e.verdicts.empty());
}

TEST_CASE("advisory rules report without dropping")
{
    const auto planted = fixtures::planted_defect_corpus();
    FilterConfig cfg;
    cfg.advisory = {FilterRule::Precision};
    const auto r = run_filters(planted.pool, nullptr, cfg);
    CHECK(r.kept.size() == 16);
    CHECK(r.hits_per_rule.at(FilterRule::Precision) == 1);
}

TEST_CASE("rules can be switched off")
{
    const auto planted = fixtures::planted_defect_corpus();
    FilterConfig cfg;
    cfg.repetition.enabled = false;
    const auto r = run_filters(planted.pool, nullptr, cfg);
    CHECK_FALSE(r.hits_per_rule.contains(FilterRule::Repetition));
    // s18 still drops on refusal
    CHECK(r.kept.size() == 17);
}

TEST_CASE("mismatch rule")
{
    auto s = fixtures::make_image_sample("m", "What is shown?", "A dog.", 448, 448);
    MismatchConfig cfg;
    CHECK_FALSE(detect_mismatch(s, std::nullopt, cfg).applicable);

    cfg.enabled = true;
    auto skipped = detect_mismatch(s, std::nullopt, cfg);
    CHECK_FALSE(skipped.applicable);
    CHECK(skipped.note.find("m") != std::string::npos);

    EmbeddingRecord far{"m", std::vector<float>{1, 0}, std::vector<float>{0, 1}};
    auto hit = detect_mismatch(s, far, cfg);
    CHECK(hit.applicable);
    CHECK(hit.hit);

    EmbeddingRecord near{"m", std::vector<float>{1, 0}, std::vector<float>{1, 0.1f}};
    CHECK_FALSE(detect_mismatch(s, near, cfg).hit);

    EmbeddingSet set;
    set.image = EmbeddingStore(2);
    set.text = EmbeddingStore(2);
    const std::vector<float> a{1, 0};
    const std::vector<float> b{0, 1};
    set.image->add("m", a);
    set.text->add("m", b);
    FilterConfig fc;
    fc.mismatch.enabled = true;
    const auto r = run_filters({s, fixtures::make_sample("t", "q", "fine")}, &set, fc);
    CHECK(r.kept.size() == 1);
    CHECK(r.mismatch_skipped == 1);
}

TEST_CASE("config parsing")
{
    auto cfg = filter_config_from_json(nlohmann::json::parse(R"({"precision":{"max_decimals":3},"advisory":["refusal"]})"));
    CHECK(cfg.precision.max_decimals == 3);
    CHECK(cfg.advisory.contains(FilterRule::Refusal));
    CHECK_THROWS_AS(filter_config_from_json(nlohmann::json::parse(R"({"bogus":1})")), ValidationError);
    CHECK_THROWS_AS(filter_config_from_json(nlohmann::json::parse(R"({"precision":{"max_decimals":0}})")),
                    ValidationError);
    const auto round = filter_config_from_json(filter_config_to_json(cfg));
    CHECK(filter_config_to_json(round) == filter_config_to_json(cfg));
}

TEST_CASE("determinism")
{
    const auto planted = fixtures::planted_defect_corpus();
    const auto a = filter_report_to_json(run_filters(planted.pool, nullptr, FilterConfig{}));
    const auto b = filter_report_to_json(run_filters(planted.pool, nullptr, FilterConfig{}));
    CHECK(a.dump() == b.dump());
}
