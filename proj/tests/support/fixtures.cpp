#include "fixtures.hpp"

#include "corpusforge/embeddings.hpp"
#include "corpusforge/util.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#ifndef CF_TEST_SCRATCH
#define CF_TEST_SCRATCH "cf_scratch"
#endif

namespace fixtures
{

namespace fs = std::filesystem;
using namespace corpusforge;
using json = nlohmann::json;

Sample make_sample(const std::string &id, const std::string &question, const std::string &answer, Category category,
                   const std::string &source)
{
    Sample s;
    s.id = id;
    s.source = source;
    s.category = category;
    s.modality = Modality::TextOnly;
    s.turns = {{Role::User, question}, {Role::Assistant, answer}};
    return s;
}

Sample make_image_sample(const std::string &id, const std::string &question, const std::string &answer,
                         std::int64_t width, std::int64_t height, Category category, const std::string &source)
{
    Sample s = make_sample(id, question, answer, category, source);
    s.modality = Modality::ImageText;
    s.images = {{"images/" + id + ".jpg", width, height}};
    return s;
}

std::vector<std::int64_t> lognormal_lengths(std::uint64_t seed, std::size_t n, double median, double sigma_log,
                                            std::int64_t lo, std::int64_t hi)
{
    Rng rng(seed);
    std::vector<std::int64_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const double x = std::exp(std::log(median) + sigma_log * rng.normal());
        out.push_back(std::clamp(static_cast<std::int64_t>(std::llround(x)), lo, hi));
    }
    return out;
}

std::vector<std::int64_t> uniform_lengths(std::uint64_t seed, std::size_t n, std::int64_t L)
{
    Rng rng(seed);
    std::vector<std::int64_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        out.push_back(1 + static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(L))));
    }
    return out;
}

PlantedCorpus planted_defect_corpus()
{
    PlantedCorpus c;
    auto clean = [&](const std::string &id, const std::string &q, const std::string &a) {
        c.pool.push_back(make_sample(id, q, a));
    };
    auto bad = [&](Sample s) {
        c.defective.push_back(s.id);
        c.pool.push_back(std::move(s));
    };

    std::string tail_text;
    for (int i = 0; i < 60; ++i)
    {
        tail_text += "w" + std::to_string(i) + " ";
    }
    for (int r = 0; r < 4; ++r)
    {
        for (int i = 0; i < 10; ++i)
        {
            tail_text += "b" + std::to_string(i) + " ";
        }
    }
    tail_text.pop_back();

    clean("s00", "What animal is on the sofa?", "A cat.");
    clean("s01", "What is the value of pi to two places?", "3.14");
    clean("s02", "Describe the chart.", "Sales rise from January to March and fall in April.");
    bad(make_sample("s03", "What color is the sky?", "the sky is blue. the sky is blue. the sky is blue."));
    clean("s04", "How clear is the chart?",
          "I cannot overstate how clear this chart is: every axis is labelled, the legend sits outside the plot "
          "area, and the colors separate the four series well enough that nothing needs guessing at all here.");
    clean("s05", "The scale step is 0.0001. What is the reading?", "37.4529");
    clean("s06", "Read the sign.", "aaaa aaaa");
    bad(make_sample("s07", "Summarize the passage.", tail_text));
    clean("s08", "Is the door open?", "Yes");
    clean("s09", "Why did the plant wilt?",
          "I'm sorry, I cannot see the soil in this photo, but the drooping leaves and dry edges suggest it has "
          "not been watered for several days.");
    clean("s10", "Count the apples.", "There are 7 apples in the bowl.");
    bad(make_sample("s11", "What is the bar height?", "37.4529"));
    clean("s12", "What year is printed on the coin?", "year 2024");
    clean("s13", "Translate the text.", "Good morning, how are you?");
    clean("s14", "What is the total?", "The total is 12.50 dollars.");
    bad(make_sample("s15", "What is written on the label?", "Sorry, I cannot."));
    clean("s16", "Name the landmark.", "The Eiffel Tower in Paris.");
    clean("s17", "What version is installed?", "Version 1.2.3 is installed.");
    {
        Sample s = make_sample("s18", "Who is the person in the photo?", "I'm unable to identify people.");
        s.turns.push_back({Role::User, "Then how do I get to the station?"});
        s.turns.push_back({Role::Assistant, "go left then right go left then right go left then right"});
        bad(std::move(s));
    }
    clean("s19", "Which fruit is larger?", "The watermelon is larger than the orange.");

    c.repetition = 3;
    c.precision = 1;
    c.refusal = 2;
    return c;
}

namespace
{
const std::vector<std::string> kWords = {
    "river",   "stone",  "market", "window",  "green",   "seven",   "engine", "paper",   "cloud",  "bridge",
    "orange",  "silver", "table",  "pencil",  "forest",  "signal",  "garden", "motor",   "yellow", "harbor",
    "village", "copper", "ladder", "blanket", "lantern", "meadow",  "planet", "rocket",  "saddle", "tunnel",
    "violet",  "wagon",  "anchor", "basket",  "candle",  "dolphin", "falcon", "glacier", "hammer", "island",
    "jacket",  "kettle", "lemon",  "marble",  "needle",  "oyster",  "pepper", "quartz",  "ribbon", "summit",
};

std::string words(Rng &rng, std::size_t n)
{
    std::string out;
    for (std::size_t i = 0; i < n; ++i)
    {
        if (i)
        {
            out += ' ';
        }
        out += kWords[rng.uniform_index(kWords.size())];
    }
    return out;
}

struct SourceSpec
{
    std::string name;
    Category category;
    bool image;
};
} // namespace

fs::path write_pipeline_fixture(const fs::path &dir, std::size_t samples)
{
    fs::create_directories(dir);
    const std::vector<SourceSpec> sources = {
        {"geo_math", Category::Mathematics, true},
        {"chart_qa", Category::ChartTable, true},
        {"scene_vqa", Category::GeneralVQA, true},
        {"text_instruct", Category::TextOnly, false},
    };
    const std::vector<std::pair<std::int64_t, std::int64_t>> dims = {
        {448, 448}, {896, 448}, {1024, 768}, {300, 1200}, {1920, 1080}, {640, 640}, {2048, 512}};
    constexpr std::uint32_t kDim = 16;

    Rng rng(20240611);
    Pool pool;
    EmbeddingStore store(kDim);
    // Three blob centers per image source.
    std::vector<std::vector<float>> centers;
    for (std::size_t c = 0; c < sources.size() * 3; ++c)
    {
        std::vector<float> v(kDim);
        for (auto &x : v)
        {
            x = static_cast<float>(rng.normal());
        }
        centers.push_back(v);
    }

    for (std::size_t i = 0; i < samples; ++i)
    {
        const std::size_t si = i % sources.size();
        const auto &src = sources[si];
        char id[32];
        std::snprintf(id, sizeof id, "%s-%04zu", src.name.c_str(), i / sources.size());
        std::string question = "Q: " + words(rng, 6 + rng.uniform_index(10)) + "?";
        std::string answer;
        const auto roll = rng.uniform_index(100);
        if (roll < 4)
        {
            const std::string block = words(rng, 5);
            answer = words(rng, 6) + " " + block + " " + block + " " + block;
        }
        else if (roll < 7)
        {
            answer = "Sorry, I cannot answer that.";
        }
        else if (roll < 10)
        {
            answer = "The value is " + std::to_string(10 + rng.uniform_index(90)) + ".48213";
        }
        else if (roll < 25 && src.category == Category::Mathematics)
        {
            answer = "\\begin{align*}x=" + std::to_string(rng.uniform_index(50)) + "\\end{align*}";
        }
        else if (roll < 45)
        {
            answer = rng.uniform_index(2) ? "Yes" : "No";
        }
        else if (roll < 70)
        {
            answer = words(rng, 1 + rng.uniform_index(4));
        }
        else
        {
            answer = words(rng, 20 + rng.uniform_index(200)) + ".";
        }

        Sample s;
        if (src.image)
        {
            const auto &d = dims[rng.uniform_index(dims.size())];
            s = make_image_sample(id, question, answer, d.first, d.second, src.category, src.name);
            const auto &center = centers[si * 3 + rng.uniform_index(3)];
            std::vector<float> v(kDim);
            for (std::uint32_t k = 0; k < kDim; ++k)
            {
                v[k] = center[k] + 0.15f * static_cast<float>(rng.normal());
            }
            store.add(s.id, v);
        }
        else
        {
            s = make_sample(id, question, answer, src.category, src.name);
        }
        pool.push_back(std::move(s));
    }

    write_corpus(pool, dir / "corpus.jsonl");
    write_embeddings(store, dir / "image_embeddings.cfe");
    write_file(dir / "filter.json", json{{"precision", {{"max_decimals", 3}}}}.dump(2));
    write_file(dir / "rules.json",
               json{{"target_cluster_size", 40},
                    {"overrides", {{"geo_math", 120}, {"chart_qa", 120}, {"scene_vqa", 150}, {"text_instruct", 200}}}}
                   .dump(2));
    write_file(dir / "policy.json", json{{"append_rate", 0.5}, {"yes_no_append_rate", 0.3}, {"decimal_places", 2}}.dump(2));
    const json pipeline = {
        {"seed", 17},
        {"workspace", "ws"},
        {"steps",
         {{{"name", "ingest"}, {"op", "ingest"}, {"params", {{"in", "corpus.jsonl"}}}},
          {{"name", "filter"}, {"op", "filter"}, {"params", {{"in", "@ingest/corpus.jsonl"}, {"config", "filter.json"}}}},
          {{"name", "select"},
           {"op", "select"},
           {"params",
            {{"in", "@filter/filtered.jsonl"}, {"embeddings", "image_embeddings.cfe"}, {"rules", "rules.json"}}}},
          {{"name", "format"}, {"op", "format"}, {"params", {{"in", "@select/selected.jsonl"}, {"policy", "policy.json"}}}},
          {{"name", "pack"},
           {"op", "pack"},
           {"params", {{"in", "@format/formatted.jsonl"}, {"L", 4096}, {"delta", 20}, {"method", "balanced"}}}},
          {{"name", "report"}, {"op", "report"}, {"params", {{"in", "@format/formatted.jsonl"}}}}}},
    };
    write_file(dir / "pipeline.json", pipeline.dump(2));
    return dir / "pipeline.json";
}

fs::path scratch_dir(const std::string &name)
{
    const fs::path p = fs::path(CF_TEST_SCRATCH) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::pair<std::string, std::string>> read_tree(const fs::path &root)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto &entry : fs::recursive_directory_iterator(root))
    {
        if (entry.is_regular_file())
        {
            out.emplace_back(fs::relative(entry.path(), root).generic_string(), read_file(entry.path()));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace fixtures
