#include "doctest.h"

#include "corpusforge/commands.hpp"
#include "corpusforge/corpus.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"
#include "fixtures.hpp"

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

using namespace corpusforge;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace
{
int run_cli(const std::string &args)
{
    const std::string cmd = std::string(CF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path two_sample_corpus(const fs::path &dir)
{
    const Pool pool = {fixtures::make_sample("a", "q1", "a1", Category::Science),
                       fixtures::make_image_sample("b", "q2", "a2", 448, 448)};
    write_corpus(pool, dir / "corpus.jsonl");
    return dir / "corpus.jsonl";
}
} // namespace

TEST_CASE("report-only pipeline")
{
    const auto dir = fixtures::scratch_dir("cli_report");
    two_sample_corpus(dir);
    write_file(dir / "pipeline.json",
               R"({"seed": 1, "workspace": "ws", "steps": [{"name": "r", "op": "report", "params": {"in": "corpus.jsonl"}}]})");
    std::ostringstream err;
    CHECK(run_pipeline(dir / "pipeline.json", {}, err) == 0);
    CHECK(err.str().empty());
    const auto report = json::parse(read_file(dir / "ws/r/report.json"));
    CHECK(report.at("pool").at("total") == 2);
    const auto manifest = json::parse(read_file(dir / "ws/run_manifest.json"));
    CHECK(manifest.at("steps").size() == 1);
    CHECK(manifest.at("steps")[0].at("inputs").at("in").at("sha256") == sha256_file(dir / "corpus.jsonl"));
}

TEST_CASE("unknown op is rejected before anything runs")
{
    const auto dir = fixtures::scratch_dir("cli_unknown");
    two_sample_corpus(dir);
    write_file(dir / "pipeline.json", R"({"workspace": "ws", "steps": [
        {"name": "r", "op": "report", "params": {"in": "corpus.jsonl"}},
        {"name": "x", "op": "transmogrify", "params": {}}]})");
    std::ostringstream err;
    CHECK(run_pipeline(dir / "pipeline.json", {}, err) == 2);
    CHECK(err.str().find("transmogrify") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "ws/r/report.json"));
}

TEST_CASE("pipeline validation")
{
    const auto dir = fixtures::scratch_dir("cli_validation");
    two_sample_corpus(dir);
    auto status = [&](const std::string &text) {
        write_file(dir / "p.json", text);
        std::ostringstream err;
        return run_pipeline(dir / "p.json", {}, err);
    };
    CHECK(status("{not json") == 2);
    CHECK(status(R"({"steps": []})") == 2);
    CHECK(status(R"({"workspace": "ws", "steps": [], "extra": 1})") == 2);
    CHECK(status(R"({"workspace": "ws", "steps": [{"name": "r", "op": "report", "params": {"in": "missing.jsonl"}}]})") ==
          2);
    CHECK(status(R"({"workspace": "ws", "steps": [{"name": "r", "op": "report", "params": {"in": "@later/x.jsonl"}}]})") ==
          2);
    CHECK(status(R"({"workspace": "ws", "steps": [{"name": "r", "op": "report", "params": {"in": "corpus.jsonl", "out": "../escape.json"}}]})") ==
          2);
    CHECK(status(R"({"workspace": "ws", "steps": [{"name": "r", "op": "report", "params": {"in": "corpus.jsonl", "bogus": 1}}]})") ==
          2);
    CHECK(status(R"({"workspace": "ws", "steps": [
        {"name": "r", "op": "report", "params": {"in": "corpus.jsonl"}},
        {"name": "r", "op": "report", "params": {"in": "corpus.jsonl"}}]})") == 2);
}

TEST_CASE("runtime failure exits 3")
{
    const auto dir = fixtures::scratch_dir("cli_runtime");
    write_file(dir / "bad.jsonl", "{\"id\": \"a\"}\n");
    write_file(dir / "p.json",
               R"({"workspace": "ws", "steps": [{"name": "r", "op": "report", "params": {"in": "bad.jsonl"}}]})");
    std::ostringstream err;
    CHECK(run_pipeline(dir / "p.json", {}, err) == 3);
    CHECK(err.str().find("step 'r'") != std::string::npos);
}

TEST_CASE("step references chain outputs")
{
    const auto dir = fixtures::scratch_dir("cli_chain");
    two_sample_corpus(dir);
    write_file(dir / "p.json", R"({"seed": 3, "workspace": "ws", "steps": [
        {"name": "in", "op": "ingest", "params": {"in": "corpus.jsonl"}},
        {"name": "pk", "op": "pack", "params": {"in": "@in/corpus.jsonl", "L": 4096}},
        {"name": "rep", "op": "report", "params": {"in": "@in/corpus.jsonl"}}]})");
    std::ostringstream err;
    REQUIRE(run_pipeline(dir / "p.json", {}, err) == 0);
    CHECK(fs::exists(dir / "ws/pk/packed.jsonl"));
    const auto stats = json::parse(read_file(dir / "ws/pk/pack_stats.json"));
    CHECK(stats.at("method") == "balanced");
}

TEST_CASE("single commands")
{
    const auto dir = fixtures::scratch_dir("cli_single");
    const auto corpus = two_sample_corpus(dir);
    CommandContext ctx;
    ctx.workspace = dir / "ws";
    run_command("report", {{"in", corpus.string()}}, ctx);
    CHECK(fs::exists(dir / "ws/report/report.json"));
    CHECK_THROWS_AS(run_command("nope", json::object(), ctx), ValidationError);
    CHECK_THROWS_AS(run_command("pack", {{"in", corpus.string()}}, ctx), ValidationError);
}

TEST_CASE("binary exit codes")
{
    const auto dir = fixtures::scratch_dir("cli_binary");
    const auto corpus = two_sample_corpus(dir);
    CHECK(run_cli("--version") == 0);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("--no-such-flag") == 2);
    CHECK(run_cli("--workspace " + (dir / "ws").string() + " report --in " + corpus.string()) == 0);
    CHECK(fs::exists(dir / "ws/report/report.txt"));
    CHECK(run_cli("--workspace " + (dir / "ws").string() + " pack --in " + corpus.string() + " --L 4096 --delta 0") ==
          0);
    CHECK(run_cli("--workspace " + (dir / "ws").string() + " pack --in " + corpus.string()) == 2);
    CHECK(run_cli("report --in " + (dir / "absent.jsonl").string()) == 3);
    write_file(dir / "p.json", R"({"workspace": "pws", "steps": [{"name": "x", "op": "nope", "params": {}}]})");
    CHECK(run_cli("pipeline " + (dir / "p.json").string()) == 2);
}

TEST_CASE("fixture pipeline matches pinned hashes")
{
    const auto dir = fixtures::scratch_dir("cli_pinned");
    const auto config = fixtures::write_pipeline_fixture(dir, 1000);
    std::ostringstream err;
    REQUIRE(run_pipeline(config, {}, err) == 0);

    std::ostringstream actual;
    for (const auto &[path, bytes] : fixtures::read_tree(dir / "ws"))
    {
        actual << sha256_hex(bytes) << "  " << path << "\n";
    }
    CHECK(actual.str() == read_file(fs::path(CF_GOLDEN_DIR) / "pipeline_fixture.sha256"));
}

TEST_CASE("seed override changes sampling only where seeded")
{
    const auto dir = fixtures::scratch_dir("cli_seed");
    const auto config = fixtures::write_pipeline_fixture(dir, 1000);
    std::ostringstream err;
    PipelineOverrides o;
    o.workspace = dir / "ws_a";
    REQUIRE(run_pipeline(config, o, err) == 0);
    o.workspace = dir / "ws_b";
    o.seed = 99;
    REQUIRE_MESSAGE(run_pipeline(config, o, err) == 0, err.str());
    CHECK(read_file(dir / "ws_a/ingest/corpus.jsonl") == read_file(dir / "ws_b/ingest/corpus.jsonl"));
    CHECK(read_file(dir / "ws_a/filter/filtered.jsonl") == read_file(dir / "ws_b/filter/filtered.jsonl"));
    CHECK(read_file(dir / "ws_a/select/selected.jsonl") != read_file(dir / "ws_b/select/selected.jsonl"));
    const auto manifest = json::parse(read_file(dir / "ws_b/run_manifest.json"));
    CHECK(manifest.at("seed") == 99);
}

TEST_CASE("mix strict as a bare flag")
{
    const auto dir = fixtures::scratch_dir("cli_mix_strict");
    Pool vqa;
    Pool text;
    for (int i = 0; i < 9; ++i)
    {
        vqa.push_back(fixtures::make_image_sample("v" + std::to_string(i), "q", "a", 448, 448));
    }
    text.push_back(fixtures::make_sample("t0", "q", "a", Category::TextOnly));
    write_corpus(vqa, dir / "v.jsonl");
    write_corpus(text, dir / "t.jsonl");
    write_file(dir / "m.json", R"([{"name": "v", "category": "general_vqa", "corpus_path": "v.jsonl", "stage": "stage2"},
        {"name": "t", "category": "text_only", "corpus_path": "t.jsonl", "stage": "stage2"}])");
    const std::string base =
        "--workspace " + (dir / "ws").string() + " mix --manifests " + (dir / "m.json").string() + " --stage stage2";
    CHECK(run_cli(base) == 0);
    CHECK(run_cli(base + " --strict") == 3);
    CHECK(run_cli(base + " --strict false") == 0);
    CHECK(run_cli("--strict " + base) == 3);
}
