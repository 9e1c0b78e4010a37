#include "corpusforge/commands.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/version.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <iostream>
#include <map>

using namespace corpusforge;
using json = nlohmann::json;

namespace
{

std::string flag_name(const std::string &key)
{
    std::string s = key;
    for (auto &c : s)
    {
        if (c == '_')
        {
            c = '-';
        }
    }
    return "--" + s;
}

// Numbers, booleans and JSON literals pass through; anything else is a string.
json value_from_text(const std::string &key, const std::string &text)
{
    if (key == "categories" || key == "lexicon")
    {
        json arr = json::array();
        std::size_t pos = 0;
        while (pos <= text.size())
        {
            const auto comma = text.find(',', pos);
            const auto end = comma == std::string::npos ? text.size() : comma;
            if (end > pos)
            {
                arr.push_back(text.substr(pos, end - pos));
            }
            pos = end + 1;
        }
        return arr;
    }
    const json parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded() || parsed.is_string())
    {
        return text;
    }
    return parsed;
}

const std::map<std::string, std::string> kHelp = {
    {"ingest", "Validate a JSONL corpus and write it canonically"},
    {"score", "Similarity score of a new source against a pool, with dedup"},
    {"filter", "Drop samples hit by repetition, precision or refusal rules"},
    {"select", "Per-source quota selection, clustered or uniform"},
    {"format", "Strip answer wrappers and add short-answer instructions"},
    {"augment_emit", "Write CoT or expand requests"},
    {"augment_judge", "Write judge requests for CoT responses"},
    {"augment_apply", "Apply responses (and judge verdicts) to a corpus"},
    {"augment_run", "emit, call the endpoint, judge and apply"},
    {"augment_ocrqa", "Existence and position QA from OCR word boxes"},
    {"mix", "Compose a stage corpus from manifests"},
    {"pack", "Pack samples into knapsacks of at most L tokens"},
    {"report", "Category distribution and pool statistics"},
};

struct Bound
{
    const OpSpec *op = nullptr;
    CLI::App *app = nullptr;
    std::map<std::string, std::string> values;
};

bool is_switch(const std::string &key)
{
    return key == "strict" || key == "require_judge";
}

void bind(Bound &b)
{
    for (const auto &p : b.op->params)
    {
        auto *opt = b.app->add_option(flag_name(p.key), b.values[p.key]);
        if (is_switch(p.key))
        {
            // bare "--strict" means true
            opt->expected(0, 1);
        }
        if (p.required && p.kind != ParamKind::Output)
        {
            opt->required();
        }
    }
}

json collect(const Bound &b)
{
    json params = json::object();
    for (const auto &p : b.op->params)
    {
        if (b.app->count(flag_name(p.key)) == 0)
        {
            continue;
        }
        const std::string &text = b.values.at(p.key);
        if (is_switch(p.key) && text.empty())
        {
            params[p.key] = true;
            continue;
        }
        params[p.key] = p.kind == ParamKind::Value ? value_from_text(p.key, text) : json(text);
    }
    return params;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"corpusforge: corpus curation and sequence packing"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    std::uint64_t seed = 0;
    std::string workspace = ".";
    bool strict = false;
    bool quiet = false;
    app.add_option("--seed", seed, "Seed for every seeded step")->capture_default_str();
    app.add_option("--workspace", workspace, "Directory for default outputs")->capture_default_str();
    app.add_flag("--strict", strict, "Fail on violated mix constraints");
    app.add_flag("-q,--quiet", quiet, "No summaries on stdout");
    app.fallthrough();

    std::vector<Bound> bound;
    bound.reserve(all_ops().size());
    CLI::App *augment = app.add_subcommand("augment", "CoT/expand requests, responses and rule-based OCR QA");
    augment->require_subcommand(1);
    augment->fallthrough();
    for (const auto &op : all_ops())
    {
        Bound b;
        b.op = &op;
        if (op.name.starts_with("augment_"))
        {
            b.app = augment->add_subcommand(op.name.substr(8), kHelp.at(op.name));
        }
        else
        {
            b.app = app.add_subcommand(op.name, kHelp.at(op.name));
        }
        b.app->fallthrough();
        bound.push_back(std::move(b));
        bind(bound.back());
    }

    std::string pipeline_config;
    CLI::App *pipeline = app.add_subcommand("pipeline", "Run a declarative multi-step config");
    pipeline->add_option("config", pipeline_config, "Pipeline JSON")->required();
    pipeline->fallthrough();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (pipeline->parsed())
    {
        PipelineOverrides o;
        if (app.count("--seed"))
        {
            o.seed = seed;
        }
        if (app.count("--workspace"))
        {
            o.workspace = workspace;
        }
        o.strict = strict;
        return run_pipeline(pipeline_config, o, std::cerr, quiet ? nullptr : &std::cout);
    }

    CommandContext ctx;
    ctx.seed = seed;
    ctx.strict = strict;
    ctx.workspace = workspace;
    ctx.log = quiet ? nullptr : &std::cout;
    for (const auto &b : bound)
    {
        if (!b.app->parsed())
        {
            continue;
        }
        try
        {
            run_command(b.op->name, collect(b), ctx);
            return 0;
        }
        catch (const ValidationError &e)
        {
            std::cerr << "validation error: " << e.what() << '\n';
            return 2;
        }
        catch (const std::exception &e)
        {
            std::cerr << b.op->name << " failed: " << e.what() << '\n';
            return 3;
        }
    }
    return 2;
}
