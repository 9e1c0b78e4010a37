#include "corpusforge/commands.hpp"

#include "corpusforge/augment.hpp"
#include "corpusforge/corpus.hpp"
#include "corpusforge/embeddings.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/filter.hpp"
#include "corpusforge/format.hpp"
#include "corpusforge/infer_client.hpp"
#include "corpusforge/mix.hpp"
#include "corpusforge/pack.hpp"
#include "corpusforge/select.hpp"
#include "corpusforge/similarity.hpp"
#include "corpusforge/util.hpp"
#include "corpusforge/version.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace corpusforge
{

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace
{

class Params
{
public:
    explicit Params(const json &j) : j_(j) {}

    bool has(const std::string &key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    fs::path path(const std::string &key) const
    {
        if (!has(key))
        {
            throw ValidationError("missing parameter '" + key + "'");
        }
        return fs::path(get<std::string>(key));
    }

    std::optional<fs::path> opt_path(const std::string &key) const
    {
        if (!has(key))
        {
            return std::nullopt;
        }
        return path(key);
    }

    template <typename T>
    T get(const std::string &key) const
    {
        if (!has(key))
        {
            throw ValidationError("missing parameter '" + key + "'");
        }
        try
        {
            return j_.at(key).get<T>();
        }
        catch (const json::exception &)
        {
            throw ValidationError("parameter '" + key + "' has the wrong type");
        }
    }

    template <typename T>
    T get(const std::string &key, T fallback) const
    {
        return has(key) ? get<T>(key) : fallback;
    }

    template <typename T>
    std::optional<T> opt(const std::string &key) const
    {
        if (!has(key))
        {
            return std::nullopt;
        }
        return get<T>(key);
    }

    // Inline object, or a path to a JSON file. Absent gives an empty object.
    json config(const std::string &key) const
    {
        if (!has(key))
        {
            return json::object();
        }
        const json &v = j_.at(key);
        if (v.is_object())
        {
            return v;
        }
        if (!v.is_string())
        {
            throw ValidationError("parameter '" + key + "' must be an object or a file path");
        }
        try
        {
            return json::parse(read_file(v.get<std::string>()));
        }
        catch (const json::exception &e)
        {
            throw ValidationError(v.get<std::string>() + ": " + e.what());
        }
    }

private:
    const json &j_;
};

void write_json(const fs::path &path, const json &j)
{
    write_file(path, j.dump(2) + "\n");
}

template <typename... Args>
void log_line(const CommandContext &ctx, const Args &...args)
{
    if (ctx.log)
    {
        ((*ctx.log) << ... << args) << '\n';
    }
}

EmbeddingSet load_embedding_set(const std::optional<fs::path> &image, const std::optional<fs::path> &text)
{
    EmbeddingSet set;
    if (image)
    {
        set.image = load_embeddings(*image);
    }
    if (text)
    {
        set.text = load_embeddings(*text);
    }
    return set;
}

// ingest --------------------------------------------------------------------

Action prepare_ingest(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const auto out = p.path("out");
    const auto stats = p.path("stats");
    const auto source = p.opt<std::string>("source");
    return [=, &ctx] {
        Pool pool = load_corpus(in);
        if (source)
        {
            for (auto &s : pool)
            {
                if (s.source.empty())
                {
                    s.source = *source;
                }
            }
        }
        write_corpus(pool, out);
        write_json(stats, pool_stats_to_json(pool_stats(pool)));
        log_line(ctx, "ingest: ", pool.size(), " samples");
    };
}

// score ---------------------------------------------------------------------

struct ManifestData
{
    std::vector<EmbeddedSample> embedded;
    Pool samples;
    std::string names;
};

ManifestData load_manifest_data(const fs::path &path, Category category)
{
    ManifestData d;
    for (const auto &m : load_manifests(path))
    {
        Pool pool = load_corpus(m.corpus_path);
        const EmbeddingSet set = load_embedding_set(m.image_embeddings, m.text_embeddings);
        auto embedded = gather_embedded(pool, set, category);
        d.embedded.insert(d.embedded.end(), std::make_move_iterator(embedded.begin()),
                          std::make_move_iterator(embedded.end()));
        for (auto &s : pool)
        {
            if (s.category == category)
            {
                d.samples.push_back(std::move(s));
            }
        }
        d.names += (d.names.empty() ? "" : "+") + m.name;
    }
    return d;
}

Action prepare_score(const Params &p, const CommandContext &ctx)
{
    const auto new_manifest = p.path("new");
    const auto pool_manifest = p.path("pool");
    const Category category = parse_category(p.get<std::string>("category"));
    const double threshold = p.get<double>("dedup_threshold", kDefaultDedupThreshold);
    const double source_threshold = p.get<double>("source_threshold", kDefaultSourceThreshold);
    if (!(threshold > 0.0 && threshold <= 1.0))
    {
        throw ValidationError("dedup_threshold must be in (0, 1]");
    }
    const auto out = p.path("out");
    const auto kept_path = p.path("kept");
    return [=, &ctx] {
        ManifestData fresh = load_manifest_data(new_manifest, category);
        const ManifestData pool = load_manifest_data(pool_manifest, category);
        DedupResult r = dedup(fresh.embedded, pool.embedded, threshold, category, fresh.names);
        json report = report_to_json(r.report);
        report["admission"] = std::string(to_string(source_admission(r.report, source_threshold)));
        report["source_threshold"] = source_threshold;
        write_json(out, report);

        const std::unordered_set<std::string> keep(r.kept.begin(), r.kept.end());
        Pool kept;
        for (auto &s : fresh.samples)
        {
            if (keep.contains(s.id))
            {
                kept.push_back(std::move(s));
            }
        }
        write_corpus(kept, kept_path);
        log_line(ctx, "score: S=", r.report.score, " kept ", r.kept.size(), " removed ", r.removed.size());
    };
}

// filter --------------------------------------------------------------------

Action prepare_filter(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const FilterConfig cfg = filter_config_from_json(p.config("config"));
    const auto image = p.opt_path("image_embeddings");
    const auto text = p.opt_path("text_embeddings");
    const auto out = p.path("out");
    const auto report = p.path("report");
    return [=, &ctx] {
        const Pool pool = load_corpus(in);
        const EmbeddingSet set = load_embedding_set(image, text);
        const bool have = set.image || set.text;
        const FilterResult r = run_filters(pool, have ? &set : nullptr, cfg);
        write_corpus(r.kept, out);
        write_json(report, filter_report_to_json(r));
        log_line(ctx, "filter: kept ", r.kept.size(), " dropped ", r.dropped);
    };
}

// select --------------------------------------------------------------------

Action prepare_select(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const auto embeddings = p.opt_path("embeddings");
    const SelectionConfig cfg = selection_config_from_json(p.config("rules"));
    const auto quota = p.opt<std::int64_t>("quota");
    const std::uint64_t seed = p.get<std::uint64_t>("seed", ctx.seed);
    const auto out = p.path("out");
    const auto plan_path = p.path("plan");
    return [=, &ctx] {
        const Pool pool = load_corpus(in);
        std::optional<EmbeddingStore> store;
        if (embeddings)
        {
            store = load_embeddings(*embeddings);
        }
        std::vector<std::string> order;
        std::unordered_map<std::string, Pool> by_source;
        for (const auto &s : pool)
        {
            auto [it, fresh] = by_source.try_emplace(s.source);
            if (fresh)
            {
                order.push_back(s.source);
            }
            it->second.push_back(s);
        }
        Pool selected;
        json plans = json::array();
        for (const auto &name : order)
        {
            const Pool &src = by_source.at(name);
            std::optional<std::int64_t> override = quota;
            if (auto it = cfg.overrides.find(name); it != cfg.overrides.end())
            {
                override = it->second;
            }
            const std::int64_t q = quota_for_source(static_cast<std::int64_t>(src.size()), cfg.quota, override);
            const SelectionPlan plan = select_subset(src, store ? &*store : nullptr, q, cfg, seed);
            const std::unordered_set<std::string> chosen(plan.selected.begin(), plan.selected.end());
            for (const auto &s : src)
            {
                if (chosen.contains(s.id))
                {
                    selected.push_back(s);
                }
            }
            plans.push_back(selection_plan_to_json(plan));
            log_line(ctx, "select: ", name, " ", plan.selected.size(), "/", src.size(), " (", plan.mode, ")");
        }
        write_corpus(selected, out);
        write_json(plan_path, plans);
    };
}

// format --------------------------------------------------------------------

Action prepare_format(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    json policy_json = p.config("policy");
    if (!policy_json.contains("seed"))
    {
        policy_json["seed"] = ctx.seed;
    }
    const FormatPolicy policy = format_policy_from_json(policy_json);
    const auto out = p.path("out");
    return [=, &ctx] {
        const Pool pool = load_corpus(in);
        const Pool formatted = format_pool(pool, policy);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < pool.size(); ++i)
        {
            changed += pool[i].turns != formatted[i].turns;
        }
        write_corpus(formatted, out);
        log_line(ctx, "format: ", changed, " of ", pool.size(), " samples changed");
    };
}

// augment -------------------------------------------------------------------

SamplePredicate category_selector(const Params &p)
{
    if (!p.has("categories"))
    {
        return {};
    }
    std::set<Category> cats;
    for (const auto &c : p.get<std::vector<std::string>>("categories"))
    {
        cats.insert(parse_category(c));
    }
    return [cats](const Sample &s) { return cats.contains(s.category); };
}

AugmentKind emit_kind(const Params &p)
{
    const AugmentKind kind = parse_augment_kind(p.get<std::string>("kind", "cot"));
    if (kind == AugmentKind::Judge)
    {
        throw ValidationError("kind must be cot or expand");
    }
    return kind;
}

json apply_stats_to_json(const ApplyStats &s)
{
    return {{"responses", s.responses},
            {"accepted", s.accepted},
            {"rejected", s.rejected},
            {"unparseable", s.unparseable},
            {"pending", s.pending}};
}

Action prepare_augment_emit(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const AugmentKind kind = emit_kind(p);
    const SamplePredicate select = category_selector(p);
    const auto out = p.path("out");
    return [=, &ctx] {
        const auto requests = emit_requests(load_corpus(in), kind, select);
        write_file(out, serialize_requests(requests));
        log_line(ctx, "augment emit: ", requests.size(), " requests");
    };
}

Action prepare_augment_judge(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const auto responses = p.path("responses");
    const auto out = p.path("out");
    return [=, &ctx] {
        const auto requests = emit_judge_requests(load_corpus(in), parse_responses(read_file(responses)));
        write_file(out, serialize_requests(requests));
        log_line(ctx, "augment judge: ", requests.size(), " requests");
    };
}

Action prepare_augment_apply(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const AugmentKind kind = emit_kind(p);
    const auto responses = p.path("responses");
    const auto verdicts = p.opt_path("verdicts");
    ApplyOptions opts;
    opts.kind = kind;
    opts.require_judge = p.opt<bool>("require_judge");
    const auto out = p.path("out");
    const auto stats = p.path("stats");
    return [=, &ctx] {
        const auto resp = parse_responses(read_file(responses));
        const auto judged = verdicts ? parse_responses(read_file(*verdicts)) : std::vector<AugmentationResponse>{};
        const ApplyResult r = apply_responses(load_corpus(in), resp, judged, opts);
        write_corpus(r.pool, out);
        write_json(stats, apply_stats_to_json(r.stats));
        log_line(ctx, "augment apply: accepted ", r.stats.accepted, " rejected ", r.stats.rejected, " unparseable ",
                 r.stats.unparseable, " pending ", r.stats.pending);
    };
}

Action prepare_augment_run(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const AugmentKind kind = emit_kind(p);
    const SamplePredicate select = category_selector(p);
    auto cfg = inference_config_from_env();
    if (!cfg)
    {
        throw ValidationError("augment run needs CORPUSFORGE_INFER_URL");
    }
    cfg->model = p.get<std::string>("model", cfg->model);
    cfg->max_parallel = p.get<std::size_t>("max_parallel", cfg->max_parallel);
    ApplyOptions opts;
    opts.kind = kind;
    opts.require_judge = p.opt<bool>("require_judge");
    const bool judged = opts.require_judge.value_or(kind == AugmentKind::CoT);
    const auto out = p.path("out");
    const auto stats = p.path("stats");
    const auto responses_path = p.path("responses");
    return [=, &ctx] {
        const Pool pool = load_corpus(in);
        const auto responses = inference_batch(emit_requests(pool, kind, select), *cfg);
        std::vector<AugmentationResponse> verdicts;
        if (judged)
        {
            verdicts = inference_batch(emit_judge_requests(pool, responses), *cfg);
        }
        const ApplyResult r = apply_responses(pool, responses, verdicts, opts);
        write_file(responses_path, serialize_responses(responses) + serialize_responses(verdicts));
        write_corpus(r.pool, out);
        write_json(stats, apply_stats_to_json(r.stats));
        log_line(ctx, "augment run: accepted ", r.stats.accepted, " of ", r.stats.responses);
    };
}

ImageRef image_from_json(const json &j)
{
    ImageRef ref;
    ref.path = j.at("path").get<std::string>();
    if (j.contains("width"))
    {
        ref.width = j.at("width").get<std::int64_t>();
    }
    if (j.contains("height"))
    {
        ref.height = j.at("height").get<std::int64_t>();
    }
    return ref;
}

Action prepare_augment_ocrqa(const Params &p, const CommandContext &ctx)
{
    const auto words_path = p.path("words");
    OcrQaOptions opts;
    opts.source = p.get<std::string>("source", opts.source);
    if (p.has("lexicon"))
    {
        opts.lexicon = p.get<std::vector<std::string>>("lexicon");
    }
    opts.max_negatives = p.get<std::size_t>("max_negatives", opts.max_negatives);
    opts.max_position_pairs = p.get<std::size_t>("max_position_pairs", opts.max_position_pairs);
    const std::uint64_t seed = p.get<std::uint64_t>("seed", ctx.seed);
    const auto out = p.path("out");
    return [=, &ctx] {
        json doc;
        Pool generated;
        try
        {
            doc = json::parse(read_file(words_path));
            std::size_t n = 0;
            for (const auto &entry : doc)
            {
                std::vector<WordRecord> words;
                for (const auto &w : entry.at("words"))
                {
                    const auto box = w.at("bbox").get<std::vector<double>>();
                    if (box.size() != 4)
                    {
                        throw ValidationError("bbox must have four numbers");
                    }
                    words.push_back({w.at("text").get<std::string>(), {box[0], box[1], box[2], box[3]}});
                }
                OcrQaOptions local = opts;
                local.id_prefix = "ocrqa-" + std::to_string(n++);
                auto samples = rule_based_ocr_qa(words, image_from_json(entry.at("image")), seed, local);
                generated.insert(generated.end(), std::make_move_iterator(samples.begin()),
                                 std::make_move_iterator(samples.end()));
            }
        }
        catch (const json::exception &e)
        {
            throw ValidationError(words_path.string() + ": " + e.what());
        }
        write_corpus(generated, out);
        log_line(ctx, "augment ocrqa: ", generated.size(), " samples");
    };
}

// mix -----------------------------------------------------------------------

Action prepare_mix(const Params &p, const CommandContext &ctx)
{
    const auto manifests = p.path("manifests");
    const Stage stage = parse_stage(p.get<std::string>("stage"));
    const MixConstraints constraints = mix_constraints_from_json(p.config("constraints"));
    const bool strict = p.get<bool>("strict", ctx.strict);
    const std::uint64_t seed = p.get<std::uint64_t>("seed", ctx.seed);
    const auto out = p.path("out");
    const auto report = p.path("report");
    const auto table = p.path("table");
    return [=, &ctx] {
        const MixResult r = compose_stage(load_manifests(manifests), stage, constraints, seed, strict);
        write_corpus(r.corpus, out);
        write_json(report, mix_report_to_json(r.report));
        const std::string text = mix_report_table(r.report);
        write_file(table, text);
        if (ctx.log)
        {
            *ctx.log << text;
        }
    };
}

// pack ----------------------------------------------------------------------

Action prepare_pack(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    std::int64_t L = 0;
    if (p.has("L"))
    {
        L = p.get<std::int64_t>("L");
    }
    else if (p.has("stage"))
    {
        L = stage_max_length(parse_stage(p.get<std::string>("stage")));
    }
    else
    {
        throw ValidationError("pack needs L or stage");
    }
    if (L <= 0)
    {
        throw ValidationError("L must be positive");
    }
    const std::int64_t delta = p.get<std::int64_t>("delta", kDefaultDelta);
    if (delta < 0)
    {
        throw ValidationError("delta must be >= 0");
    }
    const PackMethod method = parse_pack_method(p.get<std::string>("method", "balanced"));
    const std::size_t chunk = p.get<std::size_t>("chunk", kDefaultChunk);
    if (chunk == 0)
    {
        throw ValidationError("chunk must be >= 1");
    }
    SeparatorPolicy sep;
    sep.eos_marker = p.get<std::string>("eos_marker", "");
    const auto out = p.path("out");
    const auto stats = p.path("stats");
    return [=, &ctx] {
        const Pool pool = load_corpus(in);
        const auto inputs = build_pack_inputs(pool);
        const PackPlan plan = chunked_pack(input_lengths(inputs), L, delta, chunk, method);
        write_file(out, serialize_packed(materialize_packs(pool, inputs, plan, sep)));
        std::vector<std::string> ids;
        ids.reserve(inputs.size());
        for (const auto &in_item : inputs)
        {
            ids.push_back(pool[in_item.sample].id);
        }
        write_json(stats, pack_plan_to_json(plan, &ids));
        log_line(ctx, "pack: ", inputs.size(), " samples into ", plan.knapsacks.size(), " packs, efficiency ",
                 plan.stats.efficiency);
    };
}

// report --------------------------------------------------------------------

Action prepare_report(const Params &p, const CommandContext &ctx)
{
    const auto in = p.path("in");
    const auto out = p.path("out");
    const auto table = p.path("table");
    return [=, &ctx] {
        const Pool pool = load_corpus(in);
        json j = {{"pool", pool_stats_to_json(pool_stats(pool))}};
        std::string text;
        if (!pool.empty())
        {
            const MixReport r = distribution_report(pool);
            j["distribution"] = mix_report_to_json(r);
            text = mix_report_table(r);
        }
        else
        {
            text = "empty corpus\n";
        }
        write_json(out, j);
        write_file(table, text);
        if (ctx.log)
        {
            *ctx.log << text;
        }
    };
}

using Preparer = Action (*)(const Params &, const CommandContext &);

struct OpEntry
{
    OpSpec spec;
    Preparer prepare;
};

ParamSpec in(std::string key, bool required = true)
{
    return {std::move(key), ParamKind::Input, required, {}};
}
ParamSpec out(std::string key, std::string file)
{
    return {std::move(key), ParamKind::Output, false, std::move(file)};
}
ParamSpec cfg(std::string key)
{
    return {std::move(key), ParamKind::Config, false, {}};
}
ParamSpec val(std::string key, bool required = false)
{
    return {std::move(key), ParamKind::Value, required, {}};
}

const std::vector<OpEntry> &registry()
{
    static const std::vector<OpEntry> ops = {
        {{"ingest", {in("in"), val("source"), out("out", "corpus.jsonl"), out("stats", "stats.json")}}, prepare_ingest},
        {{"score",
          {in("new"), in("pool"), val("category", true), val("dedup_threshold"), val("source_threshold"),
           out("out", "similarity.json"), out("kept", "kept.jsonl")}},
         prepare_score},
        {{"filter",
          {in("in"), cfg("config"), in("image_embeddings", false), in("text_embeddings", false),
           out("out", "filtered.jsonl"), out("report", "filter_report.json")}},
         prepare_filter},
        {{"select",
          {in("in"), in("embeddings", false), cfg("rules"), val("quota"), val("seed"), out("out", "selected.jsonl"),
           out("plan", "selection_plan.json")}},
         prepare_select},
        {{"format", {in("in"), cfg("policy"), out("out", "formatted.jsonl")}}, prepare_format},
        {{"augment_emit", {in("in"), val("kind"), val("categories"), out("out", "requests.jsonl")}},
         prepare_augment_emit},
        {{"augment_judge", {in("in"), in("responses"), out("out", "judge_requests.jsonl")}}, prepare_augment_judge},
        {{"augment_apply",
          {in("in"), val("kind"), in("responses"), in("verdicts", false), val("require_judge"),
           out("out", "augmented.jsonl"), out("stats", "augment_stats.json")}},
         prepare_augment_apply},
        {{"augment_run",
          {in("in"), val("kind"), val("categories"), val("require_judge"), val("model"), val("max_parallel"),
           out("out", "augmented.jsonl"), out("stats", "augment_stats.json"), out("responses", "responses.jsonl")}},
         prepare_augment_run},
        {{"augment_ocrqa",
          {in("words"), val("source"), val("lexicon"), val("max_negatives"), val("max_position_pairs"), val("seed"),
           out("out", "ocrqa.jsonl")}},
         prepare_augment_ocrqa},
        {{"mix",
          {in("manifests"), val("stage", true), cfg("constraints"), val("strict"), val("seed"),
           out("out", "stage.jsonl"), out("report", "mix_report.json"), out("table", "mix_report.txt")}},
         prepare_mix},
        {{"pack",
          {in("in"), val("L"), val("stage"), val("delta"), val("method"), val("chunk"), val("eos_marker"),
           out("out", "packed.jsonl"), out("stats", "pack_stats.json")}},
         prepare_pack},
        {{"report", {in("in"), out("out", "report.json"), out("table", "report.txt")}}, prepare_report},
    };
    return ops;
}

const OpEntry &find_entry(std::string_view name)
{
    for (const auto &e : registry())
    {
        if (e.spec.name == name)
        {
            return e;
        }
    }
    throw ValidationError("unknown op '" + std::string(name) + "'");
}

// "augment" with a "mode" param names one of the augment_* ops.
std::pair<std::string, json> normalize_op(std::string op, json params)
{
    if (op == "augment")
    {
        if (!params.is_object() || !params.contains("mode") || !params["mode"].is_string())
        {
            throw ValidationError("augment needs a string 'mode' parameter");
        }
        op = "augment_" + params["mode"].get<std::string>();
        params.erase("mode");
    }
    return {op, params};
}

struct Resolved
{
    json params;
    std::vector<std::pair<std::string, fs::path>> inputs;
    std::vector<std::pair<std::string, fs::path>> outputs;
};

bool escapes(const fs::path &p)
{
    if (p.is_absolute())
    {
        return true;
    }
    return std::any_of(p.begin(), p.end(), [](const fs::path &part) { return part == ".."; });
}

// Pipeline mode: outputs stay under step_dir, "@step/file" inputs must name
// an earlier step. Standalone mode: paths are taken as given.
Resolved resolve_params(const OpSpec &op, const json &params, const fs::path &base_dir, const fs::path &step_dir,
                        const fs::path &workspace, const std::set<std::string> *earlier_steps)
{
    if (!params.is_object())
    {
        throw ValidationError(op.name + ": params must be a JSON object");
    }
    for (const auto &[key, value] : params.items())
    {
        const bool known = std::any_of(op.params.begin(), op.params.end(),
                                       [&](const ParamSpec &s) { return s.key == key; });
        if (!known)
        {
            throw ValidationError(op.name + ": unknown parameter '" + key + "'");
        }
    }

    Resolved r;
    r.params = json::object();
    for (const auto &spec : op.params)
    {
        const bool present = params.contains(spec.key) && !params.at(spec.key).is_null();
        if (!present)
        {
            if (spec.kind == ParamKind::Output && !spec.default_file.empty())
            {
                const fs::path p = step_dir / spec.default_file;
                r.params[spec.key] = p.string();
                r.outputs.emplace_back(spec.key, p);
            }
            else if (spec.required)
            {
                throw ValidationError(op.name + ": missing parameter '" + spec.key + "'");
            }
            continue;
        }
        const json &value = params.at(spec.key);
        switch (spec.kind)
        {
        case ParamKind::Value:
            r.params[spec.key] = value;
            break;
        case ParamKind::Config:
            if (value.is_string())
            {
                fs::path p(value.get<std::string>());
                r.params[spec.key] = (p.is_relative() ? base_dir / p : p).string();
            }
            else
            {
                r.params[spec.key] = value;
            }
            break;
        case ParamKind::Input: {
            if (!value.is_string())
            {
                throw ValidationError(op.name + ": parameter '" + spec.key + "' must be a path");
            }
            const std::string s = value.get<std::string>();
            fs::path p;
            if (earlier_steps && s.starts_with("@"))
            {
                const auto slash = s.find('/');
                const std::string step = s.substr(1, slash == std::string::npos ? std::string::npos : slash - 1);
                if (slash == std::string::npos || !earlier_steps->contains(step))
                {
                    throw ValidationError(op.name + ": '" + s + "' does not name an earlier step output");
                }
                const fs::path file(s.substr(slash + 1));
                if (file.empty() || escapes(file))
                {
                    throw ValidationError(op.name + ": bad step reference '" + s + "'");
                }
                p = workspace / step / file;
            }
            else
            {
                p = fs::path(s);
                if (p.is_relative())
                {
                    p = base_dir / p;
                }
                if (earlier_steps && !fs::exists(p))
                {
                    throw ValidationError(op.name + ": input does not exist: " + p.string());
                }
            }
            r.params[spec.key] = p.string();
            r.inputs.emplace_back(spec.key, p);
            break;
        }
        case ParamKind::Output: {
            if (!value.is_string())
            {
                throw ValidationError(op.name + ": parameter '" + spec.key + "' must be a path");
            }
            fs::path p(value.get<std::string>());
            if (earlier_steps)
            {
                if (p.empty() || escapes(p))
                {
                    throw ValidationError(op.name + ": output '" + spec.key + "' must stay inside the step directory");
                }
                p = step_dir / p;
            }
            r.params[spec.key] = p.string();
            r.outputs.emplace_back(spec.key, p);
            break;
        }
        }
    }

    for (const auto &[ik, ip] : r.inputs)
    {
        for (const auto &[ok, op_path] : r.outputs)
        {
            if (ip.lexically_normal() == op_path.lexically_normal())
            {
                throw ValidationError(op.name + ": output '" + ok + "' would overwrite input '" + ik + "'");
            }
        }
    }
    return r;
}

std::string relative_to(const fs::path &p, const fs::path &base)
{
    return p.lexically_normal().lexically_relative(base.lexically_normal()).generic_string();
}

} // namespace

const std::vector<OpSpec> &all_ops()
{
    static const std::vector<OpSpec> specs = [] {
        std::vector<OpSpec> v;
        for (const auto &e : registry())
        {
            v.push_back(e.spec);
        }
        return v;
    }();
    return specs;
}

const OpSpec &find_op(std::string_view name)
{
    return find_entry(name).spec;
}

Action prepare_op(const OpSpec &op, const json &params, const CommandContext &ctx)
{
    return find_entry(op.name).prepare(Params(params), ctx);
}

void run_command(std::string_view op_name, json params, const CommandContext &ctx)
{
    auto [name, normalized] = normalize_op(std::string(op_name), std::move(params));
    const OpEntry &entry = find_entry(name);
    const Resolved r = resolve_params(entry.spec, normalized, fs::path(), ctx.workspace / name, ctx.workspace, nullptr);
    const Action action = entry.prepare(Params(r.params), ctx);
    action();
}

int run_pipeline(const fs::path &config_path, const PipelineOverrides &overrides, std::ostream &err, std::ostream *log)
{
    struct Step
    {
        std::string name;
        std::string op;
        json params;
        Resolved resolved;
        Action action;
    };

    CommandContext ctx;
    std::vector<Step> steps;
    try
    {
        json config;
        try
        {
            config = json::parse(read_file(config_path));
        }
        catch (const json::exception &e)
        {
            throw ValidationError(config_path.string() + ": " + e.what());
        }
        if (!config.is_object())
        {
            throw ValidationError("pipeline config must be a JSON object");
        }
        for (const auto &[key, value] : config.items())
        {
            if (key != "seed" && key != "workspace" && key != "steps")
            {
                throw ValidationError("unknown pipeline key '" + key + "'");
            }
        }
        const fs::path base_dir = config_path.parent_path();
        ctx.seed = overrides.seed.value_or(config.value("seed", std::uint64_t{0}));
        ctx.strict = overrides.strict;
        ctx.log = log;
        if (overrides.workspace)
        {
            ctx.workspace = *overrides.workspace;
        }
        else if (config.contains("workspace"))
        {
            const fs::path w(config.at("workspace").get<std::string>());
            ctx.workspace = w.is_relative() ? base_dir / w : w;
        }
        else
        {
            throw ValidationError("pipeline needs a workspace");
        }
        if (!config.contains("steps") || !config.at("steps").is_array() || config.at("steps").empty())
        {
            throw ValidationError("pipeline needs a nonempty 'steps' array");
        }

        std::set<std::string> seen;
        for (const auto &s : config.at("steps"))
        {
            Step step;
            step.name = s.at("name").get<std::string>();
            step.op = s.at("op").get<std::string>();
            step.params = s.value("params", json::object());
            if (step.name.empty() || escapes(fs::path(step.name)) || step.name.find('/') != std::string::npos)
            {
                throw ValidationError("bad step name '" + step.name + "'");
            }
            if (seen.contains(step.name))
            {
                throw ValidationError("duplicate step name '" + step.name + "'");
            }
            auto [op_name, params] = normalize_op(step.op, step.params);
            const OpEntry &entry = find_entry(op_name);
            try
            {
                step.resolved = resolve_params(entry.spec, params, base_dir, ctx.workspace / step.name, ctx.workspace,
                                               &seen);
                step.action = entry.prepare(Params(step.resolved.params), ctx);
            }
            catch (const ValidationError &e)
            {
                throw ValidationError("step '" + step.name + "': " + e.what());
            }
            seen.insert(step.name);
            steps.push_back(std::move(step));
        }
    }
    catch (const ValidationError &e)
    {
        err << "validation error: " << e.what() << '\n';
        return 2;
    }
    catch (const json::exception &e)
    {
        err << "validation error: " << e.what() << '\n';
        return 2;
    }

    json manifest = {{"tool", "corpusforge"}, {"version", std::string(kVersion)}, {"seed", ctx.seed}};
    json records = json::array();
    const fs::path base_dir = config_path.parent_path();
    for (auto &step : steps)
    {
        json record = {{"name", step.name}, {"op", step.op}, {"params", step.params}};
        try
        {
            json inputs = json::object();
            for (const auto &[key, path] : step.resolved.inputs)
            {
                const bool in_workspace = !relative_to(path, ctx.workspace).starts_with("..");
                inputs[key] = {{"path", in_workspace ? "@" + relative_to(path, ctx.workspace)
                                                     : relative_to(path, base_dir)},
                               {"sha256", sha256_file(path)}};
            }
            record["inputs"] = std::move(inputs);
            fs::create_directories(ctx.workspace / step.name);
            step.action();
            json outputs = json::object();
            for (const auto &[key, path] : step.resolved.outputs)
            {
                outputs[key] = {{"path", relative_to(path, ctx.workspace)}, {"sha256", sha256_file(path)}};
            }
            record["outputs"] = std::move(outputs);
        }
        catch (const std::exception &e)
        {
            err << "step '" << step.name << "' (" << step.op << ") failed: " << e.what() << '\n';
            return 3;
        }
        records.push_back(std::move(record));
    }
    manifest["steps"] = std::move(records);
    try
    {
        write_json(ctx.workspace / "run_manifest.json", manifest);
    }
    catch (const std::exception &e)
    {
        err << "could not write run manifest: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

} // namespace corpusforge
