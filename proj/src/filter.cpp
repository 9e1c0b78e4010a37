#include "corpusforge/filter.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/similarity.hpp"
#include "corpusforge/util.hpp"

#include <unordered_map>

namespace corpusforge
{

namespace
{
using json = nlohmann::json;

std::vector<std::uint32_t> intern_tokens(const std::vector<std::string_view> &tokens)
{
    std::unordered_map<std::string_view, std::uint32_t> ids;
    std::vector<std::uint32_t> out;
    out.reserve(tokens.size());
    for (auto t : tokens)
    {
        auto [it, _] = ids.emplace(t, static_cast<std::uint32_t>(ids.size()));
        out.push_back(it->second);
    }
    return out;
}

std::string join_tokens(const std::vector<std::string_view> &tokens, std::size_t start, std::size_t count)
{
    std::string out;
    for (std::size_t i = start; i < start + count; ++i)
    {
        if (i > start)
        {
            out += ' ';
        }
        out += tokens[i];
    }
    return out;
}

void reject_unknown_keys(const json &j, std::initializer_list<std::string_view> known, const std::string &where)
{
    for (const auto &[k, _] : j.items())
    {
        bool ok = false;
        for (auto name : known)
        {
            ok = ok || name == k;
        }
        if (!ok)
        {
            throw ValidationError("unknown filter config key '" + where + k + "'");
        }
    }
}
} // namespace

std::string_view to_string(FilterRule r)
{
    switch (r)
    {
    case FilterRule::Repetition:
        return "repetition";
    case FilterRule::Precision:
        return "precision";
    case FilterRule::Refusal:
        return "refusal";
    case FilterRule::Mismatch:
        return "mismatch";
    }
    return "unknown";
}

FilterRule parse_filter_rule(std::string_view s)
{
    for (auto r : {FilterRule::Repetition, FilterRule::Precision, FilterRule::Refusal, FilterRule::Mismatch})
    {
        if (to_string(r) == s)
        {
            return r;
        }
    }
    throw ValidationError("unknown filter rule '" + std::string(s) + "'");
}

void validate(const FilterConfig &cfg)
{
    if (cfg.repetition.ngram_min < 1)
    {
        throw ValidationError("repetition.ngram_min must be >= 1");
    }
    if (cfg.repetition.min_repeats < 2)
    {
        throw ValidationError("repetition.min_repeats must be >= 2");
    }
    if (!(cfg.repetition.tail_fraction > 0.0 && cfg.repetition.tail_fraction <= 1.0))
    {
        throw ValidationError("repetition.tail_fraction must be in (0, 1]");
    }
    if (cfg.precision.max_decimals < 1)
    {
        throw ValidationError("precision.max_decimals must be >= 1");
    }
    for (const auto &kw : cfg.refusal.keywords)
    {
        if (trim(kw).empty())
        {
            throw ValidationError("refusal keywords must be nonempty");
        }
    }
    if (!(cfg.mismatch.min_cross_sim > 0.0 && cfg.mismatch.min_cross_sim <= 1.0))
    {
        throw ValidationError("mismatch.min_cross_sim must be in (0, 1]");
    }
}

FilterConfig filter_config_from_json(const json &j)
{
    if (!j.is_object())
    {
        throw ValidationError("filter config must be a JSON object");
    }
    reject_unknown_keys(j, {"repetition", "precision", "refusal", "mismatch", "advisory"}, "");
    FilterConfig cfg;
    try
    {
        if (auto it = j.find("repetition"); it != j.end())
        {
            reject_unknown_keys(*it, {"enabled", "ngram_min", "min_repeats", "tail_fraction"}, "repetition.");
            cfg.repetition.enabled = it->value("enabled", cfg.repetition.enabled);
            cfg.repetition.ngram_min = it->value("ngram_min", cfg.repetition.ngram_min);
            cfg.repetition.min_repeats = it->value("min_repeats", cfg.repetition.min_repeats);
            cfg.repetition.tail_fraction = it->value("tail_fraction", cfg.repetition.tail_fraction);
        }
        if (auto it = j.find("precision"); it != j.end())
        {
            reject_unknown_keys(*it, {"enabled", "max_decimals"}, "precision.");
            cfg.precision.enabled = it->value("enabled", cfg.precision.enabled);
            cfg.precision.max_decimals = it->value("max_decimals", cfg.precision.max_decimals);
        }
        if (auto it = j.find("refusal"); it != j.end())
        {
            reject_unknown_keys(*it, {"enabled", "keywords"}, "refusal.");
            cfg.refusal.enabled = it->value("enabled", cfg.refusal.enabled);
            cfg.refusal.keywords = it->value("keywords", cfg.refusal.keywords);
        }
        if (auto it = j.find("mismatch"); it != j.end())
        {
            reject_unknown_keys(*it, {"enabled", "min_cross_sim"}, "mismatch.");
            cfg.mismatch.enabled = it->value("enabled", cfg.mismatch.enabled);
            cfg.mismatch.min_cross_sim = it->value("min_cross_sim", cfg.mismatch.min_cross_sim);
        }
        if (auto it = j.find("advisory"); it != j.end())
        {
            for (const auto &name : *it)
            {
                cfg.advisory.insert(parse_filter_rule(name.get<std::string>()));
            }
        }
    }
    catch (const json::exception &e)
    {
        throw ValidationError(std::string("filter config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

json filter_config_to_json(const FilterConfig &cfg)
{
    json advisory = json::array();
    for (auto r : cfg.advisory)
    {
        advisory.push_back(std::string(to_string(r)));
    }
    return {
        {"repetition",
         {{"enabled", cfg.repetition.enabled},
          {"ngram_min", cfg.repetition.ngram_min},
          {"min_repeats", cfg.repetition.min_repeats},
          {"tail_fraction", cfg.repetition.tail_fraction}}},
        {"precision", {{"enabled", cfg.precision.enabled}, {"max_decimals", cfg.precision.max_decimals}}},
        {"refusal", {{"enabled", cfg.refusal.enabled}, {"keywords", cfg.refusal.keywords}}},
        {"mismatch", {{"enabled", cfg.mismatch.enabled}, {"min_cross_sim", cfg.mismatch.min_cross_sim}}},
        {"advisory", std::move(advisory)},
    };
}

std::optional<RepetitionHit> detect_repetition(std::string_view text, const RepetitionConfig &cfg)
{
    const auto words = split_whitespace(text);
    const auto tok = intern_tokens(words);
    const std::size_t n_tok = tok.size();
    const std::size_t n_min = std::max<std::size_t>(1, cfg.ngram_min);

    // Trailing block repeated back-to-back at the end of the text.
    for (std::size_t n = n_min; 2 * n <= n_tok; ++n)
    {
        std::size_t matched = 0;
        for (std::size_t i = n_tok; i > n && tok[i - 1] == tok[i - 1 - n]; --i)
        {
            ++matched;
        }
        const std::size_t repeats = 1 + matched / n;
        if (repeats >= 2 && static_cast<double>(repeats * n) >= cfg.tail_fraction * static_cast<double>(n_tok))
        {
            return RepetitionHit{join_tokens(words, n_tok - n, n), repeats, true};
        }
    }

    // An n-gram repeated consecutively anywhere in the text. A run of
    // (min_repeats - 1) * n positions where tok[i] == tok[i + n] is exactly
    // min_repeats back-to-back copies of one block.
    const std::size_t need_repeats = std::max<std::size_t>(2, cfg.min_repeats);
    for (std::size_t n = n_min; n * need_repeats <= n_tok; ++n)
    {
        std::size_t run = 0;
        for (std::size_t i = 0; i + n < n_tok; ++i)
        {
            run = (tok[i] == tok[i + n]) ? run + 1 : 0;
            if (run >= (need_repeats - 1) * n)
            {
                const std::size_t start = i + 1 - run;
                std::size_t j = i + 1;
                while (j + n < n_tok && tok[j] == tok[j + n])
                {
                    ++run;
                    ++j;
                }
                return RepetitionHit{join_tokens(words, start, n), 1 + run / n, false};
            }
        }
    }
    return std::nullopt;
}

std::optional<PrecisionHit> detect_numeric_precision(const Sample &sample, const PrecisionConfig &cfg)
{
    std::size_t context_decimals = 0;
    for (const auto &turn : sample.turns)
    {
        if (turn.role != Role::User)
        {
            continue;
        }
        for (const auto &lit : find_decimal_literals(turn.text))
        {
            context_decimals = std::max(context_decimals, lit.fraction_digits);
        }
    }
    for (std::size_t t = 0; t < sample.turns.size(); ++t)
    {
        const auto &turn = sample.turns[t];
        if (turn.role != Role::Assistant)
        {
            continue;
        }
        for (const auto &lit : find_decimal_literals(turn.text))
        {
            // Precision is licensed when the question carries as many decimals.
            if (lit.fraction_digits > cfg.max_decimals && context_decimals < lit.fraction_digits)
            {
                return PrecisionHit{turn.text.substr(lit.pos, lit.length), lit.fraction_digits, t};
            }
        }
    }
    return std::nullopt;
}

std::optional<std::string> detect_refusal(std::string_view text, const RefusalConfig &cfg)
{
    const std::string_view body = trim(text);
    if (body.empty())
    {
        return std::nullopt;
    }
    const std::string lowered = to_lower_ascii(body);
    const std::size_t length = utf8_length(body);
    for (const auto &kw : cfg.keywords)
    {
        const std::string needle = to_lower_ascii(trim(kw));
        if (lowered.find(needle) != std::string::npos && length < 2 * utf8_length(needle) + 32)
        {
            return kw;
        }
    }
    return std::nullopt;
}

MismatchCheck detect_mismatch(const Sample &sample, const std::optional<EmbeddingRecord> &embeddings,
                              const MismatchConfig &cfg)
{
    MismatchCheck out;
    if (!cfg.enabled)
    {
        out.note = "mismatch rule disabled";
        return out;
    }
    if (!embeddings || !embeddings->image_vec || !embeddings->text_vec)
    {
        out.note = "mismatch skipped for " + sample.id + ": image and text vectors required";
        return out;
    }
    if (embeddings->image_vec->size() != embeddings->text_vec->size())
    {
        out.note = "mismatch skipped for " + sample.id + ": image and text vectors are not in a joint space";
        return out;
    }
    try
    {
        out.cross_sim = cosine_sim(*embeddings->image_vec, *embeddings->text_vec);
    }
    catch (const ValidationError &e)
    {
        out.note = "mismatch skipped for " + sample.id + ": " + e.what();
        return out;
    }
    out.applicable = true;
    out.hit = *out.cross_sim < cfg.min_cross_sim;
    return out;
}

FilterVerdict evaluate_sample(const Sample &sample, const EmbeddingSet *embeddings, const FilterConfig &cfg)
{
    FilterVerdict v;
    v.sample_id = sample.id;

    if (cfg.repetition.enabled)
    {
        for (std::size_t t = 0; t < sample.turns.size(); ++t)
        {
            if (sample.turns[t].role != Role::Assistant)
            {
                continue;
            }
            if (auto hit = detect_repetition(sample.turns[t].text, cfg.repetition))
            {
                v.hits.push_back({FilterRule::Repetition,
                                  (hit->tail ? "trailing block '" : "block '") + hit->block + "' repeated " +
                                      std::to_string(hit->repeats) + "x",
                                  t});
                break;
            }
        }
    }
    if (cfg.precision.enabled)
    {
        if (auto hit = detect_numeric_precision(sample, cfg.precision))
        {
            v.hits.push_back({FilterRule::Precision,
                              hit->number + " has " + std::to_string(hit->decimals) + " decimals", hit->turn});
        }
    }
    if (cfg.refusal.enabled)
    {
        for (std::size_t t = 0; t < sample.turns.size(); ++t)
        {
            if (sample.turns[t].role != Role::Assistant)
            {
                continue;
            }
            if (auto kw = detect_refusal(sample.turns[t].text, cfg.refusal))
            {
                v.hits.push_back({FilterRule::Refusal, "refusal keyword '" + *kw + "'", t});
                break;
            }
        }
    }
    if (cfg.mismatch.enabled)
    {
        std::optional<EmbeddingRecord> rec;
        if (embeddings != nullptr)
        {
            rec = embeddings->record(sample.id);
        }
        auto check = detect_mismatch(sample, rec, cfg.mismatch);
        if (!check.applicable)
        {
            v.notes.push_back(check.note);
        }
        else if (check.hit)
        {
            v.hits.push_back({FilterRule::Mismatch, "image/text similarity " + std::to_string(*check.cross_sim), 0});
        }
    }

    for (const auto &hit : v.hits)
    {
        if (!cfg.advisory.contains(hit.rule))
        {
            v.decision = Decision::Drop;
        }
    }
    return v;
}

FilterResult run_filters(const Pool &pool, const EmbeddingSet *embeddings, const FilterConfig &cfg)
{
    validate(cfg);
    FilterResult result;
    result.verdicts.resize(pool.size());
    parallel_for(pool.size(), [&](std::size_t i) { result.verdicts[i] = evaluate_sample(pool[i], embeddings, cfg); });

    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        const auto &v = result.verdicts[i];
        for (const auto &hit : v.hits)
        {
            result.hits_per_rule[hit.rule] += 1;
        }
        if (cfg.mismatch.enabled && !v.notes.empty())
        {
            ++result.mismatch_skipped;
        }
        if (v.decision == Decision::Keep)
        {
            result.kept.push_back(pool[i]);
        }
        else
        {
            ++result.dropped;
        }
    }
    return result;
}

json filter_report_to_json(const FilterResult &result)
{
    json counts = json::object();
    for (auto r : {FilterRule::Repetition, FilterRule::Precision, FilterRule::Refusal, FilterRule::Mismatch})
    {
        auto it = result.hits_per_rule.find(r);
        counts[std::string(to_string(r))] = it == result.hits_per_rule.end() ? 0 : it->second;
    }
    json verdicts = json::array();
    for (const auto &v : result.verdicts)
    {
        if (v.hits.empty() && v.notes.empty())
        {
            continue;
        }
        json hits = json::array();
        for (const auto &h : v.hits)
        {
            hits.push_back({{"rule", std::string(to_string(h.rule))}, {"detail", h.detail}, {"turn", h.turn}});
        }
        verdicts.push_back({{"sample_id", v.sample_id},
                            {"decision", v.decision == Decision::Keep ? "keep" : "drop"},
                            {"hits", std::move(hits)},
                            {"notes", v.notes}});
    }
    return {
        {"total", result.verdicts.size()},
        {"kept", result.kept.size()},
        {"dropped", result.dropped},
        {"hits_per_rule", std::move(counts)},
        {"mismatch_skipped", result.mismatch_skipped},
        {"verdicts", std::move(verdicts)},
    };
}

} // namespace corpusforge
