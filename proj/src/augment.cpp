#include "corpusforge/augment.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace corpusforge
{

namespace
{
using json = nlohmann::json;

constexpr std::string_view kCotTemplate =
    R"(Rewrite the following answer using a **Chain of Thought (CoT)** approach. The final answers should adhere to the following structure and constraints:

1. **Problem Restatement**: Start by restating the problem clearly to set the context.

2. **Step-by-Step Process**:
- **Explicit Steps**: Break the solution into **discrete steps**, showing all calculations.
- **Justifications**: Include a brief explanation for each step (e.g., referencing mathematical rules such as the distributive property, derivative rules, or solving equations).

3. **Mathematical Principles**: Where relevant, mention the specific mathematical principles or theorems being applied (e.g., chain rule, Pythagoras' theorem, etc.).

4. **Final Answer**: End with the final solution, clearly boxed or highlighted.

5. **Consistent Structure**: Ensure every solution follows this format:
- **Restatement of the problem**
- **Steps and calculations with justifications**
- **Final answer**

The output should be detailed but concise, explaining each step logically while avoiding excessive repetition. Clarity and logical flow are crucial.

Here is a question and answer pair of this image:
Question: {question}
Answer: {answer}
)";

constexpr std::string_view kJudgeTemplate =
    R"(Please evaluate if the correctness of my answer based on the provided question and the correct answer.

Question: {question}
Correct Answer: {ori_answer}
My Answer: {new_answer}

Please only return "True" if my answer is correct, or "False" if it is incorrect.
My answer is:)";

constexpr std::string_view kExpandTemplate =
    R"(Given the question {question}. The original answer is {answer}.
Please reply with a more specific answer based on the existing answer, as detailed as possible.)";

// Single pass over the template, so substituted text is never rescanned.
std::string render(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string_view>> &slots)
{
    std::string out;
    out.reserve(tmpl.size() + 256);
    std::size_t pos = 0;
    while (pos < tmpl.size())
    {
        bool matched = false;
        if (tmpl[pos] == '{')
        {
            for (const auto &[name, value] : slots)
            {
                if (tmpl.compare(pos + 1, name.size(), name) == 0 && pos + 1 + name.size() < tmpl.size() &&
                    tmpl[pos + 1 + name.size()] == '}')
                {
                    out += value;
                    pos += name.size() + 2;
                    matched = true;
                    break;
                }
            }
        }
        if (!matched)
        {
            out += tmpl[pos++];
        }
    }
    return out;
}

void require_nonempty(std::string_view value, const char *what)
{
    if (trim(value).empty())
    {
        throw ValidationError(std::string(what) + " must be nonempty");
    }
}

std::pair<std::string, std::string> final_pair(const Sample &s)
{
    const std::size_t q = s.last_question_index();
    const std::size_t a = s.last_assistant_index();
    if (q == std::string::npos || a == std::string::npos)
    {
        throw ValidationError("sample " + s.id + " has no question/answer pair");
    }
    return {s.turns[q].text, s.turns[a].text};
}

std::pair<AugmentKind, std::string> split_request_id(const std::string &request_id)
{
    const auto colon = request_id.find(':');
    if (colon == std::string::npos)
    {
        throw ValidationError("malformed request_id '" + request_id + "'");
    }
    return {parse_augment_kind(request_id.substr(0, colon)), request_id.substr(colon + 1)};
}

template <typename T, typename FromJson>
std::vector<T> parse_jsonl(std::string_view text, FromJson from_json)
{
    std::vector<T> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size())
    {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
        {
            end = text.size();
        }
        ++line_no;
        const std::string_view line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        if (line.empty())
        {
            continue;
        }
        try
        {
            out.push_back(from_json(json::parse(line)));
        }
        catch (const json::exception &e)
        {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        catch (const ValidationError &e)
        {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}
} // namespace

std::string_view to_string(AugmentKind k)
{
    switch (k)
    {
    case AugmentKind::CoT:
        return "cot";
    case AugmentKind::Judge:
        return "judge";
    case AugmentKind::Expand:
        return "expand";
    }
    return "unknown";
}

AugmentKind parse_augment_kind(std::string_view s)
{
    for (auto k : {AugmentKind::CoT, AugmentKind::Judge, AugmentKind::Expand})
    {
        if (to_string(k) == s)
        {
            return k;
        }
    }
    throw ValidationError("unknown augmentation kind '" + std::string(s) + "'");
}

std::string render_cot_prompt(std::string_view question, std::string_view answer)
{
    require_nonempty(question, "question");
    require_nonempty(answer, "answer");
    return render(kCotTemplate, {{"question", question}, {"answer", answer}});
}

std::string render_judge_prompt(std::string_view question, std::string_view original_answer,
                                std::string_view new_answer)
{
    require_nonempty(question, "question");
    require_nonempty(original_answer, "original answer");
    require_nonempty(new_answer, "new answer");
    return render(kJudgeTemplate, {{"question", question}, {"ori_answer", original_answer}, {"new_answer", new_answer}});
}

std::string render_expand_prompt(std::string_view question, std::string_view answer)
{
    require_nonempty(question, "question");
    require_nonempty(answer, "answer");
    return render(kExpandTemplate, {{"question", question}, {"answer", answer}});
}

JudgeVerdict parse_judge(std::string_view text)
{
    std::string_view t = trim(text);
    while (t.size() >= 2 && ((t.front() == '"' && t.back() == '"') || (t.front() == '\'' && t.back() == '\'')))
    {
        t = trim(t.substr(1, t.size() - 2));
    }
    const std::string lowered = to_lower_ascii(t);
    if (lowered == "true")
    {
        return JudgeVerdict::Accept;
    }
    if (lowered == "false")
    {
        return JudgeVerdict::Reject;
    }
    return JudgeVerdict::Unparseable;
}

std::string make_request_id(AugmentKind kind, std::string_view sample_id)
{
    return std::string(to_string(kind)) + ":" + std::string(sample_id);
}

std::vector<AugmentationRequest> emit_requests(const Pool &pool, AugmentKind kind, const SamplePredicate &select)
{
    if (kind == AugmentKind::Judge)
    {
        throw ValidationError("judge requests are emitted from CoT responses");
    }
    check_unique_ids(pool);
    std::vector<AugmentationRequest> out;
    for (const auto &s : pool)
    {
        if (select && !select(s))
        {
            continue;
        }
        auto [question, answer] = final_pair(s);
        AugmentationRequest r;
        r.request_id = make_request_id(kind, s.id);
        r.sample_id = s.id;
        r.kind = kind;
        r.prompt = kind == AugmentKind::CoT ? render_cot_prompt(question, answer) : render_expand_prompt(question, answer);
        r.question = std::move(question);
        r.answer = std::move(answer);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<AugmentationRequest> emit_judge_requests(const Pool &pool,
                                                     const std::vector<AugmentationResponse> &cot_responses)
{
    check_unique_ids(pool);
    std::unordered_map<std::string_view, const Sample *> by_id;
    for (const auto &s : pool)
    {
        by_id.emplace(s.id, &s);
    }
    std::vector<AugmentationRequest> out;
    for (const auto &resp : cot_responses)
    {
        auto [kind, sample_id] = split_request_id(resp.request_id);
        auto it = by_id.find(sample_id);
        if (kind != AugmentKind::CoT || it == by_id.end())
        {
            throw ValidationError("dangling request_id '" + resp.request_id + "'");
        }
        auto [question, answer] = final_pair(*it->second);
        AugmentationRequest r;
        r.request_id = make_request_id(AugmentKind::Judge, sample_id);
        r.sample_id = sample_id;
        r.kind = AugmentKind::Judge;
        r.prompt = render_judge_prompt(question, answer, resp.text);
        r.question = std::move(question);
        r.answer = std::move(answer);
        r.new_answer = resp.text;
        out.push_back(std::move(r));
    }
    return out;
}

ApplyResult apply_responses(const Pool &pool, const std::vector<AugmentationResponse> &responses,
                            const std::vector<AugmentationResponse> &judge_verdicts, const ApplyOptions &opts)
{
    if (opts.kind == AugmentKind::Judge)
    {
        throw ValidationError("apply_responses: kind must be cot or expand");
    }
    check_unique_ids(pool);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        index.emplace(pool[i].id, i);
    }

    std::unordered_map<std::string, const AugmentationResponse *> by_sample;
    for (const auto &r : responses)
    {
        auto [kind, sample_id] = split_request_id(r.request_id);
        if (kind != opts.kind || !index.contains(sample_id))
        {
            throw ValidationError("dangling request_id '" + r.request_id + "'");
        }
        if (!by_sample.emplace(sample_id, &r).second)
        {
            throw ValidationError("duplicate response for '" + r.request_id + "'");
        }
    }
    std::unordered_map<std::string, JudgeVerdict> verdicts;
    for (const auto &v : judge_verdicts)
    {
        auto [kind, sample_id] = split_request_id(v.request_id);
        if (kind != AugmentKind::Judge || !by_sample.contains(sample_id))
        {
            throw ValidationError("dangling judge verdict '" + v.request_id + "'");
        }
        if (!verdicts.emplace(sample_id, parse_judge(v.text)).second)
        {
            throw ValidationError("duplicate judge verdict '" + v.request_id + "'");
        }
    }

    const bool require_judge = opts.require_judge.value_or(opts.kind == AugmentKind::CoT);
    ApplyResult result;
    result.pool = pool;
    result.stats.responses = responses.size();
    for (auto &s : result.pool)
    {
        auto it = by_sample.find(s.id);
        if (it == by_sample.end())
        {
            continue;
        }
        bool accept = true;
        if (require_judge)
        {
            auto v = verdicts.find(s.id);
            if (v == verdicts.end())
            {
                ++result.stats.pending;
                continue;
            }
            if (v->second == JudgeVerdict::Reject)
            {
                ++result.stats.rejected;
                accept = false;
            }
            else if (v->second == JudgeVerdict::Unparseable)
            {
                ++result.stats.unparseable;
                accept = false;
            }
        }
        if (accept && trim(it->second->text).empty())
        {
            ++result.stats.rejected;
            accept = false;
        }
        if (!accept)
        {
            continue;
        }
        const std::size_t a = s.last_assistant_index();
        s.provenance["original_answer"] = s.turns[a].text;
        s.provenance["augmentation"] = std::string(to_string(opts.kind));
        s.turns[a].text = it->second->text;
        s.token_length.reset();
        ++result.stats.accepted;
    }
    return result;
}

json request_to_json(const AugmentationRequest &r)
{
    json meta = {{"question", r.question}, {"answer", r.answer}};
    if (r.kind == AugmentKind::Judge)
    {
        meta["new_answer"] = r.new_answer;
    }
    return {{"request_id", r.request_id},
            {"sample_id", r.sample_id},
            {"kind", std::string(to_string(r.kind))},
            {"prompt", r.prompt},
            {"metadata", std::move(meta)}};
}

AugmentationRequest request_from_json(const json &j)
{
    AugmentationRequest r;
    r.request_id = j.at("request_id").get<std::string>();
    r.sample_id = j.at("sample_id").get<std::string>();
    r.kind = parse_augment_kind(j.at("kind").get<std::string>());
    r.prompt = j.at("prompt").get<std::string>();
    if (r.prompt.empty())
    {
        throw ValidationError("request " + r.request_id + " has an empty prompt");
    }
    if (auto it = j.find("metadata"); it != j.end())
    {
        r.question = it->value("question", "");
        r.answer = it->value("answer", "");
        r.new_answer = it->value("new_answer", "");
    }
    return r;
}

json response_to_json(const AugmentationResponse &r)
{
    return {{"request_id", r.request_id}, {"text", r.text}};
}

AugmentationResponse response_from_json(const json &j)
{
    return {j.at("request_id").get<std::string>(), j.at("text").get<std::string>()};
}

std::string serialize_requests(const std::vector<AugmentationRequest> &requests)
{
    std::string out;
    std::set<std::string_view> ids;
    for (const auto &r : requests)
    {
        if (!ids.insert(r.request_id).second)
        {
            throw ValidationError("duplicate request_id '" + r.request_id + "'");
        }
        out += request_to_json(r).dump();
        out += '\n';
    }
    return out;
}

std::vector<AugmentationRequest> parse_requests(std::string_view text)
{
    return parse_jsonl<AugmentationRequest>(text, request_from_json);
}

std::string serialize_responses(const std::vector<AugmentationResponse> &responses)
{
    std::string out;
    for (const auto &r : responses)
    {
        out += response_to_json(r).dump();
        out += '\n';
    }
    return out;
}

std::vector<AugmentationResponse> parse_responses(std::string_view text)
{
    return parse_jsonl<AugmentationResponse>(text, response_from_json);
}

std::string relative_position(const BoundingBox &a, const BoundingBox &b)
{
    const double dx = b.center_x() - a.center_x();
    const double dy = b.center_y() - a.center_y();
    if (dx == 0.0 && dy == 0.0)
    {
        return {};
    }
    // Image y grows downward.
    if (std::abs(dx) >= std::abs(dy))
    {
        return dx > 0 ? "left of" : "right of";
    }
    return dy > 0 ? "above" : "below";
}

std::vector<Sample> rule_based_ocr_qa(const std::vector<WordRecord> &words, const ImageRef &image, std::uint64_t seed,
                                      const OcrQaOptions &opts)
{
    if (words.empty())
    {
        throw ValidationError("rule_based_ocr_qa: empty word record list");
    }
    for (const auto &w : words)
    {
        const auto &b = w.bbox;
        const bool ordered = b.x0 <= b.x1 && b.y0 <= b.y1 && b.x0 >= 0 && b.y0 >= 0;
        const bool inside = (!image.width || b.x1 <= static_cast<double>(*image.width)) &&
                            (!image.height || b.y1 <= static_cast<double>(*image.height));
        if (!ordered || !inside)
        {
            throw ValidationError("bbox of word '" + w.text + "' is outside the image bounds");
        }
    }

    std::vector<const WordRecord *> distinct;
    std::set<std::string> present;
    for (const auto &w : words)
    {
        if (trim(w.text).empty())
        {
            continue;
        }
        if (present.insert(to_lower_ascii(w.text)).second)
        {
            distinct.push_back(&w);
        }
    }

    std::vector<Sample> out;
    auto make = [&](std::string question, std::string answer) {
        Sample s;
        s.id = opts.id_prefix + ":" + std::to_string(out.size());
        s.source = opts.source;
        s.category = opts.category;
        s.modality = Modality::ImageText;
        s.images = {image};
        s.turns = {{Role::User, std::move(question)}, {Role::Assistant, std::move(answer)}};
        out.push_back(std::move(s));
    };
    auto exists_q = [](std::string_view w) { return "Does the word \"" + std::string(w) + "\" appear in the image?"; };

    for (const auto *w : distinct)
    {
        make(exists_q(w->text), "Yes");
    }

    Rng rng(hash_key(seed, image.path));
    std::vector<std::string> absent;
    for (const auto &cand : opts.lexicon)
    {
        if (!present.contains(to_lower_ascii(cand)))
        {
            absent.push_back(cand);
        }
    }
    for (auto idx : rng.sample_without_replacement(absent.size(), opts.max_negatives))
    {
        make(exists_q(absent[idx]), "No");
    }

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < distinct.size(); ++i)
    {
        for (std::size_t j = i + 1; j < distinct.size(); ++j)
        {
            if (!relative_position(distinct[i]->bbox, distinct[j]->bbox).empty())
            {
                pairs.emplace_back(i, j);
            }
        }
    }
    auto chosen = rng.sample_without_replacement(pairs.size(), opts.max_position_pairs);
    std::sort(chosen.begin(), chosen.end());
    for (auto idx : chosen)
    {
        const auto *a = distinct[pairs[idx].first];
        const auto *b = distinct[pairs[idx].second];
        make("Where is the word \"" + a->text + "\" relative to the word \"" + b->text + "\"?",
             relative_position(a->bbox, b->bbox));
    }
    return out;
}

} // namespace corpusforge
