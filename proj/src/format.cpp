#include "corpusforge/format.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <algorithm>

namespace corpusforge
{

namespace
{
bool starts_with_at(std::string_view text, std::size_t pos, std::string_view needle)
{
    return text.size() - pos >= needle.size() && text.compare(pos, needle.size(), needle) == 0;
}

// True when `open` at the start and `close` at the end are one matching pair.
bool wraps_whole(std::string_view text, std::string_view open, std::string_view close)
{
    if (open.empty() || close.empty() || text.size() < open.size() + close.size())
    {
        return false;
    }
    if (!text.starts_with(open) || !text.ends_with(close))
    {
        return false;
    }
    const std::string_view inner = text.substr(open.size(), text.size() - open.size() - close.size());
    if (open == close)
    {
        return inner.find(open) == std::string_view::npos;
    }
    std::size_t depth = 0;
    std::size_t pos = 0;
    while (pos < inner.size())
    {
        if (starts_with_at(inner, pos, open))
        {
            ++depth;
            pos += open.size();
        }
        else if (starts_with_at(inner, pos, close))
        {
            if (depth == 0)
            {
                return false;
            }
            --depth;
            pos += close.size();
        }
        else
        {
            ++pos;
        }
    }
    return depth == 0;
}

void increment_decimal(std::string &digits)
{
    for (std::size_t i = digits.size(); i > 0; --i)
    {
        if (digits[i - 1] == '9')
        {
            digits[i - 1] = '0';
        }
        else
        {
            ++digits[i - 1];
            return;
        }
    }
    digits.insert(digits.begin(), '1');
}

std::string round_literal(std::string_view literal, std::size_t places)
{
    const std::size_t dot = literal.find('.');
    std::string int_part(literal.substr(0, dot));
    const std::string_view frac = literal.substr(dot + 1);
    std::string kept(frac.substr(0, places));
    const std::string_view rest = frac.substr(places);

    bool up = false;
    if (rest.front() > '5')
    {
        up = true;
    }
    else if (rest.front() == '5')
    {
        const bool exact_half = rest.find_first_not_of('0', 1) == std::string_view::npos;
        if (!exact_half)
        {
            up = true;
        }
        else
        {
            const char last = kept.empty() ? int_part.back() : kept.back();
            up = ((last - '0') % 2) == 1;
        }
    }

    std::string digits = int_part + kept;
    if (up)
    {
        increment_decimal(digits);
    }
    const std::size_t int_len = digits.size() - kept.size();
    std::string out = digits.substr(0, int_len);
    if (places > 0)
    {
        out += '.';
        out += digits.substr(int_len);
    }
    return out;
}

std::string answer_key(std::string_view answer)
{
    std::string key = to_lower_ascii(trim(answer));
    while (!key.empty() && (key.back() == '.' || key.back() == '!'))
    {
        key.pop_back();
    }
    return key;
}
} // namespace

void validate(const FormatPolicy &policy)
{
    if (!(policy.append_rate >= 0.0 && policy.append_rate <= 1.0))
    {
        throw ValidationError("append_rate must be in [0, 1]");
    }
    if (!(policy.yes_no_append_rate >= 0.0 && policy.yes_no_append_rate <= 1.0))
    {
        throw ValidationError("yes_no_append_rate must be in [0, 1]");
    }
    for (const auto &[open, close] : policy.strip_patterns)
    {
        if (open.empty() || close.empty())
        {
            throw ValidationError("strip pattern markers must be nonempty");
        }
    }
}

FormatPolicy format_policy_from_json(const nlohmann::json &j)
{
    if (!j.is_object())
    {
        throw ValidationError("format policy must be a JSON object");
    }
    FormatPolicy p;
    try
    {
        if (auto it = j.find("strip_patterns"); it != j.end())
        {
            p.strip_patterns = it->get<std::vector<std::pair<std::string, std::string>>>();
        }
        p.short_answer_token_max = j.value("short_answer_token_max", p.short_answer_token_max);
        p.append_rate = j.value("append_rate", p.append_rate);
        p.yes_no_append_rate = j.value("yes_no_append_rate", p.yes_no_append_rate);
        p.seed = j.value("seed", p.seed);
        if (auto it = j.find("decimal_places"); it != j.end() && !it->is_null())
        {
            p.decimal_places = it->get<std::size_t>();
        }
    }
    catch (const nlohmann::json::exception &e)
    {
        throw ValidationError(std::string("format policy: ") + e.what());
    }
    validate(p);
    return p;
}

std::string strip_decorations(std::string_view text, const FormatPolicy &policy)
{
    std::string_view current = trim(text);
    bool stripped = false;
    bool changed = true;
    while (changed)
    {
        changed = false;
        for (const auto &[open, close] : policy.strip_patterns)
        {
            if (wraps_whole(current, open, close))
            {
                current = trim(current.substr(open.size(), current.size() - open.size() - close.size()));
                stripped = changed = true;
            }
        }
    }
    return stripped ? std::string(current) : std::string(text);
}

Sample append_instruction(const Sample &sample, const FormatPolicy &policy)
{
    const std::size_t a = sample.last_assistant_index();
    const std::size_t q = sample.last_question_index();
    if (a == std::string::npos || q == std::string::npos)
    {
        return sample;
    }
    const std::string &answer = sample.turns[a].text;
    const std::size_t answer_tokens = split_whitespace(answer).size();
    if (answer_tokens == 0 || answer_tokens > policy.short_answer_token_max)
    {
        return sample;
    }
    const std::string &question = sample.turns[q].text;
    if (question.ends_with(kShortAnswerSuffix) || question.ends_with(kYesNoSuffix))
    {
        return sample;
    }

    const double u = unit_from_key(policy.seed, sample.id);
    const std::string key = answer_key(answer);
    std::string_view suffix;
    if (key == "yes" || key == "no")
    {
        if (u < policy.yes_no_append_rate)
        {
            suffix = kYesNoSuffix;
        }
    }
    else if (u < policy.append_rate)
    {
        suffix = kShortAnswerSuffix;
    }
    if (suffix.empty())
    {
        return sample;
    }
    Sample out = sample;
    out.turns[q].text += suffix;
    return out;
}

std::string normalize_numeric(std::string_view text, std::size_t places)
{
    std::string out;
    out.reserve(text.size());
    std::size_t cursor = 0;
    for (const auto &lit : find_decimal_literals(text))
    {
        if (lit.fraction_digits <= places)
        {
            continue;
        }
        out.append(text.substr(cursor, lit.pos - cursor));
        out += round_literal(text.substr(lit.pos, lit.length), places);
        cursor = lit.pos + lit.length;
    }
    out.append(text.substr(cursor));
    return out;
}

std::vector<ConversationTurn> classification_to_mcq(const std::string &label, const std::vector<std::string> &label_set,
                                                    const std::string &question_stem, std::size_t n_choices,
                                                    std::uint64_t seed)
{
    std::vector<std::string> labels;
    for (const auto &l : label_set)
    {
        if (std::find(labels.begin(), labels.end(), l) == labels.end())
        {
            labels.push_back(l);
        }
    }
    if (std::find(labels.begin(), labels.end(), label) == labels.end())
    {
        throw ValidationError("label '" + label + "' is not in the label set");
    }
    if (n_choices < 2 || n_choices > labels.size() || n_choices > 26)
    {
        throw ValidationError("n_choices must be in [2, min(26, " + std::to_string(labels.size()) + ")]");
    }

    std::vector<std::string> distractors;
    for (const auto &l : labels)
    {
        if (l != label)
        {
            distractors.push_back(l);
        }
    }
    Rng rng(hash_key(seed, label));
    std::vector<std::string> options{label};
    for (auto idx : rng.sample_without_replacement(distractors.size(), n_choices - 1))
    {
        options.push_back(distractors[idx]);
    }
    rng.shuffle(options);

    std::string question = question_stem;
    char answer = 'A';
    for (std::size_t i = 0; i < options.size(); ++i)
    {
        const char letter = static_cast<char>('A' + i);
        question += '\n';
        question += letter;
        question += ". ";
        question += options[i];
        if (options[i] == label)
        {
            answer = letter;
        }
    }
    question += "\nAnswer with the option's letter from the given choices directly.";
    return {{Role::User, question}, {Role::Assistant, std::string(1, answer)}};
}

Sample format_sample(const Sample &sample, const FormatPolicy &policy)
{
    Sample out = sample;
    for (auto &turn : out.turns)
    {
        if (turn.role != Role::Assistant)
        {
            continue;
        }
        turn.text = strip_decorations(turn.text, policy);
        if (policy.decimal_places)
        {
            turn.text = normalize_numeric(turn.text, *policy.decimal_places);
        }
    }
    out = append_instruction(out, policy);
    if (out.turns != sample.turns)
    {
        // A stored length no longer describes the edited text.
        out.token_length.reset();
    }
    return out;
}

Pool format_pool(const Pool &pool, const FormatPolicy &policy)
{
    validate(policy);
    Pool out(pool.size());
    parallel_for(pool.size(), [&](std::size_t i) { out[i] = format_sample(pool[i], policy); });
    return out;
}

} // namespace corpusforge
