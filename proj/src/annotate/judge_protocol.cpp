#include "aprm/judge_protocol.hpp"

#include "aprm/errors.hpp"

#include <array>
#include <charconv>

namespace aprm {

namespace {

// Judge instructions, reproduced byte for byte; the problem and the paragraphs follow.
constexpr std::string_view kPromptHead = R"TPL(I will provide a math problem along with a solution. They will be formatted as follows:
[Math Problem]
<math_problem>
...(math problem)...
</math_problem>
[Solution]
<paragraph_1>
...(paragraph 1 of solution)...
</paragraph_1>
...
<paragraph_n>
...(paragraph n of solution)...
</paragraph_n>

Your task is to review each paragraph of the solution in sequence, analyzing,
verifying, and critiquing the reasoning in detail. You need to provide the
analyses and the conclusion in the following format:
<analysis_1>
...(analysis of paragraph 1)...
</analysis_1>
...
<analysis_n>
...(analysis of paragraph n)...
</analysis_n>
<conclusion>
Correct/Incorrect
</conclusion>

* When you analyze each paragraph, you should use proper verification, recalculation, or reflection to indicate whether it is logically and mathematically valid. Please elaborate on the analysis process carefully.
* If an error is detected in any paragraph, you should describe the nature and cause of the error in detail, and suggest how to correct the error or the correct approach. Once a paragraph is found to contain any error, stop further analysis of subsequent paragraphs (as they may depend on the identified error) and directly provide the conclusion of "Incorrect." For instance, given a solution of five paragraphs, if an error is found in the third paragraph, you should reply in the following format:
<analysis_1>
...(analysis of paragraph 1)...
</analysis_1>
<analysis_2>
...(analysis of paragraph 2)...
</analysis_3>
<analysis_3>
...(analysis of paragraph 3; since an error is found here, also provide detailed critique and correction guideline)...
</analysis_3>
<conclusion>
Incorrect
</conclusion>
Note that the analyses of paragraphs 4 and 5 should be skipped as the paragraph 3 has been found to contain an error.
* Respond with your analyses and conclusion directly.
--------------------------------------------------
The following is the math problem and the solution for your task:
[Math Problem]
)TPL";

constexpr std::string_view kPromptBetween = R"TPL(
[Solution]
)TPL";

constexpr std::array<std::string_view, 4> kReservedDelimiters = {"<math_problem>", "</math_problem>", "<paragraph_", "</paragraph_"};

void reject_delimiters(std::string_view text, std::string_view what) {
    for (auto delim : kReservedDelimiters)
        if (text.find(delim) != std::string_view::npos)
            throw DataError(std::string(what) + " contains the reserved delimiter '" + std::string(delim) + "'");
}

enum class TagKind { open_analysis, close_analysis, open_conclusion, close_conclusion };

struct Tag {
    TagKind kind;
    std::size_t index = 0; // analysis number
    std::size_t begin = 0; // offset of '<'
    std::size_t end = 0;   // one past '>'
};

// Recognizes a protocol tag starting at text[pos] == '<'.
std::optional<Tag> match_tag(std::string_view text, std::size_t pos) {
    const auto rest = text.substr(pos);
    if (rest.starts_with("<conclusion>")) return Tag{TagKind::open_conclusion, 0, pos, pos + 12};
    if (rest.starts_with("</conclusion>")) return Tag{TagKind::close_conclusion, 0, pos, pos + 13};
    bool closing = false;
    std::string_view prefix = "<analysis_";
    if (rest.starts_with("</analysis_")) {
        closing = true;
        prefix = "</analysis_";
    } else if (!rest.starts_with(prefix)) {
        return std::nullopt;
    }
    std::size_t i = prefix.size();
    const std::size_t digits_begin = i;
    while (i < rest.size() && i - digits_begin < 9 && rest[i] >= '0' && rest[i] <= '9') ++i;
    if (i == digits_begin || i >= rest.size() || rest[i] != '>') return std::nullopt;
    std::size_t index = 0;
    std::from_chars(rest.data() + digits_begin, rest.data() + i, index);
    return Tag{closing ? TagKind::close_analysis : TagKind::open_analysis, index, pos, pos + i + 1};
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

Conclusion parse_conclusion_word(std::string_view body) {
    auto word = trim(body);
    if (word.ends_with('.')) word.remove_suffix(1);
    if (word == "Correct") return Conclusion::correct;
    if (word == "Incorrect") return Conclusion::incorrect;
    throw JudgeParseError(JudgeParseErrorCode::unknown_conclusion, "conclusion reads '" + std::string(trim(body).substr(0, 64)) + "'");
}

} // namespace

std::string_view to_string(JudgeParseErrorCode code) {
    switch (code) {
    case JudgeParseErrorCode::missing_conclusion: return "missing_conclusion";
    case JudgeParseErrorCode::duplicate_conclusion: return "duplicate_conclusion";
    case JudgeParseErrorCode::unknown_conclusion: return "unknown_conclusion";
    case JudgeParseErrorCode::unclosed_tag: return "unclosed_tag";
    case JudgeParseErrorCode::unmatched_closing_tag: return "unmatched_closing_tag";
    case JudgeParseErrorCode::analyses_not_starting_at_one: return "analyses_not_starting_at_one";
    case JudgeParseErrorCode::non_contiguous_analyses: return "non_contiguous_analyses";
    case JudgeParseErrorCode::correct_count_mismatch: return "correct_count_mismatch";
    case JudgeParseErrorCode::incorrect_count_out_of_range: return "incorrect_count_out_of_range";
    }
    return "unknown";
}

std::optional<std::size_t> JudgeVerdict::first_error() const {
    if (conclusion == Conclusion::correct || analyses.empty()) return std::nullopt;
    return analyses.back().first - 1;
}

std::string build_judge_prompt(std::string_view question, std::span<const std::string> step_texts) {
    if (step_texts.empty()) throw DataError("judge prompt needs at least one step");
    reject_delimiters(question, "question");
    std::string out;
    out.reserve(kPromptHead.size() + kPromptBetween.size() + question.size() + 64 * step_texts.size());
    out += kPromptHead;
    out += "<math_problem>\n";
    out += question;
    out += "\n</math_problem>";
    out += kPromptBetween;
    for (std::size_t i = 0; i < step_texts.size(); ++i) {
        const auto& text = step_texts[i];
        if (text.empty()) throw DataError("step " + std::to_string(i + 1) + " has empty text");
        reject_delimiters(text, "step " + std::to_string(i + 1));
        const auto n = std::to_string(i + 1);
        if (i > 0) out += '\n';
        out += "<paragraph_" + n + ">\n";
        out += text;
        out += "\n</paragraph_" + n + ">";
    }
    return out;
}

JudgeVerdict parse_judge_response(std::string_view text, std::size_t n_steps) {
    JudgeVerdict verdict;
    std::optional<Tag> open; // currently open analysis or conclusion
    std::optional<Conclusion> conclusion;
    for (std::size_t pos = text.find('<'); pos != std::string_view::npos; pos = text.find('<', pos + 1)) {
        const auto tag = match_tag(text, pos);
        if (!tag) continue;
        if (conclusion) {
            // Trailing prose is tolerated; a second verdict is not.
            if (tag->kind == TagKind::open_conclusion)
                throw JudgeParseError(JudgeParseErrorCode::duplicate_conclusion, "second <conclusion> at offset " + std::to_string(pos));
            continue;
        }
        switch (tag->kind) {
        case TagKind::open_analysis:
        case TagKind::open_conclusion:
            if (open)
                throw JudgeParseError(JudgeParseErrorCode::unclosed_tag, "tag opened at offset " + std::to_string(open->begin) + " is never closed");
            open = tag;
            break;
        case TagKind::close_analysis:
            // The closing number is not checked against the opening one: the template's own
            // worked example closes <analysis_2> with </analysis_3>, and judges copy it.
            if (!open || open->kind != TagKind::open_analysis)
                throw JudgeParseError(JudgeParseErrorCode::unmatched_closing_tag,
                                      "</analysis_" + std::to_string(tag->index) + "> without an open analysis");
            verdict.analyses.emplace_back(open->index, std::string(trim(text.substr(open->end, tag->begin - open->end))));
            open.reset();
            break;
        case TagKind::close_conclusion:
            if (!open || open->kind != TagKind::open_conclusion)
                throw JudgeParseError(JudgeParseErrorCode::unmatched_closing_tag, "</conclusion> without <conclusion>");
            conclusion = parse_conclusion_word(text.substr(open->end, tag->begin - open->end));
            open.reset();
            break;
        }
        pos = tag->end - 1;
    }
    if (open) throw JudgeParseError(JudgeParseErrorCode::unclosed_tag, "tag opened at offset " + std::to_string(open->begin) + " is never closed");
    if (!conclusion) throw JudgeParseError(JudgeParseErrorCode::missing_conclusion, "no <conclusion> block");
    verdict.conclusion = *conclusion;

    if (!verdict.analyses.empty() && verdict.analyses.front().first != 1)
        throw JudgeParseError(JudgeParseErrorCode::analyses_not_starting_at_one,
                              "first analysis is " + std::to_string(verdict.analyses.front().first));
    for (std::size_t i = 1; i < verdict.analyses.size(); ++i)
        if (verdict.analyses[i].first != verdict.analyses[i - 1].first + 1)
            throw JudgeParseError(JudgeParseErrorCode::non_contiguous_analyses,
                                  "analysis " + std::to_string(verdict.analyses[i].first) + " follows " +
                                      std::to_string(verdict.analyses[i - 1].first));
    const std::size_t count = verdict.analyses.size();
    if (verdict.conclusion == Conclusion::correct && count != n_steps)
        throw JudgeParseError(JudgeParseErrorCode::correct_count_mismatch,
                              std::to_string(count) + " analyses for " + std::to_string(n_steps) + " paragraphs");
    if (verdict.conclusion == Conclusion::incorrect && (count == 0 || count > n_steps))
        throw JudgeParseError(JudgeParseErrorCode::incorrect_count_out_of_range,
                              std::to_string(count) + " analyses for " + std::to_string(n_steps) + " paragraphs");
    return verdict;
}

std::string format_judge_response(std::size_t n_steps, std::optional<std::size_t> first_error) {
    const std::size_t count = first_error ? *first_error + 1 : n_steps;
    std::string out;
    for (std::size_t i = 1; i <= count; ++i) {
        const auto n = std::to_string(i);
        out += "<analysis_" + n + ">\n";
        out += (first_error && i == count) ? "Paragraph " + n + " contains an error." : "Paragraph " + n + " is correct.";
        out += "\n</analysis_" + n + ">\n";
    }
    out += first_error ? "<conclusion>\nIncorrect\n</conclusion>\n" : "<conclusion>\nCorrect\n</conclusion>\n";
    return out;
}

} // namespace aprm
