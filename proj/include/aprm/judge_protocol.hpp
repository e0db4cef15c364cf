#pragma once

// Prompt and response format of the step-by-step LLM judge. Paragraph and analysis
// indices are 1-based on the wire; everything returned to callers is 0-based.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aprm {

enum class Conclusion { correct, incorrect };

struct JudgeVerdict {
    std::vector<std::pair<std::size_t, std::string>> analyses; // (1-based index, body)
    Conclusion conclusion = Conclusion::correct;

    std::optional<std::size_t> first_error() const;
};

enum class JudgeParseErrorCode {
    missing_conclusion,
    duplicate_conclusion,
    unknown_conclusion,
    unclosed_tag,
    unmatched_closing_tag,
    analyses_not_starting_at_one,
    non_contiguous_analyses,
    correct_count_mismatch,
    incorrect_count_out_of_range,
};

std::string_view to_string(JudgeParseErrorCode code);

class JudgeParseError : public std::runtime_error {
public:
    JudgeParseError(JudgeParseErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}
    JudgeParseErrorCode code() const noexcept { return code_; }

private:
    JudgeParseErrorCode code_;
};

/// Fills the judge template with <math_problem> and <paragraph_i> blocks. Throws
/// DataError on an empty step list, an empty step, or text that contains one of the
/// protocol's own delimiters.
std::string build_judge_prompt(std::string_view question, std::span<const std::string> step_texts);

/// Strict parser for the judge's reply. Content after the closing </conclusion> is
/// ignored except for a second <conclusion>, which is an error.
JudgeVerdict parse_judge_response(std::string_view text, std::size_t n_steps);

/// A well-formed reply for the given label; used by stub endpoints and round-trip tests.
std::string format_judge_response(std::size_t n_steps, std::optional<std::size_t> first_error);

} // namespace aprm
