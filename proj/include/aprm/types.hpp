#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace aprm {

struct StepRecord {
    std::size_t index = 0;
    std::vector<double> features;
    std::optional<std::string> text;

    bool operator==(const StepRecord&) const = default;
};

/// Prefix label: steps before `first_error` are correct, the step at `first_error`
/// is wrong and later steps are unlabeled. Absent means every step is correct.
struct GoldLabel {
    std::optional<std::size_t> first_error;

    bool operator==(const GoldLabel&) const = default;
};

struct Trajectory {
    std::string id;
    std::string question;
    std::vector<StepRecord> steps;
    std::optional<GoldLabel> gold;

    std::size_t size() const noexcept { return steps.size(); }
    std::size_t feature_dim() const noexcept { return steps.empty() ? 0 : steps.front().features.size(); }

    bool operator==(const Trajectory&) const = default;
};

using Dataset = std::vector<Trajectory>;

// Throws DataError when the trajectory breaks its structural invariants.
void validate_trajectory(const Trajectory& traj, std::optional<std::size_t> expected_dim = std::nullopt);

} // namespace aprm
