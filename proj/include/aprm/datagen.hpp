#pragma once

#include "aprm/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aprm {

/// Synthetic linear-teacher world. Step features are x = z + m * w* with z ~ N(0, I) and
/// a hidden unit teacher w*; a step is correct with probability sigmoid(w* . x / tau) and
/// a trajectory stops at its first incorrect step. Lengths are uniform on 1..max_steps.
struct GenSpec {
    std::size_t count = 1000;
    std::size_t feature_dim = 16;
    std::size_t max_steps = 8;
    double temperature = 1.0; // tau; small is a clean halfspace, large is coin flips
    // Target fraction of trajectories containing an error. Absent means m = 0, where
    // every step is wrong with probability 1/2.
    std::optional<double> error_rate;
    std::uint64_t seed = 0;
    std::string id_prefix = "t";

    void validate() const;
    bool operator==(const GenSpec&) const = default;
};

/// P(step correct) = E_g[sigmoid((g + m) / tau)], g ~ N(0, 1).
double step_correct_probability(double shift, double temperature);

// Per-step error probability q with mean_L [1 - (1 - q)^L] = error_rate.
double step_error_for_trajectory_rate(double error_rate, std::size_t max_steps);
// Feature shift m realising the spec's error rate (0 without one).
double solve_feature_shift(const GenSpec& spec);
// Expected fraction of erroneous trajectories under the spec.
double expected_error_fraction(const GenSpec& spec);

struct GeneratedWorld {
    Dataset data;
    std::vector<double> teacher;
    double shift = 0.0;
};

GeneratedWorld generate_world(const GenSpec& spec);
inline Dataset generate(const GenSpec& spec) { return generate_world(spec).data; }

/// Seeded, order-preserving split. eval gets floor(N * eval_fraction) items chosen at
/// random, train keeps the rest. Throws ConfigError unless the fractions sum to 1.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, double eval_fraction, std::uint64_t seed);

std::string genspec_to_json(const GenSpec& spec, std::optional<double> shift = std::nullopt);
GenSpec genspec_from_json(const std::string& text);
void save_genspec(const std::filesystem::path& path, const GenSpec& spec, std::optional<double> shift = std::nullopt);

} // namespace aprm
