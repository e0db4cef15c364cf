#pragma once

#include "aprm/config.hpp"
#include "aprm/ensemble.hpp"

#include <optional>
#include <span>
#include <vector>

namespace aprm {

struct EnsembleStats {
    std::vector<double> mu;
    std::vector<double> sigma; // population std over heads
};

// Thresholds of the two hard gates plus the correctness threshold that locates the
// first predicted error.
struct GateThresholds {
    double delta = 0.5;
    double delta_pred = 0.95;
    double delta_std = 0.005;

    static GateThresholds from(const Config& c) { return {c.delta, c.delta_pred, c.delta_std}; }
};

struct UncertaintyReport {
    std::vector<double> mu;
    std::vector<double> sigma;
    // Binary entropy of mu per step, diagnostic only; the gate uses the thresholded form.
    std::vector<double> entropy;
    std::optional<std::size_t> first_error_pred;
    std::size_t scan_end = 0;
    bool alea = false;
    bool epis = false;
};

EnsembleStats ensemble_stats(const ForwardOutput& out);

/// Smallest j with mu[j] < delta, strictly.
std::optional<std::size_t> first_error_index(std::span<const double> mu, double delta);

/// Scans steps 0..scan_end, where scan_end is the first predicted error when one exists
/// and the last step otherwise. alea: some max(mu, 1 - mu) < delta_pred; epis: some
/// sigma > delta_std. Both comparisons strict.
UncertaintyReport gates(std::span<const double> mu, std::span<const double> sigma, const GateThresholds& t);

inline bool is_uncertain(const UncertaintyReport& r) { return r.alea || r.epis; }

UncertaintyReport assess(const EnsembleModel& model, const Trajectory& traj, const GateThresholds& t);

} // namespace aprm
