#include "aprm/uncertainty.hpp"

#include "aprm/errors.hpp"
#include "aprm/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace aprm {

EnsembleStats ensemble_stats(const ForwardOutput& out) {
    EnsembleStats s{std::vector<double>(out.n_steps), std::vector<double>(out.n_steps)};
    if (out.n_heads == 0) throw DataError("ensemble statistics need at least one head");
    kernels::active().column_mean_std(out.probs.data(), out.n_heads, out.n_steps, s.mu.data(), s.sigma.data());
    return s;
}

std::optional<std::size_t> first_error_index(std::span<const double> mu, double delta) {
    for (std::size_t j = 0; j < mu.size(); ++j)
        if (mu[j] < delta) return j;
    return std::nullopt;
}

UncertaintyReport gates(std::span<const double> mu, std::span<const double> sigma, const GateThresholds& t) {
    if (mu.size() != sigma.size()) throw DataError("gates: mu and sigma lengths differ");
    if (mu.empty()) throw DataError("gates: empty trajectory");
    UncertaintyReport r;
    r.mu.assign(mu.begin(), mu.end());
    r.sigma.assign(sigma.begin(), sigma.end());
    r.entropy.resize(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double p = std::clamp(mu[i], kProbEpsilon, 1.0 - kProbEpsilon);
        r.entropy[i] = -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
    }
    r.first_error_pred = first_error_index(mu, t.delta);
    r.scan_end = r.first_error_pred.value_or(mu.size() - 1);
    for (std::size_t i = 0; i <= r.scan_end; ++i) {
        r.alea = r.alea || std::max(mu[i], 1.0 - mu[i]) < t.delta_pred;
        r.epis = r.epis || sigma[i] > t.delta_std;
    }
    return r;
}

UncertaintyReport assess(const EnsembleModel& model, const Trajectory& traj, const GateThresholds& t) {
    const auto stats = ensemble_stats(forward(model, traj));
    return gates(stats.mu, stats.sigma, t);
}

} // namespace aprm
