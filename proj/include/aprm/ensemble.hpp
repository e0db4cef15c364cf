#pragma once

#include "aprm/config.hpp"
#include "aprm/types.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace aprm {

struct ModelShape {
    std::size_t n_heads = 1;
    std::size_t feature_dim = 1;
    std::size_t trunk_dim = 0; // 0: heads read the features directly

    std::size_t head_in() const noexcept { return trunk_dim == 0 ? feature_dim : trunk_dim; }
    bool operator==(const ModelShape&) const = default;
};

/// Flat parameter storage, also used for gradients. Row-major:
/// trunk_w is trunk_dim x feature_dim, head_w is n_heads x head_in.
struct ParameterSet {
    std::vector<double> trunk_w;
    std::vector<double> trunk_b;
    std::vector<double> head_w;
    std::vector<double> head_b;

    static ParameterSet zeros(const ModelShape& shape);

    std::size_t size() const noexcept { return trunk_w.size() + trunk_b.size() + head_w.size() + head_b.size(); }
    // Visits every coordinate in checkpoint order.
    template <class Fn>
    void for_each(Fn&& fn) {
        for (auto* block : {&trunk_w, &trunk_b, &head_w, &head_b})
            for (double& v : *block) fn(v);
    }
    template <class Fn>
    void for_each(Fn&& fn) const {
        for (const auto* block : {&trunk_w, &trunk_b, &head_w, &head_b})
            for (double v : *block) fn(v);
    }
    bool matches(const ModelShape& shape) const noexcept;

    bool operator==(const ParameterSet&) const = default;
};

using Gradient = ParameterSet;

/// Shared tanh trunk followed by n sigmoid heads. The initial head parameters are
/// snapshotted at construction and anchor the diversity penalty; nothing mutates them.
class EnsembleModel {
public:
    EnsembleModel(ModelShape shape, ParameterSet params, std::vector<double> init_head_w,
                  std::vector<double> init_head_b, std::uint64_t step_count = 0);

    const ModelShape& shape() const noexcept { return shape_; }
    std::size_t n_heads() const noexcept { return shape_.n_heads; }
    const ParameterSet& params() const noexcept { return params_; }
    std::uint64_t step_count() const noexcept { return step_count_; }

    std::span<const double> head_weights(std::size_t h) const;
    double head_bias(std::size_t h) const { return params_.head_b.at(h); }
    std::span<const double> init_head_weights(std::size_t h) const;
    double init_head_bias(std::size_t h) const { return init_head_b_.at(h); }
    const std::vector<double>& init_head_w() const noexcept { return init_head_w_; }
    const std::vector<double>& init_head_b() const noexcept { return init_head_b_; }

    // Direct parameter edits (tests, hand-built models). The snapshot stays as it was.
    std::span<double> mutable_head_weights(std::size_t h);
    void set_head_bias(std::size_t h, double b) { params_.head_b.at(h) = b; }
    ParameterSet& mutable_params() noexcept { return params_; }

    // Euclidean distance of head h's (weights, bias) from its snapshot.
    double head_drift(std::size_t h) const;

    void apply_step(const Gradient& grad, double lr);

    bool operator==(const EnsembleModel&) const = default;

private:
    ModelShape shape_;
    ParameterSet params_;
    std::vector<double> init_head_w_;
    std::vector<double> init_head_b_;
    std::uint64_t step_count_ = 0;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
EnsembleModel init_model(const Config& config, std::mt19937_64& rng);
EnsembleModel init_model(const Config& config);

/// Row-major n_heads x n_steps matrix of per-head step probabilities in (0, 1).
struct ForwardOutput {
    std::size_t n_heads = 0;
    std::size_t n_steps = 0;
    std::vector<double> probs;

    double at(std::size_t h, std::size_t i) const { return probs[h * n_steps + i]; }
    std::span<const double> head_row(std::size_t h) const { return {probs.data() + h * n_steps, n_steps}; }
};

ForwardOutput forward(const EnsembleModel& model, const Trajectory& traj);

inline constexpr double kProbEpsilon = 1e-12;

struct Example {
    std::reference_wrapper<const Trajectory> traj;
    GoldLabel label;
};

/// Ensemble objective for one trajectory: mean over heads of the prefix BCE plus
/// lambda * ||phi_h - phi_h_init||_2. Steps after the labeled prefix never contribute.
double loss(const EnsembleModel& model, const Trajectory& traj, const GoldLabel& label, double lambda);
double batch_loss(const EnsembleModel& model, std::span<const Example> batch, double lambda, unsigned workers = 1);

// lambda / n * sum_h ||phi_h - phi_h_init||_2
double diversity_penalty(const EnsembleModel& model, double lambda);

/// Analytic gradient of batch_loss. Per-example gradients are reduced in index order.
Gradient grad(const EnsembleModel& model, std::span<const Example> batch, double lambda, unsigned workers = 1);

/// p <- p - lr * g for every parameter; throws DivergenceError (model untouched) on a
/// non-finite gradient entry.
void sgd_step(EnsembleModel& model, const Gradient& g, double lr);

} // namespace aprm
