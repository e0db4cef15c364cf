#include "aprm/ensemble.hpp"

#include "aprm/errors.hpp"
#include "aprm/kernels.hpp"
#include "aprm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aprm {

namespace {

// Largest double below 1; keeps the sigmoid strictly inside (0, 1) for any finite logit.
constexpr double kOneMinusUlp = 1.0 - std::numeric_limits<double>::epsilon() / 2;

double sigmoid(double z) {
    double p;
    if (z >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    return std::clamp(p, std::numeric_limits<double>::min(), kOneMinusUlp);
}

std::size_t labeled_end(const Trajectory& traj, const GoldLabel& label) {
    if (label.first_error) {
        if (*label.first_error >= traj.size()) throw DataError("label first_error out of range for '" + traj.id + "'");
        return *label.first_error;
    }
    return traj.size() - 1;
}

void check_dims(const EnsembleModel& model, const Trajectory& traj) {
    if (traj.steps.empty()) throw DataError("trajectory '" + traj.id + "' has no steps");
    for (const auto& s : traj.steps)
        if (s.features.size() != model.shape().feature_dim)
            throw DataError("feature dimension " + std::to_string(s.features.size()) + " of '" + traj.id +
                            "' does not match model dimension " + std::to_string(model.shape().feature_dim));
}

// Hidden representation of one step: tanh(U x + c), or x itself without a trunk.
void trunk_forward(const EnsembleModel& model, std::span<const double> x, std::vector<double>& hidden) {
    const auto& shape = model.shape();
    if (shape.trunk_dim == 0) {
        hidden.assign(x.begin(), x.end());
        return;
    }
    hidden.resize(shape.trunk_dim);
    const auto& p = model.params();
    kernels::active().gemv(p.trunk_w.data(), p.trunk_b.data(), x.data(), hidden.data(), shape.trunk_dim, shape.feature_dim);
    for (double& h : hidden) h = std::tanh(h);
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

// Adds the gradient of one example's BCE terms (without the diversity term and without
// the 1/|batch| factor) into `g`.
void accumulate_example_grad(const EnsembleModel& model, const Trajectory& traj, const GoldLabel& label, Gradient& g) {
    const auto& shape = model.shape();
    const auto& p = model.params();
    const std::size_t n = shape.n_heads;
    const std::size_t in = shape.head_in();
    const std::size_t k = labeled_end(traj, label);
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(k + 1));

    std::vector<double> hidden;
    std::vector<double> logits(n);
    std::vector<double> dz(n);
    std::vector<double> dhidden(in);
    for (std::size_t i = 0; i <= k; ++i) {
        const auto& x = traj.steps[i].features;
        trunk_forward(model, x, hidden);
        kernels::active().gemv(p.head_w.data(), p.head_b.data(), hidden.data(), logits.data(), n, in);
        const double y = (label.first_error && i == *label.first_error) ? 0.0 : 1.0;
        for (std::size_t h = 0; h < n; ++h) {
            const double prob = sigmoid(logits[h]);
            // The clamp before the logarithm is flat outside [eps, 1 - eps].
            const bool clamped = prob < kProbEpsilon || prob > 1.0 - kProbEpsilon;
            dz[h] = clamped ? 0.0 : (prob - y) * scale;
        }
        for (std::size_t h = 0; h < n; ++h) {
            if (dz[h] == 0.0) continue;
            kernels::active().axpy(dz[h], hidden.data(), g.head_w.data() + h * in, in);
            g.head_b[h] += dz[h];
        }
        if (shape.trunk_dim == 0) continue;
        std::fill(dhidden.begin(), dhidden.end(), 0.0);
        for (std::size_t h = 0; h < n; ++h)
            if (dz[h] != 0.0) kernels::active().axpy(dz[h], p.head_w.data() + h * in, dhidden.data(), in);
        for (std::size_t j = 0; j < in; ++j) {
            const double dpre = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
            if (dpre == 0.0) continue;
            kernels::active().axpy(dpre, x.data(), g.trunk_w.data() + j * shape.feature_dim, shape.feature_dim);
            g.trunk_b[j] += dpre;
        }
    }
}

} // namespace

ParameterSet ParameterSet::zeros(const ModelShape& shape) {
    ParameterSet p;
    p.trunk_w.assign(shape.trunk_dim * shape.feature_dim, 0.0);
    p.trunk_b.assign(shape.trunk_dim, 0.0);
    p.head_w.assign(shape.n_heads * shape.head_in(), 0.0);
    p.head_b.assign(shape.n_heads, 0.0);
    return p;
}

bool ParameterSet::matches(const ModelShape& shape) const noexcept {
    return trunk_w.size() == shape.trunk_dim * shape.feature_dim && trunk_b.size() == shape.trunk_dim &&
           head_w.size() == shape.n_heads * shape.head_in() && head_b.size() == shape.n_heads;
}

EnsembleModel::EnsembleModel(ModelShape shape, ParameterSet params, std::vector<double> init_head_w,
                             std::vector<double> init_head_b, std::uint64_t step_count)
    : shape_(shape), params_(std::move(params)), init_head_w_(std::move(init_head_w)),
      init_head_b_(std::move(init_head_b)), step_count_(step_count) {
    if (shape_.n_heads == 0 || shape_.feature_dim == 0) throw ConfigError("model needs at least one head and one feature");
    if (!params_.matches(shape_)) throw ConfigError("parameter blocks do not match the model shape");
    if (init_head_w_.size() != params_.head_w.size() || init_head_b_.size() != params_.head_b.size())
        throw ConfigError("head snapshot does not match the model shape");
}

std::span<const double> EnsembleModel::head_weights(std::size_t h) const {
    const std::size_t in = shape_.head_in();
    return std::span<const double>(params_.head_w).subspan(h * in, in);
}

std::span<const double> EnsembleModel::init_head_weights(std::size_t h) const {
    const std::size_t in = shape_.head_in();
    return std::span<const double>(init_head_w_).subspan(h * in, in);
}

std::span<double> EnsembleModel::mutable_head_weights(std::size_t h) {
    const std::size_t in = shape_.head_in();
    return std::span<double>(params_.head_w).subspan(h * in, in);
}

double EnsembleModel::head_drift(std::size_t h) const {
    const double db = params_.head_b.at(h) - init_head_b_.at(h);
    return std::sqrt(kernels::squared_distance(head_weights(h), init_head_weights(h)) + db * db);
}

void EnsembleModel::apply_step(const Gradient& g, double lr) {
    if (!g.matches(shape_)) throw ConfigError("gradient shape does not match the model");
    bool finite = true;
    g.for_each([&](double v) { finite = finite && std::isfinite(v); });
    if (!finite) throw DivergenceError("non-finite gradient at step " + std::to_string(step_count_));
    kernels::axpy(-lr, g.trunk_w, params_.trunk_w);
    kernels::axpy(-lr, g.trunk_b, params_.trunk_b);
    kernels::axpy(-lr, g.head_w, params_.head_w);
    kernels::axpy(-lr, g.head_b, params_.head_b);
    ++step_count_;
}

EnsembleModel init_model(const Config& config, std::mt19937_64& rng) {
    config.validate();
    const ModelShape shape{config.n_heads, config.feature_dim, config.trunk_dim};
    auto params = ParameterSet::zeros(shape);
    auto fill_uniform = [&rng](std::vector<double>& v, std::size_t fan_in) {
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& w : v) w = dist(rng);
    };
    fill_uniform(params.trunk_w, shape.feature_dim);
    fill_uniform(params.head_w, shape.head_in());
    auto init_w = params.head_w;
    auto init_b = params.head_b;
    return EnsembleModel(shape, std::move(params), std::move(init_w), std::move(init_b));
}

EnsembleModel init_model(const Config& config) {
    std::mt19937_64 rng(config.seed);
    return init_model(config, rng);
}

namespace {

ForwardOutput forward_steps(const EnsembleModel& model, const Trajectory& traj, std::size_t steps) {
    const auto& shape = model.shape();
    const std::size_t n = shape.n_heads;
    ForwardOutput out{n, steps, std::vector<double>(n * steps)};
    std::vector<double> hidden;
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < steps; ++i) {
        trunk_forward(model, traj.steps[i].features, hidden);
        kernels::active().gemv(model.params().head_w.data(), model.params().head_b.data(), hidden.data(), logits.data(), n,
                               shape.head_in());
        for (std::size_t h = 0; h < n; ++h) out.probs[h * steps + i] = sigmoid(logits[h]);
    }
    return out;
}

} // namespace

ForwardOutput forward(const EnsembleModel& model, const Trajectory& traj) {
    check_dims(model, traj);
    return forward_steps(model, traj, traj.size());
}

double diversity_penalty(const EnsembleModel& model, double lambda) {
    double s = 0.0;
    for (std::size_t h = 0; h < model.n_heads(); ++h) s += model.head_drift(h);
    return lambda * s / static_cast<double>(model.n_heads());
}

double loss(const EnsembleModel& model, const Trajectory& traj, const GoldLabel& label, double lambda) {
    check_dims(model, traj);
    const std::size_t k = labeled_end(traj, label);
    // Only the labeled prefix is scored, so later steps cannot leak into the objective.
    const auto out = forward_steps(model, traj, k + 1);
    const std::size_t n = model.n_heads();
    double total = 0.0;
    for (std::size_t h = 0; h < n; ++h) {
        double bce = 0.0;
        for (std::size_t i = 0; i <= k; ++i) {
            const double p = clamp_prob(out.at(h, i));
            const bool wrong = label.first_error && i == *label.first_error;
            bce -= wrong ? std::log(1.0 - p) : std::log(p);
        }
        total += bce / static_cast<double>(k + 1);
    }
    return total / static_cast<double>(n) + diversity_penalty(model, lambda);
}

double batch_loss(const EnsembleModel& model, std::span<const Example> batch, double lambda, unsigned workers) {
    if (batch.empty()) throw DataError("loss over an empty batch");
    std::vector<double> per(batch.size());
    parallel_for(batch.size(), workers, [&](std::size_t i) { per[i] = loss(model, batch[i].traj.get(), batch[i].label, lambda); });
    double s = 0.0;
    for (double v : per) s += v;
    return s / static_cast<double>(batch.size());
}

Gradient grad(const EnsembleModel& model, std::span<const Example> batch, double lambda, unsigned workers) {
    if (batch.empty()) throw DataError("gradient of an empty batch");
    const auto& shape = model.shape();
    for (const auto& ex : batch) check_dims(model, ex.traj.get());

    std::vector<Gradient> partial(batch.size(), Gradient::zeros(shape));
    parallel_for(batch.size(), workers,
                 [&](std::size_t i) { accumulate_example_grad(model, batch[i].traj.get(), batch[i].label, partial[i]); });

    Gradient g = Gradient::zeros(shape);
    for (const auto& part : partial) {
        kernels::axpy(1.0, part.trunk_w, g.trunk_w);
        kernels::axpy(1.0, part.trunk_b, g.trunk_b);
        kernels::axpy(1.0, part.head_w, g.head_w);
        kernels::axpy(1.0, part.head_b, g.head_b);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    g.for_each([inv_b](double& v) { v *= inv_b; });

    // Subgradient of lambda/n * ||phi_h - phi_h_init||, zero at the kink.
    if (lambda != 0.0) {
        const std::size_t in = shape.head_in();
        const double coef = lambda / static_cast<double>(shape.n_heads);
        for (std::size_t h = 0; h < shape.n_heads; ++h) {
            const double norm = model.head_drift(h);
            if (norm < 1e-12) continue;
            const auto w = model.head_weights(h);
            const auto w0 = model.init_head_weights(h);
            for (std::size_t j = 0; j < in; ++j) g.head_w[h * in + j] += coef * (w[j] - w0[j]) / norm;
            g.head_b[h] += coef * (model.head_bias(h) - model.init_head_bias(h)) / norm;
        }
    }
    return g;
}

void sgd_step(EnsembleModel& model, const Gradient& g, double lr) { model.apply_step(g, lr); }

} // namespace aprm
