#include "aprm/datagen.hpp"

#include "aprm/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace aprm {

namespace {

constexpr std::uint64_t kTeacherStream = 1;
constexpr std::uint64_t kSampleStream = 2;
constexpr std::uint64_t kSplitStream = 3;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

template <class Fn>
double bisect(Fn&& f, double lo, double hi) {
    // f increasing on [lo, hi]; returns the root of f = 0, or the nearer end.
    if (f(lo) >= 0.0) return lo;
    if (f(hi) <= 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

using json = nlohmann::json;

} // namespace

void GenSpec::validate() const {
    if (count < 1) throw ConfigError("gen: count must be at least 1");
    if (feature_dim < 1) throw ConfigError("gen: feature_dim must be at least 1");
    if (max_steps < 1) throw ConfigError("gen: max_steps must be at least 1");
    if (!std::isfinite(temperature) || temperature <= 0.0) throw ConfigError("gen: temperature must be finite and > 0");
    if (error_rate && !(*error_rate >= 0.0 && *error_rate <= 1.0)) throw ConfigError("gen: error_rate must lie in [0, 1]");
}

double step_correct_probability(double shift, double temperature) {
    // sigmoid(y / tau) = P(tau * l < y) for standard logistic l, so the expectation over g is
    // E_l[Phi(m + tau * l)]. Composite Simpson over the logistic density.
    constexpr int kIntervals = 4000;
    constexpr double kLo = -40.0, kHi = 40.0;
    const double h = (kHi - kLo) / kIntervals;
    double acc = 0.0;
    for (int i = 0; i <= kIntervals; ++i) {
        const double l = kLo + h * i;
        const double s = sigmoid(l);
        const double v = s * (1.0 - s) * normal_cdf(shift + temperature * l);
        acc += v * (i == 0 || i == kIntervals ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return std::clamp(acc * h / 3.0, 0.0, 1.0);
}

double step_error_for_trajectory_rate(double error_rate, std::size_t max_steps) {
    auto rate = [max_steps](double q) {
        double s = 0.0;
        for (std::size_t l = 1; l <= max_steps; ++l) s += 1.0 - std::pow(1.0 - q, static_cast<double>(l));
        return s / static_cast<double>(max_steps);
    };
    return bisect([&](double q) { return rate(q) - error_rate; }, 0.0, 1.0);
}

double solve_feature_shift(const GenSpec& spec) {
    spec.validate();
    if (!spec.error_rate) return 0.0;
    const double q = step_error_for_trajectory_rate(*spec.error_rate, spec.max_steps);
    return bisect([&](double m) { return step_correct_probability(m, spec.temperature) - (1.0 - q); }, -60.0, 60.0);
}

double expected_error_fraction(const GenSpec& spec) {
    const double q = 1.0 - step_correct_probability(solve_feature_shift(spec), spec.temperature);
    double s = 0.0;
    for (std::size_t l = 1; l <= spec.max_steps; ++l) s += 1.0 - std::pow(1.0 - q, static_cast<double>(l));
    return s / static_cast<double>(spec.max_steps);
}

GeneratedWorld generate_world(const GenSpec& spec) {
    spec.validate();
    GeneratedWorld world;
    world.shift = solve_feature_shift(spec);

    auto teacher_rng = stream_rng(spec.seed, kTeacherStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    world.teacher.resize(spec.feature_dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (double& w : world.teacher) {
            w = normal(teacher_rng);
            norm2 += w * w;
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& w : world.teacher) w *= inv;

    auto rng = stream_rng(spec.seed, kSampleStream);
    std::uniform_int_distribution<std::size_t> length(1, spec.max_steps);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    world.data.reserve(spec.count);
    for (std::size_t k = 0; k < spec.count; ++k) {
        Trajectory t;
        t.id = spec.id_prefix + std::to_string(k);
        t.question = "Synthetic problem " + std::to_string(k) + ".";
        const std::size_t len = length(rng);
        std::optional<std::size_t> first_error;
        for (std::size_t j = 0; j < len && !first_error; ++j) {
            StepRecord step;
            step.index = j;
            step.features.resize(spec.feature_dim);
            double score = 0.0;
            for (std::size_t c = 0; c < spec.feature_dim; ++c) {
                step.features[c] = normal(rng) + world.shift * world.teacher[c];
                score += world.teacher[c] * step.features[c];
            }
            if (!(unit(rng) < sigmoid(score / spec.temperature))) first_error = j;
            step.text = "Step " + std::to_string(j + 1) + " of problem " + std::to_string(k) + ".";
            t.steps.push_back(std::move(step));
        }
        t.gold = GoldLabel{first_error};
        world.data.push_back(std::move(t));
    }
    return world;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, double eval_fraction, std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && eval_fraction >= 0.0) || std::abs(train_fraction + eval_fraction - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");
    const std::size_t n = data.size();
    const auto n_eval = static_cast<std::size_t>(std::floor(static_cast<double>(n) * eval_fraction + 1e-9));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = stream_rng(seed, kSplitStream);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> to_eval(n, 0);
    for (std::size_t i = 0; i < n_eval; ++i) to_eval[order[i]] = 1;
    std::pair<Dataset, Dataset> out;
    for (std::size_t i = 0; i < n; ++i) (to_eval[i] ? out.second : out.first).push_back(data[i]);
    return out;
}

std::string genspec_to_json(const GenSpec& spec, std::optional<double> shift) {
    json j;
    j["count"] = spec.count;
    j["feature_dim"] = spec.feature_dim;
    j["max_steps"] = spec.max_steps;
    j["temperature"] = spec.temperature;
    j["error_rate"] = spec.error_rate ? json(*spec.error_rate) : json(nullptr);
    j["seed"] = spec.seed;
    j["id_prefix"] = spec.id_prefix;
    if (shift) j["feature_shift"] = *shift;
    return j.dump(2);
}

GenSpec genspec_from_json(const std::string& text) {
    const auto j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError("genspec: not a JSON object");
    GenSpec s;
    try {
        s.count = j.at("count").get<std::size_t>();
        s.feature_dim = j.at("feature_dim").get<std::size_t>();
        s.max_steps = j.at("max_steps").get<std::size_t>();
        s.temperature = j.at("temperature").get<double>();
        if (j.contains("error_rate") && !j["error_rate"].is_null()) s.error_rate = j["error_rate"].get<double>();
        s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("id_prefix")) s.id_prefix = j["id_prefix"].get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("genspec: ") + e.what());
    }
    s.validate();
    return s;
}

void save_genspec(const std::filesystem::path& path, const GenSpec& spec, std::optional<double> shift) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << genspec_to_json(spec, shift) << '\n';
}

} // namespace aprm
