#include "aprm/ensemble.hpp"
#include "aprm/errors.hpp"

#include "../support/gen.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace aprm;

namespace {

// Straight-line re-implementation of the objective from the parameter blocks.
double oracle_loss(const EnsembleModel& m, const Trajectory& t, const GoldLabel& y, double lambda) {
    const auto& s = m.shape();
    const auto& p = m.params();
    const std::size_t k = y.first_error ? *y.first_error : t.size() - 1;
    double total = 0;
    for (std::size_t h = 0; h < s.n_heads; ++h) {
        double bce = 0;
        for (std::size_t i = 0; i <= k; ++i) {
            std::vector<double> z = t.steps[i].features;
            if (s.trunk_dim > 0) {
                std::vector<double> hid(s.trunk_dim);
                for (std::size_t r = 0; r < s.trunk_dim; ++r) {
                    double a = p.trunk_b[r];
                    for (std::size_t c = 0; c < s.feature_dim; ++c) a += p.trunk_w[r * s.feature_dim + c] * z[c];
                    hid[r] = std::tanh(a);
                }
                z = hid;
            }
            double logit = p.head_b[h];
            for (std::size_t c = 0; c < z.size(); ++c) logit += p.head_w[h * z.size() + c] * z[c];
            double prob = 1 / (1 + std::exp(-logit));
            prob = std::min(std::max(prob, 1e-12), 1 - 1e-12);
            const double target = (y.first_error && i == k) ? 0.0 : 1.0;
            bce -= target * std::log(prob) + (1 - target) * std::log(1 - prob);
        }
        double d2 = 0;
        const std::size_t in = s.head_in();
        for (std::size_t c = 0; c < in; ++c) {
            const double d = p.head_w[h * in + c] - m.init_head_w()[h * in + c];
            d2 += d * d;
        }
        const double db = p.head_b[h] - m.init_head_b()[h];
        d2 += db * db;
        total += bce / static_cast<double>(k + 1) + lambda * std::sqrt(d2);
    }
    return total / static_cast<double>(s.n_heads);
}

double mean_loss(const EnsembleModel& m, const std::vector<Example>& b, double lambda) {
    double s = 0;
    for (const auto& e : b) s += loss(m, e.traj.get(), e.label, lambda);
    return s / static_cast<double>(b.size());
}

std::vector<double> flatten(const ParameterSet& p) {
    std::vector<double> v;
    p.for_each([&](double x) { v.push_back(x); });
    return v;
}

} // namespace

TEST_CASE("init is seeded, bounded and gives distinct heads") {
    Config c;
    c.n_heads = 32;
    c.feature_dim = 6;
    c.trunk_dim = 5;
    c.seed = 77;
    const auto a = init_model(c);
    CHECK(a == init_model(c));
    const double wt = 1 / std::sqrt(6.0), wh = 1 / std::sqrt(5.0);
    for (double v : a.params().trunk_w) CHECK(std::abs(v) <= wt);
    for (double v : a.params().head_w) CHECK(std::abs(v) <= wh);
    for (double v : a.params().trunk_b) CHECK(v == 0.0);
    for (double v : a.params().head_b) CHECK(v == 0.0);
    std::set<std::vector<double>> heads;
    for (std::size_t h = 0; h < 32; ++h) heads.emplace(a.head_weights(h).begin(), a.head_weights(h).end());
    CHECK(heads.size() == 32);
    CHECK(a.init_head_w() == a.params().head_w);
    c.trunk_dim = 0;
    CHECK(init_model(c).shape().head_in() == 6);
}

TEST_CASE("forward: zero model and a hand-set head") {
    ModelShape s{1, 2, 0};
    EnsembleModel zero(s, ParameterSet::zeros(s), {0, 0}, {0});
    Trajectory t;
    t.id = "x";
    t.steps.push_back({0, {2.0, -1.0}, {}});
    CHECK(forward(zero, t).at(0, 0) == 0.5);
    auto p = ParameterSet::zeros(s);
    p.head_w = {1.0, 0.0};
    EnsembleModel one(s, p, {0, 0}, {0});
    CHECK(forward(one, t).at(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-15));
    t.steps[0].features = {1.0};
    CHECK_THROWS_AS(forward(one, t), DataError);
}

TEST_CASE("forward outputs stay inside (0, 1) and are per-trajectory") {
    std::mt19937_64 rng(4);
    auto m = testgen::drifted_model(rng, 4, 3, 2);
    m.mutable_params().head_b = {800, -800, 40, -40};
    const auto t = testgen::trajectory(rng, 3, 4, "a", 50.0);
    for (double p : forward(m, t).probs) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
    const auto u = testgen::trajectory(rng, 3, 2, "b");
    const auto fu = forward(m, u).probs;
    CHECK(forward(m, t).probs == forward(m, t).probs);
    CHECK(forward(m, u).probs == fu);
}

TEST_CASE("loss: worked values") {
    ModelShape s{1, 2, 0};
    EnsembleModel zero(s, ParameterSet::zeros(s), {0, 0}, {0});
    std::mt19937_64 rng(5);
    const auto t = testgen::trajectory(rng, 2, 4, "a");
    CHECK(loss(zero, t, GoldLabel{}, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(loss(zero, t, GoldLabel{2}, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    Config c;
    c.n_heads = 3;
    c.feature_dim = 2;
    const auto fresh = init_model(c);
    CHECK(diversity_penalty(fresh, 0.7) == 0.0);
    CHECK(loss(fresh, t, GoldLabel{}, 0.7) == loss(fresh, t, GoldLabel{}, 0.0));
}

TEST_CASE("loss matches the scalar oracle on random instances") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = testgen::pick(rng, 1, 5), d = testgen::pick(rng, 1, 6), tr = testgen::pick(rng, 0, 3);
        const auto m = testgen::drifted_model(rng, n, d, tr);
        const std::size_t len = testgen::pick(rng, 1, 6);
        const auto t = testgen::trajectory(rng, d, len, "a");
        const auto y = testgen::label(rng, len);
        const double lambda = testgen::uniform(rng, 0, 0.3);
        CHECK(loss(m, t, y, lambda) == doctest::Approx(oracle_loss(m, t, y, lambda)).epsilon(1e-10));
    }
}

TEST_CASE("diversity penalty equals lambda times mean snapshot distance") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        auto m = testgen::drifted_model(rng, testgen::pick(rng, 1, 6), testgen::pick(rng, 1, 5), testgen::pick(rng, 0, 2));
        const std::size_t in = m.shape().head_in();
        double s = 0;
        for (std::size_t h = 0; h < m.n_heads(); ++h) {
            double d2 = 0;
            for (std::size_t c = 0; c < in; ++c) d2 += std::pow(m.params().head_w[h * in + c] - m.init_head_w()[h * in + c], 2);
            d2 += std::pow(m.params().head_b[h] - m.init_head_b()[h], 2);
            s += std::sqrt(d2);
        }
        CHECK(diversity_penalty(m, 0.25) == doctest::Approx(0.25 * s / static_cast<double>(m.n_heads())).epsilon(1e-13));
    }
}

TEST_CASE("gradient matches central differences") {
    std::mt19937_64 rng(8);
    const std::size_t head_counts[] = {1, 2, 4, 8};
    for (int rep = 0; rep < 24; ++rep) {
        const std::size_t n = head_counts[rep % 4], d = testgen::pick(rng, 1, 8), tr = testgen::pick(rng, 0, 4);
        auto m = testgen::drifted_model(rng, n, d, tr);
        const double lambda = rep % 3 == 0 ? 0.0 : testgen::uniform(rng, 0.01, 0.2);
        std::vector<Trajectory> ts;
        for (std::size_t i = 0, b = testgen::pick(rng, 1, 4); i < b; ++i)
            ts.push_back(testgen::trajectory(rng, d, testgen::pick(rng, 1, 5), "t" + std::to_string(i)));
        std::vector<Example> batch;
        for (const auto& t : ts) batch.push_back({std::cref(t), testgen::label(rng, t.size())});

        const auto g = flatten(grad(m, batch, lambda));
        std::vector<double*> coords;
        m.mutable_params().for_each([&](double& v) { coords.push_back(&v); });
        REQUIRE(coords.size() == g.size());
        const double h = 1e-5;
        for (std::size_t i = 0; i < coords.size(); ++i) {
            const double keep = *coords[i];
            *coords[i] = keep + h;
            const double up = mean_loss(m, batch, lambda);
            *coords[i] = keep - h;
            const double down = mean_loss(m, batch, lambda);
            *coords[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double err = std::abs(fd - g[i]);
            INFO("rep " << rep << " coord " << i << " analytic " << g[i] << " fd " << fd);
            CHECK((err <= 1e-6 || err <= 1e-4 * std::abs(fd)));
        }
    }
}

TEST_CASE("gradient edge cases") {
    Config c;
    c.n_heads = 3;
    c.feature_dim = 2;
    const auto fresh = init_model(c);
    std::mt19937_64 rng(9);
    const auto t = testgen::trajectory(rng, 2, 3, "a");
    const std::vector<Example> one{{std::cref(t), GoldLabel{}}};
    // At the snapshot the diversity subgradient is exactly zero.
    CHECK(grad(fresh, one, 0.0) == grad(fresh, one, 5.0));

    // Saturated, correct predictions give a vanishing BCE gradient.
    ModelShape s{1, 2, 0};
    auto p = ParameterSet::zeros(s);
    p.head_b = {60.0};
    EnsembleModel sat(s, p, {0, 0}, {60.0});
    for (double v : flatten(grad(sat, one, 0.0))) CHECK(std::abs(v) < 1e-20);

    CHECK_THROWS_AS(grad(fresh, std::vector<Example>{}, 0.0), DataError);
    CHECK_THROWS_AS(batch_loss(fresh, std::vector<Example>{}, 0.0), DataError);
}

TEST_CASE("steps after the first error never touch loss or gradient") {
    std::mt19937_64 rng(10);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t d = testgen::pick(rng, 1, 5);
        const auto m = testgen::drifted_model(rng, testgen::pick(rng, 1, 4), d, testgen::pick(rng, 0, 3));
        const std::size_t len = testgen::pick(rng, 2, 6);
        auto t = testgen::trajectory(rng, d, len, "a");
        const GoldLabel y{testgen::pick(rng, 0, len - 2)};
        const double l0 = loss(m, t, y, 0.1);
        const auto g0 = grad(m, std::vector<Example>{{std::cref(t), y}}, 0.1);
        for (std::size_t j = *y.first_error + 1; j < len; ++j)
            for (double& x : t.steps[j].features) x = testgen::uniform(rng, -1e6, 1e6);
        CHECK(loss(m, t, y, 0.1) == l0);
        CHECK(grad(m, std::vector<Example>{{std::cref(t), y}}, 0.1) == g0);
    }
}

TEST_CASE("gradient is bitwise independent of the worker count") {
    std::mt19937_64 rng(12);
    const auto m = testgen::drifted_model(rng, 8, 6, 3);
    const auto data = testgen::dataset(rng, 97, 6, 6);
    std::vector<Example> batch;
    for (const auto& t : data) batch.push_back({std::cref(t), *t.gold});
    const auto g1 = grad(m, batch, 0.05, 1);
    for (unsigned w : {2u, 3u, 8u}) {
        CHECK(grad(m, batch, 0.05, w) == g1);
        CHECK(batch_loss(m, batch, 0.05, w) == batch_loss(m, batch, 0.05, 1));
    }
}

TEST_CASE("sgd_step") {
    std::mt19937_64 rng(13);
    auto m = testgen::drifted_model(rng, 2, 3, 2);
    const auto before = m;
    sgd_step(m, Gradient::zeros(m.shape()), 0.1);
    CHECK(m.params() == before.params());
    CHECK(m.step_count() == 1);

    const auto t = testgen::trajectory(rng, 3, 4, "a");
    const std::vector<Example> one{{std::cref(t), GoldLabel{1}}};
    const auto g = grad(m, one, 0.05);
    auto frozen = m;
    sgd_step(frozen, g, 0.0);
    CHECK(frozen.params() == m.params());

    for (int rep = 0; rep < 20; ++rep) {
        auto mm = testgen::drifted_model(rng, 3, 3, 2);
        const auto tt = testgen::trajectory(rng, 3, 4, "b");
        const std::vector<Example> ex{{std::cref(tt), testgen::label(rng, 4)}};
        const double l0 = batch_loss(mm, ex, 0.05);
        const auto snap = mm.init_head_w();
        sgd_step(mm, grad(mm, ex, 0.05), 1e-3);
        CHECK(batch_loss(mm, ex, 0.05) < l0);
        CHECK(mm.init_head_w() == snap);
    }

    auto bad = g;
    bad.head_w[0] = std::numeric_limits<double>::quiet_NaN();
    const auto keep = m;
    CHECK_THROWS_AS(sgd_step(m, bad, 0.1), DivergenceError);
    CHECK(m == keep);
}
