#include "aprm/active.hpp"
#include "aprm/datagen.hpp"
#include "aprm/dataset.hpp"
#include "aprm/errors.hpp"
#include "aprm/eval.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace aprm;

namespace {

std::string serialize(const Dataset& d) {
    std::ostringstream out;
    write_dataset(d, out);
    return out.str();
}

double erroneous_fraction(const Dataset& d) {
    double n = 0;
    for (const auto& t : d) n += t.gold->first_error.has_value();
    return n / static_cast<double>(d.size());
}

EvalOutcome train_and_eval(const GenSpec& spec, std::size_t epochs) {
    const auto data = generate(spec);
    const auto [train, eval] = split(data, 0.8, 0.2, spec.seed);
    Config c;
    c.n_heads = 4;
    c.feature_dim = spec.feature_dim;
    c.batch_size = 32;
    c.lr = 1.0;
    c.seed = spec.seed;
    OracleAnnotator o;
    RunOptions opts;
    opts.retention = Retention::all;
    opts.epochs = epochs;
    const auto model = run_loop(init_model(c), train, o, c, opts).model;
    return evaluate(model, eval, c.delta);
}

} // namespace

TEST_CASE("generation is deterministic and seed-sensitive") {
    GenSpec s;
    s.count = 200;
    s.feature_dim = 5;
    s.error_rate = 0.4;
    s.seed = 7;
    CHECK(serialize(generate(s)) == serialize(generate(s)));
    auto t = s;
    t.seed = 8;
    CHECK(serialize(generate(s)) != serialize(generate(t)));
}

TEST_CASE("gold labels follow the truncation rule") {
    GenSpec s;
    s.count = 500;
    s.feature_dim = 3;
    s.max_steps = 6;
    s.seed = 1;
    for (const auto& t : generate(s)) {
        REQUIRE(t.gold);
        CHECK(t.size() >= 1);
        CHECK(t.size() <= 6);
        if (t.gold->first_error) CHECK(*t.gold->first_error == t.size() - 1);
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(t.steps[i].index == i);
            CHECK(t.steps[i].text);
        }
    }
}

TEST_CASE("symmetric world: erroneous fraction within 3 sigma of the closed form") {
    for (double tau : {0.05, 1.0, 10.0}) {
        GenSpec s;
        s.count = 1000;
        s.feature_dim = 4;
        s.max_steps = 8;
        s.temperature = tau;
        s.seed = 3;
        // Each step is wrong with probability 1/2 by symmetry, so P(error) = mean_L (1 - 2^-L).
        double p = 0;
        for (int l = 1; l <= 8; ++l) p += 1 - std::pow(0.5, l);
        p /= 8;
        CHECK(expected_error_fraction(s) == doctest::Approx(p).epsilon(1e-9));
        const double sd = std::sqrt(p * (1 - p) / 1000);
        CHECK(std::abs(erroneous_fraction(generate(s)) - p) <= 3 * sd);
    }
}

TEST_CASE("target error rate is met") {
    for (double rate : {0.1, 0.5, 0.9}) {
        GenSpec s;
        s.count = 4000;
        s.feature_dim = 8;
        s.temperature = 0.05;
        s.error_rate = rate;
        s.seed = 4;
        CHECK(expected_error_fraction(s) == doctest::Approx(rate).epsilon(1e-6));
        const double sd = std::sqrt(rate * (1 - rate) / 4000);
        CHECK(std::abs(erroneous_fraction(generate(s)) - rate) <= 3 * sd);
    }
}

TEST_CASE("step correctness probability against Monte Carlo") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0, 1);
    for (auto [m, tau] : {std::pair{0.0, 1.0}, std::pair{1.0, 0.05}, std::pair{-0.7, 2.0}, std::pair{2.5, 0.5}}) {
        double acc = 0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) acc += 1 / (1 + std::exp(-(g(rng) + m) / tau));
        CHECK(step_correct_probability(m, tau) == doctest::Approx(acc / n).epsilon(0.005));
    }
    CHECK(step_correct_probability(0.0, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("spec validation and json round-trip") {
    GenSpec s;
    s.count = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = GenSpec{};
    s.temperature = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = GenSpec{};
    s.error_rate = 1.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = GenSpec{};
    s.max_steps = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = GenSpec{};
    s.error_rate = 0.25;
    s.seed = 123456789012345ull;
    CHECK(genspec_from_json(genspec_to_json(s, 0.3)) == s);
    s.error_rate.reset();
    CHECK(genspec_from_json(genspec_to_json(s)) == s);
    CHECK_THROWS_AS(genspec_from_json("[]"), DataError);
    CHECK_THROWS_AS(genspec_from_json("{\"count\": 3}"), DataError);
}

TEST_CASE("split") {
    GenSpec s;
    s.count = 1000;
    s.feature_dim = 2;
    const auto d = generate(s);
    auto [all, none] = split(d, 1.0, 0.0, 1);
    CHECK(all.size() == 1000);
    CHECK(none.empty());
    auto [train, eval] = split(d, 0.8, 0.2, 1);
    CHECK(train.size() == 800);
    CHECK(eval.size() == 200);
    std::set<std::string> ids;
    for (const auto& t : train) ids.insert(t.id);
    for (const auto& t : eval) CHECK(ids.count(t.id) == 0);
    // order preserved: ids are numbered in generation order
    auto num = [](const Trajectory& t) { return std::stoul(t.id.substr(1)); };
    for (std::size_t i = 1; i < train.size(); ++i) CHECK(num(train[i - 1]) < num(train[i]));
    for (std::size_t i = 1; i < eval.size(); ++i) CHECK(num(eval[i - 1]) < num(eval[i]));
    CHECK(split(d, 0.8, 0.2, 1).second == eval);
    CHECK(split(d, 0.8, 0.2, 2).second != eval);
    auto odd = split(Dataset(d.begin(), d.begin() + 7), 0.5, 0.5, 1);
    CHECK(odd.first.size() == 4);
    CHECK(odd.second.size() == 3);
    CHECK_THROWS_AS(split(d, 0.7, 0.2, 1), ConfigError);
}

TEST_CASE("planted truth is learnable when sharp and not when noisy") {
    GenSpec sharp;
    sharp.count = 3000;
    sharp.feature_dim = 8;
    sharp.temperature = 1e-6;
    sharp.error_rate = 0.5;
    sharp.seed = 6;
    const auto good = train_and_eval(sharp, 3);
    MESSAGE("tau=1e-6 f1 " << good.f1);
    CHECK(good.f1 >= 0.95);

    GenSpec noisy = sharp;
    noisy.temperature = 5.0;
    const auto bad = train_and_eval(noisy, 3);
    MESSAGE("tau=5 f1 " << bad.f1);
    CHECK(bad.f1 < 0.75);
}
