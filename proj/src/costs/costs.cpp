#include "aprm/costs.hpp"

#include "aprm/errors.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace aprm {

void CostConstants::validate() const {
    for (double v : {steps_per_trajectory, tokens_per_rollout, tokens_per_critique, rollouts_per_step, ensemble_prompts})
        if (!std::isfinite(v) || v <= 0.0) throw ConfigError("cost constants must be finite and strictly positive");
}

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::act_prm: return "ActPRM";
    case Strategy::math_shepherd: return "MathShepherd";
    case Strategy::consensus_filtering: return "ConsensusFiltering";
    case Strategy::ensemble_prompting: return "EnsemblePrompting";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : kAllStrategies)
        if (to_string(s) == name) return s;
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

double reference_label_count(Strategy s) {
    switch (s) {
    case Strategy::act_prm: return 624'000.0;
    case Strategy::math_shepherd: return 860'000.0;
    case Strategy::consensus_filtering: return 860'000.0;
    case Strategy::ensemble_prompting: return 690'000.0;
    }
    return 0.0;
}

double estimate_cost(const CostQuery& q, const CostConstants& k) {
    if (!(q.n >= 0.0) || !std::isfinite(q.n)) throw ConfigError("label count must be finite and non-negative");
    const double rollout_tokens = q.n * k.steps_per_trajectory * k.rollouts_per_step * k.tokens_per_rollout / 2.0;
    const double judge_tokens = q.n * k.tokens_per_critique;
    switch (q.strategy) {
    case Strategy::act_prm: return judge_tokens;
    case Strategy::math_shepherd: return rollout_tokens;
    case Strategy::consensus_filtering: return rollout_tokens + judge_tokens;
    case Strategy::ensemble_prompting: return judge_tokens * k.ensemble_prompts + q.n * k.steps_per_trajectory;
    }
    return 0.0;
}

double budget_ratio(const CostQuery& a, const CostQuery& b, const CostConstants& k) {
    const double denom = estimate_cost(b, k);
    if (denom == 0.0) throw std::domain_error("budget ratio against a zero-cost reference");
    return estimate_cost(a, k) / denom;
}

std::vector<CostRow> cost_table(const std::vector<CostQuery>& queries, const CostConstants& k) {
    std::vector<CostRow> rows;
    rows.reserve(queries.size());
    for (const auto& q : queries) {
        const double t = estimate_cost(q, k);
        rows.push_back({q.strategy, q.n, t, t > 0.0 ? std::log2(t) : -INFINITY});
    }
    return rows;
}

void write_cost_csv(std::ostream& out, const std::vector<CostRow>& rows) {
    out << "strategy,n,tokens,log2_tokens\n";
    for (const auto& r : rows) {
        out << to_string(r.strategy) << ',' << std::setprecision(17) << r.n << ',' << r.tokens << ',' << std::setprecision(6)
            << std::fixed << r.log2_tokens << std::defaultfloat << '\n';
    }
}

void write_cost_text(std::ostream& out, const std::vector<CostRow>& rows) {
    out << std::left << std::setw(20) << "strategy" << std::right << std::setw(12) << "N" << std::setw(20) << "tokens"
        << std::setw(12) << "log2" << '\n';
    for (const auto& r : rows) {
        out << std::left << std::setw(20) << to_string(r.strategy) << std::right << std::setw(12) << std::fixed
            << std::setprecision(0) << r.n << std::setw(20) << std::scientific << std::setprecision(4) << r.tokens
            << std::setw(12) << std::fixed << std::setprecision(3) << r.log2_tokens << std::defaultfloat << '\n';
    }
}

} // namespace aprm
