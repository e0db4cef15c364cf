#pragma once

#include <array>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace aprm {

/// Corpus statistics behind the token-cost estimates. Defaults are the values measured
/// on one million NuminaMath chain-of-thought trajectories.
struct CostConstants {
    double steps_per_trajectory = 8.845;    // S
    double tokens_per_rollout = 625.098;    // R
    double tokens_per_critique = 1919.860;  // C
    double rollouts_per_step = 8.0;
    double ensemble_prompts = 4.0;

    void validate() const;
};

enum class Strategy { act_prm, math_shepherd, consensus_filtering, ensemble_prompting };

inline constexpr std::array<Strategy, 4> kAllStrategies = {Strategy::act_prm, Strategy::math_shepherd,
                                                           Strategy::consensus_filtering, Strategy::ensemble_prompting};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct CostQuery {
    Strategy strategy = Strategy::act_prm;
    double n = 0.0; // labeled trajectories
};

/// Generated tokens needed to label `q.n` trajectories with the given strategy:
///   ActPRM              N*C
///   MathShepherd        N*S*rollouts*R/2   (a rollout from step i is ~half a full one)
///   ConsensusFiltering  N*S*rollouts*R/2 + N*C
///   EnsemblePrompting   N*C*prompts + N*S (the N*S term pays for step splitting)
double estimate_cost(const CostQuery& q, const CostConstants& k = {});

// estimate_cost(a) / estimate_cost(b); throws std::domain_error when b costs nothing.
double budget_ratio(const CostQuery& a, const CostQuery& b, const CostConstants& k = {});

// Labeled-set sizes of the published PRM training sets each strategy produced.
double reference_label_count(Strategy s);

struct CostRow {
    Strategy strategy;
    double n;
    double tokens;
    double log2_tokens;
};

std::vector<CostRow> cost_table(const std::vector<CostQuery>& queries, const CostConstants& k = {});
void write_cost_csv(std::ostream& out, const std::vector<CostRow>& rows);
void write_cost_text(std::ostream& out, const std::vector<CostRow>& rows);

} // namespace aprm
