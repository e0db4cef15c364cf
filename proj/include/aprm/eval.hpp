#pragma once

#include "aprm/ensemble.hpp"
#include "aprm/types.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aprm {

struct EvalRow {
    std::string id;
    std::optional<std::size_t> gold;
    std::optional<std::size_t> predicted;
    bool hit = false;
};

struct EvalOutcome {
    double acc_error = 0.0;   // exact first-error match rate on erroneous trajectories
    double acc_correct = 0.0; // "no error" rate on error-free trajectories
    double f1 = 0.0;
    std::size_t n_error = 0;
    std::size_t n_correct = 0;
    std::vector<EvalRow> rows;
};

// 2ab / (a + b), 0 when a + b == 0.
double harmonic_f1(double a, double b);

/// First step whose ensemble-mean probability is strictly below delta.
std::optional<std::size_t> predict_first_error(const EnsembleModel& model, const Trajectory& traj, double delta);

/// Aggregates already-made predictions. Throws DataError when a gold label is missing or
/// either the erroneous or the error-free subset is empty.
EvalOutcome score_predictions(std::vector<EvalRow> rows);

EvalOutcome evaluate(const EnsembleModel& model, std::span<const Trajectory> eval_set, double delta, unsigned workers = 1);

void write_eval_rows_csv(std::ostream& out, const EvalOutcome& outcome);
void write_eval_summary_csv(std::ostream& out, const EvalOutcome& outcome);

} // namespace aprm
