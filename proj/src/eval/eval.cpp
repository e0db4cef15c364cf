#include "aprm/eval.hpp"

#include "aprm/errors.hpp"
#include "aprm/parallel.hpp"
#include "aprm/uncertainty.hpp"

#include <iomanip>
#include <ostream>

namespace aprm {

double harmonic_f1(double a, double b) {
    const double s = a + b;
    return s > 0.0 ? 2.0 * a * b / s : 0.0;
}

std::optional<std::size_t> predict_first_error(const EnsembleModel& model, const Trajectory& traj, double delta) {
    const auto stats = ensemble_stats(forward(model, traj));
    return first_error_index(stats.mu, delta);
}

EvalOutcome score_predictions(std::vector<EvalRow> rows) {
    EvalOutcome out;
    std::size_t hit_error = 0;
    std::size_t hit_correct = 0;
    for (auto& r : rows) {
        r.hit = r.predicted == r.gold;
        if (r.gold) {
            ++out.n_error;
            hit_error += r.hit;
        } else {
            ++out.n_correct;
            hit_correct += r.hit;
        }
    }
    if (out.n_error == 0) throw DataError("evaluation set has no erroneous trajectory");
    if (out.n_correct == 0) throw DataError("evaluation set has no error-free trajectory");
    out.acc_error = static_cast<double>(hit_error) / static_cast<double>(out.n_error);
    out.acc_correct = static_cast<double>(hit_correct) / static_cast<double>(out.n_correct);
    out.f1 = harmonic_f1(out.acc_error, out.acc_correct);
    out.rows = std::move(rows);
    return out;
}

EvalOutcome evaluate(const EnsembleModel& model, std::span<const Trajectory> eval_set, double delta, unsigned workers) {
    std::vector<EvalRow> rows(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const auto& t = eval_set[i];
        if (!t.gold) throw DataError("evaluation trajectory '" + t.id + "' has no gold label");
        rows[i].id = t.id;
        rows[i].gold = t.gold->first_error;
    }
    parallel_for(eval_set.size(), workers,
                 [&](std::size_t i) { rows[i].predicted = predict_first_error(model, eval_set[i], delta); });
    return score_predictions(std::move(rows));
}

namespace {
void write_index(std::ostream& out, const std::optional<std::size_t>& v) {
    if (v)
        out << *v;
    else
        out << "none";
}
} // namespace

void write_eval_rows_csv(std::ostream& out, const EvalOutcome& outcome) {
    out << "id,gold,predicted,hit\n";
    for (const auto& r : outcome.rows) {
        out << r.id << ',';
        write_index(out, r.gold);
        out << ',';
        write_index(out, r.predicted);
        out << ',' << (r.hit ? 1 : 0) << '\n';
    }
}

void write_eval_summary_csv(std::ostream& out, const EvalOutcome& outcome) {
    out << "n_error,n_correct,acc_error,acc_correct,f1\n"
        << outcome.n_error << ',' << outcome.n_correct << ',' << std::setprecision(17) << outcome.acc_error << ','
        << outcome.acc_correct << ',' << outcome.f1 << '\n';
}

} // namespace aprm
