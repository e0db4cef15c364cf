#pragma once

#include "aprm/annotate.hpp"
#include "aprm/config.hpp"
#include "aprm/costs.hpp"
#include "aprm/ensemble.hpp"
#include "aprm/uncertainty.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aprm {

// One batch of the loop. `loss` is the pre-update batch loss on the labeled subset, NaN
// when nothing was labeled and no step was taken.
struct LedgerRow {
    std::size_t batch = 0;
    std::size_t seen = 0;
    std::size_t retained = 0;
    std::size_t annotated = 0;
    double tokens_spent = 0.0;
    double loss = 0.0;
};

/// Append-only account of what the loop looked at and paid for.
class BudgetLedger {
public:
    explicit BudgetLedger(double tokens_per_label = CostConstants{}.tokens_per_critique);

    // Throws std::logic_error unless annotated <= retained <= seen.
    void record(std::size_t batch, std::size_t seen, std::size_t retained, std::size_t annotated, double loss);

    std::size_t seen() const noexcept { return seen_; }
    std::size_t retained() const noexcept { return retained_; }
    std::size_t annotated() const noexcept { return annotated_; }
    double tokens_spent() const noexcept { return static_cast<double>(annotated_) * tokens_per_label_; }
    double tokens_per_label() const noexcept { return tokens_per_label_; }
    const std::vector<LedgerRow>& history() const noexcept { return history_; }

    // annotated / pool_size: the share of the pool a full-data pass would have labeled.
    double normalized_budget(std::size_t pool_size) const;

    bool operator==(const BudgetLedger&) const;

private:
    double tokens_per_label_;
    std::size_t seen_ = 0;
    std::size_t retained_ = 0;
    std::size_t annotated_ = 0;
    std::vector<LedgerRow> history_;
};

void write_ledger_csv(std::ostream& out, const BudgetLedger& ledger);
BudgetLedger read_ledger_csv(std::istream& in, double tokens_per_label = CostConstants{}.tokens_per_critique);
void save_ledger(const std::filesystem::path& path, const BudgetLedger& ledger);
BudgetLedger load_ledger(const std::filesystem::path& path, double tokens_per_label = CostConstants{}.tokens_per_critique);

struct SelectionResult {
    std::vector<std::string> retained;
    std::vector<std::string> skipped;
    std::map<std::string, UncertaintyReport> reports;
    std::vector<std::size_t> retained_positions; // indices into the input batch, ascending

    double retained_fraction() const;
};

/// Forwards every trajectory and keeps those for which either gate fires.
SelectionResult select_batch(const EnsembleModel& model, std::span<const Trajectory> batch, const GateThresholds& t,
                             unsigned workers = 1);
inline SelectionResult select_batch(const EnsembleModel& model, std::span<const Trajectory> batch, const Config& c,
                                    unsigned workers = 1) {
    return select_batch(model, batch, GateThresholds::from(c), workers);
}

/// Pure selection pass over a whole pool with a frozen model.
SelectionResult run_one_shot_filter(const EnsembleModel& model, std::span<const Trajectory> pool,
                                    const GateThresholds& t, unsigned workers = 1);

enum class Retention { uncertainty, random, all };

struct RunOptions {
    Retention retention = Retention::uncertainty;
    double budget_fraction = 1.0; // coin-flip probability, random retention only
    unsigned workers = 1;
    std::size_t epochs = 1;
    std::size_t start_batch = 0; // global batch index to resume from
};

struct RunResult {
    EnsembleModel model;
    BudgetLedger ledger;
    bool completed = true;
    std::size_t next_batch = 0;
    std::string abort_reason;
};

/// Single pass (per epoch) over the seeded shuffle of `pool` in batches of B: select,
/// label the retained trajectories, take one SGD step on the labeled ones. Trajectories
/// the annotator fails on are dropped. When the annotator throws AnnotatorError the run
/// stops before that batch and returns completed = false with next_batch set, so
/// passing the returned model, ledger and next_batch back in resumes it exactly.
RunResult run_loop(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                   const RunOptions& options, BudgetLedger ledger = BudgetLedger{});

RunResult run_pool_based(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                         unsigned workers = 1);
RunResult run_random_baseline(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                              double budget_fraction, unsigned workers = 1);
RunResult run_full(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                   unsigned workers = 1);

// Trajectory order of one epoch; a pure function of (pool size, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t pool_size, std::uint64_t seed, std::size_t epoch);

struct GridRow {
    double delta_pred = 0.0;
    double delta_std = 0.0;
    double budget = 0.0;
    std::size_t annotated = 0;
    double f1 = 0.0;
    double acc_error = 0.0;
    double acc_correct = 0.0;
};

/// One run_pool_based per (delta_pred, delta_std) cell, each from `initial` and the
/// config's seed, scored on `eval_set`.
std::vector<GridRow> grid_search(const EnsembleModel& initial, const Dataset& pool, const Dataset& eval_set,
                                 Annotator& annotator, const Config& config,
                                 const std::vector<std::pair<double, double>>& grid, unsigned workers = 1);

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows);
std::vector<GridRow> read_grid_csv(std::istream& in);

} // namespace aprm
