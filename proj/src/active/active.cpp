#include "aprm/active.hpp"

#include "aprm/errors.hpp"
#include "aprm/eval.hpp"
#include "aprm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace aprm {

namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kCoinStream = 2;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

} // namespace

double SelectionResult::retained_fraction() const {
    const std::size_t total = retained.size() + skipped.size();
    return total == 0 ? 0.0 : static_cast<double>(retained.size()) / static_cast<double>(total);
}

SelectionResult select_batch(const EnsembleModel& model, std::span<const Trajectory> batch, const GateThresholds& t,
                             unsigned workers) {
    if (batch.empty()) throw DataError("select_batch: empty batch");
    std::vector<UncertaintyReport> reports(batch.size());
    parallel_for(batch.size(), workers, [&](std::size_t i) { reports[i] = assess(model, batch[i], t); });
    SelectionResult out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (is_uncertain(reports[i])) {
            out.retained.push_back(batch[i].id);
            out.retained_positions.push_back(i);
        } else {
            out.skipped.push_back(batch[i].id);
        }
        out.reports.insert_or_assign(batch[i].id, std::move(reports[i]));
    }
    return out;
}

SelectionResult run_one_shot_filter(const EnsembleModel& model, std::span<const Trajectory> pool,
                                    const GateThresholds& t, unsigned workers) {
    return select_batch(model, pool, t, workers);
}

std::vector<std::size_t> epoch_order(std::size_t pool_size, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(pool_size);
    std::iota(order.begin(), order.end(), 0);
    auto rng = stream_rng(seed, kShuffleStream, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

RunResult run_loop(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                   const RunOptions& options, BudgetLedger ledger) {
    config.validate();
    if (pool.empty()) throw DataError("training pool is empty");
    if (options.retention == Retention::random && !(options.budget_fraction >= 0.0 && options.budget_fraction <= 1.0))
        throw ConfigError("budget_fraction must lie in [0, 1]");
    if (options.epochs < 1) throw ConfigError("epochs must be at least 1");

    const auto thresholds = GateThresholds::from(config);
    const std::size_t b = config.batch_size;
    const std::size_t per_epoch = (pool.size() + b - 1) / b;
    const std::size_t total = per_epoch * options.epochs;

    RunResult result{std::move(model), std::move(ledger), true, options.start_batch, {}};
    std::vector<std::size_t> order;
    std::size_t order_epoch = std::numeric_limits<std::size_t>::max();

    for (std::size_t gb = options.start_batch; gb < total; ++gb) {
        const std::size_t epoch = gb / per_epoch;
        if (epoch != order_epoch) {
            order = epoch_order(pool.size(), config.seed, epoch);
            order_epoch = epoch;
        }
        const std::size_t begin = (gb % per_epoch) * b;
        const std::size_t end = std::min(pool.size(), begin + b);
        std::vector<Trajectory> batch;
        batch.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) batch.push_back(pool[order[i]]);

        std::vector<std::size_t> keep;
        switch (options.retention) {
        case Retention::uncertainty:
            keep = select_batch(result.model, batch, thresholds, options.workers).retained_positions;
            break;
        case Retention::random: {
            auto coin_rng = stream_rng(config.seed, kCoinStream, gb);
            std::bernoulli_distribution coin(options.budget_fraction);
            for (std::size_t i = 0; i < batch.size(); ++i)
                if (coin(coin_rng)) keep.push_back(i);
            break;
        }
        case Retention::all:
            keep.resize(batch.size());
            std::iota(keep.begin(), keep.end(), 0);
            break;
        }

        std::vector<std::optional<Annotation>> labels(keep.size());
        try {
            parallel_for(keep.size(), options.workers,
                         [&](std::size_t i) { labels[i] = annotator.annotate(batch[keep[i]]); });
        } catch (const AnnotatorError& e) {
            result.completed = false;
            result.next_batch = gb;
            result.abort_reason = e.what();
            return result;
        }

        std::vector<Example> examples;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            const auto& a = labels[i];
            const auto& t = batch[keep[i]];
            if (!a || (a->first_error && *a->first_error >= t.size())) continue;
            examples.push_back(Example{std::cref(t), a->label()});
        }

        double batch_l = std::numeric_limits<double>::quiet_NaN();
        if (!examples.empty()) {
            batch_l = batch_loss(result.model, examples, config.lambda, options.workers);
            const auto g = grad(result.model, examples, config.lambda, options.workers);
            sgd_step(result.model, g, config.lr);
        }
        result.ledger.record(gb, batch.size(), keep.size(), examples.size(), batch_l);
        result.next_batch = gb + 1;
    }
    return result;
}

RunResult run_pool_based(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                         unsigned workers) {
    RunOptions o;
    o.retention = Retention::uncertainty;
    o.workers = workers;
    return run_loop(std::move(model), pool, annotator, config, o);
}

RunResult run_random_baseline(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                              double budget_fraction, unsigned workers) {
    RunOptions o;
    o.retention = Retention::random;
    o.budget_fraction = budget_fraction;
    o.workers = workers;
    return run_loop(std::move(model), pool, annotator, config, o);
}

RunResult run_full(EnsembleModel model, const Dataset& pool, Annotator& annotator, const Config& config,
                   unsigned workers) {
    RunOptions o;
    o.retention = Retention::all;
    o.workers = workers;
    return run_loop(std::move(model), pool, annotator, config, o);
}

std::vector<GridRow> grid_search(const EnsembleModel& initial, const Dataset& pool, const Dataset& eval_set,
                                 Annotator& annotator, const Config& config,
                                 const std::vector<std::pair<double, double>>& grid, unsigned workers) {
    if (grid.empty()) throw ConfigError("grid search needs at least one cell");
    std::vector<GridRow> rows;
    rows.reserve(grid.size());
    for (const auto& [dp, ds] : grid) {
        Config c = config;
        c.delta_pred = dp;
        c.delta_std = ds;
        c.validate();
        const auto run = run_pool_based(initial, pool, annotator, c, workers);
        if (!run.completed) throw AnnotatorError("grid cell aborted: " + run.abort_reason);
        const auto ev = evaluate(run.model, eval_set, c.delta, workers);
        rows.push_back({dp, ds, run.ledger.normalized_budget(pool.size()), run.ledger.annotated(), ev.f1, ev.acc_error,
                        ev.acc_correct});
    }
    return rows;
}

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows) {
    out << "delta_pred,delta_std,budget,annotated,f1,acc_error,acc_correct\n" << std::setprecision(17);
    for (const auto& r : rows)
        out << r.delta_pred << ',' << r.delta_std << ',' << r.budget << ',' << r.annotated << ',' << r.f1 << ','
            << r.acc_error << ',' << r.acc_correct << '\n';
}

std::vector<GridRow> read_grid_csv(std::istream& in) {
    std::vector<GridRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line_no == 1) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 7) throw DataError("grid line " + std::to_string(line_no) + ": expected 7 columns");
        try {
            rows.push_back({parse_real(cells[0]), parse_real(cells[1]), std::stod(cells[2]), std::stoull(cells[3]),
                            std::stod(cells[4]), std::stod(cells[5]), std::stod(cells[6])});
        } catch (const std::exception& e) {
            throw DataError("grid line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

} // namespace aprm
