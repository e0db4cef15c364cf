// aprm: generate synthetic pools, train ensemble PRMs with uncertainty-gated labeling,
// filter pools, evaluate, and estimate annotation costs.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 usage/config, 3 data, 4 annotator,
// 5 numeric divergence.

#include "aprm/active.hpp"
#include "aprm/checkpoint.hpp"
#include "aprm/costs.hpp"
#include "aprm/datagen.hpp"
#include "aprm/dataset.hpp"
#include "aprm/errors.hpp"
#include "aprm/eval.hpp"
#include "aprm/judge_client.hpp"
#include "aprm/kernels.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#ifndef APRM_GIT_DESCRIBE
#define APRM_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace aprm;

namespace {

void log(const std::string& msg) { std::cerr << "aprm: " << msg << '\n'; }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out << content;
}

std::string file_sha256(const fs::path& p) { return sha256_hex(read_file(p)); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<double> parse_real_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(parse_real(cell));
    if (out.empty()) throw ConfigError("empty list '" + text + "'");
    return out;
}

json config_json(const Config& c) {
    return {{"n_heads", c.n_heads},         {"feature_dim", c.feature_dim}, {"trunk_dim", c.trunk_dim},
            {"lambda", c.lambda},           {"lr", c.lr},                   {"batch_size", c.batch_size},
            {"delta", c.delta},             {"delta_pred", c.delta_pred},   {"delta_std", std::isinf(c.delta_std) ? json("inf") : json(c.delta_std)},
            {"seed", c.seed}};
}

json base_manifest(const std::string& command) {
    return {{"command", command}, {"git_describe", APRM_GIT_DESCRIBE}, {"kernels", std::string(kernels::active().name)}};
}

// Shared --config / --set / --seed / --delta-pred / --delta-std handling.
struct ConfigFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> delta_pred;
    std::optional<std::string> delta_std;

    void add(CLI::App* app) {
        app->add_option("--config", config_path, "key = value config file");
        app->add_option("--set", sets, "override one config key (key=value), repeatable");
        app->add_option("--seed", seed, "run seed");
        app->add_option("--delta-pred", delta_pred, "aleatoric gate threshold (0.5 disables)");
        app->add_option("--delta-std", delta_std, "epistemic gate threshold (inf disables)");
    }

    Config resolve() const {
        Config c;
        if (!config_path.empty()) c = load_config(config_path, c);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) c.seed = *seed;
        if (delta_pred) c.delta_pred = parse_real(*delta_pred);
        if (delta_std) c.delta_std = parse_real(*delta_std);
        c.validate();
        return c;
    }
};

Dataset load_pool(const fs::path& path, const Config& c) {
    auto data = load_dataset(path);
    if (data.empty()) throw DataError("dataset " + path.string() + " is empty");
    if (data.front().feature_dim() != c.feature_dim)
        throw ConfigError("dataset " + path.string() + " has feature dim " + std::to_string(data.front().feature_dim()) +
                          " but config feature_dim is " + std::to_string(c.feature_dim) + " (use --set feature_dim=...)");
    return data;
}

EnsembleModel model_for(const std::string& checkpoint, const Config& c) {
    if (checkpoint.empty()) return init_model(c);
    return load_checkpoint(checkpoint, c);
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    GenSpec spec;
    std::optional<double> error_rate;
    double eval_fraction = 0.0;
    std::string out_dir = ".";
};

int cmd_gen(const GenArgs& a) {
    GenSpec spec = a.spec;
    spec.error_rate = a.error_rate;
    const auto world = generate_world(spec);
    auto [train, eval] = split(world.data, 1.0 - a.eval_fraction, a.eval_fraction, spec.seed);
    const fs::path dir(a.out_dir);
    ensure_dir(dir);
    save_dataset(train, dir / "train.jsonl");
    if (a.eval_fraction > 0.0) save_dataset(eval, dir / "eval.jsonl");
    save_genspec(dir / "genspec.json", spec, world.shift);

    auto manifest = base_manifest("gen");
    manifest["genspec"] = json::parse(genspec_to_json(spec, world.shift));
    manifest["eval_fraction"] = a.eval_fraction;
    manifest["outputs"] = {{"train.jsonl", file_sha256(dir / "train.jsonl")}};
    if (a.eval_fraction > 0.0) manifest["outputs"]["eval.jsonl"] = file_sha256(dir / "eval.jsonl");
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    std::size_t erroneous = 0;
    for (const auto& t : world.data) erroneous += t.gold && t.gold->first_error.has_value();
    std::cout << "train,eval,erroneous_fraction,feature_shift\n"
              << train.size() << ',' << eval.size() << ',' << std::setprecision(6)
              << static_cast<double>(erroneous) / static_cast<double>(world.data.size()) << ',' << world.shift << '\n';
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    ConfigFlags cfg;
    std::string dataset;
    std::string eval_dataset;
    std::string checkpoint;
    std::string mode = "active";
    std::string annotator = "oracle";
    std::string endpoint;
    double budget_fraction = 0.5;
    unsigned workers = 1;
    std::size_t epochs = 1;
    std::string out_dir = "run";
    std::string grid_pred;
    std::string grid_std;
    bool resume = false;
    int judge_attempts = 4;
    int judge_backoff_ms = 200;
};

std::unique_ptr<Annotator> make_annotator(const TrainArgs& a, const fs::path& out_dir) {
    if (a.annotator == "oracle") return std::make_unique<OracleAnnotator>();
    auto opts = JudgeClientOptions::from_env();
    if (!a.endpoint.empty()) opts.endpoint = a.endpoint;
    opts.max_in_flight = std::max(1u, a.workers);
    opts.max_attempts = a.judge_attempts;
    opts.backoff_base_ms = a.judge_backoff_ms;
    opts.cache_dir = out_dir / "judge_cache";
    return std::make_unique<JudgeClient>(opts);
}

int run_grid(const TrainArgs& a, const Config& config, const Dataset& pool, Annotator& annotator, const fs::path& dir) {
    if (a.eval_dataset.empty()) throw ConfigError("grid search needs --eval-dataset");
    const auto eval_set = load_pool(a.eval_dataset, config);
    std::vector<std::pair<double, double>> grid;
    for (double dp : parse_real_list(a.grid_pred))
        for (double ds : parse_real_list(a.grid_std)) grid.emplace_back(dp, ds);
    const auto initial = model_for(a.checkpoint, config);
    const auto rows = grid_search(initial, pool, eval_set, annotator, config, grid, a.workers);
    std::ostringstream csv;
    write_grid_csv(csv, rows);
    write_file(dir / "grid.csv", csv.str());
    auto manifest = base_manifest("train-grid");
    manifest["config"] = config_json(config);
    manifest["inputs"] = {{a.dataset, file_sha256(a.dataset)}, {a.eval_dataset, file_sha256(a.eval_dataset)}};
    manifest["grid_pred"] = a.grid_pred;
    manifest["grid_std"] = a.grid_std;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << csv.str();
    return 0;
}

int cmd_train(const TrainArgs& a) {
    const Config config = a.cfg.resolve();
    const fs::path dir(a.out_dir);
    ensure_dir(dir);
    const auto pool = load_pool(a.dataset, config);
    auto annotator = make_annotator(a, dir);

    if (!a.grid_pred.empty() || !a.grid_std.empty()) {
        if (a.grid_pred.empty() || a.grid_std.empty()) throw ConfigError("--grid-pred and --grid-std go together");
        if (a.mode != "active") throw ConfigError("grid search runs in active mode only");
        return run_grid(a, config, pool, *annotator, dir);
    }

    RunOptions opts;
    opts.workers = a.workers;
    opts.epochs = a.epochs;
    if (a.mode == "active") {
        opts.retention = Retention::uncertainty;
    } else if (a.mode == "random") {
        opts.retention = Retention::random;
        opts.budget_fraction = a.budget_fraction;
    } else if (a.mode == "full") {
        opts.retention = Retention::all;
    } else {
        throw ConfigError("--mode must be active, random or full");
    }

    BudgetLedger ledger;
    std::optional<EnsembleModel> start;
    if (a.resume) {
        const auto prev = json::parse(read_file(dir / "manifest.json"), nullptr, false);
        if (prev.is_discarded() || !prev.contains("next_batch")) throw DataError("resume: manifest has no next_batch");
        opts.start_batch = prev["next_batch"].get<std::size_t>();
        start = load_checkpoint(dir / "checkpoint.bin", config);
        ledger = load_ledger(dir / "ledger.csv");
        log("resuming at batch " + std::to_string(opts.start_batch));
    } else {
        start = model_for(a.checkpoint, config);
    }

    auto result = run_loop(std::move(*start), pool, *annotator, config, opts, std::move(ledger));

    save_checkpoint(result.model, dir / "checkpoint.bin");
    save_ledger(dir / "ledger.csv", result.ledger);

    auto manifest = base_manifest("train");
    manifest["mode"] = a.mode;
    manifest["annotator"] = a.annotator;
    manifest["config"] = config_json(config);
    manifest["seed"] = config.seed;
    manifest["workers"] = a.workers;
    manifest["epochs"] = a.epochs;
    if (a.mode == "random") manifest["budget_fraction"] = a.budget_fraction;
    manifest["inputs"] = {{a.dataset, file_sha256(a.dataset)}};
    if (!a.checkpoint.empty()) manifest["inputs"][a.checkpoint] = file_sha256(a.checkpoint);
    manifest["pool_size"] = pool.size();
    manifest["completed"] = result.completed;
    manifest["next_batch"] = result.next_batch;
    if (!result.completed) manifest["abort_reason"] = result.abort_reason;

    json summary = {{"seen", result.ledger.seen()},
                    {"retained", result.ledger.retained()},
                    {"annotated", result.ledger.annotated()},
                    {"tokens_spent", result.ledger.tokens_spent()},
                    {"budget", result.ledger.normalized_budget(pool.size())}};
    if (result.completed && !a.eval_dataset.empty()) {
        manifest["inputs"][a.eval_dataset] = file_sha256(a.eval_dataset);
        const auto eval_set = load_pool(a.eval_dataset, config);
        const auto ev = evaluate(result.model, eval_set, config.delta, a.workers);
        std::ostringstream rows, sum;
        write_eval_rows_csv(rows, ev);
        write_eval_summary_csv(sum, ev);
        write_file(dir / "eval_rows.csv", rows.str());
        write_file(dir / "eval_summary.csv", sum.str());
        summary["f1"] = ev.f1;
        summary["acc_error"] = ev.acc_error;
        summary["acc_correct"] = ev.acc_correct;
    }
    manifest["summary"] = summary;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    if (result.ledger.annotated() == 0) log("warning: no trajectory was annotated; the model was not updated");
    std::cout << summary.dump() << '\n';
    if (!result.completed) {
        log("annotator unavailable, stopped before batch " + std::to_string(result.next_batch) + ": " +
            result.abort_reason + "; rerun with --resume");
        return static_cast<int>(ErrorKind::annotator);
    }
    return 0;
}

// ---------------------------------------------------------------- filter

struct FilterArgs {
    ConfigFlags cfg;
    std::string dataset;
    std::string checkpoint;
    unsigned workers = 1;
    std::string out_dir = "filter";
};

int cmd_filter(const FilterArgs& a) {
    const Config config = a.cfg.resolve();
    const auto pool = load_pool(a.dataset, config);
    const auto model = model_for(a.checkpoint, config);
    const auto sel = run_one_shot_filter(model, pool, GateThresholds::from(config), a.workers);
    const fs::path dir(a.out_dir);
    ensure_dir(dir);
    std::ostringstream kept, skipped;
    for (const auto& id : sel.retained) kept << id << '\n';
    for (const auto& id : sel.skipped) skipped << id << '\n';
    write_file(dir / "retained_ids.txt", kept.str());
    write_file(dir / "skipped_ids.txt", skipped.str());
    auto manifest = base_manifest("filter");
    manifest["config"] = config_json(config);
    manifest["inputs"] = {{a.dataset, file_sha256(a.dataset)}};
    if (!a.checkpoint.empty()) manifest["inputs"][a.checkpoint] = file_sha256(a.checkpoint);
    manifest["retained"] = sel.retained.size();
    manifest["skipped"] = sel.skipped.size();
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "total,retained,skipped,retained_fraction\n"
              << pool.size() << ',' << sel.retained.size() << ',' << sel.skipped.size() << ',' << std::setprecision(6)
              << sel.retained_fraction() << '\n';
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    ConfigFlags cfg;
    std::string dataset;
    std::string checkpoint;
    unsigned workers = 1;
    std::string out_dir;
};

int cmd_eval(const EvalArgs& a) {
    const Config config = a.cfg.resolve();
    const auto data = load_pool(a.dataset, config);
    const auto model = model_for(a.checkpoint, config);
    const auto ev = evaluate(model, data, config.delta, a.workers);
    if (!a.out_dir.empty()) {
        const fs::path dir(a.out_dir);
        ensure_dir(dir);
        std::ostringstream rows, sum;
        write_eval_rows_csv(rows, ev);
        write_eval_summary_csv(sum, ev);
        write_file(dir / "eval_rows.csv", rows.str());
        write_file(dir / "eval_summary.csv", sum.str());
    }
    write_eval_summary_csv(std::cout, ev);
    return 0;
}

// ---------------------------------------------------------------- cost

struct CostArgs {
    std::vector<std::string> strategies;
    std::vector<double> counts;
    std::string format = "csv";
    std::string baseline;
    CostConstants k;
};

int cmd_cost(const CostArgs& a) {
    a.k.validate();
    std::vector<CostQuery> queries;
    if (a.strategies.empty()) {
        if (!a.counts.empty()) throw ConfigError("--n needs matching --strategy entries");
        for (auto s : kAllStrategies) queries.push_back({s, reference_label_count(s)});
    } else {
        if (!a.counts.empty() && a.counts.size() != a.strategies.size())
            throw ConfigError("--strategy and --n must be given the same number of times");
        for (std::size_t i = 0; i < a.strategies.size(); ++i) {
            const auto s = parse_strategy(a.strategies[i]);
            queries.push_back({s, a.counts.empty() ? reference_label_count(s) : a.counts[i]});
        }
    }
    const auto rows = cost_table(queries, a.k);
    if (a.format == "csv")
        write_cost_csv(std::cout, rows);
    else if (a.format == "text")
        write_cost_text(std::cout, rows);
    else
        throw ConfigError("--format must be csv or text");
    if (!a.baseline.empty()) {
        const auto base = parse_strategy(a.baseline);
        const CostQuery ref{base, reference_label_count(base)};
        std::cout << "\nstrategy,baseline,budget_ratio\n";
        for (const auto& q : queries)
            std::cout << to_string(q.strategy) << ',' << to_string(base) << ',' << std::setprecision(6)
                      << budget_ratio(q, ref, a.k) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::vector<std::string> run_dirs;
    std::vector<std::string> grids;
};

std::optional<double> read_summary_f1(const fs::path& p) {
    if (!fs::exists(p)) return std::nullopt;
    std::istringstream in(read_file(p));
    std::string header, row;
    std::getline(in, header);
    if (!std::getline(in, row)) return std::nullopt;
    const auto comma = row.rfind(',');
    return std::stod(row.substr(comma + 1));
}

int cmd_report(const ReportArgs& a) {
    std::cout << "run,batch,seen,annotated,tokens_spent,budget,loss,f1\n" << std::setprecision(10);
    for (const auto& d : a.run_dirs) {
        const fs::path dir(d);
        const auto ledger = load_ledger(dir / "ledger.csv");
        if (ledger.history().empty()) {
            log(d + ": empty ledger");
            continue;
        }
        std::size_t pool = 0;
        if (fs::exists(dir / "manifest.json")) {
            const auto m = json::parse(read_file(dir / "manifest.json"), nullptr, false);
            if (!m.is_discarded() && m.contains("pool_size")) pool = m["pool_size"].get<std::size_t>();
        }
        const auto f1 = read_summary_f1(dir / "eval_summary.csv");
        std::size_t seen = 0, annotated = 0;
        const auto& hist = ledger.history();
        for (std::size_t i = 0; i < hist.size(); ++i) {
            const auto& r = hist[i];
            seen += r.seen;
            annotated += r.annotated;
            const double budget = static_cast<double>(annotated) / static_cast<double>(pool ? pool : seen);
            std::cout << d << ',' << r.batch << ',' << seen << ',' << annotated << ','
                      << static_cast<double>(annotated) * ledger.tokens_per_label() << ',' << budget << ',';
            if (std::isnan(r.loss))
                std::cout << "nan";
            else
                std::cout << r.loss;
            std::cout << ',';
            if (i + 1 == hist.size() && f1) std::cout << *f1;
            std::cout << '\n';
        }
    }
    for (const auto& g : a.grids) {
        std::istringstream in(read_file(g));
        for (const auto& r : read_grid_csv(in)) {
            std::ostringstream label;
            label << g << ":dp=" << r.delta_pred << ";ds=" << r.delta_std;
            std::cout << label.str() << ",,," << r.annotated << ','
                      << static_cast<double>(r.annotated) * CostConstants{}.tokens_per_critique << ',' << r.budget
                      << ",," << r.f1 << '\n';
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ensemble process reward models trained with uncertainty-gated annotation"};
    app.require_subcommand(1, 1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate a synthetic trajectory pool");
    g->add_option("--count", gen.spec.count, "number of trajectories")->required()->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.spec.seed, "generator seed");
    g->add_option("--feature-dim,-d", gen.spec.feature_dim, "step feature dimension");
    g->add_option("--max-steps", gen.spec.max_steps, "maximum steps per trajectory");
    g->add_option("--temperature", gen.spec.temperature, "teacher temperature (ambiguity)");
    g->add_option("--error-rate", gen.error_rate, "target fraction of erroneous trajectories");
    g->add_option("--eval-fraction", gen.eval_fraction, "share held out as eval.jsonl")->check(CLI::Range(0.0, 1.0));
    g->add_option("--out-dir", gen.out_dir, "output directory");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train an ensemble PRM");
    train.cfg.add(t);
    t->add_option("--dataset", train.dataset, "training pool (JSONL)")->required();
    t->add_option("--eval-dataset", train.eval_dataset, "held-out set scored after training");
    t->add_option("--checkpoint", train.checkpoint, "initial checkpoint (default: fresh init from the config seed)");
    t->add_option("--mode", train.mode, "active | random | full")->check(CLI::IsMember({"active", "random", "full"}));
    t->add_option("--annotator", train.annotator, "oracle | judge")->check(CLI::IsMember({"oracle", "judge"}));
    t->add_option("--endpoint", train.endpoint, "chat-completion URL for the judge annotator");
    t->add_option("--budget-fraction", train.budget_fraction, "retention probability in random mode")
        ->check(CLI::Range(0.0, 1.0));
    t->add_option("--workers", train.workers, "parallel forwards and annotation requests");
    t->add_option("--epochs", train.epochs, "passes over the pool");
    t->add_option("--out-dir", train.out_dir, "output directory");
    t->add_option("--grid-pred", train.grid_pred, "comma-separated delta_pred values for a grid search");
    t->add_option("--grid-std", train.grid_std, "comma-separated delta_std values for a grid search");
    t->add_option("--judge-attempts", train.judge_attempts, "judge requests per trajectory");
    t->add_option("--judge-backoff-ms", train.judge_backoff_ms, "first retry delay, doubled per retry");
    t->add_flag("--resume", train.resume, "continue an aborted run found in --out-dir");

    FilterArgs filter;
    auto* f = app.add_subcommand("filter", "one-shot uncertainty filter over a pool");
    filter.cfg.add(f);
    f->add_option("--dataset", filter.dataset, "pool (JSONL)")->required();
    f->add_option("--checkpoint", filter.checkpoint, "gate model (default: untrained)");
    f->add_option("--workers", filter.workers, "parallel forwards");
    f->add_option("--out-dir", filter.out_dir, "output directory");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "first-error F1 on a labeled set");
    ev.cfg.add(e);
    e->add_option("--dataset", ev.dataset, "labeled set (JSONL)")->required();
    e->add_option("--checkpoint", ev.checkpoint, "model (default: untrained)");
    e->add_option("--workers", ev.workers, "parallel forwards");
    e->add_option("--out-dir", ev.out_dir, "also write eval_rows.csv and eval_summary.csv here");

    CostArgs cost;
    auto* c = app.add_subcommand("cost", "annotation token cost per labeling strategy");
    c->add_option("--strategy", cost.strategies, "ActPRM | MathShepherd | ConsensusFiltering | EnsemblePrompting");
    c->add_option("--n", cost.counts, "labeled trajectories, one per --strategy");
    c->add_option("--format", cost.format, "csv | text");
    c->add_option("--baseline", cost.baseline, "also print budget ratios against this strategy");
    c->add_option("--steps", cost.k.steps_per_trajectory, "mean steps per trajectory");
    c->add_option("--rollout-tokens", cost.k.tokens_per_rollout, "mean tokens per rollout");
    c->add_option("--critique-tokens", cost.k.tokens_per_critique, "mean tokens per judge critique");
    c->add_option("--rollouts-per-step", cost.k.rollouts_per_step, "rollouts per step");
    c->add_option("--ensemble-prompts", cost.k.ensemble_prompts, "prompts per ensemble-prompting label");

    ReportArgs report;
    auto* r = app.add_subcommand("report", "budget-vs-score series from run directories");
    r->add_option("--run-dir", report.run_dirs, "train output directory, repeatable");
    r->add_option("--grid", report.grids, "grid.csv from a grid search, repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return static_cast<int>(ErrorKind::config);
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*t) return cmd_train(train);
        if (*f) return cmd_filter(filter);
        if (*e) return cmd_eval(ev);
        if (*c) return cmd_cost(cost);
        if (*r) return cmd_report(report);
    } catch (const Error& err) {
        log(std::string("error: ") + err.what());
        return err.exit_code();
    } catch (const std::exception& err) {
        log(std::string("unexpected error: ") + err.what());
        return 1;
    }
    return 1;
}
