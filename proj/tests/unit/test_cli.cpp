#include "aprm/checkpoint.hpp"
#include "aprm/costs.hpp"
#include "aprm/datagen.hpp"
#include "aprm/dataset.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace aprm;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "aprm_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(const std::string& args) {
    const auto out = workdir() / "stdout.txt";
    const auto err = workdir() / "stderr.txt";
    const std::string cmd = "cd '" + workdir().string() + "' && '" + APRM_CLI_PATH + "' " + args + " >'" + out.string() +
                            "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// Writes a hand-built model (identical heads) as a checkpoint.
fs::path write_model(const std::string& name, std::size_t d, const std::vector<double>& w, double b, std::size_t heads = 2) {
    ModelShape s{heads, d, 0};
    auto p = ParameterSet::zeros(s);
    for (std::size_t h = 0; h < heads; ++h) {
        std::copy(w.begin(), w.end(), p.head_w.begin() + static_cast<std::ptrdiff_t>(h * d));
        p.head_b[h] = b;
    }
    const auto path = workdir() / name;
    save_checkpoint(EnsembleModel(s, p, p.head_w, p.head_b), path);
    return path;
}

} // namespace

TEST_CASE("cli gen is deterministic and loadable") {
    REQUIRE(run("gen --count 1000 --seed 7 --feature-dim 4 --out-dir g1").code == 0);
    REQUIRE(run("gen --count 1000 --seed 7 --feature-dim 4 --out-dir g2").code == 0);
    CHECK(slurp(workdir() / "g1/train.jsonl") == slurp(workdir() / "g2/train.jsonl"));
    CHECK(slurp(workdir() / "g1/genspec.json") == slurp(workdir() / "g2/genspec.json"));
    CHECK(load_dataset(workdir() / "g1/train.jsonl").size() == 1000);
    const auto manifest = nlohmann::json::parse(slurp(workdir() / "g1/manifest.json"));
    CHECK(manifest.contains("git_describe"));
    CHECK(manifest["genspec"]["seed"] == 7);

    const auto split = run("gen --count 100 --seed 1 --feature-dim 4 --eval-fraction 0.2 --out-dir g3");
    CHECK(split.code == 0);
    CHECK(load_dataset(workdir() / "g3/eval.jsonl").size() == 20);
    CHECK(split.out.rfind("train,eval", 0) == 0);
}

TEST_CASE("cli usage errors") {
    const auto r = run("gen --seed 7");
    CHECK(r.code == 2);
    CHECK(r.err.find("count") != std::string::npos);
    CHECK(run("").code == 2);
    CHECK(run("train --dataset nope.jsonl --set feature_dim=4").code == 3);
    CHECK(run("train --dataset g1/train.jsonl --set n_heads=0").code == 2);
    CHECK(run("train --dataset g1/train.jsonl --set feature_dim=4 --annotator judge").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("cli train: full mode annotates everything") {
    REQUIRE(run("gen --count 100 --seed 3 --feature-dim 4 --error-rate 0.5 --temperature 0.1 --out-dir t").code == 0);
    const auto r = run("train --dataset t/train.jsonl --mode full --set feature_dim=4 --set batch_size=16 --out-dir tf");
    REQUIRE(r.code == 0);
    const auto summary = nlohmann::json::parse(r.out);
    CHECK(summary["annotated"] == 100);
    CHECK(fs::exists(workdir() / "tf/checkpoint.bin"));
    const auto manifest = nlohmann::json::parse(slurp(workdir() / "tf/manifest.json"));
    CHECK(manifest["mode"] == "full");
    CHECK(manifest["completed"] == true);
    CHECK(manifest["inputs"].contains("t/train.jsonl"));

    // Two identical runs, different worker counts: byte-identical outputs.
    REQUIRE(run("train --dataset t/train.jsonl --mode active --delta-pred 0.7 --delta-std 0.05 --set feature_dim=4 "
                "--set batch_size=16 --workers 1 --out-dir ta1")
                .code == 0);
    REQUIRE(run("train --dataset t/train.jsonl --mode active --delta-pred 0.7 --delta-std 0.05 --set feature_dim=4 "
                "--set batch_size=16 --workers 3 --out-dir ta2")
                .code == 0);
    CHECK(slurp(workdir() / "ta1/checkpoint.bin") == slurp(workdir() / "ta2/checkpoint.bin"));
    CHECK(slurp(workdir() / "ta1/ledger.csv") == slurp(workdir() / "ta2/ledger.csv"));
}

TEST_CASE("cli train: confident model annotates nothing and warns") {
    const auto ckpt = write_model("confident.ckpt", 4, {0, 0, 0, 0}, 40.0);
    const auto r = run("train --dataset t/train.jsonl --mode active --checkpoint " + ckpt.string() +
                       " --set feature_dim=4 --set n_heads=2 --out-dir tc");
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["annotated"] == 0);
    CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("cli train: random mode and grid") {
    REQUIRE(run("gen --count 300 --seed 4 --feature-dim 4 --error-rate 0.5 --temperature 0.1 --eval-fraction 0.25 "
                "--out-dir gr")
                .code == 0);
    const auto r = run("train --dataset gr/train.jsonl --eval-dataset gr/eval.jsonl --mode random --budget-fraction 0.5 "
                       "--set feature_dim=4 --set batch_size=16 --out-dir tr");
    REQUIRE(r.code == 0);
    const auto s = nlohmann::json::parse(r.out);
    CHECK(s["annotated"].get<int>() > 50);
    CHECK(s["annotated"].get<int>() < 175);
    CHECK(s.contains("f1"));
    const auto g = run("train --dataset gr/train.jsonl --eval-dataset gr/eval.jsonl --grid-pred 0.9,0.95,0.97 "
                       "--grid-std 0.01,0.005,0.002,0.001 --set feature_dim=4 --set batch_size=16 --out-dir tg");
    REQUIRE(g.code == 0);
    std::istringstream lines(g.out);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 13);
    const auto rep = run("report --run-dir tr --grid tg/grid.csv");
    CHECK(rep.code == 0);
    CHECK(rep.out.find("tg/grid.csv:dp=0.9;ds=0.01") != std::string::npos);
}

TEST_CASE("cli filter") {
    const auto untrained = run("filter --dataset t/train.jsonl --set feature_dim=4 --out-dir f1");
    REQUIRE(untrained.code == 0);
    CHECK(untrained.out.find(",1\n") != std::string::npos);
    const auto off = run("filter --dataset t/train.jsonl --set feature_dim=4 --delta-pred 0.5 --delta-std inf --out-dir f2");
    REQUIRE(off.code == 0);
    CHECK(off.out.find("100,0,100,0\n") != std::string::npos);

    const auto trained = run("filter --dataset t/train.jsonl --checkpoint tf/checkpoint.bin --set feature_dim=4 "
                             "--delta-pred 0.8 --delta-std 0.01 --out-dir f3");
    REQUIRE(trained.code == 0);
    std::set<std::string> ids;
    for (const auto* f : {"f3/retained_ids.txt", "f3/skipped_ids.txt"}) {
        std::istringstream in(slurp(workdir() / f));
        for (std::string id; std::getline(in, id);) CHECK(ids.insert(id).second);
    }
    std::set<std::string> expected;
    for (const auto& t : load_dataset(workdir() / "t/train.jsonl")) expected.insert(t.id);
    CHECK(ids == expected);
}

TEST_CASE("cli eval on a perfect predictor") {
    GenSpec s;
    s.count = 300;
    s.feature_dim = 4;
    s.temperature = 1e-6;
    s.seed = 9;
    const auto world = generate_world(s);
    save_dataset(world.data, workdir() / "sharp.jsonl");
    std::vector<double> w = world.teacher;
    for (double& x : w) x *= 1e6;
    const auto ckpt = write_model("perfect.ckpt", 4, w, 0.0);
    const auto r = run("eval --dataset sharp.jsonl --checkpoint " + ckpt.string() + " --set feature_dim=4 --set n_heads=2");
    REQUIRE(r.code == 0);
    CHECK(r.out.find(",1,1,1\n") != std::string::npos);
}

TEST_CASE("cli cost reproduces the calculator") {
    const auto r = run("cost");
    REQUIRE(r.code == 0);
    for (auto st : kAllStrategies) {
        const double tokens = estimate_cost({st, reference_label_count(st)});
        std::ostringstream expect;
        expect.precision(17);
        expect << to_string(st) << ',' << reference_label_count(st) << ',' << tokens << ',';
        CHECK(r.out.find(expect.str()) != std::string::npos);
    }
    const auto ratio = run("cost --strategy ActPRM --n 624000 --baseline ConsensusFiltering");
    CHECK(ratio.out.find("ActPRM,ConsensusFiltering,0.0579558") != std::string::npos);
    CHECK(run("cost --strategy Nope").code == 2);
    CHECK(run("cost --format text").code == 0);
}

TEST_CASE("cli report on an empty ledger") {
    fs::create_directories(workdir() / "empty");
    std::ofstream(workdir() / "empty/ledger.csv") << "batch,seen,retained,annotated,tokens_spent,loss\n";
    const auto r = run("report --run-dir empty");
    CHECK(r.code == 0);
    CHECK(r.out == "run,batch,seen,annotated,tokens_spent,budget,loss,f1\n");
    CHECK(run("report --run-dir missing").code == 3);
}

TEST_CASE("cli resumes after the judge disappears") {
    // Nothing listens on this port, so the judge annotator trips its breaker.
    const auto r = run("train --dataset t/train.jsonl --mode full --set feature_dim=4 --set batch_size=16 "
                       "--annotator judge --endpoint http://127.0.0.1:9 --judge-backoff-ms 0 --out-dir tj");
    CHECK(r.code == 4);
    const auto manifest = nlohmann::json::parse(slurp(workdir() / "tj/manifest.json"));
    CHECK(manifest["completed"] == false);
    CHECK(manifest["next_batch"] == 0);
    const auto resumed = run("train --dataset t/train.jsonl --mode full --set feature_dim=4 --set batch_size=16 "
                             "--out-dir tj --resume");
    CHECK(resumed.code == 0);
    CHECK(slurp(workdir() / "tj/checkpoint.bin") == slurp(workdir() / "tf/checkpoint.bin"));
}
