#include "aprm/dataset.hpp"

#include "aprm/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <unordered_set>

namespace aprm {

using json = nlohmann::json;

void validate_trajectory(const Trajectory& traj, std::optional<std::size_t> expected_dim) {
    if (traj.id.empty()) throw DataError("trajectory has an empty id");
    if (traj.steps.empty()) throw DataError("trajectory '" + traj.id + "' has no steps");
    const std::size_t dim = expected_dim.value_or(traj.steps.front().features.size());
    if (dim == 0) throw DataError("trajectory '" + traj.id + "' has empty feature vectors");
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& step = traj.steps[i];
        if (step.index != i) throw DataError("trajectory '" + traj.id + "': step index " + std::to_string(step.index) + " at position " + std::to_string(i));
        if (step.features.size() != dim)
            throw DataError("trajectory '" + traj.id + "': feature dimension " + std::to_string(step.features.size()) +
                            " does not match " + std::to_string(dim));
        for (double f : step.features)
            if (!std::isfinite(f)) throw DataError("trajectory '" + traj.id + "': non-finite feature");
    }
    if (traj.gold && traj.gold->first_error && *traj.gold->first_error >= traj.steps.size())
        throw DataError("trajectory '" + traj.id + "': gold first_error out of range");
}

namespace {

Trajectory from_json(const json& j) {
    if (!j.is_object()) throw DataError("record is not an object");
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    t.question = j.value("question", std::string{});
    const auto& steps = j.at("steps");
    if (!steps.is_array()) throw DataError("'steps' is not an array");
    t.steps.reserve(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        StepRecord rec;
        rec.index = i;
        rec.features = s.at("features").get<std::vector<double>>();
        if (auto it = s.find("text"); it != s.end() && !it->is_null()) rec.text = it->get<std::string>();
        t.steps.push_back(std::move(rec));
    }
    if (auto it = j.find("gold_first_error"); it != j.end()) {
        GoldLabel gold;
        if (!it->is_null()) {
            if (!it->is_number_integer() || it->get<long long>() < 0) throw DataError("'gold_first_error' must be a non-negative integer or null");
            gold.first_error = it->get<std::size_t>();
        }
        t.gold = gold;
    }
    return t;
}

} // namespace

std::string trajectory_to_line(const Trajectory& t) {
    json j;
    j["id"] = t.id;
    j["question"] = t.question;
    json steps = json::array();
    for (const auto& s : t.steps) {
        json step;
        step["features"] = s.features;
        if (s.text) step["text"] = *s.text;
        steps.push_back(std::move(step));
    }
    j["steps"] = std::move(steps);
    if (t.gold) {
        if (t.gold->first_error) j["gold_first_error"] = *t.gold->first_error;
        else j["gold_first_error"] = nullptr;
    }
    return j.dump();
}

Dataset read_dataset(std::istream& in) {
    Dataset out;
    std::unordered_set<std::string> ids;
    std::optional<std::size_t> dim;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        Trajectory t;
        try {
            t = from_json(json::parse(line));
            validate_trajectory(t, dim);
        } catch (const json::exception& e) {
            throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!dim) dim = t.feature_dim();
        if (!ids.insert(t.id).second) throw DataError("dataset line " + std::to_string(line_no) + ": duplicate id '" + t.id + "'");
        out.push_back(std::move(t));
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset " + path.string());
    return read_dataset(in);
}

void write_dataset(const Dataset& data, std::ostream& out) {
    for (const auto& t : data) out << trajectory_to_line(t) << '\n';
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write dataset " + path.string());
    write_dataset(data, out);
    if (!out) throw DataError("write failed for " + path.string());
}

} // namespace aprm
