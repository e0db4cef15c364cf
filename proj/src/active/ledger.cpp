#include "aprm/active.hpp"

#include "aprm/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace aprm {

BudgetLedger::BudgetLedger(double tokens_per_label) : tokens_per_label_(tokens_per_label) {
    if (!std::isfinite(tokens_per_label) || tokens_per_label <= 0.0)
        throw ConfigError("tokens per label must be finite and positive");
}

void BudgetLedger::record(std::size_t batch, std::size_t seen, std::size_t retained, std::size_t annotated, double loss) {
    if (annotated > retained || retained > seen) throw std::logic_error("ledger row violates annotated <= retained <= seen");
    seen_ += seen;
    retained_ += retained;
    annotated_ += annotated;
    history_.push_back({batch, seen, retained, annotated, static_cast<double>(annotated) * tokens_per_label_, loss});
}

double BudgetLedger::normalized_budget(std::size_t pool_size) const {
    if (pool_size == 0) throw DataError("normalized budget of an empty pool");
    return static_cast<double>(annotated_) / static_cast<double>(pool_size);
}

bool BudgetLedger::operator==(const BudgetLedger& o) const {
    if (tokens_per_label_ != o.tokens_per_label_ || seen_ != o.seen_ || retained_ != o.retained_ ||
        annotated_ != o.annotated_ || history_.size() != o.history_.size())
        return false;
    for (std::size_t i = 0; i < history_.size(); ++i) {
        const auto& a = history_[i];
        const auto& b = o.history_[i];
        const bool same_loss = (std::isnan(a.loss) && std::isnan(b.loss)) || a.loss == b.loss;
        if (a.batch != b.batch || a.seen != b.seen || a.retained != b.retained || a.annotated != b.annotated ||
            a.tokens_spent != b.tokens_spent || !same_loss)
            return false;
    }
    return true;
}

void write_ledger_csv(std::ostream& out, const BudgetLedger& ledger) {
    out << "batch,seen,retained,annotated,tokens_spent,loss\n";
    for (const auto& r : ledger.history()) {
        out << r.batch << ',' << r.seen << ',' << r.retained << ',' << r.annotated << ',' << std::setprecision(17)
            << r.tokens_spent << ',';
        if (std::isnan(r.loss))
            out << "nan";
        else
            out << r.loss;
        out << '\n';
    }
}

BudgetLedger read_ledger_csv(std::istream& in, double tokens_per_label) {
    BudgetLedger ledger(tokens_per_label);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line.rfind("batch,", 0) != 0) throw DataError("ledger: missing header");
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 6) throw DataError("ledger line " + std::to_string(line_no) + ": expected 6 columns");
        try {
            const double loss = cells[5] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[5]);
            ledger.record(std::stoull(cells[0]), std::stoull(cells[1]), std::stoull(cells[2]), std::stoull(cells[3]), loss);
        } catch (const std::logic_error& e) {
            throw DataError("ledger line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ledger;
}

void save_ledger(const std::filesystem::path& path, const BudgetLedger& ledger) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    write_ledger_csv(out, ledger);
}

BudgetLedger load_ledger(const std::filesystem::path& path, double tokens_per_label) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open ledger " + path.string());
    return read_ledger_csv(in, tokens_per_label);
}

} // namespace aprm
