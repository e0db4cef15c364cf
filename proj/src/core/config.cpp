#include "aprm/config.hpp"

#include "aprm/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace aprm {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::size_t parse_count(const std::string& key, const std::string& text) {
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + text + "'");
    return value;
}

std::string format_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

double parse_real(const std::string& text) {
    const std::string t = trim(text);
    if (t == "inf" || t == "+inf" || t == "infinity") return kInf;
    if (t == "-inf") return -kInf;
    double value = 0.0;
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (ec != std::errc{} || ptr != end || t.empty()) throw ConfigError("config: cannot parse real '" + text + "'");
    return value;
}

void Config::validate() const {
    if (n_heads == 0) throw ConfigError("config: n_heads must be positive");
    if (feature_dim == 0) throw ConfigError("config: feature_dim must be positive");
    if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
    if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("config: lambda must be finite and non-negative");
    if (!std::isfinite(lr) || lr <= 0.0) throw ConfigError("config: lr must be finite and positive");
    if (!std::isfinite(delta) || delta <= 0.0 || delta >= 1.0) throw ConfigError("config: delta must lie in (0, 1)");
    // 0.5 is the aleatoric-off switch; anything below it is meaningless.
    if (!std::isfinite(delta_pred) || delta_pred < 0.5 || delta_pred > 1.0)
        throw ConfigError("config: delta_pred must lie in [0.5, 1] (0.5 disables the aleatoric gate)");
    if (std::isnan(delta_std) || delta_std < 0.0 || delta_std == -kInf)
        throw ConfigError("config: delta_std must be non-negative (inf disables the epistemic gate)");
}

void set_config_value(Config& c, const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    if (key == "n_heads") c.n_heads = parse_count(key, value);
    else if (key == "feature_dim" || key == "d") c.feature_dim = parse_count(key, value);
    else if (key == "trunk_dim") c.trunk_dim = parse_count(key, value);
    else if (key == "lambda") c.lambda = parse_real(value);
    else if (key == "lr") c.lr = parse_real(value);
    else if (key == "batch_size") c.batch_size = parse_count(key, value);
    else if (key == "delta") c.delta = parse_real(value);
    else if (key == "delta_pred") c.delta_pred = parse_real(value);
    else if (key == "delta_std") c.delta_std = parse_real(value);
    else if (key == "seed") {
        std::uint64_t s = 0;
        const auto* end = value.data() + value.size();
        auto [ptr, ec] = std::from_chars(value.data(), end, s);
        if (ec != std::errc{} || ptr != end) throw ConfigError("config: seed expects an unsigned 64-bit integer");
        c.seed = s;
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

Config parse_config(const std::string& text, Config base) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), base);
}

std::string format_config(const Config& c) {
    std::ostringstream os;
    os << "n_heads = " << c.n_heads << '\n'
       << "feature_dim = " << c.feature_dim << '\n'
       << "trunk_dim = " << c.trunk_dim << '\n'
       << "lambda = " << format_real(c.lambda) << '\n'
       << "lr = " << format_real(c.lr) << '\n'
       << "batch_size = " << c.batch_size << '\n'
       << "delta = " << format_real(c.delta) << '\n'
       << "delta_pred = " << format_real(c.delta_pred) << '\n'
       << "delta_std = " << format_real(c.delta_std) << '\n'
       << "seed = " << c.seed << '\n';
    return os.str();
}

} // namespace aprm
