#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

namespace aprm {

/// Run configuration shared by the trainer, the gates and the CLI.
///
/// `delta_pred == 0.5` is accepted as the switch that disables the aleatoric gate and
/// `delta_std == +inf` disables the epistemic gate; every other real must be finite.
struct Config {
    std::size_t n_heads = 8;
    std::size_t feature_dim = 16;
    std::size_t trunk_dim = 0;
    double lambda = 0.01;
    double lr = 1e-2;
    std::size_t batch_size = 256;
    double delta = 0.5;
    double delta_pred = 0.95;
    double delta_std = 0.005;
    std::uint64_t seed = 0;

    void validate() const;

    bool operator==(const Config&) const = default;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Flat `key = value` format, one field per line, `#` starts a comment.
Config parse_config(const std::string& text, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});
std::string format_config(const Config& config);

// Applies one key/value pair; throws ConfigError on an unknown key or bad value.
void set_config_value(Config& config, const std::string& key, const std::string& value);
double parse_real(const std::string& text);

} // namespace aprm
