#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dbpl/domain.hpp"

namespace dbpl {

struct ScenarioConfig {
    Corridor corridor;
    SignalPlan signal;
    Constants vehicle;

    double q_veh = 720.0;             // car demand, veh/h
    double bus_interval_mean = 60.0;
    double bus_interval_std = 20.0;
    double dwell_mean = 30.0;
    double dwell_std = 20.0;
    double right_turn_ratio = 0.0;
    double mpr = 0.0;
    double omega_p = 0.9;
    std::uint64_t seed = 1;
    double duration = 1800.0;
    Strategy strategy = Strategy::EBL;

    double dk = 1.0;
    double horizon = 10.0;
    int k_lc = 1;
    std::size_t candidate_cap = 65536;
    double d_rt = 100.0;              // right-turner bus-lane borrowing window upstream of x_w
    double warmup = 300.0;
    double hdv_noise_std = 0.5;

    bool operator==(const ScenarioConfig&) const = default;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& msg, std::string key, int line)
        : std::runtime_error(msg), key_(std::move(key)), line_(line) {}
    const std::string& key() const { return key_; }
    int line() const { return line_; }

private:
    std::string key_;
    int line_;
};

ScenarioConfig load_scenario(std::string_view text);
ScenarioConfig load_scenario_file(const std::string& path);
std::string serialize_scenario(const ScenarioConfig& cfg);

// Applies one key=value assignment, then re-validates. Used by sweeps.
void set_scenario_value(ScenarioConfig& cfg, const std::string& key, const std::string& value);
void validate(const ScenarioConfig& cfg);

Strategy parse_strategy(std::string_view s);

}  // namespace dbpl
