#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbpl/scenario.hpp"
#include "dbpl/simulator.hpp"

namespace dbpl {

namespace fs = std::filesystem;

struct RunArtifacts {
    fs::path dir;
    std::optional<fs::path> trajectory;
    fs::path metrics;
    fs::path events;
    fs::path manifest;
    Aggregates aggregates;
};

// One simulation into dir. Writes metrics.csv, events.csv, manifest.json and, when
// asked, trajectory.csv. The arrivals default to the ones derived from cfg.
RunArtifacts run_scenario(const ScenarioConfig& cfg, const fs::path& dir, bool trajectory = true);
RunArtifacts run_scenario(const ScenarioConfig& cfg, const std::vector<Arrival>& arrivals, const fs::path& dir,
                          bool trajectory);

std::string sha256_file(const fs::path& path);

enum class SweepAxis { None, Mpr, Demand, BusInterval, StopPosition, RightTurnRatio };

SweepAxis parse_axis(const std::string& name);
const char* axis_name(SweepAxis axis);

struct SweepSpec {
    ScenarioConfig base;
    SweepAxis axis = SweepAxis::None;
    std::vector<std::string> values;          // textual, applied through the config loader
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

// "mpr=0.2,0.4" -> axis and values. Throws ConfigError on malformed input.
void parse_sweep(SweepSpec& spec, const std::string& text);
std::vector<std::uint64_t> parse_seeds(const std::string& text);

ScenarioConfig cell_config(const SweepSpec& spec, const std::string& value, std::uint64_t seed, Strategy strategy);

struct RunRow {
    std::string value;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::EBL;
    Aggregates aggregates;
    fs::path dir;
};

struct ConfigSummary {
    std::string value;
    GroupStat ebl_car, dbpl_car;
    double ebl_hdv = 0, dbpl_hdv = 0, ebl_cav = 0, dbpl_cav = 0, ebl_cab = 0, dbpl_cab = 0;
    double reduction = 0.0;          // percent, from seed-averaged car means
    double reduction_std = 0.0;      // across per-seed reductions
    double max_cab_increase = 0.0;   // largest paired per-seed CAB mean increase, s
};

struct ComparisonReport {
    SweepAxis axis = SweepAxis::None;
    std::vector<RunRow> rows;        // value-major, then seed, then EBL before DBPL
    std::vector<ConfigSummary> summaries;
};

// Seed-averaged mean of one group for one value and strategy.
double seed_mean(const ComparisonReport& report, const std::string& value, Strategy strategy,
                 GroupStat Aggregates::*group);

struct CompareOptions {
    fs::path out;
    bool trajectories = false;
    unsigned jobs = 1;
};

ComparisonReport compare(const SweepSpec& spec, const CompareOptions& options);

ComparisonReport summarize(SweepAxis axis, std::vector<RunRow> rows);

void write_report(const ComparisonReport& report, const fs::path& out);

}  // namespace dbpl
