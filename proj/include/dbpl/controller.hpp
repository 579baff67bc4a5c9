#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dbpl/domain.hpp"
#include "dbpl/estimator.hpp"
#include "dbpl/optimizer.hpp"

namespace dbpl {

struct ControllerState {
    std::optional<RowPlan> pending;
    std::vector<VehicleId> j_c;   // granted, not yet in the bus lane
    double k_c = 0.0;

    bool idle() const { return j_c.empty(); }
};

struct Command {
    enum class Kind { Recommend, Cancel };
    Kind kind = Kind::Recommend;
    VehicleId vehicle = 0;
    double k_c = 0.0;
    std::string reason;
};

struct Event {
    double t = 0.0;
    VehicleId vehicle = 0;
    std::string action;
    std::string reason;
};

struct TickResult {
    ControllerState state;
    std::vector<Command> commands;
    bool optimized = false;
};

using ForecastFn = std::function<Forecast()>;

// One control decision at k0. The forecast is only requested when an optimization runs
// and there is at least one CAV the optimizer could move.
TickResult tick(const ControllerState& ctrl, const Snapshot& s, double k0, const ForecastFn& forecast,
                const EstimationContext& ctx, const OptimizerSettings& settings);

}  // namespace dbpl
