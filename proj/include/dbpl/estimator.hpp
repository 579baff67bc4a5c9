#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dbpl/domain.hpp"

namespace dbpl {

// Last crossings seen before the snapshot was taken. Cold start: -inf, unconstrained.
struct BoundaryRecord {
    double t_stopbar = -kInf;
    VehicleClass stopbar_cls = VehicleClass::CAV;
    std::optional<Crossing> pocket;
    VehicleClass pocket_cls = VehicleClass::CAV;
};

// Vehicles at time t. Vehicles already past the stop bar (or out of the pocket)
// may be present with t_cross / w_cross set; that happens in forecast snapshots.
struct Snapshot {
    double t = 0.0;
    std::vector<VehicleState> vehicles;
    BoundaryRecord general;
    BoundaryRecord bus;

    const VehicleState* find(VehicleId id) const;
};

struct EstimationContext {
    Corridor corridor;
    SignalPlan signal;
    Constants c;
};

struct LaneEntry {
    VehicleState state;
    bool participates = true;   // false: transparent placeholder that inherits its predecessor
};

// Both lanes sorted downstream first; ties put real before virtual, then lower id.
struct VirtualLanes {
    std::vector<LaneEntry> general;
    std::vector<LaneEntry> bus;
};

struct LanePartition {
    std::vector<VehicleId> passed;
    std::vector<VehicleId> between;
    std::vector<VehicleId> upstream;
};

struct EstimateRow {
    VehicleId id = 0;
    VehicleClass cls = VehicleClass::CAV;
    Movement movement = Movement::Through;
    bool is_virtual = false;
    bool participates = true;
    double t_dep = 0.0;       // stop bar; pocket entrance for right-turners upstream of it
    // Departure the entry would get if it joined the stop-bar chain at its position
    // without delaying anyone. -inf where not defined (pocket approach).
    double probe = -kInf;
    std::optional<Crossing> at_pocket;
};

struct EstimateTable {
    double k = 0.0;
    std::vector<EstimateRow> general;
    std::vector<EstimateRow> bus;
    std::vector<EstimateRow> pocket;

    const EstimateRow* real(VehicleId id) const;
    const EstimateRow* mirror(VehicleId id) const;
};

// Vehicles whose cost enters the objective, split by where they started.
struct CostPopulation {
    std::vector<VehicleId> general;
    std::vector<VehicleId> bus;
};

struct Cost {
    double z = 0.0;
    double t_bus = 0.0;
    double t_car = 0.0;
};

// Mirrors every general-lane CAV into the bus lane. Granted CAVs swap roles:
// the mirror participates and the general-lane original becomes transparent.
VirtualLanes sync_virtual(const Snapshot& s, std::span<const VehicleId> granted);

LanePartition partition(const std::vector<LaneEntry>& lane, Lane which, const Corridor& corridor);

// Stop-bar gate: pushes t into the next green; HDVs additionally pay the start-up loss
// when they would arrive in red or in the first moments of green.
double signal_gate(double t, VehicleClass cls, const SignalPlan& signal, const Constants& c);

std::vector<EstimateRow> departure_busable(const std::vector<LaneEntry>& bus, const Snapshot& s,
                                           const EstimationContext& ctx);

// Pocket-entrance crossing (time, speed) for each bus-lane entry upstream of it; nullopt elsewhere.
std::vector<std::optional<Crossing>> pocket_crossing(const std::vector<LaneEntry>& bus, const Snapshot& s,
                                                     const EstimationContext& ctx);

struct ChainHead {
    double t = -kInf;
    VehicleClass cls = VehicleClass::CAV;
};

// Stop-bar departures for the upstream bus-lane entries, chaining each through
// vehicle to the nearest through vehicle ahead. Right-turn rows carry their pocket time.
std::vector<EstimateRow> reorganize_through(const std::vector<LaneEntry>& bus,
                                            const std::vector<std::optional<Crossing>>& crossings,
                                            ChainHead head, double k, const EstimationContext& ctx);

std::vector<EstimateRow> departure_general(const std::vector<LaneEntry>& general, const Snapshot& s,
                                           const EstimationContext& ctx);

EstimateTable estimate(const Snapshot& s, std::span<const VehicleId> granted, const EstimationContext& ctx);

Cost weighted_cost(const EstimateTable& table, const CostPopulation& population,
                   std::span<const VehicleId> granted, double omega_p);

// Shared arithmetic of the objective: car values in population order (general ids,
// then non-bus bus-lane ids), bus values in order. Empty groups contribute 0.
Cost aggregate_cost(std::span<const double> car_values, std::span<const double> bus_values, double omega_p);

}  // namespace dbpl
