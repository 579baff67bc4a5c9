#pragma once

#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbpl/controller.hpp"
#include "dbpl/domain.hpp"
#include "dbpl/estimator.hpp"
#include "dbpl/optimizer.hpp"
#include "dbpl/scenario.hpp"

namespace dbpl {

struct IdmParams {
    double v0 = 14.0;
    double T = 2.0;
    double a = 2.0;
    double b = 2.0;
    double s0 = 2.5;
    double delta = 4.0;
};

IdmParams hdv_idm(const Constants& c);
IdmParams cav_idm(const Constants& c);

// Standard IDM clamped to [-a, a]. A non-positive gap returns -a and bumps *incidents.
double idm_accel(const IdmParams& p, double v, double gap, double leader_v, long* incidents = nullptr);

// Interaction-only variant used by automated vehicles: a * (1 - (s*/s)^2).
double follow_accel(const IdmParams& p, double v, double gap, double leader_v);

// Largest speed after one step that keeps x' <= rear' - margin and still allows a stop
// behind a leader braking at b. Returns -inf when no such speed exists.
double safe_speed(double x, double v, double leader_rear_next, double leader_v_next, double margin, double b,
                  double dt);

// Largest speed after one step that keeps the front at or behind x_bar until time gate.
// Returns -inf when even v_lo violates it, +inf when the gate has passed.
double gated_speed(double t, double x, double v, double gate, double x_bar, double v_lo, double v_hi, double b,
                   double dt);

struct CavProfile {
    double target_cross = 0.0;   // planned stop-bar time
    double cruise = 0.0;         // speed the vehicle holds until the bar
    double accel = 0.0;          // command for this step
};

// Earliest green-window crossing no sooner than the leader's crossing plus headway,
// met with the fastest cruise speed that does not arrive early.
CavProfile cav_plan(double t, double dist, double v, double leader_cross, double headway, const SignalPlan& signal,
                    const Constants& c, double dt);

// Time to cover dist when speed moves from v to u at rate a, then holds u.
double cruise_time(double dist, double v, double u, double a);

struct Arrival {
    VehicleId id = 0;
    double t = 0.0;
    VehicleClass cls = VehicleClass::HDV;
    Movement movement = Movement::Through;
    double dwell = 0.0;
};

// Both arrival streams for a run, sorted by time. Depends only on the seed and demand
// fields, never on the strategy.
std::vector<Arrival> generate_arrivals(const ScenarioConfig& cfg);

enum class BusStage { Approach, Dwell, Depart };

struct SimVehicle {
    VehicleState s;
    double arrival = 0.0;
    double entry = 0.0;
    double dwell_draw = 0.0;
    BusStage stage = BusStage::Approach;
    std::optional<double> recommended_at;
    bool granted = false;
    std::string lanes;
    std::minstd_rand rng;
    double exit = 0.0;
    int berth = -1;

    bool stop_mode = false;
    double t_clear = 0.0;
    double t_worst = 0.0;
};

struct SafetyCounters {
    long emergency = 0;
    long red_crossings = 0;
    long overlaps = 0;
    long purity = 0;
    bool operator==(const SafetyCounters&) const = default;
};

class SafetyFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LaneAction { Stay, ToBus, ToPocket };

class Plant {
public:
    explicit Plant(const ScenarioConfig& cfg);

    // Control-free replay mode: no noise, no grant execution, departed vehicles kept.
    void set_forecast_mode() { forecast_ = true; }

    // Lane changes, longitudinal update and crossings for one step.
    void step();
    Snapshot snapshot() const;

    // Places a vehicle at the entry if it fits; returns false otherwise.
    bool try_enter(const Arrival& a);

    LaneAction right_turn_logic(const SimVehicle& v) const;

    double t = 0.0;
    std::vector<SimVehicle> vehicles;
    std::vector<SimVehicle> exited;
    BoundaryRecord general_rec;
    BoundaryRecord bus_rec;
    SafetyCounters counters;
    std::vector<Event> events;

    const ScenarioConfig& config() const { return cfg_; }

private:
    std::vector<std::size_t> lane_order(Lane lane) const;
    bool lane_change_ok(const SimVehicle& v, Lane target, double min_gap) const;
    void execute_lane_changes();
    void longitudinal();
    void check_overlaps();

    ScenarioConfig cfg_;
    double dt_ = 1.0;
    bool forecast_ = false;
};

struct VehicleRecord {
    VehicleId id = 0;
    VehicleClass cls = VehicleClass::HDV;
    Movement movement = Movement::Through;
    double arrival = 0.0;
    double entry = 0.0;
    double exit = 0.0;
    std::string lanes;
    bool granted = false;

    double travel_time() const { return exit - arrival; }
};

struct GroupStat {
    std::size_t count = 0;
    double mean = 0.0;
};

struct Aggregates {
    GroupStat car, hdv, cav, cab, through_car, right_turn_car;
    std::size_t arrivals = 0, departed = 0, in_corridor = 0, queued = 0;
    SafetyCounters counters;
};

Aggregates aggregate(const std::vector<VehicleRecord>& records, double warmup);

class Simulator {
public:
    Simulator(const ScenarioConfig& cfg, std::vector<Arrival> arrivals);

    void set_trajectory_sink(std::ostream* out);
    bool done() const;
    void step();
    void run();

    Snapshot snapshot() const { return plant_.snapshot(); }
    Forecast forecast(double k0) const;

    const Plant& plant() const { return plant_; }
    Plant& plant() { return plant_; }
    const ControllerState& controller() const { return ctrl_; }
    const std::vector<VehicleRecord>& records() const { return records_; }
    const std::vector<Event>& events() const { return events_; }
    Aggregates aggregates() const;
    std::size_t optimizations() const { return optimizations_; }

    void write_metrics(std::ostream& out) const;
    void write_events(std::ostream& out) const;

private:
    void apply_commands(const std::vector<Command>& commands);
    void spawn();
    void record_exits();

    ScenarioConfig cfg_;
    EstimationContext ctx_;
    OptimizerSettings settings_;
    Plant plant_;
    ControllerState ctrl_;
    std::vector<Arrival> arrivals_;
    std::size_t next_arrival_ = 0;
    std::vector<Arrival> queue_general_;
    std::vector<Arrival> queue_bus_;
    std::vector<VehicleRecord> records_;
    std::vector<Event> events_;
    std::ostream* trajectory_ = nullptr;
    std::size_t optimizations_ = 0;
};

void write_trajectory_header(std::ostream& out);

}  // namespace dbpl
