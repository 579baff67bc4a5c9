#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace dbpl {

enum class VehicleClass { HDV, CAV, CAB };
enum class Movement { Through, RightTurn };
enum class Lane { General, Bus, Pocket, Departed };
enum class Phase { Red, Green };
enum class Strategy { EBL, DBPL };

using VehicleId = std::uint32_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

std::string_view to_string(VehicleClass c);
std::string_view to_string(Movement m);
std::string_view to_string(Lane l);
std::string_view to_string(Strategy s);

// Shared vehicle and car-following constants. Defaults are the benchmark values.
struct Constants {
    double car_length = 4.0;
    double bus_length = 8.0;
    double v_max = 14.0;
    double a_max = 2.0;
    double tau_cav = 1.0;     // temporal displacement, CAV and CAB followers
    double tau_hdv = 2.0;
    double gap_cav = 1.5;     // standstill bumper gap, CAV and CAB followers
    double gap_hdv = 2.5;
    double startup_accel = 1.5;   // HDV time to start and reach the stop bar
    double startup_react = 0.4;   // HDV reaction to green
    double d_safe = 6.0;

    double length_of(VehicleClass c) const { return c == VehicleClass::CAB ? bus_length : car_length; }
    double hdv_startup_loss() const { return startup_react + startup_accel; }
    bool operator==(const Constants&) const = default;
};

struct Dwell {
    double remaining_s = 0.0;
    int stop_index = 0;
    bool operator==(const Dwell&) const = default;
};

// Time and speed at which a vehicle passed a reference line.
struct Crossing {
    double t = 0.0;
    double v = 0.0;
    bool operator==(const Crossing&) const = default;
};

struct VehicleState {
    VehicleId id = 0;
    VehicleClass cls = VehicleClass::HDV;
    Movement movement = Movement::Through;
    Lane lane = Lane::General;
    double x = 0.0;
    double v = 0.0;
    double length = 4.0;
    bool is_virtual = false;
    std::optional<Dwell> dwell;
    std::optional<double> t_cross;     // stop bar (through) once passed
    std::optional<Crossing> w_cross;   // pocket entrance once passed

    bool is_car() const { return cls != VehicleClass::CAB; }
    bool operator==(const VehicleState&) const = default;
};

struct Corridor {
    double x_c = 400.0;
    double x_n = 370.0;
    std::optional<double> x_w;
    double x_s = 150.0;
    double control_len = 400.0;
    double no_change_len = 30.0;
    double pocket_len = 130.0;
    int stop_capacity = 2;

    bool has_pocket() const { return x_w.has_value(); }
    bool operator==(const Corridor&) const = default;

    // Builds the geometry from lengths; throws std::invalid_argument naming the
    // offending quantity when the ordering 0 < x_s < x_w < x_n < x_c breaks.
    static Corridor make(double control_len, double no_change_len, double x_s, bool pocket,
                         double pocket_len, int stop_capacity);
};

struct SignalPlan {
    double t_c = 60.0;
    double t_r = 30.0;

    double t_g() const { return t_c - t_r; }
    double cycle_start(double t) const;
    double green_start(double t) const { return cycle_start(t) + t_r; }
    bool operator==(const SignalPlan&) const = default;
};

Phase phase_at(const SignalPlan& signal, double t);

// Earliest instant >= t at which the signal is green.
double earliest_green(const SignalPlan& signal, double t);

struct PlanningWindow {
    double k0 = 0.0;
    double dk = 1.0;
    double h = 10.0;

    std::size_t size() const;
    double at(std::size_t j) const { return k0 + static_cast<double>(j) * dk; }
    std::vector<double> steps() const;
};

struct Grant {
    VehicleId vehicle = 0;
    std::optional<VehicleId> predecessor;
    std::optional<VehicleId> follower;
    bool operator==(const Grant&) const = default;
};

struct RowPlan {
    double k_c = 0.0;
    std::vector<Grant> grants;
    double objective = 0.0;

    bool empty() const { return grants.empty(); }
};

}  // namespace dbpl
