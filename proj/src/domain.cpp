#include "dbpl/domain.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dbpl {

std::string_view to_string(VehicleClass c) {
    switch (c) {
        case VehicleClass::HDV: return "HDV";
        case VehicleClass::CAV: return "CAV";
        case VehicleClass::CAB: return "CAB";
    }
    return "?";
}

std::string_view to_string(Movement m) {
    return m == Movement::Through ? "through" : "right";
}

std::string_view to_string(Lane l) {
    switch (l) {
        case Lane::General: return "general";
        case Lane::Bus: return "bus";
        case Lane::Pocket: return "pocket";
        case Lane::Departed: return "departed";
    }
    return "?";
}

std::string_view to_string(Strategy s) {
    return s == Strategy::EBL ? "ebl" : "dbpl";
}

Corridor Corridor::make(double control_len, double no_change_len, double x_s, bool pocket,
                        double pocket_len, int stop_capacity) {
    Corridor c;
    c.control_len = control_len;
    c.no_change_len = no_change_len;
    c.pocket_len = pocket_len;
    c.x_c = control_len;
    c.x_n = control_len - no_change_len;
    c.x_s = x_s;
    c.stop_capacity = stop_capacity;
    if (!(control_len > 0)) throw std::invalid_argument("control_len");
    if (!(no_change_len >= 0 && no_change_len < control_len)) throw std::invalid_argument("no_change_len");
    if (!(stop_capacity >= 1)) throw std::invalid_argument("stop_capacity");
    if (pocket) {
        if (!(pocket_len > no_change_len && pocket_len < control_len)) throw std::invalid_argument("pocket_len");
        c.x_w = control_len - pocket_len;
        if (!(x_s > 0 && x_s < *c.x_w)) throw std::invalid_argument("x_s");
    } else if (!(x_s > 0 && x_s < c.x_n)) {
        throw std::invalid_argument("x_s");
    }
    return c;
}

double SignalPlan::cycle_start(double t) const {
    return std::floor(t / t_c) * t_c;
}

Phase phase_at(const SignalPlan& signal, double t) {
    const double in_cycle = t - signal.cycle_start(t);
    return in_cycle < signal.t_r ? Phase::Red : Phase::Green;
}

double earliest_green(const SignalPlan& signal, double t) {
    if (phase_at(signal, t) == Phase::Green) return t;
    return signal.green_start(t);
}

std::size_t PlanningWindow::size() const {
    return static_cast<std::size_t>(std::llround(h / dk)) + 1;
}

std::vector<double> PlanningWindow::steps() const {
    std::vector<double> out(size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = at(j);
    return out;
}

}  // namespace dbpl
