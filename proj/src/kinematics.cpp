#include "dbpl/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dbpl {

namespace {
constexpr double kSpeedSlack = 1e-9;
}

double min_travel_time(double dist, double v0, double vmax, double amax) {
    if (!(dist >= 0)) throw std::domain_error("min_travel_time: negative distance");
    if (!(v0 >= 0) || v0 > vmax + kSpeedSlack) throw std::domain_error("min_travel_time: v0 outside [0, vmax]");
    if (!(amax > 0)) throw std::domain_error("min_travel_time: amax must be positive");
    v0 = std::min(v0, vmax);
    if (dist == 0) return 0.0;
    const double t_acc = (vmax - v0) / amax;
    const double s_acc = (vmax + v0) / 2.0 * t_acc;
    if (s_acc > dist) return (-v0 + std::sqrt(v0 * v0 + 2.0 * amax * dist)) / amax;
    return (dist - s_acc) / vmax + t_acc;
}

double speed_after(double dist, double v0, double vmax, double amax) {
    v0 = std::clamp(v0, 0.0, vmax);
    return std::min(vmax, std::sqrt(v0 * v0 + 2.0 * amax * std::max(0.0, dist)));
}

NewellParams newell_params(VehicleClass follower, VehicleClass leader, const Constants& c) {
    const bool human = follower == VehicleClass::HDV;
    return NewellParams{human ? c.tau_hdv : c.tau_cav,
                        (human ? c.gap_hdv : c.gap_cav) + c.length_of(leader)};
}

double min_headway(NewellParams p, double v) {
    if (!(v > 0)) throw std::domain_error("min_headway: speed must be positive");
    return p.tau + p.d / v;
}

double min_gap(NewellParams p, double v) {
    return p.tau * v + p.d;
}

}  // namespace dbpl
