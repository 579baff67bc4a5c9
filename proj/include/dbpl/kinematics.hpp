#pragma once

#include "dbpl/domain.hpp"

namespace dbpl {

struct NewellParams {
    double tau = 1.0;
    double d = 5.5;   // front-to-front standstill spacing
    bool operator==(const NewellParams&) const = default;
};

// Shortest time to cover dist starting at v0, accelerating at amax up to vmax
// and cruising after. Throws std::domain_error on dist < 0 or v0 outside [0, vmax].
double min_travel_time(double dist, double v0, double vmax, double amax);

// Speed reached after the same bang-cruise profile covers dist.
double speed_after(double dist, double v0, double vmax, double amax);

NewellParams newell_params(VehicleClass follower, VehicleClass leader, const Constants& c = {});

// Throws std::domain_error for v <= 0.
double min_headway(NewellParams p, double v);
double min_gap(NewellParams p, double v);

}  // namespace dbpl
