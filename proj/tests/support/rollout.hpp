#pragma once

// Step-by-step ground truth for departure estimates: every vehicle drives at full
// acceleration up to the speed limit, is released across the pocket entrance and the
// stop bar no earlier than its leader plus the close-follow headway, and waits for green.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "dbpl/domain.hpp"
#include "dbpl/estimator.hpp"
#include "dbpl/kinematics.hpp"

namespace dbpl::testing {

inline constexpr double kRolloutDt = 1e-3;

// Time and speed when a vehicle starting at (x, v) reaches target, advancing in small
// steps of constant acceleration; the step where the speed limit is hit is split.
inline Crossing integrate_to(double t, double x, double v, double target, const Constants& c,
                             double dt = kRolloutDt) {
    while (x < target) {
        double h = dt;
        double acc = v < c.v_max ? c.a_max : 0.0;
        if (acc > 0 && v + acc * h > c.v_max) h = (c.v_max - v) / acc;
        const double dx = v * h + 0.5 * acc * h * h;
        if (x + dx >= target) {
            const double rem = target - x;
            const double tau = acc > 0 ? 2.0 * rem / (v + std::sqrt(v * v + 2.0 * acc * rem)) : rem / v;
            return {t + tau, v + acc * tau};
        }
        x += dx;
        v = acc > 0 && h < dt ? c.v_max : v + acc * h;
        t += h;
    }
    return {t, v};
}

inline double close_headway(VehicleClass follower, VehicleClass leader, const Constants& c) {
    const NewellParams p = newell_params(follower, leader, c);
    return p.tau + p.d / c.v_max;
}

inline double green_release(double t, VehicleClass cls, const SignalPlan& s, const Constants& c) {
    const double start = std::floor(t / s.t_c) * s.t_c;
    double release = start + s.t_r;
    if (cls == VehicleClass::HDV) release += c.startup_react + c.startup_accel;
    return std::max(t, release);
}

struct RolloutHead {
    bool set = false;
    double t = 0.0;
    double v = 0.0;
    VehicleClass cls = VehicleClass::CAV;
};

inline double release_at_bar(double arrive, VehicleClass cls, const RolloutHead& head, const EstimationContext& ctx) {
    double t = arrive;
    if (head.set) t = std::max(t, head.t + close_headway(cls, head.cls, ctx.c));
    t = green_release(t, cls, ctx.signal, ctx.c);
    if (head.set) t = std::max(t, std::nextafter(head.t, kInf));
    return t;
}

// Departure (stop bar, or pocket entrance for right-turners) of every real vehicle that
// moves under the given grants. Granted CAVs drive in the bus lane from their position.
inline std::map<VehicleId, double> rollout(const Snapshot& s, std::span<const VehicleId> granted,
                                           const EstimationContext& ctx) {
    const Corridor& cor = ctx.corridor;
    const Constants& c = ctx.c;
    std::map<VehicleId, double> out;
    std::vector<VehicleState> general, bus;
    for (const auto& v : s.vehicles) {
        if (v.is_virtual) continue;
        if (v.lane == Lane::Pocket) out[v.id] = v.w_cross ? v.w_cross->t : s.t;
        const bool moved = std::find(granted.begin(), granted.end(), v.id) != granted.end();
        if (v.lane == Lane::General && !moved) general.push_back(v);
        if (v.lane == Lane::Bus || (v.lane == Lane::General && moved)) bus.push_back(v);
    }
    auto order = [](const VehicleState& a, const VehicleState& b) {
        if (a.x != b.x) return a.x > b.x;
        return a.id < b.id;
    };
    std::sort(general.begin(), general.end(), order);
    std::sort(bus.begin(), bus.end(), order);

    auto run_bar = [&](std::vector<VehicleState>& lane, RolloutHead head, bool stop_at_pocket) {
        std::vector<VehicleState> rest;
        for (const auto& v : lane) {
            if (stop_at_pocket && v.x < *cor.x_w) {
                rest.push_back(v);
                continue;
            }
            if (v.x >= cor.x_c) {
                out[v.id] = v.t_cross.value_or(s.t);
            } else {
                const Crossing arrive = integrate_to(s.t, v.x, std::clamp(v.v, 0.0, c.v_max), cor.x_c, c);
                out[v.id] = release_at_bar(arrive.t, v.cls, head, ctx);
            }
            head = {true, out[v.id], 0.0, v.cls};
        }
        lane = rest;
        return head;
    };

    RolloutHead g_head;
    if (s.general.t_stopbar > -kInf) g_head = {true, s.general.t_stopbar, 0.0, s.general.stopbar_cls};
    run_bar(general, g_head, false);

    RolloutHead b_head;
    if (s.bus.t_stopbar > -kInf) b_head = {true, s.bus.t_stopbar, 0.0, s.bus.stopbar_cls};
    b_head = run_bar(bus, b_head, cor.has_pocket());
    if (bus.empty()) return out;

    RolloutHead w_head;
    if (s.bus.pocket) w_head = {true, s.bus.pocket->t, s.bus.pocket->v, s.bus.pocket_cls};
    for (const auto& v : s.vehicles)
        if (!v.is_virtual && v.w_cross && (!w_head.set || v.w_cross->t > w_head.t))
            w_head = {true, v.w_cross->t, v.w_cross->v, v.cls};

    for (const auto& v : bus) {
        const double v0 = std::clamp(v.v, 0.0, c.v_max);
        const Crossing arrive = integrate_to(s.t, v.x, v0, *cor.x_w, c);
        double tw = arrive.t;
        double vw = std::min(c.v_max, v0 + c.a_max * (tw - s.t));
        if (w_head.set) {
            const double hw = close_headway(v.cls, w_head.cls, c);
            tw = std::max({tw, w_head.t + hw, std::nextafter(w_head.t, kInf)});
            vw = std::min({c.v_max, v0 + c.a_max * (tw - s.t), w_head.v + c.a_max * hw});
        }
        w_head = {true, tw, vw, v.cls};
        if (v.movement == Movement::RightTurn) {
            out[v.id] = tw;
            continue;
        }
        const Crossing bar = integrate_to(tw, *cor.x_w, vw, cor.x_c, c);
        out[v.id] = release_at_bar(bar.t, v.cls, b_head, ctx);
        b_head = {true, out[v.id], 0.0, v.cls};
    }
    return out;
}

// Random snapshot with at most max_vehicles vehicles on a benchmark corridor.
struct RandomSnapshot {
    Snapshot snapshot;
    std::vector<VehicleId> granted;
};

inline RandomSnapshot random_snapshot(std::mt19937_64& rng, const EstimationContext& ctx, int max_vehicles) {
    const Corridor& cor = ctx.corridor;
    const Constants& c = ctx.c;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RandomSnapshot r;
    Snapshot& s = r.snapshot;
    s.t = std::floor(unit(rng) * 240.0);
    const int n = 1 + static_cast<int>(unit(rng) * max_vehicles);
    VehicleId next_id = 1;
    double general_x = cor.x_c + 20.0, bus_x = cor.x_c + 20.0;
    for (int i = 0; i < n; ++i) {
        VehicleState v;
        v.id = next_id++;
        const bool on_bus = unit(rng) < 0.5;
        double& slot = on_bus ? bus_x : general_x;
        v.v = unit(rng) < 0.3 ? 0.0 : unit(rng) * c.v_max;
        if (on_bus) {
            v.lane = Lane::Bus;
            const double pick = unit(rng);
            v.cls = pick < 0.4 ? VehicleClass::CAB : (pick < 0.7 ? VehicleClass::CAV : VehicleClass::HDV);
        } else {
            v.lane = Lane::General;
            v.cls = unit(rng) < 0.5 ? VehicleClass::CAV : VehicleClass::HDV;
        }
        v.length = c.length_of(v.cls);
        v.x = slot - (slot > cor.x_c ? 15.0 : 0.0) - 6.0 - unit(rng) * 60.0;
        if (v.x < 0) break;
        if (on_bus && cor.has_pocket() && v.x < *cor.x_w && v.cls != VehicleClass::CAB && unit(rng) < 0.5)
            v.movement = Movement::RightTurn;
        if (on_bus && v.cls != VehicleClass::CAB && v.movement == Movement::Through && v.cls == VehicleClass::HDV)
            v.cls = VehicleClass::CAV;
        slot = v.x - v.length;
        if (v.x >= cor.x_c) {
            v.v = c.v_max;
            v.t_cross = s.t - unit(rng) * 2.0;
        }
        s.vehicles.push_back(v);
        if (v.lane == Lane::General && v.cls == VehicleClass::CAV && v.x < cor.x_c && unit(rng) < 0.3)
            r.granted.push_back(v.id);
    }
    if (unit(rng) < 0.5) {
        s.general.t_stopbar = s.t - unit(rng) * 3.0;
        s.general.stopbar_cls = unit(rng) < 0.5 ? VehicleClass::HDV : VehicleClass::CAV;
    }
    if (unit(rng) < 0.5) {
        s.bus.t_stopbar = s.t - unit(rng) * 3.0;
        s.bus.stopbar_cls = unit(rng) < 0.5 ? VehicleClass::CAB : VehicleClass::CAV;
    }
    if (cor.has_pocket() && unit(rng) < 0.3) {
        VehicleState p;
        p.id = next_id++;
        p.cls = VehicleClass::HDV;
        p.movement = Movement::RightTurn;
        p.lane = Lane::Pocket;
        p.x = *cor.x_w + unit(rng) * 50.0;
        p.v = unit(rng) * c.v_max;
        p.w_cross = Crossing{s.t - unit(rng) * 4.0, unit(rng) * c.v_max};
        s.vehicles.push_back(p);
    }
    if (cor.has_pocket() && unit(rng) < 0.5) {
        s.bus.pocket = Crossing{s.t - unit(rng) * 3.0, unit(rng) * c.v_max};
        s.bus.pocket_cls = VehicleClass::CAV;
    }
    // The passed vehicles are the latest stop-bar crossings.
    for (const auto& v : s.vehicles) {
        if (!v.t_cross) continue;
        BoundaryRecord& rec = v.lane == Lane::Bus ? s.bus : s.general;
        rec.t_stopbar = std::min(rec.t_stopbar, *v.t_cross);
    }
    return r;
}

}  // namespace dbpl::testing
