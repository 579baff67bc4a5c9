#include "dbpl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dbpl/kinematics.hpp"

namespace dbpl {

namespace {

constexpr double kFollowMargin = 0.5;
constexpr double kBarMargin = 0.01;
constexpr double kPocketGap = 2.0;
constexpr double kHdvClearMargin = 0.5;
constexpr double kCavClearMargin = 0.25;
constexpr double kHdvCrossAccel = 1.0;   // conservative acceleration for the go/stop check

double stopping_point(double x, double v, double b) { return x + v * v / (2.0 * b); }

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Position and speed at tau within a step that starts with a hold, then
// changes speed uniformly to v_next. A vehicle that stops inside the step
// brakes at stop_decel and stands for the rest of it.
struct StepMotion {
    double x, v, v_next, hold, dt;
    double stop_decel = 0.0;

    bool stops() const { return stop_decel > 0 && v_next == 0.0 && v > 0.0; }
    double accel() const { return hold < dt ? (v_next - v) / (dt - hold) : 0.0; }
    double pos(double tau) const {
        if (stops()) {
            const double ts = std::min(tau, v / stop_decel);
            return x + v * ts - 0.5 * stop_decel * ts * ts;
        }
        const double run = std::max(0.0, tau - hold);
        return x + v * tau + 0.5 * accel() * run * run;
    }
    double speed(double tau) const {
        if (stops()) return std::max(0.0, v - stop_decel * tau);
        return v + accel() * std::max(0.0, tau - hold);
    }
    double end() const { return pos(dt); }

    double time_at(double target) const {
        double lo = 0.0, hi = dt;
        for (int i = 0; i < 100; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (pos(mid) >= target) hi = mid; else lo = mid;
        }
        return hi;
    }
};

}  // namespace

IdmParams hdv_idm(const Constants& c) {
    return {c.v_max, c.tau_hdv, c.a_max, c.a_max, c.gap_hdv, 4.0};
}

IdmParams cav_idm(const Constants& c) {
    return {c.v_max, c.tau_cav, c.a_max, c.a_max, c.gap_cav, 4.0};
}

double idm_accel(const IdmParams& p, double v, double gap, double leader_v, long* incidents) {
    if (!(gap > 0)) {
        if (incidents) ++*incidents;
        return -p.a;
    }
    const double s_star = p.s0 + std::max(0.0, v * p.T + v * (v - leader_v) / (2.0 * std::sqrt(p.a * p.b)));
    const double acc = p.a * (1.0 - std::pow(v / p.v0, p.delta) - (s_star / gap) * (s_star / gap));
    return std::clamp(acc, -p.a, p.a);
}

double follow_accel(const IdmParams& p, double v, double gap, double leader_v) {
    if (!(gap > 0)) return -p.a;
    const double s_star = p.s0 + std::max(0.0, v * p.T + v * (v - leader_v) / (2.0 * std::sqrt(p.a * p.b)));
    return std::clamp(p.a * (1.0 - (s_star / gap) * (s_star / gap)), -p.a, p.a);
}

double safe_speed(double x, double v, double leader_rear_next, double leader_v_next, double margin, double b,
                  double dt) {
    const double g = leader_rear_next - x - v * dt / 2.0;
    const double c = g - margin + leader_v_next * leader_v_next / (2.0 * b);
    double out = -kInf;
    if (c >= -1e-9) {
        const double by_gap = 2.0 * (g - margin) / dt;
        const double by_stop = (-b * dt + std::sqrt(b * b * dt * dt + 8.0 * b * std::max(c, 0.0))) / 2.0;
        out = std::min(by_gap, by_stop);
    }
    if (out < 0.0) {
        // Braking at b stops the vehicle inside the step.
        const double rear_sp = stopping_point(leader_rear_next, leader_v_next, b) - margin;
        if (v <= b * dt && stopping_point(x, v, b) <= rear_sp + 1e-6) out = 0.0;
    }
    return out;
}

double gated_speed(double t, double x, double v, double gate, double x_bar, double v_lo, double v_hi, double b,
                   double dt) {
    if (gate <= t) return kInf;
    auto reach = [&](double vn) {
        if (vn == 0.0 && v <= b * dt) return stopping_point(x, v, b);
        if (gate >= t + dt) {
            const double xn = x + (v + vn) * dt / 2.0;
            const double r = gate - t - dt;
            return vn / b >= r ? xn + vn * r - b * r * r / 2.0 : stopping_point(xn, vn, b);
        }
        const double tau = gate - t;
        return x + v * tau + (vn - v) / dt * tau * tau / 2.0;
    };
    if (reach(v_lo) > x_bar + 1e-6) return -kInf;
    if (reach(v_hi) <= x_bar) return v_hi;
    double lo = v_lo, hi = v_hi;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (reach(mid) <= x_bar) lo = mid; else hi = mid;
    }
    return lo;
}

double cruise_time(double dist, double v, double u, double a) {
    if (dist <= 0) return 0.0;
    if (u == v) return u > 0 ? dist / u : kInf;
    const double t_ch = std::abs(u - v) / a;
    const double s_ch = (u + v) / 2.0 * t_ch;
    if (s_ch >= dist) {
        if (u > v) return (-v + std::sqrt(v * v + 2.0 * a * dist)) / a;
        return (v - std::sqrt(std::max(0.0, v * v - 2.0 * a * dist))) / a;
    }
    return u > 0 ? t_ch + (dist - s_ch) / u : kInf;
}

CavProfile cav_plan(double t, double dist, double v, double leader_cross, double headway, const SignalPlan& signal,
                    const Constants& c, double dt) {
    const double vmax = c.v_max;
    const double t_free = t + min_travel_time(std::max(0.0, dist), std::min(v, vmax), vmax, c.a_max);
    const double t_min = std::max(t_free, leader_cross + headway);
    CavProfile p;
    p.target_cross = earliest_green(signal, t_min);
    if (p.target_cross <= t_free + 1e-9) {
        p.cruise = vmax;
    } else {
        const double avail = p.target_cross - t;
        double lo = 0.0, hi = vmax;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (cruise_time(dist, v, mid, c.a_max) >= avail) lo = mid; else hi = mid;
        }
        p.cruise = lo;
    }
    p.accel = std::clamp((p.cruise - v) / dt, -c.a_max, c.a_max);
    return p;
}

std::vector<Arrival> generate_arrivals(const ScenarioConfig& cfg) {
    std::vector<Arrival> out;
    std::mt19937_64 car_rng(cfg.seed);
    if (cfg.q_veh > 0) {
        std::exponential_distribution<double> headway(cfg.q_veh / 3600.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double t = 0.0;
        while (true) {
            t += headway(car_rng);
            const double u_cls = u(car_rng);
            const double u_turn = u(car_rng);
            if (t >= cfg.duration) break;
            Arrival a;
            a.t = t;
            a.cls = u_cls < cfg.mpr ? VehicleClass::CAV : VehicleClass::HDV;
            a.movement = u_turn < cfg.right_turn_ratio ? Movement::RightTurn : Movement::Through;
            out.push_back(a);
        }
    }
    std::mt19937_64 bus_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    std::normal_distribution<double> interval(cfg.bus_interval_mean, cfg.bus_interval_std);
    std::normal_distribution<double> dwell(cfg.dwell_mean, cfg.dwell_std);
    double t = 0.0;
    while (true) {
        double gap = interval(bus_rng);
        while (gap < 10.0) gap = interval(bus_rng);
        double d = dwell(bus_rng);
        while (d < 5.0) d = dwell(bus_rng);
        t += gap;
        if (t >= cfg.duration) break;
        Arrival a;
        a.t = t;
        a.cls = VehicleClass::CAB;
        a.dwell = d;
        out.push_back(a);
    }
    std::stable_sort(out.begin(), out.end(), [](const Arrival& a, const Arrival& b) { return a.t < b.t; });
    VehicleId id = 1;
    for (auto& a : out) a.id = id++;
    return out;
}

Plant::Plant(const ScenarioConfig& cfg) : cfg_(cfg) {}

std::vector<std::size_t> Plant::lane_order(Lane lane) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < vehicles.size(); ++i)
        if (vehicles[i].s.lane == lane) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& va = vehicles[a].s;
        const auto& vb = vehicles[b].s;
        if (va.x != vb.x) return va.x > vb.x;
        return va.id < vb.id;
    });
    return idx;
}

Snapshot Plant::snapshot() const {
    Snapshot s;
    s.t = t;
    s.general = general_rec;
    s.bus = bus_rec;
    s.vehicles.reserve(vehicles.size() + exited.size());
    for (const auto& v : vehicles) {
        VehicleState st = v.s;
        if (v.s.cls == VehicleClass::CAB && v.stage == BusStage::Dwell)
            st.dwell = Dwell{v.dwell_draw, std::max(0, v.berth)};
        s.vehicles.push_back(st);
    }
    for (const auto& v : exited) s.vehicles.push_back(v.s);
    return s;
}

LaneAction Plant::right_turn_logic(const SimVehicle& v) const {
    const auto& cor = cfg_.corridor;
    if (v.s.movement != Movement::RightTurn || !cor.x_w) return LaneAction::Stay;
    if (v.s.lane == Lane::General && v.s.x >= *cor.x_w - cfg_.d_rt && v.s.x < cor.x_n) return LaneAction::ToBus;
    if (v.s.lane == Lane::Bus && v.s.x >= *cor.x_w) return LaneAction::ToPocket;
    return LaneAction::Stay;
}

bool Plant::lane_change_ok(const SimVehicle& sv, Lane target, double min_gap) const {
    const double b = cfg_.vehicle.a_max;
    const VehicleState& me = sv.s;
    const VehicleState* ahead = nullptr;
    const VehicleState* behind = nullptr;
    for (const auto& o : vehicles) {
        if (o.s.lane != target || o.s.id == me.id) continue;
        if (o.s.x >= me.x) {
            if (!ahead || o.s.x < ahead->x) ahead = &o.s;
        } else if (!behind || o.s.x > behind->x) {
            behind = &o.s;
        }
    }
    if (ahead) {
        const double rear = ahead->x - ahead->length;
        if (rear - me.x < min_gap) return false;
        if (stopping_point(me.x, me.v, b) > stopping_point(rear, ahead->v, b) - kFollowMargin) return false;
    }
    if (behind) {
        const double rear = me.x - me.length;
        if (rear - behind->x < min_gap) return false;
        if (stopping_point(behind->x, behind->v, b) > stopping_point(rear, me.v, b) - kFollowMargin) return false;
    }
    return true;
}

void Plant::execute_lane_changes() {
    const auto& cor = cfg_.corridor;
    const double d_safe = cfg_.vehicle.d_safe;
    if (!forecast_) {
        for (std::size_t i : lane_order(Lane::General)) {
            SimVehicle& v = vehicles[i];
            if (!v.recommended_at || *v.recommended_at > t + 1e-9) continue;
            if (!(v.s.x < cor.x_n) || !lane_change_ok(v, Lane::Bus, d_safe)) continue;
            v.s.lane = Lane::Bus;
            v.lanes += 'B';
            v.granted = true;
            v.recommended_at.reset();
            events.push_back({t, v.s.id, "execute", "gaps clear"});
        }
    }
    for (std::size_t i : lane_order(Lane::General)) {
        SimVehicle& v = vehicles[i];
        if (right_turn_logic(v) == LaneAction::ToBus && lane_change_ok(v, Lane::Bus, d_safe)) {
            v.s.lane = Lane::Bus;
            v.lanes += 'B';
        }
    }
    for (std::size_t i : lane_order(Lane::Bus)) {
        SimVehicle& v = vehicles[i];
        if (right_turn_logic(v) == LaneAction::ToPocket && lane_change_ok(v, Lane::Pocket, kPocketGap)) {
            v.s.lane = Lane::Pocket;
            v.lanes += 'P';
        }
    }
    if (!forecast_ && cfg_.strategy == Strategy::EBL) {
        for (const auto& v : vehicles)
            if (v.s.lane == Lane::Bus && v.s.is_car() && v.s.movement == Movement::Through) ++counters.purity;
    }
}

void Plant::longitudinal() {
    const Constants& c = cfg_.vehicle;
    const Corridor& cor = cfg_.corridor;
    const SignalPlan& sig = cfg_.signal;
    const double b = c.a_max;
    const double dt = dt_;
    const IdmParams hdv = hdv_idm(c);
    const IdmParams cav = cav_idm(c);

    std::vector<double> nx(vehicles.size()), nv(vehicles.size());
    std::vector<char> gone(vehicles.size(), 0);

    for (Lane lane : {Lane::General, Lane::Bus, Lane::Pocket}) {
        const auto order = lane_order(lane);
        std::optional<std::size_t> through_leader;
        int berth_ahead = -1;
        bool berth_wait = false;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const std::size_t i = order[k];
            SimVehicle& sv = vehicles[i];
            VehicleState& s = sv.s;
            const double x = s.x;
            const double v = s.v;
            const bool automated = s.cls != VehicleClass::HDV;
            const std::optional<std::size_t> leader =
                k > 0 ? std::optional<std::size_t>(order[k - 1]) : std::nullopt;
            const double gap = leader ? (vehicles[*leader].s.x - vehicles[*leader].s.length) - x : kInf;
            const double lv = leader ? vehicles[*leader].s.v : 0.0;

            double hold = 0.0;
            double a_des = 0.0;
            double cap = kInf;
            double soft_cap = kInf;   // targets a bus may drop if it cannot honor them
            sv.stop_mode = false;

            auto car_following = [&](double acc) {
                if (!leader) return acc;
                return std::min(acc, automated ? follow_accel(cav, v, gap, lv) : idm_accel(hdv, v, gap, lv));
            };
            auto free_accel = [&]() {
                return automated ? std::clamp((c.v_max - v) / dt, -c.a_max, c.a_max) : idm_accel(hdv, v, kInf, 0.0);
            };
            auto plain_obstacle = [&](double at, double s0) {
                const double acc = automated ? follow_accel({c.v_max, 0.5, c.a_max, b, s0, 4.0}, v, at - x, 0.0)
                                             : idm_accel({c.v_max, hdv.T, c.a_max, b, s0, 4.0}, v, at - x, 0.0);
                a_des = std::min(a_des, acc);
                cap = std::min(cap, safe_speed(x, v, at, 0.0, kBarMargin, b, dt));
            };

            if (s.cls == VehicleClass::CAB && sv.stage == BusStage::Dwell) {
                if (sv.dwell_draw >= dt - 1e-9) {
                    sv.dwell_draw -= dt;
                    nx[i] = x;
                    nv[i] = 0.0;
                    sv.t_clear = kInf;
                    sv.t_worst = kInf;
                    berth_ahead = std::max(berth_ahead, sv.berth);
                    through_leader = i;
                    sv.stop_mode = true;
                    continue;
                }
                hold = std::max(0.0, sv.dwell_draw);
                sv.dwell_draw = 0.0;
                sv.stage = BusStage::Depart;
            }

            const bool signal_bound = lane != Lane::Pocket && s.movement == Movement::Through &&
                                      !(s.cls == VehicleClass::CAB && sv.stage != BusStage::Depart);

            if (s.cls == VehicleClass::CAB && sv.stage == BusStage::Approach) {
                const int cap_berths = cor.stop_capacity;
                const double spacing = c.bus_length + 1.0;
                const int target = berth_ahead + 1;
                a_des = car_following(free_accel());
                if (target < cap_berths && !berth_wait) {
                    sv.berth = target;
                    const double at = cor.x_s - target * spacing;
                    const double acc = follow_accel({c.v_max, 1.0, c.a_max, 1.0, 0.0, 4.0}, v, at - x + 1e-3, 0.0);
                    a_des = std::min(a_des, acc);
                    soft_cap = std::min(soft_cap, safe_speed(x, v, at, 0.0, 0.0, b, dt));
                    if (x >= at - 2.0 && v <= 1.5) {
                        sv.stage = BusStage::Dwell;
                        sv.dwell_draw -= dt;
                        nx[i] = stopping_point(x, v, b);
                        nv[i] = 0.0;
                        sv.t_clear = kInf;
                        sv.t_worst = kInf;
                        berth_ahead = target;
                        through_leader = i;
                        sv.stop_mode = true;
                        continue;
                    }
                    berth_ahead = target;
                } else {
                    sv.berth = -1;
                    berth_wait = true;
                    const double at = cor.x_s - cap_berths * spacing;
                    const double acc = follow_accel({c.v_max, 1.0, c.a_max, 1.0, 0.0, 4.0}, v, at - x + 1e-3, 0.0);
                    a_des = std::min(a_des, acc);
                    soft_cap = std::min(soft_cap, safe_speed(x, v, at, 0.0, 0.0, b, dt));
                }
            } else if (signal_bound) {
                const double dist = cor.x_c - x;
                const Phase phase = phase_at(sig, t);
                const double red_onset = sig.cycle_start(t) + sig.t_c;
                const double next_green = phase == Phase::Red ? sig.green_start(t) : red_onset + sig.t_r;
                const BoundaryRecord& rec = lane == Lane::General ? general_rec : bus_rec;
                double lead_cross = rec.t_stopbar;
                VehicleClass lead_cls = rec.stopbar_cls;
                bool lead_stop = false;
                if (through_leader) {
                    const SimVehicle& L = vehicles[*through_leader];
                    lead_cross = L.t_clear;
                    lead_cls = L.s.cls;
                    lead_stop = L.stop_mode;
                }
                const NewellParams np = newell_params(s.cls, lead_cls, c);
                const double headway = min_headway(np, c.v_max);
                const double v_lo = std::max(0.0, v - b * dt);
                const double v_hi = std::min(c.v_max, v + c.a_max * dt);

                if (!automated && phase == Phase::Green && v < 0.1 && t - sig.green_start(t) < c.startup_react)
                    hold = sig.green_start(t) + c.startup_react - t;
                const double a_c = automated ? c.a_max : kHdvCrossAccel;
                const double v_now = std::min(v, c.v_max);
                const double v_bar = std::max(1.0, speed_after(dist, v_now, c.v_max, a_c));
                const double t_go = std::max(t + hold + min_travel_time(dist, v_now, c.v_max, a_c),
                                             lead_cross + np.tau + np.d / v_bar);
                const double margin = automated ? kCavClearMargin : kHdvClearMargin;
                // Last chance to stop: after one step at full acceleration the stop bar is out of reach.
                const double x_next = x + v * dt + 0.5 * c.a_max * dt * dt;
                const double v_next = std::min(c.v_max, v + c.a_max * dt);
                const bool last_chance = stopping_point(x_next, v_next, b) > cor.x_c - kBarMargin;
                double lead_worst = rec.t_stopbar;
                if (through_leader) lead_worst = vehicles[*through_leader].t_worst;
                sv.t_worst = std::max(t + hold + dist / std::max(v, 0.1), lead_worst + np.tau + np.d / std::max(v, 1.0));
                const bool go = phase == Phase::Green && !lead_stop && t_go < red_onset - margin &&
                                (!last_chance || sv.t_worst < red_onset - margin);

                if (automated) {
                    const CavProfile prof = cav_plan(t, dist, v, lead_cross, headway, sig, c, dt);
                    sv.t_clear = go ? std::min(prof.target_cross, t_go) : prof.target_cross;
                    // Keep the stop approach clear for buses: no slow cruising before the stop.
                    const bool clear_stop = lane == Lane::Bus && x < cor.x_s;
                    a_des = car_following(clear_stop ? free_accel() : prof.accel);
                    if (!go) {
                        const double g = gated_speed(t, x, v, next_green, cor.x_c - kBarMargin, v_lo, v_hi, b, dt);
                        if (g >= v_lo - 1e-6) {
                            sv.stop_mode = true;
                            cap = std::min(cap, std::max(g, v_lo));
                        }
                    }
                } else {
                    sv.t_clear = signal_gate(std::max(t_go, lead_cross + headway), s.cls, sig, c);
                    a_des = car_following(free_accel());
                    const double bar_cap = safe_speed(x, v, cor.x_c - kBarMargin, 0.0, 0.0, b, dt);
                    if (!go && bar_cap >= v_lo - 1e-6) {
                        sv.stop_mode = true;
                        a_des = std::min(a_des, idm_accel(hdv, v, dist, 0.0));
                        cap = std::min(cap, std::max(bar_cap, v_lo));
                    }
                }
                through_leader = i;
            } else {
                a_des = car_following(free_accel());
                if (s.movement == Movement::RightTurn && cor.x_w) {
                    if (lane == Lane::General && x >= *cor.x_w - cfg_.d_rt - 50.0)
                        plain_obstacle(cor.x_n, automated ? c.gap_cav : c.gap_hdv);
                    else if (lane == Lane::Bus && x >= *cor.x_w)
                        plain_obstacle(cor.x_c - kBarMargin, automated ? c.gap_cav : c.gap_hdv);
                }
            }

            const double run = dt - hold;
            double v_des = v + a_des * run;
            if (!forecast_ && s.cls == VehicleClass::HDV && cfg_.hdv_noise_std > 0 && v_des > 0.5) {
                std::normal_distribution<double> noise(0.0, cfg_.hdv_noise_std);
                double e = noise(sv.rng);
                while (std::abs(e) > 2.0 * cfg_.hdv_noise_std) e = noise(sv.rng);
                v_des += e;
            }
            const double v_lo = std::max(0.0, v - b * run);
            const double v_hi = std::min(c.v_max, v + c.a_max * run);
            double vn = std::clamp(v_des, v_lo, v_hi);

            if (leader) {
                const auto& L = vehicles[*leader];
                cap = std::min(cap, safe_speed(x, v, nx[*leader] - L.s.length, nv[*leader], kFollowMargin, b, dt));
            }
            cap = std::min(cap, std::max(soft_cap, v_lo));
            const bool capped = cap < vn + 1e-9;
            if (cap < v_lo - 1e-9) {
                if (!forecast_) ++counters.emergency;
                vn = v_lo;
            } else {
                vn = std::min(vn, std::max(cap, v_lo));
            }

            StepMotion m{x, v, vn, hold, dt};
            if (vn == 0.0 && hold == 0.0 && v > 0.0 && v < b * dt)
                m.stop_decel = capped ? b : std::clamp(-a_des, v / dt, b);
            nx[i] = m.end();
            nv[i] = vn;

            if (lane == Lane::Bus && cor.x_w && x < *cor.x_w && nx[i] >= *cor.x_w) {
                const double tau = m.time_at(*cor.x_w);
                s.w_cross = Crossing{t + tau, m.speed(tau)};
                bus_rec.pocket = s.w_cross;
                bus_rec.pocket_cls = s.cls;
            }
            if (nx[i] > cor.x_c && (lane == Lane::Pocket || s.movement == Movement::Through)) {
                const double tau = m.time_at(cor.x_c);
                const double tc = t + tau;
                s.t_cross = tc;
                sv.exit = tc;
                gone[i] = 1;
                if (lane != Lane::Pocket) {
                    if (phase_at(sig, tc + 1e-6) == Phase::Red && !forecast_) ++counters.red_crossings;
                    BoundaryRecord& rec = lane == Lane::General ? general_rec : bus_rec;
                    rec.t_stopbar = tc;
                    rec.stopbar_cls = s.cls;
                }
            }
        }
    }

    for (std::size_t i = 0; i < vehicles.size(); ++i) {
        vehicles[i].s.x = nx[i];
        vehicles[i].s.v = nv[i];
    }
    check_overlaps();
    std::vector<SimVehicle> keep;
    keep.reserve(vehicles.size());
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
        if (gone[i]) exited.push_back(std::move(vehicles[i]));
        else keep.push_back(std::move(vehicles[i]));
    }
    vehicles = std::move(keep);
}

void Plant::check_overlaps() {
    for (Lane lane : {Lane::General, Lane::Bus, Lane::Pocket}) {
        const auto order = lane_order(lane);
        for (std::size_t k = 1; k < order.size(); ++k) {
            const auto& a = vehicles[order[k - 1]].s;
            const auto& b = vehicles[order[k]].s;
            if ((a.x - a.length) - b.x < -1e-9) {
                if (forecast_) continue;
                ++counters.overlaps;
                char buf[160];
                std::snprintf(buf, sizeof buf, "bumper overlap at t=%.3f between vehicles %u and %u in %s lane",
                              t + dt_, a.id, b.id, std::string(to_string(lane)).c_str());
                throw SafetyFault(buf);
            }
        }
    }
}

void Plant::step() {
    execute_lane_changes();
    longitudinal();
    t += dt_;
}

bool Plant::try_enter(const Arrival& a) {
    const Constants& c = cfg_.vehicle;
    const Lane lane = a.cls == VehicleClass::CAB ? Lane::Bus : Lane::General;
    const VehicleState* last = nullptr;
    for (const auto& o : vehicles)
        if (o.s.lane == lane && (!last || o.s.x < last->x)) last = &o.s;
    double v0 = c.v_max;
    if (last) {
        const NewellParams np = newell_params(a.cls, last->cls, c);
        const double rear = last->x - last->length;
        if (last->x - np.d < 0 || rear < kFollowMargin) return false;
        const double sp = 2.0 * c.a_max * (rear - kFollowMargin) + last->v * last->v;
        v0 = std::min({v0, (last->x - np.d) / np.tau, std::sqrt(std::max(0.0, sp))});
        v0 = std::max(0.0, v0);
    }
    SimVehicle sv;
    sv.s.id = a.id;
    sv.s.cls = a.cls;
    sv.s.movement = a.movement;
    sv.s.lane = lane;
    sv.s.x = 0.0;
    sv.s.v = v0;
    sv.s.length = c.length_of(a.cls);
    sv.arrival = a.t;
    sv.entry = t;
    sv.dwell_draw = a.dwell;
    sv.lanes = lane == Lane::Bus ? "B" : "G";
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32), a.id};
    sv.rng.seed(seq);
    vehicles.push_back(std::move(sv));
    return true;
}

Aggregates aggregate(const std::vector<VehicleRecord>& records, double warmup) {
    Aggregates out;
    auto add = [](GroupStat& g, double v) {
        ++g.count;
        g.mean += v;
    };
    for (const auto& r : records) {
        if (r.arrival < warmup) continue;
        const double tt = r.travel_time();
        if (r.cls == VehicleClass::CAB) {
            add(out.cab, tt);
            continue;
        }
        add(out.car, tt);
        add(r.cls == VehicleClass::HDV ? out.hdv : out.cav, tt);
        add(r.movement == Movement::Through ? out.through_car : out.right_turn_car, tt);
    }
    for (GroupStat* g : {&out.car, &out.hdv, &out.cav, &out.cab, &out.through_car, &out.right_turn_car})
        if (g->count) g->mean /= static_cast<double>(g->count);
    out.departed = records.size();
    return out;
}

Simulator::Simulator(const ScenarioConfig& cfg, std::vector<Arrival> arrivals)
    : cfg_(cfg),
      ctx_{cfg.corridor, cfg.signal, cfg.vehicle},
      settings_{cfg.omega_p, cfg.dk, cfg.horizon, cfg.k_lc, cfg.candidate_cap},
      plant_(cfg),
      arrivals_(std::move(arrivals)) {}

void write_trajectory_header(std::ostream& out) { out << "t,vehicle_id,class,movement,lane,x,v\n"; }

void Simulator::set_trajectory_sink(std::ostream* out) { trajectory_ = out; }

bool Simulator::done() const { return plant_.t >= cfg_.duration - 1e-9; }

Forecast Simulator::forecast(double k0) const {
    Forecast f;
    f.window = PlanningWindow{k0, cfg_.dk, cfg_.horizon};
    f.k_lc = cfg_.k_lc;
    const std::size_t n = f.window.size() + static_cast<std::size_t>(cfg_.k_lc);
    const long per = std::max(1L, std::lround(cfg_.dk));
    Plant p = plant_;
    p.set_forecast_mode();
    p.exited.clear();
    p.events.clear();
    f.steps.reserve(n);
    f.steps.push_back(p.snapshot());
    for (std::size_t j = 1; j < n; ++j) {
        for (long s = 0; s < per; ++s) p.step();
        f.steps.push_back(p.snapshot());
    }
    return f;
}

void Simulator::apply_commands(const std::vector<Command>& commands) {
    const double t = plant_.t;
    for (const Command& cmd : commands) {
        SimVehicle* target = nullptr;
        for (auto& v : plant_.vehicles)
            if (v.s.id == cmd.vehicle) target = &v;
        if (!target) {
            events_.push_back({t, cmd.vehicle, "ignore", "vehicle not present"});
            continue;
        }
        if (cmd.kind == Command::Kind::Recommend) {
            target->recommended_at = cmd.k_c;
            events_.push_back({t, cmd.vehicle, "recommend", cmd.reason});
        } else {
            target->recommended_at.reset();
            events_.push_back({t, cmd.vehicle, "cancel", cmd.reason});
        }
    }
}

void Simulator::record_exits() {
    for (auto& v : plant_.exited) {
        VehicleRecord r;
        r.id = v.s.id;
        r.cls = v.s.cls;
        r.movement = v.s.movement;
        r.arrival = v.arrival;
        r.entry = v.entry;
        r.exit = v.exit;
        r.lanes = v.lanes;
        r.granted = v.granted;
        records_.push_back(std::move(r));
    }
    plant_.exited.clear();
}

void Simulator::spawn() {
    while (next_arrival_ < arrivals_.size() && arrivals_[next_arrival_].t < plant_.t) {
        const Arrival& a = arrivals_[next_arrival_++];
        (a.cls == VehicleClass::CAB ? queue_bus_ : queue_general_).push_back(a);
    }
    for (auto* q : {&queue_general_, &queue_bus_}) {
        if (!q->empty() && plant_.try_enter(q->front())) q->erase(q->begin());
    }
}

void Simulator::step() {
    const double t = plant_.t;
    if (trajectory_ || cfg_.strategy == Strategy::DBPL) {
        const Snapshot s = plant_.snapshot();
        if (trajectory_) {
            std::vector<const VehicleState*> rows;
            for (const auto& v : s.vehicles) rows.push_back(&v);
            std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->id < b->id; });
            for (const auto* v : rows) {
                *trajectory_ << fmt6(t) << ',' << v->id << ',' << to_string(v->cls) << ',' << to_string(v->movement)
                             << ',' << to_string(v->lane) << ',' << fmt6(v->x) << ',' << fmt6(v->v) << '\n';
            }
        }
        if (cfg_.strategy == Strategy::DBPL) {
            TickResult r = tick(ctrl_, s, t, [&] { return forecast(t); }, ctx_, settings_);
            if (r.optimized) ++optimizations_;
            ctrl_ = std::move(r.state);
            apply_commands(r.commands);
        }
    }
    plant_.step();
    for (auto& e : plant_.events) events_.push_back(std::move(e));
    plant_.events.clear();
    record_exits();
    spawn();
}

void Simulator::run() {
    while (!done()) step();
}

Aggregates Simulator::aggregates() const {
    Aggregates a = aggregate(records_, cfg_.warmup);
    a.arrivals = next_arrival_;
    a.in_corridor = plant_.vehicles.size();
    a.queued = queue_general_.size() + queue_bus_.size();
    a.counters = plant_.counters;
    return a;
}

void Simulator::write_metrics(std::ostream& out) const {
    out << "id,class,movement,arrival,entry,exit,travel_time,lanes,granted\n";
    std::vector<const VehicleRecord*> rows;
    for (const auto& r : records_) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* r : rows) {
        out << r->id << ',' << to_string(r->cls) << ',' << to_string(r->movement) << ',' << fmt6(r->arrival) << ','
            << fmt6(r->entry) << ',' << fmt6(r->exit) << ',' << fmt6(r->travel_time()) << ',' << r->lanes << ','
            << (r->granted ? 1 : 0) << '\n';
    }
    const Aggregates a = aggregates();
    out << "\nmetric,value\n";
    auto group = [&](const char* name, const GroupStat& g) {
        out << "count_" << name << ',' << g.count << '\n';
        out << "mean_travel_time_" << name << ',' << fmt6(g.mean) << '\n';
    };
    group("car", a.car);
    group("hdv", a.hdv);
    group("cav", a.cav);
    group("cab", a.cab);
    group("through_car", a.through_car);
    group("right_turn_car", a.right_turn_car);
    out << "arrivals," << a.arrivals << '\n'
        << "departed," << a.departed << '\n'
        << "in_corridor," << a.in_corridor << '\n'
        << "queued," << a.queued << '\n'
        << "emergency_clamps," << a.counters.emergency << '\n'
        << "red_crossings," << a.counters.red_crossings << '\n'
        << "overlaps," << a.counters.overlaps << '\n'
        << "purity_violations," << a.counters.purity << '\n';
}

void Simulator::write_events(std::ostream& out) const {
    out << "t,vehicle_id,action,reason\n";
    for (const auto& e : events_) out << fmt6(e.t) << ',' << e.vehicle << ',' << e.action << ',' << e.reason << '\n';
}

}  // namespace dbpl
