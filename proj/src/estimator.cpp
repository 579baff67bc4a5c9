#include "dbpl/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dbpl/kinematics.hpp"

namespace dbpl {

namespace {

bool downstream_first(const LaneEntry& a, const LaneEntry& b) {
    if (a.state.x != b.state.x) return a.state.x > b.state.x;
    if (a.state.is_virtual != b.state.is_virtual) return !a.state.is_virtual;
    return a.state.id < b.state.id;
}

bool contains(std::span<const VehicleId> ids, VehicleId id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

double headway_at_vmax(VehicleClass follower, VehicleClass leader, const Constants& c) {
    return min_headway(newell_params(follower, leader, c), c.v_max);
}

double free_time(double dist, double v, const Constants& c) {
    return min_travel_time(std::max(0.0, dist), std::clamp(v, 0.0, c.v_max), c.v_max, c.a_max);
}

double after(double t) {
    return std::nextafter(t, kInf);
}

bool upstream_of_pocket(const VehicleState& v, const Corridor& corridor) {
    return corridor.has_pocket() && v.x < *corridor.x_w;
}

EstimateRow row_for(const LaneEntry& e) {
    EstimateRow r;
    r.id = e.state.id;
    r.cls = e.state.cls;
    r.movement = e.state.movement;
    r.is_virtual = e.state.is_virtual;
    r.participates = e.participates;
    return r;
}

// Departure of an entry joining the chain behind head, given its free arrival tp1.
double chain_departure(VehicleClass cls, double tp1, const ChainHead& head, const EstimationContext& ctx) {
    double t2 = tp1;
    const bool led = head.t > -kInf;
    if (led) t2 = std::max(t2, head.t + headway_at_vmax(cls, head.cls, ctx.c));
    double t3 = signal_gate(t2, cls, ctx.signal, ctx.c);
    if (led) t3 = std::max(t3, after(head.t));
    return t3;
}

// Rows for the passed entries and the stop-bar segment; stops at the first entry
// upstream of the pocket entrance. Returns the chain head for what follows.
ChainHead stopbar_segment(const std::vector<LaneEntry>& lane, ChainHead head, double k,
                          const EstimationContext& ctx, std::vector<EstimateRow>& rows, std::size_t& next) {
    const double x_c = ctx.corridor.x_c;
    for (next = 0; next < lane.size(); ++next) {
        const LaneEntry& e = lane[next];
        const VehicleState& v = e.state;
        if (v.x < x_c && v.lane == Lane::Bus && upstream_of_pocket(v, ctx.corridor)) break;
        EstimateRow r = row_for(e);
        if (v.x >= x_c) {
            if (!v.is_virtual && e.participates) {
                r.t_dep = v.t_cross.value_or(k);
                head = {r.t_dep, v.cls};
            } else {
                r.t_dep = head.t;
            }
            r.probe = r.t_dep;
        } else {
            const double tp1 = k + free_time(x_c - v.x, v.v, ctx.c);
            const double t3 = chain_departure(v.cls, tp1, head, ctx);
            r.probe = t3;
            if (e.participates) {
                r.t_dep = t3;
                head = {t3, v.cls};
            } else {
                r.t_dep = head.t;
            }
        }
        rows.push_back(r);
    }
    return head;
}

}  // namespace

const VehicleState* Snapshot::find(VehicleId id) const {
    for (const auto& v : vehicles)
        if (v.id == id) return &v;
    return nullptr;
}

const EstimateRow* EstimateTable::real(VehicleId id) const {
    for (const auto* lane : {&general, &bus, &pocket})
        for (const auto& r : *lane)
            if (r.id == id && !r.is_virtual) return &r;
    return nullptr;
}

const EstimateRow* EstimateTable::mirror(VehicleId id) const {
    for (const auto& r : bus)
        if (r.id == id && r.is_virtual) return &r;
    return nullptr;
}

VirtualLanes sync_virtual(const Snapshot& s, std::span<const VehicleId> granted) {
    VirtualLanes out;
    std::vector<VehicleId> seen;
    for (VehicleId id : granted) {
        if (contains(seen, id)) throw std::logic_error("sync_virtual: duplicate mirror for vehicle " + std::to_string(id));
        seen.push_back(id);
        const VehicleState* v = s.find(id);
        if (!v || v->lane != Lane::General || v->cls != VehicleClass::CAV || v->is_virtual)
            throw std::invalid_argument("sync_virtual: grant " + std::to_string(id) + " is not a general-lane CAV");
    }
    for (const auto& v : s.vehicles) {
        if (v.is_virtual) continue;
        if (v.lane == Lane::General) {
            const bool moved = contains(granted, v.id);
            out.general.push_back({v, !moved});
            if (v.cls == VehicleClass::CAV) {
                VehicleState m = v;
                m.lane = Lane::Bus;
                m.is_virtual = true;
                out.bus.push_back({m, moved});
            }
        } else if (v.lane == Lane::Bus) {
            out.bus.push_back({v, true});
        }
    }
    std::sort(out.general.begin(), out.general.end(), downstream_first);
    std::sort(out.bus.begin(), out.bus.end(), downstream_first);
    return out;
}

LanePartition partition(const std::vector<LaneEntry>& lane, Lane which, const Corridor& corridor) {
    LanePartition p;
    const bool split = which == Lane::Bus && corridor.has_pocket();
    for (const auto& e : lane) {
        const double x = e.state.x;
        if (x >= corridor.x_c) p.passed.push_back(e.state.id);
        else if (split && x < *corridor.x_w) p.upstream.push_back(e.state.id);
        else p.between.push_back(e.state.id);
    }
    return p;
}

double signal_gate(double t, VehicleClass cls, const SignalPlan& signal, const Constants& c) {
    const double loss = cls == VehicleClass::HDV ? c.hdv_startup_loss() : 0.0;
    const double t_red = signal.cycle_start(t);
    return std::max(t, t_red + signal.t_r + loss);
}

std::vector<std::optional<Crossing>> pocket_crossing(const std::vector<LaneEntry>& bus, const Snapshot& s,
                                                     const EstimationContext& ctx) {
    std::vector<std::optional<Crossing>> out(bus.size());
    if (!ctx.corridor.has_pocket()) return out;
    const double x_w = *ctx.corridor.x_w;
    const Constants& c = ctx.c;
    const double k = s.t;

    // The latest real crossing of the pocket entrance seeds the chain.
    bool led = false;
    Crossing head{-kInf, c.v_max};
    VehicleClass head_cls = VehicleClass::CAV;
    if (s.bus.pocket) {
        led = true;
        head = *s.bus.pocket;
        head_cls = s.bus.pocket_cls;
    }
    for (const auto& v : s.vehicles) {
        if (v.is_virtual || !v.w_cross) continue;
        if (!led || v.w_cross->t > head.t) {
            led = true;
            head = *v.w_cross;
            head_cls = v.cls;
        }
    }

    for (std::size_t i = 0; i < bus.size(); ++i) {
        const VehicleState& v = bus[i].state;
        if (!(v.x < x_w)) continue;
        if (!bus[i].participates) {
            out[i] = head;
            continue;
        }
        const double speed = std::clamp(v.v, 0.0, c.v_max);
        const double tp1 = k + free_time(x_w - v.x, speed, c);
        double tp2 = tp1;
        double v_lead = kInf;
        if (led) {
            const double tau_hat = headway_at_vmax(v.cls, head_cls, c);
            tp2 = std::max({tp1, head.t + tau_hat, after(head.t)});
            v_lead = head.v + c.a_max * tau_hat;
        }
        const double v_free = speed + c.a_max * (tp2 - k);
        const Crossing w{tp2, std::min({c.v_max, v_free, v_lead})};
        out[i] = w;
        led = true;
        head = w;
        head_cls = v.cls;
    }
    return out;
}

std::vector<EstimateRow> reorganize_through(const std::vector<LaneEntry>& bus,
                                            const std::vector<std::optional<Crossing>>& crossings,
                                            ChainHead head, double /*k*/, const EstimationContext& ctx) {
    std::vector<EstimateRow> rows;
    if (!ctx.corridor.has_pocket()) return rows;
    const double x_w = *ctx.corridor.x_w;
    const double x_c = ctx.corridor.x_c;
    for (std::size_t i = 0; i < bus.size(); ++i) {
        const LaneEntry& e = bus[i];
        const VehicleState& v = e.state;
        if (!(v.x < x_w) || !crossings[i]) continue;
        const Crossing w = *crossings[i];
        EstimateRow r = row_for(e);
        r.at_pocket = w;
        if (v.movement == Movement::RightTurn) {
            r.t_dep = w.t;
        } else if (e.participates) {
            const double tp1 = w.t + free_time(x_c - x_w, w.v, ctx.c);
            r.t_dep = chain_departure(v.cls, tp1, head, ctx);
            head = {r.t_dep, v.cls};
        } else {
            r.t_dep = head.t;
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<EstimateRow> departure_busable(const std::vector<LaneEntry>& bus, const Snapshot& s,
                                           const EstimationContext& ctx) {
    std::vector<EstimateRow> rows;
    std::size_t next = 0;
    const ChainHead head = stopbar_segment(bus, {s.bus.t_stopbar, s.bus.stopbar_cls}, s.t, ctx, rows, next);
    if (next < bus.size()) {
        const auto crossings = pocket_crossing(bus, s, ctx);
        auto upstream = reorganize_through(bus, crossings, head, s.t, ctx);
        rows.insert(rows.end(), upstream.begin(), upstream.end());
    }
    return rows;
}

std::vector<EstimateRow> departure_general(const std::vector<LaneEntry>& general, const Snapshot& s,
                                           const EstimationContext& ctx) {
    std::vector<EstimateRow> rows;
    std::size_t next = 0;
    stopbar_segment(general, {s.general.t_stopbar, s.general.stopbar_cls}, s.t, ctx, rows, next);
    return rows;
}

EstimateTable estimate(const Snapshot& s, std::span<const VehicleId> granted, const EstimationContext& ctx) {
    const VirtualLanes lanes = sync_virtual(s, granted);
    EstimateTable table;
    table.k = s.t;
    table.general = departure_general(lanes.general, s, ctx);
    table.bus = departure_busable(lanes.bus, s, ctx);
    for (const auto& v : s.vehicles) {
        if (v.lane != Lane::Pocket || v.is_virtual) continue;
        EstimateRow r;
        r.id = v.id;
        r.cls = v.cls;
        r.movement = v.movement;
        r.t_dep = v.w_cross ? v.w_cross->t : s.t;
        r.probe = r.t_dep;
        r.at_pocket = v.w_cross;
        table.pocket.push_back(r);
    }
    return table;
}

Cost aggregate_cost(std::span<const double> car_values, std::span<const double> bus_values, double omega_p) {
    Cost out;
    double car_sum = 0.0;
    for (double t : car_values) car_sum += t;
    double bus_sum = 0.0;
    for (double t : bus_values) bus_sum += t;
    out.t_car = car_values.empty() ? 0.0 : car_sum / static_cast<double>(car_values.size());
    out.t_bus = bus_values.empty() ? 0.0 : bus_sum / static_cast<double>(bus_values.size());
    out.z = omega_p * out.t_bus + (1.0 - omega_p) * out.t_car;
    return out;
}

Cost weighted_cost(const EstimateTable& table, const CostPopulation& population,
                   std::span<const VehicleId> granted, double omega_p) {
    std::vector<double> cars;
    std::vector<double> buses;
    cars.reserve(population.general.size() + population.bus.size());
    auto lookup = [&](VehicleId id, bool as_mirror) -> const EstimateRow& {
        const EstimateRow* r = as_mirror ? table.mirror(id) : table.real(id);
        if (!r) throw std::logic_error("weighted_cost: no estimate for vehicle " + std::to_string(id));
        return *r;
    };
    for (VehicleId id : population.general) cars.push_back(lookup(id, contains(granted, id)).t_dep);
    for (VehicleId id : population.bus) {
        const EstimateRow& r = lookup(id, false);
        if (r.cls != VehicleClass::CAB) cars.push_back(r.t_dep);
    }
    for (VehicleId id : population.bus) {
        const EstimateRow& r = lookup(id, false);
        if (r.cls == VehicleClass::CAB) buses.push_back(r.t_dep);
    }
    return aggregate_cost(cars, buses, omega_p);
}

}  // namespace dbpl
