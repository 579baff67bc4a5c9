#include "dbpl/controller.hpp"

#include <algorithm>
#include <cstdio>

namespace dbpl {

namespace {

struct Neighbours {
    const VehicleState* ahead = nullptr;
    const VehicleState* behind = nullptr;
};

Neighbours bus_neighbours(const Snapshot& s, const VehicleState& v) {
    Neighbours n;
    for (const auto& o : s.vehicles) {
        if (o.lane != Lane::Bus || o.is_virtual || o.id == v.id) continue;
        if (o.x >= v.x) {
            if (!n.ahead || o.x < n.ahead->x) n.ahead = &o;
        } else if (!n.behind || o.x > n.behind->x) {
            n.behind = &o;
        }
    }
    return n;
}

std::string describe_k(double k) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "k_c=%.6f", k);
    return buf;
}

TickResult cancel_all(const ControllerState& ctrl, const std::string& reason) {
    TickResult out;
    for (VehicleId id : ctrl.j_c) out.commands.push_back({Command::Kind::Cancel, id, ctrl.k_c, reason});
    return out;
}

}  // namespace

TickResult tick(const ControllerState& ctrl, const Snapshot& s, double k0, const ForecastFn& forecast,
                const EstimationContext& ctx, const OptimizerSettings& settings) {
    if (ctrl.idle()) {
        TickResult out;
        const Extent extent = define_extent(s, ctx);
        if (extent.eligible.empty()) return out;
        out.optimized = true;
        const Forecast f = forecast();
        const OpportunityMask mask = preallocate(f, extent, ctx);
        RowPlan plan = solve(f, extent, mask, ctx, settings);
        if (plan.empty()) return out;
        out.state.k_c = plan.k_c;
        for (const Grant& g : plan.grants) {
            out.state.j_c.push_back(g.vehicle);
            out.commands.push_back({Command::Kind::Recommend, g.vehicle, plan.k_c, describe_k(plan.k_c)});
        }
        out.state.pending = std::move(plan);
        return out;
    }

    if (!(k0 > ctrl.k_c)) return {ctrl, {}, false};

    ControllerState next = ctrl;
    next.j_c.clear();
    const Constants& c = ctx.c;
    for (VehicleId id : ctrl.j_c) {
        const VehicleState* v = s.find(id);
        if (!v) return cancel_all(ctrl, "grantee departed");
        if (v->lane == Lane::Bus) continue;
        if (!(v->x < ctx.corridor.x_n)) return cancel_all(ctrl, "grantee reached no-change zone");
        const Neighbours n = bus_neighbours(s, *v);
        const double d_p = n.ahead ? (n.ahead->x - n.ahead->length) - v->x - c.d_safe : kInf;
        const double d_f = n.behind ? (v->x - v->length) - n.behind->x - c.d_safe : kInf;
        if (d_p < 0 || d_f < 0) return cancel_all(ctrl, "unsafe gap");
        std::optional<VehicleId> intended;
        for (const Grant& g : ctrl.pending->grants)
            if (g.vehicle == id) intended = g.predecessor;
        const std::optional<VehicleId> actual = n.ahead ? std::optional<VehicleId>(n.ahead->id) : std::nullopt;
        if (intended != actual) return cancel_all(ctrl, "predecessor changed");
        next.j_c.push_back(id);
    }
    if (next.j_c.empty()) return {ControllerState{}, {}, false};
    return {next, {}, false};
}

}  // namespace dbpl
