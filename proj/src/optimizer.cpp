#include "dbpl/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "dbpl/kinematics.hpp"

namespace dbpl {

namespace {

// Slack on free-flow bounds that are only mathematically (not bitwise) below the exact value.
constexpr double kBoundSlack = 1e-6;

bool contains(const std::vector<VehicleId>& ids, VehicleId id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::vector<const VehicleState*> lane_vehicles(const Snapshot& s, Lane lane, double x_c) {
    std::vector<const VehicleState*> out;
    for (const auto& v : s.vehicles)
        if (!v.is_virtual && v.lane == lane && v.x < x_c) out.push_back(&v);
    std::sort(out.begin(), out.end(), [](const VehicleState* a, const VehicleState* b) {
        return a->x != b->x ? a->x > b->x : a->id < b->id;
    });
    return out;
}

double free_gated(const VehicleState& v, double k, const EstimationContext& ctx) {
    const Constants& c = ctx.c;
    const double tp1 =
        k + min_travel_time(std::max(0.0, ctx.corridor.x_c - v.x), std::clamp(v.v, 0.0, c.v_max), c.v_max, c.a_max);
    return signal_gate(tp1, v.cls, ctx.signal, c);
}

// Lower bound on the cost of every completion of a partial decision. Vehicles ahead
// of the undecided CAVs get exact values; the rest get bounds that only move up
// as more grants are added.
Cost lower_bound(const Snapshot& s, const std::vector<VehicleId>& decided,
                 const std::vector<VehicleId>& undecided, const CostPopulation& population,
                 const EstimationContext& ctx, double omega_p) {
    std::vector<VehicleId> all = decided;
    all.insert(all.end(), undecided.begin(), undecided.end());
    const EstimateTable a = estimate(s, all, ctx);
    const EstimateTable b = estimate(s, decided, ctx);
    const double k = s.t;

    auto free_bound = [&](VehicleId id) {
        const VehicleState* v = s.find(id);
        if (v->movement == Movement::RightTurn && ctx.corridor.has_pocket()) {
            const Constants& c = ctx.c;
            return k + min_travel_time(std::max(0.0, *ctx.corridor.x_w - v->x), std::clamp(v->v, 0.0, c.v_max),
                                       c.v_max, c.a_max) - kBoundSlack;
        }
        return free_gated(*v, k, ctx) - kBoundSlack;
    };
    // A bus-lane row: exact-or-monotone unless it sits on the pocket approach as a through entry.
    auto bus_row_bound = [&](const EstimateRow& r) {
        if (r.at_pocket && r.movement == Movement::Through) return free_bound(r.id);
        return r.participates ? r.t_dep : r.probe;
    };
    auto real_bound = [&](VehicleId id) -> double {
        for (const auto& r : a.general)
            if (r.id == id && !r.is_virtual) return r.t_dep;
        for (const auto& r : b.bus)
            if (r.id == id && !r.is_virtual) return bus_row_bound(r);
        const EstimateRow* r = b.real(id);
        if (!r) throw std::logic_error("lower_bound: vehicle " + std::to_string(id) + " missing");
        return r->t_dep;
    };

    std::vector<double> cars;
    std::vector<double> buses;
    for (VehicleId id : population.general) {
        if (contains(decided, id)) {
            cars.push_back(b.mirror(id)->t_dep);
        } else if (contains(undecided, id)) {
            double kept = kInf;
            for (const auto& r : a.general)
                if (r.id == id && !r.is_virtual) kept = r.probe;
            const double moved = bus_row_bound(*b.mirror(id));
            cars.push_back(std::min(kept, moved));
        } else {
            cars.push_back(real_bound(id));
        }
    }
    for (VehicleId id : population.bus) {
        const VehicleState* v = s.find(id);
        if (v->cls != VehicleClass::CAB) cars.push_back(real_bound(id));
    }
    for (VehicleId id : population.bus) {
        const VehicleState* v = s.find(id);
        if (v->cls == VehicleClass::CAB) buses.push_back(real_bound(id));
    }
    return aggregate_cost(cars, buses, omega_p);
}

class BranchAndBound {
public:
    BranchAndBound(const Forecast& f, const Extent& e, const EstimationContext& ctx, double omega_p,
                   SolveStats* stats)
        : forecast_(f), extent_(e), population_(e.population()), ctx_(ctx), omega_p_(omega_p), stats_(stats) {}

    std::optional<ScoredCandidate> run(const OpportunityMask& mask) {
        for (const auto& step : mask.steps) {
            step_ = &step;
            chosen_.clear();
            descend(0);
        }
        return best_;
    }

private:
    bool prunable(const Cost& lb) const {
        if (!best_) return false;
        const double z = best_->cost.z;
        if (lb.z > z) return true;
        if (lb.z < z) return false;
        const std::size_t n = chosen_.size();
        const std::size_t best_n = best_->decision.grants.size();
        return n > best_n || (n == best_n && step_->k > best_->decision.k);
    }

    void descend(std::size_t depth) {
        if (stats_) ++stats_->nodes;
        const auto& open = step_->open;
        const Snapshot& s = forecast_.at(step_->index);
        if (depth == open.size()) {
            if (stats_) ++stats_->leaves;
            CandidateDecision d{step_->index, step_->k, granted_ids()};
            ScoredCandidate sc = evaluate(d, forecast_, extent_, ctx_, omega_p_);
            if (!best_ || better(sc, *best_)) best_ = std::move(sc);
            return;
        }
        if (best_) {
            std::vector<VehicleId> undecided;
            for (std::size_t i = depth; i < open.size(); ++i) undecided.push_back(open[i].vehicle);
            if (prunable(lower_bound(s, granted_ids(), undecided, population_, ctx_, omega_p_))) return;
        }
        descend(depth + 1);
        const Opportunity& o = open[depth];
        for (const Opportunity* g : chosen_)
            if (!compatible(*g, o, ctx_.c)) return;
        chosen_.push_back(&o);
        descend(depth + 1);
        chosen_.pop_back();
    }

    std::vector<VehicleId> granted_ids() const {
        std::vector<VehicleId> ids;
        for (const Opportunity* o : chosen_) ids.push_back(o->vehicle);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    const Forecast& forecast_;
    const Extent& extent_;
    CostPopulation population_;
    const EstimationContext& ctx_;
    double omega_p_;
    SolveStats* stats_;
    const MaskStep* step_ = nullptr;
    std::vector<const Opportunity*> chosen_;
    std::optional<ScoredCandidate> best_;
};

}  // namespace

const Snapshot& Forecast::after_change(std::size_t j) const {
    const std::size_t idx = std::min(steps.size() - 1, j + static_cast<std::size_t>(std::max(0, k_lc)));
    return steps.at(idx);
}

bool OpportunityMask::theta(VehicleId id, double k) const {
    // Dropped steps repeat the last retained one.
    const MaskStep* at = nullptr;
    for (const auto& st : steps)
        if (st.k <= k) at = &st;
    if (!at) return false;
    for (const auto& o : at->open)
        if (o.vehicle == id) return true;
    return false;
}

std::vector<double> OpportunityMask::reduced_steps() const {
    std::vector<double> out;
    for (const auto& st : steps) out.push_back(st.k);
    return out;
}

Extent define_extent(const Snapshot& s0, const EstimationContext& ctx) {
    const Corridor& cor = ctx.corridor;
    const Constants& c = ctx.c;
    const auto general = lane_vehicles(s0, Lane::General, cor.x_c);
    const auto bus = lane_vehicles(s0, Lane::Bus, cor.x_c);

    double x_r = -kInf;
    for (const auto* v : general)
        if (v->movement == Movement::RightTurn) x_r = std::max(x_r, v->x);

    std::vector<const VehicleState*> j_gl;
    for (const auto* v : general)
        if (v->x > x_r) j_gl.push_back(v);
    std::vector<const VehicleState*> j_bl = bus;

    Extent e;
    std::optional<double> stop_line;
    for (const auto* v : bus) {
        if (v->cls != VehicleClass::CAB || !v->dwell) continue;
        const double t1 = s0.t + min_travel_time(std::max(0.0, cor.x_c - cor.x_s), std::clamp(v->v, 0.0, c.v_max),
                                                 c.v_max, c.a_max);
        e.t1 = std::min(e.t1, t1);
        stop_line = std::min(stop_line.value_or(cor.x_s), v->x);
    }
    auto keep_from = [](std::vector<const VehicleState*>& set, double lo) {
        std::erase_if(set, [lo](const VehicleState* v) { return v->x < lo; });
    };
    if (stop_line) {
        keep_from(j_gl, *stop_line);
        keep_from(j_bl, std::max(*stop_line, x_r));
    } else {
        const VehicleState* nearest = nullptr;
        for (const auto* v : bus)
            if (v->cls == VehicleClass::CAB && v->x <= cor.x_s + 1e-6 && (!nearest || v->x > nearest->x)) nearest = v;
        if (nearest) {
            keep_from(j_bl, nearest->x);
            keep_from(j_gl, std::max(nearest->x, x_r));
        }
    }
    if (e.t1 < kInf) {
        const double tau_b = min_headway(newell_params(VehicleClass::CAB, VehicleClass::CAV, c), c.v_max);
        std::erase_if(j_gl, [&](const VehicleState* v) {
            const double tp1 = s0.t + min_travel_time(cor.x_c - v->x, std::clamp(v->v, 0.0, c.v_max), c.v_max, c.a_max);
            return tp1 + tau_b > e.t1;
        });
    }
    for (const auto* v : j_gl) {
        e.general.push_back(v->id);
        if (v->cls == VehicleClass::CAV && v->movement == Movement::Through) e.eligible.push_back(v->id);
    }
    for (const auto* v : j_bl) e.bus.push_back(v->id);
    return e;
}

std::vector<Gap> available_gaps(const Snapshot& s, const EstimationContext& ctx) {
    const Constants& c = ctx.c;
    const double need = 2.0 * c.d_safe + c.car_length;
    const auto bus = lane_vehicles(s, Lane::Bus, ctx.corridor.x_c);
    std::vector<Gap> gaps;
    auto offer = [&](Gap g) {
        if (g.lead - g.follow > need) gaps.push_back(g);
    };
    if (bus.empty()) {
        offer({0.0, ctx.corridor.x_c, std::nullopt, std::nullopt});
        return gaps;
    }
    offer({bus.front()->x, ctx.corridor.x_c, bus.front()->id, std::nullopt});
    for (std::size_t i = 1; i < bus.size(); ++i) {
        const VehicleState* ahead = bus[i - 1];
        offer({bus[i]->x, ahead->x - ahead->length, bus[i]->id, ahead->id});
    }
    const VehicleState* last = bus.back();
    offer({0.0, last->x - last->length, std::nullopt, last->id});
    return gaps;
}

OpportunityMask preallocate(const Forecast& forecast, const Extent& extent, const EstimationContext& ctx) {
    const Constants& c = ctx.c;
    const Corridor& cor = ctx.corridor;
    OpportunityMask mask;
    std::vector<VehicleId> previous;
    const std::size_t n = forecast.window.size();
    for (std::size_t j = 0; j < n && j < forecast.steps.size(); ++j) {
        const Snapshot& s = forecast.at(j);
        const Snapshot& later = forecast.after_change(j);
        MaskStep step;
        step.index = j;
        step.k = s.t;
        step.gaps = available_gaps(s, ctx);
        // Gaps behind a bus that has not yet left the stop would trap the entrant there.
        double stop_queue = -kInf;
        for (const auto& o : s.vehicles)
            if (o.cls == VehicleClass::CAB && o.lane == Lane::Bus && !o.is_virtual && o.x <= cor.x_s + 1e-6)
                stop_queue = std::max(stop_queue, o.x);
        for (VehicleId id : extent.eligible) {
            const VehicleState* v = s.find(id);
            if (!v || v->lane != Lane::General || !(v->x < cor.x_n) || !(v->v > 0)) continue;
            const VehicleState* v_later = later.find(id);
            if (!v_later) continue;
            for (std::size_t g = 0; g < step.gaps.size(); ++g) {
                const Gap& gap = step.gaps[g];
                if (!(gap.follow + c.d_safe + v->length < v->x && v->x < gap.lead - c.d_safe)) continue;
                if (gap.lead <= stop_queue) break;
                double lo = -kInf, hi = kInf;
                if (gap.follower)
                    if (const VehicleState* f = later.find(*gap.follower)) lo = f->x;
                if (gap.leader)
                    if (const VehicleState* l = later.find(*gap.leader)) hi = l->x;
                if (lo < v_later->x && v_later->x < hi) step.open.push_back({id, g, v->x, v->length});
                break;
            }
        }
        std::sort(step.open.begin(), step.open.end(), [](const Opportunity& a, const Opportunity& b) {
            return a.x != b.x ? a.x > b.x : a.vehicle < b.vehicle;
        });
        std::vector<VehicleId> ids;
        for (const auto& o : step.open) ids.push_back(o.vehicle);
        std::sort(ids.begin(), ids.end());
        if (j == 0 || ids != previous) mask.steps.push_back(std::move(step));
        previous = std::move(ids);
    }
    return mask;
}

bool compatible(const Opportunity& a, const Opportunity& b, const Constants& c) {
    if (a.gap != b.gap) return true;
    const Opportunity& down = a.x >= b.x ? a : b;
    const Opportunity& up = a.x >= b.x ? b : a;
    return down.x - down.length - up.x > c.d_safe;
}

std::vector<CandidateDecision> enumerate_candidates(const Extent& /*extent*/, const OpportunityMask& mask,
                                                    const Constants& c, std::size_t cap) {
    std::vector<CandidateDecision> out;
    for (const auto& step : mask.steps) {
        std::vector<const Opportunity*> chosen;
        auto rec = [&](auto&& self, std::size_t i) -> void {
            if (i == step.open.size()) {
                if (out.size() >= cap)
                    throw std::runtime_error("candidate count exceeds cap of " + std::to_string(cap) +
                                             "; shorten the planning horizon");
                CandidateDecision d{step.index, step.k, {}};
                for (const auto* o : chosen) d.grants.push_back(o->vehicle);
                std::sort(d.grants.begin(), d.grants.end());
                out.push_back(std::move(d));
                return;
            }
            self(self, i + 1);
            const Opportunity& o = step.open[i];
            for (const auto* g : chosen)
                if (!compatible(*g, o, c)) return;
            chosen.push_back(&o);
            self(self, i + 1);
            chosen.pop_back();
        };
        rec(rec, 0);
    }
    return out;
}

ScoredCandidate evaluate(const CandidateDecision& d, const Forecast& forecast, const Extent& extent,
                         const EstimationContext& ctx, double omega_p) {
    const EstimateTable table = estimate(forecast.at(d.step), d.grants, ctx);
    return {d, weighted_cost(table, extent.population(), d.grants, omega_p)};
}

bool better(const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.cost.z != b.cost.z) return a.cost.z < b.cost.z;
    if (a.decision.grants.size() != b.decision.grants.size())
        return a.decision.grants.size() < b.decision.grants.size();
    if (a.decision.k != b.decision.k) return a.decision.k < b.decision.k;
    return a.decision.grants < b.decision.grants;
}

RowPlan make_plan(const ScoredCandidate& best, const Forecast& forecast, const EstimationContext& ctx) {
    RowPlan plan;
    plan.k_c = best.decision.k;
    plan.objective = best.cost.z;
    const Snapshot& s = forecast.at(best.decision.step);
    struct Slot {
        double x;
        VehicleId id;
    };
    std::vector<Slot> lane;
    for (const auto& v : s.vehicles)
        if (!v.is_virtual && v.lane == Lane::Bus && v.x < ctx.corridor.x_c) lane.push_back({v.x, v.id});
    for (VehicleId id : best.decision.grants) lane.push_back({s.find(id)->x, id});
    std::sort(lane.begin(), lane.end(), [](const Slot& a, const Slot& b) { return a.x != b.x ? a.x > b.x : a.id < b.id; });
    for (VehicleId id : best.decision.grants) {
        Grant g{id, std::nullopt, std::nullopt};
        for (std::size_t i = 0; i < lane.size(); ++i) {
            if (lane[i].id != id) continue;
            if (i > 0) g.predecessor = lane[i - 1].id;
            if (i + 1 < lane.size()) g.follower = lane[i + 1].id;
        }
        plan.grants.push_back(g);
    }
    return plan;
}

RowPlan solve(const Forecast& forecast, const Extent& extent, const OpportunityMask& mask,
              const EstimationContext& ctx, const OptimizerSettings& settings, SolveStats* stats) {
    if (extent.empty() || mask.steps.empty()) return RowPlan{forecast.window.k0, {}, 0.0};
    BranchAndBound bb(forecast, extent, ctx, settings.omega_p, stats);
    const auto best = bb.run(mask);
    return make_plan(*best, forecast, ctx);
}

RowPlan solve_exhaustive(const Forecast& forecast, const Extent& extent, const OpportunityMask& mask,
                         const EstimationContext& ctx, const OptimizerSettings& settings,
                         std::vector<ScoredCandidate>* all) {
    if (extent.empty() || mask.steps.empty()) return RowPlan{forecast.window.k0, {}, 0.0};
    std::optional<ScoredCandidate> best;
    for (const auto& d : enumerate_candidates(extent, mask, ctx.c, settings.candidate_cap)) {
        ScoredCandidate sc = evaluate(d, forecast, extent, ctx, settings.omega_p);
        if (all) all->push_back(sc);
        if (!best || better(sc, *best)) best = std::move(sc);
    }
    return make_plan(*best, forecast, ctx);
}

RowPlan optimize(const Forecast& forecast, const EstimationContext& ctx, const OptimizerSettings& settings) {
    const Extent extent = define_extent(forecast.at(0), ctx);
    if (extent.eligible.empty()) {
        if (extent.empty()) return RowPlan{forecast.window.k0, {}, 0.0};
        const ScoredCandidate base = evaluate({0, forecast.window.k0, {}}, forecast, extent, ctx, settings.omega_p);
        return RowPlan{forecast.window.k0, {}, base.cost.z};
    }
    const OpportunityMask mask = preallocate(forecast, extent, ctx);
    return solve(forecast, extent, mask, ctx, settings);
}

void write_candidate_csv(std::ostream& out, const std::vector<ScoredCandidate>& candidates) {
    out << "k,grants,z\n";
    char buf[64];
    for (const auto& sc : candidates) {
        std::snprintf(buf, sizeof buf, "%.6f", sc.decision.k);
        out << buf << ',';
        for (std::size_t i = 0; i < sc.decision.grants.size(); ++i) out << (i ? ";" : "") << sc.decision.grants[i];
        std::snprintf(buf, sizeof buf, "%.6f", sc.cost.z);
        out << ',' << buf << '\n';
    }
}

}  // namespace dbpl
