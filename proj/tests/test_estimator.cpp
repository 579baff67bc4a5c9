#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "dbpl/estimator.hpp"
#include "dbpl/kinematics.hpp"
#include "dbpl/scenario.hpp"
#include "support/rollout.hpp"

using namespace dbpl;

namespace {

EstimationContext context(bool pocket) {
    const ScenarioConfig c = load_scenario(pocket ? "pocket=yes\nright_turn_ratio=0.2\n" : "");
    return {c.corridor, c.signal, c.vehicle};
}

VehicleState vehicle(VehicleId id, VehicleClass cls, Lane lane, double x, double v,
                     Movement m = Movement::Through) {
    VehicleState s;
    s.id = id;
    s.cls = cls;
    s.lane = lane;
    s.x = x;
    s.v = v;
    s.movement = m;
    s.length = cls == VehicleClass::CAB ? 8.0 : 4.0;
    return s;
}

std::vector<VehicleState> real_order(const Snapshot& s, Lane lane) {
    std::vector<VehicleState> out;
    for (const auto& v : s.vehicles)
        if (v.lane == lane && !v.is_virtual) out.push_back(v);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.x > b.x; });
    return out;
}

}  // namespace

TEST_CASE("signal gate") {
    const EstimationContext ctx = context(false);
    CHECK(signal_gate(75.0, VehicleClass::CAV, ctx.signal, ctx.c) == doctest::Approx(90.0));
    CHECK(signal_gate(60.0, VehicleClass::HDV, ctx.signal, ctx.c) == doctest::Approx(91.9));
    CHECK(signal_gate(100.0, VehicleClass::CAV, ctx.signal, ctx.c) == doctest::Approx(100.0));
    CHECK(signal_gate(100.0, VehicleClass::HDV, ctx.signal, ctx.c) == doctest::Approx(100.0));
    CHECK(signal_gate(91.0, VehicleClass::HDV, ctx.signal, ctx.c) == doctest::Approx(91.9));
    CHECK(signal_gate(95.0, VehicleClass::CAB, ctx.signal, ctx.c) == doctest::Approx(95.0));
}

TEST_CASE("partition by position") {
    const EstimationContext a = context(false), b = context(true);
    std::vector<LaneEntry> lane;
    for (double x : {400.0, 300.0, 270.0, 100.0}) lane.push_back({vehicle(VehicleId(x), VehicleClass::CAV, Lane::Bus, x, 5)});
    const LanePartition pa = partition(lane, Lane::Bus, a.corridor);
    CHECK(pa.passed == std::vector<VehicleId>{400});
    CHECK(pa.between.size() == 3);
    CHECK(pa.upstream.empty());
    const LanePartition pb = partition(lane, Lane::Bus, b.corridor);
    CHECK(pb.between == std::vector<VehicleId>{300, 270});
    CHECK(pb.upstream == std::vector<VehicleId>{100});
}

TEST_CASE("lone bus cruising in green") {
    const EstimationContext ctx = context(false);
    Snapshot s;
    s.t = 35.0;
    s.vehicles.push_back(vehicle(1, VehicleClass::CAB, Lane::Bus, 380.0, 14.0));
    const EstimateTable t = estimate(s, {}, ctx);
    CHECK(t.real(1)->t_dep == doctest::Approx(35.0 + 20.0 / 14.0));
}

TEST_CASE("human driver arriving in red pays the start-up loss") {
    const EstimationContext ctx = context(false);
    Snapshot s;
    s.t = 0.0;
    s.vehicles.push_back(vehicle(1, VehicleClass::HDV, Lane::General, 380.0, 14.0));
    s.vehicles.push_back(vehicle(2, VehicleClass::CAV, Lane::General, 300.0, 14.0));
    const EstimateTable t = estimate(s, {}, ctx);
    CHECK(t.real(1)->t_dep == doctest::Approx(31.9));
    CHECK(t.real(2)->t_dep == doctest::Approx(31.9 + 1.0 + 5.5 / 14.0));
}

TEST_CASE("pocket entrance crossing from rest") {
    const EstimationContext ctx = context(true);
    Snapshot s;
    s.t = 10.0;
    s.vehicles.push_back(vehicle(1, VehicleClass::HDV, Lane::Bus, 0.0, 0.0, Movement::RightTurn));
    const VirtualLanes lanes = sync_virtual(s, {});
    const auto w = pocket_crossing(lanes.bus, s, ctx);
    REQUIRE(w[0]);
    CHECK(w[0]->t == doctest::Approx(10.0 + 7.0 + 221.0 / 14.0));
    CHECK(w[0]->v == doctest::Approx(14.0));
    CHECK(estimate(s, {}, ctx).real(1)->t_dep == doctest::Approx(w[0]->t));
}

TEST_CASE("follower pinned at the pocket entrance") {
    const EstimationContext ctx = context(true);
    Snapshot s;
    s.t = 0.0;
    s.vehicles.push_back(vehicle(1, VehicleClass::CAV, Lane::Bus, 200.0, 0.0, Movement::RightTurn));
    s.vehicles.push_back(vehicle(2, VehicleClass::CAV, Lane::Bus, 190.0, 14.0));
    const VirtualLanes lanes = sync_virtual(s, {});
    const auto w = pocket_crossing(lanes.bus, s, ctx);
    const double hw = 1.0 + 5.5 / 14.0;
    CHECK(w[1]->t == doctest::Approx(w[0]->t + hw));
    CHECK(w[1]->v <= w[0]->v + ctx.c.a_max * hw + 1e-12);
}

TEST_CASE("through vehicle re-chains past a right-turner") {
    const EstimationContext ctx = context(true);
    Snapshot s;
    s.t = 40.0;
    s.vehicles.push_back(vehicle(3, VehicleClass::CAB, Lane::Bus, 200.0, 14.0));
    s.vehicles.push_back(vehicle(4, VehicleClass::CAV, Lane::Bus, 180.0, 14.0, Movement::RightTurn));
    s.vehicles.push_back(vehicle(5, VehicleClass::CAV, Lane::Bus, 170.0, 14.0));
    const EstimateTable t = estimate(s, {}, ctx);
    const double d3 = t.real(3)->t_dep, d5 = t.real(5)->t_dep;
    CHECK(t.real(4)->t_dep < d5);
    CHECK(d5 >= d3 + 1.0 + 9.5 / 14.0 - 1e-9);
    const double w4 = 40.0 + 70.0 / 14.0 + 1.0 + 9.5 / 14.0;
    const double w5 = w4 + 1.0 + 5.5 / 14.0;
    CHECK(d5 == doctest::Approx(std::max(w5 + 130.0 / 14.0, d3 + 1.0 + 9.5 / 14.0)));
}

TEST_CASE("lone through vehicle after the pocket") {
    const EstimationContext ctx = context(true);
    Snapshot s;
    s.t = 30.0;
    s.vehicles.push_back(vehicle(1, VehicleClass::CAV, Lane::Bus, 100.0, 4.0));
    const VirtualLanes lanes = sync_virtual(s, {});
    const auto w = pocket_crossing(lanes.bus, s, ctx);
    const auto rows = reorganize_through(lanes.bus, w, {}, s.t, ctx);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].t_dep == doctest::Approx(w[0]->t + min_travel_time(130.0, w[0]->v, 14.0, 2.0)));
}

TEST_CASE("transparent mirror inherits its predecessor") {
    const EstimationContext ctx = context(false);
    Snapshot s;
    s.t = 35.0;
    s.vehicles.push_back(vehicle(1, VehicleClass::CAB, Lane::Bus, 300.0, 10.0));
    s.vehicles.push_back(vehicle(2, VehicleClass::CAV, Lane::General, 250.0, 10.0));
    const EstimateTable t = estimate(s, {}, ctx);
    CHECK(t.mirror(2)->t_dep == t.real(1)->t_dep);
    const std::vector<VehicleId> g{2};
    const EstimateTable moved = estimate(s, g, ctx);
    CHECK(moved.mirror(2)->t_dep > moved.real(1)->t_dep);
}

TEST_CASE("first mirror inherits the boundary record") {
    const EstimationContext ctx = context(false);
    Snapshot s;
    s.t = 50.0;
    s.bus.t_stopbar = 47.5;
    s.vehicles.push_back(vehicle(1, VehicleClass::CAV, Lane::General, 100.0, 10.0));
    CHECK(estimate(s, {}, ctx).mirror(1)->t_dep == 47.5);
}

TEST_CASE("weighted cost") {
    const std::vector<double> cars{100, 110, 120}, buses{90};
    const Cost base = aggregate_cost(cars, buses, 0.9);
    CHECK(base.t_car == doctest::Approx(110));
    CHECK(base.z == doctest::Approx(0.9 * 90 + 0.1 * 110));
    CHECK(aggregate_cost(cars, buses, 1.0).z == doctest::Approx(90));
    CHECK(aggregate_cost({}, buses, 0.5).z == doctest::Approx(45));
    const std::vector<double> faster{100, 98, 120};
    CHECK(base.z - aggregate_cost(faster, buses, 0.9).z == doctest::Approx(0.1 * 12.0 / 3.0));
}

TEST_CASE("weighted cost drops the general-lane value of a moved car") {
    const EstimationContext ctx = context(false);
    Snapshot s;
    s.t = 35.0;
    s.vehicles.push_back(vehicle(1, VehicleClass::HDV, Lane::General, 300.0, 0.0));
    s.vehicles.push_back(vehicle(2, VehicleClass::CAV, Lane::General, 280.0, 0.0));
    s.vehicles.push_back(vehicle(3, VehicleClass::CAB, Lane::Bus, 200.0, 14.0));
    const CostPopulation pop{{1, 2}, {3}};
    const std::vector<VehicleId> none, g{2};
    const EstimateTable t0 = estimate(s, none, ctx), t1 = estimate(s, g, ctx);
    const Cost c0 = weighted_cost(t0, pop, none, 0.9), c1 = weighted_cost(t1, pop, g, 0.9);
    CHECK(c0.t_car == doctest::Approx((t0.real(1)->t_dep + t0.real(2)->t_dep) / 2));
    CHECK(c1.t_car == doctest::Approx((t1.real(1)->t_dep + t1.mirror(2)->t_dep) / 2));
    CHECK(c1.t_bus == doctest::Approx(t1.real(3)->t_dep));
}

TEST_CASE("ordering, headway floor and signal compliance on random snapshots") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 400; ++i) {
        const EstimationContext ctx = context(i % 2 == 1);
        const auto r = testing::random_snapshot(rng, ctx, 10);
        const EstimateTable t = estimate(r.snapshot, r.granted, ctx);
        for (Lane lane : {Lane::General, Lane::Bus}) {
            const auto order = real_order(r.snapshot, lane);
            const EstimateRow* prev = nullptr;
            VehicleClass prev_cls = VehicleClass::CAV;
            for (const auto& v : order) {
                const EstimateRow* row = t.real(v.id);
                REQUIRE(row);
                if (v.movement == Movement::RightTurn) continue;
                if (lane == Lane::General && std::find(r.granted.begin(), r.granted.end(), v.id) != r.granted.end())
                    continue;
                if (v.x < ctx.corridor.x_c) {
                    const double in_cycle = row->t_dep - ctx.signal.cycle_start(row->t_dep);
                    CHECK(in_cycle >= ctx.signal.t_r - 1e-9);
                    if (v.cls == VehicleClass::HDV) CHECK(in_cycle >= ctx.signal.t_r + 1.9 - 1e-9);
                    CHECK(row->t_dep >= r.snapshot.t);
                }
                if (prev && v.x < ctx.corridor.x_c) {
                    CHECK(row->t_dep > prev->t_dep);
                    CHECK(row->t_dep - prev->t_dep >= testing::close_headway(v.cls, prev_cls, ctx.c) - 1e-9);
                }
                prev = row;
                prev_cls = v.cls;
            }
        }
    }
}

TEST_CASE("mirrors without grants change no real departure") {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 300; ++i) {
        const EstimationContext ctx = context(i % 2 == 0);
        auto r = testing::random_snapshot(rng, ctx, 10);
        const EstimateTable with = estimate(r.snapshot, {}, ctx);
        Snapshot bare = r.snapshot;
        for (auto& v : bare.vehicles)
            if (v.lane == Lane::General && v.cls == VehicleClass::CAV) v.cls = VehicleClass::HDV;
        for (const auto& v : r.snapshot.vehicles) {
            if (v.lane != Lane::Bus) continue;
            CHECK(estimate(bare, {}, ctx).real(v.id)->t_dep == with.real(v.id)->t_dep);
        }
    }
}

TEST_CASE("estimates agree with a stepwise rollout") {
    std::mt19937_64 rng(29);
    for (int i = 0; i < 200; ++i) {
        const EstimationContext ctx = context(i % 2 == 1);
        const auto r = testing::random_snapshot(rng, ctx, 10);
        const EstimateTable t = estimate(r.snapshot, r.granted, ctx);
        const auto truth = testing::rollout(r.snapshot, r.granted, ctx);
        for (const auto& [id, dep] : truth) {
            const bool moved = std::find(r.granted.begin(), r.granted.end(), id) != r.granted.end();
            const EstimateRow* row = moved ? t.mirror(id) : t.real(id);
            REQUIRE(row);
            CHECK(std::abs(row->t_dep - dep) <= 1.0);
        }
    }
}
