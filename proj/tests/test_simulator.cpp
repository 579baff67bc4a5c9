#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "dbpl/kinematics.hpp"
#include "dbpl/scenario.hpp"
#include "dbpl/simulator.hpp"

using namespace dbpl;

namespace {

ScenarioConfig config(const std::string& text) { return load_scenario(text); }

struct Outputs {
    std::string trajectory, metrics, events;
    Aggregates aggregates;
};

Outputs run(const ScenarioConfig& cfg) {
    Simulator sim(cfg, generate_arrivals(cfg));
    std::ostringstream traj;
    write_trajectory_header(traj);
    sim.set_trajectory_sink(&traj);
    sim.run();
    std::ostringstream m, e;
    sim.write_metrics(m);
    sim.write_events(e);
    return {traj.str(), m.str(), e.str(), sim.aggregates()};
}

}  // namespace

TEST_CASE("IDM closed form") {
    const IdmParams p = hdv_idm(Constants{});
    CHECK(std::abs(idm_accel(p, 14.0, 1e9, 14.0)) < 1e-9);
    const double s_star = 2.5 + 10.0 * 2.0;
    const double expect = 2.0 * (1.0 - std::pow(10.0 / 14.0, 4) - (s_star / 20.0) * (s_star / 20.0));
    CHECK(idm_accel(p, 10.0, 20.0, 10.0) == doctest::Approx(expect));
    CHECK(expect < 0);
    CHECK(idm_accel(p, 0.0, 1e9, 0.0) == doctest::Approx(2.0));
    long incidents = 0;
    CHECK(idm_accel(p, 5.0, 0.0, 0.0, &incidents) == -2.0);
    CHECK(incidents == 1);
    CHECK(idm_accel(p, 14.0, 1.0, 0.0) == -2.0);
}

TEST_CASE("safe speed keeps the gap and a stopping reserve") {
    const double dt = 1.0, b = 2.0;
    const double u = safe_speed(100.0, 10.0, 130.0, 0.0, 0.5, b, dt);
    REQUIRE(u > 0);
    const double x_next = 100.0 + (10.0 + u) / 2.0;
    CHECK(x_next + u * u / (2 * b) <= 129.5 + 1e-9);
    CHECK(safe_speed(100.0, 10.0, 101.0, 0.0, 0.5, b, dt) == -kInf);
    CHECK(safe_speed(100.0, 1.0, 101.0, 0.0, 0.5, b, dt) == 0.0);
}

TEST_CASE("gated speed keeps the front behind the bar") {
    const double u = gated_speed(10.0, 350.0, 14.0, 30.0, 400.0, 0.0, 14.0, 2.0, 1.0);
    CHECK(u < 14.0);
    const double x_next = 350.0 + (14.0 + u) / 2.0;
    CHECK(x_next + u * u / 4.0 <= 400.0 + 1e-6);
    CHECK(gated_speed(40.0, 300.0, 14.0, 30.0, 400.0, 0.0, 14.0, 2.0, 1.0) == kInf);
    CHECK(gated_speed(10.0, 399.0, 14.0, 30.0, 400.0, 0.0, 14.0, 2.0, 1.0) == -kInf);
}

TEST_CASE("CAV planning") {
    const Constants c;
    const SignalPlan s;
    const CavProfile free = cav_plan(35.0, 200.0, 14.0, -kInf, 1.0, s, c, 1.0);
    CHECK(free.cruise == 14.0);
    CHECK(free.target_cross == doctest::Approx(35.0 + 200.0 / 14.0));
    const CavProfile slow = cav_plan(5.0, 200.0, 14.0, -kInf, 1.0, s, c, 1.0);
    CHECK(slow.target_cross == doctest::Approx(30.0));
    CHECK(slow.cruise > 0);
    CHECK(cruise_time(200.0, 14.0, slow.cruise, 2.0) == doctest::Approx(25.0).epsilon(1e-6));
    const CavProfile queued = cav_plan(35.0, 50.0, 14.0, 60.0, 1.0, s, c, 1.0);
    CHECK(queued.target_cross == doctest::Approx(90.0));
    CHECK(cav_plan(95.0, 50.0, 14.0, 99.0, 1.0, s, c, 1.0).target_cross == doctest::Approx(100.0));
}

TEST_CASE("arrival streams") {
    SUBCASE("no automated cars at zero penetration") {
        for (const auto& a : generate_arrivals(config("mpr=0\nduration=3600\n"))) CHECK(a.cls != VehicleClass::CAV);
    }
    SUBCASE("mean headway and shares") {
        const ScenarioConfig cfg = config("duration=400000\nmpr=0.4\npocket=yes\nright_turn_ratio=0.2\n");
        std::size_t cars = 0, cavs = 0, turns = 0;
        double last = 0.0;
        std::vector<double> gaps, dwells;
        for (const auto& a : generate_arrivals(cfg)) {
            if (a.cls == VehicleClass::CAB) {
                gaps.push_back(a.t - last);
                last = a.t;
                dwells.push_back(a.dwell);
                CHECK(a.movement == Movement::Through);
                continue;
            }
            ++cars;
            cavs += a.cls == VehicleClass::CAV;
            turns += a.movement == Movement::RightTurn;
        }
        REQUIRE(cars >= 10000);
        CHECK(std::abs(400000.0 / cars - 5.0) / 5.0 < 0.02);
        CHECK(std::abs(double(turns) / cars - 0.2) < 0.01);
        CHECK(std::abs(double(cavs) / cars - 0.4) < 0.015);
        for (double g : gaps) CHECK(g >= 10.0);
        for (double d : dwells) CHECK(d >= 5.0);
    }
    SUBCASE("independent of strategy and sorted with unique ids") {
        ScenarioConfig a = config("mpr=0.3\nseed=4\n"), b = a;
        b.strategy = Strategy::DBPL;
        const auto x = generate_arrivals(a), y = generate_arrivals(b);
        REQUIRE(x.size() == y.size());
        std::map<VehicleId, int> ids;
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(x[i].t == y[i].t);
            CHECK(x[i].cls == y[i].cls);
            CHECK(x[i].dwell == y[i].dwell);
            if (i) CHECK(x[i - 1].t <= x[i].t);
            ++ids[x[i].id];
        }
        CHECK(ids.size() == x.size());
    }
}

TEST_CASE("lone bus: approach, dwell, depart") {
    ScenarioConfig cfg = config("duration=200\nQ_veh=0\n");
    const Constants& c = cfg.vehicle;
    int checked = 0;
    for (double dwell = 5.0; dwell <= 60.0; dwell += 1.0) {
        Simulator sim(cfg, {Arrival{1, 0.0, VehicleClass::CAB, Movement::Through, dwell}});
        double t_stop = -1.0;
        while (!sim.done() && sim.records().empty()) {
            for (const auto& v : sim.plant().vehicles)
                if (v.stage == BusStage::Dwell && t_stop < 0) t_stop = sim.plant().t;
            sim.step();
        }
        REQUIRE(sim.records().size() == 1);
        REQUIRE(t_stop >= 0);
        const double expect = t_stop + dwell + min_travel_time(cfg.corridor.x_c - cfg.corridor.x_s, 0.0, c.v_max, c.a_max);
        const double exit = sim.records()[0].exit;
        CHECK(exit >= expect - 1.0);
        const double in_cycle = std::fmod(expect, 60.0);
        if (in_cycle > 32.0 && in_cycle < 58.0) {
            CHECK(std::abs(exit - expect) <= 2.0);
            ++checked;
        }
        CHECK(phase_at(cfg.signal, exit) == Phase::Green);
    }
    CHECK(checked > 10);
}

TEST_CASE("lone right-turner borrows the bus lane and leaves by the pocket") {
    const ScenarioConfig cfg = config("duration=120\npocket=yes\nright_turn_ratio=0.2\nQ_veh=0\nbus_interval_mean=1000\n");
    Simulator sim(cfg, {Arrival{1, 0.0, VehicleClass::HDV, Movement::RightTurn, 0.0}});
    double min_v = kInf;
    while (!sim.done() && sim.records().empty()) {
        sim.step();
        for (const auto& v : sim.plant().vehicles)
            if (v.s.x > 20.0) min_v = std::min(min_v, v.s.v);
    }
    REQUIRE(sim.records().size() == 1);
    CHECK(sim.records()[0].lanes == "GBP");
    CHECK(min_v > 0.0);
}

TEST_CASE("safety, conservation and purity") {
    for (const char* extra : {"", "pocket=yes\nright_turn_ratio=0.2\n"}) {
        for (const char* strat : {"ebl", "dbpl"}) {
            const ScenarioConfig cfg = config(std::string("duration=900\nmpr=0.5\nseed=3\nstrategy=") + strat + "\n" + extra);
            Simulator sim(cfg, generate_arrivals(cfg));
            while (!sim.done()) {
                sim.step();
                if (cfg.strategy == Strategy::EBL)
                    for (const auto& v : sim.plant().vehicles)
                        if (v.s.lane == Lane::Bus && v.s.cls != VehicleClass::CAB)
                            CHECK(v.s.movement == Movement::RightTurn);
            }
            const Aggregates a = sim.aggregates();
            CHECK(a.counters == SafetyCounters{});
            CHECK(a.arrivals == a.departed + a.in_corridor + a.queued);
            std::map<std::pair<int, int>, std::size_t> seen, spawned;
            for (const auto& r : sim.records()) ++seen[{int(r.cls), int(r.movement)}];
            for (const auto& v : sim.plant().vehicles) ++seen[{int(v.s.cls), int(v.s.movement)}];
            for (const auto& arr : generate_arrivals(cfg))
                if (arr.t < sim.plant().t) ++spawned[{int(arr.cls), int(arr.movement)}];
            for (const auto& [key, n] : seen) CHECK(n <= spawned[key]);
            for (const auto& r : sim.records()) CHECK(r.travel_time() > 0);
        }
    }
}

TEST_CASE("same seed, same bytes") {
    const ScenarioConfig cfg = config("duration=600\nmpr=0.4\nstrategy=dbpl\nseed=9\n");
    const Outputs a = run(cfg), b = run(cfg);
    CHECK(a.trajectory == b.trajectory);
    CHECK(a.metrics == b.metrics);
    CHECK(a.events == b.events);
    CHECK(a.trajectory.rfind("t,vehicle_id,class,movement,lane,x,v\n", 0) == 0);
}

TEST_CASE("strategies coincide without automated cars") {
    ScenarioConfig cfg = config("duration=900\nmpr=0\nseed=2\n");
    const Outputs ebl = run(cfg);
    cfg.strategy = Strategy::DBPL;
    const Outputs dbpl = run(cfg);
    CHECK(ebl.metrics == dbpl.metrics);
    CHECK(ebl.trajectory == dbpl.trajectory);
}

TEST_CASE("aggregates recompute from records") {
    const ScenarioConfig cfg = config("duration=900\nmpr=0.4\nstrategy=dbpl\n");
    Simulator sim(cfg, generate_arrivals(cfg));
    sim.run();
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : sim.records())
        if (r.cls != VehicleClass::CAB && r.arrival >= cfg.warmup) {
            sum += r.exit - r.arrival;
            ++n;
        }
    const Aggregates a = sim.aggregates();
    CHECK(a.car.count == n);
    CHECK(a.car.mean == doctest::Approx(sum / n));
}

TEST_CASE("forecast replays without touching the plant") {
    const ScenarioConfig cfg = config("duration=400\nmpr=0.5\nstrategy=dbpl\n");
    Simulator sim(cfg, generate_arrivals(cfg));
    for (int i = 0; i < 200; ++i) sim.step();
    const Snapshot before = sim.snapshot();
    const Forecast f = sim.forecast(sim.plant().t);
    CHECK(f.steps.size() == f.window.size() + 1);
    CHECK(f.at(0).t == before.t);
    CHECK(f.at(3).t == doctest::Approx(before.t + 3));
    CHECK(sim.snapshot().vehicles == before.vehicles);
}
