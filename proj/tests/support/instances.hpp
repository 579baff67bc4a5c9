#pragma once

// Optimizer instances cut from live simulations: forecasts taken at random instants of
// DBPL runs with varied penetration, demand and geometry.

#include <random>
#include <vector>

#include "dbpl/optimizer.hpp"
#include "dbpl/scenario.hpp"
#include "dbpl/simulator.hpp"

namespace dbpl::testing {

struct OptimizerInstance {
    EstimationContext ctx;
    OptimizerSettings settings;
    Forecast forecast;
    Extent extent;
    OpportunityMask mask;
    bool pocket = false;
};

inline EstimationContext context_of(const ScenarioConfig& cfg) {
    return {cfg.corridor, cfg.signal, cfg.vehicle};
}

inline OptimizerSettings settings_of(const ScenarioConfig& cfg) {
    return {cfg.omega_p, cfg.dk, cfg.horizon, cfg.k_lc, cfg.candidate_cap};
}

// Collects count instances with 1..max_eligible opportunity holders, alternating geometry.
inline std::vector<OptimizerInstance> sample_instances(std::size_t count, std::size_t max_eligible,
                                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<OptimizerInstance> out;
    std::uint64_t run = 0;
    while (out.size() < count) {
        const bool pocket = run % 2 == 1;
        std::string text = "strategy=dbpl\nduration=900\nseed=" + std::to_string(seed * 1000 + run) + "\n";
        text += "mpr=" + std::to_string(0.2 + 0.6 * unit(rng)) + "\n";
        text += "Q_veh=" + std::to_string(500 + 400 * unit(rng)) + "\n";
        text += "horizon=" + std::to_string(4 + static_cast<int>(unit(rng) * 7)) + "\n";
        if (pocket) text += "pocket=yes\nright_turn_ratio=0.2\n";
        ++run;
        const ScenarioConfig cfg = load_scenario(text);
        Simulator sim(cfg, generate_arrivals(cfg));
        const EstimationContext ctx = context_of(cfg);
        std::size_t taken = 0;
        while (!sim.done() && out.size() < count && taken < 40) {
            sim.step();
            if (unit(rng) > 0.15) continue;
            OptimizerInstance inst{ctx, settings_of(cfg), sim.forecast(sim.plant().t), {}, {}, pocket};
            inst.extent = define_extent(inst.forecast.at(0), ctx);
            if (inst.extent.eligible.empty()) continue;
            inst.mask = preallocate(inst.forecast, inst.extent, ctx);
            std::vector<VehicleId> holders;
            for (const auto& st : inst.mask.steps)
                for (const auto& o : st.open)
                    if (std::find(holders.begin(), holders.end(), o.vehicle) == holders.end()) holders.push_back(o.vehicle);
            if (holders.empty() || holders.size() > max_eligible) continue;
            out.push_back(std::move(inst));
            ++taken;
        }
    }
    return out;
}

}  // namespace dbpl::testing
