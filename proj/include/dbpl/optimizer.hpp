#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dbpl/domain.hpp"
#include "dbpl/estimator.hpp"

namespace dbpl {

struct OptimizerSettings {
    double omega_p = 0.9;
    double dk = 1.0;
    double horizon = 10.0;
    int k_lc = 1;
    std::size_t candidate_cap = 65536;
};

// Predicted snapshots at k0 + j*dk for j = 0 .. h/dk + k_lc, produced by a
// control-free, noise-free, spawn-free replay of the plant.
struct Forecast {
    PlanningWindow window;
    int k_lc = 1;
    std::vector<Snapshot> steps;

    const Snapshot& at(std::size_t j) const { return steps.at(j); }
    const Snapshot& after_change(std::size_t j) const;
};

struct Extent {
    std::vector<VehicleId> general;   // optimizable general-lane vehicles
    std::vector<VehicleId> bus;       // bus-lane vehicles entering the objective
    std::vector<VehicleId> eligible;  // general-lane CAVs among them
    double t1 = kInf;                 // earliest stop-bar arrival of a dwelling bus

    CostPopulation population() const { return {general, bus}; }
    bool empty() const { return general.empty() && bus.empty(); }
};

struct Gap {
    double follow = 0.0;   // front of the vehicle behind the gap (0 at the entry)
    double lead = 0.0;     // rear of the vehicle ahead (stop bar when none)
    std::optional<VehicleId> follower;
    std::optional<VehicleId> leader;
};

struct Opportunity {
    VehicleId vehicle = 0;
    std::size_t gap = 0;
    double x = 0.0;
    double length = 4.0;
};

struct MaskStep {
    std::size_t index = 0;   // position in the forecast
    double k = 0.0;
    std::vector<Gap> gaps;
    std::vector<Opportunity> open;   // vehicles with an opportunity, downstream first
};

struct OpportunityMask {
    std::vector<MaskStep> steps;   // reduced step set only

    bool theta(VehicleId id, double k) const;
    std::vector<double> reduced_steps() const;
};

struct CandidateDecision {
    std::size_t step = 0;            // forecast index
    double k = 0.0;
    std::vector<VehicleId> grants;   // ascending ids
};

struct ScoredCandidate {
    CandidateDecision decision;
    Cost cost;
};

struct SolveStats {
    std::size_t nodes = 0;
    std::size_t leaves = 0;
};

Extent define_extent(const Snapshot& s0, const EstimationContext& ctx);

// Bus-lane gaps wide enough for a car at the snapshot.
std::vector<Gap> available_gaps(const Snapshot& s, const EstimationContext& ctx);

OpportunityMask preallocate(const Forecast& forecast, const Extent& extent, const EstimationContext& ctx);

// Two grants fit together if they use different gaps or keep d_safe between them.
bool compatible(const Opportunity& a, const Opportunity& b, const Constants& c);

// Throws std::runtime_error when the count exceeds cap.
std::vector<CandidateDecision> enumerate_candidates(const Extent& extent, const OpportunityMask& mask,
                                                    const Constants& c, std::size_t cap);

ScoredCandidate evaluate(const CandidateDecision& d, const Forecast& forecast, const Extent& extent,
                         const EstimationContext& ctx, double omega_p);

// Strict ordering used for the argmin: cost, then fewer grants, earlier k, lower ids.
bool better(const ScoredCandidate& a, const ScoredCandidate& b);

RowPlan solve(const Forecast& forecast, const Extent& extent, const OpportunityMask& mask,
              const EstimationContext& ctx, const OptimizerSettings& settings, SolveStats* stats = nullptr);

// Full enumeration without pruning; the reference for solve.
RowPlan solve_exhaustive(const Forecast& forecast, const Extent& extent, const OpportunityMask& mask,
                         const EstimationContext& ctx, const OptimizerSettings& settings,
                         std::vector<ScoredCandidate>* all = nullptr);

RowPlan make_plan(const ScoredCandidate& best, const Forecast& forecast, const EstimationContext& ctx);

RowPlan optimize(const Forecast& forecast, const EstimationContext& ctx, const OptimizerSettings& settings);

void write_candidate_csv(std::ostream& out, const std::vector<ScoredCandidate>& candidates);

}  // namespace dbpl
