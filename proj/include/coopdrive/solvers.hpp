#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "coopdrive/scheduling.hpp"

namespace coopdrive {

/// Search budget. wall_seconds <= 0 disables the wall-clock limit; at least
/// one of the two limits must be active. With an iteration limit and a fixed
/// seed a search is fully deterministic.
struct SolverBudget {
    double wall_seconds = 0.1;
    std::optional<long> max_iterations;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SolverTelemetry {
    long iterations = 0;
    bool complete = false;       // search space exhausted (result provably optimal)
    bool fifo_fallback = false;  // zero-budget escape hatch was taken
    std::vector<double> incumbent_curve;
};

struct SolverResult {
    PassingOrder order;
    Assignment assignment;
    double objective = 0.0;
    SolverTelemetry telemetry;
};

/// Ascending minimal arrival time, ties by (lane, vehicle id); same-lane
/// precedence holds by construction.
SolverResult solve_fifo(const SchedulingInstance& inst);

/// Branch-and-bound over precedence-respecting passing orders, exact when it
/// completes within budget (telemetry.complete), best-so-far otherwise. In
/// global scope the search walks (vehicle, intersection) events in
/// chronological canonical order, which also skips cyclically-coupled order
/// combinations.
SolverResult solve_exact(const SchedulingInstance& inst, const SolverBudget& budget);

/// Monte Carlo tree search over order prefixes, minimizing the weighted
/// sub-problem delay. Selection is UCT adapted to minimization, rollouts
/// complete the sequence FIFO, and fully explored subtrees are marked solved
/// so small instances terminate exactly. Single-intersection instances only.
SolverResult solve_mcts(const SchedulingInstance& inst, const SolverBudget& budget);

/// Dynamic-resequencing baseline: keeps the carried-over order (given as
/// vehicle ids from the previous tick) and inserts each new arrival at the
/// position that minimizes the weighted objective, ties to the earliest
/// position.
SolverResult solve_greedy_resequence(const SchedulingInstance& inst,
                                     const std::vector<int>& prev_order_vids);

}  // namespace coopdrive
