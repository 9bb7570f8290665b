#pragma once

#include <vector>

#include "recon/mdp.hpp"

namespace recon {

/// Bi-objective problem: optimize the task reward first, then a secondary
/// reward, sacrificing at most `slack` of task value per objective.
///
/// The secondary objective is stored as a nonpositive reward (a negated
/// penalty) so both stages run through the same max-form Bellman backup.
struct LexicographicProblem {
    const AgentTaskModel* base = nullptr;
    std::vector<RewardMap> rewards;  // [task, negated penalty]
    std::vector<double> slack;       // one entry per non-final objective

    void validate() const;
};

/// Per-state allowed action subsets surviving the slack filter.
struct RestrictedActionSets {
    std::vector<std::vector<int>> allowed;  // [state] -> nonempty action list
};

/// Keeps every action whose Q falls within eta = (1-gamma)*slack of the
/// best Q at that state. An extra kTieTolerance absorbs float noise so
/// exactly-optimal actions always survive slack 0.
RestrictedActionSets restrict_actions(const ValueTable& table, double slack,
                                      double discount);

/// Diagnostic bundle from the two-stage solve.
struct LexiSolution {
    Policy policy;
    ValueTable task_table;       // stage-1 optimum
    ValueTable secondary_table;  // stage-2 optimum over restricted sets
    RestrictedActionSets allowed;
};

/// Two-stage lexicographic value iteration: solve the task objective, filter
/// actions by slack, then solve the secondary objective over the restricted
/// sets. The returned policy loses at most slack (plus solver tolerance) of
/// task value; at slack 0 it stays task-optimal.
Policy lexicographic_value_iteration(const LexicographicProblem& problem,
                                     double tolerance);

/// Same as lexicographic_value_iteration but keeps the intermediate tables.
LexiSolution lexicographic_value_iteration_detailed(
    const LexicographicProblem& problem, double tolerance);

/// Value iteration where the max ranges only over `allowed` actions.
/// Disallowed actions still get Q entries for inspection.
ValueTable restricted_value_iteration(const AgentTaskModel& model,
                                      const RewardMap& reward,
                                      const RestrictedActionSets& allowed,
                                      double tolerance);

/// Action-uniform reward charging -penalty[s] for every action taken in s.
/// Matches rollout accounting, where a state's penalty accrues once per
/// step spent in it.
RewardMap state_penalty_reward(const std::vector<double>& penalty,
                               int num_actions);

}  // namespace recon
