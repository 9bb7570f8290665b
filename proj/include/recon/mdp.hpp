#pragma once

#include <vector>

#include "recon/common.hpp"

namespace recon {

/// One entry of a sparse transition row.
struct TransitionEntry {
    int next;
    double prob;
};

/// Probability distribution over successor states for one (state, action).
using TransitionRow = std::vector<TransitionEntry>;

/// Reward table indexed [state][action].
using RewardMap = std::vector<std::vector<double>>;

/// A single agent's tabular MDP: finite states and actions, sparse
/// transition rows, a task reward, a start state and a discount in [0,1).
///
/// Rows must be normalized (probabilities sum to 1 within 1e-9) and every
/// transition target must be a declared state. `terminal` marks absorbing
/// task-complete states; rollouts stop once every agent sits in one.
/// Models are immutable after validate(); solvers never mutate them.
struct AgentTaskModel {
    int num_states = 0;
    int num_actions = 0;
    std::vector<std::vector<TransitionRow>> transitions;  // [state][action]
    RewardMap task_reward;                                // [state][action]
    std::vector<char> terminal;                           // absorbing task-complete
    int start_state = 0;
    double discount = 0.95;

    /// Throws ModelError on malformed rows, out-of-range targets, bad
    /// discount, or terminal states that are not absorbing.
    void validate() const;
};

/// Value function plus action values. After value_iteration converges,
/// values[s] == max_a q_values[s][a] within 1e-9. Tables produced by
/// policy_evaluation instead satisfy values[s] == q_values[s][policy(s)].
struct ValueTable {
    std::vector<double> values;
    std::vector<std::vector<double>> q_values;  // [state][action]
};

/// Deterministic policy: one action index per state. -1 marks an undefined
/// entry; using one during a rollout is a contract violation.
struct Policy {
    std::vector<int> action;

    int at(int state) const {
        if (state < 0 || state >= static_cast<int>(action.size()) ||
            action[state] < 0) {
            throw ModelError("policy undefined at state " + std::to_string(state));
        }
        return action[state];
    }
};

/// Action index tie tolerance shared by greedy argmax and slack filtering.
inline constexpr double kTieTolerance = 1e-9;

/// Solves max_a [r(s,a) + gamma * sum_s' T(s,a,s') V(s')] to a fixed point.
///
/// The returned table's Bellman residual is at most `tolerance` in max-norm
/// (the loop actually runs until the estimated distance to the fixed point
/// is below tolerance, which implies the residual bound with margin).
ValueTable value_iteration(const AgentTaskModel& model, const RewardMap& reward,
                           double tolerance);

/// Greedy argmax over q_values with ties within kTieTolerance broken by
/// lowest action index.
Policy greedy_policy(const AgentTaskModel& model, const ValueTable& table);

/// Fixed point of V(s) = r(s, pi(s)) + gamma * sum_s' T(s, pi(s), s') V(s').
/// Scores a fixed policy under an arbitrary reward (task or penalty).
ValueTable policy_evaluation(const AgentTaskModel& model, const Policy& policy,
                             const RewardMap& reward, double tolerance);

/// Max-norm Bellman optimality residual of `values` for the given reward.
double bellman_residual(const AgentTaskModel& model, const RewardMap& reward,
                        const std::vector<double>& values);

}  // namespace recon
