#include "recon/lexicographic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace recon {

void LexicographicProblem::validate() const {
    if (base == nullptr) throw InputError("lexicographic problem has no base model");
    if (rewards.size() != slack.size() + 1) {
        throw InputError("need one slack entry per non-final objective");
    }
    if (rewards.size() != 2) {
        throw InputError("exactly two objectives are supported");
    }
    for (double d : slack) {
        if (!(d >= 0.0)) throw InputError("slack must be nonnegative");
    }
}

RestrictedActionSets restrict_actions(const ValueTable& table, double slack,
                                      double discount) {
    if (!(slack >= 0.0)) throw InputError("slack must be nonnegative");
    const double eta = (1.0 - discount) * slack;
    RestrictedActionSets sets;
    sets.allowed.resize(table.q_values.size());
    for (std::size_t s = 0; s < table.q_values.size(); ++s) {
        const auto& q = table.q_values[s];
        double best = *std::max_element(q.begin(), q.end());
        for (int a = 0; a < static_cast<int>(q.size()); ++a) {
            if (best - q[a] <= eta + kTieTolerance) {
                sets.allowed[s].push_back(a);
            }
        }
        if (sets.allowed[s].empty()) {
            throw ModelError("restricted action set empty at state " +
                             std::to_string(s));
        }
    }
    return sets;
}

ValueTable restricted_value_iteration(const AgentTaskModel& model,
                                      const RewardMap& reward,
                                      const RestrictedActionSets& allowed,
                                      double tolerance) {
    if (!(tolerance > 0.0)) throw InputError("tolerance must be positive");
    if (static_cast<int>(allowed.allowed.size()) != model.num_states) {
        throw InputError("restricted sets do not match model");
    }

    auto backup = [&](const std::vector<double>& values, int s, int a) {
        double q = reward[s][a];
        for (const auto& e : model.transitions[s][a]) {
            q += model.discount * e.prob * values[e.next];
        }
        return q;
    };

    const double stop = tolerance * (1.0 - model.discount);
    std::vector<double> values(model.num_states, 0.0);
    std::vector<double> next(model.num_states, 0.0);
    const long max_sweeps = 20'000'000;
    for (long it = 0;; ++it) {
        if (it >= max_sweeps) {
            throw ModelError("restricted value iteration failed to converge");
        }
        double diff = 0.0;
        for (int s = 0; s < model.num_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a : allowed.allowed[s]) {
                best = std::max(best, backup(values, s, a));
            }
            next[s] = best;
            diff = std::max(diff, std::abs(next[s] - values[s]));
        }
        values.swap(next);
        if (diff <= stop) break;
    }

    ValueTable table;
    table.q_values.assign(model.num_states,
                          std::vector<double>(model.num_actions, 0.0));
    table.values.assign(model.num_states, 0.0);
    for (int s = 0; s < model.num_states; ++s) {
        for (int a = 0; a < model.num_actions; ++a) {
            table.q_values[s][a] = backup(values, s, a);
        }
        double best = -std::numeric_limits<double>::infinity();
        for (int a : allowed.allowed[s]) best = std::max(best, table.q_values[s][a]);
        table.values[s] = best;
    }
    return table;
}

LexiSolution lexicographic_value_iteration_detailed(
    const LexicographicProblem& problem, double tolerance) {
    problem.validate();
    const AgentTaskModel& model = *problem.base;

    LexiSolution sol;
    sol.task_table = value_iteration(model, problem.rewards[0], tolerance);
    sol.allowed = restrict_actions(sol.task_table, problem.slack[0], model.discount);
    sol.secondary_table = restricted_value_iteration(model, problem.rewards[1],
                                                     sol.allowed, tolerance);

    // Greedy over the restricted set under the secondary objective; ties go
    // to the lowest action index so replans are reproducible.
    sol.policy.action.assign(model.num_states, -1);
    for (int s = 0; s < model.num_states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a : sol.allowed.allowed[s]) {
            best = std::max(best, sol.secondary_table.q_values[s][a]);
        }
        for (int a : sol.allowed.allowed[s]) {
            if (sol.secondary_table.q_values[s][a] >= best - kTieTolerance) {
                sol.policy.action[s] = a;
                break;
            }
        }
    }
    return sol;
}

Policy lexicographic_value_iteration(const LexicographicProblem& problem,
                                     double tolerance) {
    return lexicographic_value_iteration_detailed(problem, tolerance).policy;
}

RewardMap state_penalty_reward(const std::vector<double>& penalty,
                               int num_actions) {
    if (num_actions < 1) throw InputError("need at least one action");
    // Negative entries are allowed: difference-reward credits pass through
    // sign and all, turning into positive secondary rewards.
    RewardMap reward(penalty.size(), std::vector<double>(num_actions, 0.0));
    for (std::size_t s = 0; s < penalty.size(); ++s) {
        std::fill(reward[s].begin(), reward[s].end(), -penalty[s]);
    }
    return reward;
}

}  // namespace recon
