#include "recon/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace recon {

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

void AgentTaskModel::validate() const {
    if (num_states <= 0 || num_actions <= 0) {
        throw ModelError("model needs at least one state and one action");
    }
    if (!(discount >= 0.0 && discount < 1.0)) {
        throw ModelError("discount must lie in [0,1)");
    }
    if (start_state < 0 || start_state >= num_states) {
        throw ModelError("start state out of range");
    }
    if (static_cast<int>(transitions.size()) != num_states ||
        static_cast<int>(task_reward.size()) != num_states) {
        throw ModelError("transition/reward tables sized differently from state space");
    }
    for (int s = 0; s < num_states; ++s) {
        if (static_cast<int>(transitions[s].size()) != num_actions ||
            static_cast<int>(task_reward[s].size()) != num_actions) {
            throw ModelError("state " + std::to_string(s) +
                             " has rows for the wrong number of actions");
        }
        for (int a = 0; a < num_actions; ++a) {
            double total = 0.0;
            for (const auto& e : transitions[s][a]) {
                if (e.next < 0 || e.next >= num_states) {
                    throw ModelError("transition target out of range at state " +
                                     std::to_string(s));
                }
                if (e.prob < 0.0) {
                    throw ModelError("negative transition probability at state " +
                                     std::to_string(s));
                }
                total += e.prob;
            }
            if (std::abs(total - 1.0) > 1e-9) {
                throw ModelError("transition row (" + std::to_string(s) + "," +
                                 std::to_string(a) + ") sums to " +
                                 std::to_string(total));
            }
            if (!std::isfinite(task_reward[s][a])) {
                throw ModelError("non-finite task reward at state " +
                                 std::to_string(s));
            }
        }
    }
    if (!terminal.empty()) {
        if (static_cast<int>(terminal.size()) != num_states) {
            throw ModelError("terminal flags sized differently from state space");
        }
        for (int s = 0; s < num_states; ++s) {
            if (!terminal[s]) continue;
            for (int a = 0; a < num_actions; ++a) {
                const auto& row = transitions[s][a];
                if (row.size() != 1 || row[0].next != s) {
                    throw ModelError("terminal state " + std::to_string(s) +
                                     " is not absorbing");
                }
            }
        }
    }
}

namespace {

void check_reward(const AgentTaskModel& model, const RewardMap& reward) {
    if (static_cast<int>(reward.size()) != model.num_states) {
        throw InputError("reward map not defined on all states");
    }
    for (int s = 0; s < model.num_states; ++s) {
        if (static_cast<int>(reward[s].size()) != model.num_actions) {
            throw InputError("reward map missing actions at state " +
                             std::to_string(s));
        }
        for (double r : reward[s]) {
            if (!std::isfinite(r)) {
                throw InputError("non-finite reward at state " + std::to_string(s));
            }
        }
    }
}

double q_backup(const AgentTaskModel& model, const RewardMap& reward,
                const std::vector<double>& values, int s, int a) {
    double q = reward[s][a];
    for (const auto& e : model.transitions[s][a]) {
        q += model.discount * e.prob * values[e.next];
    }
    return q;
}

}  // namespace

ValueTable value_iteration(const AgentTaskModel& model, const RewardMap& reward,
                           double tolerance) {
    if (!(tolerance > 0.0)) throw InputError("tolerance must be positive");
    model.validate();
    check_reward(model, reward);

    // Stop once successive sweeps differ by at most (1-gamma)*tolerance;
    // that pins both the residual and the distance to the fixed point
    // below tolerance. Deterministic shortest-path models collapse to the
    // exact fixed point, so slack-0 filtering downstream sees clean ties.
    const double stop = tolerance * (1.0 - model.discount);
    std::vector<double> values(model.num_states, 0.0);
    std::vector<double> next(model.num_states, 0.0);
    const long max_sweeps = 20'000'000;
    for (long it = 0;; ++it) {
        if (it >= max_sweeps) {
            throw ModelError("value iteration failed to converge");
        }
        double diff = 0.0;
        for (int s = 0; s < model.num_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < model.num_actions; ++a) {
                best = std::max(best, q_backup(model, reward, values, s, a));
            }
            next[s] = best;
            diff = std::max(diff, std::abs(next[s] - values[s]));
        }
        values.swap(next);
        if (diff <= stop) break;
    }

    ValueTable table;
    table.values.assign(model.num_states, 0.0);
    table.q_values.assign(model.num_states,
                          std::vector<double>(model.num_actions, 0.0));
    for (int s = 0; s < model.num_states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < model.num_actions; ++a) {
            table.q_values[s][a] = q_backup(model, reward, values, s, a);
            best = std::max(best, table.q_values[s][a]);
        }
        table.values[s] = best;
    }
    return table;
}

Policy greedy_policy(const AgentTaskModel& model, const ValueTable& table) {
    if (static_cast<int>(table.q_values.size()) != model.num_states) {
        throw ModelError("value table does not match model");
    }
    Policy policy;
    policy.action.assign(model.num_states, -1);
    for (int s = 0; s < model.num_states; ++s) {
        const auto& q = table.q_values[s];
        if (q.empty()) throw ModelError("empty action set at state " + std::to_string(s));
        double best = *std::max_element(q.begin(), q.end());
        for (int a = 0; a < static_cast<int>(q.size()); ++a) {
            if (q[a] >= best - kTieTolerance) {
                policy.action[s] = a;
                break;
            }
        }
    }
    return policy;
}

ValueTable policy_evaluation(const AgentTaskModel& model, const Policy& policy,
                             const RewardMap& reward, double tolerance) {
    if (!(tolerance > 0.0)) throw InputError("tolerance must be positive");
    model.validate();
    check_reward(model, reward);
    if (static_cast<int>(policy.action.size()) != model.num_states) {
        throw InputError("policy not defined on all states");
    }

    const double stop = tolerance * (1.0 - model.discount);
    std::vector<double> values(model.num_states, 0.0);
    std::vector<double> next(model.num_states, 0.0);
    const long max_sweeps = 20'000'000;
    for (long it = 0;; ++it) {
        if (it >= max_sweeps) {
            throw ModelError("policy evaluation failed to converge");
        }
        double diff = 0.0;
        for (int s = 0; s < model.num_states; ++s) {
            next[s] = q_backup(model, reward, values, s, policy.at(s));
            diff = std::max(diff, std::abs(next[s] - values[s]));
        }
        values.swap(next);
        if (diff <= stop) break;
    }

    ValueTable table;
    table.values = values;
    table.q_values.assign(model.num_states,
                          std::vector<double>(model.num_actions, 0.0));
    for (int s = 0; s < model.num_states; ++s) {
        for (int a = 0; a < model.num_actions; ++a) {
            table.q_values[s][a] = q_backup(model, reward, values, s, a);
        }
        table.values[s] = table.q_values[s][policy.at(s)];
    }
    return table;
}

double bellman_residual(const AgentTaskModel& model, const RewardMap& reward,
                        const std::vector<double>& values) {
    double residual = 0.0;
    for (int s = 0; s < model.num_states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < model.num_actions; ++a) {
            best = std::max(best, q_backup(model, reward, values, s, a));
        }
        residual = std::max(residual, std::abs(best - values[s]));
    }
    return residual;
}

}  // namespace recon
