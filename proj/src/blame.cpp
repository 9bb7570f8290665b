#include "recon/blame.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace recon {

int BlameLedger::find(const std::vector<int>& state_ids) const {
    auto it = index.find(state_ids);
    return it == index.end() ? -1 : it->second;
}

void BlameLedger::record(const std::vector<int>& state_ids, double penalty,
                         std::vector<double> raw_values,
                         std::vector<double> shares) {
    index.emplace(state_ids, static_cast<int>(states.size()));
    states.push_back(state_ids);
    state_penalty.push_back(penalty);
    raw.push_back(std::move(raw_values));
    share.push_back(std::move(shares));
}

std::vector<double> BlameLedger::total_blame(int num_agents) const {
    std::vector<double> totals(num_agents, 0.0);
    for (const auto& shares : share) {
        for (int i = 0; i < num_agents; ++i) totals[i] += shares[i];
    }
    return totals;
}

void BlameLedger::write_csv(std::ostream& out) const {
    out << "state,agent,b,B\n";
    for (std::size_t idx = 0; idx < states.size(); ++idx) {
        for (std::size_t i = 0; i < share[idx].size(); ++i) {
            out << idx << ',' << i << ',' << format_double(raw[idx][i]) << ','
                << format_double(share[idx][i]) << "\n";
        }
    }
}

BlameTerms blame(const FactoredJointState& state, int agent,
                 const PenaltyModel& penalty, const FeatureSchema& schema,
                 const CounterfactualSet& valid_cf, double max_penalty,
                 double epsilon) {
    const double current = joint_penalty(state, penalty, schema);
    // Empty set: the agent cannot change anything, so its improvement
    // margin is zero. Otherwise the margin may be negative when every
    // alternative is worse than what the agent actually did.
    double best_alternative = current;
    if (!valid_cf.neighbors.empty()) {
        best_alternative = std::numeric_limits<double>::infinity();
        for (const auto& neighbor : valid_cf.neighbors) {
            best_alternative = std::min(
                best_alternative, joint_penalty(neighbor, penalty, schema));
        }
    }
    BlameTerms terms;
    terms.margin = current - best_alternative;
    terms.raw = 0.5 * (max_penalty + epsilon + terms.margin);
    return terms;
}

double difference_reward_blame(const FactoredJointState& state,
                               const PenaltyModel& penalty,
                               const FeatureSchema& schema,
                               const CounterfactualSet& valid_cf) {
    if (valid_cf.neighbors.empty()) return 0.0;
    const double current = joint_penalty(state, penalty, schema);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& neighbor : valid_cf.neighbors) {
        worst = std::max(worst, joint_penalty(neighbor, penalty, schema));
    }
    return current - worst;
}

BlameEvaluator::BlameEvaluator(const World& world, double epsilon)
    : world_(world),
      epsilon_(epsilon),
      max_penalty_(recon::max_penalty(world.penalty, world.schema)) {}

double BlameEvaluator::penalty_at(const std::vector<int>& state_ids) const {
    return joint_penalty(world_.joint_state(state_ids), world_.penalty,
                         world_.schema);
}

const std::vector<double>& BlameEvaluator::shares(
    const std::vector<int>& state_ids) {
    auto it = cache_.find(state_ids);
    if (it != cache_.end()) return it->second;

    const int m = world_.num_agents();
    std::vector<double> shares(m, 0.0);
    const FactoredJointState state = world_.joint_state(state_ids);
    const double penalty = joint_penalty(state, world_.penalty, world_.schema);
    if (penalty > 0.0) {
        std::vector<double> raw(m, 0.0);
        for (int i = 0; i < m; ++i) {
            const auto cf = valid_filter(
                agent_cf_neighbors(state, i, world_.schema), world_);
            raw[i] = blame(state, i, world_.penalty, world_.schema, cf,
                           max_penalty_, epsilon_).raw;
        }
        const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
        for (int i = 0; i < m; ++i) shares[i] = raw[i] / total * penalty;
    }
    return cache_.emplace(state_ids, std::move(shares)).first->second;
}

BlameLedger assign_blame(const World& world,
                         const std::vector<std::vector<int>>& visited,
                         double epsilon) {
    BlameLedger ledger;
    ledger.epsilon = epsilon;
    ledger.max_penalty = max_penalty(world.penalty, world.schema);

    const int m = world.num_agents();
    for (const auto& state_ids : visited) {
        if (ledger.find(state_ids) >= 0) continue;
        const FactoredJointState state = world.joint_state(state_ids);
        const double penalty = joint_penalty(state, world.penalty, world.schema);
        if (!(penalty > 0.0)) continue;

        std::vector<double> raw(m, 0.0);
        for (int i = 0; i < m; ++i) {
            const auto cf =
                valid_filter(agent_cf_neighbors(state, i, world.schema), world);
            raw[i] = blame(state, i, world.penalty, world.schema, cf,
                           ledger.max_penalty, epsilon).raw;
        }
        const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
        std::vector<double> shares(m, 0.0);
        for (int i = 0; i < m; ++i) shares[i] = raw[i] / total * penalty;
        ledger.record(state_ids, penalty, std::move(raw), std::move(shares));
    }
    return ledger;
}

BlameLedger difference_reward_ledger(
    const World& world, const std::vector<std::vector<int>>& visited) {
    BlameLedger ledger;
    ledger.epsilon = 0.0;
    ledger.max_penalty = max_penalty(world.penalty, world.schema);

    const int m = world.num_agents();
    for (const auto& state_ids : visited) {
        if (ledger.find(state_ids) >= 0) continue;
        const FactoredJointState state = world.joint_state(state_ids);
        const double penalty = joint_penalty(state, world.penalty, world.schema);
        std::vector<double> credits(m, 0.0);
        for (int i = 0; i < m; ++i) {
            const auto cf =
                valid_filter(agent_cf_neighbors(state, i, world.schema), world);
            credits[i] = difference_reward_blame(state, world.penalty,
                                                 world.schema, cf);
        }
        ledger.record(state_ids, penalty, credits, credits);
    }
    return ledger;
}

std::vector<std::vector<double>> compile_local_penalties(
    const World& world, const BlameLedger& ledger) {
    const int m = world.num_agents();
    std::vector<std::vector<double>> penalty(m);
    std::vector<std::vector<char>> touched(m);
    for (int i = 0; i < m; ++i) {
        penalty[i].assign(world.models[i].num_states, 0.0);
        touched[i].assign(world.models[i].num_states, 0);
    }
    for (std::size_t idx = 0; idx < ledger.states.size(); ++idx) {
        for (int i = 0; i < m; ++i) {
            const int local = ledger.states[idx][i];
            const double b = ledger.share[idx][i];
            if (!touched[i][local]) {
                penalty[i][local] = b;
                touched[i][local] = 1;
            } else {
                penalty[i][local] = std::max(penalty[i][local], b);
            }
        }
    }
    return penalty;
}

ReconResult run_recon(const World& world, const std::vector<Policy>& joint_policy,
                      const ReconParams& params) {
    if (!(params.nse_tolerance >= 0.0)) {
        throw InputError("NSE tolerance must be nonnegative");
    }
    ReconResult result;
    result.report = rollout_joint(joint_policy, world, params.horizon,
                                  params.episodes, params.seed);
    result.ledger.epsilon = params.epsilon;
    result.ledger.max_penalty = max_penalty(world.penalty, world.schema);

    result.local_penalty.resize(world.num_agents());
    for (int i = 0; i < world.num_agents(); ++i) {
        result.local_penalty[i].assign(world.models[i].num_states, 0.0);
    }

    if (result.report.penalty_per_episode > params.nse_tolerance) {
        result.triggered = true;
        result.ledger = assign_blame(world, result.report.visited, params.epsilon);
        result.local_penalty = compile_local_penalties(world, result.ledger);
    }
    return result;
}

std::vector<int> select_agents_for_update(const BlameLedger& ledger,
                                          double fraction, int num_agents) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw InputError("update fraction must lie in [0,1]");
    }
    const auto totals = ledger.total_blame(num_agents);
    std::vector<int> order(num_agents);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (totals[a] != totals[b]) return totals[a] > totals[b];
        return a < b;
    });
    const int count = static_cast<int>(
        std::ceil(fraction * static_cast<double>(num_agents) - 1e-9));
    order.resize(std::max(0, std::min(count, num_agents)));
    return order;
}

double considerate_reward(double task_reward, double task_reward_max,
                          double others_share, double joint_penalty_max,
                          double selfish_coef, double care_coef) {
    if (!(task_reward_max > 0.0) || !(joint_penalty_max > 0.0)) {
        throw InputError("considerate reward needs positive normalizers");
    }
    return selfish_coef * task_reward / task_reward_max +
           care_coef * others_share / joint_penalty_max;
}

std::vector<RewardMap> considerate_reward_maps(const World& world,
                                               const BlameLedger& ledger,
                                               double selfish_coef,
                                               double care_coef) {
    const int m = world.num_agents();
    if (!(ledger.max_penalty > 0.0)) {
        throw InputError("considerate reward needs a positive maximum penalty");
    }

    std::vector<RewardMap> maps(m);
    for (int i = 0; i < m; ++i) {
        const AgentTaskModel& model = world.models[i];
        double task_max = -std::numeric_limits<double>::infinity();
        for (const auto& row : model.task_reward) {
            for (double r : row) task_max = std::max(task_max, r);
        }
        if (!(task_max > 0.0)) {
            throw InputError("considerate reward needs a positive task optimum");
        }

        // Others' penalty share per local state: maximum over the recorded
        // joint states that project onto this local state.
        std::vector<double> others(model.num_states, 0.0);
        std::vector<char> touched(model.num_states, 0);
        for (std::size_t idx = 0; idx < ledger.states.size(); ++idx) {
            const int local = ledger.states[idx][i];
            const double value = ledger.state_penalty[idx] - ledger.share[idx][i];
            if (!touched[local]) {
                others[local] = value;
                touched[local] = 1;
            } else {
                others[local] = std::max(others[local], value);
            }
        }

        maps[i].assign(model.num_states,
                       std::vector<double>(model.num_actions, 0.0));
        for (int s = 0; s < model.num_states; ++s) {
            for (int a = 0; a < model.num_actions; ++a) {
                maps[i][s][a] =
                    considerate_reward(model.task_reward[s][a], task_max,
                                       others[s], ledger.max_penalty,
                                       selfish_coef, care_coef);
            }
        }
    }
    return maps;
}

}  // namespace recon
