#include "recon/factored.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <random>
#include <set>
#include <unordered_set>

namespace recon {

bool FeatureSchema::controls(int agent, int dynamic_feature) const {
    const auto& c = dynamic_global[dynamic_feature].controllers;
    return std::find(c.begin(), c.end(), agent) != c.end();
}

void FeatureSchema::validate() const {
    std::set<std::string> names;
    auto claim = [&](const std::string& n) {
        if (!names.insert(n).second) {
            throw ModelError("duplicate feature name: " + n);
        }
    };
    for (const auto& f : static_global) {
        claim(f.name);
        if (f.values.empty()) throw ModelError("empty feature domain: " + f.name);
    }
    for (const auto& f : dynamic_global) {
        claim(f.name);
        if (f.values.empty()) throw ModelError("empty feature domain: " + f.name);
        if (f.controllers.empty()) {
            throw ModelError("dynamic feature " + f.name + " has no controlling agent");
        }
        for (int a : f.controllers) {
            if (a < 0 || a >= num_agents()) {
                throw ModelError("controller out of range for feature " + f.name);
            }
        }
    }
    for (const auto& agent_features : local) {
        // Local feature names may repeat across agents (each agent has its
        // own x,y) but not within one agent, and never against global names.
        std::set<std::string> agent_names;
        for (const auto& f : agent_features) {
            if (f.values.empty()) throw ModelError("empty feature domain: " + f.name);
            if (!agent_names.insert(f.name).second || names.count(f.name)) {
                throw ModelError("duplicate feature name: " + f.name);
            }
        }
    }
}

void PenaltyModel::validate(const FeatureSchema& schema) const {
    if (beta.size() != schema.dynamic_global.size() ||
        alpha.size() != schema.dynamic_global.size()) {
        throw ModelError("penalty model not aligned with dynamic features");
    }
    for (std::size_t d = 0; d < beta.size(); ++d) {
        if (!(alpha[d] > 0.0)) {
            throw ModelError("alpha must be positive for feature " +
                             schema.dynamic_global[d].name);
        }
        if (beta[d].size() != schema.dynamic_global[d].values.size()) {
            throw ModelError("beta table does not cover the domain of " +
                             schema.dynamic_global[d].name);
        }
        for (double b : beta[d]) {
            if (!(b >= 0.0)) throw ModelError("beta must be nonnegative");
        }
    }
}

namespace {

void check_state(const FactoredJointState& state, const FeatureSchema& schema) {
    const int m = schema.num_agents();
    if (static_cast<int>(state.dynamic.size()) != m) {
        throw ModelError("joint state does not cover all agents");
    }
    for (int i = 0; i < m; ++i) {
        if (state.dynamic[i].size() != schema.dynamic_global.size()) {
            throw ModelError("dynamic assignment has wrong arity for agent " +
                             std::to_string(i));
        }
        for (std::size_t d = 0; d < schema.dynamic_global.size(); ++d) {
            const int v = state.dynamic[i][d];
            const bool controlled = schema.controls(i, static_cast<int>(d));
            if (!controlled) {
                if (v != -1) {
                    throw ModelError("agent " + std::to_string(i) +
                                     " carries a value for uncontrolled feature " +
                                     schema.dynamic_global[d].name);
                }
                continue;
            }
            if (v < 0 ||
                v >= static_cast<int>(schema.dynamic_global[d].values.size())) {
                throw ModelError("value outside declared domain of " +
                                 schema.dynamic_global[d].name);
            }
        }
    }
}

}  // namespace

double joint_penalty(const FactoredJointState& state, const PenaltyModel& model,
                     const FeatureSchema& schema) {
    model.validate(schema);
    check_state(state, schema);
    double penalty = 0.0;
    for (std::size_t d = 0; d < schema.dynamic_global.size(); ++d) {
        const auto& dom = schema.dynamic_global[d].values;
        std::vector<int> counts(dom.size(), 0);
        for (int agent : schema.dynamic_global[d].controllers) {
            ++counts[state.dynamic[agent][d]];
        }
        for (std::size_t k = 0; k < dom.size(); ++k) {
            if (counts[k] == 0) continue;
            penalty += model.beta[d][k] * std::log(model.alpha[d] * counts[k] + 1.0);
        }
    }
    return penalty;
}

double max_penalty(const PenaltyModel& model, const FeatureSchema& schema) {
    model.validate(schema);
    double total = 0.0;
    for (std::size_t d = 0; d < schema.dynamic_global.size(); ++d) {
        const auto& beta = model.beta[d];
        const double alpha = model.alpha[d];
        const int agents = static_cast<int>(schema.dynamic_global[d].controllers.size());
        // Greedy marginal allocation: each term is concave increasing in its
        // count, so repeatedly placing the next agent on the value with the
        // largest marginal gain is optimal.
        std::vector<int> counts(beta.size(), 0);
        double best_for_feature = 0.0;
        for (int placed = 0; placed < agents; ++placed) {
            double best_gain = 0.0;
            int best_value = -1;
            for (std::size_t k = 0; k < beta.size(); ++k) {
                const double gain =
                    beta[k] * (std::log(alpha * (counts[k] + 1) + 1.0) -
                               std::log(alpha * counts[k] + 1.0));
                if (gain > best_gain) {
                    best_gain = gain;
                    best_value = static_cast<int>(k);
                }
            }
            if (best_value < 0) break;  // all remaining gains are zero
            ++counts[best_value];
            best_for_feature += best_gain;
        }
        total += best_for_feature;
    }
    return total;
}

double solo_penalty(const World& world, int agent, int state) {
    if (agent < 0 || agent >= world.num_agents()) {
        throw InputError("agent index out of range");
    }
    const AgentTaskModel& model = world.models[agent];
    if (state < 0 || state >= model.num_states) {
        throw InputError("local state id out of range");
    }
    const auto& values = world.factoring[agent].dynamic_values[state];
    double penalty = 0.0;
    for (std::size_t d = 0; d < world.schema.dynamic_global.size(); ++d) {
        if (!world.schema.controls(agent, static_cast<int>(d))) continue;
        penalty += world.penalty.beta[d][values[d]] *
                   std::log(world.penalty.alpha[d] + 1.0);
    }
    return penalty;
}

std::vector<int> AgentFactoring::key(const std::vector<int>& local,
                                     const std::vector<int>& dynamic) const {
    std::vector<int> k;
    k.reserve(local.size() + dynamic.size());
    k.insert(k.end(), local.begin(), local.end());
    k.insert(k.end(), dynamic.begin(), dynamic.end());
    return k;
}

void AgentFactoring::build_index() {
    index.clear();
    index.reserve(local_values.size());
    for (std::size_t s = 0; s < local_values.size(); ++s) {
        index.emplace(key(local_values[s], dynamic_values[s]),
                      static_cast<int>(s));
    }
}

FactoredJointState World::joint_state(const std::vector<int>& local_ids) const {
    if (static_cast<int>(local_ids.size()) != num_agents()) {
        throw InputError("need one local state per agent");
    }
    FactoredJointState state;
    state.static_values = static_assignment;
    state.local.resize(num_agents());
    state.dynamic.resize(num_agents());
    for (int i = 0; i < num_agents(); ++i) {
        const int s = local_ids[i];
        if (s < 0 || s >= models[i].num_states) {
            throw InputError("local state id out of range for agent " +
                             std::to_string(i));
        }
        state.local[i] = factoring[i].local_values[s];
        state.dynamic[i] = factoring[i].dynamic_values[s];
    }
    return state;
}

std::optional<int> World::project(int agent, const FactoredJointState& state) const {
    const auto& f = factoring[agent];
    auto it = f.index.find(f.key(state.local[agent], state.dynamic[agent]));
    if (it == f.index.end()) return std::nullopt;
    return it->second;
}

const std::vector<char>& World::reachable(int agent) const {
    if (reachable_.empty()) reachable_.resize(models.size());
    auto& flags = reachable_[agent];
    if (!flags.empty()) return flags;

    const AgentTaskModel& model = models[agent];
    flags.assign(model.num_states, 0);
    std::deque<int> queue{model.start_state};
    flags[model.start_state] = 1;
    while (!queue.empty()) {
        const int s = queue.front();
        queue.pop_front();
        for (int a = 0; a < model.num_actions; ++a) {
            for (const auto& e : model.transitions[s][a]) {
                if (e.prob > 0.0 && !flags[e.next]) {
                    flags[e.next] = 1;
                    queue.push_back(e.next);
                }
            }
        }
    }
    return flags;
}

double RolloutReport::penalty_std() const {
    if (episode_penalty.empty()) return 0.0;
    double mean = 0.0;
    for (double p : episode_penalty) mean += p;
    mean /= static_cast<double>(episode_penalty.size());
    double var = 0.0;
    for (double p : episode_penalty) var += (p - mean) * (p - mean);
    var /= static_cast<double>(episode_penalty.size());
    return std::sqrt(var);
}

RolloutReport rollout_joint(const std::vector<Policy>& policies,
                            const World& world, int horizon, int episodes,
                            std::uint64_t seed) {
    const int m = world.num_agents();
    if (static_cast<int>(policies.size()) != m) {
        throw InputError("need one policy per agent");
    }
    if (horizon < 1) throw InputError("horizon must be at least 1");
    if (episodes < 1) throw InputError("episodes must be at least 1");

    RolloutReport report;
    report.episodes = episodes;
    report.horizon = horizon;
    report.task_return.assign(m, 0.0);
    report.episode_penalty.assign(episodes, 0.0);

    std::unordered_map<std::vector<int>, int, IntVecHash> visit_index;
    long long total_steps = 0;

    for (int ep = 0; ep < episodes; ++ep) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(ep)));
        std::vector<int> state(m);
        for (int i = 0; i < m; ++i) state[i] = world.models[i].start_state;
        std::vector<double> gamma_pow(m, 1.0);

        for (int step = 0; step < horizon; ++step) {
            bool all_done = true;
            for (int i = 0; i < m; ++i) {
                const auto& term = world.models[i].terminal;
                if (term.empty() || !term[state[i]]) {
                    all_done = false;
                    break;
                }
            }
            if (all_done) break;

            const double penalty =
                joint_penalty(world.joint_state(state), world.penalty, world.schema);
            report.episode_penalty[ep] += penalty;
            report.steps.push_back({ep, step, penalty, state});
            ++total_steps;

            auto [it, inserted] =
                visit_index.try_emplace(state, static_cast<int>(report.visited.size()));
            if (inserted) {
                report.visited.push_back(state);
                report.visit_counts.push_back(0);
            }
            ++report.visit_counts[it->second];

            // All agents act on the same tick; transitions are independent,
            // so each samples from its own row.
            for (int i = 0; i < m; ++i) {
                const AgentTaskModel& model = world.models[i];
                const int a = policies[i].at(state[i]);
                if (a >= model.num_actions) {
                    throw ModelError("policy action out of range for agent " +
                                     std::to_string(i));
                }
                report.task_return[i] +=
                    gamma_pow[i] * model.task_reward[state[i]][a];
                gamma_pow[i] *= model.discount;

                const auto& row = model.transitions[state[i]][a];
                if (row.size() == 1) {
                    state[i] = row[0].next;
                } else {
                    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                    double acc = 0.0;
                    int next = row.back().next;
                    for (const auto& e : row) {
                        acc += e.prob;
                        if (u < acc) {
                            next = e.next;
                            break;
                        }
                    }
                    state[i] = next;
                }
            }
        }
        report.total_penalty += report.episode_penalty[ep];
    }

    for (int i = 0; i < m; ++i) {
        report.task_return[i] /= static_cast<double>(episodes);
    }
    report.penalty_per_episode = report.total_penalty / static_cast<double>(episodes);
    report.penalty_per_step =
        total_steps > 0 ? report.total_penalty / static_cast<double>(total_steps) : 0.0;
    return report;
}

void write_rollout_csv(const RolloutReport& report, std::ostream& out) {
    int m = report.steps.empty() ? 0 : static_cast<int>(report.steps[0].states.size());
    out << "episode,step,penalty";
    for (int i = 0; i < m; ++i) out << ",s" << i;
    out << "\n";
    for (const auto& row : report.steps) {
        out << row.episode << ',' << row.step << ',' << format_double(row.penalty);
        for (int s : row.states) out << ',' << s;
        out << "\n";
    }
}

}  // namespace recon
