#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "recon/mdp.hpp"

namespace recon {

/// Named finite feature domain. Values are referenced by index; names only
/// matter for serialization.
struct Feature {
    std::string name;
    std::vector<std::string> values;
};

/// A dynamic global feature additionally names the agents whose actions can
/// change its value. Each controlling agent carries its own value.
struct DynamicFeature {
    std::string name;
    std::vector<std::string> values;
    std::vector<int> controllers;
};

/// Feature taxonomy of a multi-agent world: per-agent local features,
/// shared immutable static globals, and dynamic globals that drive the
/// side-effect penalty.
struct FeatureSchema {
    std::vector<std::vector<Feature>> local;  // [agent][feature]
    std::vector<Feature> static_global;
    std::vector<DynamicFeature> dynamic_global;

    int num_agents() const { return static_cast<int>(local.size()); }
    bool controls(int agent, int dynamic_feature) const;
    void validate() const;
};

/// Joint state in factored form. dynamic[agent][d] is -1 when the agent does
/// not control feature d; every other entry indexes that feature's domain.
struct FactoredJointState {
    std::vector<std::vector<int>> local;    // [agent][local feature] -> value
    std::vector<int> static_values;         // [static feature] -> value
    std::vector<std::vector<int>> dynamic;  // [agent][dynamic feature] -> value

    bool operator==(const FactoredJointState& other) const = default;
};

/// Joint side-effect penalty: sum over dynamic features d and values k of
/// beta[d][k] * ln(alpha[d] * N_k + 1), where N_k counts the agents whose
/// value of d equals k. Logarithmic so the marginal penalty of one more
/// agent shrinks as more agents share the value.
struct PenaltyModel {
    std::vector<std::vector<double>> beta;  // [dynamic feature][value] >= 0
    std::vector<double> alpha;              // [dynamic feature] > 0

    void validate(const FeatureSchema& schema) const;
};

/// Evaluates the penalty formula on one joint state. Depends only on the
/// dynamic assignment; local and static features never enter.
double joint_penalty(const FactoredJointState& state, const PenaltyModel& model,
                     const FeatureSchema& schema);

/// Largest penalty any dynamic assignment can produce; used to rescale blame.
/// The formula separates across features, and each per-feature term is
/// concave in the value counts, so a greedy marginal allocation of the
/// controlling agents attains the per-feature maximum.
double max_penalty(const PenaltyModel& model, const FeatureSchema& schema);

struct World;

/// Penalty the agent would generate on its own in this local state: each of
/// its controlled dynamic values counted once, with no other contributors.
double solo_penalty(const World& world, int agent, int state);

/// Maps between an agent's MDP state indices and its factored assignment
/// (local feature values plus its own dynamic values). `index` inverts the
/// mapping for counterfactual projections; tuples absent from it do not
/// exist as states.
struct AgentFactoring {
    std::vector<std::vector<int>> local_values;    // [state][local feature]
    std::vector<std::vector<int>> dynamic_values;  // [state][dynamic feature]
    std::unordered_map<std::vector<int>, int, IntVecHash> index;

    std::vector<int> key(const std::vector<int>& local,
                         const std::vector<int>& dynamic) const;
    void build_index();
};

/// A fully assembled multi-agent world: one task MDP per agent plus the
/// shared schema, penalty model and the per-agent state factorings.
/// Immutable after construction apart from lazily memoized reachability.
struct World {
    FeatureSchema schema;
    PenaltyModel penalty;
    std::vector<AgentTaskModel> models;
    std::vector<AgentFactoring> factoring;
    std::vector<int> static_assignment;

    int num_agents() const { return static_cast<int>(models.size()); }

    /// Joint state induced by per-agent local MDP states.
    FactoredJointState joint_state(const std::vector<int>& local_ids) const;

    /// State index of agent's projection of `state`, or nullopt when the
    /// (local, dynamic) tuple does not exist in the agent's state space.
    std::optional<int> project(int agent, const FactoredJointState& state) const;

    /// States reachable from the agent's start via positive-probability
    /// transitions. Computed once per agent and memoized.
    const std::vector<char>& reachable(int agent) const;

  private:
    mutable std::vector<std::vector<char>> reachable_;
};

/// Execution trace statistics for a joint policy.
struct RolloutReport {
    struct StepRow {
        int episode;
        int step;
        double penalty;
        std::vector<int> states;  // per-agent local state ids
    };

    std::vector<StepRow> steps;
    std::vector<std::vector<int>> visited;  // unique joint states, first-visit order
    std::vector<long long> visit_counts;
    std::vector<double> episode_penalty;  // accumulated penalty per episode
    std::vector<double> task_return;      // per agent, mean discounted return
    double total_penalty = 0.0;
    double penalty_per_episode = 0.0;
    double penalty_per_step = 0.0;
    int episodes = 0;
    int horizon = 0;

    /// Mean and standard deviation of the per-episode accumulated penalty.
    double penalty_std() const;
};

/// Simulates all agents synchronously and independently for `episodes`
/// episodes of at most `horizon` steps. The joint penalty is charged for
/// each joint state occupied before acting; an episode ends early once all
/// agents sit in terminal states. Bit-reproducible for a given seed.
RolloutReport rollout_joint(const std::vector<Policy>& policies,
                            const World& world, int horizon, int episodes,
                            std::uint64_t seed);

/// CSV dump of the step trace: episode,step,penalty,s0,...,s{m-1}.
void write_rollout_csv(const RolloutReport& report, std::ostream& out);

}  // namespace recon
