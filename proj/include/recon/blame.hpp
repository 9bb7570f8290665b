#pragma once

#include <iosfwd>
#include <unordered_map>
#include <vector>

#include "recon/counterfactual.hpp"
#include "recon/factored.hpp"

namespace recon {

/// Output of the per-agent blame formula at one joint state.
struct BlameTerms {
    double raw;     // b_i(s)
    double margin;  // R_N(s) - min penalty over the agent's valid neighbors
};

/// Blame accounting for a set of recorded joint states. `share[idx][i]` is
/// agent i's assigned slice B_i of the joint penalty at state idx; shares
/// at a state sum to that state's penalty. `raw` holds the intermediate
/// b values before normalization.
struct BlameLedger {
    double epsilon = 1e-4;
    double max_penalty = 0.0;  // largest penalty any dynamic assignment admits
    std::vector<std::vector<int>> states;  // per-agent local state ids
    std::vector<double> state_penalty;
    std::vector<std::vector<double>> raw;    // [state][agent]
    std::vector<std::vector<double>> share;  // [state][agent]
    std::unordered_map<std::vector<int>, int, IntVecHash> index;

    int find(const std::vector<int>& state_ids) const;
    void record(const std::vector<int>& state_ids, double penalty,
                std::vector<double> raw_values, std::vector<double> shares);

    /// Sum of an agent's shares over all recorded states.
    std::vector<double> total_blame(int num_agents) const;

    /// state,agent,b,B rows keyed by recorded index.
    void write_csv(std::ostream& out) const;
};

/// Raw blame for one agent at one joint state:
///   b_i(s) = 1/2 * (R_N* + epsilon + (R_N(s) - min over valid neighbors)).
/// An empty neighbor set means the agent controls nothing it could change,
/// so its improvement margin is zero and b sits at the 1/2*(R_N*+eps) floor.
BlameTerms blame(const FactoredJointState& state, int agent,
                 const PenaltyModel& penalty, const FeatureSchema& schema,
                 const CounterfactualSet& valid_cf, double max_penalty,
                 double epsilon);

/// Difference-reward credit restricted to dynamic features:
///   B_i(s) = R_N(s) - max over valid neighbors of R_N(s').
/// May be negative; callers pass the value through unclipped. Empty set -> 0.
double difference_reward_blame(const FactoredJointState& state,
                               const PenaltyModel& penalty,
                               const FeatureSchema& schema,
                               const CounterfactualSet& valid_cf);

/// Computes and caches blame shares at arbitrary joint states, keyed by the
/// per-agent local state ids. Used both for visited-state ledgers and for
/// scoring counterfactual neighbors during training-data augmentation.
class BlameEvaluator {
  public:
    BlameEvaluator(const World& world, double epsilon);

    double max_penalty() const { return max_penalty_; }
    double penalty_at(const std::vector<int>& state_ids) const;

    /// Blame shares for every agent; zero vector when the state carries no
    /// penalty.
    const std::vector<double>& shares(const std::vector<int>& state_ids);

  private:
    const World& world_;
    double epsilon_;
    double max_penalty_;
    std::unordered_map<std::vector<int>, std::vector<double>, IntVecHash> cache_;
};

/// Blame ledger over the given joint states (first-visit order preserved).
/// States with zero penalty are skipped; their shares are identically zero.
BlameLedger assign_blame(const World& world,
                         const std::vector<std::vector<int>>& visited,
                         double epsilon);

/// Ledger for the difference-reward baseline. Every visited state is
/// recorded, because the difference credit is nonzero (often negative) even
/// where the joint penalty vanishes.
BlameLedger difference_reward_ledger(const World& world,
                                     const std::vector<std::vector<int>>& visited);

/// Per-agent local penalty tables compiled from the ledger: each recorded
/// joint state writes its share onto the agent's projected local state,
/// aggregated by maximum; local states never recorded stay at 0.
std::vector<std::vector<double>> compile_local_penalties(const World& world,
                                                         const BlameLedger& ledger);

/// Rollout parameters for the penalty decomposition run.
struct ReconParams {
    double nse_tolerance = 0.0;  // joint-penalty threshold below which nothing updates
    double epsilon = 1e-4;
    int episodes = 100;
    int horizon = 1;
    std::uint64_t seed = 0;
};

struct ReconResult {
    RolloutReport report;
    BlameLedger ledger;
    std::vector<std::vector<double>> local_penalty;  // [agent][local state]
    bool triggered = false;
};

/// Full decomposition pass: score the joint policy by rollout, and if the
/// per-episode penalty estimate exceeds the tolerance, assign blame over
/// the visited joint states and compile per-agent penalty functions.
/// Otherwise every local penalty stays at its zero initialization.
ReconResult run_recon(const World& world, const std::vector<Policy>& joint_policy,
                      const ReconParams& params);

/// Top ceil(fraction * m) agents by total blame, in rank order (descending
/// blame, ties broken by lowest agent index). Prefixes nest as the fraction
/// grows.
std::vector<int> select_agents_for_update(const BlameLedger& ledger,
                                          double fraction, int num_agents);

/// Considerate-reward scalar: a selfish share of the normalized task reward
/// plus a care-weighted share of the penalty attributed to the other agents.
double considerate_reward(double task_reward, double task_reward_max,
                          double others_share, double joint_penalty_max,
                          double selfish_coef, double care_coef);

/// Per-agent single-objective reward maps for the considerate baseline.
/// The others' penalty share (R_N(s) - B_i(s)) attaches to the agent's
/// projected local states by maximum, mirroring penalty compilation.
std::vector<RewardMap> considerate_reward_maps(const World& world,
                                               const BlameLedger& ledger,
                                               double selfish_coef,
                                               double care_coef);

}  // namespace recon
