#pragma once

#include <optional>
#include <vector>

#include "recon/factored.hpp"

namespace recon {

/// Alternative joint states that differ from `origin` only in dynamic
/// global feature values. With agent_scope set, only values controlled by
/// that agent vary. Local and static features always agree with the origin,
/// and the origin itself is never a member.
struct CounterfactualSet {
    FactoredJointState origin;
    std::vector<FactoredJointState> neighbors;
    std::optional<int> agent_scope;
    bool validity_filtered = false;
};

/// All dynamic reassignments of `state`: the Cartesian product over every
/// controlled (agent, feature) slot, minus the origin. Exponential in the
/// number of slots; callers at scale use the agent-specific variant.
CounterfactualSet counterfactual_neighbors(const FactoredJointState& state,
                                           const FeatureSchema& schema);

/// Reassignments touching only the dynamic values controlled by `agent`;
/// always a subset of counterfactual_neighbors(state).
CounterfactualSet agent_cf_neighbors(const FactoredJointState& state, int agent,
                                     const FeatureSchema& schema);

/// Keeps a neighbor iff every agent whose dynamic values changed could
/// actually be in the changed configuration: its projected local state must
/// exist in its MDP and be reachable from its start state. Idempotent.
CounterfactualSet valid_filter(const CounterfactualSet& set, const World& world);

}  // namespace recon
