#include "recon/counterfactual.hpp"

namespace recon {

namespace {

// Controlled (agent, feature) slots, in agent-major order.
std::vector<std::pair<int, int>> controlled_slots(const FeatureSchema& schema,
                                                  std::optional<int> only_agent) {
    std::vector<std::pair<int, int>> slots;
    for (int i = 0; i < schema.num_agents(); ++i) {
        if (only_agent && *only_agent != i) continue;
        for (std::size_t d = 0; d < schema.dynamic_global.size(); ++d) {
            if (schema.controls(i, static_cast<int>(d))) {
                slots.emplace_back(i, static_cast<int>(d));
            }
        }
    }
    return slots;
}

void enumerate(const FactoredJointState& origin, const FeatureSchema& schema,
               const std::vector<std::pair<int, int>>& slots,
               std::vector<FactoredJointState>& out) {
    // Odometer over the slot value domains; skips the origin assignment.
    std::vector<int> cursor(slots.size(), 0);
    while (true) {
        FactoredJointState neighbor = origin;
        bool differs = false;
        for (std::size_t j = 0; j < slots.size(); ++j) {
            auto [agent, d] = slots[j];
            neighbor.dynamic[agent][d] = cursor[j];
            differs |= cursor[j] != origin.dynamic[agent][d];
        }
        if (differs) out.push_back(std::move(neighbor));

        std::size_t j = 0;
        for (; j < slots.size(); ++j) {
            const int domain_size =
                static_cast<int>(schema.dynamic_global[slots[j].second].values.size());
            if (++cursor[j] < domain_size) break;
            cursor[j] = 0;
        }
        if (j == slots.size()) break;
    }
}

}  // namespace

CounterfactualSet counterfactual_neighbors(const FactoredJointState& state,
                                           const FeatureSchema& schema) {
    schema.validate();
    CounterfactualSet set;
    set.origin = state;
    const auto slots = controlled_slots(schema, std::nullopt);
    if (!slots.empty()) enumerate(state, schema, slots, set.neighbors);
    return set;
}

CounterfactualSet agent_cf_neighbors(const FactoredJointState& state, int agent,
                                     const FeatureSchema& schema) {
    schema.validate();
    if (agent < 0 || agent >= schema.num_agents()) {
        throw InputError("agent index out of range");
    }
    CounterfactualSet set;
    set.origin = state;
    set.agent_scope = agent;
    const auto slots = controlled_slots(schema, agent);
    if (!slots.empty()) enumerate(state, schema, slots, set.neighbors);
    return set;
}

CounterfactualSet valid_filter(const CounterfactualSet& set, const World& world) {
    CounterfactualSet filtered;
    filtered.origin = set.origin;
    filtered.agent_scope = set.agent_scope;
    filtered.validity_filtered = true;
    for (const auto& neighbor : set.neighbors) {
        bool valid = true;
        for (int i = 0; i < world.num_agents() && valid; ++i) {
            if (neighbor.dynamic[i] == set.origin.dynamic[i]) continue;
            const auto projected = world.project(i, neighbor);
            valid = projected.has_value() && world.reachable(i)[*projected];
        }
        if (valid) filtered.neighbors.push_back(neighbor);
    }
    return filtered;
}

}  // namespace recon
