#include "recon/generalize.hpp"

#include <algorithm>
#include <ostream>

#include "recon/counterfactual.hpp"

namespace recon {

bool PenaltyFeatureSpace::contains(const std::vector<int>& features) const {
    if (features.size() != domains.size()) return false;
    for (std::size_t j = 0; j < domains.size(); ++j) {
        if (std::find(domains[j].begin(), domains[j].end(), features[j]) ==
            domains[j].end()) {
            return false;
        }
    }
    return true;
}

PenaltyFeatureSpace generalization_space(const FeatureSchema& schema, int agent) {
    if (agent < 0 || agent >= schema.num_agents()) {
        throw InputError("agent index out of range");
    }
    PenaltyFeatureSpace space;
    space.domains.resize(schema.dynamic_global.size());
    for (std::size_t d = 0; d < schema.dynamic_global.size(); ++d) {
        if (!schema.controls(agent, static_cast<int>(d))) {
            space.domains[d] = {-1};
            continue;
        }
        const int k = static_cast<int>(schema.dynamic_global[d].values.size());
        space.domains[d].resize(k);
        for (int v = 0; v < k; ++v) space.domains[d][v] = v;
    }
    return space;
}

namespace {

double sorted_mean(const std::vector<double>& targets) {
    double sum = 0.0;
    for (double t : targets) sum += t;
    return sum / static_cast<double>(targets.size());
}

}  // namespace

double PenaltyPredictor::predict(const std::vector<int>& features) const {
    auto it = table_.find(features);
    if (it == table_.end()) return 0.0;
    return sorted_mean(it->second);
}

void PenaltyPredictor::serialize(std::ostream& out) const {
    for (const auto& [features, targets] : table_) {
        for (int v : features) out << v << ' ';
        out << format_double(sorted_mean(targets)) << "\n";
    }
}

PenaltyPredictor train(const std::vector<PenaltySample>& samples,
                       const PenaltyFeatureSpace& space) {
    if (samples.empty()) throw InputError("cannot train on an empty sample list");
    PenaltyPredictor predictor;
    for (const auto& sample : samples) {
        if (!space.contains(sample.features)) {
            throw InputError("sample features outside the declared space");
        }
        predictor.table_[sample.features].push_back(sample.target);
    }
    for (auto& [features, targets] : predictor.table_) {
        std::sort(targets.begin(), targets.end());
    }
    return predictor;
}

std::vector<std::vector<PenaltySample>> observed_samples(const World& world,
                                                         const BlameLedger& ledger) {
    const int m = world.num_agents();
    std::vector<std::vector<PenaltySample>> samples(m);
    for (std::size_t idx = 0; idx < ledger.states.size(); ++idx) {
        for (int i = 0; i < m; ++i) {
            const int local = ledger.states[idx][i];
            samples[i].push_back({world.factoring[i].dynamic_values[local],
                                  ledger.share[idx][i],
                                  PenaltySample::Source::observed});
        }
    }
    return samples;
}

std::vector<std::vector<PenaltySample>> augment_with_counterfactuals(
    const std::vector<std::vector<PenaltySample>>& samples, const World& world,
    const BlameLedger& ledger, BlameEvaluator& evaluator) {
    const int m = world.num_agents();
    std::vector<std::vector<PenaltySample>> augmented = samples;
    augmented.resize(m);
    for (const auto& state_ids : ledger.states) {
        const FactoredJointState origin = world.joint_state(state_ids);
        for (int i = 0; i < m; ++i) {
            const auto cf =
                valid_filter(agent_cf_neighbors(origin, i, world.schema), world);
            for (const auto& neighbor : cf.neighbors) {
                // Validity guarantees the changed projection exists.
                std::vector<int> neighbor_ids = state_ids;
                neighbor_ids[i] = *world.project(i, neighbor);
                const double share = evaluator.shares(neighbor_ids)[i];
                augmented[i].push_back({neighbor.dynamic[i], share,
                                        PenaltySample::Source::counterfactual});
            }
        }
    }
    return augmented;
}

std::vector<double> generalized_penalty(const PenaltyPredictor& predictor,
                                        const World& world, int agent) {
    if (agent < 0 || agent >= world.num_agents()) {
        throw InputError("agent index out of range");
    }
    const auto& factoring = world.factoring[agent];
    std::vector<double> penalty(factoring.dynamic_values.size(), 0.0);
    for (std::size_t s = 0; s < factoring.dynamic_values.size(); ++s) {
        penalty[s] = predictor.predict(factoring.dynamic_values[s]);
    }
    return penalty;
}

}  // namespace recon
