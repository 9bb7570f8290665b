#pragma once

#include <iosfwd>
#include <map>
#include <vector>

#include "recon/blame.hpp"
#include "recon/factored.hpp"

namespace recon {

/// One supervised training pair: the generalization feature values of an
/// agent's local state and the penalty share assigned there.
struct PenaltySample {
    enum class Source { observed, counterfactual };

    std::vector<int> features;
    double target = 0.0;
    Source source = Source::observed;
};

/// Allowed values per generalization feature slot. Samples are validated
/// against it before training.
struct PenaltyFeatureSpace {
    std::vector<std::vector<int>> domains;  // [slot] -> allowed values

    bool contains(const std::vector<int>& features) const;
};

/// Feature space an agent generalizes over: its dynamic value tuple. Slots
/// for uncontrolled features admit only the placeholder -1.
PenaltyFeatureSpace generalization_space(const FeatureSchema& schema, int agent);

/// Exact tabular mean regressor over discrete feature tuples. Unseen
/// tuples predict 0, matching the zero initialization of uncompiled local
/// penalties. Deterministic: predictions depend only on the multiset of
/// training samples, never on their order.
class PenaltyPredictor {
  public:
    double predict(const std::vector<int>& features) const;
    std::size_t table_size() const { return table_.size(); }

    /// Plain-text table, one `v0 v1 ... value` line per tuple, sorted.
    void serialize(std::ostream& out) const;

    friend PenaltyPredictor train(const std::vector<PenaltySample>& samples,
                                  const PenaltyFeatureSpace& space);

  private:
    // Targets are kept sorted so the mean folds in a fixed order and the
    // predictor is bit-identical under any permutation of the training set.
    std::map<std::vector<int>, std::vector<double>> table_;
};

/// Fits the tabular regressor: per feature tuple, the mean target of its
/// samples. Throws on an empty sample list or a sample outside the space.
PenaltyPredictor train(const std::vector<PenaltySample>& samples,
                       const PenaltyFeatureSpace& space);

/// Per-agent training data straight from the ledger: one sample per
/// recorded joint state, with the agent's dynamic tuple there as features
/// and its blame share as target.
std::vector<std::vector<PenaltySample>> observed_samples(const World& world,
                                                         const BlameLedger& ledger);

/// Appends counterfactual samples: for every recorded joint state and
/// agent, blame is re-evaluated at each valid agent-specific neighbor and
/// the (neighbor tuple, neighbor share) pair is added. The observed
/// samples pass through untouched, so the result is a per-agent superset.
std::vector<std::vector<PenaltySample>> augment_with_counterfactuals(
    const std::vector<std::vector<PenaltySample>>& samples, const World& world,
    const BlameLedger& ledger, BlameEvaluator& evaluator);

/// Penalty over the agent's full local state space: the prediction for
/// each state's dynamic tuple. Covers states no rollout ever visited.
std::vector<double> generalized_penalty(const PenaltyPredictor& predictor,
                                        const World& world, int agent);

}  // namespace recon
