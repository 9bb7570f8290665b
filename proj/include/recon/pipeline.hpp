#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "recon/domains.hpp"

namespace recon {

/// Policy-update methods. The string forms are the config-file and CLI
/// vocabulary, so they are part of the output format.
enum class Method {
    naive,
    difference_reward,
    considerate,
    recon,
    gen_recon_no_cf,
    gen_recon_cf,
};

std::string method_name(Method method);
Method method_from_name(const std::string& name);

/// One experiment description: where the instances come from, which update
/// method runs, and every numeric knob the pipeline exposes.
struct ExperimentConfig {
    Domain domain = Domain::salp;
    /// Instance files to load. When empty, `num_instances` instances are
    /// generated per seed from (domain, width, height, num_agents).
    std::vector<std::string> instance_files;
    int width = 8;
    int height = 8;
    int num_agents = 2;
    int num_instances = 1;
    Method method = Method::recon;
    double update_fraction = 0.5;
    double slack = 0.0;          // task-value slack for the replan step
    double nse_tolerance = 0.0;  // penalty level below which nobody replans
    double epsilon = 1e-4;       // blame rescaling constant
    int episodes = 30;
    int horizon = 0;  // 0 picks 4 * (width + height) per instance
    std::vector<std::uint64_t> seeds{0};
    double considerate_alpha1 = 0.5;  // selfish weight
    double considerate_alpha2 = 0.5;  // care weight
    GenOptions gen;

    /// Throws InputError when any field is out of range.
    void validate() const;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

/// One scored run of one method on one instance with one seed. Wall-clock
/// numbers are kept out of the results CSV so that repeated runs stay
/// byte-identical; write_timings_csv exposes them separately.
struct ResultRow {
    std::string instance;
    std::string method;
    int num_agents = 0;
    double update_fraction = 0.0;
    double avg_penalty = 0.0;  // per-episode accumulated joint penalty
    double std_penalty = 0.0;
    double avg_task_value = 0.0;  // mean per-agent discounted start value
    double wall_clock_seconds = 0.0;
    std::uint64_t seed = 0;
    std::vector<StageTiming> stages;
};

/// Runs the four-stage pipeline for every (instance, seed) pair of the
/// config: per-agent task-only value iteration, a monitor rollout of the
/// joint policy, method-specific penalty construction, and a replan of the
/// selected agents followed by rescoring. Naive skips the last two stages;
/// an unselected agent always keeps its naive policy. Rows come back
/// sorted by (instance, method, fraction, seed). Errors carry the name of
/// the stage that raised them.
std::vector<ResultRow> run_pipeline(const ExperimentConfig& config);

/// run_pipeline once per fraction; rows sorted by (instance, fraction).
std::vector<ResultRow> sweep_fraction(const ExperimentConfig& config,
                                      const std::vector<double>& fractions);

/// Regenerates instances per agent count and runs every listed method on
/// them. Requires generated instances (no files). Counts run sequentially
/// so the per-stage wall-clock comparisons stay clean.
std::vector<ResultRow> sweep_agents(const ExperimentConfig& config,
                                    const std::vector<int>& agent_counts,
                                    const std::vector<Method>& methods);

/// Canonical row order: (instance, method, fraction, seed).
void sort_rows(std::vector<ResultRow>& rows);

/// Deterministic CSV: instance,method,num_agents,update_fraction,
/// avg_penalty,std_penalty,avg_task_value,seed
void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out);

/// Per-stage wall-clock in long form: instance,method,num_agents,
/// update_fraction,seed,stage,seconds (plus a "total" row each).
void write_timings_csv(const std::vector<ResultRow>& rows, std::ostream& out);

}  // namespace recon
