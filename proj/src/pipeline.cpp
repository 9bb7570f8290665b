#include "recon/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include "recon/blame.hpp"
#include "recon/generalize.hpp"
#include "recon/lexicographic.hpp"

namespace recon {

namespace {

// Tight enough that two independent policy evaluations of task-equivalent
// policies agree well within the 1e-6 the task-preservation check uses.
constexpr double kSolveTolerance = 1e-9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Job {
    ExperimentConfig config;  // fully resolved: method, fraction, agent count
    std::string file;         // empty when the instance is generated
    std::uint64_t seed = 0;   // base seed as reported in the row
    int index = 0;            // instance index under this seed
};

std::string generated_id(const ExperimentConfig& config, std::uint64_t seed,
                         int index) {
    std::ostringstream id;
    id << domain_name(config.domain) << '-' << config.width << 'x'
       << config.height << "-n" << config.num_agents << "-s" << seed << "-i"
       << index;
    return id.str();
}

std::string file_id(const std::string& path) {
    const std::string stem = std::filesystem::path(path).stem().string();
    return stem.empty() ? path : stem;
}

ResultRow solve_one(const Job& job) {
    const ExperimentConfig& config = job.config;
    ResultRow row;
    row.method = method_name(config.method);
    row.update_fraction = config.update_fraction;
    row.seed = job.seed;
    const std::uint64_t run_seed =
        mix_seed(job.seed, static_cast<std::uint64_t>(job.index));

    const auto t_total = Clock::now();
    std::string stage = "load";
    auto stage_start = Clock::now();
    auto close_stage = [&](const char* next) {
        row.stages.push_back({stage, seconds_since(stage_start)});
        stage = next;
        stage_start = Clock::now();
    };

    try {
        DomainInstance inst;
        if (job.file.empty()) {
            row.instance = generated_id(config, job.seed, job.index);
            inst = generate_instance(config.domain, config.width, config.height,
                                     config.num_agents, run_seed, config.gen);
        } else {
            row.instance = file_id(job.file);
            std::ifstream in(job.file);
            if (!in) throw InputError("cannot open instance file " + job.file);
            std::stringstream buffer;
            buffer << in.rdbuf();
            inst = parse_instance(buffer.str());
        }
        World world = build_models(inst);
        const int m = world.num_agents();
        row.num_agents = m;
        const int horizon = config.horizon > 0
                                ? config.horizon
                                : 4 * (inst.width + inst.height);
        close_stage("naive-vi");

        std::vector<Policy> naive;
        naive.reserve(m);
        for (const auto& model : world.models) {
            naive.push_back(greedy_policy(
                model,
                value_iteration(model, model.task_reward, kSolveTolerance)));
        }
        close_stage("monitor");

        const RolloutReport naive_report =
            rollout_joint(naive, world, horizon, config.episodes, run_seed);
        close_stage("penalty-construct");

        std::vector<Policy> final_policies = naive;
        RolloutReport final_report = naive_report;
        const bool triggered =
            config.method != Method::naive &&
            naive_report.penalty_per_episode > config.nse_tolerance;

        if (triggered) {
            std::vector<std::vector<double>> penalties;
            std::vector<RewardMap> considerate_maps;
            BlameLedger ledger;
            ReconParams params;
            params.nse_tolerance = config.nse_tolerance;
            params.epsilon = config.epsilon;
            params.episodes = config.episodes;
            params.horizon = horizon;
            params.seed = run_seed;

            switch (config.method) {
                case Method::naive:
                    break;
                case Method::recon: {
                    auto result = run_recon(world, naive, params);
                    penalties = std::move(result.local_penalty);
                    ledger = std::move(result.ledger);
                    break;
                }
                case Method::difference_reward: {
                    ledger = difference_reward_ledger(world, naive_report.visited);
                    penalties = compile_local_penalties(world, ledger);
                    break;
                }
                case Method::considerate: {
                    auto result = run_recon(world, naive, params);
                    ledger = std::move(result.ledger);
                    considerate_maps = considerate_reward_maps(
                        world, ledger, config.considerate_alpha1,
                        config.considerate_alpha2);
                    break;
                }
                case Method::gen_recon_no_cf:
                case Method::gen_recon_cf: {
                    auto result = run_recon(world, naive, params);
                    ledger = std::move(result.ledger);
                    auto samples = observed_samples(world, ledger);
                    if (config.method == Method::gen_recon_cf) {
                        BlameEvaluator evaluator(world, config.epsilon);
                        samples = augment_with_counterfactuals(samples, world,
                                                               ledger, evaluator);
                    }
                    penalties.resize(m);
                    for (int i = 0; i < m; ++i) {
                        const auto predictor =
                            train(samples[i], generalization_space(world.schema, i));
                        penalties[i] = generalized_penalty(predictor, world, i);
                    }
                    break;
                }
            }
            close_stage("replan");

            const auto selected =
                select_agents_for_update(ledger, config.update_fraction, m);
            for (int i : selected) {
                const AgentTaskModel& model = world.models[i];
                if (config.method == Method::considerate) {
                    final_policies[i] = greedy_policy(
                        model, value_iteration(model, considerate_maps[i],
                                               kSolveTolerance));
                } else {
                    LexicographicProblem problem;
                    problem.base = &model;
                    problem.rewards = {
                        model.task_reward,
                        state_penalty_reward(penalties[i], model.num_actions)};
                    problem.slack = {config.slack};
                    final_policies[i] =
                        lexicographic_value_iteration(problem, kSolveTolerance);
                }
            }
            final_report = rollout_joint(final_policies, world, horizon,
                                         config.episodes, run_seed);
        } else {
            close_stage("replan");
        }

        double task_sum = 0.0;
        for (int i = 0; i < m; ++i) {
            const AgentTaskModel& model = world.models[i];
            const auto table = policy_evaluation(model, final_policies[i],
                                                 model.task_reward,
                                                 kSolveTolerance);
            task_sum += table.values[model.start_state];
        }
        row.avg_task_value = task_sum / m;
        row.avg_penalty = final_report.penalty_per_episode;
        row.std_penalty = final_report.penalty_std();
        row.stages.push_back({stage, seconds_since(stage_start)});
        row.wall_clock_seconds = seconds_since(t_total);
    } catch (const std::exception& e) {
        const std::string where =
            row.instance.empty() ? std::string("<unresolved>") : row.instance;
        throw ModelError("pipeline stage '" + stage + "' failed (instance " +
                         where + "): " + e.what());
    }
    return row;
}

std::vector<ResultRow> run_jobs(const std::vector<Job>& jobs,
                                unsigned max_threads) {
    std::vector<ResultRow> rows(jobs.size());
    if (jobs.empty()) return rows;
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = std::min({static_cast<unsigned>(jobs.size()), hw,
                                       std::max(1u, max_threads)});
    if (workers <= 1) {
        for (std::size_t k = 0; k < jobs.size(); ++k) rows[k] = solve_one(jobs[k]);
        return rows;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        while (true) {
            const std::size_t k = next.fetch_add(1);
            if (k >= jobs.size()) return;
            try {
                rows[k] = solve_one(jobs[k]);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return rows;
}

std::vector<Job> expand_jobs(const ExperimentConfig& config) {
    std::vector<Job> jobs;
    for (std::uint64_t seed : config.seeds) {
        if (config.instance_files.empty()) {
            for (int k = 0; k < config.num_instances; ++k) {
                jobs.push_back({config, "", seed, k});
            }
        } else {
            int k = 0;
            for (const auto& file : config.instance_files) {
                jobs.push_back({config, file, seed, k++});
            }
        }
    }
    return jobs;
}

}  // namespace

std::string method_name(Method method) {
    switch (method) {
        case Method::naive: return "naive";
        case Method::difference_reward: return "difference-reward";
        case Method::considerate: return "considerate";
        case Method::recon: return "recon";
        case Method::gen_recon_no_cf: return "gen-recon-no-cf";
        case Method::gen_recon_cf: return "gen-recon-cf";
    }
    throw InputError("unknown method");
}

Method method_from_name(const std::string& name) {
    if (name == "naive") return Method::naive;
    if (name == "difference-reward") return Method::difference_reward;
    if (name == "considerate") return Method::considerate;
    if (name == "recon") return Method::recon;
    if (name == "gen-recon-no-cf") return Method::gen_recon_no_cf;
    if (name == "gen-recon-cf") return Method::gen_recon_cf;
    throw InputError("unknown method name: " + name);
}

void ExperimentConfig::validate() const {
    if (!(update_fraction >= 0.0 && update_fraction <= 1.0)) {
        throw InputError("update_fraction must lie in [0, 1]");
    }
    if (seeds.empty()) throw InputError("at least one seed is required");
    if (episodes < 1) throw InputError("episodes must be positive");
    if (horizon < 0) throw InputError("horizon must be nonnegative");
    if (slack < 0.0) throw InputError("slack must be nonnegative");
    if (nse_tolerance < 0.0) throw InputError("nse_tolerance must be nonnegative");
    if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
    if (instance_files.empty()) {
        if (width < 3 || height < 3) {
            throw InputError("generated grids must be at least 3x3");
        }
        if (num_agents < 1) throw InputError("need at least one agent");
        if (num_instances < 1) throw InputError("num_instances must be positive");
    }
    if (method == Method::considerate &&
        (!(considerate_alpha1 > 0.0) || !(considerate_alpha2 > 0.0))) {
        throw InputError("considerate weights must be positive");
    }
}

std::vector<ResultRow> run_pipeline(const ExperimentConfig& config) {
    config.validate();
    auto rows = run_jobs(expand_jobs(config),
                         std::thread::hardware_concurrency());
    sort_rows(rows);
    return rows;
}

std::vector<ResultRow> sweep_fraction(const ExperimentConfig& config,
                                      const std::vector<double>& fractions) {
    if (fractions.empty()) {
        throw InputError("fraction sweep needs at least one fraction");
    }
    std::vector<ResultRow> rows;
    for (double fraction : fractions) {
        ExperimentConfig step = config;
        step.update_fraction = fraction;
        auto part = run_pipeline(step);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    sort_rows(rows);
    return rows;
}

std::vector<ResultRow> sweep_agents(const ExperimentConfig& config,
                                    const std::vector<int>& agent_counts,
                                    const std::vector<Method>& methods) {
    if (!config.instance_files.empty()) {
        throw InputError("sweep-agents regenerates instances and cannot use files");
    }
    if (agent_counts.empty()) throw InputError("agent sweep needs at least one count");
    if (methods.empty()) throw InputError("agent sweep needs at least one method");
    std::vector<ResultRow> rows;
    for (int count : agent_counts) {
        for (Method method : methods) {
            ExperimentConfig step = config;
            step.num_agents = count;
            step.method = method;
            step.validate();
            // Sequential execution keeps the per-stage wall-clock numbers
            // comparable across agent counts.
            auto part = run_jobs(expand_jobs(step), 1);
            rows.insert(rows.end(), part.begin(), part.end());
        }
    }
    sort_rows(rows);
    return rows;
}

void sort_rows(std::vector<ResultRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ResultRow& a, const ResultRow& b) {
                         if (a.instance != b.instance) return a.instance < b.instance;
                         if (a.method != b.method) return a.method < b.method;
                         if (a.update_fraction != b.update_fraction) {
                             return a.update_fraction < b.update_fraction;
                         }
                         return a.seed < b.seed;
                     });
}

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
    out << "instance,method,num_agents,update_fraction,avg_penalty,std_penalty,"
           "avg_task_value,seed\n";
    for (const auto& row : rows) {
        out << row.instance << ',' << row.method << ',' << row.num_agents << ','
            << format_double(row.update_fraction) << ','
            << format_double(row.avg_penalty) << ','
            << format_double(row.std_penalty) << ','
            << format_double(row.avg_task_value) << ',' << row.seed << "\n";
    }
}

void write_timings_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
    out << "instance,method,num_agents,update_fraction,seed,stage,seconds\n";
    for (const auto& row : rows) {
        for (const auto& timing : row.stages) {
            out << row.instance << ',' << row.method << ',' << row.num_agents
                << ',' << format_double(row.update_fraction) << ',' << row.seed
                << ',' << timing.stage << ',' << format_double(timing.seconds)
                << "\n";
        }
        out << row.instance << ',' << row.method << ',' << row.num_agents << ','
            << format_double(row.update_fraction) << ',' << row.seed
            << ",total," << format_double(row.wall_clock_seconds) << "\n";
    }
}

}  // namespace recon
