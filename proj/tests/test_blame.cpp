#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "recon/blame.hpp"
#include "recon/domains.hpp"

namespace {

using namespace recon;

AgentTaskModel toggle_model(int num_states) {
    // Action 0 steps forward (saturating), action 1 steps back.
    AgentTaskModel model;
    model.num_states = num_states;
    model.num_actions = 2;
    model.discount = 0.95;
    model.transitions.assign(num_states, std::vector<TransitionRow>(2));
    model.task_reward.assign(num_states, std::vector<double>(2, 0.0));
    model.terminal.assign(num_states, 0);
    for (int s = 0; s < num_states; ++s) {
        model.transitions[s][0] = {{std::min(s + 1, num_states - 1), 1.0}};
        model.transitions[s][1] = {{std::max(s - 1, 0), 1.0}};
    }
    model.start_state = 0;
    model.validate();
    return model;
}

// Two agents; only agent 0 controls the binary feature, and switching it on
// costs exactly 10. Agent 1 wanders between two plain local states.
World duo_world() {
    World world;
    world.schema.local = {{Feature{"x", {"0"}}}, {Feature{"y", {"0", "1"}}}};
    world.schema.dynamic_global = {DynamicFeature{"f", {"off", "on"}, {0}}};
    world.penalty.beta = {{0.0, 10.0 / std::log(2.0)}};
    world.penalty.alpha = {1.0};

    world.models = {toggle_model(2), toggle_model(2)};

    AgentFactoring f0;
    f0.local_values = {{0}, {0}};
    f0.dynamic_values = {{0}, {1}};
    f0.build_index();
    AgentFactoring f1;
    f1.local_values = {{0}, {1}};
    f1.dynamic_values = {{-1}, {-1}};
    f1.build_index();
    world.factoring = {f0, f1};

    world.schema.validate();
    world.penalty.validate(world.schema);
    return world;
}

// Three agents sharing one binary feature; everyone switched on costs 2*ln(4).
World trio_world() {
    World world;
    world.schema.local.resize(3);
    for (int i = 0; i < 3; ++i) world.schema.local[i] = {Feature{"x", {"0"}}};
    world.schema.dynamic_global = {DynamicFeature{"f", {"off", "on"}, {0, 1, 2}}};
    world.penalty.beta = {{0.0, 2.0}};
    world.penalty.alpha = {1.0};
    for (int i = 0; i < 3; ++i) {
        world.models.push_back(toggle_model(2));
        AgentFactoring f;
        f.local_values = {{0}, {0}};
        f.dynamic_values = {{0}, {1}};
        f.build_index();
        world.factoring.push_back(std::move(f));
    }
    world.schema.validate();
    world.penalty.validate(world.schema);
    return world;
}

FeatureSchema pair_schema() {
    FeatureSchema schema;
    schema.local = {{Feature{"x", {"0"}}}, {Feature{"y", {"0"}}}};
    schema.dynamic_global = {DynamicFeature{"f", {"off", "on"}, {0, 1}}};
    schema.validate();
    return schema;
}

FactoredJointState pair_state(int v0, int v1) {
    FactoredJointState state;
    state.local = {{0}, {0}};
    state.dynamic = {{v0}, {v1}};
    return state;
}

CounterfactualSet fabricated_cf(const FactoredJointState& origin, int agent,
                                std::vector<FactoredJointState> neighbors) {
    CounterfactualSet set;
    set.origin = origin;
    set.neighbors = std::move(neighbors);
    set.agent_scope = agent;
    set.validity_filtered = true;
    return set;
}

std::vector<Policy> naive_policies(const World& world) {
    std::vector<Policy> policies;
    for (const auto& model : world.models) {
        policies.push_back(
            greedy_policy(model, value_iteration(model, model.task_reward, 1e-9)));
    }
    return policies;
}

}  // namespace

TEST_SUITE("blame") {

TEST_CASE("raw blame and shares match the worked two-agent split") {
    const auto world = duo_world();
    CHECK(max_penalty(world.penalty, world.schema) ==
          doctest::Approx(10.0).epsilon(1e-12));

    // Agent 0 switched on, agent 1 in its first local state.
    const auto ledger = assign_blame(world, {{1, 0}}, 1e-4);
    REQUIRE(ledger.states.size() == 1);
    CHECK(ledger.max_penalty == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(ledger.state_penalty[0] == doctest::Approx(10.0).epsilon(1e-12));

    // Agent 0 can switch off for a zero-penalty alternative; agent 1
    // controls nothing, so it sits at the half-floor.
    CHECK(ledger.raw[0][0] == doctest::Approx(10.00005).epsilon(1e-9));
    CHECK(ledger.raw[0][1] == doctest::Approx(5.00005).epsilon(1e-9));

    CHECK(ledger.share[0][0] == doctest::Approx(6.6667).epsilon(1e-4));
    CHECK(ledger.share[0][1] == doctest::Approx(3.3333).epsilon(1e-4));
    CHECK(ledger.share[0][0] + ledger.share[0][1] ==
          doctest::Approx(10.0).epsilon(1e-12));

    const double b0 = 0.5 * (10.0 + 1e-4 + 10.0);
    const double b1 = 0.5 * (10.0 + 1e-4);
    CHECK(ledger.share[0][0] ==
          doctest::Approx(10.0 * b0 / (b0 + b1)).epsilon(1e-12));

    CHECK(ledger.find({1, 0}) == 0);
    CHECK(ledger.find({0, 0}) == -1);

    SUBCASE("the same numbers fall out of the raw formula directly") {
        const auto origin = world.joint_state({1, 0});
        auto off = origin;
        off.dynamic[0] = {0};
        const auto with_out = blame(origin, 0, world.penalty, world.schema,
                                    fabricated_cf(origin, 0, {off}), 10.0, 1e-4);
        CHECK(with_out.margin == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(with_out.raw == doctest::Approx(10.00005).epsilon(1e-9));

        const auto floor = blame(origin, 1, world.penalty, world.schema,
                                 fabricated_cf(origin, 1, {}), 10.0, 1e-4);
        CHECK(floor.margin == doctest::Approx(0.0));
        CHECK(floor.raw == doctest::Approx(5.00005).epsilon(1e-9));
    }
}

TEST_CASE("zero-penalty states are skipped and score zero") {
    const auto world = duo_world();
    const auto ledger = assign_blame(world, {{0, 0}, {0, 1}}, 1e-4);
    CHECK(ledger.states.empty());
    const auto totals = ledger.total_blame(2);
    CHECK(totals[0] == 0.0);
    CHECK(totals[1] == 0.0);

    BlameEvaluator evaluator(world, 1e-4);
    CHECK(evaluator.max_penalty() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(evaluator.penalty_at({0, 0}) == doctest::Approx(0.0));
    CHECK(evaluator.shares({0, 0}) == std::vector<double>{0.0, 0.0});

    const auto& shares = evaluator.shares({1, 0});
    CHECK(shares[0] + shares[1] == doctest::Approx(10.0).epsilon(1e-12));
    const auto reference = assign_blame(world, {{1, 0}}, 1e-4);
    CHECK(shares[0] == doctest::Approx(reference.share[0][0]).epsilon(1e-12));
    CHECK(shares[1] == doctest::Approx(reference.share[0][1]).epsilon(1e-12));
}

TEST_CASE("symmetric agents split the penalty evenly") {
    const auto world = trio_world();
    const double full = 2.0 * std::log(4.0);
    const auto ledger = assign_blame(world, {{1, 1, 1}}, 1e-4);
    REQUIRE(ledger.states.size() == 1);
    CHECK(ledger.state_penalty[0] == doctest::Approx(full).epsilon(1e-12));
    for (int i = 0; i < 3; ++i) {
        CHECK(ledger.share[0][i] == doctest::Approx(full / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("margins can go negative and grow with more alternatives") {
    const auto schema = pair_schema();
    PenaltyModel model;
    model.beta = {{0.0, 5.0}};
    model.alpha = {1.0};
    const double top = max_penalty(model, schema);
    CHECK(top == doctest::Approx(5.0 * std::log(3.0)).epsilon(1e-12));

    const auto origin = pair_state(0, 1);  // only agent 1 switched on
    const auto worse = pair_state(1, 1);

    const auto negative = blame(origin, 0, model, schema,
                                fabricated_cf(origin, 0, {worse}), top, 1e-4);
    CHECK(negative.margin ==
          doctest::Approx(5.0 * (std::log(2.0) - std::log(3.0))).epsilon(1e-12));
    CHECK(negative.margin < 0.0);
    CHECK(negative.raw ==
          doctest::Approx(0.5 * (5.0 * std::log(2.0) + 1e-4)).epsilon(1e-12));

    // Adding a better alternative can only raise the margin.
    const auto richer =
        blame(origin, 0, model, schema,
              fabricated_cf(origin, 0, {worse, pair_state(0, 0)}), top, 1e-4);
    CHECK(richer.margin >= negative.margin);
    CHECK(richer.margin ==
          doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-12));

    const auto empty =
        blame(origin, 0, model, schema, fabricated_cf(origin, 0, {}), top, 1e-4);
    CHECK(empty.margin == doctest::Approx(0.0));
}

TEST_CASE("difference-reward credit") {
    const auto schema = pair_schema();
    PenaltyModel model;
    model.beta = {{0.0, 5.0}};
    model.alpha = {1.0};

    SUBCASE("removal credit equals the log gap") {
        const auto origin = pair_state(1, 1);
        const double credit = difference_reward_blame(
            origin, model, schema, fabricated_cf(origin, 0, {pair_state(0, 1)}));
        CHECK(credit ==
              doctest::Approx(5.0 * (std::log(3.0) - std::log(2.0))).epsilon(1e-12));
    }
    SUBCASE("equal alternative scores zero") {
        const auto origin = pair_state(1, 0);
        const double credit = difference_reward_blame(
            origin, model, schema, fabricated_cf(origin, 0, {pair_state(0, 1)}));
        CHECK(credit == doctest::Approx(0.0));
    }
    SUBCASE("worsening alternative goes negative, unclipped") {
        const auto origin = pair_state(0, 1);
        const double credit = difference_reward_blame(
            origin, model, schema, fabricated_cf(origin, 0, {pair_state(1, 1)}));
        CHECK(credit ==
              doctest::Approx(5.0 * (std::log(2.0) - std::log(3.0))).epsilon(1e-12));
        CHECK(credit < 0.0);
    }
    SUBCASE("empty set scores zero") {
        const auto origin = pair_state(1, 1);
        CHECK(difference_reward_blame(origin, model, schema,
                                      fabricated_cf(origin, 0, {})) == 0.0);
    }
}

TEST_CASE("difference-reward ledger records every visited state") {
    const auto world = duo_world();
    const auto ledger = difference_reward_ledger(world, {{0, 0}, {1, 0}});
    REQUIRE(ledger.states.size() == 2);

    // Switched off: turning on would cost 10, so the credit is -10.
    CHECK(ledger.state_penalty[0] == doctest::Approx(0.0));
    CHECK(ledger.share[0][0] == doctest::Approx(-10.0).epsilon(1e-12));
    CHECK(ledger.share[0][1] == doctest::Approx(0.0));

    // Switched on: turning off removes the whole penalty.
    CHECK(ledger.state_penalty[1] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(ledger.share[1][0] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(ledger.share[1][1] == doctest::Approx(0.0));
}

TEST_CASE("local penalty compilation takes the maximum and zeroes the rest") {
    const auto world = duo_world();
    BlameLedger ledger;
    ledger.epsilon = 1e-4;
    ledger.max_penalty = 10.0;
    ledger.record({1, 0}, 4.0, {2.0, 2.0}, {2.0, 2.0});
    ledger.record({1, 1}, 7.0, {3.5, 3.5}, {3.5, 3.5});

    const auto compiled = compile_local_penalties(world, ledger);
    REQUIRE(compiled.size() == 2);
    CHECK(compiled[0][0] == 0.0);
    CHECK(compiled[0][1] == doctest::Approx(3.5));  // max of 2.0 and 3.5
    CHECK(compiled[1][0] == doctest::Approx(2.0));
    CHECK(compiled[1][1] == doctest::Approx(3.5));
}

TEST_CASE("update selection ranks by total blame") {
    BlameLedger ledger;
    ledger.record({0, 0, 0}, 15.0, {5.0, 9.0, 1.0}, {5.0, 9.0, 1.0});

    CHECK(select_agents_for_update(ledger, 0.34, 3) == std::vector<int>{1, 0});
    CHECK(select_agents_for_update(ledger, 0.0, 3).empty());
    CHECK(select_agents_for_update(ledger, 1.0, 3) == std::vector<int>{1, 0, 2});

    SUBCASE("selections nest as the fraction grows") {
        const auto full = select_agents_for_update(ledger, 1.0, 3);
        for (double fraction : {0.1, 0.34, 0.5, 0.67, 1.0}) {
            const auto picked = select_agents_for_update(ledger, fraction, 3);
            REQUIRE(picked.size() <= full.size());
            for (std::size_t k = 0; k < picked.size(); ++k) {
                CHECK(picked[k] == full[k]);
            }
        }
    }
    SUBCASE("ties break toward the lower agent index") {
        BlameLedger tied;
        tied.record({0, 0, 0}, 11.0, {5.0, 5.0, 1.0}, {5.0, 5.0, 1.0});
        CHECK(select_agents_for_update(tied, 0.5, 3) == std::vector<int>{0, 1});
    }
}

TEST_CASE("considerate reward normalizes both terms") {
    CHECK(considerate_reward(3.0, 3.0, 0.0, 8.0, 1.0, 0.0) ==
          doctest::Approx(1.0));
    CHECK(considerate_reward(3.0, 3.0, 0.0, 8.0, 0.0, 1.0) ==
          doctest::Approx(0.0));  // others' share gone when B_i covers it all
    CHECK(considerate_reward(3.0, 3.0, 8.0, 8.0, 0.5, 0.5) ==
          doctest::Approx(1.0));
    CHECK_THROWS_AS(considerate_reward(1.0, 0.0, 0.0, 8.0, 0.5, 0.5), InputError);
    CHECK_THROWS_AS(considerate_reward(1.0, 1.0, 0.0, 0.0, 0.5, 0.5), InputError);
}

TEST_CASE("considerate maps blend task reward with others' shares") {
    const auto world = duo_world();
    BlameLedger ledger;
    ledger.max_penalty = 10.0;
    ledger.record({1, 0}, 10.0, {6.0, 4.0}, {6.0, 4.0});

    // toggle_model has an all-zero task reward, which the normalizer rejects.
    auto priced = world;
    for (auto& model : priced.models) model.task_reward[1][0] = 2.0;
    const auto maps = considerate_reward_maps(priced, ledger, 0.5, 0.5);
    REQUIRE(maps.size() == 2);

    // Agent 0, local state 1: task term 0.5 * 2/2, others' share 10 - 6 = 4.
    CHECK(maps[0][1][0] == doctest::Approx(0.5 + 0.5 * 4.0 / 10.0).epsilon(1e-12));
    CHECK(maps[0][1][1] == doctest::Approx(0.5 * 4.0 / 10.0).epsilon(1e-12));
    // Agent 0, local state 0: never recorded, so only the task term.
    CHECK(maps[0][0][0] == doctest::Approx(0.0));
    // Agent 1, local state 0: others' share 10 - 4 = 6.
    CHECK(maps[1][0][0] == doctest::Approx(0.5 * 6.0 / 10.0).epsilon(1e-12));
}

TEST_CASE("decomposition pass on a forced coral crossing") {
    const std::string text =
        "domain salp\n"
        "size 6 5\n"
        "seed 1\n"
        "grid\n"
        "######\n"
        "#A...#\n"
        "#C...#\n"
        "#L...#\n"
        "######\n"
        "agent 0 2 1 A\n"
        "agent 1 3 1 A\n"
        "penalty cargo A+coral 5 1\n"
        "end\n";
    const auto world = build_models(parse_instance(text));
    const auto policies = naive_policies(world);

    ReconParams params;
    params.nse_tolerance = 0.0;
    params.epsilon = 1e-4;
    params.episodes = 2;
    params.horizon = 40;
    params.seed = 3;

    const auto result = run_recon(world, policies, params);
    CHECK(result.triggered);
    // Each agent drags its sample across the coral cell once per episode.
    CHECK(result.report.penalty_per_episode ==
          doctest::Approx(10.0 * std::log(2.0)).epsilon(1e-9));
    REQUIRE(result.ledger.states.size() == 2);

    // Compiled penalties are nonzero exactly at the projections of the
    // recorded states (every share here is positive, floors included).
    for (int i = 0; i < 2; ++i) {
        std::set<int> expect;
        for (std::size_t idx = 0; idx < result.ledger.states.size(); ++idx) {
            CHECK(result.ledger.share[idx][i] > 0.0);
            expect.insert(result.ledger.states[idx][i]);
        }
        for (int s = 0; s < world.models[i].num_states; ++s) {
            if (expect.count(s)) {
                CHECK(result.local_penalty[i][s] > 0.0);
            } else {
                CHECK(result.local_penalty[i][s] == 0.0);
            }
        }
    }

    SUBCASE("a loose tolerance leaves everything at zero") {
        auto loose = params;
        loose.nse_tolerance = 100.0;
        const auto idle = run_recon(world, policies, loose);
        CHECK(!idle.triggered);
        CHECK(idle.ledger.states.empty());
        for (const auto& per_agent : idle.local_penalty) {
            for (double v : per_agent) CHECK(v == 0.0);
        }
    }
}

TEST_CASE("ledger invariants hold on generated rollouts") {
    GenOptions options;
    options.ensure_avoidable = true;
    const auto instance = generate_instance(Domain::salp, 6, 6, 2, 5, options);
    const auto world = build_models(instance);
    const auto report = rollout_joint(naive_policies(world), world, 48, 2, 11);
    REQUIRE(report.total_penalty > 0.0);

    const auto ledger = assign_blame(world, report.visited, 1e-4);
    REQUIRE(!ledger.states.empty());
    for (std::size_t idx = 0; idx < ledger.states.size(); ++idx) {
        CHECK(ledger.state_penalty[idx] > 0.0);
        double sum = 0.0;
        for (int i = 0; i < 2; ++i) {
            const double b = ledger.share[idx][i];
            CHECK(b >= 0.0);
            CHECK(b <= ledger.state_penalty[idx] + 1e-9);
            CHECK(ledger.raw[idx][i] > 0.0);
            sum += b;
        }
        CHECK(sum == doctest::Approx(ledger.state_penalty[idx]).epsilon(1e-9));
    }
}

TEST_CASE("ledger CSV layout") {
    BlameLedger ledger;
    ledger.record({1, 0}, 4.0, {1.5, 0.25}, {3.0, 1.0});
    std::ostringstream out;
    ledger.write_csv(out);
    CHECK(out.str() == "state,agent,b,B\n0,0,1.5,3\n0,1,0.25,1\n");
}

}  // TEST_SUITE
