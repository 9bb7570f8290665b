#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "recon/factored.hpp"

namespace {

using namespace recon;

FeatureSchema two_agent_schema(int domain_size) {
    FeatureSchema schema;
    schema.local.resize(2);
    for (int i = 0; i < 2; ++i) {
        schema.local[i] = {Feature{"x", {"0", "1"}}};
    }
    DynamicFeature load;
    load.name = "load";
    for (int v = 0; v < domain_size; ++v) load.values.push_back(std::to_string(v));
    load.controllers = {0, 1};
    schema.dynamic_global = {load};
    schema.validate();
    return schema;
}

FactoredJointState state_with(const FeatureSchema& schema,
                              const std::vector<int>& dynamic_values) {
    FactoredJointState state;
    state.local.assign(schema.num_agents(), {0});
    state.static_values = {};
    state.dynamic.resize(schema.num_agents());
    for (int i = 0; i < schema.num_agents(); ++i) {
        state.dynamic[i] = {dynamic_values[i]};
    }
    return state;
}

// Corridor world: every agent walks `cells` cells (advance/stay), cells in
// `carrying` expose dynamic value 1, everything else value 0. Entering the
// last cell ends the task.
World corridor_world(int num_agents, int cells,
                     const std::vector<int>& carrying, double beta) {
    World world;
    world.schema.local.resize(num_agents);
    DynamicFeature load;
    load.name = "load";
    load.values = {"empty", "cargo"};
    for (int i = 0; i < num_agents; ++i) load.controllers.push_back(i);
    world.schema.dynamic_global = {load};
    world.penalty.beta = {{0.0, beta}};
    world.penalty.alpha = {1.0};

    for (int i = 0; i < num_agents; ++i) {
        Feature cell;
        cell.name = "cell";
        for (int c = 0; c < cells; ++c) cell.values.push_back(std::to_string(c));
        world.schema.local[i] = {cell};

        AgentTaskModel model;
        model.num_states = cells;
        model.num_actions = 2;
        model.discount = 0.95;
        model.transitions.assign(cells, std::vector<TransitionRow>(2));
        model.task_reward.assign(cells, std::vector<double>(2, 0.0));
        model.terminal.assign(cells, 0);
        model.terminal[cells - 1] = 1;
        for (int c = 0; c + 1 < cells; ++c) {
            model.transitions[c][0] = {{c + 1, 1.0}};
            model.transitions[c][1] = {{c, 1.0}};
            model.task_reward[c][0] = c + 2 == cells ? 1.0 : -0.01;
            model.task_reward[c][1] = -0.01;
        }
        model.transitions[cells - 1][0] = {{cells - 1, 1.0}};
        model.transitions[cells - 1][1] = {{cells - 1, 1.0}};
        model.start_state = 0;
        model.validate();

        AgentFactoring factoring;
        factoring.local_values.resize(cells);
        factoring.dynamic_values.resize(cells);
        for (int c = 0; c < cells; ++c) {
            factoring.local_values[c] = {c};
            const bool carries =
                std::find(carrying.begin(), carrying.end(), c) != carrying.end();
            factoring.dynamic_values[c] = {carries ? 1 : 0};
        }
        factoring.build_index();

        world.models.push_back(std::move(model));
        world.factoring.push_back(std::move(factoring));
    }
    world.schema.validate();
    world.penalty.validate(world.schema);
    return world;
}

Policy advance_policy(int cells) {
    Policy policy;
    policy.action.assign(cells, 0);
    return policy;
}

}  // namespace

TEST_SUITE("factored") {

TEST_CASE("joint penalty follows the logarithmic count formula") {
    const auto schema = two_agent_schema(2);
    PenaltyModel model;
    model.beta = {{0.0, 5.0}};
    model.alpha = {1.0};
    model.validate(schema);

    SUBCASE("no counted values means zero") {
        CHECK(joint_penalty(state_with(schema, {0, 0}), model, schema) ==
              doctest::Approx(0.0));
    }
    SUBCASE("two agents on the penalized value") {
        const double expected = 5.0 * std::log(3.0);
        CHECK(joint_penalty(state_with(schema, {1, 1}), model, schema) ==
              doctest::Approx(expected).epsilon(1e-12));
        CHECK(expected == doctest::Approx(5.4931).epsilon(1e-4));
    }
    SUBCASE("monotone in the count") {
        const double one = joint_penalty(state_with(schema, {1, 0}), model, schema);
        const double two = joint_penalty(state_with(schema, {1, 1}), model, schema);
        CHECK(one < two);
    }
    SUBCASE("permutation invariant") {
        CHECK(joint_penalty(state_with(schema, {1, 0}), model, schema) ==
              doctest::Approx(
                  joint_penalty(state_with(schema, {0, 1}), model, schema)));
    }
    SUBCASE("local features never enter") {
        auto state = state_with(schema, {1, 1});
        const double base = joint_penalty(state, model, schema);
        state.local[0] = {1};
        CHECK(joint_penalty(state, model, schema) == doctest::Approx(base));
    }
    SUBCASE("out-of-domain value rejected") {
        CHECK_THROWS_AS(joint_penalty(state_with(schema, {2, 0}), model, schema),
                        ModelError);
    }
}

TEST_CASE("two features contribute additively") {
    FeatureSchema schema;
    schema.local = {{Feature{"x", {"0"}}}, {Feature{"y", {"0"}}}};
    DynamicFeature f1{"f1", {"0", "1"}, {0, 1}};
    DynamicFeature f2{"f2", {"0", "1"}, {0, 1}};
    schema.dynamic_global = {f1, f2};
    schema.validate();
    PenaltyModel model;
    model.beta = {{0.0, 3.0}, {0.0, 7.0}};
    model.alpha = {1.0, 2.0};
    model.validate(schema);

    FactoredJointState both;
    both.local = {{0}, {0}};
    both.dynamic = {{1, 1}, {0, 0}};
    FactoredJointState only_f1 = both;
    only_f1.dynamic = {{1, 0}, {0, 0}};
    FactoredJointState only_f2 = both;
    only_f2.dynamic = {{0, 1}, {0, 0}};

    CHECK(joint_penalty(both, model, schema) ==
          doctest::Approx(joint_penalty(only_f1, model, schema) +
                          joint_penalty(only_f2, model, schema))
              .epsilon(1e-12));
}

TEST_CASE("max penalty matches exhaustive enumeration") {
    SUBCASE("single feature closed form") {
        FeatureSchema schema;
        schema.local = {{Feature{"a", {"0"}}},
                        {Feature{"b", {"0"}}},
                        {Feature{"c", {"0"}}}};
        DynamicFeature load{"load", {"clean", "bad"}, {0, 1, 2}};
        schema.dynamic_global = {load};
        schema.validate();
        PenaltyModel model;
        model.beta = {{0.0, 5.0}};
        model.alpha = {1.0};
        CHECK(max_penalty(model, schema) ==
              doctest::Approx(5.0 * std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("all beta zero") {
        const auto schema = two_agent_schema(2);
        PenaltyModel model;
        model.beta = {{0.0, 0.0}};
        model.alpha = {1.0};
        CHECK(max_penalty(model, schema) == doctest::Approx(0.0));
    }
    SUBCASE("two features, four agents, brute force") {
        FeatureSchema schema;
        schema.local.resize(4);
        for (int i = 0; i < 4; ++i) schema.local[i] = {Feature{"x", {"0"}}};
        DynamicFeature f1{"f1", {"0", "1", "2"}, {0, 1, 2, 3}};
        DynamicFeature f2{"f2", {"0", "1"}, {1, 3}};
        schema.dynamic_global = {f1, f2};
        schema.validate();
        PenaltyModel model;
        model.beta = {{0.0, 4.0, 1.5}, {0.5, 2.0}};
        model.alpha = {1.0, 0.7};
        model.validate(schema);

        // Enumerate every dynamic assignment over the controlled slots.
        double best = 0.0;
        FactoredJointState state;
        state.local = {{0}, {0}, {0}, {0}};
        state.dynamic = {{0, -1}, {0, 0}, {0, -1}, {0, 0}};
        std::function<void(int)> visit = [&](int slot) {
            // Slots in order: (agent, feature) pairs with control.
            static const std::vector<std::pair<int, int>> slots = {
                {0, 0}, {1, 0}, {2, 0}, {3, 0}, {1, 1}, {3, 1}};
            if (slot == static_cast<int>(slots.size())) {
                best = std::max(best, joint_penalty(state, model, schema));
                return;
            }
            const auto [agent, feature] = slots[slot];
            const int domain =
                static_cast<int>(schema.dynamic_global[feature].values.size());
            for (int v = 0; v < domain; ++v) {
                state.dynamic[agent][feature] = v;
                visit(slot + 1);
            }
        };
        visit(0);
        CHECK(max_penalty(model, schema) == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("schema and penalty validation") {
    SUBCASE("duplicate feature names") {
        FeatureSchema schema;
        schema.local = {{Feature{"x", {"0"}}}};
        schema.dynamic_global = {DynamicFeature{"x", {"0"}, {0}}};
        CHECK_THROWS_AS(schema.validate(), ModelError);
    }
    SUBCASE("dynamic feature without controllers") {
        FeatureSchema schema;
        schema.local = {{Feature{"x", {"0"}}}};
        schema.dynamic_global = {DynamicFeature{"d", {"0"}, {}}};
        CHECK_THROWS_AS(schema.validate(), ModelError);
    }
    SUBCASE("nonpositive alpha") {
        const auto schema = two_agent_schema(2);
        PenaltyModel model;
        model.beta = {{0.0, 1.0}};
        model.alpha = {0.0};
        CHECK_THROWS_AS(model.validate(schema), ModelError);
    }
    SUBCASE("negative beta") {
        const auto schema = two_agent_schema(2);
        PenaltyModel model;
        model.beta = {{0.0, -1.0}};
        model.alpha = {1.0};
        CHECK_THROWS_AS(model.validate(schema), ModelError);
    }
}

TEST_CASE("solo penalty isolates one agent's contribution") {
    const auto world = corridor_world(2, 5, {1, 2, 3}, 5.0);
    // Carrying cells contribute beta * ln(alpha + 1); empty cells nothing.
    CHECK(solo_penalty(world, 0, 0) == doctest::Approx(0.0));
    CHECK(solo_penalty(world, 0, 2) ==
          doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(solo_penalty(world, 1, 3) ==
          doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("projection inverts the joint-state factoring") {
    const auto world = corridor_world(2, 5, {1, 2, 3}, 5.0);
    const auto state = world.joint_state({2, 4});
    CHECK(world.project(0, state) == 2);
    CHECK(world.project(1, state) == 4);

    // A tuple that exists for no state projects to nothing: cell 4 never
    // carries cargo.
    auto ghost = state;
    ghost.dynamic[1] = {1};
    CHECK(!world.project(1, ghost).has_value());
}

TEST_CASE("rollout accumulates the hand-traced penalty") {
    // Both agents advance in lockstep and carry cargo on cells 1..3, so
    // three steps are charged at N=2 each.
    const auto world = corridor_world(2, 5, {1, 2, 3}, 5.0);
    const std::vector<Policy> policies{advance_policy(5), advance_policy(5)};
    const auto report = rollout_joint(policies, world, 20, 3, 7);

    const double per_step = 5.0 * std::log(3.0);
    CHECK(report.penalty_per_episode ==
          doctest::Approx(3.0 * per_step).epsilon(1e-12));
    CHECK(report.total_penalty ==
          doctest::Approx(3 * 3.0 * per_step).epsilon(1e-12));
    CHECK(report.episodes == 3);
    // Deterministic world: no spread across episodes.
    CHECK(report.penalty_std() == doctest::Approx(0.0));

    // Step-by-step oracle over the deterministic trajectory.
    double oracle = 0.0;
    std::vector<int> cells{0, 0};
    for (int step = 0; step < 20; ++step) {
        if (cells[0] == 4 && cells[1] == 4) break;
        oracle += joint_penalty(world.joint_state(cells), world.penalty,
                                world.schema);
        for (auto& c : cells) c = std::min(c + 1, 4);
    }
    CHECK(report.penalty_per_episode == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("rollouts are bit-reproducible for a fixed seed") {
    const auto world = corridor_world(2, 5, {1, 2}, 2.5);
    const std::vector<Policy> policies{advance_policy(5), advance_policy(5)};
    const auto a = rollout_joint(policies, world, 15, 4, 123);
    const auto b = rollout_joint(policies, world, 15, 4, 123);
    CHECK(a.total_penalty == b.total_penalty);
    CHECK(a.visited == b.visited);
    CHECK(a.visit_counts == b.visit_counts);
    CHECK(a.episode_penalty == b.episode_penalty);
    CHECK(a.task_return == b.task_return);
}

TEST_CASE("per-agent task returns ignore the other agents' behavior") {
    const auto world = corridor_world(2, 5, {1, 2}, 2.5);
    Policy idle;
    idle.action.assign(5, 1);  // stay forever
    const auto moving = rollout_joint({advance_policy(5), advance_policy(5)},
                                      world, 25, 2, 9);
    const auto blocked = rollout_joint({advance_policy(5), idle}, world, 25, 2, 9);
    CHECK(moving.task_return[0] ==
          doctest::Approx(blocked.task_return[0]).epsilon(1e-12));
}

TEST_CASE("reachability closure flags exactly the forward-reachable states") {
    auto world = corridor_world(1, 5, {}, 0.0);
    // Cut the corridor after cell 1: advancing from cell 1 now stays put.
    world.models[0].transitions[1][0] = {{1, 1.0}};
    const auto& flags = world.reachable(0);
    CHECK(flags[0]);
    CHECK(flags[1]);
    CHECK(!flags[2]);
    CHECK(!flags[3]);
    CHECK(!flags[4]);
}

}  // TEST_SUITE
