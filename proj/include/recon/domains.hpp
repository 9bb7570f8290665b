#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/factored.hpp"

namespace recon {

/// The three bundled gridworlds. Each compiles to one task MDP per agent
/// plus a shared feature schema and penalty model.
enum class Domain { salp, warehouse, overcooked };

std::string domain_name(Domain domain);
Domain domain_from_name(const std::string& name);

/// One agent line of an instance file: start cell and task assignment.
/// Assignment syntax depends on the domain: salp "A" or "B"; warehouse
/// "big:<slot>" or "small:<slot>"; overcooked "tomato", "onion" or "clean".
struct AgentSpec {
    int id = 0;
    int x = 0;
    int y = 0;
    std::string assignment;

    bool operator==(const AgentSpec&) const = default;
};

/// One penalty line: beta for a single dynamic feature value, alpha for the
/// feature. Values absent from the file carry beta 0; all lines of a
/// feature must agree on alpha.
struct PenaltySpec {
    std::string feature;
    std::string value;
    double beta = 0.0;
    double alpha = 1.0;

    bool operator==(const PenaltySpec&) const = default;
};

/// A parsed problem instance. Grid glyph legends:
///   salp:       '#' wall, '.' floor, 'C' coral, 'A'/'B' sample sites,
///               'L' lab (deposit);
///   warehouse:  '#' wall, '.' floor, 'N' narrow corridor, 'S' shelf slot
///               (indexed row-major), 'C' processing counter;
///   overcooked: '#' wall, '.' floor, 'G' garbage bin (walkable),
///               'T'/'O' ingredient stations, 'P' pot, 'S' serving
///               counter, 'D' dirty-dish pile (stations block movement and
///               are used by facing them).
struct DomainInstance {
    Domain domain = Domain::salp;
    int width = 0;
    int height = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> grid;  // height rows of width glyphs
    std::vector<AgentSpec> agents;
    std::vector<PenaltySpec> penalties;  // sorted by value id

    char at(int x, int y) const { return grid[y][x]; }
    int num_agents() const { return static_cast<int>(agents.size()); }

    bool operator==(const DomainInstance&) const = default;
};

/// Parses the line-oriented instance format (see README) and validates the
/// result, including per-agent goal reachability. Text-level problems
/// raise ParseError with 1-based line/column; semantic problems raise
/// InputError or ModelError.
DomainInstance parse_instance(const std::string& text);

/// Canonical text form. serialize(parse(text)) reproduces canonical files
/// byte for byte; parse(serialize(i)) == i for any valid instance.
std::string serialize_instance(const DomainInstance& instance);

/// Compiles the instance into per-agent task MDPs, the feature schema, the
/// penalty model and the state factorings. Deterministic.
World build_models(const DomainInstance& instance);

/// Canonical names of the domain's dynamic feature values, in value-id
/// order (the order beta tables are indexed by).
std::vector<std::string> dynamic_value_names(Domain domain);

/// Name of the domain's single dynamic global feature.
std::string dynamic_feature_name(Domain domain);

/// Knobs for seeded instance generation.
struct GenOptions {
    double wall_density = 0.05;
    double hazard_density = 0.10;  // coral / corridor / bin cells
    /// Rejection-sample until the naive policies provably incur a penalty
    /// that a full policy update can eliminate without any task-value loss.
    bool ensure_avoidable = false;
    int max_retries = 200;
};

/// Seeded random instance: walls and hazard cells are sprinkled, stations
/// and agents placed, and the result re-drawn until every agent can reach
/// its goal (and, when requested, the avoidability guarantee holds).
/// Identical arguments produce identical instances.
DomainInstance generate_instance(Domain domain, int width, int height,
                                 int num_agents, std::uint64_t seed,
                                 const GenOptions& options = {});

}  // namespace recon
