#include "recon/domains.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <random>
#include <sstream>
#include <utility>

#include "recon/blame.hpp"
#include "recon/lexicographic.hpp"

namespace recon {

namespace {

// Movement order shared by every domain: up, right, down, left. Overcooked
// appends interact as action 4.
constexpr std::array<int, 4> kDx{0, 1, 0, -1};
constexpr std::array<int, 4> kDy{-1, 0, 1, 0};

constexpr double kStepCost = -0.01;
constexpr double kGoalReward = 1.0;
constexpr double kSolveTolerance = 1e-6;

const char* glyphs_for(Domain domain) {
    switch (domain) {
        case Domain::salp: return "#.CABL";
        case Domain::warehouse: return "#.NSC";
        case Domain::overcooked: return "#.GTOPSD";
    }
    throw InputError("unknown domain");
}

bool cell_walkable(Domain domain, char glyph) {
    if (domain == Domain::overcooked) return glyph == '.' || glyph == 'G';
    return glyph != '#';
}

// ---------------------------------------------------------------------------
// Dynamic value naming. Ids are dense and the beta tables index by them.

const std::vector<std::string>& salp_samples() {
    static const std::vector<std::string> v{"X", "A", "B"};
    return v;
}
const std::vector<std::string>& warehouse_sizes() {
    static const std::vector<std::string> v{"X", "big", "small"};
    return v;
}
const std::vector<std::string>& warehouse_statuses() {
    static const std::vector<std::string> v{"init", "picked", "processed",
                                            "delivered"};
    return v;
}
const std::vector<std::string>& overcooked_objects() {
    static const std::vector<std::string> v{"X", "tomato", "onion", "soup",
                                            "garbage"};
    return v;
}

int salp_value_id(int sample, int coral) { return sample * 2 + coral; }
int warehouse_value_id(int size, int status, int corridor) {
    return (size * 4 + status) * 2 + corridor;
}
int overcooked_value_id(int object, int bin) { return object * 2 + bin; }

}  // namespace

std::string domain_name(Domain domain) {
    switch (domain) {
        case Domain::salp: return "salp";
        case Domain::warehouse: return "warehouse";
        case Domain::overcooked: return "overcooked";
    }
    throw InputError("unknown domain");
}

Domain domain_from_name(const std::string& name) {
    if (name == "salp") return Domain::salp;
    if (name == "warehouse") return Domain::warehouse;
    if (name == "overcooked") return Domain::overcooked;
    throw InputError("unknown domain name: " + name);
}

std::string dynamic_feature_name(Domain domain) {
    switch (domain) {
        case Domain::salp: return "cargo";
        case Domain::warehouse: return "haul";
        case Domain::overcooked: return "carry";
    }
    throw InputError("unknown domain");
}

std::vector<std::string> dynamic_value_names(Domain domain) {
    std::vector<std::string> names;
    switch (domain) {
        case Domain::salp:
            for (const auto& sample : salp_samples()) {
                names.push_back(sample);
                names.push_back(sample + "+coral");
            }
            break;
        case Domain::warehouse:
            for (const auto& size : warehouse_sizes()) {
                for (const auto& status : warehouse_statuses()) {
                    names.push_back(size + "+" + status);
                    names.push_back(size + "+" + status + "+corridor");
                }
            }
            break;
        case Domain::overcooked:
            for (const auto& object : overcooked_objects()) {
                names.push_back(object);
                names.push_back(object + "+bin");
            }
            break;
    }
    return names;
}

namespace {

int value_id_from_name(Domain domain, const std::string& value) {
    const auto names = dynamic_value_names(domain);
    auto it = std::find(names.begin(), names.end(), value);
    if (it == names.end()) return -1;
    return static_cast<int>(it - names.begin());
}

// ---------------------------------------------------------------------------
// Assignment parsing.

struct SalpAssignment {
    int sample;  // 1 = A, 2 = B
};

std::optional<SalpAssignment> parse_salp_assignment(const std::string& text) {
    if (text == "A") return SalpAssignment{1};
    if (text == "B") return SalpAssignment{2};
    return std::nullopt;
}

struct WarehouseAssignment {
    int size;  // 1 = big, 2 = small
    int slot;
};

std::optional<WarehouseAssignment> parse_warehouse_assignment(
    const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) return std::nullopt;
    const std::string size = text.substr(0, colon);
    const std::string slot = text.substr(colon + 1);
    WarehouseAssignment out{};
    if (size == "big") {
        out.size = 1;
    } else if (size == "small") {
        out.size = 2;
    } else {
        return std::nullopt;
    }
    if (slot.empty() ||
        !std::all_of(slot.begin(), slot.end(),
                     [](unsigned char c) { return std::isdigit(c); })) {
        return std::nullopt;
    }
    out.slot = std::stoi(slot);
    return out;
}

enum class OvercookedRole { tomato, onion, clean };

std::optional<OvercookedRole> parse_overcooked_assignment(const std::string& text) {
    if (text == "tomato") return OvercookedRole::tomato;
    if (text == "onion") return OvercookedRole::onion;
    if (text == "clean") return OvercookedRole::clean;
    return std::nullopt;
}

bool assignment_valid(Domain domain, const std::string& text) {
    switch (domain) {
        case Domain::salp: return parse_salp_assignment(text).has_value();
        case Domain::warehouse: return parse_warehouse_assignment(text).has_value();
        case Domain::overcooked:
            return parse_overcooked_assignment(text).has_value();
    }
    return false;
}

// ---------------------------------------------------------------------------
// Semantic validation shared by the parser and the model builder.

std::vector<std::pair<int, int>> glyph_cells(const DomainInstance& inst,
                                             char glyph) {
    std::vector<std::pair<int, int>> cells;
    for (int y = 0; y < inst.height; ++y) {
        for (int x = 0; x < inst.width; ++x) {
            if (inst.at(x, y) == glyph) cells.emplace_back(x, y);
        }
    }
    return cells;
}

void check_instance(const DomainInstance& inst) {
    if (inst.width < 1 || inst.height < 1) {
        throw InputError("instance grid must be at least 1x1");
    }
    if (static_cast<int>(inst.grid.size()) != inst.height) {
        throw InputError("grid row count does not match the declared height");
    }
    const std::string valid = glyphs_for(inst.domain);
    for (const auto& row : inst.grid) {
        if (static_cast<int>(row.size()) != inst.width) {
            throw InputError("grid row length does not match the declared width");
        }
        for (char g : row) {
            if (valid.find(g) == std::string::npos) {
                throw InputError(std::string("unknown cell glyph '") + g + "'");
            }
        }
    }
    if (inst.agents.empty()) throw InputError("instance declares no agents");

    std::vector<char> seen(inst.agents.size(), 0);
    for (const auto& agent : inst.agents) {
        if (agent.id < 0 || agent.id >= inst.num_agents()) {
            throw InputError("agent ids must be contiguous from 0");
        }
        if (seen[agent.id]) {
            throw InputError("duplicate agent id " + std::to_string(agent.id));
        }
        seen[agent.id] = 1;
        if (agent.x < 0 || agent.x >= inst.width || agent.y < 0 ||
            agent.y >= inst.height) {
            throw InputError("agent " + std::to_string(agent.id) +
                             " starts outside the grid");
        }
        if (!cell_walkable(inst.domain, inst.at(agent.x, agent.y))) {
            throw InputError("agent " + std::to_string(agent.id) +
                             " starts on a blocked cell");
        }
        if (!assignment_valid(inst.domain, agent.assignment)) {
            throw InputError("agent " + std::to_string(agent.id) +
                             " has an invalid assignment '" + agent.assignment +
                             "'");
        }
    }

    // Referenced stations must exist.
    switch (inst.domain) {
        case Domain::salp: {
            const bool lab = !glyph_cells(inst, 'L').empty();
            if (!lab) throw InputError("salp instance has no lab cell");
            for (const auto& agent : inst.agents) {
                const char site = agent.assignment == "A" ? 'A' : 'B';
                if (glyph_cells(inst, site).empty()) {
                    throw InputError("no sample site of type " + agent.assignment);
                }
            }
            break;
        }
        case Domain::warehouse: {
            const int slots = static_cast<int>(glyph_cells(inst, 'S').size());
            if (glyph_cells(inst, 'C').empty()) {
                throw InputError("warehouse instance has no counter cell");
            }
            for (const auto& agent : inst.agents) {
                const auto parsed = parse_warehouse_assignment(agent.assignment);
                if (parsed->slot >= slots) {
                    throw InputError("agent " + std::to_string(agent.id) +
                                     " references shelf slot " +
                                     std::to_string(parsed->slot) + " but only " +
                                     std::to_string(slots) + " exist");
                }
            }
            break;
        }
        case Domain::overcooked: {
            bool any_cook = false;
            bool any_clean = false;
            for (const auto& agent : inst.agents) {
                const auto role = *parse_overcooked_assignment(agent.assignment);
                if (role == OvercookedRole::clean) {
                    any_clean = true;
                } else {
                    any_cook = true;
                    const char station = role == OvercookedRole::tomato ? 'T' : 'O';
                    if (glyph_cells(inst, station).empty()) {
                        throw InputError(std::string("no ingredient station '") +
                                         station + "' on the grid");
                    }
                }
            }
            if (any_cook && (glyph_cells(inst, 'P').empty() ||
                             glyph_cells(inst, 'S').empty())) {
                throw InputError("cooking agents need a pot and a serving counter");
            }
            if (any_clean && (glyph_cells(inst, 'D').empty() ||
                              glyph_cells(inst, 'G').empty())) {
                throw InputError("cleaning agents need a dish pile and a bin");
            }
            break;
        }
    }

    const std::string feature = dynamic_feature_name(inst.domain);
    std::vector<char> value_seen(dynamic_value_names(inst.domain).size(), 0);
    bool alpha_set = false;
    double alpha = 1.0;
    for (const auto& line : inst.penalties) {
        if (line.feature != feature) {
            throw InputError("unknown penalty feature '" + line.feature + "'");
        }
        const int id = value_id_from_name(inst.domain, line.value);
        if (id < 0) {
            throw InputError("unknown penalty value '" + line.value + "'");
        }
        if (value_seen[id]) {
            throw InputError("duplicate penalty value '" + line.value + "'");
        }
        value_seen[id] = 1;
        if (!(line.beta >= 0.0)) throw InputError("penalty beta must be nonnegative");
        if (!(line.alpha > 0.0)) throw InputError("penalty alpha must be positive");
        if (alpha_set && line.alpha != alpha) {
            throw InputError("inconsistent alpha for feature '" + feature + "'");
        }
        alpha = line.alpha;
        alpha_set = true;
    }
}

// ---------------------------------------------------------------------------
// Instance text format.

struct Token {
    int col = 0;  // 1-based
    std::string text;
};

std::vector<Token> split_tokens(const std::string& line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < line.size() &&
               !std::isspace(static_cast<unsigned char>(line[j]))) {
            ++j;
        }
        out.push_back({static_cast<int>(i) + 1, line.substr(i, j - i)});
        i = j;
    }
    return out;
}

long long parse_int_token(const Token& tok, int line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(tok.text, &pos);
        if (pos == tok.text.size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError(line_no, tok.col, std::string("expected integer ") + what);
}

std::uint64_t parse_u64_token(const Token& tok, int line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(tok.text, &pos);
        if (pos == tok.text.size() && tok.text[0] != '-') return v;
    } catch (const std::exception&) {
    }
    throw ParseError(line_no, tok.col, std::string("expected unsigned integer ") + what);
}

double parse_double_token(const Token& tok, int line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok.text, &pos);
        if (pos == tok.text.size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError(line_no, tok.col, std::string("expected number ") + what);
}

}  // namespace

DomainInstance parse_instance(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::string current;
        for (char c : text) {
            if (c == '\n') {
                lines.push_back(current);
                current.clear();
            } else {
                current.push_back(c);
            }
        }
        if (!current.empty()) lines.push_back(current);
    }

    int ln = 0;  // 0-based cursor
    auto next_line = [&](const char* what) -> std::vector<Token> {
        if (ln >= static_cast<int>(lines.size())) {
            throw ParseError(static_cast<int>(lines.size()) + 1, 1,
                             std::string("unexpected end of file, expected ") + what);
        }
        return split_tokens(lines[ln]);
    };
    auto expect_arity = [&](const std::vector<Token>& toks, std::size_t n,
                            const char* usage) {
        if (toks.size() != n) {
            const int col = toks.empty() ? 1 : toks.back().col;
            throw ParseError(ln + 1, col, std::string("expected '") + usage + "'");
        }
    };

    DomainInstance inst;

    {
        auto toks = next_line("'domain <name>'");
        expect_arity(toks, 2, "domain <name>");
        if (toks[0].text != "domain") {
            throw ParseError(ln + 1, toks[0].col, "expected keyword 'domain'");
        }
        try {
            inst.domain = domain_from_name(toks[1].text);
        } catch (const InputError&) {
            throw ParseError(ln + 1, toks[1].col,
                             "unknown domain '" + toks[1].text + "'");
        }
        ++ln;
    }
    {
        auto toks = next_line("'size <width> <height>'");
        expect_arity(toks, 3, "size <width> <height>");
        if (toks[0].text != "size") {
            throw ParseError(ln + 1, toks[0].col, "expected keyword 'size'");
        }
        inst.width = static_cast<int>(parse_int_token(toks[1], ln + 1, "width"));
        inst.height = static_cast<int>(parse_int_token(toks[2], ln + 1, "height"));
        if (inst.width < 1) throw ParseError(ln + 1, toks[1].col, "width must be positive");
        if (inst.height < 1) throw ParseError(ln + 1, toks[2].col, "height must be positive");
        ++ln;
    }
    {
        auto toks = next_line("'seed <value>'");
        expect_arity(toks, 2, "seed <value>");
        if (toks[0].text != "seed") {
            throw ParseError(ln + 1, toks[0].col, "expected keyword 'seed'");
        }
        inst.seed = parse_u64_token(toks[1], ln + 1, "seed");
        ++ln;
    }
    {
        auto toks = next_line("'grid'");
        expect_arity(toks, 1, "grid");
        if (toks[0].text != "grid") {
            throw ParseError(ln + 1, toks[0].col, "expected keyword 'grid'");
        }
        ++ln;
    }
    const std::string valid_glyphs = glyphs_for(inst.domain);
    for (int row = 0; row < inst.height; ++row) {
        if (ln >= static_cast<int>(lines.size())) {
            throw ParseError(static_cast<int>(lines.size()) + 1, 1,
                             "unexpected end of file inside the grid block");
        }
        const std::string& line = lines[ln];
        if (static_cast<int>(line.size()) != inst.width) {
            throw ParseError(ln + 1, static_cast<int>(line.size()) + 1,
                             "grid row must have exactly " +
                                 std::to_string(inst.width) + " glyphs");
        }
        for (int x = 0; x < inst.width; ++x) {
            if (valid_glyphs.find(line[x]) == std::string::npos) {
                throw ParseError(ln + 1, x + 1,
                                 std::string("unknown cell glyph '") + line[x] + "'");
            }
        }
        inst.grid.push_back(line);
        ++ln;
    }

    // Agent lines, then penalty lines, then 'end'.
    while (true) {
        auto toks = next_line("'agent', 'penalty' or 'end'");
        if (toks.empty()) {
            throw ParseError(ln + 1, 1, "expected 'agent', 'penalty' or 'end'");
        }
        if (toks[0].text == "agent") {
            expect_arity(toks, 5, "agent <id> <x> <y> <assignment>");
            AgentSpec agent;
            agent.id = static_cast<int>(parse_int_token(toks[1], ln + 1, "agent id"));
            agent.x = static_cast<int>(parse_int_token(toks[2], ln + 1, "x"));
            agent.y = static_cast<int>(parse_int_token(toks[3], ln + 1, "y"));
            agent.assignment = toks[4].text;
            for (const auto& existing : inst.agents) {
                if (existing.id == agent.id) {
                    throw ParseError(ln + 1, toks[1].col,
                                     "duplicate agent id " + std::to_string(agent.id));
                }
            }
            if (agent.x < 0 || agent.x >= inst.width) {
                throw ParseError(ln + 1, toks[2].col, "x outside the grid");
            }
            if (agent.y < 0 || agent.y >= inst.height) {
                throw ParseError(ln + 1, toks[3].col, "y outside the grid");
            }
            if (!cell_walkable(inst.domain, inst.at(agent.x, agent.y))) {
                throw ParseError(ln + 1, toks[2].col,
                                 "agent start cell is blocked");
            }
            if (!assignment_valid(inst.domain, agent.assignment)) {
                throw ParseError(ln + 1, toks[4].col,
                                 "invalid assignment '" + agent.assignment + "'");
            }
            inst.agents.push_back(std::move(agent));
            ++ln;
            continue;
        }
        if (toks[0].text == "penalty") {
            if (inst.agents.empty()) {
                throw ParseError(ln + 1, toks[0].col,
                                 "at least one agent line must precede penalties");
            }
            expect_arity(toks, 5, "penalty <feature> <value> <beta> <alpha>");
            PenaltySpec spec;
            spec.feature = toks[1].text;
            spec.value = toks[2].text;
            spec.beta = parse_double_token(toks[3], ln + 1, "beta");
            spec.alpha = parse_double_token(toks[4], ln + 1, "alpha");
            if (spec.feature != dynamic_feature_name(inst.domain)) {
                throw ParseError(ln + 1, toks[1].col,
                                 "unknown penalty feature '" + spec.feature + "'");
            }
            if (value_id_from_name(inst.domain, spec.value) < 0) {
                throw ParseError(ln + 1, toks[2].col,
                                 "unknown penalty value '" + spec.value + "'");
            }
            for (const auto& existing : inst.penalties) {
                if (existing.value == spec.value) {
                    throw ParseError(ln + 1, toks[2].col,
                                     "duplicate penalty value '" + spec.value + "'");
                }
            }
            if (!(spec.beta >= 0.0)) {
                throw ParseError(ln + 1, toks[3].col, "beta must be nonnegative");
            }
            if (!(spec.alpha > 0.0)) {
                throw ParseError(ln + 1, toks[4].col, "alpha must be positive");
            }
            inst.penalties.push_back(std::move(spec));
            ++ln;
            continue;
        }
        if (toks[0].text == "end") {
            expect_arity(toks, 1, "end");
            if (inst.agents.empty()) {
                throw ParseError(ln + 1, toks[0].col,
                                 "instance declares no agents");
            }
            ++ln;
            break;
        }
        throw ParseError(ln + 1, toks[0].col,
                         "expected 'agent', 'penalty' or 'end'");
    }
    for (; ln < static_cast<int>(lines.size()); ++ln) {
        if (!split_tokens(lines[ln]).empty()) {
            throw ParseError(ln + 1, 1, "unexpected content after 'end'");
        }
    }

    // Canonical ordering so parse/serialize round-trips compare equal.
    std::sort(inst.agents.begin(), inst.agents.end(),
              [](const AgentSpec& a, const AgentSpec& b) { return a.id < b.id; });
    std::sort(inst.penalties.begin(), inst.penalties.end(),
              [&](const PenaltySpec& a, const PenaltySpec& b) {
                  return value_id_from_name(inst.domain, a.value) <
                         value_id_from_name(inst.domain, b.value);
              });

    check_instance(inst);
    build_models(inst);  // validates goal reachability
    return inst;
}

std::string serialize_instance(const DomainInstance& instance) {
    std::ostringstream out;
    out << "domain " << domain_name(instance.domain) << "\n";
    out << "size " << instance.width << ' ' << instance.height << "\n";
    out << "seed " << instance.seed << "\n";
    out << "grid\n";
    for (const auto& row : instance.grid) out << row << "\n";

    std::vector<AgentSpec> agents = instance.agents;
    std::sort(agents.begin(), agents.end(),
              [](const AgentSpec& a, const AgentSpec& b) { return a.id < b.id; });
    for (const auto& agent : agents) {
        out << "agent " << agent.id << ' ' << agent.x << ' ' << agent.y << ' '
            << agent.assignment << "\n";
    }

    std::vector<PenaltySpec> penalties = instance.penalties;
    std::sort(penalties.begin(), penalties.end(),
              [&](const PenaltySpec& a, const PenaltySpec& b) {
                  return value_id_from_name(instance.domain, a.value) <
                         value_id_from_name(instance.domain, b.value);
              });
    for (const auto& line : penalties) {
        out << "penalty " << line.feature << ' ' << line.value << ' '
            << format_double(line.beta) << ' ' << format_double(line.alpha)
            << "\n";
    }
    out << "end\n";
    return out.str();
}

namespace {

// ---------------------------------------------------------------------------
// Model builders.

struct CellIndex {
    std::vector<int> id;  // (y * width + x) -> cell id, -1 when blocked
    std::vector<std::pair<int, int>> cells;

    int at(int x, int y) const { return id[static_cast<std::size_t>(y) * width + x]; }
    int width = 0;
};

CellIndex index_walkable(const DomainInstance& inst) {
    CellIndex ci;
    ci.width = inst.width;
    ci.id.assign(static_cast<std::size_t>(inst.width) * inst.height, -1);
    for (int y = 0; y < inst.height; ++y) {
        for (int x = 0; x < inst.width; ++x) {
            if (cell_walkable(inst.domain, inst.at(x, y))) {
                ci.id[static_cast<std::size_t>(y) * inst.width + x] =
                    static_cast<int>(ci.cells.size());
                ci.cells.emplace_back(x, y);
            }
        }
    }
    return ci;
}

Feature range_feature(const std::string& name, int n) {
    Feature f;
    f.name = name;
    f.values.reserve(n);
    for (int i = 0; i < n; ++i) f.values.push_back(std::to_string(i));
    return f;
}

PenaltyModel penalty_from_lines(const DomainInstance& inst,
                                const std::vector<std::string>& names) {
    PenaltyModel pm;
    pm.beta = {std::vector<double>(names.size(), 0.0)};
    pm.alpha = {1.0};
    for (const auto& line : inst.penalties) {
        const int id = value_id_from_name(inst.domain, line.value);
        pm.beta[0][id] = line.beta;
        pm.alpha[0] = line.alpha;
    }
    return pm;
}

std::vector<int> all_agents(int m) {
    std::vector<int> out(m);
    for (int i = 0; i < m; ++i) out[i] = i;
    return out;
}

// Moves from `cell` in direction a; returns the destination cell id, or the
// origin when the destination is blocked or off the grid.
int step_cell(const DomainInstance& inst, const CellIndex& ci, int cell, int a) {
    const auto [x, y] = ci.cells[cell];
    const int nx = x + kDx[a];
    const int ny = y + kDy[a];
    if (nx < 0 || nx >= inst.width || ny < 0 || ny >= inst.height) return cell;
    const int id = ci.at(nx, ny);
    return id < 0 ? cell : id;
}

World build_salp(const DomainInstance& inst) {
    const CellIndex ci = index_walkable(inst);
    const auto names = dynamic_value_names(inst.domain);
    const int m = inst.num_agents();

    World world;
    world.schema.local.resize(m);
    world.schema.dynamic_global = {
        DynamicFeature{"cargo", names, all_agents(m)}};
    world.penalty = penalty_from_lines(inst, names);
    world.models.resize(m);
    world.factoring.resize(m);

    for (int i = 0; i < m; ++i) {
        const auto assignment = *parse_salp_assignment(inst.agents[i].assignment);
        const char site_glyph = assignment.sample == 1 ? 'A' : 'B';

        AgentTaskModel model;
        const int cells = static_cast<int>(ci.cells.size());
        model.num_states = cells * 3;  // phases: empty, carrying, deposited
        model.num_actions = 4;
        model.start_state = ci.at(inst.agents[i].x, inst.agents[i].y) * 3;
        model.transitions.assign(model.num_states,
                                 std::vector<TransitionRow>(model.num_actions));
        model.task_reward.assign(model.num_states,
                                 std::vector<double>(model.num_actions, 0.0));
        model.terminal.assign(model.num_states, 0);

        AgentFactoring factoring;
        factoring.local_values.resize(model.num_states);
        factoring.dynamic_values.resize(model.num_states);

        for (int c = 0; c < cells; ++c) {
            const auto [x, y] = ci.cells[c];
            const char glyph = inst.at(x, y);
            for (int phase = 0; phase < 3; ++phase) {
                const int s = c * 3 + phase;
                const int sample = phase == 1 ? assignment.sample : 0;
                factoring.local_values[s] = {x, y, phase == 2 ? 1 : 0};
                factoring.dynamic_values[s] = {
                    salp_value_id(sample, glyph == 'C' ? 1 : 0)};

                if (phase == 2) {
                    model.terminal[s] = 1;
                    for (int a = 0; a < 4; ++a) model.transitions[s][a] = {{s, 1.0}};
                    continue;
                }
                for (int a = 0; a < 4; ++a) {
                    const int dest = step_cell(inst, ci, c, a);
                    const char dest_glyph =
                        inst.at(ci.cells[dest].first, ci.cells[dest].second);
                    int next_phase = phase;
                    if (phase == 0 && dest_glyph == site_glyph) next_phase = 1;
                    if (phase == 1 && dest_glyph == 'L') next_phase = 2;
                    model.transitions[s][a] = {{dest * 3 + next_phase, 1.0}};
                    model.task_reward[s][a] =
                        kStepCost + (next_phase == 2 ? kGoalReward : 0.0);
                }
            }
        }
        factoring.build_index();
        model.validate();
        world.models[i] = std::move(model);
        world.factoring[i] = std::move(factoring);
        world.schema.local[i] = {range_feature("x", inst.width),
                                 range_feature("y", inst.height),
                                 Feature{"deposited", {"no", "yes"}}};
    }
    return world;
}

World build_warehouse(const DomainInstance& inst) {
    const CellIndex ci = index_walkable(inst);
    const auto names = dynamic_value_names(inst.domain);
    const auto slots = glyph_cells(inst, 'S');
    const int m = inst.num_agents();

    World world;
    world.schema.local.resize(m);
    world.schema.dynamic_global = {DynamicFeature{"haul", names, all_agents(m)}};
    world.penalty = penalty_from_lines(inst, names);
    world.models.resize(m);
    world.factoring.resize(m);

    for (int i = 0; i < m; ++i) {
        const auto assignment =
            *parse_warehouse_assignment(inst.agents[i].assignment);
        const int slot_cell =
            ci.at(slots[assignment.slot].first, slots[assignment.slot].second);

        AgentTaskModel model;
        const int cells = static_cast<int>(ci.cells.size());
        model.num_states = cells * 4;  // status: init, picked, processed, delivered
        model.num_actions = 4;
        model.start_state = ci.at(inst.agents[i].x, inst.agents[i].y) * 4;
        model.transitions.assign(model.num_states,
                                 std::vector<TransitionRow>(model.num_actions));
        model.task_reward.assign(model.num_states,
                                 std::vector<double>(model.num_actions, 0.0));
        model.terminal.assign(model.num_states, 0);

        AgentFactoring factoring;
        factoring.local_values.resize(model.num_states);
        factoring.dynamic_values.resize(model.num_states);

        for (int c = 0; c < cells; ++c) {
            const auto [x, y] = ci.cells[c];
            const int corridor = inst.at(x, y) == 'N' ? 1 : 0;
            for (int status = 0; status < 4; ++status) {
                const int s = c * 4 + status;
                const int size =
                    (status == 1 || status == 2) ? assignment.size : 0;
                factoring.local_values[s] = {x, y, status == 3 ? 1 : 0};
                factoring.dynamic_values[s] = {
                    warehouse_value_id(size, status, corridor)};

                if (status == 3) {
                    model.terminal[s] = 1;
                    for (int a = 0; a < 4; ++a) model.transitions[s][a] = {{s, 1.0}};
                    continue;
                }
                for (int a = 0; a < 4; ++a) {
                    const int dest = step_cell(inst, ci, c, a);
                    const char dest_glyph =
                        inst.at(ci.cells[dest].first, ci.cells[dest].second);
                    int next_status = status;
                    if (status == 0 && dest == slot_cell) next_status = 1;
                    if (status == 1 && dest_glyph == 'C') next_status = 2;
                    if (status == 2 && dest == slot_cell) next_status = 3;
                    model.transitions[s][a] = {{dest * 4 + next_status, 1.0}};
                    model.task_reward[s][a] =
                        kStepCost + (next_status == 3 ? kGoalReward : 0.0);
                }
            }
        }
        factoring.build_index();
        model.validate();
        world.models[i] = std::move(model);
        world.factoring[i] = std::move(factoring);
        world.schema.local[i] = {range_feature("x", inst.width),
                                 range_feature("y", inst.height),
                                 Feature{"done", {"no", "yes"}}};
    }
    return world;
}

World build_overcooked(const DomainInstance& inst) {
    const CellIndex ci = index_walkable(inst);
    const auto names = dynamic_value_names(inst.domain);
    const int m = inst.num_agents();

    World world;
    world.schema.local.resize(m);
    world.schema.dynamic_global = {DynamicFeature{"carry", names, all_agents(m)}};
    world.penalty = penalty_from_lines(inst, names);
    world.models.resize(m);
    world.factoring.resize(m);

    for (int i = 0; i < m; ++i) {
        const auto role = *parse_overcooked_assignment(inst.agents[i].assignment);
        const bool cook = role != OvercookedRole::clean;
        // Cook phases: empty, ingredient, soup, done. Cleaner phases:
        // empty, garbage, done.
        const int phases = cook ? 4 : 3;
        const int done_phase = phases - 1;
        auto object_of = [&](int phase) {
            if (!cook) return phase == 1 ? 4 : 0;  // garbage or empty-handed
            if (phase == 1) return role == OvercookedRole::tomato ? 1 : 2;
            if (phase == 2) return 3;  // soup
            return 0;
        };

        AgentTaskModel model;
        const int cells = static_cast<int>(ci.cells.size());
        model.num_states = cells * 4 * phases;
        model.num_actions = 5;  // four moves plus interact
        model.start_state =
            (ci.at(inst.agents[i].x, inst.agents[i].y) * 4 + 0) * phases;
        model.transitions.assign(model.num_states,
                                 std::vector<TransitionRow>(model.num_actions));
        model.task_reward.assign(model.num_states,
                                 std::vector<double>(model.num_actions, 0.0));
        model.terminal.assign(model.num_states, 0);

        AgentFactoring factoring;
        factoring.local_values.resize(model.num_states);
        factoring.dynamic_values.resize(model.num_states);

        auto state_id = [&](int cell, int dir, int phase) {
            return (cell * 4 + dir) * phases + phase;
        };

        for (int c = 0; c < cells; ++c) {
            const auto [x, y] = ci.cells[c];
            const int bin = inst.at(x, y) == 'G' ? 1 : 0;
            for (int dir = 0; dir < 4; ++dir) {
                // The faced cell drives interactions; stations block
                // movement, so facing one never moves the agent.
                const int fx = x + kDx[dir];
                const int fy = y + kDy[dir];
                const char faced = (fx >= 0 && fx < inst.width && fy >= 0 &&
                                    fy < inst.height)
                                       ? inst.at(fx, fy)
                                       : '#';
                for (int phase = 0; phase < phases; ++phase) {
                    const int s = state_id(c, dir, phase);
                    factoring.local_values[s] = {x, y, dir,
                                                 phase == done_phase ? 1 : 0};
                    factoring.dynamic_values[s] = {
                        overcooked_value_id(object_of(phase), bin)};

                    if (phase == done_phase) {
                        model.terminal[s] = 1;
                        for (int a = 0; a < 5; ++a) {
                            model.transitions[s][a] = {{s, 1.0}};
                        }
                        continue;
                    }
                    for (int a = 0; a < 4; ++a) {
                        const int dest = step_cell(inst, ci, c, a);
                        model.transitions[s][a] = {{state_id(dest, a, phase), 1.0}};
                        model.task_reward[s][a] = kStepCost;
                    }
                    // Interact resolves against the faced cell.
                    int next_phase = phase;
                    if (cook) {
                        const char station =
                            role == OvercookedRole::tomato ? 'T' : 'O';
                        if (phase == 0 && faced == station) next_phase = 1;
                        if (phase == 1 && faced == 'P') next_phase = 2;
                        if (phase == 2 && faced == 'S') next_phase = 3;
                    } else {
                        if (phase == 0 && faced == 'D') next_phase = 1;
                        if (phase == 1 && faced == 'G') next_phase = 2;
                    }
                    model.transitions[s][4] = {{state_id(c, dir, next_phase), 1.0}};
                    model.task_reward[s][4] =
                        kStepCost +
                        (next_phase == done_phase ? kGoalReward : 0.0);
                }
            }
        }
        factoring.build_index();
        model.validate();
        world.models[i] = std::move(model);
        world.factoring[i] = std::move(factoring);
        world.schema.local[i] = {
            range_feature("x", inst.width), range_feature("y", inst.height),
            Feature{"dir", {"up", "right", "down", "left"}},
            Feature{"done", {"no", "yes"}}};
    }
    return world;
}

}  // namespace

World build_models(const DomainInstance& instance) {
    check_instance(instance);
    World world;
    switch (instance.domain) {
        case Domain::salp: world = build_salp(instance); break;
        case Domain::warehouse: world = build_warehouse(instance); break;
        case Domain::overcooked: world = build_overcooked(instance); break;
    }
    world.schema.validate();
    world.penalty.validate(world.schema);

    for (int i = 0; i < world.num_agents(); ++i) {
        const auto& flags = world.reachable(i);
        bool goal_ok = false;
        for (int s = 0; s < world.models[i].num_states && !goal_ok; ++s) {
            goal_ok = world.models[i].terminal[s] && flags[s];
        }
        if (!goal_ok) {
            throw InputError("unreachable goal for agent " + std::to_string(i));
        }
    }
    return world;
}

namespace {

// ---------------------------------------------------------------------------
// Seeded generation.

std::vector<int> pick_distinct(std::mt19937_64& rng, int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int j = 0; j < k; ++j) {
        std::uniform_int_distribution<int> pick(j, n - 1);
        std::swap(pool[j], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
}

void sprinkle(std::mt19937_64& rng, std::vector<std::string>& grid, char glyph,
              double density) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& row : grid) {
        for (auto& cell : row) {
            if (cell == '.' && u(rng) < density) cell = glyph;
        }
    }
}

std::vector<std::pair<int, int>> open_cells(const std::vector<std::string>& grid) {
    std::vector<std::pair<int, int>> cells;
    for (int y = 0; y < static_cast<int>(grid.size()); ++y) {
        for (int x = 0; x < static_cast<int>(grid[y].size()); ++x) {
            if (grid[y][x] == '.') cells.emplace_back(x, y);
        }
    }
    return cells;
}

std::optional<DomainInstance> draw_instance(Domain domain, int width, int height,
                                            int num_agents, std::uint64_t seed,
                                            const GenOptions& options,
                                            std::mt19937_64& rng) {
    DomainInstance inst;
    inst.domain = domain;
    inst.width = width;
    inst.height = height;
    inst.seed = seed;
    inst.grid.assign(height, std::string(width, '.'));
    sprinkle(rng, inst.grid, '#', options.wall_density);

    const std::string feature = dynamic_feature_name(domain);
    auto place = [&](const std::vector<std::pair<int, int>>& cells, int index,
                     char glyph) {
        inst.grid[cells[index].second][cells[index].first] = glyph;
    };

    switch (domain) {
        case Domain::salp: {
            const auto floor = open_cells(inst.grid);
            const int sites_a = 2;
            const int sites_b = num_agents > 1 ? 2 : 0;
            const int wanted = 1 + sites_a + sites_b + num_agents;
            if (static_cast<int>(floor.size()) < wanted) return std::nullopt;
            const auto picks =
                pick_distinct(rng, static_cast<int>(floor.size()), wanted);
            int at = 0;
            place(floor, picks[at++], 'L');
            for (int k = 0; k < sites_a; ++k) place(floor, picks[at++], 'A');
            for (int k = 0; k < sites_b; ++k) place(floor, picks[at++], 'B');
            for (int i = 0; i < num_agents; ++i) {
                const auto [x, y] = floor[picks[at++]];
                inst.agents.push_back({i, x, y, i % 2 == 0 ? "A" : "B"});
            }
            sprinkle(rng, inst.grid, 'C', options.hazard_density);
            inst.penalties = {{feature, "A+coral", 5.0, 1.0},
                              {feature, "B+coral", 5.0, 1.0}};
            break;
        }
        case Domain::warehouse: {
            const auto floor = open_cells(inst.grid);
            const int num_slots = std::min(num_agents, 6);
            const int wanted = num_slots + 2 + num_agents;
            if (static_cast<int>(floor.size()) < wanted) return std::nullopt;
            const auto picks =
                pick_distinct(rng, static_cast<int>(floor.size()), wanted);
            int at = 0;
            for (int k = 0; k < num_slots; ++k) place(floor, picks[at++], 'S');
            place(floor, picks[at++], 'C');
            place(floor, picks[at++], 'C');
            for (int i = 0; i < num_agents; ++i) {
                const auto [x, y] = floor[picks[at++]];
                inst.agents.push_back(
                    {i, x, y,
                     std::string(i % 2 == 0 ? "big" : "small") + ":" +
                         std::to_string(i % num_slots)});
            }
            sprinkle(rng, inst.grid, 'N', options.hazard_density);
            inst.penalties = {{feature, "big+picked+corridor", 10.0, 1.0},
                              {feature, "big+processed+corridor", 10.0, 1.0},
                              {feature, "small+picked+corridor", 2.0, 1.0},
                              {feature, "small+processed+corridor", 2.0, 1.0}};
            break;
        }
        case Domain::overcooked: {
            const auto floor = open_cells(inst.grid);
            const int wanted = 5 + num_agents;
            if (static_cast<int>(floor.size()) < wanted) return std::nullopt;
            const auto picks =
                pick_distinct(rng, static_cast<int>(floor.size()), wanted);
            int at = 0;
            for (char station : {'T', 'O', 'P', 'S', 'D'}) {
                place(floor, picks[at++], station);
            }
            const int cleaners = num_agents * 20 / 100;
            const int cooks = num_agents - cleaners;
            for (int i = 0; i < num_agents; ++i) {
                const auto [x, y] = floor[picks[at++]];
                std::string role;
                if (i < cooks) {
                    role = i % 2 == 0 ? "tomato" : "onion";
                } else {
                    role = "clean";
                }
                inst.agents.push_back({i, x, y, role});
            }
            sprinkle(rng, inst.grid, 'G', options.hazard_density);
            inst.penalties = {{feature, "tomato+bin", 3.0, 1.0},
                              {feature, "onion+bin", 3.0, 1.0},
                              {feature, "soup+bin", 3.0, 1.0}};
            break;
        }
    }
    return inst;
}

std::vector<Policy> naive_policies(const World& world) {
    std::vector<Policy> policies;
    policies.reserve(world.num_agents());
    for (const auto& model : world.models) {
        policies.push_back(
            greedy_policy(model, value_iteration(model, model.task_reward,
                                                 kSolveTolerance)));
    }
    return policies;
}

// The generated instance is accepted only when the naive policies provably
// incur a penalty, every agent can individually reach zero penalty at zero
// task slack, and one blame-and-replan round over all agents eliminates
// the penalty entirely.
bool avoidable_ok(const World& world, int width, int height, std::uint64_t seed) {
    const int horizon = 4 * (width + height);
    const int episodes = 2;

    const auto naive = naive_policies(world);
    const auto naive_report = rollout_joint(naive, world, horizon, episodes, seed);
    if (naive_report.penalty_per_episode <= 1e-9) return false;

    for (int i = 0; i < world.num_agents(); ++i) {
        const AgentTaskModel& model = world.models[i];
        std::vector<double> solo(model.num_states, 0.0);
        for (int s = 0; s < model.num_states; ++s) {
            solo[s] = solo_penalty(world, i, s);
        }
        LexicographicProblem problem;
        problem.base = &model;
        problem.rewards = {model.task_reward,
                           state_penalty_reward(solo, model.num_actions)};
        problem.slack = {0.0};
        const auto sol =
            lexicographic_value_iteration_detailed(problem, kSolveTolerance);
        if (sol.secondary_table.values[model.start_state] < -1e-9) return false;
    }

    ReconParams params;
    params.horizon = horizon;
    params.episodes = episodes;
    params.seed = seed;
    const auto recon = run_recon(world, naive, params);
    if (!recon.triggered) return false;

    std::vector<Policy> updated(world.num_agents());
    for (int i = 0; i < world.num_agents(); ++i) {
        const AgentTaskModel& model = world.models[i];
        LexicographicProblem problem;
        problem.base = &model;
        problem.rewards = {
            model.task_reward,
            state_penalty_reward(recon.local_penalty[i], model.num_actions)};
        problem.slack = {0.0};
        updated[i] = lexicographic_value_iteration(problem, kSolveTolerance);
    }
    const auto post = rollout_joint(updated, world, horizon, episodes, seed);
    return post.penalty_per_episode <= 1e-9;
}

}  // namespace

DomainInstance generate_instance(Domain domain, int width, int height,
                                 int num_agents, std::uint64_t seed,
                                 const GenOptions& options) {
    if (width < 3 || height < 3) {
        throw InputError("generated grids must be at least 3x3");
    }
    if (num_agents < 1) throw InputError("need at least one agent");

    std::mt19937_64 rng(
        mix_seed(seed, static_cast<std::uint64_t>(domain) + 101));
    for (int attempt = 0; attempt < options.max_retries; ++attempt) {
        auto inst =
            draw_instance(domain, width, height, num_agents, seed, options, rng);
        if (!inst) continue;
        World world;
        try {
            world = build_models(*inst);
        } catch (const InputError&) {
            continue;  // unreachable goal; redraw
        } catch (const ModelError&) {
            continue;
        }
        if (!options.ensure_avoidable) return *inst;
        if (avoidable_ok(world, width, height, seed)) return *inst;
    }
    throw ModelError("instance generation failed after " +
                     std::to_string(options.max_retries) + " attempts");
}

}  // namespace recon
