#pragma once

// Evaluation layer: a JSON-configured test roster drives type-I error
// profiles, power tables, pairwise power comparisons, and case-study p-value
// reports. All CSV/SVG output is deterministic byte-for-byte; expensive
// knapsack solves are cached under a content hash of everything that defines
// them.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "exact2x2/boundary.hpp"
#include "exact2x2/classical.hpp"
#include "exact2x2/ilp.hpp"
#include "exact2x2/knapsack.hpp"
#include "exact2x2/power.hpp"
#include "exact2x2/prob.hpp"
#include "exact2x2/sample_space.hpp"
#include "exact2x2/util.hpp"

namespace exact2x2 {

// Thrown when a knapsack solve stops on a node or time limit; the CLI maps
// this to its resource-limit exit code.
struct SolverLimitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Relation { uniformly_le, uniformly_ge, equal, fraction };

inline const char* relation_name(Relation r) {
    switch (r) {
        case Relation::uniformly_le: return "uniformly_le";
        case Relation::uniformly_ge: return "uniformly_ge";
        case Relation::equal: return "equal";
        case Relation::fraction: return "fraction";
    }
    throw std::logic_error("relation_name: unknown relation");
}

// Pairwise power summary over the strict-alternative comparison grid. The
// fraction is the share of grid points where the row test strictly beats the
// column test; the average difference uses the closed-form coefficients, not
// grid integration.
struct ComparisonCell {
    Relation relation = Relation::equal;
    double fraction = 0.0;
    double avg_power_diff = 0.0;
};

// One test in the evaluation roster. Classical entries are defined by a
// p-value function evaluated at the configured level; knapsack entries carry
// their objective parameters.
struct RosterEntry {
    enum class Kind {
        fisher,        // conditional exact tail
        midp,          // mid-p tail at the nominal level (not exact)
        bb_midp,       // Berger-Boos mid-p
        bb_zpooled,    // Berger-Boos Z-pooled
        bb_zunpooled,  // Berger-Boos Z-unpooled
        ux_fisher,     // unconditional exact tail of the Fisher p-value
        ux_midp,
        ux_zpooled,
        ux_zunpooled,
        est_zpooled,  // critical value at the estimated common rate
        est_srlr,
        apk,  // knapsack kinds from here on
        wapk,
        mpk,
        mpk2,
        shk,
    };

    std::string label;
    Kind kind = Kind::fisher;
    BetaPrior prior;                   // wapk
    std::optional<double> shift;       // mpk/mpk2: fixed alternative shift
    bool shift_from_observed = false;  // mpk/mpk2: derive the shift from the observed rates
    double cp_level = 0.95;            // mpk2 confidence level
    int alt_count = 100;               // mpk/mpk2 alternative count
    std::optional<Theta> point;        // shk alternative; defaults to the observed rates

    bool knapsack() const { return kind >= Kind::apk; }

    static RosterEntry canned(const std::string& name) {
        static const std::map<std::string, Kind> kinds = {
            {"FE", Kind::fisher},           {"FMP", Kind::midp},
            {"FMP*", Kind::bb_midp},        {"Z*_P", Kind::bb_zpooled},
            {"Z*_U", Kind::bb_zunpooled},   {"B", Kind::ux_fisher},
            {"UX-FMP", Kind::ux_midp},      {"UX-ZP", Kind::ux_zpooled},
            {"UX-ZU", Kind::ux_zunpooled},  {"E-ZP", Kind::est_zpooled},
            {"E-SRLR", Kind::est_srlr},     {"APK", Kind::apk},
            {"WAPK", Kind::wapk},           {"MPK", Kind::mpk},
            {"MPK2", Kind::mpk2},           {"SHK", Kind::shk},
        };
        const auto it = kinds.find(name);
        if (it == kinds.end()) throw std::invalid_argument("unknown test name: " + name);
        RosterEntry e;
        e.label = name;
        e.kind = it->second;
        return e;
    }
};

inline const char* method_name(RosterEntry::Kind k) {
    using K = RosterEntry::Kind;
    switch (k) {
        case K::fisher: return "conditional-exact";
        case K::midp: return "mid-p";
        case K::bb_midp:
        case K::bb_zpooled:
        case K::bb_zunpooled: return "berger-boos";
        case K::ux_fisher:
        case K::ux_midp:
        case K::ux_zpooled:
        case K::ux_zunpooled: return "unconditional-exact";
        case K::est_zpooled:
        case K::est_srlr: return "estimated-rate";
        case K::apk:
        case K::wapk:
        case K::mpk:
        case K::mpk2:
        case K::shk: return "knapsack-ladder";
    }
    throw std::logic_error("method_name: unknown kind");
}

struct PowerRow {
    Design design;
    Theta theta;
};

struct EvalConfig {
    Design design{10, 10};
    double alpha = 0.025;
    double gamma = 0.0005;  // Berger-Boos confidence spend
    BoundaryFn boundary = BoundaryFn::identity();
    int grid_points = 1001;     // type-I constraint grid size
    double theta_step = 0.001;  // profile evaluation step
    double abs_tol = 2.5e-4;    // knapsack solver tolerance
    SolveLimits limits;
    std::vector<RosterEntry> tests;
    std::vector<PowerRow> rows;  // power-table rows
    std::optional<Outcome> observed;
    std::vector<double> levels;    // p-value ladder; empty = published default
    bool compute_missing = false;  // case study: solve ladders on cache miss
    std::string cache_dir = "cache";
    std::string output;  // CSV path; empty = stdout
    std::string svg;     // optional profile plot path

    void validate() const {
        if (design.n_C < 1 || design.n_D < 1)
            throw std::invalid_argument("config: both arms need n >= 1");
        if (!(alpha > 0.0) || !(alpha < 1.0)) throw std::invalid_argument("config: alpha out of (0,1)");
        if (!(gamma > 0.0) || !(gamma < 0.5)) throw std::invalid_argument("config: gamma out of (0,0.5)");
        if (grid_points < 2) throw std::invalid_argument("config: grid_points must be at least 2");
        if (!(theta_step > 0.0) || theta_step > 1.0)
            throw std::invalid_argument("config: theta_step out of (0,1]");
        if (!(abs_tol > 0.0)) throw std::invalid_argument("config: abs_tol must be positive");
        if (limits.max_nodes < 1) throw std::invalid_argument("config: limits.max_nodes must be positive");
        if (limits.wall_time_sec < 0.0)
            throw std::invalid_argument("config: limits.wall_time_sec must be >= 0");
        std::set<std::string> seen;
        for (const RosterEntry& e : tests) {
            if (e.label.empty()) throw std::invalid_argument("config: test label must not be empty");
            if (e.label.find_first_of(",|\"\n") != std::string::npos)
                throw std::invalid_argument("config: test label " + e.label + " contains a CSV delimiter");
            if (!seen.insert(e.label).second)
                throw std::invalid_argument("config: duplicate test label " + e.label);
            e.prior.validate();
            if (e.shift && (!(*e.shift > 0.0) || !(*e.shift < 1.0)))
                throw std::invalid_argument("config: " + e.label + " shift out of (0,1)");
            if (!(e.cp_level > 0.0) || !(e.cp_level < 1.0))
                throw std::invalid_argument("config: " + e.label + " cp_level out of (0,1)");
            if (e.alt_count < 1)
                throw std::invalid_argument("config: " + e.label + " needs a positive alternative count");
            if (e.point && (e.point->theta_C < 0.0 || e.point->theta_C > 1.0 || e.point->theta_D < 0.0 ||
                            e.point->theta_D > 1.0))
                throw std::invalid_argument("config: " + e.label + " point outside the unit square");
        }
        for (const PowerRow& r : rows) {
            if (r.design.n_C < 1 || r.design.n_D < 1)
                throw std::invalid_argument("config: power row design needs n >= 1 in both arms");
            if (r.theta.theta_C < 0.0 || r.theta.theta_C > 1.0 || r.theta.theta_D < 0.0 ||
                r.theta.theta_D > 1.0)
                throw std::invalid_argument("config: power row theta outside the unit square");
        }
        if (observed && (observed->s_C < 0 || observed->s_C > design.n_C || observed->s_D < 0 ||
                         observed->s_D > design.n_D))
            throw std::invalid_argument("config: observed outcome out of range for the design");
        for (double lv : levels)
            if (!(lv > 0.0) || lv > 1.0) throw std::invalid_argument("config: levels must lie in (0,1]");
    }
};

// --- JSON config parsing (schema-checked: unknown fields are errors) ---

namespace detail {

inline void check_keys(const nlohmann::json& j, const char* what,
                       std::initializer_list<const char*> allowed) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw std::invalid_argument(std::string("config: unknown ") + what + " field \"" +
                                        item.key() + "\"");
    }
}

inline Design design_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
        throw std::invalid_argument(std::string("config: ") + what + " must be [n_C, n_D]");
    return Design{j[0].get<int>(), j[1].get<int>()};
}

inline Outcome outcome_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
        throw std::invalid_argument(std::string("config: ") + what + " must be [s_C, s_D]");
    return Outcome{j[0].get<int>(), j[1].get<int>()};
}

inline Theta theta_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw std::invalid_argument(std::string("config: ") + what + " must be [theta_C, theta_D]");
    return Theta{j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

inline RosterEntry roster_entry_from_json(const nlohmann::json& j) {
    if (j.is_string()) return RosterEntry::canned(j.get<std::string>());
    if (!j.is_object())
        throw std::invalid_argument("config: test entries must be names or objects");
    detail::check_keys(j, "test", {"label", "kind", "prior", "shift", "cp_level", "count", "point"});
    if (!j.contains("kind")) throw std::invalid_argument("config: test object needs a kind");
    RosterEntry e = RosterEntry::canned(j.at("kind").get<std::string>());
    if (j.contains("label")) e.label = j.at("label").get<std::string>();
    if (j.contains("prior")) {
        const auto& p = j.at("prior");
        if (!p.is_array() || p.size() != 4)
            throw std::invalid_argument("config: prior must be [alpha_C, beta_C, alpha_D, beta_D]");
        e.prior = BetaPrior{p[0].get<int>(), p[1].get<int>(), p[2].get<int>(), p[3].get<int>()};
    }
    if (j.contains("shift")) {
        const auto& s = j.at("shift");
        if (s.is_string() && s.get<std::string>() == "observed")
            e.shift_from_observed = true;
        else if (s.is_number())
            e.shift = s.get<double>();
        else
            throw std::invalid_argument("config: shift must be a number or \"observed\"");
    }
    if (j.contains("cp_level")) e.cp_level = j.at("cp_level").get<double>();
    if (j.contains("count")) e.alt_count = j.at("count").get<int>();
    if (j.contains("point")) e.point = detail::theta_from(j.at("point"), "test point");
    return e;
}

inline EvalConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    detail::check_keys(j, "config",
                       {"design", "alpha", "gamma", "boundary", "grid_points", "theta_step", "abs_tol",
                        "limits", "tests", "power_rows", "observed", "levels", "compute_missing",
                        "cache_dir", "output", "svg"});
    EvalConfig cfg;
    if (j.contains("design")) cfg.design = detail::design_from(j.at("design"), "design");
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
    if (j.contains("boundary")) {
        const auto& b = j.at("boundary");
        detail::check_keys(b, "boundary", {"kind", "delta"});
        const std::string kind = b.value("kind", "identity");
        if (kind == "identity")
            cfg.boundary = BoundaryFn::identity();
        else if (kind == "margin") {
            if (!b.contains("delta"))
                throw std::invalid_argument("config: margin boundary needs a delta");
            cfg.boundary = BoundaryFn::margin(b.at("delta").get<double>());
        } else
            throw std::invalid_argument("config: boundary kind must be identity or margin");
    }
    if (j.contains("grid_points")) cfg.grid_points = j.at("grid_points").get<int>();
    if (j.contains("theta_step")) cfg.theta_step = j.at("theta_step").get<double>();
    if (j.contains("abs_tol")) cfg.abs_tol = j.at("abs_tol").get<double>();
    if (j.contains("limits")) {
        const auto& l = j.at("limits");
        detail::check_keys(l, "limits", {"max_nodes", "wall_time_sec"});
        if (l.contains("max_nodes")) cfg.limits.max_nodes = l.at("max_nodes").get<long long>();
        if (l.contains("wall_time_sec")) cfg.limits.wall_time_sec = l.at("wall_time_sec").get<double>();
    }
    if (j.contains("tests")) {
        if (!j.at("tests").is_array()) throw std::invalid_argument("config: tests must be an array");
        for (const auto& t : j.at("tests")) cfg.tests.push_back(roster_entry_from_json(t));
    }
    if (j.contains("power_rows")) {
        if (!j.at("power_rows").is_array())
            throw std::invalid_argument("config: power_rows must be an array");
        for (const auto& r : j.at("power_rows")) {
            if (!r.is_object()) throw std::invalid_argument("config: power rows must be objects");
            detail::check_keys(r, "power row", {"design", "theta"});
            PowerRow row;
            row.design = r.contains("design") ? detail::design_from(r.at("design"), "power row design")
                                              : cfg.design;
            if (!r.contains("theta")) throw std::invalid_argument("config: power row needs a theta");
            row.theta = detail::theta_from(r.at("theta"), "power row theta");
            cfg.rows.push_back(row);
        }
    }
    if (j.contains("observed")) cfg.observed = detail::outcome_from(j.at("observed"), "observed");
    if (j.contains("levels")) {
        if (!j.at("levels").is_array()) throw std::invalid_argument("config: levels must be an array");
        for (const auto& lv : j.at("levels")) cfg.levels.push_back(lv.get<double>());
    }
    if (j.contains("compute_missing")) cfg.compute_missing = j.at("compute_missing").get<bool>();
    if (j.contains("cache_dir")) cfg.cache_dir = j.at("cache_dir").get<std::string>();
    if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
    if (j.contains("svg")) cfg.svg = j.at("svg").get<std::string>();
    cfg.validate();
    return cfg;
}

inline EvalConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: invalid JSON in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// --- Roster entry -> concrete test ---

namespace detail {

inline double resolved_shift(const EvalConfig& cfg, const Design& d, const RosterEntry& e,
                             bool default_from_observed) {
    double shift = 0.0;
    if (e.shift) {
        shift = *e.shift;
    } else if (e.shift_from_observed || default_from_observed) {
        if (!cfg.observed)
            throw std::invalid_argument(e.label +
                                        ": an observed outcome is required to derive the shift");
        if (cfg.observed->s_C < 0 || cfg.observed->s_C > d.n_C || cfg.observed->s_D < 0 ||
            cfg.observed->s_D > d.n_D)
            throw std::invalid_argument(e.label + ": observed outcome out of range for the design");
        shift = double(cfg.observed->s_D) / d.n_D - double(cfg.observed->s_C) / d.n_C;
        if (!(shift > 0.0))
            throw std::invalid_argument(
                e.label + ": observed rate difference is not positive; set an explicit shift");
    } else {
        shift = default_maximin_shift(d);
    }
    if (cfg.boundary.kind == BoundaryFn::Kind::margin && !(shift > cfg.boundary.delta))
        throw std::invalid_argument(e.label + ": alternative shift must exceed the margin delta");
    return shift;
}

}  // namespace detail

inline KnapsackTestSpec knapsack_spec(const EvalConfig& cfg, const RosterEntry& e) {
    if (!e.knapsack()) throw std::logic_error("knapsack_spec: " + e.label + " is not a knapsack test");
    if (cfg.boundary.kind == BoundaryFn::Kind::custom)
        throw std::invalid_argument("knapsack tests support identity and margin boundaries only");
    KnapsackTestSpec spec;
    spec.design = cfg.design;
    spec.boundary = cfg.boundary;
    spec.grid = NullGrid::with_step(cfg.boundary, cfg.boundary.domain_hi() / (cfg.grid_points - 1));
    spec.alpha = cfg.alpha;
    const bool margin = cfg.boundary.kind == BoundaryFn::Kind::margin;
    switch (e.kind) {
        case RosterEntry::Kind::apk:
            spec.objective =
                margin ? ObjectiveSpec::margin_average(cfg.boundary.delta) : ObjectiveSpec::average();
            break;
        case RosterEntry::Kind::wapk:
            if (margin)
                throw std::invalid_argument(e.label +
                                            ": the weighted average is defined for the identity boundary");
            spec.objective = ObjectiveSpec::weighted_average(e.prior);
            break;
        case RosterEntry::Kind::mpk: {
            const double shift = detail::resolved_shift(cfg, spec.design, e, false);
            spec.objective = ObjectiveSpec::maximin(
                mpk_default_alternatives(spec.design, shift, e.alt_count));
            break;
        }
        case RosterEntry::Kind::mpk2: {
            if (!cfg.observed)
                throw std::invalid_argument(e.label + ": requires the observed outcome");
            const double shift = detail::resolved_shift(cfg, spec.design, e, true);
            spec.objective = ObjectiveSpec::maximin(
                mpk2_alternatives(spec.design, *cfg.observed, shift, e.cp_level, e.alt_count));
            break;
        }
        case RosterEntry::Kind::shk: {
            Theta pt;
            if (e.point) {
                pt = *e.point;
            } else {
                if (!cfg.observed)
                    throw std::invalid_argument(e.label + ": needs a point or the observed outcome");
                pt = Theta{double(cfg.observed->s_C) / spec.design.n_C,
                           double(cfg.observed->s_D) / spec.design.n_D};
            }
            spec.objective = ObjectiveSpec::maximin({pt});
            break;
        }
        default: throw std::logic_error("knapsack_spec: unreachable");
    }
    spec.validate();
    return spec;
}

// p-value function for a classical roster entry at the configured boundary.
inline std::function<double(const Outcome&)> pvalue_fn(const EvalConfig& cfg, const RosterEntry& e) {
    const Design d = cfg.design;
    const BoundaryFn b = cfg.boundary;
    const double delta = b.kind == BoundaryFn::Kind::margin ? b.delta : 0.0;
    const double gamma = cfg.gamma;
    const auto bb = [=](StatKind kind) {
        return [=](const Outcome& s) { return berger_boos_p(kind, d, s, gamma, b, delta).p_value; };
    };
    const auto ux = [=](StatKind kind) {
        return [=](const Outcome& s) {
            return uncond_exact_p(kind, d, s, std::nullopt, b, delta).p_value;
        };
    };
    using K = RosterEntry::Kind;
    switch (e.kind) {
        case K::fisher: return [d](const Outcome& s) { return fisher_p(d, s); };
        case K::midp: return [d](const Outcome& s) { return fisher_midp(d, s); };
        case K::bb_midp: return bb(StatKind::fisher_midp);
        case K::bb_zpooled: return bb(StatKind::z_pooled);
        case K::bb_zunpooled: return bb(StatKind::z_unpooled);
        case K::ux_fisher: return ux(StatKind::fisher_p);
        case K::ux_midp: return ux(StatKind::fisher_midp);
        case K::ux_zpooled: return ux(StatKind::z_pooled);
        case K::ux_zunpooled: return ux(StatKind::z_unpooled);
        case K::est_zpooled:
            return [d](const Outcome& s) { return estimated_p(StatKind::z_pooled, d, s); };
        case K::est_srlr:
            return [d](const Outcome& s) { return estimated_p(StatKind::srlr, d, s); };
        default: throw std::logic_error("pvalue_fn: knapsack tests have no closed p-value function");
    }
}

// --- Region cache: CSV + manifest keyed by the spec content hash and tolerance ---

namespace detail {

inline std::string region_key(const KnapsackTestSpec& spec, double abs_tol) {
    char tmp[48];
    std::snprintf(tmp, sizeof tmp, ";tol=%.17g", abs_tol);
    return hex64(fnv1a64(cache_key(spec) + tmp));
}

}  // namespace detail

inline void save_region(const KnapsackTestSpec& spec, const SolveResult& res, double abs_tol,
                        const std::string& dir) {
    if (dir.empty() || res.status != SolveStatus::optimal_within_tol) return;
    std::filesystem::create_directories(dir);
    const std::string key = detail::region_key(spec, abs_tol);
    write_region_csv(SampleSpace(spec.design), res.decision, dir + "/" + key + "_region.csv");
    nlohmann::json j{{"key", key},
                     {"design", {spec.design.n_C, spec.design.n_D}},
                     {"boundary", detail::boundary_tag(spec.boundary)},
                     {"objective", detail::objective_tag(spec.objective)},
                     {"alpha", spec.alpha},
                     {"abs_tol", abs_tol},
                     {"objective_value", res.objective_value},
                     {"best_bound", res.best_bound},
                     {"abs_gap", res.abs_gap},
                     {"status", "optimal_within_tol"}};
    std::ofstream f(dir + "/" + key + "_region.json");
    if (!f) throw std::runtime_error("region cache: cannot write manifest in " + dir);
    f << j.dump(2) << '\n';
}

inline std::optional<SolveResult> load_region(const KnapsackTestSpec& spec, double abs_tol,
                                              const std::string& dir) {
    if (dir.empty()) return std::nullopt;
    const std::string key = detail::region_key(spec, abs_tol);
    std::ifstream mf(dir + "/" + key + "_region.json");
    if (!mf) return std::nullopt;
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;  // corrupt manifest: treat as a miss and recompute
    }
    if (j.value("key", "") != key || j.value("status", "") != "optimal_within_tol")
        return std::nullopt;
    std::ifstream rf(dir + "/" + key + "_region.csv");
    if (!rf) return std::nullopt;
    SolveResult res;
    res.decision = read_region_csv(SampleSpace(spec.design), rf);
    res.objective_value = j.at("objective_value").get<double>();
    res.best_bound = j.at("best_bound").get<double>();
    res.abs_gap = j.at("abs_gap").get<double>();
    res.status = SolveStatus::optimal_within_tol;
    return res;
}

struct RegionInfo {
    std::string label;
    DecisionVector region;
    std::optional<SolveResult> solve;  // knapsack entries only
    bool from_cache = false;
};

inline RegionInfo region_for(const EvalConfig& cfg, const RosterEntry& e) {
    SampleSpace space(cfg.design);
    RegionInfo out;
    out.label = e.label;
    if (!e.knapsack()) {
        out.region = region_from_test(space, pvalue_fn(cfg, e), cfg.alpha).region;
        return out;
    }
    const KnapsackTestSpec spec = knapsack_spec(cfg, e);
    if (auto cached = load_region(spec, cfg.abs_tol, cfg.cache_dir)) {
        out.region = cached->decision;
        out.solve = std::move(cached);
        out.from_cache = true;
        return out;
    }
    SolveResult res = construct(spec, cfg.abs_tol, std::nullopt, std::nullopt, cfg.limits);
    if (res.status == SolveStatus::node_limit || res.status == SolveStatus::time_limit)
        throw SolverLimitError(e.label +
                               ": solver stopped at its resource limit before reaching tolerance; "
                               "raise limits.max_nodes / limits.wall_time_sec, or construct the "
                               "region elsewhere and stage it into the cache directory");
    if (res.status != SolveStatus::optimal_within_tol)
        throw std::runtime_error(e.label + ": solver reported an infeasible model");
    save_region(spec, res, cfg.abs_tol, cfg.cache_dir);
    out.region = res.decision;
    out.solve = std::move(res);
    return out;
}

// --- Deterministic parallel map: each index writes only its own slot ---

namespace detail {

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned hw = std::thread::hardware_concurrency();
    const std::size_t workers = std::min<std::size_t>(hw == 0 ? 1 : hw, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr first;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first) first = std::current_exception();
                }
            }
        });
    for (std::thread& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

}  // namespace detail

// --- Type-I error profiles along the null boundary ---

struct ProfileData {
    std::vector<std::string> labels;
    std::vector<double> thetas;
    std::vector<std::vector<double>> rates;  // [test][theta]
};

inline ProfileData profile_data(const EvalConfig& cfg) {
    ProfileData out;
    const double hi = cfg.boundary.domain_hi();
    for (int j = 0;; ++j) {
        const double t = j * cfg.theta_step;
        if (t >= hi - 0.5 * cfg.theta_step) break;
        out.thetas.push_back(t);
    }
    out.thetas.push_back(hi);
    SampleSpace space(cfg.design);
    std::vector<RegionInfo> regions;
    regions.reserve(cfg.tests.size());
    for (const RosterEntry& e : cfg.tests) regions.push_back(region_for(cfg, e));
    out.rates.assign(regions.size(), std::vector<double>(out.thetas.size(), 0.0));
    for (std::size_t i = 0; i < regions.size(); ++i) {
        out.labels.push_back(regions[i].label);
        const DecisionVector& d = regions[i].region;
        detail::parallel_for(out.thetas.size(), [&](std::size_t k) {
            const double t = out.thetas[k];
            out.rates[i][k] = rejection_rate(space, d, Theta{t, cfg.boundary.g0(t)});
        });
    }
    return out;
}

inline void write_profile_csv(const ProfileData& data, std::ostream& os) {
    os << "theta_C";
    for (const std::string& label : data.labels) os << ',' << label;
    os << '\n';
    if (data.labels.empty()) return;  // header-only contract for an empty roster
    for (std::size_t k = 0; k < data.thetas.size(); ++k) {
        os << format_double(data.thetas[k]);
        for (const auto& col : data.rates) os << ',' << format_double(col[k]);
        os << '\n';
    }
}

inline void profile_type1(const EvalConfig& cfg, std::ostream& os) {
    write_profile_csv(profile_data(cfg), os);
}

// Minimal hand-rolled SVG line plot: the profiles as polylines plus a dashed
// line at the significance level. Coordinates are fixed to two decimals so the
// output is byte-stable.
inline std::string profile_svg(const EvalConfig& cfg, const ProfileData& data) {
    const double W = 720.0, H = 480.0, L = 70.0, R = 150.0, T = 20.0, B = 50.0;
    const double pw = W - L - R, ph = H - T - B;
    const double x_hi = cfg.boundary.domain_hi();
    double y_hi = 1.25 * cfg.alpha;
    for (const auto& col : data.rates)
        for (double v : col) y_hi = std::max(y_hi, 1.05 * v);
    const auto X = [&](double t) { return L + pw * (t / x_hi); };
    const auto Y = [&](double r) { return T + ph * (1.0 - r / y_hi); };
    const auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    constexpr std::size_t palette_n = sizeof(palette) / sizeof(palette[0]);

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
         "viewBox=\"0 0 720 480\" font-family=\"monospace\" font-size=\"12\">\n";
    s << "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
    s << "<line x1=\"" << num(L) << "\" y1=\"" << num(T) << "\" x2=\"" << num(L) << "\" y2=\""
      << num(T + ph) << "\" stroke=\"#333333\"/>\n";
    s << "<line x1=\"" << num(L) << "\" y1=\"" << num(T + ph) << "\" x2=\"" << num(L + pw)
      << "\" y2=\"" << num(T + ph) << "\" stroke=\"#333333\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = y_hi * k / 4.0;
        char lab[32];
        std::snprintf(lab, sizeof lab, "%.4f", v);
        s << "<line x1=\"" << num(L - 4) << "\" y1=\"" << num(Y(v)) << "\" x2=\"" << num(L)
          << "\" y2=\"" << num(Y(v)) << "\" stroke=\"#333333\"/>\n";
        s << "<text x=\"" << num(L - 8) << "\" y=\"" << num(Y(v) + 4) << "\" text-anchor=\"end\">"
          << lab << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const double t = x_hi * k / 4.0;
        char lab[32];
        std::snprintf(lab, sizeof lab, "%.2f", t);
        s << "<line x1=\"" << num(X(t)) << "\" y1=\"" << num(T + ph) << "\" x2=\"" << num(X(t))
          << "\" y2=\"" << num(T + ph + 4) << "\" stroke=\"#333333\"/>\n";
        s << "<text x=\"" << num(X(t)) << "\" y=\"" << num(T + ph + 18)
          << "\" text-anchor=\"middle\">" << lab << "</text>\n";
    }
    s << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << num(H - 12)
      << "\" text-anchor=\"middle\">theta_C</text>\n";
    s << "<line x1=\"" << num(L) << "\" y1=\"" << num(Y(cfg.alpha)) << "\" x2=\"" << num(L + pw)
      << "\" y2=\"" << num(Y(cfg.alpha)) << "\" stroke=\"#444444\" stroke-dasharray=\"6 4\"/>\n";
    s << "<text x=\"" << num(L + 4) << "\" y=\"" << num(Y(cfg.alpha) - 4) << "\">alpha = "
      << format_double(cfg.alpha) << "</text>\n";
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        s << "<polyline fill=\"none\" stroke=\"" << palette[i % palette_n]
          << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < data.thetas.size(); ++k) {
            if (k) s << ' ';
            s << num(X(data.thetas[k])) << ',' << num(Y(data.rates[i][k]));
        }
        s << "\"/>\n";
        const double ly = T + 16.0 + 16.0 * double(i);
        s << "<line x1=\"" << num(L + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\""
          << num(L + pw + 34) << "\" y2=\"" << num(ly) << "\" stroke=\"" << palette[i % palette_n]
          << "\" stroke-width=\"1.5\"/>\n";
        s << "<text x=\"" << num(L + pw + 40) << "\" y=\"" << num(ly + 4) << "\">" << data.labels[i]
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

inline void write_profile_svg(const EvalConfig& cfg, const ProfileData& data,
                              const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open svg output " + path);
    f << profile_svg(cfg, data);
}

// --- Power table over configured (design, theta) rows ---

inline void power_table(const EvalConfig& cfg, std::ostream& os) {
    if (cfg.rows.empty()) throw std::invalid_argument("power table: config defines no power_rows");
    if (cfg.tests.empty()) throw std::invalid_argument("power table: config defines no tests");
    os << "n_C,n_D,theta_C,theta_D";
    for (const RosterEntry& e : cfg.tests) os << ',' << e.label;
    os << ",row_max,row_min\n";

    std::map<std::pair<int, int>, std::vector<DecisionVector>> regions;
    for (const PowerRow& row : cfg.rows) {
        const auto key = std::make_pair(row.design.n_C, row.design.n_D);
        if (regions.count(key)) continue;
        EvalConfig sub = cfg;
        sub.design = row.design;
        std::vector<DecisionVector> rs;
        rs.reserve(cfg.tests.size());
        for (const RosterEntry& e : cfg.tests) rs.push_back(region_for(sub, e).region);
        regions.emplace(key, std::move(rs));
    }
    for (const PowerRow& row : cfg.rows) {
        SampleSpace space(row.design);
        const auto& rs = regions.at({row.design.n_C, row.design.n_D});
        std::vector<double> cells(rs.size(), 0.0);
        detail::parallel_for(rs.size(), [&](std::size_t i) {
            cells[i] = 100.0 * rejection_rate(space, rs[i], row.theta);
        });
        // Flags follow the printed two-decimal values so display ties share them.
        std::vector<long long> rounded(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) rounded[i] = std::llround(cells[i] * 100.0);
        const long long mx = *std::max_element(rounded.begin(), rounded.end());
        const long long mn = *std::min_element(rounded.begin(), rounded.end());
        std::string maxs, mins;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (rounded[i] == mx) {
                if (!maxs.empty()) maxs += '|';
                maxs += cfg.tests[i].label;
            }
            if (rounded[i] == mn) {
                if (!mins.empty()) mins += '|';
                mins += cfg.tests[i].label;
            }
        }
        os << row.design.n_C << ',' << row.design.n_D << ',' << format_double(row.theta.theta_C)
           << ',' << format_double(row.theta.theta_D);
        for (double c : cells) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%.2f", c);
            os << ',' << buf;
        }
        os << ',' << maxs << ',' << mins << '\n';
    }
}

// --- Pairwise power comparison over the strict-alternative 0.01 grid ---

struct ComparisonMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<ComparisonCell>> cells;  // [row][col]
};

inline ComparisonMatrix compare_tests(const EvalConfig& cfg) {
    if (cfg.tests.empty()) throw std::invalid_argument("compare: config defines no tests");
    SampleSpace space(cfg.design);
    std::vector<RegionInfo> regions;
    regions.reserve(cfg.tests.size());
    for (const RosterEntry& e : cfg.tests) regions.push_back(region_for(cfg, e));

    std::vector<double> coeffs;
    switch (cfg.boundary.kind) {
        case BoundaryFn::Kind::identity: coeffs = avg_power_coeffs(space); break;
        case BoundaryFn::Kind::margin:
            coeffs = margin_avg_power_coeffs(space, cfg.boundary.delta);
            break;
        case BoundaryFn::Kind::custom:
            throw std::invalid_argument(
                "compare: custom boundaries have no closed-form average-power coefficients");
    }

    // theta multiples of 0.01 with theta_D strictly above the null boundary
    std::vector<Theta> pts;
    for (int i = 0; i <= 100; ++i) {
        const double tc = i / 100.0;
        if (tc > cfg.boundary.domain_hi() + 1e-12) break;
        const double g = cfg.boundary.g0(std::min(tc, cfg.boundary.domain_hi()));
        for (int k = 0; k <= 100; ++k) {
            const double td = k / 100.0;
            if (td > g + 1e-9) pts.push_back(Theta{tc, td});
        }
    }
    const std::size_t m = regions.size();
    std::vector<std::vector<double>> pw(m, std::vector<double>(pts.size(), 0.0));
    for (std::size_t i = 0; i < m; ++i)
        detail::parallel_for(pts.size(), [&](std::size_t k) {
            pw[i][k] = rejection_rate(space, regions[i].region, pts[k]);
        });

    ComparisonMatrix out;
    for (const RegionInfo& r : regions) out.labels.push_back(r.label);
    out.cells.assign(m, std::vector<ComparisonCell>(m));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            ComparisonCell& cell = out.cells[r][c];
            if (regions[r].region == regions[c].region) {
                cell = ComparisonCell{Relation::equal, 0.0, 0.0};
                continue;
            }
            double diff = 0.0;
            for (int p = 0; p < space.size(); ++p)
                diff += coeffs[p] *
                        (double(regions[r].region.get(p)) - double(regions[c].region.get(p)));
            std::size_t wins = 0, losses = 0;
            for (std::size_t k = 0; k < pts.size(); ++k) {
                if (pw[r][k] > pw[c][k] + 1e-12) ++wins;
                else if (pw[c][k] > pw[r][k] + 1e-12) ++losses;
            }
            cell.avg_power_diff = diff;
            cell.fraction = pts.empty() ? 0.0 : double(wins) / double(pts.size());
            cell.relation = wins == 0   ? Relation::uniformly_le
                            : losses == 0 ? Relation::uniformly_ge
                                          : Relation::fraction;
        }
    return out;
}

inline void comparison_csv(const ComparisonMatrix& m, std::ostream& os) {
    os << "test,vs,relation,fraction,avg_power_diff\n";
    for (std::size_t r = 0; r < m.labels.size(); ++r)
        for (std::size_t c = 0; c < m.labels.size(); ++c) {
            const ComparisonCell& cell = m.cells[r][c];
            os << m.labels[r] << ',' << m.labels[c] << ',' << relation_name(cell.relation) << ','
               << format_double(cell.fraction) << ',' << format_double(cell.avg_power_diff) << '\n';
        }
}

// --- p-values for an observed outcome; knapsack entries go through the ladder ---

struct PValueReport {
    std::string label;
    double p_value = 1.0;
    std::string method;
    std::string note;
    bool pending = false;  // knapsack entry whose ladder is not cached and not computed
};

inline PValueReport pvalue_for(const EvalConfig& cfg, const RosterEntry& e, bool allow_compute) {
    if (!cfg.observed)
        throw std::invalid_argument("p-values need an observed outcome in the config");
    const Outcome obs = *cfg.observed;
    PValueReport rep;
    rep.label = e.label;
    rep.method = method_name(e.kind);
    if (!e.knapsack()) {
        rep.p_value = pvalue_fn(cfg, e)(obs);
        using K = RosterEntry::Kind;
        if (e.kind == K::bb_midp || e.kind == K::bb_zpooled || e.kind == K::bb_zunpooled)
            rep.note = "gamma=" + format_double(cfg.gamma);
        return rep;
    }
    const KnapsackTestSpec spec = knapsack_spec(cfg, e);
    const std::vector<double> levels = cfg.levels.empty() ? default_pvalue_levels() : cfg.levels;
    std::optional<PValueLadder> ladder =
        cfg.cache_dir.empty() ? std::nullopt : load_ladder(spec, levels, cfg.cache_dir);
    if (!ladder && allow_compute) {
        ladder = pvalue_ladder(spec, levels, cfg.abs_tol, cfg.limits);
        for (const SolveResult& s : ladder->solves)
            if (s.status == SolveStatus::node_limit || s.status == SolveStatus::time_limit)
                throw SolverLimitError(e.label +
                                       ": ladder solve stopped at its resource limit; raise limits "
                                       "or stage a cached ladder");
        if (!cfg.cache_dir.empty()) save_ladder(*ladder, spec, cfg.cache_dir);
    }
    if (!ladder) {
        rep.pending = true;
        rep.note = "pending (extended run)";
        return rep;
    }
    rep.p_value = pvalue(*ladder, obs);
    double max_gap = 0.0;
    for (const SolveResult& s : ladder->solves) max_gap = std::max(max_gap, s.abs_gap);
    rep.note = "max solver gap " + format_double(max_gap);
    return rep;
}

namespace detail {

inline void write_pvalue_row(const PValueReport& rep, std::ostream& os) {
    os << rep.label << ',';
    if (rep.pending) {
        os << "NA";
    } else {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.4f", rep.p_value);
        os << buf;
    }
    os << ',' << rep.method << ',' << rep.note << '\n';
}

}  // namespace detail

// Case-study report: classical entries are computed directly; knapsack
// entries load their ladder from the cache, or solve it only when the config
// opts in, and otherwise stay pending.
inline void case_study(const EvalConfig& cfg, std::ostream& os) {
    if (cfg.tests.empty()) throw std::invalid_argument("case study: config defines no tests");
    os << "test,p_value,method,note\n";
    for (const RosterEntry& e : cfg.tests) {
        const PValueReport rep = pvalue_for(cfg, e, e.knapsack() ? cfg.compute_missing : true);
        detail::write_pvalue_row(rep, os);
    }
}

}  // namespace exact2x2
