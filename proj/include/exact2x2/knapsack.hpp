#pragma once

// High-level constructors for the knapsack test family: a spec bundles the
// design, null boundary, grid, power objective, and level; construct() builds
// the matching model and solves it, and pvalue_ladder() chains solves over a
// level set with nesting enforced through solver bounds.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "exact2x2/boundary.hpp"
#include "exact2x2/ilp.hpp"
#include "exact2x2/power.hpp"
#include "exact2x2/prob.hpp"
#include "exact2x2/sample_space.hpp"
#include "exact2x2/util.hpp"

namespace exact2x2 {

struct KnapsackTestSpec {
    Design design;
    BoundaryFn boundary;
    NullGrid grid;
    ObjectiveSpec objective;
    double alpha = 0.025;

    void validate() const {
        if (design.n_C < 1 || design.n_D < 1) throw std::domain_error("knapsack spec: empty arm");
        if (!(alpha > 0.0) || !(alpha < 1.0)) throw std::domain_error("knapsack spec: alpha out of (0,1)");
        objective.validate();
        grid.validate(boundary);
    }
};

// Default maximin alternative shift by total sample size, following the
// published choices for n = 20, 50, 100, 300; nearest size wins, ties toward
// the larger shift.
inline double default_maximin_shift(const Design& d) {
    const int n = d.n();
    const std::pair<int, double> table[] = {{20, 0.65}, {50, 0.40}, {100, 0.25}, {300, 0.05}};
    double best = table[0].second;
    int dist = std::abs(n - table[0].first);
    for (const auto& [size, delta] : table) {
        const int e = std::abs(n - size);
        if (e < dist) {
            dist = e;
            best = delta;
        }
    }
    return best;
}

// Alternatives theta_D = theta_C + delta at `count` equidistant theta_C values
// spanning [lo_C, hi_C].
inline std::vector<Theta> shifted_alternatives(double lo_C, double hi_C, double delta, int count) {
    if (count < 1) throw std::domain_error("shifted alternatives: count must be positive");
    if (!(delta > 0.0) || !(delta < 1.0)) throw std::domain_error("shifted alternatives: delta out of (0,1)");
    if (!(lo_C <= hi_C) || lo_C < 0.0 || hi_C > 1.0 - delta)
        throw std::domain_error("shifted alternatives: theta_C range out of [0, 1-delta]");
    std::vector<Theta> pts;
    pts.reserve(count);
    for (int j = 0; j < count; ++j) {
        const double c = count == 1 ? lo_C : lo_C + (hi_C - lo_C) * j / (count - 1);
        pts.push_back(Theta{c, c + delta});
    }
    return pts;
}

inline std::vector<Theta> mpk_default_alternatives(const Design& d,
                                                   std::optional<double> delta = std::nullopt,
                                                   int count = 100) {
    const double shift = delta ? *delta : default_maximin_shift(d);
    return shifted_alternatives(0.0, 1.0 - shift, shift, count);
}

// Alternatives for the data-driven maximin variant: theta_C ranges over the
// exact confidence interval for the control rate (from the control arm's own
// successes), clipped to keep theta_D valid.
inline std::vector<Theta> mpk2_alternatives(const Design& d, const Outcome& observed, double delta,
                                            double level = 0.95, int count = 100) {
    if (observed.s_C < 0 || observed.s_C > d.n_C || observed.s_D < 0 || observed.s_D > d.n_D)
        throw std::domain_error("mpk2 alternatives: observed outcome out of range");
    const auto [lo, hi] = clopper_pearson(observed.s_C, d.n_C, level);
    const double lo_C = std::min(lo, 1.0 - delta);
    const double hi_C = std::min(hi, 1.0 - delta);
    return shifted_alternatives(lo_C, hi_C, delta, count);
}

namespace detail {

inline std::vector<double> objective_coeffs_of(const SampleSpace& space, const ObjectiveSpec& obj) {
    switch (obj.kind) {
        case ObjectiveSpec::Kind::average: return avg_power_coeffs(space);
        case ObjectiveSpec::Kind::weighted_average: return weighted_avg_power_coeffs(space, obj.prior);
        case ObjectiveSpec::Kind::margin_average: return margin_avg_power_coeffs(space, obj.delta);
        case ObjectiveSpec::Kind::maximin: break;
    }
    throw std::logic_error("objective_coeffs_of: maximin has no linear coefficient vector");
}

}  // namespace detail

inline ILPModel build_model(const KnapsackTestSpec& spec) {
    spec.validate();
    SampleSpace space(spec.design);
    const auto cons = build_null_constraints(space, spec.boundary, spec.grid);
    const auto inc = IncidenceRows::build(space);
    if (spec.objective.kind == ObjectiveSpec::Kind::maximin)
        return build_mpk_model(cons.p_rows, cons.slack_rows,
                               alt_power_rows(space, spec.objective.alt_points), spec.alpha, inc);
    return build_apk_model(cons.p_rows, cons.slack_rows,
                           detail::objective_coeffs_of(space, spec.objective), spec.alpha, inc);
}

inline SolveResult construct(const KnapsackTestSpec& spec, double abs_tol = 2.5e-4,
                             const std::optional<DecisionVector>& extra_lower_bounds = std::nullopt,
                             const std::optional<DecisionVector>& extra_upper_bounds = std::nullopt,
                             const SolveLimits& limits = SolveLimits{}) {
    return solve(build_model(spec), abs_tol, extra_lower_bounds, extra_upper_bounds, limits);
}

// The published level set: fine thousandths up to 0.100, then hundredths to 1.
inline std::vector<double> default_pvalue_levels() {
    std::vector<double> levels;
    for (int k = 1; k <= 100; ++k) levels.push_back(k / 1000.0);
    for (int k = 11; k <= 100; ++k) levels.push_back(k / 100.0);
    return levels;
}

struct PValueLadder {
    Design design;
    std::vector<double> levels;  // strictly increasing; includes the anchor
    std::size_t anchor_index = 0;
    std::vector<SolveResult> solves;  // aligned with levels; regions are nested

    const DecisionVector& region(std::size_t i) const { return solves[i].decision; }
};

inline PValueLadder pvalue_ladder(const KnapsackTestSpec& spec, std::vector<double> levels,
                                  double abs_tol = 2.5e-4, const SolveLimits& limits = SolveLimits{}) {
    spec.validate();
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const auto at = std::lower_bound(levels.begin(), levels.end(), spec.alpha);
    if (at == levels.end() || *at != spec.alpha)
        throw std::invalid_argument("pvalue ladder: level set must contain the anchor alpha");

    PValueLadder ladder;
    ladder.design = spec.design;
    ladder.levels = levels;
    ladder.anchor_index = static_cast<std::size_t>(at - levels.begin());
    ladder.solves.resize(levels.size());

    // Constraint rows are level-independent; only the right-hand side moves,
    // so the model is built once. Levels may include 1.0 even though the
    // anchor itself must lie strictly inside (0,1).
    ILPModel model = build_model(spec);
    const auto at_level = [&model](double level) {
        ILPModel m = model;
        for (auto& r : m.le_constraints)
            if (r.cont_coeff == 0.0) r.rhs = level;
        return m;
    };

    ladder.solves[ladder.anchor_index] = solve(model, abs_tol, std::nullopt, std::nullopt, limits);
    for (std::size_t i = ladder.anchor_index + 1; i < levels.size(); ++i)
        ladder.solves[i] =
            solve(at_level(levels[i]), abs_tol, ladder.solves[i - 1].decision, std::nullopt, limits);
    for (std::size_t i = ladder.anchor_index; i-- > 0;)
        ladder.solves[i] =
            solve(at_level(levels[i]), abs_tol, std::nullopt, ladder.solves[i + 1].decision, limits);
    return ladder;
}

// Smallest level whose region rejects the observed outcome; 1.0 if none does.
inline double pvalue(const PValueLadder& ladder, const Outcome& observed) {
    SampleSpace space(ladder.design);
    const int p = space.pos(observed);
    for (std::size_t i = 0; i < ladder.levels.size(); ++i)
        if (ladder.solves[i].decision.get(p)) return ladder.levels[i];
    return 1.0;
}

// --- Cache keyed by a content hash of the spec (and level set) ---

namespace detail {

inline void hash_doubles(std::string& buf, const std::vector<double>& v) {
    char tmp[32];
    for (double x : v) {
        std::snprintf(tmp, sizeof tmp, "%.17g,", x);
        buf += tmp;
    }
}

inline std::string objective_tag(const ObjectiveSpec& obj) {
    switch (obj.kind) {
        case ObjectiveSpec::Kind::average: return "average";
        case ObjectiveSpec::Kind::weighted_average: return "weighted_average";
        case ObjectiveSpec::Kind::maximin: return "maximin";
        case ObjectiveSpec::Kind::margin_average: return "margin_average";
    }
    throw std::logic_error("objective_tag: unknown kind");
}

inline std::string boundary_tag(const BoundaryFn& b) {
    switch (b.kind) {
        case BoundaryFn::Kind::identity: return "identity";
        case BoundaryFn::Kind::margin: {
            char tmp[48];
            std::snprintf(tmp, sizeof tmp, "margin:%.17g", b.delta);
            return tmp;
        }
        case BoundaryFn::Kind::custom: return "custom";
    }
    throw std::logic_error("boundary_tag: unknown kind");
}

}  // namespace detail

inline std::string cache_key(const KnapsackTestSpec& spec, const std::vector<double>& levels = {}) {
    std::string buf;
    char tmp[96];
    std::snprintf(tmp, sizeof tmp, "d=%dx%d;b=%s;a=%.17g;o=%s;", spec.design.n_C, spec.design.n_D,
                  detail::boundary_tag(spec.boundary).c_str(), spec.alpha,
                  detail::objective_tag(spec.objective).c_str());
    buf += tmp;
    if (spec.objective.kind == ObjectiveSpec::Kind::weighted_average) {
        std::snprintf(tmp, sizeof tmp, "prior=%d,%d,%d,%d;", spec.objective.prior.alpha_C,
                      spec.objective.prior.beta_C, spec.objective.prior.alpha_D, spec.objective.prior.beta_D);
        buf += tmp;
    }
    if (spec.objective.kind == ObjectiveSpec::Kind::margin_average) {
        std::snprintf(tmp, sizeof tmp, "delta=%.17g;", spec.objective.delta);
        buf += tmp;
    }
    if (spec.objective.kind == ObjectiveSpec::Kind::maximin) {
        buf += "alts=";
        for (const Theta& t : spec.objective.alt_points) {
            std::snprintf(tmp, sizeof tmp, "%.17g:%.17g,", t.theta_C, t.theta_D);
            buf += tmp;
        }
        buf += ';';
    }
    buf += "grid=";
    detail::hash_doubles(buf, spec.grid.thetas);
    buf += ";levels=";
    detail::hash_doubles(buf, levels);
    return hex64(fnv1a64(buf));
}

// Manifest plus one region CSV per level, all under dir; reload only succeeds
// when the manifest matches the requesting spec's content hash.
inline void save_ladder(const PValueLadder& ladder, const KnapsackTestSpec& spec,
                        const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string key = cache_key(spec, ladder.levels);
    SampleSpace space(ladder.design);
    std::ostringstream man;
    man << "{\n";
    man << "  \"key\": \"" << key << "\",\n";
    man << "  \"design\": [" << spec.design.n_C << ", " << spec.design.n_D << "],\n";
    man << "  \"boundary\": \"" << detail::boundary_tag(spec.boundary) << "\",\n";
    man << "  \"grid_points\": " << spec.grid.K() << ",\n";
    man << "  \"objective\": \"" << detail::objective_tag(spec.objective) << "\",\n";
    man << "  \"alpha\": " << format_double(spec.alpha) << ",\n";
    man << "  \"anchor_index\": " << ladder.anchor_index << ",\n";
    man << "  \"levels\": [";
    for (std::size_t i = 0; i < ladder.levels.size(); ++i)
        man << (i ? ", " : "") << format_double(ladder.levels[i]);
    man << "],\n  \"objective_values\": [";
    for (std::size_t i = 0; i < ladder.solves.size(); ++i)
        man << (i ? ", " : "") << format_double(ladder.solves[i].objective_value);
    man << "],\n  \"gaps\": [";
    for (std::size_t i = 0; i < ladder.solves.size(); ++i)
        man << (i ? ", " : "") << format_double(ladder.solves[i].abs_gap);
    man << "]\n}\n";
    std::ofstream mf(dir + "/" + key + ".json");
    if (!mf) throw std::runtime_error("ladder cache: cannot write manifest in " + dir);
    mf << man.str();
    for (std::size_t i = 0; i < ladder.solves.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "/%s_L%03zu.csv", key.c_str(), i);
        write_region_csv(space, ladder.solves[i].decision, dir + name);
    }
}

inline std::optional<PValueLadder> load_ladder(const KnapsackTestSpec& spec,
                                               const std::vector<double>& levels,
                                               const std::string& dir) {
    std::vector<double> sorted(levels);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const std::string key = cache_key(spec, sorted);
    std::ifstream mf(dir + "/" + key + ".json");
    if (!mf) return std::nullopt;
    std::stringstream buffer;
    buffer << mf.rdbuf();
    const std::string man = buffer.str();
    if (man.find("\"key\": \"" + key + "\"") == std::string::npos) return std::nullopt;

    PValueLadder ladder;
    ladder.design = spec.design;
    ladder.levels = sorted;
    const auto at = std::lower_bound(sorted.begin(), sorted.end(), spec.alpha);
    if (at == sorted.end() || *at != spec.alpha) return std::nullopt;
    ladder.anchor_index = static_cast<std::size_t>(at - sorted.begin());
    SampleSpace space(spec.design);

    const auto grab = [&man](const std::string& field) -> std::vector<double> {
        const auto pos = man.find('"' + field + "\": [");
        if (pos == std::string::npos) throw std::runtime_error("ladder cache: missing " + field);
        const auto open = man.find('[', pos);
        const auto close = man.find(']', open);
        std::vector<double> out;
        std::istringstream ss(man.substr(open + 1, close - open - 1));
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
        return out;
    };
    const auto values = grab("objective_values");
    const auto gaps = grab("gaps");
    if (values.size() != sorted.size() || gaps.size() != sorted.size()) return std::nullopt;
    ladder.solves.resize(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "/%s_L%03zu.csv", key.c_str(), i);
        std::ifstream rf(dir + name);
        if (!rf) return std::nullopt;
        ladder.solves[i].decision = read_region_csv(space, rf);
        ladder.solves[i].objective_value = values[i];
        ladder.solves[i].abs_gap = gaps[i];
        ladder.solves[i].best_bound = values[i] + gaps[i];
        ladder.solves[i].status = SolveStatus::optimal_within_tol;
    }
    return ladder;
}

}  // namespace exact2x2
