// Command-line driver: constructs rejection regions, computes p-values, and
// reproduces the evaluation protocol (type-I profiles, power tables, pairwise
// comparisons, case-study reports, MPS export). Exit codes: 0 ok, 2 config
// error, 3 solver resource limit.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exact2x2/eval.hpp"
#include "exact2x2/mps.hpp"

namespace {

using namespace exact2x2;

struct Overrides {
    std::string config_path;
    std::vector<int> design;    // --design n_C n_D
    std::vector<int> observed;  // --observed s_C s_D
    std::optional<double> alpha, gamma, margin_delta, theta_step, abs_tol, wall_time;
    std::optional<int> grid_points;
    std::optional<long long> max_nodes;
    std::vector<std::string> tests;
    std::optional<std::string> cache_dir, output, svg;
    bool compute_missing = false;
};

EvalConfig build_config(const Overrides& o) {
    EvalConfig cfg = o.config_path.empty() ? EvalConfig{} : load_config(o.config_path);
    if (!o.design.empty()) cfg.design = Design{o.design[0], o.design[1]};
    if (!o.observed.empty()) cfg.observed = Outcome{o.observed[0], o.observed[1]};
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.gamma) cfg.gamma = *o.gamma;
    if (o.margin_delta)
        cfg.boundary = *o.margin_delta == 0.0 ? BoundaryFn::identity()
                                              : BoundaryFn::margin(*o.margin_delta);
    if (o.grid_points) cfg.grid_points = *o.grid_points;
    if (o.theta_step) cfg.theta_step = *o.theta_step;
    if (o.abs_tol) cfg.abs_tol = *o.abs_tol;
    if (o.max_nodes) cfg.limits.max_nodes = *o.max_nodes;
    if (o.wall_time) cfg.limits.wall_time_sec = *o.wall_time;
    if (!o.tests.empty()) {
        cfg.tests.clear();
        for (const std::string& name : o.tests) cfg.tests.push_back(RosterEntry::canned(name));
    }
    if (o.cache_dir) cfg.cache_dir = *o.cache_dir;
    if (o.output) cfg.output = *o.output;
    if (o.svg) cfg.svg = *o.svg;
    if (o.compute_missing) cfg.compute_missing = true;
    cfg.validate();
    return cfg;
}

// Roster labels win over canned names so configs can parameterize entries.
RosterEntry pick_test(const EvalConfig& cfg, const std::string& name) {
    for (const RosterEntry& e : cfg.tests)
        if (e.label == name) return e;
    return RosterEntry::canned(name);
}

void with_output(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    if (path.empty()) {
        fn(std::cout);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open output file " + path);
    fn(f);
    if (!f.good()) throw std::runtime_error("write failed for " + path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-sided exact tests for two-arm binomial trials"};
    app.require_subcommand(1);

    Overrides o;
    app.add_option("-c,--config", o.config_path, "JSON config file");
    app.add_option("--design", o.design, "override: n_C n_D")->expected(2);
    app.add_option("--observed", o.observed, "override: s_C s_D")->expected(2);
    app.add_option("--alpha", o.alpha, "override: one-sided significance level");
    app.add_option("--gamma", o.gamma, "override: Berger-Boos confidence spend");
    app.add_option("--margin", o.margin_delta, "override: margin delta (0 = identity boundary)");
    app.add_option("--grid-points", o.grid_points, "override: type-I constraint grid size");
    app.add_option("--theta-step", o.theta_step, "override: profile evaluation step");
    app.add_option("--abs-tol", o.abs_tol, "override: solver tolerance");
    app.add_option("--max-nodes", o.max_nodes, "override: solver node limit");
    app.add_option("--wall-time", o.wall_time, "override: solver wall-clock limit in seconds");
    app.add_option("--tests", o.tests, "override: comma-separated test names")->delimiter(',');
    app.add_option("--cache-dir", o.cache_dir, "override: solve cache directory");
    app.add_option("-o,--output", o.output, "output path (default: stdout)");
    app.add_option("--svg", o.svg, "profile: also write an SVG plot to this path");
    app.add_flag("--compute-missing", o.compute_missing,
                 "case-study: solve missing ladders instead of reporting them pending");

    std::string test_name = "APK";
    auto* construct_cmd =
        app.add_subcommand("construct", "construct one rejection region and write it as CSV");
    auto* pvalue_cmd =
        app.add_subcommand("pvalue", "p-value of the observed outcome under one test");
    auto* profile_cmd =
        app.add_subcommand("profile", "type-I error profile along the null boundary");
    auto* table_cmd = app.add_subcommand("power-table", "power table over the configured rows");
    auto* compare_cmd = app.add_subcommand("compare", "pairwise power comparison matrix");
    auto* case_cmd = app.add_subcommand("case-study", "p-value report for the observed outcome");
    auto* mps_cmd =
        app.add_subcommand("export-mps", "write the test's integer program in MPS format");
    for (CLI::App* sc : {construct_cmd, pvalue_cmd, mps_cmd})
        sc->add_option("-t,--test", test_name, "test name or roster label")->capture_default_str();
    // Global overrides may appear after the subcommand name.
    for (CLI::App* sc : {construct_cmd, pvalue_cmd, profile_cmd, table_cmd, compare_cmd, case_cmd,
                         mps_cmd})
        sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const EvalConfig cfg = build_config(o);
        if (construct_cmd->parsed()) {
            const RosterEntry entry = pick_test(cfg, test_name);
            const RegionInfo info = region_for(cfg, entry);
            SampleSpace space(cfg.design);
            with_output(cfg.output, [&](std::ostream& os) { write_region_csv(space, info.region, os); });
            std::fprintf(stderr, "%s: %d of %d cells rejected", info.label.c_str(),
                         info.region.count(), space.size());
            if (info.solve)
                std::fprintf(stderr, ", objective %.9g, bound gap %.3g%s",
                             info.solve->objective_value, info.solve->abs_gap,
                             info.from_cache ? ", cached" : "");
            std::fputc('\n', stderr);
        } else if (pvalue_cmd->parsed()) {
            const RosterEntry entry = pick_test(cfg, test_name);
            const PValueReport rep = pvalue_for(cfg, entry, true);
            with_output(cfg.output, [&](std::ostream& os) {
                os << "test,p_value,method,note\n";
                exact2x2::detail::write_pvalue_row(rep, os);
            });
        } else if (profile_cmd->parsed()) {
            const ProfileData data = profile_data(cfg);
            with_output(cfg.output, [&](std::ostream& os) { write_profile_csv(data, os); });
            if (!cfg.svg.empty()) write_profile_svg(cfg, data, cfg.svg);
        } else if (table_cmd->parsed()) {
            with_output(cfg.output, [&](std::ostream& os) { power_table(cfg, os); });
        } else if (compare_cmd->parsed()) {
            const ComparisonMatrix m = compare_tests(cfg);
            with_output(cfg.output, [&](std::ostream& os) { comparison_csv(m, os); });
        } else if (case_cmd->parsed()) {
            with_output(cfg.output, [&](std::ostream& os) { case_study(cfg, os); });
        } else if (mps_cmd->parsed()) {
            const RosterEntry entry = pick_test(cfg, test_name);
            if (!entry.knapsack())
                throw std::invalid_argument("export-mps: " + entry.label +
                                            " is not an integer-programming test");
            const ILPModel model = build_model(knapsack_spec(cfg, entry));
            with_output(cfg.output, [&](std::ostream& os) { export_mps(model, os); });
        }
        return 0;
    } catch (const SolverLimitError& e) {
        std::fprintf(stderr, "solver limit: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
}
