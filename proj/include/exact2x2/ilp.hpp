#pragma once

// 0-1 integer programs over convex rejection regions. Models carry the
// type-I error rows, optional maximin rows with one continuous variable,
// and the neighbor precedence pairs; the solver is branch-and-bound whose
// bound comes from a Lagrangian relaxation of the error rows, leaving a
// monotone-threshold selection problem solved exactly by dynamic
// programming. Tie-breaking is deterministic: among optima discovered at
// the incumbent value the lexicographically smallest bit string wins.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "exact2x2/sample_space.hpp"

namespace exact2x2 {

struct LeRow {
    std::vector<double> a;    // coefficients over the binary cells
    double cont_coeff = 0.0;  // coefficient of the continuous variable (maximin rows)
    double rhs = 0.0;
};

struct ILPModel {
    int binary_count = 0;
    int cols = 0;          // cell i <-> (i / rows_per_col, i % rows_per_col)
    int rows_per_col = 0;
    std::vector<double> objective;                // per binary cell
    bool has_continuous = false;                  // single maximized continuous variable
    double continuous_objective = 0.0;
    std::vector<LeRow> le_constraints;
    std::vector<std::pair<int, int>> precedence;  // (i, k): d_k >= d_i
};

enum class SolveStatus { optimal_within_tol, infeasible, node_limit, time_limit };

struct SolveLimits {
    long max_nodes = 20000000;
    double wall_time_sec = 0.0;               // 0 = none; a wall clock breaks determinism
    std::vector<DecisionVector> warm_starts;  // incumbent hints, validated before use
};

struct SolveResult {
    DecisionVector decision;
    double objective_value = -std::numeric_limits<double>::infinity();
    double best_bound = -std::numeric_limits<double>::infinity();
    double abs_gap = 0.0;
    SolveStatus status = SolveStatus::infeasible;
};

namespace detail {

constexpr double solver_feas_tol = 1e-9;

// Diagnostics on stderr when EXACT2X2_ILP_TRACE is set; no effect otherwise.
inline bool ilp_trace() {
    static const bool on = std::getenv("EXACT2X2_ILP_TRACE") != nullptr;
    return on;
}

inline void check_rows_match(const std::vector<std::vector<double>>& rows, std::size_t n,
                             const char* what) {
    for (const auto& r : rows)
        if (r.size() != n) throw std::invalid_argument(std::string(what) + ": row length mismatch");
}

// The grid shape is recoverable from the incidence offsets: position 0 always
// has an in-range C-neighbor at distance rows_per_col.
inline std::pair<int, int> shape_from_incidence(const IncidenceRows& inc, int n) {
    if (static_cast<int>(inc.off_C.size()) != n || static_cast<int>(inc.off_D.size()) != n)
        throw std::invalid_argument("model build: incidence size mismatch");
    const int rpc = inc.off_C.empty() ? 0 : inc.off_C[0];
    if (rpc <= 0 || n % rpc != 0) throw std::invalid_argument("model build: malformed incidence rows");
    return {n / rpc, rpc};
}

inline void append_precedence(ILPModel& m, const IncidenceRows& inc) {
    for (int p = 0; p < m.binary_count; ++p) {
        if (inc.off_C[p] >= 0) m.precedence.emplace_back(inc.off_C[p], p);
        if (inc.off_D[p] >= 0) m.precedence.emplace_back(inc.off_D[p], p);
    }
}

}  // namespace detail

// Average/weighted-average program: maximize c.d subject to the plain rows
// p_j.d <= alpha, the interval rows (p_j + slack_j).d <= alpha, and the
// convexity precedence pairs.
inline ILPModel build_apk_model(const std::vector<std::vector<double>>& p_rows,
                                const std::vector<std::vector<double>>& slack_rows,
                                const std::vector<double>& objective_coeffs, double alpha,
                                const IncidenceRows& inc) {
    const std::size_t n = objective_coeffs.size();
    if (p_rows.empty()) throw std::invalid_argument("build_apk_model: no type-I rows");
    if (slack_rows.size() + 1 != p_rows.size())
        throw std::invalid_argument("build_apk_model: need one slack row per grid interval");
    if (!(alpha > 0.0) || !(alpha <= 1.0)) throw std::invalid_argument("build_apk_model: alpha out of (0,1]");
    detail::check_rows_match(p_rows, n, "build_apk_model");
    detail::check_rows_match(slack_rows, n, "build_apk_model");

    ILPModel m;
    m.binary_count = static_cast<int>(n);
    std::tie(m.cols, m.rows_per_col) = detail::shape_from_incidence(inc, m.binary_count);
    m.objective = objective_coeffs;
    for (const auto& p : p_rows) m.le_constraints.push_back(LeRow{p, 0.0, alpha});
    for (std::size_t j = 0; j < slack_rows.size(); ++j) {
        LeRow r{p_rows[j], 0.0, alpha};
        for (std::size_t i = 0; i < n; ++i) r.a[i] += slack_rows[j][i];
        m.le_constraints.push_back(std::move(r));
    }
    detail::append_precedence(m, inc);
    return m;
}

// Maximin program: maximize z subject to z <= q_j.d for every alternative
// row plus the same type-I rows and precedence pairs.
inline ILPModel build_mpk_model(const std::vector<std::vector<double>>& p_rows,
                                const std::vector<std::vector<double>>& slack_rows,
                                const std::vector<std::vector<double>>& alt_rows, double alpha,
                                const IncidenceRows& inc) {
    if (alt_rows.empty()) throw std::invalid_argument("build_mpk_model: empty alternative set");
    const std::size_t n = alt_rows.front().size();
    detail::check_rows_match(alt_rows, n, "build_mpk_model");
    ILPModel m = build_apk_model(p_rows, slack_rows, std::vector<double>(n, 0.0), alpha, inc);
    m.has_continuous = true;
    m.continuous_objective = 1.0;
    for (const auto& q : alt_rows) {
        LeRow r;
        r.a.resize(n);
        for (std::size_t i = 0; i < n; ++i) r.a[i] = -q[i];
        r.cont_coeff = 1.0;
        r.rhs = 0.0;
        m.le_constraints.push_back(std::move(r));
    }
    return m;
}

namespace detail {

// Per-column suffix sums of a dense cell row: at(c,t) = sum_{v>=t} a[c,v].
// Dotting against a threshold vector is then O(cols).
struct SuffixTable {
    int cols = 0, rpc = 0;
    std::vector<double> s;  // cols x (rpc+1), at(c, rpc) = 0

    static SuffixTable build(const std::vector<double>& a, int cols, int rpc) {
        SuffixTable st;
        st.cols = cols;
        st.rpc = rpc;
        st.s.assign(std::size_t(cols) * (rpc + 1), 0.0);
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            double* col = st.s.data() + std::size_t(c) * (rpc + 1);
            for (int v = rpc - 1; v >= 0; --v) {
                acc += a[std::size_t(c) * rpc + v];
                col[v] = acc;
            }
        }
        return st;
    }
    double at(int c, int t) const { return s[std::size_t(c) * (rpc + 1) + t]; }
    double dot(const std::vector<int>& t) const {
        double x = 0.0;
        for (int c = 0; c < cols; ++c) x += at(c, t[c]);
        return x;
    }
};

// Lexicographic order of the induced bit strings: the first differing column
// decides, and a larger threshold means earlier zeros.
inline bool thresholds_lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    for (std::size_t c = 0; c < a.size(); ++c)
        if (a[c] != b[c]) return a[c] > b[c];
    return false;
}

// Multiplicative-weights step on the probability simplex; concentrates
// quickly on the few binding alternatives of a maximin objective.
inline void hedge_step(std::vector<double>& mu, const std::vector<double>& g, double eta) {
    double gmin = g[0];
    for (double x : g) gmin = std::min(gmin, x);
    double z = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        mu[j] = std::max(mu[j], 1e-300) * std::exp(-eta * (g[j] - gmin));
        z += mu[j];
    }
    for (auto& x : mu) x /= z;
}

class RegionSolver {
  public:
    RegionSolver(const ILPModel& m, double abs_tol, const SolveLimits& limits)
        : m_(m), tol_(abs_tol), limits_(limits), space_(validated(m)) {
        cols_ = m.cols;
        rpc_ = m.rows_per_col;
        n_ = m.binary_count;
        for (std::size_t j = 0; j < m.le_constraints.size(); ++j) {
            const LeRow& r = m.le_constraints[j];
            if (static_cast<int>(r.a.size()) != n_) throw std::invalid_argument("solve: row length mismatch");
            if (r.cont_coeff == 0.0) {
                typeI_.push_back(static_cast<int>(j));
            } else {
                if (!m.has_continuous || r.cont_coeff != 1.0 || r.rhs != 0.0)
                    throw std::invalid_argument("solve: continuous rows must have the form z - q.d <= 0");
                altI_.push_back(static_cast<int>(j));
            }
        }
        if (m.has_continuous && altI_.empty())
            throw std::invalid_argument("solve: maximin model without alternative rows");
        for (const auto& [i, k] : m.precedence) {
            const bool cside = (i == k + rpc_);
            const bool dside = (i == k - 1) && (k % rpc_ != 0);
            if (i < 0 || k < 0 || i >= n_ || k >= n_ || (!cside && !dside))
                throw std::invalid_argument("solve: precedence pair outside the grid neighbor pattern");
        }
        obj_suf_ = SuffixTable::build(m.objective, cols_, rpc_);
        obj_pos_ = SuffixTable::build(positive_part(m.objective), cols_, rpc_);
        mono_ = true;
        if (!m.has_continuous)
            for (double x : m.objective) mono_ = mono_ && x >= 0.0;
        repair_cost_.assign(n_, 0.0);
        for (int j : altI_) {
            std::vector<double> q(n_);
            for (int i = 0; i < n_; ++i) q[i] = -m.le_constraints[j].a[i];
            for (int i = 0; i < n_; ++i) repair_cost_[i] += q[i] / double(altI_.size());
            for (double x : q) mono_ = mono_ && x >= 0.0;
            alt_suf_.push_back(SuffixTable::build(q, cols_, rpc_));
            alt_pos_.push_back(SuffixTable::build(positive_part(q), cols_, rpc_));
        }
        if (!m.has_continuous) repair_cost_ = m.objective;
        w_.assign(std::size_t(cols_) * (rpc_ + 1), 0.0);
        f_.assign(std::size_t(cols_) * (rpc_ + 1), 0.0);
        b_.assign(std::size_t(cols_) * (rpc_ + 1), 0.0);
    }

    SolveResult run(const std::optional<DecisionVector>& extra_lower,
                    const std::optional<DecisionVector>& extra_upper) {
        t0_ = std::chrono::steady_clock::now();
        std::vector<int> lo(cols_, 0), hi(cols_, rpc_);
        if (extra_upper) {
            const auto t = bound_thresholds(*extra_upper, "upper");
            for (int c = 0; c < cols_; ++c) lo[c] = std::max(lo[c], t[c]);
        }
        if (extra_lower) {
            const auto t = bound_thresholds(*extra_lower, "lower");
            for (int c = 0; c < cols_; ++c) hi[c] = std::min(hi[c], t[c]);
        }
        bool ok = normalize_bounds(lo, hi);
        if (ok) {
            const std::vector<int> plo = probe_lower();
            for (int c = 0; c < cols_; ++c) lo[c] = std::max(lo[c], plo[c]);
            ok = normalize_bounds(lo, hi);
        }
        if (!ok) return infeasible_result();
        root_lo_ = lo;
        root_hi_ = hi;

        std::vector<std::vector<int>> seeds;
        seeds.emplace_back(cols_, rpc_);  // empty region
        seeds.push_back(hi);              // smallest admissible region
        for (const auto& w : limits_.warm_starts) {
            if (w.size() != n_) continue;
            if (auto t = thresholds_of(space_, w)) seeds.push_back(*t);
        }
        full_t_.reset();
        full_val_ = -inf();
        for (const auto& s : seeds) try_full(s, lo, hi);

        init_working();
        const int max_outer = static_cast<int>(typeI_.size()) + 2;
        for (int outer = 0; outer < max_outer; ++outer) {
            if (full_t_) seeds.push_back(*full_t_);
            const Inner in = bnb(lo, hi, seeds);
            if (ilp_trace())
                std::fprintf(stderr,
                             "[ilp] outer=%d working=%zu active_alts=%zu value=%.9g bound=%.9g "
                             "nodes=%ld elapsed=%.1fs\n",
                             outer, working_.size(), active_alts_.size(), in.value, in.bound, nodes_,
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count());
            if (in.status != SolveStatus::optimal_within_tol) return limited_result(in);
            if (!in.t) return infeasible_result();
            auto viol = full_violations(*in.t);
            // A row already enforced by the inner solve can resurface here when
            // its value straddles the feasibility tolerance under a different
            // summation order; only genuinely new rows advance the loop.
            viol.erase(std::remove_if(viol.begin(), viol.end(),
                                      [&](const std::pair<double, int>& v) { return in_working_[v.second] != 0; }),
                       viol.end());
            if (viol.empty()) {
                try_full(*in.t, lo, hi);
                if (!full_t_ || in.value > full_val_) {
                    full_val_ = value_of(*in.t);
                    full_t_ = *in.t;
                }
                SolveResult res;
                res.decision = from_thresholds(space_, *full_t_);
                res.objective_value = full_val_;
                res.best_bound = std::max(in.bound, full_val_);
                res.abs_gap = res.best_bound - res.objective_value;
                res.status = SolveStatus::optimal_within_tol;
                return res;
            }
            std::stable_sort(viol.begin(), viol.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            const std::size_t take = std::min<std::size_t>(viol.size(), 16);
            for (std::size_t k = 0; k < take; ++k) {
                working_.push_back(viol[k].second);
                in_working_[viol[k].second] = 1;
            }
            if (auto rep = repair(*in.t, lo, hi)) try_full(*rep, lo, hi);
        }
        throw std::logic_error("solve: row generation failed to converge");
    }

  private:
    struct Node {
        std::vector<int> lo, hi;
        std::vector<double> lam, mu;
        double inherited;
        int depth;
    };
    struct Inner {
        SolveStatus status;
        std::optional<std::vector<int>> t;
        double value;
        double bound;
    };
    struct Relax {
        double bound = std::numeric_limits<double>::infinity();
        std::vector<int> t;
        std::vector<double> lam, mu;  // dual point attaining the bound
    };

    static double inf() { return std::numeric_limits<double>::infinity(); }

    static SampleSpace validated(const ILPModel& m) {
        if (m.cols < 2 || m.rows_per_col < 2 || m.binary_count != m.cols * m.rows_per_col)
            throw std::invalid_argument("solve: model shape missing or inconsistent");
        if (static_cast<int>(m.objective.size()) != m.binary_count)
            throw std::invalid_argument("solve: objective length mismatch");
        return SampleSpace(Design{m.cols - 1, m.rows_per_col - 1});
    }

    std::vector<int> bound_thresholds(const DecisionVector& d, const char* which) const {
        if (d.size() != n_) throw std::invalid_argument("solve: bound vector size mismatch");
        const auto t = thresholds_of(space_, d);
        if (!t) throw std::domain_error(std::string("solve: ") + which + " bound vector not convex");
        return *t;
    }

    static bool normalize_bounds(std::vector<int>& lo, std::vector<int>& hi) {
        for (std::size_t c = 1; c < lo.size(); ++c) lo[c] = std::max(lo[c], lo[c - 1]);
        for (int c = static_cast<int>(hi.size()) - 2; c >= 0; --c) hi[c] = std::min(hi[c], hi[c + 1]);
        for (std::size_t c = 0; c < lo.size(); ++c)
            if (lo[c] > hi[c]) return false;
        return true;
    }

    static std::vector<double> positive_part(const std::vector<double>& a) {
        std::vector<double> p(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) p[i] = std::max(a[i], 0.0);
        return p;
    }

    static std::vector<double> negative_part(const std::vector<double>& a) {
        std::vector<double> p(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) p[i] = std::min(a[i], 0.0);
        return p;
    }

    struct RowTables {
        SuffixTable full, neg;  // full coefficients and their negative parts
    };

    const RowTables& row_info(int idx) {
        auto it = row_suf_.find(idx);
        if (it == row_suf_.end()) {
            const auto& a = m_.le_constraints[idx].a;
            it = row_suf_
                     .emplace(idx, RowTables{SuffixTable::build(a, cols_, rpc_),
                                             SuffixTable::build(negative_part(a), cols_, rpc_)})
                     .first;
        }
        return it->second;
    }

    const SuffixTable& row_table(int idx) { return row_info(idx).full; }

    // Least possible row value over the threshold box: forced cells count in
    // full, undecided cells only if they help the row downward.
    double row_box_min(int idx, const std::vector<int>& lo, const std::vector<int>& hi) {
        const RowTables& rt = row_info(idx);
        return rt.full.dot(hi) + rt.neg.dot(lo) - rt.neg.dot(hi);
    }

    // Largest objective value any region in the box can reach.
    double box_upper(const std::vector<int>& lo, const std::vector<int>& hi) const {
        if (!m_.has_continuous)
            return obj_suf_.dot(hi) + obj_pos_.dot(lo) - obj_pos_.dot(hi);
        double u = inf();
        for (std::size_t j = 0; j < alt_suf_.size(); ++j)
            u = std::min(u, alt_suf_[j].dot(hi) + alt_pos_[j].dot(lo) - alt_pos_[j].dot(hi));
        return u;
    }

    double value_of(const std::vector<int>& t) {
        if (!m_.has_continuous) return obj_suf_.dot(t);
        double v = inf();
        for (const auto& st : alt_suf_) v = std::min(v, st.dot(t));
        return v;
    }

    // True maximin value plus the binding alternative's index.
    std::pair<double, int> full_min_argmin(const std::vector<int>& t) const {
        double v = inf();
        int jstar = 0;
        for (std::size_t j = 0; j < alt_suf_.size(); ++j) {
            const double x = alt_suf_[j].dot(t);
            if (x < v) {
                v = x;
                jstar = static_cast<int>(j);
            }
        }
        return {v, jstar};
    }

    bool feasible_working(const std::vector<int>& t) {
        for (int idx : working_)
            if (row_table(idx).dot(t) > m_.le_constraints[idx].rhs + solver_feas_tol) return false;
        return true;
    }

    double dense_dot(const LeRow& r, const std::vector<int>& t) const {
        double x = 0.0;
        for (int c = 0; c < cols_; ++c) {
            const double* a = r.a.data() + std::size_t(c) * rpc_;
            for (int v = t[c]; v < rpc_; ++v) x += a[v];
        }
        return x;
    }

    std::vector<std::pair<double, int>> full_violations(const std::vector<int>& t) const {
        std::vector<std::pair<double, int>> out;
        for (int idx : typeI_) {
            const LeRow& r = m_.le_constraints[idx];
            const double v = dense_dot(r, t) - r.rhs;
            if (v > solver_feas_tol) out.emplace_back(v, idx);
        }
        return out;
    }

    // Cells whose smallest containing convex region already overshoots a
    // nonnegative row force a threshold lower bound.
    std::vector<int> probe_lower() const {
        std::vector<int> lo(cols_, 0);
        std::vector<double> run(rpc_ + 1);
        for (int idx : typeI_) {
            const LeRow& r = m_.le_constraints[idx];
            bool nonneg = true;
            for (double x : r.a)
                if (x < 0.0) { nonneg = false; break; }
            if (!nonneg) continue;
            std::fill(run.begin(), run.end(), 0.0);
            int v = 0;
            for (int c = 0; c < cols_; ++c) {
                const double* a = r.a.data() + std::size_t(c) * rpc_;
                double acc = 0.0;
                for (int u = rpc_ - 1; u >= 0; --u) {
                    acc += a[u];
                    run[u] += acc;  // rectangle mass over columns <= c, rows >= u
                }
                while (v < rpc_ && run[v] > r.rhs + solver_feas_tol) ++v;
                lo[c] = std::max(lo[c], v);
            }
        }
        return lo;
    }

    void init_working() {
        working_.clear();
        in_working_.assign(m_.le_constraints.size(), 0);
        const int m = static_cast<int>(typeI_.size());
        if (m <= 24) {
            working_ = typeI_;
        } else {
            int prev = -1;
            for (int k = 0; k <= 8; ++k) {
                const int idx = static_cast<int>(std::lround(double(k) * (m - 1) / 8.0));
                if (idx != prev) working_.push_back(typeI_[idx]);
                prev = idx;
            }
        }
        for (int idx : working_) in_working_[idx] = 1;
        active_alts_.clear();
        alt_active_flag_.assign(alt_suf_.size(), 0);
        const int a = static_cast<int>(alt_suf_.size());
        if (a <= 12) {
            for (int j = 0; j < a; ++j) active_alts_.push_back(j);
        } else {
            int prev = -1;
            for (int k = 0; k <= 8; ++k) {
                const int j = static_cast<int>(std::lround(double(k) * (a - 1) / 8.0));
                if (j != prev) active_alts_.push_back(j);
                prev = j;
            }
        }
        for (int j : active_alts_) alt_active_flag_[j] = 1;
    }

    // Incumbent update for a candidate already known feasible for every
    // type-I row; activates the binding alternative so later relaxations
    // carry it.
    void accept_inner(const std::vector<int>& t, double v) {
        if (m_.has_continuous) {
            const int jstar = full_min_argmin(t).second;
            if (!alt_active_flag_[jstar]) {
                alt_active_flag_[jstar] = 1;
                active_alts_.push_back(jstar);
            }
        }
        if (v > inner_val_ || (v == inner_val_ && inner_t_ && thresholds_lex_less(t, *inner_t_))) {
            inner_val_ = v;
            inner_t_ = t;
        }
    }

    // Candidates face the full row set before they may become incumbents; an
    // improving candidate that fails teaches the working set its most
    // violated rows (lazy row generation) and offers its repaired version
    // instead. Non-improving candidates are discarded without the full scan.
    void consider_inner(const std::vector<int>& t) {
        const double v = m_.has_continuous ? full_min_argmin(t).first : obj_suf_.dot(t);
        const bool improving =
            v > inner_val_ || (v == inner_val_ && inner_t_ && thresholds_lex_less(t, *inner_t_));
        if (!improving) return;
        auto viol = full_violations(t);
        if (viol.empty()) {
            accept_inner(t, v);
            return;
        }
        std::stable_sort(viol.begin(), viol.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::size_t added = 0;
        for (const auto& vi : viol) {
            if (added == 4) break;
            if (in_working_[vi.second]) continue;
            working_.push_back(vi.second);
            in_working_[vi.second] = 1;
            ++added;
        }
        if (auto rep = repair(t, root_lo_, root_hi_)) {
            if (*rep != t && feasible_working(*rep)) accept_inner(*rep, value_of(*rep));
        }
    }

    // Grow a working-feasible region cell by cell while it stays feasible;
    // with a nonnegative objective the maximal region is never worse.
    void saturate(std::vector<int>& t) {
        std::vector<double> dots(working_.size());
        for (std::size_t r = 0; r < working_.size(); ++r) dots[r] = row_table(working_[r]).dot(t);
        bool grew = true;
        while (grew) {
            grew = false;
            for (int c = 0; c < cols_; ++c) {
                while (t[c] > root_lo_[c] && (c == 0 || t[c] - 1 >= t[c - 1])) {
                    const int cell = c * rpc_ + (t[c] - 1);
                    bool ok = true;
                    for (std::size_t r = 0; r < working_.size(); ++r) {
                        const LeRow& row = m_.le_constraints[working_[r]];
                        if (dots[r] + row.a[cell] > row.rhs + solver_feas_tol) {
                            ok = false;
                            break;
                        }
                    }
                    if (!ok) break;
                    for (std::size_t r = 0; r < working_.size(); ++r)
                        dots[r] += m_.le_constraints[working_[r]].a[cell];
                    --t[c];
                    grew = true;
                }
            }
        }
    }

    void try_inner(const std::vector<int>& t) {
        if (!feasible_working(t)) return;
        consider_inner(t);
        if (mono_) {
            std::vector<int> s(t);
            saturate(s);
            if (s != t) consider_inner(s);
        }
    }

    void try_full(const std::vector<int>& t, const std::vector<int>& lo, const std::vector<int>& hi) {
        for (int c = 0; c < cols_; ++c)
            if (t[c] < lo[c] || t[c] > hi[c]) return;
        for (int idx : typeI_) {
            const LeRow& r = m_.le_constraints[idx];
            if (dense_dot(r, t) > r.rhs + solver_feas_tol) return;
        }
        const double v = value_of(t);
        if (v > full_val_ || (v == full_val_ && full_t_ && thresholds_lex_less(t, *full_t_))) {
            full_val_ = v;
            full_t_ = t;
        }
    }

    // Combined Lagrangian weights, already in suffix-table form; mu is indexed
    // by position in the active alternative list.
    void build_weights(const std::vector<double>& lam, const std::vector<double>& mu) {
        const std::size_t len = w_.size();
        if (!m_.has_continuous) {
            std::copy(obj_suf_.s.begin(), obj_suf_.s.end(), w_.begin());
        } else {
            std::fill(w_.begin(), w_.end(), 0.0);
            for (std::size_t j = 0; j < mu.size(); ++j) {
                if (mu[j] == 0.0) continue;
                const double* src = alt_suf_[active_alts_[j]].s.data();
                for (std::size_t i = 0; i < len; ++i) w_[i] += mu[j] * src[i];
            }
        }
        // lam can trail working_ when rows were learned mid-iteration; the
        // missing rows carry multiplier zero and contribute nothing.
        for (std::size_t r = 0; r < lam.size(); ++r) {
            if (lam[r] <= 0.0) continue;
            const double* src = row_table(working_[r]).s.data();
            for (std::size_t i = 0; i < len; ++i) w_[i] -= lam[r] * src[i];
        }
    }

    // Maximize sum_c w(c, t_c) over nondecreasing t within [lo, hi];
    // ties toward the smaller threshold.
    double dp_run(const std::vector<int>& lo, const std::vector<int>& hi, std::vector<int>& t_out) {
        const int stride = rpc_ + 1;
        for (int c = 0; c < cols_; ++c) {
            double* fc = f_.data() + std::size_t(c) * stride;
            const double* wc = w_.data() + std::size_t(c) * stride;
            if (c == 0) {
                for (int t = lo[0]; t <= hi[0]; ++t) fc[t] = wc[t];
            } else {
                const double* fp = f_.data() + std::size_t(c - 1) * stride;
                double pm = -inf();
                int u = lo[c - 1];
                for (int t = lo[c]; t <= hi[c]; ++t) {
                    const int cap = std::min(t, hi[c - 1]);
                    while (u <= cap) pm = std::max(pm, fp[u++]);
                    fc[t] = wc[t] + pm;
                }
            }
        }
        const int last = cols_ - 1;
        const double* fl = f_.data() + std::size_t(last) * stride;
        int bt = lo[last];
        for (int t = lo[last] + 1; t <= hi[last]; ++t)
            if (fl[t] > fl[bt]) bt = t;
        t_out.assign(cols_, 0);
        t_out[last] = bt;
        for (int c = last - 1; c >= 0; --c) {
            const double* fc = f_.data() + std::size_t(c) * stride;
            const int cap = std::min(hi[c], t_out[c + 1]);
            int b = lo[c];
            for (int t = lo[c] + 1; t <= cap; ++t)
                if (fc[t] > fc[b]) b = t;
            t_out[c] = b;
        }
        return fl[bt];
    }

    // Conditional-bound domain reduction at a fixed dual point: with w_
    // already built, f[c][v] (best prefix ending at t_c = v) plus b[c][v]
    // (best suffix starting there) minus the double-counted w(c, v) bounds
    // every solution through (c, v) from above. Interval ends whose bound
    // cannot beat the incumbent are dropped; pruned mass is accounted in
    // closed. Returns false when the box empties. Tables computed on the
    // incoming box stay valid (only looser) for the shrunken one.
    bool dp_filter(std::vector<int>& lo, std::vector<int>& hi, double rhs_term, double& closed) {
        const int stride = rpc_ + 1;
        for (int c = 0; c < cols_; ++c) {
            double* fc = f_.data() + std::size_t(c) * stride;
            const double* wc = w_.data() + std::size_t(c) * stride;
            if (c == 0) {
                for (int t = lo[0]; t <= hi[0]; ++t) fc[t] = wc[t];
            } else {
                const double* fp = f_.data() + std::size_t(c - 1) * stride;
                double pm = -inf();
                int u = lo[c - 1];
                for (int t = lo[c]; t <= hi[c]; ++t) {
                    const int cap = std::min(t, hi[c - 1]);
                    while (u <= cap) pm = std::max(pm, fp[u++]);
                    fc[t] = wc[t] + pm;
                }
            }
        }
        for (int c = cols_ - 1; c >= 0; --c) {
            double* bc = b_.data() + std::size_t(c) * stride;
            const double* wc = w_.data() + std::size_t(c) * stride;
            if (c == cols_ - 1) {
                for (int t = lo[c]; t <= hi[c]; ++t) bc[t] = wc[t];
            } else {
                const double* bn = b_.data() + std::size_t(c + 1) * stride;
                double sm = -inf();
                int u = hi[c + 1];
                for (int t = hi[c]; t >= lo[c]; --t) {
                    const int floor_u = std::max(t, lo[c + 1]);
                    while (u >= floor_u) sm = std::max(sm, bn[u--]);
                    bc[t] = wc[t] + sm;
                }
            }
        }
        const double cut = inner_val_ + tol_ - rhs_term;
        for (int c = 0; c < cols_; ++c) {
            const double* fc = f_.data() + std::size_t(c) * stride;
            const double* bc = b_.data() + std::size_t(c) * stride;
            const double* wc = w_.data() + std::size_t(c) * stride;
            const auto cond = [&](int v) { return fc[v] + bc[v] - wc[v]; };
            while (lo[c] < hi[c] && cond(lo[c]) <= cut) {
                closed = std::max(closed, cond(lo[c]) + rhs_term);
                ++lo[c];
            }
            while (hi[c] > lo[c] && cond(hi[c]) <= cut) {
                closed = std::max(closed, cond(hi[c]) + rhs_term);
                --hi[c];
            }
            if (lo[c] == hi[c] && cond(lo[c]) <= cut) {
                closed = std::max(closed, cond(lo[c]) + rhs_term);
                return false;
            }
        }
        return normalize_bounds(lo, hi);
    }

    // Projected subgradient descent on the Lagrangian dual; every relaxation
    // argmax doubles as an incumbent candidate.
    Relax subgrad(Node& nd, int iters) {
        Relax rel;
        const std::size_t nw = nd.lam.size();  // rows learned mid-call join at descendants
        const std::size_t nj = nd.mu.size();
        std::vector<double> gl(nw), gm(m_.has_continuous ? nj : 0);
        std::vector<int> t;
        double scale = 1.0;
        int stall = 0;
        for (int it = 0; it < iters; ++it) {
            build_weights(nd.lam, nd.mu);
            const double v = dp_run(nd.lo, nd.hi, t);
            double L = v;
            for (std::size_t r = 0; r < nw; ++r) L += nd.lam[r] * m_.le_constraints[working_[r]].rhs;
            if (L < rel.bound - 1e-15) {
                rel.bound = L;
                rel.t = t;
                rel.lam = nd.lam;
                rel.mu = nd.mu;
                stall = 0;
            } else if (++stall >= 12) {
                scale *= 0.5;
                stall = 0;
            }
            try_inner(t);
            if (rel.bound <= inner_val_ + tol_) break;
            double norm2 = 0.0, spread = 0.0;
            for (std::size_t r = 0; r < nw; ++r) {
                gl[r] = m_.le_constraints[working_[r]].rhs - row_table(working_[r]).dot(t);
                norm2 += gl[r] * gl[r];
            }
            if (m_.has_continuous && nj > 0) {
                double gmin = inf(), gmax = -inf();
                for (std::size_t j = 0; j < nj; ++j) {
                    gm[j] = alt_suf_[active_alts_[j]].dot(t);
                    gmin = std::min(gmin, gm[j]);
                    gmax = std::max(gmax, gm[j]);
                }
                // Only the spread matters on the simplex: shifting every
                // component of the mu-gradient by a constant changes nothing.
                spread = gmax - gmin;
            }
            if (norm2 < 1e-18 && spread < 1e-12) break;
            const double target = inner_val_ > -1e100 ? inner_val_ : rel.bound - 0.05;
            const double gap = std::max(L - target, 1e-12);
            if (norm2 >= 1e-18) {
                const double eta = scale * gap / norm2;
                for (std::size_t r = 0; r < nw; ++r) nd.lam[r] = std::max(0.0, nd.lam[r] - eta * gl[r]);
            }
            if (m_.has_continuous && spread >= 1e-12)
                hedge_step(nd.mu, gm, scale * gap / (spread * spread));
        }
        return rel;
    }

    bool limits_hit(SolveStatus& st) const {
        if (limits_.max_nodes > 0 && nodes_ >= limits_.max_nodes) {
            st = SolveStatus::node_limit;
            return true;
        }
        if (limits_.wall_time_sec > 0.0) {
            const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
            if (el > limits_.wall_time_sec) {
                st = SolveStatus::time_limit;
                return true;
            }
        }
        return false;
    }

    Inner bnb(const std::vector<int>& root_lo, const std::vector<int>& root_hi,
              const std::vector<std::vector<int>>& seeds) {
        inner_t_.reset();
        inner_val_ = -inf();
        for (const auto& s : seeds) {
            bool in = s.size() == std::size_t(cols_);
            for (int c = 0; in && c < cols_; ++c) in = s[c] >= root_lo[c] && s[c] <= root_hi[c];
            if (in) try_inner(s);
        }
        std::vector<Node> stack;
        stack.push_back(Node{root_lo, root_hi, std::vector<double>(working_.size(), 0.0),
                             m_.has_continuous
                                 ? std::vector<double>(active_alts_.size(), 1.0 / double(active_alts_.size()))
                                 : std::vector<double>(),
                             inf(), 0});
        double closed = -inf();
        while (!stack.empty()) {
            SolveStatus st;
            if (limits_hit(st)) {
                double open = closed;
                for (const auto& nd : stack) open = std::max(open, nd.inherited);
                return Inner{st, inner_t_, inner_val_, std::max(inner_val_, open)};
            }
            Node nd = std::move(stack.back());
            stack.pop_back();
            ++nodes_;
            if (ilp_trace() && nodes_ % 5000 == 0)
                std::fprintf(stderr,
                             "[ilp]   nodes=%ld stack=%zu depth=%d incumbent=%.9g inherited=%.9g "
                             "elapsed=%.1fs\n",
                             nodes_, stack.size(), nd.depth, inner_val_, nd.inherited,
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count());
            if (m_.has_continuous && nd.mu.size() < active_alts_.size()) {
                // Alternatives activated since this node was queued enter with
                // uniform weight; renormalizing keeps mu on the simplex.
                const double fresh = 1.0 / double(active_alts_.size());
                double total = 1.0;
                while (nd.mu.size() < active_alts_.size()) {
                    nd.mu.push_back(fresh);
                    total += fresh;
                }
                for (auto& x : nd.mu) x /= total;
            }
            // Rows learned since this node was queued enter at multiplier zero.
            while (nd.lam.size() < working_.size()) nd.lam.push_back(0.0);
            const double ubox = std::min(nd.inherited, box_upper(nd.lo, nd.hi));
            if (ubox <= inner_val_ + tol_) {
                closed = std::max(closed, ubox);
                continue;
            }
            bool box_infeasible = false;
            for (std::size_t r = 0; r < working_.size() && !box_infeasible; ++r)
                box_infeasible = row_box_min(working_[r], nd.lo, nd.hi) >
                                 m_.le_constraints[working_[r]].rhs + solver_feas_tol;
            if (box_infeasible) continue;
            bool single = true;
            for (int c = 0; c < cols_; ++c)
                if (nd.lo[c] != nd.hi[c]) { single = false; break; }
            if (single) {
                // A fully feasible singleton enters the incumbent, so the
                // bound bookkeeping needs nothing beyond inner_val_.
                try_inner(nd.lo);
                continue;
            }
            const int iters = nd.depth == 0 ? (m_.has_continuous ? 2000 : 400)
                                            : (m_.has_continuous ? 150 : 60);
            Relax rel = subgrad(nd, iters);
            rel.bound = std::min(rel.bound, ubox);
            if (rel.bound <= inner_val_ + tol_) {
                closed = std::max(closed, rel.bound);
                continue;
            }
            // Shrink the box at the best dual point before branching; the
            // node may close outright or collapse to a single region.
            {
                build_weights(rel.lam, rel.mu);
                double rhs_term = 0.0;
                for (std::size_t r = 0; r < rel.lam.size(); ++r)
                    rhs_term += rel.lam[r] * m_.le_constraints[working_[r]].rhs;
                if (!dp_filter(nd.lo, nd.hi, rhs_term, closed)) continue;
                bool now_single = true;
                for (int c = 0; c < cols_; ++c)
                    if (nd.lo[c] != nd.hi[c]) { now_single = false; break; }
                if (now_single) {
                    try_inner(nd.lo);
                    continue;
                }
            }
            // Branch on a threshold interval: prefer the column carrying the
            // most mass of the most violated row at the relaxation argmax.
            int rstar = -1;
            double worst = solver_feas_tol;
            for (std::size_t r = 0; r < working_.size(); ++r) {
                const double viol =
                    row_table(working_[r]).dot(rel.t) - m_.le_constraints[working_[r]].rhs;
                if (viol > worst) {
                    worst = viol;
                    rstar = static_cast<int>(r);
                }
            }
            int cstar = -1;
            if (rstar >= 0) {
                const SuffixTable& st2 = row_table(working_[rstar]);
                double best_mass = -1.0;
                for (int c = 0; c < cols_; ++c)
                    if (nd.lo[c] < nd.hi[c] && st2.at(c, rel.t[c]) > best_mass) {
                        best_mass = st2.at(c, rel.t[c]);
                        cstar = c;
                    }
            }
            int mid;
            if (cstar >= 0) {
                mid = std::clamp(rel.t[cstar], nd.lo[cstar], nd.hi[cstar] - 1);
            } else {
                int width = 0;
                for (int c = 0; c < cols_; ++c)
                    if (nd.hi[c] - nd.lo[c] > width) {
                        width = nd.hi[c] - nd.lo[c];
                        cstar = c;
                    }
                mid = (nd.lo[cstar] + nd.hi[cstar]) / 2;
            }
            Node a{nd.lo, nd.hi, nd.lam, nd.mu, rel.bound, nd.depth + 1};
            a.hi[cstar] = mid;
            Node b{std::move(nd.lo), std::move(nd.hi), std::move(nd.lam), std::move(nd.mu), rel.bound,
                   nd.depth + 1};
            b.lo[cstar] = mid + 1;
            if (normalize_bounds(b.lo, b.hi)) stack.push_back(std::move(b));
            if (normalize_bounds(a.lo, a.hi)) stack.push_back(std::move(a));
        }
        return Inner{SolveStatus::optimal_within_tol, inner_t_, inner_val_,
                     std::max(inner_val_, closed)};
    }

    // Greedily shrink an infeasible region back into the feasible set,
    // removing the cheapest cells from the most violated row first.
    std::optional<std::vector<int>> repair(std::vector<int> t, const std::vector<int>& lo,
                                           const std::vector<int>& hi) {
        const std::size_t m = typeI_.size();
        std::vector<double> dots(m);
        for (std::size_t r = 0; r < m; ++r) dots[r] = dense_dot(m_.le_constraints[typeI_[r]], t);
        for (int guard = 0; guard <= n_ + cols_; ++guard) {
            int rstar = -1;
            double worst = solver_feas_tol;
            for (std::size_t r = 0; r < m; ++r) {
                const double viol = dots[r] - m_.le_constraints[typeI_[r]].rhs;
                if (viol > worst) {
                    worst = viol;
                    rstar = static_cast<int>(r);
                }
            }
            if (rstar < 0) return t;
            const LeRow& vr = m_.le_constraints[typeI_[rstar]];
            int cbest = -1;
            double sbest = -inf();
            for (int c = 0; c < cols_; ++c) {
                if (t[c] >= hi[c]) continue;
                if (c + 1 < cols_ && t[c] >= t[c + 1]) continue;
                (void)lo;
                const int cell = c * rpc_ + t[c];
                const double score = vr.a[cell] / (std::max(repair_cost_[cell], 0.0) + 1e-15);
                if (score > sbest) {
                    sbest = score;
                    cbest = c;
                }
            }
            if (cbest < 0) return std::nullopt;
            const int cell = cbest * rpc_ + t[cbest];
            for (std::size_t r = 0; r < m; ++r) dots[r] -= m_.le_constraints[typeI_[r]].a[cell];
            ++t[cbest];
        }
        return std::nullopt;
    }

    SolveResult infeasible_result() const {
        SolveResult res;
        res.decision = DecisionVector(n_);
        res.status = SolveStatus::infeasible;
        return res;
    }

    SolveResult limited_result(const Inner& in) {
        SolveResult res;
        if (full_t_) {
            res.decision = from_thresholds(space_, *full_t_);
            res.objective_value = full_val_;
        } else if (in.t) {
            res.decision = from_thresholds(space_, *in.t);
            res.objective_value = in.value;
        } else {
            res.decision = DecisionVector(n_);
            res.objective_value = -inf();
        }
        res.best_bound = in.bound;
        res.abs_gap = res.best_bound - res.objective_value;
        res.status = in.status;
        return res;
    }

    const ILPModel& m_;
    double tol_;
    const SolveLimits& limits_;
    SampleSpace space_;
    int cols_ = 0, rpc_ = 0, n_ = 0;
    std::vector<int> typeI_, altI_;
    SuffixTable obj_suf_, obj_pos_;
    std::vector<SuffixTable> alt_suf_, alt_pos_;
    bool mono_ = false;
    std::vector<int> root_lo_, root_hi_;
    std::vector<double> repair_cost_;
    std::map<int, RowTables> row_suf_;
    std::vector<int> working_;
    std::vector<char> in_working_;  // per le_constraints row, aligned by index
    std::vector<int> active_alts_;       // alternatives the dual machinery carries
    std::vector<char> alt_active_flag_;  // per alternative, aligned with alt_suf_
    std::optional<std::vector<int>> inner_t_, full_t_;
    double inner_val_ = 0.0, full_val_ = 0.0;
    long nodes_ = 0;
    std::chrono::steady_clock::time_point t0_;
    std::vector<double> w_, f_, b_;
};

}  // namespace detail

inline SolveResult solve(const ILPModel& model, double abs_tol = 2.5e-4,
                         const std::optional<DecisionVector>& extra_lower_bounds = std::nullopt,
                         const std::optional<DecisionVector>& extra_upper_bounds = std::nullopt,
                         const SolveLimits& limits = SolveLimits{}) {
    detail::RegionSolver s(model, abs_tol, limits);
    return s.run(extra_lower_bounds, extra_upper_bounds);
}

}  // namespace exact2x2
