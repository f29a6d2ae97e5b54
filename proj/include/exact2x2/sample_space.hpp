#pragma once

// Canonical enumeration of the sample space of a two-arm design, the
// neighbor structure used by the convexity condition, and rejection regions
// as packed bit vectors.
//
// Ordering is row-major lexicographic and 1-based in external naming:
// index(s) = s_C*(n_D+1) + s_D + 1. Internal array positions are index-1.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "exact2x2/prob.hpp"

namespace exact2x2 {

class SampleSpace {
  public:
    explicit SampleSpace(Design design) : design_(design) {
        if (design.n_C < 1 || design.n_D < 1) throw std::domain_error("SampleSpace: group sizes must be >= 1");
    }

    const Design& design() const { return design_; }
    int size() const { return (design_.n_C + 1) * (design_.n_D + 1); }
    int cols() const { return design_.n_C + 1; }
    int rows_per_col() const { return design_.n_D + 1; }

    // 0-based array position; the external 1-based index is pos+1.
    int pos(const Outcome& s) const {
        check(s);
        return s.s_C * (design_.n_D + 1) + s.s_D;
    }
    int index(const Outcome& s) const { return pos(s) + 1; }

    Outcome outcome_at(int pos) const {
        if (pos < 0 || pos >= size()) throw std::out_of_range("SampleSpace: position out of range");
        return Outcome{pos / (design_.n_D + 1), pos % (design_.n_D + 1)};
    }

    // Neighbor positions; -1 when the step leaves the sample space.
    int succ_C(int pos) const {  // s + (1,0)
        const Outcome s = outcome_at(pos);
        return s.s_C < design_.n_C ? pos + design_.n_D + 1 : -1;
    }
    int succ_D(int pos) const {  // s + (0,1)
        const Outcome s = outcome_at(pos);
        return s.s_D < design_.n_D ? pos + 1 : -1;
    }

  private:
    void check(const Outcome& s) const {
        if (s.s_C < 0 || s.s_C > design_.n_C || s.s_D < 0 || s.s_D > design_.n_D)
            throw std::out_of_range("SampleSpace: outcome out of range");
    }
    Design design_;
};

inline SampleSpace enumerate(Design design) { return SampleSpace(design); }

// Rejection region: one bit per sample-space position, packed.
class DecisionVector {
  public:
    DecisionVector() = default;
    explicit DecisionVector(int size) : size_(size), words_((size + 63) / 64, 0) {}

    int size() const { return size_; }
    bool get(int i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
    void set(int i, bool v) {
        const std::uint64_t mask = std::uint64_t(1) << (i & 63);
        if (v) words_[i >> 6] |= mask; else words_[i >> 6] &= ~mask;
    }
    int count() const {
        int c = 0;
        for (auto w : words_) c += __builtin_popcountll(w);
        return c;
    }
    bool any() const {
        for (auto w : words_) if (w) return true;
        return false;
    }

    bool operator==(const DecisionVector& o) const { return size_ == o.size_ && words_ == o.words_; }
    bool operator!=(const DecisionVector& o) const { return !(*this == o); }

    // True when this region is contained in o (elementwise <=).
    bool subset_of(const DecisionVector& o) const {
        for (std::size_t w = 0; w < words_.size(); ++w)
            if (words_[w] & ~o.words_[w]) return false;
        return true;
    }

    // Lexicographic order on the bit string d_1 d_2 ... d_N (0 before 1).
    bool lex_less(const DecisionVector& o) const {
        for (std::size_t w = 0; w < words_.size(); ++w) {
            const std::uint64_t diff = words_[w] ^ o.words_[w];
            if (diff) {
                const int bit = __builtin_ctzll(diff);
                return !((words_[w] >> bit) & 1u);
            }
        }
        return false;
    }

  private:
    int size_ = 0;
    std::vector<std::uint64_t> words_;
};

// Dot product of a dense coefficient row with the selected cells.
inline double masked_sum(const std::vector<double>& coeffs, const DecisionVector& d) {
    if (static_cast<int>(coeffs.size()) != d.size()) throw std::invalid_argument("masked_sum: size mismatch");
    double total = 0.0;
    for (int i = 0; i < d.size(); ++i)
        if (d.get(i)) total += coeffs[i];
    return total;
}

// Barnard convexity: rejection at s implies rejection at s-(1,0) and s+(0,1).
inline bool is_convex(const SampleSpace& space, const DecisionVector& d) {
    if (d.size() != space.size()) throw std::invalid_argument("is_convex: size mismatch");
    for (int p = 0; p < space.size(); ++p) {
        if (!d.get(p)) continue;
        const Outcome s = space.outcome_at(p);
        if (s.s_C > 0 && !d.get(p - space.rows_per_col())) return false;
        const int up = space.succ_D(p);
        if (up >= 0 && !d.get(up)) return false;
    }
    return true;
}

// Column thresholds of a convex region: in column s_C the rejected cells are
// exactly {s_D >= t[s_C]}, with t nondecreasing; t = n_D+1 marks an empty column.
inline std::optional<std::vector<int>> thresholds_of(const SampleSpace& space, const DecisionVector& d) {
    if (!is_convex(space, d)) return std::nullopt;
    std::vector<int> t(space.cols(), space.rows_per_col());
    for (int c = 0; c < space.cols(); ++c) {
        for (int v = 0; v <= space.design().n_D; ++v) {
            if (d.get(c * space.rows_per_col() + v)) { t[c] = v; break; }
        }
    }
    return t;
}

inline DecisionVector from_thresholds(const SampleSpace& space, const std::vector<int>& t) {
    if (static_cast<int>(t.size()) != space.cols()) throw std::invalid_argument("from_thresholds: size mismatch");
    DecisionVector d(space.size());
    for (int c = 0; c < space.cols(); ++c)
        for (int v = t[c]; v <= space.design().n_D; ++v)
            d.set(c * space.rows_per_col() + v, true);
    return d;
}

// P_theta(region rejects) as a masked outer product of the marginal pmfs.
inline double rejection_rate(const SampleSpace& space, const DecisionVector& d, const Theta& theta) {
    if (d.size() != space.size()) throw std::invalid_argument("rejection_rate: size mismatch");
    const Design& dz = space.design();
    std::vector<double> pc(dz.n_C + 1), pd(dz.n_D + 1);
    for (int s = 0; s <= dz.n_C; ++s) pc[s] = binom_pmf(dz.n_C, s, theta.theta_C);
    for (int s = 0; s <= dz.n_D; ++s) pd[s] = binom_pmf(dz.n_D, s, theta.theta_D);
    double total = 0.0;
    for (int c = 0; c <= dz.n_C; ++c) {
        double col = 0.0;
        const int base = c * (dz.n_D + 1);
        for (int v = 0; v <= dz.n_D; ++v)
            if (d.get(base + v)) col += pd[v];
        total += pc[c] * col;
    }
    return total;
}

// Same quantity for a convex region given by thresholds, O(n_C + n_D).
inline double rejection_rate_thresholds(const SampleSpace& space, const std::vector<int>& t, const Theta& theta) {
    const Design& dz = space.design();
    std::vector<double> tail(dz.n_D + 2, 0.0);
    for (int v = dz.n_D; v >= 0; --v) tail[v] = tail[v + 1] + binom_pmf(dz.n_D, v, theta.theta_D);
    double total = 0.0;
    for (int c = 0; c <= dz.n_C; ++c) total += binom_pmf(dz.n_C, c, theta.theta_C) * tail[t[c]];
    return total;
}

// Sparse neighbor-difference rows from the convexity/Lipschitz decomposition.
// Row i of A_C is e_i - e_{(s_C+1, s_D)}; row i of A_D is e_i - e_{(s_C, s_D-1)}.
// Off entries whose slack coefficient is structurally zero are dropped:
// s_C = n_C rows of A_C and s_D = 0 rows of A_D carry only the diagonal.
struct IncidenceRows {
    std::vector<int> off_C;  // per position: paired position in A_C row, -1 if diagonal-only
    std::vector<int> off_D;  // per position: paired position in A_D row, -1 if diagonal-only

    static IncidenceRows build(const SampleSpace& space) {
        IncidenceRows inc;
        inc.off_C.resize(space.size());
        inc.off_D.resize(space.size());
        for (int p = 0; p < space.size(); ++p) {
            const Outcome s = space.outcome_at(p);
            inc.off_C[p] = s.s_C < space.design().n_C ? p + space.rows_per_col() : -1;
            inc.off_D[p] = s.s_D > 0 ? p - 1 : -1;
        }
        return inc;
    }

    // (A_C d)_i and (A_D d)_i for a full decision vector.
    int apply_C(const DecisionVector& d, int i) const {
        return int(d.get(i)) - (off_C[i] >= 0 ? int(d.get(off_C[i])) : 0);
    }
    int apply_D(const DecisionVector& d, int i) const {
        return int(d.get(i)) - (off_D[i] >= 0 ? int(d.get(off_D[i])) : 0);
    }
};

// CSV serialization: columns s_C,s_D,reject in lexicographic order.
inline void write_region_csv(const SampleSpace& space, const DecisionVector& d, std::ostream& out) {
    out << "s_C,s_D,reject\n";
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        out << s.s_C << ',' << s.s_D << ',' << (d.get(p) ? 1 : 0) << '\n';
    }
}

inline void write_region_csv(const SampleSpace& space, const DecisionVector& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    write_region_csv(space, d, out);
}

inline DecisionVector read_region_csv(const SampleSpace& space, std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("s_C,s_D,reject", 0) != 0)
        throw std::runtime_error("region CSV: missing header");
    DecisionVector d(space.size());
    int n_rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int sc, sd, r;
        char comma;
        if (!(ss >> sc >> comma >> sd >> comma >> r) || (r != 0 && r != 1))
            throw std::runtime_error("region CSV: bad row: " + line);
        d.set(space.pos(Outcome{sc, sd}), r == 1);
        ++n_rows;
    }
    if (n_rows != space.size()) throw std::runtime_error("region CSV: row count mismatch");
    return d;
}

inline DecisionVector read_region_csv(const SampleSpace& space, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for read: " + path);
    return read_region_csv(space, in);
}

}  // namespace exact2x2
