#pragma once

// MPS writer/reader for the region programs. Classic section layout
// (ROWS/COLUMNS/RHS/BOUNDS with INTORG markers and BV bounds), deterministic
// d_i / c_j naming, OBJSENSE MAX, and value fields wide enough to round-trip
// coefficients to 1e-12. The NAME record encodes the grid shape so a
// re-parsed model is complete.

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "exact2x2/ilp.hpp"

namespace exact2x2 {

namespace detail {

inline std::string mps_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

inline void mps_entry(std::ostream& out, const std::string& col, const std::string& row, double v) {
    out << "    " << col;
    for (std::size_t k = col.size(); k < 10; ++k) out << ' ';
    out << row;
    for (std::size_t k = row.size(); k < 10; ++k) out << ' ';
    out << mps_num(v) << "\n";
}

}  // namespace detail

inline void export_mps(const ILPModel& model, std::ostream& out) {
    const int n = model.binary_count;
    const std::size_t nle = model.le_constraints.size();
    const auto row_name = [](std::size_t j) { return "c_" + std::to_string(j + 1); };
    const auto col_name = [](int i) { return "d_" + std::to_string(i + 1); };

    out << "NAME          EXACT2X2_" << model.cols << "X" << model.rows_per_col << "\n";
    out << "OBJSENSE\n    MAX\n";
    out << "ROWS\n N  OBJ\n";
    for (std::size_t j = 0; j < nle + model.precedence.size(); ++j) out << " L  " << row_name(j) << "\n";

    // Bucket every constraint entry by column so COLUMNS stays one pass.
    std::vector<std::vector<std::pair<std::size_t, double>>> by_col(n);
    for (std::size_t j = 0; j < nle; ++j) {
        const LeRow& r = model.le_constraints[j];
        for (int i = 0; i < n; ++i)
            if (r.a[i] != 0.0) by_col[i].emplace_back(j, r.a[i]);
    }
    for (std::size_t k = 0; k < model.precedence.size(); ++k) {
        by_col[model.precedence[k].first].emplace_back(nle + k, 1.0);   // d_i - d_k <= 0
        by_col[model.precedence[k].second].emplace_back(nle + k, -1.0);
    }

    out << "COLUMNS\n";
    out << "    MARKER                 'MARKER'                 'INTORG'\n";
    for (int i = 0; i < n; ++i) {
        if (model.objective[i] != 0.0) detail::mps_entry(out, col_name(i), "OBJ", model.objective[i]);
        for (const auto& [j, v] : by_col[i]) detail::mps_entry(out, col_name(i), row_name(j), v);
    }
    out << "    MARKER                 'MARKER'                 'INTEND'\n";
    if (model.has_continuous) {
        if (model.continuous_objective != 0.0)
            detail::mps_entry(out, "z", "OBJ", model.continuous_objective);
        for (std::size_t j = 0; j < nle; ++j)
            if (model.le_constraints[j].cont_coeff != 0.0)
                detail::mps_entry(out, "z", row_name(j), model.le_constraints[j].cont_coeff);
    }

    out << "RHS\n";
    for (std::size_t j = 0; j < nle; ++j)
        if (model.le_constraints[j].rhs != 0.0) detail::mps_entry(out, "RHS", row_name(j), model.le_constraints[j].rhs);

    out << "BOUNDS\n";
    for (int i = 0; i < n; ++i) {
        out << " BV BND       " << col_name(i) << "\n";
    }
    if (model.has_continuous) out << " UP BND       z         1\n";
    out << "ENDATA\n";
}

inline void export_mps(const ILPModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_mps: cannot open " + path);
    export_mps(model, out);
    if (!out.good()) throw std::runtime_error("export_mps: write failed for " + path);
}

inline ILPModel read_mps(std::istream& in) {
    enum class Sec { none, objsense, rows, columns, rhs, bounds, done };
    Sec sec = Sec::none;
    bool integral = false, sense_max = false;
    std::string obj_row;
    std::map<std::string, std::size_t> row_index;   // L rows in declaration order
    std::size_t n_rows = 0;
    struct Entry { std::size_t row; double v; };
    std::map<int, std::vector<Entry>> bin_entries;  // by 0-based binary index
    std::map<int, double> bin_obj;
    std::vector<Entry> cont_entries;
    double cont_obj = 0.0;
    bool has_cont = false;
    std::map<std::size_t, double> rhs_map;
    int cols_shape = 0, rpc_shape = 0;
    int max_bin = -1;

    const auto bin_index = [](const std::string& name) -> int {
        if (name.size() < 3 || name.compare(0, 2, "d_") != 0) return -1;
        return std::stoi(name.substr(2)) - 1;
    };

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '*') continue;
        std::istringstream ls(line);
        if (line[0] != ' ' && line[0] != '\t') {
            std::string kw;
            ls >> kw;
            if (kw == "NAME") {
                std::string nm;
                ls >> nm;
                if (std::sscanf(nm.c_str(), "EXACT2X2_%dX%d", &cols_shape, &rpc_shape) != 2)
                    throw std::runtime_error("read_mps: NAME record does not carry the grid shape");
            } else if (kw == "OBJSENSE") sec = Sec::objsense;
            else if (kw == "ROWS") sec = Sec::rows;
            else if (kw == "COLUMNS") sec = Sec::columns;
            else if (kw == "RHS") sec = Sec::rhs;
            else if (kw == "RANGES") sec = Sec::none;
            else if (kw == "BOUNDS") sec = Sec::bounds;
            else if (kw == "ENDATA") { sec = Sec::done; break; }
            else throw std::runtime_error("read_mps: unknown section " + kw);
            continue;
        }
        switch (sec) {
            case Sec::objsense: {
                std::string s;
                ls >> s;
                if (s == "MAX" || s == "MAXIMIZE") sense_max = true;
                else throw std::runtime_error("read_mps: only OBJSENSE MAX is supported");
                break;
            }
            case Sec::rows: {
                std::string type, name;
                ls >> type >> name;
                if (type == "N") obj_row = name;
                else if (type == "L") row_index[name] = n_rows++;
                else throw std::runtime_error("read_mps: unsupported row type " + type);
                break;
            }
            case Sec::columns: {
                std::string col, f2, f3;
                ls >> col >> f2 >> f3;
                if (f2 == "'MARKER'") {
                    integral = (f3 == "'INTORG'");
                    break;
                }
                const double v = std::stod(f3);
                const auto put = [&](const std::string& row, double val) {
                    if (row == obj_row) {
                        if (integral) bin_obj[bin_index(col)] = val;
                        else cont_obj = val;
                    } else {
                        const auto it = row_index.find(row);
                        if (it == row_index.end()) throw std::runtime_error("read_mps: unknown row " + row);
                        if (integral) bin_entries[bin_index(col)].push_back({it->second, val});
                        else cont_entries.push_back({it->second, val});
                    }
                };
                if (integral) {
                    const int i = bin_index(col);
                    if (i < 0) throw std::runtime_error("read_mps: binary column not named d_i: " + col);
                    max_bin = std::max(max_bin, i);
                } else {
                    has_cont = true;
                }
                put(f2, v);
                std::string f4, f5;
                if (ls >> f4 >> f5) put(f4, std::stod(f5));
                break;
            }
            case Sec::rhs: {
                std::string name, row, val;
                ls >> name >> row >> val;
                const auto it = row_index.find(row);
                if (it == row_index.end()) throw std::runtime_error("read_mps: RHS for unknown row " + row);
                rhs_map[it->second] = std::stod(val);
                std::string row2, val2;
                if (ls >> row2 >> val2) {
                    const auto it2 = row_index.find(row2);
                    if (it2 == row_index.end()) throw std::runtime_error("read_mps: RHS for unknown row " + row2);
                    rhs_map[it2->second] = std::stod(val2);
                }
                break;
            }
            case Sec::bounds: {
                std::string type, set, col;
                ls >> type >> set >> col;
                const int i = bin_index(col);
                if (type == "BV") {
                    if (i < 0) throw std::runtime_error("read_mps: BV bound on non-binary column " + col);
                    max_bin = std::max(max_bin, i);
                }
                break;
            }
            default:
                break;
        }
    }
    if (sec != Sec::done) throw std::runtime_error("read_mps: missing ENDATA");
    if (!sense_max) throw std::runtime_error("read_mps: OBJSENSE MAX section required");

    ILPModel m;
    m.binary_count = max_bin + 1;
    m.cols = cols_shape;
    m.rows_per_col = rpc_shape;
    if (m.binary_count != m.cols * m.rows_per_col)
        throw std::runtime_error("read_mps: column count disagrees with the NAME shape");
    m.objective.assign(m.binary_count, 0.0);
    for (const auto& [i, v] : bin_obj) m.objective[i] = v;
    m.has_continuous = has_cont;
    m.continuous_objective = cont_obj;

    // Assemble dense rows, then split structural precedence rows (exactly
    // two +-1 binary entries, no rhs, no continuous part) back out.
    std::vector<std::vector<std::pair<int, double>>> row_cells(n_rows);
    std::vector<double> row_cont(n_rows, 0.0);
    for (const auto& [i, entries] : bin_entries)
        for (const auto& e : entries) row_cells[e.row].emplace_back(i, e.v);
    for (const auto& e : cont_entries) row_cont[e.row] = e.v;

    for (std::size_t j = 0; j < n_rows; ++j) {
        const double rhs = rhs_map.count(j) ? rhs_map.at(j) : 0.0;
        const auto& cells = row_cells[j];
        if (cells.size() == 2 && rhs == 0.0 && row_cont[j] == 0.0) {
            const bool fwd = cells[0].second == 1.0 && cells[1].second == -1.0;
            const bool rev = cells[0].second == -1.0 && cells[1].second == 1.0;
            if (fwd || rev) {
                const int i = fwd ? cells[0].first : cells[1].first;
                const int k = fwd ? cells[1].first : cells[0].first;
                m.precedence.emplace_back(i, k);
                continue;
            }
        }
        LeRow r;
        r.a.assign(m.binary_count, 0.0);
        for (const auto& [i, v] : cells) r.a[i] = v;
        r.cont_coeff = row_cont[j];
        r.rhs = rhs;
        m.le_constraints.push_back(std::move(r));
    }
    return m;
}

inline ILPModel read_mps(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_mps: cannot open " + path);
    return read_mps(in);
}

}  // namespace exact2x2
