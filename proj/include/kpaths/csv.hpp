#pragma once

// Long-format CSV output shared by every experiment kind. One fixed header,
// full double precision, empty cells for not-applicable fields.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace kpaths {

inline constexpr const char* kCsvHeader =
    "t,variable,value,rel_error,norm_sq,nu,ell,N,seed,status";

/// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

struct CsvRow {
    std::optional<double> t;
    std::string variable;
    std::optional<double> value;
    std::optional<double> rel_error;
    std::optional<double> norm_sq;
    std::optional<double> nu;
    std::optional<double> ell;
    std::optional<long> n_points;          ///< the N column
    std::optional<unsigned long> seed;
    std::string status;
};

namespace detail {

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    q += '"';
    return q;
}

inline void append_cell(std::string& line, const std::optional<double>& v) {
    if (v && std::isfinite(*v)) line += format_double(*v);
    line += ',';
}

}  // namespace detail

inline std::string csv_line(const CsvRow& row) {
    std::string line;
    detail::append_cell(line, row.t);
    line += detail::csv_quote(row.variable);
    line += ',';
    detail::append_cell(line, row.value);
    detail::append_cell(line, row.rel_error);
    detail::append_cell(line, row.norm_sq);
    detail::append_cell(line, row.nu);
    detail::append_cell(line, row.ell);
    if (row.n_points) line += std::to_string(*row.n_points);
    line += ',';
    if (row.seed) line += std::to_string(*row.seed);
    line += ',';
    line += detail::csv_quote(row.status);
    return line;
}

inline void write_csv(const std::string& path, const std::vector<CsvRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("write_csv: cannot open '" + path + "' for writing");
    out << kCsvHeader << '\n';
    for (const CsvRow& row : rows) out << csv_line(row) << '\n';
    out.flush();
    if (!out) throw io_error("write_csv: failed while writing '" + path + "'");
}

/// Minimal CSV reader (RFC-4180 quoting) for the files this library writes.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_csv: cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw io_error("read_csv: '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        table.rows.push_back(split_csv_line(line));
    }
    return table;
}

}  // namespace kpaths
