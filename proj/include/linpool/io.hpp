#pragma once

// Plain-text matrix I/O. CSV files may carry one header row; complex data
// use paired columns whose headers end in _re and _im.

#include "linpool/core.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace linpool::io {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Parses a number; nullopt for empty / NA / NaN / non-numeric text.
inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

struct CsvTable {
    std::vector<std::string> header;  // empty when the file has none
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Data, "cannot open " + path);
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (first) {
            first = false;
            // A header is any first row with a non-numeric field.
            bool numeric = true;
            for (const auto& f : fields) numeric = numeric && parse_number(f).has_value();
            if (!numeric) {
                t.header = std::move(fields);
                continue;
            }
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    return t;
}

inline bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// True when the header pairs up as X_re, X_im columns.
inline bool header_is_complex(const std::vector<std::string>& header) {
    if (header.empty() || header.size() % 2 != 0) return false;
    for (std::size_t j = 0; j < header.size(); j += 2)
        if (!ends_with(header[j], "_re") || !ends_with(header[j + 1], "_im")) return false;
    return true;
}

inline MatrixXd numeric_block(const CsvTable& t, const std::string& path) {
    if (t.rows.empty()) fail(ErrorKind::Data, path + ": no data rows");
    const std::size_t cols = t.rows.front().size();
    if (!t.header.empty() && t.header.size() != cols)
        fail(ErrorKind::Data, path + ": header has " + std::to_string(t.header.size()) + " columns, data has " +
                                  std::to_string(cols));
    MatrixXd m(static_cast<Index>(t.rows.size()), static_cast<Index>(cols));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (t.rows[i].size() != cols)
            fail(ErrorKind::Data, path + ":" + std::to_string(t.line_numbers[i]) + ": expected " + std::to_string(cols) +
                                      " fields, got " + std::to_string(t.rows[i].size()));
        for (std::size_t j = 0; j < cols; ++j) {
            const auto v = parse_number(t.rows[i][j]);
            if (!v)
                fail(ErrorKind::Data, path + ":" + std::to_string(t.line_numbers[i]) + ": non-numeric value '" +
                                          t.rows[i][j] + "'");
            m(static_cast<Index>(i), static_cast<Index>(j)) = *v;
        }
    }
    return m;
}

inline MatrixXd read_matrix(const std::string& path) { return numeric_block(read_csv(path), path); }

/// Reads a data file; returns a complex matrix when the header says so.
struct LoadedData {
    MatrixXd real;
    MatrixXcd complex;
    bool is_complex = false;
    Index p() const { return is_complex ? complex.cols() : real.cols(); }
    Index n() const { return is_complex ? complex.rows() : real.rows(); }
};

inline LoadedData read_data(const std::string& path) {
    const CsvTable t = read_csv(path);
    const MatrixXd m = numeric_block(t, path);
    LoadedData out;
    if (header_is_complex(t.header)) {
        out.is_complex = true;
        out.complex.resize(m.rows(), m.cols() / 2);
        for (Index j = 0; j < out.complex.cols(); ++j)
            for (Index i = 0; i < m.rows(); ++i) out.complex(i, j) = cdouble(m(i, 2 * j), m(i, 2 * j + 1));
    } else {
        out.real = m;
    }
    return out;
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_matrix(const std::string& path, const MatrixXd& m) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Data, "cannot write " + path);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_number(m(i, j));
        out << '\n';
    }
}

/// Complex matrices are written with paired c<j>_re, c<j>_im columns.
inline void write_matrix(const std::string& path, const MatrixXcd& m) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Data, "cannot write " + path);
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << 'c' << j + 1 << "_re,c" << j + 1 << "_im";
    out << '\n';
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j)
            out << (j ? "," : "") << format_number(m(i, j).real()) << ',' << format_number(m(i, j).imag());
        out << '\n';
    }
}

}  // namespace linpool::io
