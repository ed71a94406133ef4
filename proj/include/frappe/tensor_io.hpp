// SPDX-License-Identifier: Apache-2.0
#pragma once

// Text formats (UTF-8, whitespace separated, 0-based indices):
//
//   coo <order> <d1> ... <dN>        dense <order> <d1> ... <dN>
//   i j k v                          v v v v ...
//   ...                              (row-major, any line breaking)
//
// Values are written with 17 significant digits so a write/parse round trip
// is exact.

#include "frappe/error.hpp"
#include "frappe/tensor.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

namespace frappe {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    const char* first = tok.data();
    if (!tok.empty() && tok.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("non-numeric token '" + std::string(tok) + "'", line);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(tok) + "'", line);
    return v;
}

inline std::size_t parse_size(std::string_view tok, std::size_t line) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("expected a non-negative integer, got '" + std::string(tok) + "'", line);
    }
    return v;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

[[nodiscard]] inline Tensor parse_tensor(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string_view> head;
    std::string head_line;
    while (std::getline(in, head_line)) {
        ++line_no;
        head = detail::split_ws(head_line);
        if (!head.empty()) break;
    }
    if (head.empty()) throw ParseError("empty tensor file", line_no);
    const std::size_t header_line = line_no;
    const std::string kind(head[0]);
    if (kind != "coo" && kind != "dense") {
        throw ParseError("header must start with 'coo' or 'dense', got '" + kind + "'", header_line);
    }
    if (head.size() < 2) throw ParseError("header is missing the order", header_line);
    const std::size_t order = detail::parse_size(head[1], header_line);
    if (order != 3 && order != 4) throw ParseError("order must be 3 or 4", header_line);
    if (head.size() != 2 + order) {
        throw ParseError("header needs exactly " + std::to_string(order) + " dimensions", header_line);
    }
    std::vector<std::size_t> dims;
    for (std::size_t m = 0; m < order; ++m) {
        const std::size_t d = detail::parse_size(head[2 + m], header_line);
        if (d == 0) throw ParseError("dimensions must be >= 1", header_line);
        dims.push_back(d);
    }
    const Shape shape(dims);

    if (kind == "dense") {
        std::vector<double> values;
        values.reserve(shape.size());
        while (std::getline(in, line)) {
            ++line_no;
            for (auto tok : detail::split_ws(line)) {
                if (values.size() == shape.size()) {
                    throw ParseError("more values than the " + std::to_string(shape.size()) +
                                         " the header declares",
                                     line_no);
                }
                values.push_back(detail::parse_double(tok, line_no));
            }
        }
        if (values.size() != shape.size()) {
            throw ParseError("expected " + std::to_string(shape.size()) + " values, found " +
                                 std::to_string(values.size()),
                             line_no);
        }
        return DenseTensor(shape, std::move(values));
    }

    std::vector<Index> indices;
    std::vector<double> values;
    std::unordered_map<std::size_t, std::size_t> seen;  // flat index -> line
    while (std::getline(in, line)) {
        ++line_no;
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != order + 1) {
            throw ParseError("COO entry needs " + std::to_string(order) + " indices and a value",
                             line_no);
        }
        Index idx{};
        for (std::size_t m = 0; m < order; ++m) {
            idx[m] = detail::parse_size(toks[m], line_no);
            if (idx[m] >= dims[m]) {
                throw ParseError("index " + std::to_string(idx[m]) + " out of bounds for mode " +
                                     std::to_string(m) + " of size " + std::to_string(dims[m]),
                                 line_no);
            }
        }
        const double v = detail::parse_double(toks[order], line_no);
        if (v == 0.0) throw ParseError("COO entries must be non-zero", line_no);
        const auto [it, inserted] = seen.emplace(shape.flat(idx), line_no);
        if (!inserted) {
            throw ParseError("duplicate index (first seen on line " + std::to_string(it->second) + ")",
                             line_no);
        }
        indices.push_back(idx);
        values.push_back(v);
    }
    return CooTensor(shape, std::move(indices), std::move(values));
}

[[nodiscard]] inline Tensor parse_tensor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open tensor file '" + path + "'");
    try {
        return parse_tensor(in);
    } catch (const ParseError& e) {
        throw e.in_file(path);
    }
}

inline void write_tensor(std::ostream& out, const DenseTensor& t) {
    out << "dense " << t.order();
    for (auto d : t.shape().dims()) out << ' ' << d;
    out << '\n';
    // One line per innermost fibre.
    const std::size_t row = t.shape().dims().back();
    const auto v = t.values();
    for (std::size_t f = 0; f < v.size(); ++f) {
        out << detail::format_double(v[f]) << ((f + 1) % row == 0 ? '\n' : ' ');
    }
}

inline void write_tensor(std::ostream& out, const CooTensor& t) {
    out << "coo " << t.order();
    for (auto d : t.shape().dims()) out << ' ' << d;
    out << '\n';
    for (std::size_t e = 0; e < t.nnz(); ++e) {
        for (std::size_t m = 0; m < t.order(); ++m) out << t.indices()[e][m] << ' ';
        out << detail::format_double(t.values()[e]) << '\n';
    }
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
    std::visit([&](const auto& x) { write_tensor(out, x); }, t);
}

template <typename T>
void write_tensor(const std::string& path, const T& t) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_tensor(out, t);
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace frappe
