// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "frappe/error.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace frappe {

/// Maximum tensor order supported by the library.
inline constexpr std::size_t kMaxOrder = 4;

/// Multi-index into a tensor; entries past `order()` are ignored and kept 0.
using Index = std::array<std::size_t, kMaxOrder>;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dimensions of an order-3 or order-4 tensor. Indices are 0-based.
class Shape {
public:
    explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        if (dims_.size() != 3 && dims_.size() != 4) {
            throw InvalidArgument("tensor order must be 3 or 4, got " +
                                  std::to_string(dims_.size()));
        }
        for (std::size_t d : dims_) {
            if (d == 0) throw InvalidArgument("tensor dimensions must be >= 1");
        }
        strides_.assign(dims_.size(), 1);
        for (std::size_t m = dims_.size() - 1; m-- > 0;) {
            strides_[m] = strides_[m + 1] * dims_[m + 1];
        }
        size_ = strides_[0] * dims_[0];
    }

    Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

    [[nodiscard]] std::size_t order() const noexcept { return dims_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t mode) const { return dims_.at(mode); }
    [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    [[nodiscard]] const std::vector<std::size_t>& strides() const noexcept { return strides_; }
    /// Number of entries, the product of all dimensions.
    [[nodiscard]] std::size_t size() const noexcept { return size_; }

    [[nodiscard]] bool contains(const Index& idx) const noexcept {
        for (std::size_t m = 0; m < order(); ++m) {
            if (idx[m] >= dims_[m]) return false;
        }
        return true;
    }

    [[nodiscard]] std::size_t flat(const Index& idx) const noexcept {
        std::size_t f = 0;
        for (std::size_t m = 0; m < order(); ++m) f += idx[m] * strides_[m];
        return f;
    }

    [[nodiscard]] Index unravel(std::size_t flat) const noexcept {
        Index idx{};
        for (std::size_t m = 0; m < order(); ++m) {
            idx[m] = flat / strides_[m];
            flat %= strides_[m];
        }
        return idx;
    }

    /// Shape without `mode`; only meaningful for order-4 shapes.
    [[nodiscard]] Shape without(std::size_t mode) const {
        std::vector<std::size_t> rest;
        for (std::size_t m = 0; m < order(); ++m) {
            if (m != mode) rest.push_back(dims_[m]);
        }
        return Shape(std::move(rest));
    }

    [[nodiscard]] std::string to_string() const {
        std::string s;
        for (std::size_t m = 0; m < order(); ++m) {
            if (m) s += 'x';
            s += std::to_string(dims_[m]);
        }
        return s;
    }

    friend bool operator==(const Shape& a, const Shape& b) noexcept { return a.dims_ == b.dims_; }

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Dense tensor stored row-major (last index varies fastest).
class DenseTensor {
public:
    DenseTensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != shape_.size()) {
            throw InvalidArgument("dense tensor of shape " + shape_.to_string() + " needs " +
                                  std::to_string(shape_.size()) + " values, got " +
                                  std::to_string(values_.size()));
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw InvalidArgument("tensor values must be finite");
        }
    }

    static DenseTensor zeros(Shape shape) {
        std::vector<double> v(shape.size(), 0.0);
        return DenseTensor(std::move(shape), std::move(v));
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t order() const noexcept { return shape_.order(); }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

    [[nodiscard]] double at(const Index& idx) const { return values_[shape_.flat(idx)]; }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return values_[i * shape_.strides()[0] + j * shape_.strides()[1] + k * shape_.strides()[2]];
    }

    friend bool operator==(const DenseTensor& a, const DenseTensor& b) noexcept {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<double> values_;
};

/// Sparse tensor in coordinate form. Stored entries are non-zero, finite and unique.
class CooTensor {
public:
    CooTensor(Shape shape, std::vector<Index> indices, std::vector<double> values)
        : shape_(std::move(shape)), indices_(std::move(indices)), values_(std::move(values)) {
        if (indices_.size() != values_.size()) {
            throw InvalidArgument("COO index and value counts differ");
        }
        std::vector<std::size_t> flats;
        flats.reserve(indices_.size());
        for (std::size_t e = 0; e < indices_.size(); ++e) {
            if (!shape_.contains(indices_[e])) {
                throw InvalidArgument("COO entry " + std::to_string(e) + " is out of bounds");
            }
            if (!std::isfinite(values_[e]) || values_[e] == 0.0) {
                throw InvalidArgument("COO entry " + std::to_string(e) +
                                      " must be finite and non-zero");
            }
            flats.push_back(shape_.flat(indices_[e]));
        }
        std::sort(flats.begin(), flats.end());
        if (std::adjacent_find(flats.begin(), flats.end()) != flats.end()) {
            throw InvalidArgument("COO tensor has duplicate indices");
        }
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t order() const noexcept { return shape_.order(); }
    [[nodiscard]] std::size_t nnz() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const Index> indices() const noexcept { return indices_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

private:
    Shape shape_;
    std::vector<Index> indices_;
    std::vector<double> values_;
};

/// Either storage form, as read from a file.
using Tensor = std::variant<DenseTensor, CooTensor>;

/// CPD factor matrices, one per mode; mode m is dims[m] x R.
class FactorSet {
public:
    explicit FactorSet(std::vector<Eigen::MatrixXd> factors) : factors_(std::move(factors)) {
        if (factors_.size() != 3 && factors_.size() != 4) {
            throw InvalidArgument("factor set needs 3 or 4 factor matrices");
        }
        const Eigen::Index r = factors_.front().cols();
        if (r < 1) throw InvalidArgument("factor rank must be >= 1");
        for (const auto& f : factors_) {
            if (f.cols() != r) throw InvalidArgument("factor matrices disagree on rank");
            if (f.rows() < 1) throw InvalidArgument("factor matrices need at least one row");
            if (!f.allFinite()) throw InvalidArgument("factor entries must be finite");
        }
    }

    [[nodiscard]] std::size_t rank() const noexcept {
        return static_cast<std::size_t>(factors_.front().cols());
    }
    [[nodiscard]] std::size_t order() const noexcept { return factors_.size(); }
    [[nodiscard]] const Eigen::MatrixXd& factor(std::size_t mode) const { return factors_.at(mode); }
    [[nodiscard]] const std::vector<Eigen::MatrixXd>& factors() const noexcept { return factors_; }

    [[nodiscard]] Shape shape() const {
        std::vector<std::size_t> dims;
        for (const auto& f : factors_) dims.push_back(static_cast<std::size_t>(f.rows()));
        return Shape(std::move(dims));
    }

private:
    std::vector<Eigen::MatrixXd> factors_;
};

/// Column-wise Kronecker product. Row index is row-major over the inputs,
/// so the first matrix's row varies slowest. An empty list yields a 1 x R
/// matrix of ones.
[[nodiscard]] inline Eigen::MatrixXd khatri_rao(std::span<const Eigen::MatrixXd> mats,
                                                Eigen::Index rank) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(1, rank);
    for (const auto& m : mats) {
        if (m.cols() != rank) throw InvalidArgument("khatri_rao: column count mismatch");
        Eigen::MatrixXd next(out.rows() * m.rows(), rank);
        for (Eigen::Index p = 0; p < out.rows(); ++p) {
            for (Eigen::Index q = 0; q < m.rows(); ++q) {
                next.row(p * m.rows() + q) = out.row(p).cwiseProduct(m.row(q));
            }
        }
        out = std::move(next);
    }
    return out;
}

/// T = sum_r a_r o b_r o c_r (o d_r).
[[nodiscard]] inline DenseTensor from_factors(const FactorSet& f) {
    const Shape shape = f.shape();
    const auto& fs = f.factors();
    const Eigen::MatrixXd rest = khatri_rao(std::span(fs).subspan(1), fs[0].cols());
    std::vector<double> values(shape.size());
    Eigen::Map<RowMajorMatrix> out(values.data(), fs[0].rows(), rest.rows());
    out.noalias() = fs[0] * rest.transpose();
    return DenseTensor(shape, std::move(values));
}

[[nodiscard]] inline double frobenius_norm(std::span<const double> values) {
    // Scaled accumulation keeps huge or tiny inputs from overflowing.
    double scale = 0.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0.0;
    double sum = 0.0;
    for (double v : values) {
        const double s = v / scale;
        sum += s * s;
    }
    return scale * std::sqrt(sum);
}

[[nodiscard]] inline double frobenius_norm(const DenseTensor& t) { return frobenius_norm(t.values()); }
[[nodiscard]] inline double frobenius_norm(const CooTensor& t) { return frobenius_norm(t.values()); }

/// Count of entries with |x| > 0.
[[nodiscard]] inline std::size_t nnz(const DenseTensor& t) {
    return static_cast<std::size_t>(
        std::count_if(t.values().begin(), t.values().end(), [](double v) { return v != 0.0; }));
}
[[nodiscard]] inline std::size_t nnz(const CooTensor& t) { return t.nnz(); }

[[nodiscard]] inline double density(const DenseTensor& t) {
    return static_cast<double>(nnz(t)) / static_cast<double>(t.size());
}

[[nodiscard]] inline CooTensor to_coo(const DenseTensor& t) {
    std::vector<Index> idx;
    std::vector<double> vals;
    const auto v = t.values();
    for (std::size_t f = 0; f < v.size(); ++f) {
        if (v[f] != 0.0) {
            idx.push_back(t.shape().unravel(f));
            vals.push_back(v[f]);
        }
    }
    return CooTensor(t.shape(), std::move(idx), std::move(vals));
}

[[nodiscard]] inline DenseTensor to_dense(const CooTensor& t) {
    std::vector<double> values(t.shape().size(), 0.0);
    for (std::size_t e = 0; e < t.nnz(); ++e) {
        values[t.shape().flat(t.indices()[e])] = t.values()[e];
    }
    return DenseTensor(t.shape(), std::move(values));
}

[[nodiscard]] inline DenseTensor to_dense(const Tensor& t) {
    return std::visit(
        [](const auto& x) -> DenseTensor {
            if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseTensor>) {
                return x;
            } else {
                return to_dense(x);
            }
        },
        t);
}

/// g + alpha * (|g|_F / |n|_F) * n, so the injected noise has relative norm alpha.
[[nodiscard]] inline DenseTensor add_scaled_noise(const DenseTensor& g, const DenseTensor& n,
                                                  double alpha) {
    if (!(g.shape() == n.shape())) throw InvalidArgument("add_scaled_noise: shape mismatch");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw InvalidArgument("add_scaled_noise: alpha must be finite and >= 0");
    }
    if (alpha == 0.0) return g;
    const double noise_norm = frobenius_norm(n);
    if (noise_norm == 0.0) throw InvalidArgument("add_scaled_noise: noise tensor is zero");
    const double scale = alpha * frobenius_norm(g) / noise_norm;
    std::vector<double> out(g.size());
    const auto gv = g.values();
    const auto nv = n.values();
    for (std::size_t f = 0; f < out.size(); ++f) out[f] = gv[f] + scale * nv[f];
    return DenseTensor(g.shape(), std::move(out));
}

/// Values of the slice fixing `mode` at `index`, in row-major order of the
/// remaining modes.
[[nodiscard]] inline std::vector<double> slice_values(const DenseTensor& t, std::size_t mode,
                                                      std::size_t index) {
    const Shape& s = t.shape();
    if (mode >= s.order()) throw InvalidArgument("slice: mode out of range");
    if (index >= s.dim(mode)) throw InvalidArgument("slice: index out of range");
    // View the tensor as outer x dim(mode) x inner.
    const std::size_t inner = s.strides()[mode];
    const std::size_t outer = s.size() / (inner * s.dim(mode));
    std::vector<double> out;
    out.reserve(outer * inner);
    const auto v = t.values();
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = (o * s.dim(mode) + index) * inner;
        out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(base),
                   v.begin() + static_cast<std::ptrdiff_t>(base + inner));
    }
    return out;
}

/// Matrix slice of an order-3 tensor.
[[nodiscard]] inline Eigen::MatrixXd slice_matrix(const DenseTensor& t, std::size_t mode,
                                                  std::size_t index) {
    if (t.order() != 3) throw InvalidArgument("slice_matrix needs an order-3 tensor");
    std::vector<double> v = slice_values(t, mode, index);
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (std::size_t m = 0; m < 3; ++m) {
        if (m == mode) continue;
        (rows == 0 ? rows : cols) = t.shape().dim(m);
    }
    return Eigen::Map<const RowMajorMatrix>(v.data(), static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(cols));
}

/// Order-3 sub-tensor slice of an order-4 tensor.
[[nodiscard]] inline DenseTensor slice_tensor(const DenseTensor& t, std::size_t mode,
                                              std::size_t index) {
    if (t.order() != 4) throw InvalidArgument("slice_tensor needs an order-4 tensor");
    return DenseTensor(t.shape().without(mode), slice_values(t, mode, index));
}

/// (x - min) / (max - min); a constant tensor maps to all zeros.
[[nodiscard]] inline DenseTensor minmax_normalize(const DenseTensor& t) {
    const auto v = t.values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double min = *lo;
    const double range = *hi - *lo;
    std::vector<double> out(v.size(), 0.0);
    if (range > 0.0) {
        for (std::size_t f = 0; f < v.size(); ++f) out[f] = (v[f] - min) / range;
    }
    return DenseTensor(t.shape(), std::move(out));
}

[[nodiscard]] inline DenseTensor minmax_normalize(const CooTensor& t) {
    return minmax_normalize(to_dense(t));
}

}  // namespace frappe
