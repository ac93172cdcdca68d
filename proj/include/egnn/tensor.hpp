#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "egnn/error.hpp"

namespace egnn {

using Shape = std::vector<std::size_t>;

/// Per-row validity flags; nonzero means the row holds a real vertex.
using Mask = std::vector<std::uint8_t>;

inline std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_volume(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles.
///
/// Storage is a single flat vector; strides are derived from the shape on
/// every access. There are no views: slicing and reshaping copy.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_volume(shape_), fill)
    {
        check_dims();
    }

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data))
    {
        check_dims();
        if (data_.size() != shape_volume(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    /// 2-D tensor from nested rows, mostly for tests and fixtures.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows)
    {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged rows in Tensor::matrix");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    static Tensor identity(std::size_t n)
    {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    template <typename... Idx>
    double& operator()(Idx... idx)
    {
        return data_[offset(idx...)];
    }

    template <typename... Idx>
    double operator()(Idx... idx) const
    {
        return data_[offset(idx...)];
    }

    template <typename... Idx>
    std::size_t offset(Idx... idx) const
    {
        const std::size_t ids[] = {static_cast<std::size_t>(idx)...};
        std::size_t off = 0;
        for (std::size_t a = 0; a < sizeof...(Idx); ++a) off = off * shape_[a] + ids[a];
        return off;
    }

    Tensor reshaped(Shape shape) const
    {
        if (shape_volume(shape) != size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Tensor& operator+=(const Tensor& other)
    {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Tensor& operator*=(double s)
    {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    void check_dims() const
    {
        for (std::size_t d : shape_) {
            if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_string(shape_));
        }
    }

    void require_same_shape(const Tensor& other, const char* op) const
    {
        if (shape_ != other.shape_) {
            throw DimensionError(std::string("shape mismatch in ") + op + ": " + shape_string(shape_) +
                                 " vs " + shape_string(other.shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff on " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// c = a * b for 2-D tensors.
inline Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    Tensor c({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a(i, t);
            for (std::size_t j = 0; j < p; ++j) c(i, j) += av * b(t, j);
        }
    }
    return c;
}

inline Tensor transpose(const Tensor& a)
{
    if (a.rank() != 2) throw DimensionError("transpose needs a matrix, got " + shape_string(a.shape()));
    Tensor t({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
    return t;
}

/// Column-wise softmax of an N x M matrix.
///
/// Rows whose mask entry is false get exactly zero and do not contribute to
/// the normalizer. Each column is shifted by its (unmasked) maximum first.
inline Tensor softmax_columns(const Tensor& x, std::optional<std::span<const std::uint8_t>> mask = std::nullopt)
{
    if (x.rank() != 2) throw DimensionError("softmax_columns needs a matrix, got " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), m = x.dim(1);
    if (mask) {
        if (mask->size() != n) {
            throw DimensionError("softmax mask length " + std::to_string(mask->size()) + " vs " +
                                 std::to_string(n) + " rows");
        }
        if (std::none_of(mask->begin(), mask->end(), [](std::uint8_t b) { return b != 0; })) {
            throw InvalidMaskError("softmax_columns: mask has no true entry");
        }
    }
    auto active = [&](std::size_t i) { return !mask || (*mask)[i] != 0; };
    Tensor out({n, m});
    for (std::size_t c = 0; c < m; ++c) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if (active(i)) mx = std::max(mx, x(i, c));
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active(i)) continue;
            const double e = std::exp(x(i, c) - mx);
            out(i, c) = e;
            total += e;
        }
        for (std::size_t i = 0; i < n; ++i) out(i, c) /= total;
    }
    return out;
}

/// NaN passes through so a diverged forward pass still shows up in the loss.
inline double relu(double x) { return x > 0.0 || std::isnan(x) ? x : 0.0; }

/// tanh(max(x, 0)); the edge activation. Range [0, 1). std::tanh rounds to
/// 1.0 for x above about 19, so the result is capped just below 1.
inline double tanh_relu(double x)
{
    static const double below_one = std::nextafter(1.0, 0.0);
    if (std::isnan(x)) return x;
    return x > 0.0 ? std::min(std::tanh(x), below_one) : 0.0;
}

/// Derivatives with the subgradient at 0 taken as 0.
inline double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }

inline double tanh_relu_grad(double x)
{
    if (x <= 0.0) return 0.0;
    const double t = std::tanh(x);
    return 1.0 - t * t;
}

inline Tensor act_relu(Tensor x)
{
    for (double& v : x.data()) v = relu(v);
    return x;
}

inline Tensor act_tanh_relu(Tensor x)
{
    for (double& v : x.data()) v = tanh_relu(v);
    return x;
}

/// Central-difference gradient of a scalar function.
///
/// Each element of x is perturbed by +-eps in turn; x is restored afterwards.
inline Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, Tensor x,
                                     double eps = 1e-5)
{
    if (!(eps > 0.0)) throw OracleError("finite_difference_grad: eps must be positive");
    Tensor grad(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double up = f(x);
        x[i] = orig - eps;
        const double down = f(x);
        x[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw OracleError("finite_difference_grad: non-finite function value at element " +
                              std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

} // namespace egnn
