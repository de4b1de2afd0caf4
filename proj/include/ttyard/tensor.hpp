#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace ttyard {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& dims);

/**
 * Row-major n-dimensional array (last index fastest).
 *
 * The scalar type doubles as the precision marker: decompositions run on
 * Tensor<double>, stored model weights and training use Tensor<float>.
 */
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>, "Tensor requires a floating point scalar");

public:
    using value_type = T;

    Tensor() : dims_{1}, data_(1, T{0}) {}

    explicit Tensor(Shape dims, T fill = T{0}) : dims_(std::move(dims)) {
        check_dims(dims_);
        data_.assign(shape_size(dims_), fill);
    }

    Tensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        check_dims(dims_);
        if (data_.size() != shape_size(dims_)) {
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match dims " + shape_to_string(dims_));
        }
    }

    const Shape& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t ndim() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    std::size_t offset(std::span<const std::size_t> index) const {
        if (index.size() != dims_.size()) {
            throw std::out_of_range("index rank " + std::to_string(index.size()) +
                                    " does not match tensor rank " + std::to_string(dims_.size()));
        }
        std::size_t flat = 0;
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            if (index[k] >= dims_[k]) {
                throw std::out_of_range("index " + std::to_string(index[k]) + " out of range for axis " +
                                        std::to_string(k) + " of extent " + std::to_string(dims_[k]));
            }
            flat = flat * dims_[k] + index[k];
        }
        return flat;
    }

    T& at(std::initializer_list<std::size_t> index) {
        return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
    }
    const T& at(std::initializer_list<std::size_t> index) const {
        return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
    }
    T& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
    const T& at(std::span<const std::size_t> index) const { return data_[offset(index)]; }

    /// Same data, new extents. Element count must be preserved.
    Tensor reshaped(Shape dims) const {
        return Tensor(std::move(dims), data_);
    }

    void reshape(Shape dims) {
        check_dims(dims);
        if (shape_size(dims) != data_.size()) {
            throw std::invalid_argument("cannot reshape " + shape_to_string(dims_) + " to " +
                                        shape_to_string(dims));
        }
        dims_ = std::move(dims);
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(dims_, std::move(out));
    }

    double frobenius_norm() const {
        double acc = 0.0;
        for (T v : data_) acc += static_cast<double>(v) * static_cast<double>(v);
        return std::sqrt(acc);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    bool operator==(const Tensor& other) const = default;

private:
    static void check_dims(const Shape& dims) {
        if (dims.empty()) throw std::invalid_argument("tensor dims must be non-empty");
        for (std::size_t d : dims) {
            if (d == 0) throw std::invalid_argument("tensor extents must be >= 1, got " + shape_to_string(dims));
        }
    }

    Shape dims_;
    std::vector<T> data_;
};

using DenseTensor = Tensor<double>;
using TensorF = Tensor<float>;

/// ||a - b||_F / ||b||_F, or ||a - b||_F when b is zero.
template <typename T>
double relative_error(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        diff += d * d;
    }
    const double ref = b.frobenius_norm();
    return ref > 0.0 ? std::sqrt(diff) / ref : std::sqrt(diff);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.dims() != b.dims()) {
        throw std::invalid_argument("max_abs_diff: dims " + shape_to_string(a.dims()) + " vs " +
                                    shape_to_string(b.dims()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return worst;
}

}  // namespace ttyard
