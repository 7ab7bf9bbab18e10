#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "semifl/errors.hpp"

namespace semifl {

using shape_t = std::vector<std::size_t>;

inline std::size_t element_count(const shape_t& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const shape_t& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

/// Dense row-major array. Value type: copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(shape_t shape, T fill = T{0}) : shape_(std::move(shape)), data_(element_count(shape_), fill) {
        check_shape();
    }

    Tensor(shape_t shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != element_count(shape_))
            throw internal_error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                 semifl::to_string(shape_));
    }

    const shape_t& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Same data, new shape with the same element count.
    Tensor reshaped(shape_t shape) const {
        if (element_count(shape) != data_.size())
            throw internal_error("cannot reshape " + semifl::to_string(shape_) + " to " + semifl::to_string(shape));
        return Tensor(std::move(shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    void check_shape() const {
        for (auto d : shape_)
            if (d == 0) throw internal_error("tensor dimensions must be positive, got " + semifl::to_string(shape_));
    }

    shape_t shape_;
    std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw internal_error(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                             to_string(b.shape()));
}

} // namespace semifl
