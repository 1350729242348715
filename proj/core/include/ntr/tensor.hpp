#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <type_traits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ntr/common.hpp"

namespace ntr {

/// Ordered list of positive extents. An empty list is a scalar (one element).
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<index_t> dims) : dims_(dims) { validate(); }
    explicit Shape(std::vector<index_t> dims) : dims_(std::move(dims)) { validate(); }

    index_t rank() const { return static_cast<index_t>(dims_.size()); }
    index_t operator[](index_t i) const { return dims_[static_cast<std::size_t>(i)]; }
    const std::vector<index_t>& dims() const { return dims_; }

    index_t numel() const {
        index_t n = 1;
        for (index_t d : dims_) n *= d;
        return n;
    }

    /// Row-major strides (last index varies fastest).
    std::vector<index_t> strides() const {
        std::vector<index_t> s(dims_.size(), 1);
        for (index_t i = rank() - 2; i >= 0; --i)
            s[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i + 1)] * dims_[static_cast<std::size_t>(i + 1)];
        return s;
    }

    bool operator==(const Shape& o) const { return dims_ == o.dims_; }
    bool operator!=(const Shape& o) const { return dims_ != o.dims_; }

    std::string str() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
        os << ')';
        return os.str();
    }

private:
    void validate() const {
        for (index_t d : dims_)
            if (d < 1) throw ShapeError("Shape: every extent must be >= 1, got " + str());
    }

    std::vector<index_t> dims_;
};

/// Dense N-dimensional array, row-major, immutable in spirit: operations
/// return new tensors. The scalar type is double for all correctness work;
/// float is available for faster training.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    using value_type = T;

    Tensor() = default;

    /// Zero-filled tensor.
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), T(0)) {}

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<index_t>(data_.size()) != shape_.numel())
            throw ShapeError("Tensor: element count " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.str());
    }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    index_t rank() const { return shape_.rank(); }
    index_t size() const { return static_cast<index_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::span<const T> data() const { return data_; }
    std::span<T> data() { return data_; }

    T operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }
    T& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }

    /// Multi-index access; test convenience, not a hot path.
    T at(std::span<const index_t> idx) const { return data_[static_cast<std::size_t>(flat(idx))]; }
    T& at(std::span<const index_t> idx) { return data_[static_cast<std::size_t>(flat(idx))]; }
    T at(std::initializer_list<index_t> idx) const { return at(std::span<const index_t>(idx.begin(), idx.size())); }
    T& at(std::initializer_list<index_t> idx) { return at_ref(std::span<const index_t>(idx.begin(), idx.size())); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    T& at_ref(std::span<const index_t> idx) { return data_[static_cast<std::size_t>(flat(idx))]; }

    index_t flat(std::span<const index_t> idx) const {
        if (static_cast<index_t>(idx.size()) != shape_.rank())
            throw ArgumentError("Tensor::at: index rank mismatch");
        index_t f = 0;
        for (index_t a = 0; a < shape_.rank(); ++a) {
            if (idx[static_cast<std::size_t>(a)] < 0 || idx[static_cast<std::size_t>(a)] >= shape_[a])
                throw ArgumentError("Tensor::at: index out of range on axis " + std::to_string(a));
            f = f * shape_[a] + idx[static_cast<std::size_t>(a)];
        }
        return f;
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor64 = Tensor<double>;
using Tensor32 = Tensor<float>;

} // namespace ntr
