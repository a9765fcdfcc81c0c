#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "va/errors.hpp"

namespace va {

// Dense n-dimensional array, row-major. Training paths instantiate float,
// gradient-check suites instantiate double over the same code.
template <typename T>
class TensorT {
  public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(element_count(shape_), T(0));
    }

    TensorT(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != element_count(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    static TensorT full(std::vector<int> shape, T value) {
        TensorT t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(size_t axis) const { return shape_[axis]; }
    size_t rank() const { return shape_.size(); }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    // Flat offsets for the common ranks; callers index hot loops directly.
    size_t offset(int i, int j) const { return static_cast<size_t>(i) * shape_[1] + j; }
    size_t offset(int i, int j, int k) const {
        return (static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k;
    }
    size_t offset(int i, int j, int k, int l) const {
        return ((static_cast<size_t>(i) * shape_[1] + j) * static_cast<size_t>(shape_[2]) + k) *
                   shape_[3] +
               l;
    }

    T& at(int i, int j) { return data_[offset(i, j)]; }
    const T& at(int i, int j) const { return data_[offset(i, j)]; }
    T& at(int i, int j, int k, int l) { return data_[offset(i, j, k, l)]; }
    const T& at(int i, int j, int k, int l) const { return data_[offset(i, j, k, l)]; }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    std::string shape_str() const { return shape_string(shape_); }

    TensorT zeros_like() const { return TensorT(shape_); }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    static size_t element_count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return n;
    }

    static std::string shape_string(const std::vector<int>& shape) {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) os << ',';
            os << shape[i];
        }
        os << ']';
        return os.str();
    }

  private:
    void check_shape() const {
        for (int d : shape_) {
            if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
        }
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <typename T>
void require_shape(const TensorT<T>& t, const std::vector<int>& expected, const char* what) {
    if (t.shape() != expected) {
        throw ShapeError(std::string(what) + ": expected shape " +
                         TensorT<T>::shape_string(expected) + ", got " + t.shape_str());
    }
}

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

}  // namespace va
