#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace vulgnn {

// Dense row-major tensor. Value-semantic; float for training/inference,
// double for verification builds (gradient checks).
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(count(shape), T(0)) {}

    Tensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape)) {
            throw std::invalid_argument("tensor data size does not match shape");
        }
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t(1), std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        assert(rank() == 2);
        return shape[0];
    }
    std::size_t cols() const {
        assert(rank() == 2);
        return shape[1];
    }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    T& at(std::size_t i, std::size_t j) {
        assert(rank() == 2 && i < shape[0] && j < shape[1]);
        return data[i * shape[1] + j];
    }
    const T& at(std::size_t i, std::size_t j) const {
        assert(rank() == 2 && i < shape[0] && j < shape[1]);
        return data[i * shape[1] + j];
    }

    T item() const {
        if (size() != 1) {
            throw std::invalid_argument("item() requires a single-element tensor");
        }
        return data[0];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (const T& v : data) {
            if (!std::isfinite(static_cast<double>(v))) {
                return false;
            }
        }
        return true;
    }
};

template <typename T>
Tensor<T> tensor2(std::size_t r, std::size_t c, std::initializer_list<T> vals) {
    return Tensor<T>({r, c}, std::vector<T>(vals));
}

template <typename T>
Tensor<T> tensor1(std::initializer_list<T> vals) {
    std::vector<T> v(vals);
    const std::size_t n = v.size(); // before the move; argument order is unspecified
    return Tensor<T>({n}, std::move(v));
}

} // namespace vulgnn
