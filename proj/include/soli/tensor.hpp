#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "soli/error.hpp"

namespace soli {

namespace detail {
inline std::string shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}
} // namespace detail

// Dense row-major tensor with an optional gradient buffer of the same shape.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until ensure_grad()

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), T(0));
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw ArgumentError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // 2-D / 3-D / 4-D element access (row-major).
    T& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    const T& at(int i, int j) const {
        return data[static_cast<std::size_t>(i) * dim(1) + j];
    }
    T& at(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    const T& at(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    T& at(int i, int j, int k, int l) {
        return data[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }
    const T& at(int i, int j, int k, int l) const {
        return data[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    std::string shape_str() const { return detail::shape_string(shape); }

    bool operator==(const Tensor&) const = default;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
    Tensor<To> out(src.shape);
    for (std::size_t i = 0; i < src.data.size(); ++i)
        out.data[i] = static_cast<To>(src.data[i]);
    return out;
}

inline void require_shape(const std::vector<int>& expected, const std::vector<int>& got,
                          const std::string& what) {
    if (expected != got)
        throw ArgumentError(what + ": expected shape " + detail::shape_string(expected) +
                            ", got " + detail::shape_string(got));
}

// Padded batch of token id rows, row-major [batch, len].
struct TokenBatch {
    int batch = 0;
    int len = 0;
    std::vector<int> ids;

    TokenBatch() = default;
    TokenBatch(int b, int t) : batch(b), len(t), ids(static_cast<std::size_t>(b) * t, 0) {}

    int& at(int b, int t) { return ids[static_cast<std::size_t>(b) * len + t]; }
    int at(int b, int t) const { return ids[static_cast<std::size_t>(b) * len + t]; }
};

} // namespace soli
