#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pauselab/errors.hpp"

namespace pauselab {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int e : s) {
        if (e <= 0) {
            throw ShapeError("tensor extents must be positive");
        }
        n *= static_cast<size_t>(e);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        os << (i ? "x" : "") << s[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major tensor. `T` is float for training and double for
/// gradient-check mode; the precision flag in TrainConfig picks which
/// instantiation a run uses.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad; // empty until first backward; otherwise same length as data

    Tensor() = default;

    Tensor(Shape s, std::vector<T> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("tensor data length does not match shape " + shape_str(shape));
        }
    }

    static Tensor zeros(Shape s, bool rg = false) {
        const size_t n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(n, T(0)), rg);
    }

    static Tensor full(Shape s, T v, bool rg = false) {
        const size_t n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(n, v), rg);
    }

    size_t numel() const { return data.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    T& at(int i) { return data[static_cast<size_t>(i)]; }
    T& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    const T& at(int i) const { return data[static_cast<size_t>(i)]; }
    const T& at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

    void ensure_grad() {
        if (grad.size() != data.size()) {
            grad.assign(data.size(), T(0));
        }
    }

    void zero_grad() { grad.assign(data.size(), T(0)); }
};

/// A tensor with the name it is reported/serialized under.
template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T>* tensor;
};

template <typename T>
inline bool all_finite(const std::vector<T>& v) {
    for (T x : v) {
        if (!std::isfinite(static_cast<double>(x))) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Raw matmul kernels over row-major buffers. These carry nearly all of the
// training FLOPs, so they are written to keep the inner loops contiguous.
// ---------------------------------------------------------------------------

/// C(m x n) += A(m x k) * B(k x n)
template <typename T>
void mm_nn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// C(m x n) += A(m x k) * B(n x k)^T
template <typename T>
void mm_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] += acc;
        }
    }
}

/// C(k x n) += A(m x k)^T * B(m x n)
template <typename T>
void mm_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        const T* brow = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            T* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

} // namespace pauselab
