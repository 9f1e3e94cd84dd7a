#pragma once

#include <algorithm>
#include <utility>

#include "ndkit/ndarray.hpp"

namespace ndkit {

struct SingularMatrixError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
template <std::floating_point T>
void require_matrix(const Ndarray<T>& a, const char* what) {
    if (a.rank() != 2)
        throw ShapeError(std::string(what) + " needs a rank-2 array, got " +
                         shape_to_string(a.shape()));
}

// Pivot tolerance is relative to the largest magnitude in the matrix.
template <std::floating_point T>
constexpr T pivot_rel_tol() {
    return std::is_same_v<T, double> ? T(1e-12) : T(1e-6);
}
}  // namespace detail

template <std::floating_point T>
Ndarray<T> identity(Dim n) {
    Ndarray<T> a(Shape{n, n});
    for (Dim i = 0; i < n; ++i) a.data()[i * n + i] = T(1);
    return a;
}

// out[i,j] = sum_k a[i,k] * b[k,j].  The loop nest iterates i, k, j so the
// inner loop streams both b's row and the output row contiguously.
template <std::floating_point T>
Ndarray<T> matmul(const Ndarray<T>& a, const Ndarray<T>& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    const Dim m = a.shape()[0], kk = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != kk)
        throw ShapeError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
    Ndarray<T> out(Shape{m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (Dim i = 0; i < m; ++i)
        for (Dim k = 0; k < kk; ++k) {
            const T aik = pa[i * kk + k];
            const T* brow = pb + k * n;
            T* orow = po + i * n;
            for (Dim j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    return out;
}

template <std::floating_point T>
Ndarray<T> transpose(const Ndarray<T>& a) {
    detail::require_matrix(a, "transpose");
    const Dim m = a.shape()[0], n = a.shape()[1];
    Ndarray<T> out(Shape{n, m});
    for (Dim i = 0; i < m; ++i)
        for (Dim j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
    return out;
}

// LU factorisation with partial (row) pivoting: row i of `lu` holds row
// perm[i] of the input; L sits strictly below the unit diagonal, U on and
// above it.
template <std::floating_point T>
struct LuDecomposition {
    Ndarray<T> lu;
    std::vector<Dim> perm;
    T parity;  // +1 or -1 with the number of row swaps
};

template <std::floating_point T>
LuDecomposition<T> lu(const Ndarray<T>& a) {
    detail::require_matrix(a, "lu");
    if (a.shape()[0] != a.shape()[1])
        throw ShapeError("lu needs a square matrix, got " + shape_to_string(a.shape()));
    const Dim n = a.shape()[0];

    LuDecomposition<T> dec{a, {}, T(1)};
    dec.perm.resize(static_cast<std::size_t>(n));
    for (Dim i = 0; i < n; ++i) dec.perm[static_cast<std::size_t>(i)] = i;

    T* m = dec.lu.data();
    T max_abs = T(0);
    for (Dim i = 0; i < n * n; ++i) max_abs = std::max(max_abs, std::abs(m[i]));
    const T tol = detail::pivot_rel_tol<T>() * max_abs;

    for (Dim k = 0; k < n; ++k) {
        Dim p = k;
        for (Dim i = k + 1; i < n; ++i)
            if (std::abs(m[i * n + k]) > std::abs(m[p * n + k])) p = i;
        if (std::abs(m[p * n + k]) <= tol)
            throw SingularMatrixError("matrix is singular to working precision (pivot " +
                                      std::to_string(k) + ")");
        if (p != k) {
            for (Dim j = 0; j < n; ++j) std::swap(m[k * n + j], m[p * n + j]);
            std::swap(dec.perm[static_cast<std::size_t>(k)], dec.perm[static_cast<std::size_t>(p)]);
            dec.parity = -dec.parity;
        }
        const T pivot = m[k * n + k];
        for (Dim i = k + 1; i < n; ++i) {
            const T f = m[i * n + k] / pivot;
            m[i * n + k] = f;
            for (Dim j = k + 1; j < n; ++j) m[i * n + j] -= f * m[k * n + j];
        }
    }
    return dec;
}

// Solves A x = b for one right-hand side per column of b (rank-1 b is treated
// as a single column and returned in kind).
template <std::floating_point T>
Ndarray<T> solve(const Ndarray<T>& a, const Ndarray<T>& b) {
    const bool vector_rhs = b.rank() == 1;
    const Ndarray<T> rhs = vector_rhs ? b.reshape({b.numel(), 1}) : b;
    detail::require_matrix(rhs, "solve rhs");
    const auto dec = lu(a);
    const Dim n = a.shape()[0];
    if (rhs.shape()[0] != n)
        throw ShapeError("solve: matrix of " + shape_to_string(a.shape()) +
                         " cannot take rhs of " + shape_to_string(b.shape()));
    const Dim k = rhs.shape()[1];
    const T* m = dec.lu.data();
    Ndarray<T> x(Shape{n, k});
    T* px = x.data();

    // Permuted rhs, then forward substitution (unit L), then back substitution.
    for (Dim i = 0; i < n; ++i)
        for (Dim c = 0; c < k; ++c)
            px[i * k + c] = rhs.data()[dec.perm[static_cast<std::size_t>(i)] * k + c];
    for (Dim i = 1; i < n; ++i)
        for (Dim j = 0; j < i; ++j) {
            const T f = m[i * n + j];
            for (Dim c = 0; c < k; ++c) px[i * k + c] -= f * px[j * k + c];
        }
    for (Dim i = n; i-- > 0;) {
        for (Dim j = i + 1; j < n; ++j) {
            const T f = m[i * n + j];
            for (Dim c = 0; c < k; ++c) px[i * k + c] -= f * px[j * k + c];
        }
        const T d = m[i * n + i];
        for (Dim c = 0; c < k; ++c) px[i * k + c] /= d;
    }
    return vector_rhs ? std::move(x).reshape({n}) : x;
}

template <std::floating_point T>
Ndarray<T> inv(const Ndarray<T>& a) {
    detail::require_matrix(a, "inv");
    if (a.shape()[0] != a.shape()[1])
        throw ShapeError("inv needs a square matrix, got " + shape_to_string(a.shape()));
    return solve(a, identity<T>(a.shape()[0]));
}

template <std::floating_point T>
T det(const Ndarray<T>& a) {
    const auto dec = lu(a);
    const Dim n = a.shape()[0];
    T d = dec.parity;
    for (Dim i = 0; i < n; ++i) d *= dec.lu.data()[i * n + i];
    return d;
}

}  // namespace ndkit
