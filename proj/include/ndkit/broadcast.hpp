#pragma once

#include <cmath>

#include "ndkit/ndarray.hpp"

namespace ndkit {

// Shapes are aligned at the trailing axis; the shorter one is padded with 1s
// on the left.  Axes must then match or be 1 (a size-1 axis is stretched).
struct BroadcastPlan {
    Shape a_padded;
    Shape b_padded;
    Shape out;
    bool same_shape;
};

BroadcastPlan broadcast_shapes(const Shape& a, const Shape& b);

namespace detail {

// Strides of `orig` viewed through the padded/stretched shape: padded-in axes
// and stretched size-1 axes contribute stride 0 so the same element is reused.
inline std::vector<Dim> broadcast_strides(const Shape& orig, const Shape& padded,
                                          const Shape& out) {
    const std::size_t offset = padded.size() - orig.size();
    const auto base = row_major_strides(orig);
    std::vector<Dim> st(padded.size(), 0);
    for (std::size_t d = offset; d < padded.size(); ++d)
        st[d] = (padded[d] == 1 && out[d] > 1) ? 0 : base[d - offset];
    return st;
}

// General strided kernel: walks the output in row-major order keeping one
// running offset per input.  Used whenever the shapes differ; tests also call
// it directly on equal shapes to pin down that the contiguous fast path
// computes exactly the same bits.
template <std::floating_point T, typename F>
Ndarray<T> broadcast_binary_general(const Ndarray<T>& a, const Ndarray<T>& b, F&& f) {
    const auto plan = broadcast_shapes(a.shape(), b.shape());
    const auto sa = broadcast_strides(a.shape(), plan.a_padded, plan.out);
    const auto sb = broadcast_strides(b.shape(), plan.b_padded, plan.out);
    Ndarray<T> out(plan.out);

    const std::size_t rank = plan.out.size();
    std::vector<Dim> idx(rank, 0);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    Dim offa = 0, offb = 0;
    for (Dim flat = 0, n = out.numel(); flat < n; ++flat) {
        po[flat] = f(pa[offa], pb[offb]);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            offa += sa[d];
            offb += sb[d];
            if (idx[d] < plan.out[d]) break;
            idx[d] = 0;
            offa -= sa[d] * plan.out[d];
            offb -= sb[d] * plan.out[d];
        }
    }
    return out;
}

template <std::floating_point T, typename F>
Ndarray<T> broadcast_binary(const Ndarray<T>& a, const Ndarray<T>& b, F&& f) {
    if (a.shape() == b.shape()) {
        // Contiguous fast path: both inputs share the output's layout.
        Ndarray<T> out(a.shape());
        const T* pa = a.data();
        const T* pb = b.data();
        T* po = out.data();
        for (Dim i = 0, n = out.numel(); i < n; ++i) po[i] = f(pa[i], pb[i]);
        return out;
    }
    return broadcast_binary_general(a, b, std::forward<F>(f));
}

template <std::floating_point T, typename F>
Ndarray<T>& binary_inplace(Ndarray<T>& a, const Ndarray<T>& b, F&& f) {
    if (a.shape() != b.shape())
        throw ShapeError("in-place operation needs matching shapes, got " +
                         shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    T* pa = a.data();
    const T* pb = b.data();
    for (Dim i = 0, n = a.numel(); i < n; ++i) pa[i] = f(pa[i], pb[i]);
    return a;
}

}  // namespace detail

// ---- broadcasting arithmetic ---------------------------------------------

template <std::floating_point T>
Ndarray<T> add(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return x + y; });
}
template <std::floating_point T>
Ndarray<T> sub(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return x - y; });
}
template <std::floating_point T>
Ndarray<T> mul(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return x * y; });
}
template <std::floating_point T>
Ndarray<T> div(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return x / y; });
}
template <std::floating_point T>
Ndarray<T> pow(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return std::pow(x, y); });
}
template <std::floating_point T>
Ndarray<T> atan2(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return std::atan2(x, y); });
}
template <std::floating_point T>
Ndarray<T> rem(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return std::fmod(x, y); });
}
template <std::floating_point T>
Ndarray<T> min2(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return y < x ? y : x; });
}
template <std::floating_point T>
Ndarray<T> max2(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return x < y ? y : x; });
}

// In-place twins; these require matching shapes since the left operand's
// buffer is reused as the output.
template <std::floating_point T>
Ndarray<T>& add_(Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::binary_inplace(a, b, [](T x, T y) { return x + y; });
}
template <std::floating_point T>
Ndarray<T>& sub_(Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::binary_inplace(a, b, [](T x, T y) { return x - y; });
}
template <std::floating_point T>
Ndarray<T>& mul_(Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::binary_inplace(a, b, [](T x, T y) { return x * y; });
}
template <std::floating_point T>
Ndarray<T>& div_(Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::binary_inplace(a, b, [](T x, T y) { return x / y; });
}

// ---- scalar forms -----------------------------------------------------------

template <std::floating_point T>
Ndarray<T> add_scalar(const Ndarray<T>& a, T s) {
    return a.map([s](T x) { return x + s; });
}
template <std::floating_point T>
Ndarray<T> sub_scalar(const Ndarray<T>& a, T s) {
    return a.map([s](T x) { return x - s; });
}
template <std::floating_point T>
Ndarray<T> mul_scalar(const Ndarray<T>& a, T s) {
    return a.map([s](T x) { return x * s; });
}
template <std::floating_point T>
Ndarray<T> div_scalar(const Ndarray<T>& a, T s) {
    return a.map([s](T x) { return x / s; });
}
template <std::floating_point T>
Ndarray<T> pow_scalar(const Ndarray<T>& a, T s) {
    return a.map([s](T x) { return std::pow(x, s); });
}
template <std::floating_point T>
Ndarray<T> scalar_sub(T s, const Ndarray<T>& a) {
    return a.map([s](T x) { return s - x; });
}
template <std::floating_point T>
Ndarray<T> scalar_div(T s, const Ndarray<T>& a) {
    return a.map([s](T x) { return s / x; });
}

// ---- comparisons --------------------------------------------------------------
// elt_* produce 0/1 masks (with broadcasting); the plain forms answer whether
// the relation holds for every element and require matching shapes.

template <std::floating_point T>
Ndarray<T> elt_equal(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return T(x == y); });
}
template <std::floating_point T>
Ndarray<T> elt_not_equal(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return T(x != y); });
}
template <std::floating_point T>
Ndarray<T> elt_greater(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return T(x > y); });
}
template <std::floating_point T>
Ndarray<T> elt_less(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return T(x < y); });
}
template <std::floating_point T>
Ndarray<T> elt_greater_equal(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return T(x >= y); });
}
template <std::floating_point T>
Ndarray<T> elt_less_equal(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::broadcast_binary(a, b, [](T x, T y) { return T(x <= y); });
}

namespace detail {
template <std::floating_point T, typename F>
bool compare_all(const Ndarray<T>& a, const Ndarray<T>& b, F&& f) {
    if (a.shape() != b.shape())
        throw ShapeError("whole-array comparison needs matching shapes, got " +
                         shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    for (Dim i = 0, n = a.numel(); i < n; ++i)
        if (!f(a.data()[i], b.data()[i])) return false;
    return true;
}
}  // namespace detail

template <std::floating_point T>
bool equal(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::compare_all(a, b, [](T x, T y) { return x == y; });
}
template <std::floating_point T>
bool greater(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::compare_all(a, b, [](T x, T y) { return x > y; });
}
template <std::floating_point T>
bool less(const Ndarray<T>& a, const Ndarray<T>& b) {
    return detail::compare_all(a, b, [](T x, T y) { return x < y; });
}

}  // namespace ndkit
