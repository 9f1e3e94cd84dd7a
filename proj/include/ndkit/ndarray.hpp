#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstring>
#include <tuple>
#include <utility>
#include <vector>

#include "ndkit/rng.hpp"
#include "ndkit/shape.hpp"

namespace ndkit {

enum class Kind { F32, F64 };

// Dense n-dimensional array in row-major (C) layout with value semantics.
// Copying copies the buffer; the in-place operations (suffix `_`) mutate the
// receiver and return it so calls can be chained without fresh allocations.
template <std::floating_point T>
class Ndarray {
  public:
    Ndarray() : Ndarray(Shape{1}) {}

    explicit Ndarray(Shape shape) : shape_(std::move(shape)) {
        check_shape(shape_);
        strides_ = row_major_strides(shape_);
        data_.assign(static_cast<std::size_t>(ndkit::numel(shape_)), T(0));
    }

    Ndarray(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        strides_ = row_major_strides(shape_);
        if (static_cast<Dim>(data_.size()) != ndkit::numel(shape_))
            throw ShapeError("buffer of " + std::to_string(data_.size()) +
                             " elements does not fill shape " + shape_to_string(shape_));
    }

    Kind kind() const { return std::is_same_v<T, float> ? Kind::F32 : Kind::F64; }
    const Shape& shape() const { return shape_; }
    const std::vector<Dim>& strides() const { return strides_; }
    Dim rank() const { return static_cast<Dim>(shape_.size()); }
    Dim numel() const { return static_cast<Dim>(data_.size()); }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T get_flat(Dim i) const {
        check_flat(i);
        return data_[static_cast<std::size_t>(i)];
    }
    void set_flat(Dim i, T v) {
        check_flat(i);
        data_[static_cast<std::size_t>(i)] = v;
    }

    // Multi-index access; every index is bounds-checked.
    T at(std::span<const Dim> idx) const { return data_[flat_of(idx)]; }
    void set_at(std::span<const Dim> idx, T v) { data_[flat_of(idx)] = v; }

    template <typename... I>
    T operator()(I... i) const {
        const Dim idx[] = {static_cast<Dim>(i)...};
        return at(std::span<const Dim>(idx, sizeof...(I)));
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    // ---- structural operations -------------------------------------------

    Ndarray reshape(Shape ns) const& {
        Ndarray copy(*this);
        return std::move(copy).reshape(std::move(ns));
    }

    Ndarray reshape(Shape ns) && {
        check_shape(ns);
        if (ndkit::numel(ns) != numel())
            throw ShapeError("cannot reshape " + shape_to_string(shape_) + " into " +
                             shape_to_string(ns) + ": element counts differ");
        shape_ = std::move(ns);
        strides_ = row_major_strides(shape_);
        return std::move(*this);
    }

    // ---- map / fold / scan -------------------------------------------------

    template <typename F>
    Ndarray map(F&& f) const {
        Ndarray out(*this);
        out.map_(std::forward<F>(f));
        return out;
    }

    template <typename F>
    Ndarray& map_(F&& f) {
        for (T& x : data_) x = f(x);
        return *this;
    }

    // Read-only visit of every element in row-major order.
    template <typename F>
    void iter(F&& f) const {
        for (const T& x : data_) f(x);
    }

    // Left fold of the whole array: acc = f(acc, x) in row-major order.
    template <typename F>
    T fold(F&& f, T init) const {
        T acc = init;
        for (const T& x : data_) acc = f(acc, x);
        return acc;
    }

    // Fold along one axis; that axis disappears from the result.  The first
    // element along the axis seeds the accumulator, so no identity value is
    // needed (this is what lets min/max share the implementation).
    template <typename F>
    Ndarray fold_along(Dim axis, F&& f) const {
        auto [outer, n, inner] = split_at(axis);
        Shape out_shape = drop_axis(axis);
        Ndarray out(std::move(out_shape));
        for (Dim o = 0; o < outer; ++o)
            for (Dim i = 0; i < inner; ++i) {
                T acc = data_[static_cast<std::size_t>(o * n * inner + i)];
                for (Dim k = 1; k < n; ++k)
                    acc = f(acc, data_[static_cast<std::size_t>((o * n + k) * inner + i)]);
                out.data_[static_cast<std::size_t>(o * inner + i)] = acc;
            }
        return out;
    }

    // Inclusive scan along one axis: out[0] = x[0], out[k] = f(out[k-1], x[k]).
    template <typename F>
    Ndarray scan(Dim axis, F&& f) const {
        auto [outer, n, inner] = split_at(axis);
        Ndarray out(shape_);
        for (Dim o = 0; o < outer; ++o)
            for (Dim i = 0; i < inner; ++i) {
                std::size_t base = static_cast<std::size_t>(o * n * inner + i);
                out.data_[base] = data_[base];
                for (Dim k = 1; k < n; ++k) {
                    std::size_t cur = static_cast<std::size_t>((o * n + k) * inner + i);
                    std::size_t prev = static_cast<std::size_t>((o * n + k - 1) * inner + i);
                    out.data_[cur] = f(out.data_[prev], data_[cur]);
                }
            }
        return out;
    }

    // ---- reductions ---------------------------------------------------------

    T sum() const {
        return fold([](T a, T b) { return a + b; }, T(0));
    }
    T min() const {
        return fold_from_first([](T a, T b) { return b < a ? b : a; });
    }
    T max() const {
        return fold_from_first([](T a, T b) { return a < b ? b : a; });
    }
    T mean() const { return sum() / static_cast<T>(numel()); }

    // Population standard deviation, two-pass for accuracy.
    T stddev() const {
        T m = mean();
        T acc = 0;
        for (const T& x : data_) acc += (x - m) * (x - m);
        return std::sqrt(acc / static_cast<T>(numel()));
    }

    Ndarray sum(Dim axis) const {
        return fold_along(axis, [](T a, T b) { return a + b; });
    }
    Ndarray min(Dim axis) const {
        return fold_along(axis, [](T a, T b) { return b < a ? b : a; });
    }
    Ndarray max(Dim axis) const {
        return fold_along(axis, [](T a, T b) { return a < b ? b : a; });
    }
    Ndarray cumsum(Dim axis) const {
        return scan(axis, [](T a, T b) { return a + b; });
    }

    // ---- elementwise math ---------------------------------------------------
    // Each operation has an allocating form and an in-place twin (suffix `_`).

    Ndarray sin() const { return map([](T x) { return std::sin(x); }); }
    Ndarray cos() const { return map([](T x) { return std::cos(x); }); }
    Ndarray tan() const { return map([](T x) { return std::tan(x); }); }
    Ndarray exp() const { return map([](T x) { return std::exp(x); }); }
    Ndarray log() const { return map([](T x) { return std::log(x); }); }
    Ndarray sqrt() const { return map([](T x) { return std::sqrt(x); }); }
    Ndarray tanh() const { return map([](T x) { return std::tanh(x); }); }
    Ndarray ceil() const { return map([](T x) { return std::ceil(x); }); }
    Ndarray neg() const { return map([](T x) { return -x; }); }
    Ndarray relu() const { return map([](T x) { return x > T(0) ? x : T(0); }); }
    Ndarray sigmoid() const { return map([](T x) { return T(1) / (T(1) + std::exp(-x)); }); }

    Ndarray& sin_() { return map_([](T x) { return std::sin(x); }); }
    Ndarray& cos_() { return map_([](T x) { return std::cos(x); }); }
    Ndarray& tan_() { return map_([](T x) { return std::tan(x); }); }
    Ndarray& exp_() { return map_([](T x) { return std::exp(x); }); }
    Ndarray& log_() { return map_([](T x) { return std::log(x); }); }
    Ndarray& sqrt_() { return map_([](T x) { return std::sqrt(x); }); }
    Ndarray& tanh_() { return map_([](T x) { return std::tanh(x); }); }
    Ndarray& ceil_() { return map_([](T x) { return std::ceil(x); }); }
    Ndarray& neg_() { return map_([](T x) { return -x; }); }
    Ndarray& relu_() { return map_([](T x) { return x > T(0) ? x : T(0); }); }
    Ndarray& sigmoid_() { return map_([](T x) { return T(1) / (T(1) + std::exp(-x)); }); }

  private:
    template <typename F>
    T fold_from_first(F&& f) const {
        T acc = data_[0];
        for (std::size_t i = 1; i < data_.size(); ++i) acc = f(acc, data_[i]);
        return acc;
    }

    void check_flat(Dim i) const {
        if (i < 0 || i >= numel())
            throw IndexError("flat index " + std::to_string(i) + " out of range for " +
                             std::to_string(numel()) + " elements");
    }

    std::size_t flat_of(std::span<const Dim> idx) const {
        if (static_cast<Dim>(idx.size()) != rank())
            throw IndexError("expected " + std::to_string(rank()) + " indices, got " +
                             std::to_string(idx.size()));
        Dim flat = 0;
        for (std::size_t d = 0; d < idx.size(); ++d) {
            if (idx[d] < 0 || idx[d] >= shape_[d])
                throw IndexError("index " + std::to_string(idx[d]) + " out of range for axis " +
                                 std::to_string(d) + " of " + shape_to_string(shape_));
            flat += idx[d] * strides_[d];
        }
        return static_cast<std::size_t>(flat);
    }

    void check_axis(Dim axis) const {
        if (axis < 0 || axis >= rank())
            throw IndexError("axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(rank()));
    }

    // Element count before, along, and after the given axis.
    std::tuple<Dim, Dim, Dim> split_at(Dim axis) const {
        check_axis(axis);
        Dim outer = 1, inner = 1;
        for (Dim d = 0; d < axis; ++d) outer *= shape_[static_cast<std::size_t>(d)];
        for (Dim d = axis + 1; d < rank(); ++d) inner *= shape_[static_cast<std::size_t>(d)];
        return {outer, shape_[static_cast<std::size_t>(axis)], inner};
    }

    Shape drop_axis(Dim axis) const {
        Shape out;
        for (Dim d = 0; d < rank(); ++d)
            if (d != axis) out.push_back(shape_[static_cast<std::size_t>(d)]);
        if (out.empty()) out.push_back(1);
        return out;
    }

    Shape shape_;
    std::vector<Dim> strides_;
    std::vector<T> data_;
};

// ---- creation ---------------------------------------------------------------

template <std::floating_point T>
Ndarray<T> zeros(Shape shape) {
    return Ndarray<T>(std::move(shape));
}

template <std::floating_point T>
Ndarray<T> full(Shape shape, T v) {
    Ndarray<T> a(std::move(shape));
    a.fill(v);
    return a;
}

template <std::floating_point T>
Ndarray<T> ones(Shape shape) {
    return full<T>(std::move(shape), T(1));
}

// 0, 1, 2, ... in row-major order.
template <std::floating_point T>
Ndarray<T> sequential(Shape shape) {
    Ndarray<T> a(std::move(shape));
    T* p = a.data();
    for (Dim i = 0; i < a.numel(); ++i) p[i] = static_cast<T>(i);
    return a;
}

// Uniform samples in [lo, hi) from a seeded generator.
template <std::floating_point T>
Ndarray<T> uniform(Shape shape, std::uint64_t seed, T lo = T(0), T hi = T(1)) {
    if (!(lo < hi)) throw ShapeError("uniform bounds must satisfy lo < hi");
    Ndarray<T> a(std::move(shape));
    Rng rng(seed);
    T* p = a.data();
    for (Dim i = 0; i < a.numel(); ++i)
        p[i] = lo + (hi - lo) * static_cast<T>(rng.next_double());
    return a;
}

// ---- comparison ---------------------------------------------------------------

template <std::floating_point T>
bool bitwise_equal(const Ndarray<T>& a, const Ndarray<T>& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<std::size_t>(a.numel())) == 0;
}

template <std::floating_point T>
bool approx_equal(const Ndarray<T>& a, const Ndarray<T>& b, T tol) {
    if (a.shape() != b.shape()) return false;
    for (Dim i = 0; i < a.numel(); ++i)
        if (!(std::abs(a.data()[i] - b.data()[i]) <= tol)) return false;
    return true;
}

}  // namespace ndkit
