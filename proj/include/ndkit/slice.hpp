#pragma once

#include <algorithm>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "ndkit/ndarray.hpp"

namespace ndkit {

// One slice entry per axis: the whole axis, a single index (the axis is kept
// with size 1), or a [start:stop:step] range whose stop is INCLUSIVE.
// Negative positions count from the end; an omitted step gets the sign that
// walks from start towards stop (+1 when they are equal).
struct SliceEntry {
    enum class Tag { All, Index, Range };

    Tag tag = Tag::All;
    Dim start = 0;
    Dim stop = 0;
    std::optional<Dim> step;

    static SliceEntry all() { return {}; }
    static SliceEntry index(Dim i) { return {Tag::Index, i, i, std::nullopt}; }
    static SliceEntry range(Dim start, Dim stop) { return {Tag::Range, start, stop, std::nullopt}; }
    static SliceEntry range(Dim start, Dim stop, Dim step) {
        return {Tag::Range, start, stop, step};
    }
};

using SliceSpec = std::vector<SliceEntry>;

struct ResolvedSlice {
    Dim start;
    Dim step;
    Dim count;
};

// Resolves a spec against a concrete shape: applies the negative-index and
// default-step rules, validates bounds, and rejects empty selections.
// Axes beyond the spec's length are taken whole.
std::vector<ResolvedSlice> resolve_slice(const SliceSpec& spec, const Shape& shape);

// Text form used by the CLI: comma-separated entries, each `*` (whole axis),
// a bare integer, `start:stop`, or `start:stop:step`, e.g. "0:4,6:-1,-1:0".
SliceSpec parse_slice_spec(const std::string& text);

template <std::floating_point T>
Ndarray<T> get_slice(const Ndarray<T>& a, const SliceSpec& spec) {
    const auto rs = resolve_slice(spec, a.shape());
    Shape out_shape(rs.size());
    for (std::size_t d = 0; d < rs.size(); ++d) out_shape[d] = rs[d].count;
    Ndarray<T> out(out_shape);

    const std::size_t last = rs.size() - 1;
    const auto& istr = a.strides();
    const Dim last_stride = istr[last] * rs[last].step;
    const T* ip = a.data();
    T* op = out.data();

    Shape lead(out_shape.begin(), out_shape.end() - 1);
    std::vector<Dim> idx(lead.size(), 0);
    do {
        Dim off = rs[last].start * istr[last];
        for (std::size_t d = 0; d < lead.size(); ++d)
            off += (rs[d].start + idx[d] * rs[d].step) * istr[d];
        for (Dim k = 0; k < rs[last].count; ++k, off += last_stride) *op++ = ip[off];
    } while (next_index(lead, idx));
    return out;
}

// Writes `src` into the selected region; its shape must match the selection
// exactly (no implicit broadcast on assignment).
template <std::floating_point T>
void set_slice(Ndarray<T>& a, const SliceSpec& spec, const Ndarray<T>& src) {
    const auto rs = resolve_slice(spec, a.shape());
    Shape sel_shape(rs.size());
    for (std::size_t d = 0; d < rs.size(); ++d) sel_shape[d] = rs[d].count;
    if (src.shape() != sel_shape)
        throw ShapeError("cannot assign " + shape_to_string(src.shape()) + " into slice of shape " +
                         shape_to_string(sel_shape));

    const std::size_t last = rs.size() - 1;
    const auto& istr = a.strides();
    const Dim last_stride = istr[last] * rs[last].step;
    T* op = a.data();
    const T* sp = src.data();

    Shape lead(sel_shape.begin(), sel_shape.end() - 1);
    std::vector<Dim> idx(lead.size(), 0);
    do {
        Dim off = rs[last].start * istr[last];
        for (std::size_t d = 0; d < lead.size(); ++d)
            off += (rs[d].start + idx[d] * rs[d].step) * istr[d];
        for (Dim k = 0; k < rs[last].count; ++k, off += last_stride) op[off] = *sp++;
    } while (next_index(lead, idx));
}

namespace detail {
// Validates a gather/scatter index list against one axis and resolves
// negative positions.  Returns outer/inner block sizes alongside.
struct FancyPlan {
    std::vector<Dim> indices;
    Dim outer, n, inner;
};

inline FancyPlan fancy_plan(const Shape& shape, std::vector<Dim> indices, Dim axis) {
    if (axis < 0 || axis >= static_cast<Dim>(shape.size()))
        throw IndexError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(shape.size()));
    if (indices.empty()) throw ShapeError("index list must not be empty");
    const Dim n = shape[static_cast<std::size_t>(axis)];
    for (Dim& i : indices) {
        if (i < 0) i += n;
        if (i < 0 || i >= n)
            throw IndexError("index " + std::to_string(i) + " out of range for axis of size " +
                             std::to_string(n));
    }
    Dim outer = 1, inner = 1;
    for (Dim d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d)
        inner *= shape[d];
    return {std::move(indices), outer, n, inner};
}
}  // namespace detail

// Gathers arbitrary (possibly repeated, possibly reordered) positions along
// one axis.
template <std::floating_point T>
Ndarray<T> get_fancy(const Ndarray<T>& a, std::vector<Dim> indices, Dim axis = 0) {
    auto plan = detail::fancy_plan(a.shape(), std::move(indices), axis);
    Shape out_shape = a.shape();
    const Dim m = static_cast<Dim>(plan.indices.size());
    out_shape[static_cast<std::size_t>(axis)] = m;
    Ndarray<T> out(out_shape);
    const T* ip = a.data();
    T* op = out.data();
    for (Dim o = 0; o < plan.outer; ++o)
        for (Dim j = 0; j < m; ++j) {
            const T* src = ip + (o * plan.n + plan.indices[static_cast<std::size_t>(j)]) * plan.inner;
            T* dst = op + (o * m + j) * plan.inner;
            std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(plan.inner));
        }
    return out;
}

// Scatters rows of `src` to the listed positions.  Duplicate positions are
// rejected: the result would depend on write order.
template <std::floating_point T>
void set_fancy(Ndarray<T>& a, std::vector<Dim> indices, Dim axis, const Ndarray<T>& src) {
    auto plan = detail::fancy_plan(a.shape(), std::move(indices), axis);
    auto sorted = plan.indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ShapeError("duplicate index in scatter assignment");

    const Dim m = static_cast<Dim>(plan.indices.size());
    Shape want = a.shape();
    want[static_cast<std::size_t>(axis)] = m;
    if (src.shape() != want)
        throw ShapeError("cannot scatter " + shape_to_string(src.shape()) +
                         " into selection of shape " + shape_to_string(want));
    T* op = a.data();
    const T* sp = src.data();
    for (Dim o = 0; o < plan.outer; ++o)
        for (Dim j = 0; j < m; ++j) {
            T* dst = op + (o * plan.n + plan.indices[static_cast<std::size_t>(j)]) * plan.inner;
            const T* from = sp + (o * m + j) * plan.inner;
            std::memcpy(dst, from, sizeof(T) * static_cast<std::size_t>(plan.inner));
        }
}

}  // namespace ndkit
