#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ndkit {

using Dim = std::int64_t;
using Shape = std::vector<Dim>;

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

inline std::string shape_to_string(std::span<const Dim> s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(s[i]);
    }
    out += ']';
    return out;
}

// Arrays always have rank >= 1 and every dimension >= 1.
inline void check_shape(const Shape& s) {
    if (s.empty())
        throw ShapeError("shape must have at least one dimension");
    for (Dim d : s)
        if (d < 1)
            throw ShapeError("dimension sizes must be positive, got " + shape_to_string(s));
}

inline Dim numel(const Shape& s) {
    Dim n = 1;
    for (Dim d : s) n *= d;
    return n;
}

// Row-major ("C layout"): stride of the last dimension is 1.
inline std::vector<Dim> row_major_strides(const Shape& s) {
    std::vector<Dim> st(s.size(), 1);
    for (std::size_t i = s.size() - 1; i-- > 0;)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Advances a multi-index in row-major order; returns false after the last one.
inline bool next_index(const Shape& shape, std::vector<Dim>& idx) {
    for (std::size_t d = shape.size(); d-- > 0;) {
        if (++idx[d] < shape[d]) return true;
        idx[d] = 0;
    }
    return false;
}

}  // namespace ndkit
