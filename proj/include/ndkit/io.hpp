#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "ndkit/ndarray.hpp"

namespace ndkit {

// Plain-text serialization: one header line with the shape, then the values
// in row-major order.  Round-trips f64 exactly via max_digits10.
template <std::floating_point T>
void write_array(std::ostream& os, const Ndarray<T>& a) {
    os << "ndarray " << (a.kind() == Kind::F64 ? "f64" : "f32") << ' '
       << shape_to_string(a.shape()) << '\n';
    os << std::setprecision(std::numeric_limits<T>::max_digits10);
    for (Dim i = 0; i < a.numel(); ++i) {
        if (i) os << ' ';
        os << a.data()[i];
    }
    os << '\n';
}

template <std::floating_point T>
Ndarray<T> read_array(std::istream& is) {
    std::string magic, kind, shape_text;
    if (!(is >> magic >> kind >> shape_text) || magic != "ndarray")
        throw std::runtime_error("malformed array header");
    const char* want = std::is_same_v<T, double> ? "f64" : "f32";
    if (kind != want)
        throw std::runtime_error("array holds " + kind + " values, expected " + want);
    if (shape_text.size() < 2 || shape_text.front() != '[' || shape_text.back() != ']')
        throw std::runtime_error("malformed shape " + shape_text);
    Shape shape;
    std::stringstream dims(shape_text.substr(1, shape_text.size() - 2));
    std::string dim;
    while (std::getline(dims, dim, ';')) shape.push_back(std::stoll(dim));
    Ndarray<T> a(shape);
    for (Dim i = 0; i < a.numel(); ++i) {
        T v;
        if (!(is >> v)) throw std::runtime_error("array data ends early");
        a.set_flat(i, v);
    }
    return a;
}

template <std::floating_point T>
void save_array(const std::string& path, const Ndarray<T>& a) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_array(os, a);
}

template <std::floating_point T>
Ndarray<T> load_array(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_array<T>(is);
}

// Human-readable rendering for the CLI: rank 1 and 2 get a matrix layout,
// higher ranks fall back to shape plus flat values.
template <std::floating_point T>
std::string format_array(const Ndarray<T>& a, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision);
    if (a.rank() == 1) {
        os << '[';
        for (Dim i = 0; i < a.numel(); ++i) os << (i ? " " : "") << a.data()[i];
        os << ']';
    } else if (a.rank() == 2) {
        const Dim rows = a.shape()[0], cols = a.shape()[1];
        for (Dim r = 0; r < rows; ++r) {
            os << (r ? "\n [" : "[[");
            for (Dim c = 0; c < cols; ++c) os << (c ? " " : "") << a(r, c);
            os << ']';
        }
        os << ']';
    } else {
        os << shape_to_string(a.shape()) << ' ';
        for (Dim i = 0; i < a.numel(); ++i) os << (i ? " " : "") << a.data()[i];
    }
    return os.str();
}

}  // namespace ndkit
