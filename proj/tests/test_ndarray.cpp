#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ndkit/io.hpp"
#include "ndkit/ndarray.hpp"

using ndkit::Dim;
using ndkit::Ndarray;
using ndkit::Shape;

TEST_CASE("construction fills with zero and validates the shape") {
    Ndarray<double> a({2, 3});
    CHECK(a.shape() == Shape{2, 3});
    CHECK(a.numel() == 6);
    for (Dim i = 0; i < 6; ++i) CHECK(a.get_flat(i) == 0.0);

    CHECK(Ndarray<double>().shape() == Shape{1});  // default: a one-element scalar holder
    CHECK_THROWS_AS(Ndarray<double>({0, 3}), ndkit::ShapeError);
    CHECK_THROWS_AS(Ndarray<double>({2, -1}), ndkit::ShapeError);
    CHECK_THROWS_AS(Ndarray<double>(Shape{}), ndkit::ShapeError);
    CHECK_THROWS_AS(Ndarray<double>({2, 2}, {1.0, 2.0, 3.0}), ndkit::ShapeError);
}

TEST_CASE("sequential counts in row-major order") {
    const auto a = ndkit::sequential<double>({2, 3});
    CHECK(a(0, 0) == 0.0);
    CHECK(a(0, 2) == 2.0);
    CHECK(a(1, 0) == 3.0);  // row stride of a [2;3] array is 3
    CHECK(a(1, 2) == 5.0);
    CHECK(a.strides() == std::vector<Dim>{3, 1});
}

TEST_CASE("indexing is bounds-checked in every form") {
    const auto a = ndkit::sequential<double>({2, 3});
    CHECK_THROWS_AS(a(2, 0), ndkit::IndexError);
    CHECK_THROWS_AS(a(0, 3), ndkit::IndexError);
    CHECK_THROWS_AS(a(0, -1), ndkit::IndexError);
    CHECK_THROWS_AS(a(0), ndkit::IndexError);  // rank mismatch
    CHECK_THROWS_AS(a.get_flat(6), ndkit::IndexError);
    CHECK_THROWS_AS(a.get_flat(-1), ndkit::IndexError);
}

TEST_CASE("reshape preserves the flat order and rejects size changes") {
    const auto a = ndkit::sequential<double>({2, 3});
    const auto b = a.reshape({3, 2});
    CHECK(b(0, 0) == 0.0);
    CHECK(b(1, 0) == 2.0);
    CHECK(b(2, 1) == 5.0);
    CHECK_THROWS_AS(a.reshape({4, 2}), ndkit::ShapeError);

    // rvalue reshape moves the buffer instead of copying
    auto c = ndkit::sequential<double>({6}).reshape({2, 3});
    CHECK(ndkit::bitwise_equal(a, c));
}

TEST_CASE("map allocates, map_ mutates, and both apply the same function") {
    const auto a = ndkit::sequential<double>({2, 2});
    const auto doubled = a.map([](double x) { return 2 * x; });
    CHECK(doubled(1, 1) == 6.0);
    CHECK(a(1, 1) == 3.0);  // source untouched

    auto b = a;
    b.map_([](double x) { return 2 * x; });
    CHECK(ndkit::bitwise_equal(b, doubled));
}

TEST_CASE("fold reduces left-to-right from an explicit start") {
    const auto a = ndkit::sequential<double>({2, 3});
    CHECK(a.fold([](double acc, double x) { return acc + x; }, 0.0) == 15.0);
    CHECK(a.fold([](double acc, double x) { return acc * x; }, 1.0) == 0.0);
    // non-commutative f exposes the order: ((((10-0)-1)-2)-3-4)-5
    CHECK(a.fold([](double acc, double x) { return acc - x; }, 10.0) == -5.0);
}

TEST_CASE("fold_along removes the axis and starts from the first element") {
    const Ndarray<double> x({2, 2}, {3, 1, 2, 5});
    const auto mn = x.fold_along(0, [](double a, double b) { return std::min(a, b); });
    CHECK(mn.shape() == Shape{2});
    CHECK(mn.get_flat(0) == 2.0);
    CHECK(mn.get_flat(1) == 1.0);

    const auto mx = x.fold_along(1, [](double a, double b) { return std::max(a, b); });
    CHECK(mx.get_flat(0) == 3.0);
    CHECK(mx.get_flat(1) == 5.0);

    // reducing the only axis of a vector leaves a one-element array
    const Ndarray<double> v({3}, {1, 2, 3});
    const auto total = v.fold_along(0, [](double a, double b) { return a + b; });
    CHECK(total.shape() == Shape{1});
    CHECK(total.get_flat(0) == 6.0);

    CHECK_THROWS_AS(x.fold_along(2, [](double a, double b) { return a + b; }),
                    ndkit::IndexError);
}

TEST_CASE("scan produces inclusive running results along an axis") {
    const Ndarray<double> v({3}, {1, 2, 3});
    const auto c = v.scan(0, [](double a, double b) { return a + b; });
    CHECK(c.get_flat(0) == 1.0);
    CHECK(c.get_flat(1) == 3.0);
    CHECK(c.get_flat(2) == 6.0);

    const auto m = ndkit::sequential<double>({2, 3}).cumsum(0);
    CHECK(m(0, 2) == 2.0);  // first slice is copied through
    CHECK(m(1, 0) == 3.0);
    CHECK(m(1, 2) == 7.0);  // 2 + 5
}

TEST_CASE("whole-array statistics") {
    const auto a = ndkit::sequential<double>({2, 3});
    CHECK(a.sum() == 15.0);
    CHECK(a.min() == 0.0);
    CHECK(a.max() == 5.0);
    CHECK(a.mean() == 2.5);
    // population deviation of 0..5: sqrt(17.5 / 6)
    CHECK(a.stddev() == doctest::Approx(std::sqrt(17.5 / 6.0)).epsilon(1e-15));
    CHECK(ndkit::full<double>({4}, 3.25).stddev() == 0.0);
}

TEST_CASE("axis reductions match their fold_along definitions") {
    const Ndarray<double> x({2, 3}, {4, -1, 2, 0, 7, 2});
    const auto s = x.sum(1);
    CHECK(s.shape() == Shape{2});
    CHECK(s.get_flat(0) == 5.0);
    CHECK(s.get_flat(1) == 9.0);

    const auto mn = x.min(0);
    CHECK(mn.get_flat(0) == 0.0);
    CHECK(mn.get_flat(1) == -1.0);
    CHECK(mn.get_flat(2) == 2.0);

    const auto mx = x.max(1);
    CHECK(mx.get_flat(0) == 4.0);
    CHECK(mx.get_flat(1) == 7.0);
}

TEST_CASE("elementwise math matches the standard library pointwise") {
    const auto x = ndkit::uniform<double>({17}, 99, 0.1, 2.0);
    const auto check_all = [&](const Ndarray<double>& got, auto ref) {
        for (Dim i = 0; i < x.numel(); ++i) CHECK(got.get_flat(i) == ref(x.get_flat(i)));
    };
    check_all(x.sin(), [](double v) { return std::sin(v); });
    check_all(x.cos(), [](double v) { return std::cos(v); });
    check_all(x.tan(), [](double v) { return std::tan(v); });
    check_all(x.exp(), [](double v) { return std::exp(v); });
    check_all(x.log(), [](double v) { return std::log(v); });
    check_all(x.sqrt(), [](double v) { return std::sqrt(v); });
    check_all(x.tanh(), [](double v) { return std::tanh(v); });
    check_all(x.ceil(), [](double v) { return std::ceil(v); });
    check_all(x.neg(), [](double v) { return -v; });
    check_all(x.sigmoid(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

TEST_CASE("relu clips negatives and keeps positives") {
    const Ndarray<double> x({4}, {-2.0, -0.0, 0.5, 3.0});
    const auto r = x.relu();
    CHECK(r.get_flat(0) == 0.0);
    CHECK(r.get_flat(1) == 0.0);
    CHECK(r.get_flat(2) == 0.5);
    CHECK(r.get_flat(3) == 3.0);
}

TEST_CASE("in-place math twins agree with the allocating forms") {
    const auto x = ndkit::uniform<double>({3, 5}, 7, 0.5, 3.0);
    auto a = x;
    a.sin_().exp_();  // chainable
    CHECK(ndkit::bitwise_equal(a, x.sin().exp()));

    auto b = x;
    b.sqrt_();
    CHECK(ndkit::bitwise_equal(b, x.sqrt()));
}

TEST_CASE("uniform sampling is seeded and respects its bounds") {
    const auto a = ndkit::uniform<double>({100}, 42, -2.0, 5.0);
    const auto b = ndkit::uniform<double>({100}, 42, -2.0, 5.0);
    const auto c = ndkit::uniform<double>({100}, 43, -2.0, 5.0);
    CHECK(ndkit::bitwise_equal(a, b));
    CHECK(!ndkit::bitwise_equal(a, c));
    a.iter([](double v) {
        CHECK(v >= -2.0);
        CHECK(v < 5.0);
    });
    CHECK_THROWS_AS(ndkit::uniform<double>({3}, 1, 2.0, 2.0), ndkit::ShapeError);
}

TEST_CASE("text round-trip reproduces the array bit for bit") {
    const auto a = ndkit::uniform<double>({3, 4}, 5, -1.0, 1.0);
    std::stringstream ss;
    ndkit::write_array(ss, a);
    const auto back = ndkit::read_array<double>(ss);
    CHECK(ndkit::bitwise_equal(a, back));

    std::stringstream junk("not an array header");
    CHECK_THROWS(ndkit::read_array<double>(junk));
}

TEST_CASE("format_array lays out vectors and matrices readably") {
    const Ndarray<double> v({3}, {1, 2.5, -3});
    CHECK(ndkit::format_array(v) == "[1 2.5 -3]");
    const auto m = ndkit::sequential<double>({2, 2});
    CHECK(ndkit::format_array(m) == "[[0 1]\n [2 3]]");
}

TEST_CASE("single precision arrays carry their own kind") {
    const auto a = ndkit::sequential<float>({2, 2});
    CHECK(a.kind() == ndkit::Kind::F32);
    CHECK(ndkit::sequential<double>({2}).kind() == ndkit::Kind::F64);
    CHECK(a.sum() == 6.0f);
    const auto h = a.map([](float x) { return x / 2; });
    CHECK(h(1, 1) == 1.5f);
}
