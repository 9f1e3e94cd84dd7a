#include <cmath>

#include "doctest.h"
#include "ndkit/autodiff.hpp"
#include "oracles.hpp"

using ndkit::Dim;
using ndkit::Ndarray;
using ndkit::Shape;
using ndkit::ad::Value;

namespace ad = ndkit::ad;

TEST_CASE("forward and reverse scalar derivatives agree with closed forms") {
    const auto f = [](const Value<double>& x) { return mul(mul(x, x), sin(x)); };
    const auto df = [](double x) { return 2 * x * std::sin(x) + x * x * std::cos(x); };
    for (double x : {-2.0, -0.3, 0.0, 0.9, 1.3, 4.0}) {
        CHECK(ad::diff<double>(f, x) == doctest::Approx(df(x)).epsilon(1e-12));
        CHECK(ad::grad_scalar<double>(f, x) == doctest::Approx(df(x)).epsilon(1e-12));
    }
}

TEST_CASE("every scalar primitive differentiates correctly") {
    struct Case {
        Value<double> (*f)(const Value<double>&);
        double (*df)(double);
        double at;
    };
    const Case cases[] = {
        {+[](const Value<double>& x) { return sin(x); }, +[](double x) { return std::cos(x); },
         0.8},
        {+[](const Value<double>& x) { return cos(x); }, +[](double x) { return -std::sin(x); },
         0.8},
        {+[](const Value<double>& x) { return tan(x); },
         +[](double x) { return 1.0 / (std::cos(x) * std::cos(x)); }, 0.5},
        {+[](const Value<double>& x) { return exp(x); }, +[](double x) { return std::exp(x); },
         1.1},
        {+[](const Value<double>& x) { return log(x); }, +[](double x) { return 1.0 / x; }, 2.3},
        {+[](const Value<double>& x) { return sqrt(x); },
         +[](double x) { return 0.5 / std::sqrt(x); }, 1.7},
        {+[](const Value<double>& x) { return tanh(x); },
         +[](double x) { return 1.0 - std::tanh(x) * std::tanh(x); }, 0.4},
        {+[](const Value<double>& x) { return sigmoid(x); },
         +[](double x) {
             const double s = 1.0 / (1.0 + std::exp(-x));
             return s * (1.0 - s);
         },
         -0.6},
        {+[](const Value<double>& x) { return neg(x); }, +[](double) { return -1.0; }, 3.0},
    };
    for (const auto& c : cases) {
        CHECK(ad::diff<double>(c.f, c.at) == doctest::Approx(c.df(c.at)).epsilon(1e-12));
        CHECK(ad::grad_scalar<double>(c.f, c.at) == doctest::Approx(c.df(c.at)).epsilon(1e-12));
    }
}

TEST_CASE("pow differentiates in both arguments") {
    // d/dx x^y = y x^(y-1),  d/dy x^y = x^y log x
    const double x = 1.7, y = 2.3;
    const double dx = ad::grad_scalar<double>(
        [&](const Value<double>& v) { return pow(v, Value<double>(y)); }, x);
    const double dy = ad::grad_scalar<double>(
        [&](const Value<double>& v) { return pow(Value<double>(x), v); }, y);
    CHECK(dx == doctest::Approx(y * std::pow(x, y - 1)).epsilon(1e-12));
    CHECK(dy == doctest::Approx(std::pow(x, y) * std::log(x)).epsilon(1e-12));
}

TEST_CASE("an inner derivative closing over the outer variable stays honest") {
    // g(x) = x * d/dy(x * y)  =  x * x, so g'(2) must be 4: the inner pass may
    // not see the outer variable as its own perturbation.
    const double got = ad::grad_scalar<double>(
        [](const Value<double>& x) {
            const Value<double> inner = ad::diff_value<double>(
                [&](const Value<double>& y) { return mul(x, y); }, Value<double>(1.0));
            return mul(x, inner);
        },
        2.0);
    CHECK(got == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("stacking the differentiator gives higher derivatives") {
    const auto second = [](double x) {
        return ad::diff<double>(
            [](const Value<double>& v) {
                return ad::diff_value<double>([](const Value<double>& w) { return sin(w); }, v);
            },
            x);
    };
    for (int i = 0; i < 100; ++i) {
        const double x = -3.0 + 6.0 * i / 99.0;
        CHECK(second(x) == doctest::Approx(-std::sin(x)).epsilon(1e-10).scale(1.0));
    }

    // third derivative of x^4 is 24x
    const auto third = ad::diff<double>(
        [](const Value<double>& a) {
            return ad::diff_value<double>(
                [](const Value<double>& b) {
                    return ad::diff_value<double>(
                        [](const Value<double>& c) { return mul(mul(c, c), mul(c, c)); }, b);
                },
                a);
        },
        1.5);
    CHECK(third == doctest::Approx(24.0 * 1.5).epsilon(1e-10));
}

TEST_CASE("reverse over forward mixes cleanly") {
    // h(x) = d/dy [ sin(x y) ] at y = 2  =  x cos(2 x); h'(x) = cos(2x) - 2x sin(2x)
    const double x = 0.7;
    const double got = ad::grad_scalar<double>(
        [](const Value<double>& v) {
            return ad::diff_value<double>(
                [&](const Value<double>& y) { return sin(mul(v, y)); }, Value<double>(2.0));
        },
        x);
    CHECK(got == doctest::Approx(std::cos(2 * x) - 2 * x * std::sin(2 * x)).epsilon(1e-12));
}

TEST_CASE("array gradients match finite differences") {
    const auto x = ndkit::uniform<double>({3, 4}, 314, 0.2, 1.8);
    const auto f = [](const Value<double>& v) {
        return sum(add(mul(sin(v), v), exp(mul(v, Value<double>(0.5)))));
    };
    const auto g = ad::grad<double>(f, x);
    const auto fd = oracle::fd_grad(
        [&](const Ndarray<double>& m) {
            double acc = 0;
            m.iter([&](double u) { acc += std::sin(u) * u + std::exp(0.5 * u); });
            return acc;
        },
        x);
    CHECK(g.shape() == x.shape());
    for (Dim i = 0; i < g.numel(); ++i)
        CHECK(g.get_flat(i) == doctest::Approx(fd.get_flat(i)).epsilon(1e-6));
}

TEST_CASE("matmul transpose and reshape propagate gradients") {
    const auto a = ndkit::uniform<double>({2, 3}, 40, -1.0, 1.0);
    const auto x = ndkit::uniform<double>({12}, 41, -1.0, 1.0);
    const auto f = [&](const Value<double>& v) {
        const Value<double> m = reshape(v, {3, 4});
        return sum(matmul(Value<double>(a), m));
    };
    const auto g = ad::grad<double>(f, x);
    const auto fd = oracle::fd_grad(
        [&](const Ndarray<double>& vec) {
            return ndkit::matmul(a, vec.reshape({3, 4})).sum();
        },
        x);
    for (Dim i = 0; i < g.numel(); ++i)
        CHECK(g.get_flat(i) == doctest::Approx(fd.get_flat(i)).epsilon(1e-6).scale(1.0));

    const auto ft = [&](const Value<double>& v) {
        return sum(mul(transpose(reshape(v, {3, 4})), transpose(reshape(v, {3, 4}))));
    };
    const auto gt = ad::grad<double>(ft, x);
    const auto fdt = oracle::fd_grad(
        [&](const Ndarray<double>& vec) {
            const auto t = ndkit::transpose(vec.reshape({3, 4}));
            return ndkit::mul(t, t).sum();
        },
        x);
    for (Dim i = 0; i < gt.numel(); ++i)
        CHECK(gt.get_flat(i) == doctest::Approx(fdt.get_flat(i)).epsilon(1e-6).scale(1.0));
}

TEST_CASE("broadcast arithmetic reduces gradients back to each operand") {
    const auto col = ndkit::uniform<double>({4, 1}, 50, 0.5, 1.5);
    const auto row = ndkit::uniform<double>({1, 3}, 51, 0.5, 1.5);
    // d/dcol sum(col * row) = rowsum per entry; d/drow likewise by symmetry
    const auto [loss, grads] = ad::value_and_grad<double>(
        [](const std::vector<Value<double>>& vs) { return sum(mul(vs[0], vs[1])); }, {col, row});

    CHECK(loss == doctest::Approx((col.sum() * row.sum())).epsilon(1e-12));
    REQUIRE(grads.size() == 2);
    CHECK(grads[0].shape() == Shape{4, 1});
    CHECK(grads[1].shape() == Shape{1, 3});
    for (Dim i = 0; i < 4; ++i)
        CHECK(grads[0].get_flat(i) == doctest::Approx(row.sum()).epsilon(1e-12));
    for (Dim j = 0; j < 3; ++j)
        CHECK(grads[1].get_flat(j) == doctest::Approx(col.sum()).epsilon(1e-12));
}

TEST_CASE("sum_to is the differentiable axis reduction") {
    const auto x = ndkit::uniform<double>({3, 4}, 60, -1.0, 1.0);
    const Ndarray<double> w({1, 4}, {1.0, -2.0, 0.5, 3.0});
    const auto f = [&](const Value<double>& v) {
        return sum(mul(sum_to(v, {1, 4}), Value<double>(w)));
    };
    const auto g = ad::grad<double>(f, x);
    // column j of the gradient is w[j] everywhere
    for (Dim i = 0; i < 3; ++i)
        for (Dim j = 0; j < 4; ++j)
            CHECK(g(i, j) == doctest::Approx(w.get_flat(j)).epsilon(1e-12));
}

TEST_CASE("kinked primitives use one-sided conventions at the kink") {
    const Ndarray<double> x({5}, {-1.0, 0.0, 0.5, 1.0, 2.0});
    const auto gr = ad::grad<double>(
        [](const Value<double>& v) { return sum(relu(v)); }, x);
    CHECK(gr.get_flat(0) == 0.0);
    CHECK(gr.get_flat(1) == 0.0);  // exactly zero input: derivative defined as 0
    CHECK(gr.get_flat(2) == 1.0);
    CHECK(gr.get_flat(4) == 1.0);

    const auto gc = ad::grad<double>(
        [](const Value<double>& v) { return sum(clamp(v, 0.0, 1.0)); }, x);
    CHECK(gc.get_flat(0) == 0.0);
    CHECK(gc.get_flat(1) == 1.0);  // clamp keeps its endpoints
    CHECK(gc.get_flat(2) == 1.0);
    CHECK(gc.get_flat(3) == 1.0);
    CHECK(gc.get_flat(4) == 0.0);
}

TEST_CASE("value_and_grad returns zeros for parameters the loss never reads") {
    const auto w = ndkit::uniform<double>({2, 2}, 70);
    const auto unused = ndkit::uniform<double>({3}, 71);
    const auto [loss, grads] = ad::value_and_grad<double>(
        [](const std::vector<Value<double>>& vs) { return sum(mul(vs[0], vs[0])); },
        {w, unused});
    double want = 0;
    w.iter([&](double v) { want += v * v; });
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
    CHECK(grads[1].shape() == Shape{3});
    CHECK(grads[1].sum() == 0.0);
}

TEST_CASE("jacobian rows are per-output gradients") {
    const Ndarray<double> x({3}, {0.9, -1.1, 0.4});
    // y = [x0*x1, sin(x2), x0 + x2^2], with components extracted through
    // one-hot masks so everything stays inside the traced operation set
    const auto fv = [](const Value<double>& v) {
        const Ndarray<double> m0({3}, {1, 0, 0});
        const Ndarray<double> m1({3}, {0, 1, 0});
        const Ndarray<double> m2({3}, {0, 0, 1});
        const Value<double> x0 = sum(mul(v, Value<double>(m0)));
        const Value<double> x1 = sum(mul(v, Value<double>(m1)));
        const Value<double> x2 = sum(mul(v, Value<double>(m2)));
        return add(add(mul(mul(x0, x1), Value<double>(m0)), mul(sin(x2), Value<double>(m1))),
                   mul(add(x0, mul(x2, x2)), Value<double>(m2)));
    };
    const auto j = ad::jacobian<double>(fv, x);
    REQUIRE(j.shape() == Shape{3, 3});
    const auto fd = oracle::fd_jacobian(
        [&](const Ndarray<double>& in) {
            Ndarray<double> out({3});
            out.set_flat(0, in.get_flat(0) * in.get_flat(1));
            out.set_flat(1, std::sin(in.get_flat(2)));
            out.set_flat(2, in.get_flat(0) + in.get_flat(2) * in.get_flat(2));
            return out;
        },
        x);
    for (Dim i = 0; i < 9; ++i)
        CHECK(j.get_flat(i) == doctest::Approx(fd.get_flat(i)).epsilon(1e-6).scale(1.0));
}

TEST_CASE("jvp and vjp are the two contractions of the same jacobian") {
    const Ndarray<double> x({4}, {0.3, 1.2, -0.7, 0.5});
    const auto f = [](const Value<double>& v) { return mul(sin(v), exp(mul(v, v))); };

    const auto j = ad::jacobian<double>(f, x);
    const Ndarray<double> dir({4}, {1.0, -1.0, 0.5, 2.0});
    const Ndarray<double> weight({4}, {0.2, 0.4, -0.6, 1.0});

    const auto jv = ad::jvp<double>(f, x, dir);
    const auto want_jv = ndkit::matmul(j, dir.reshape({4, 1}));
    for (Dim i = 0; i < 4; ++i)
        CHECK(jv.get_flat(i) == doctest::Approx(want_jv.get_flat(i)).epsilon(1e-10));

    const auto vj = ad::vjp<double>(f, x, weight);
    const auto want_vj = ndkit::matmul(weight.reshape({1, 4}), j);
    for (Dim i = 0; i < 4; ++i)
        CHECK(vj.get_flat(i) == doctest::Approx(want_vj.get_flat(i)).epsilon(1e-10));

    // elementwise map: jacobian must be diagonal
    for (Dim r = 0; r < 4; ++r)
        for (Dim c = 0; c < 4; ++c)
            if (r != c) CHECK(j(r, c) == 0.0);
}

TEST_CASE("hessian of a quadratic form is the symmetrised matrix") {
    const auto a = ndkit::uniform<double>({4, 4}, 90, -1.0, 1.0);
    const auto x = ndkit::uniform<double>({4}, 91, -1.0, 1.0);
    const auto f = [&](const Value<double>& v) {
        const Value<double> col = reshape(v, {4, 1});
        return sum(mul(col, matmul(Value<double>(a), col)));
    };
    const auto h = ad::hessian<double>(f, x);
    const auto want = ndkit::add(a, ndkit::transpose(a));
    REQUIRE(h.shape() == Shape{4, 4});
    for (Dim i = 0; i < 16; ++i)
        CHECK(h.get_flat(i) == doctest::Approx(want.get_flat(i)).epsilon(1e-10).scale(1.0));

    // hvp against a direct matrix product
    const Ndarray<double> v({4}, {0.5, -1.0, 2.0, 0.25});
    const auto hv = ad::hvp<double>(f, x, v);
    const auto want_hv = ndkit::matmul(want, v.reshape({4, 1}));
    for (Dim i = 0; i < 4; ++i)
        CHECK(hv.get_flat(i) == doctest::Approx(want_hv.get_flat(i)).epsilon(1e-10));
}

TEST_CASE("hessian of a nonpolynomial function matches the closed form") {
    // f = sin(x0) + x0 * x1^2:  H = [[-sin x0, 2 x1], [2 x1, 2 x0]]
    const Ndarray<double> x({2}, {0.7, -1.2});
    const auto h = ad::hessian<double>(
        [](const Value<double>& v) {
            const Ndarray<double> m0({2}, {1, 0});
            const Ndarray<double> m1({2}, {0, 1});
            const Value<double> x0 = sum(mul(v, Value<double>(m0)));
            const Value<double> x1 = sum(mul(v, Value<double>(m1)));
            return add(sin(x0), mul(x0, mul(x1, x1)));
        },
        x);
    CHECK(h(0, 0) == doctest::Approx(-std::sin(0.7)).epsilon(1e-9));
    CHECK(h(0, 1) == doctest::Approx(-2.4).epsilon(1e-9));
    CHECK(h(1, 0) == doctest::Approx(-2.4).epsilon(1e-9));
    CHECK(h(1, 1) == doctest::Approx(1.4).epsilon(1e-9));
}

TEST_CASE("gradients demand scalar-valued functions") {
    const auto x = ndkit::uniform<double>({3}, 100);
    CHECK_THROWS_AS(ad::grad<double>([](const Value<double>& v) { return mul(v, v); }, x),
                    std::invalid_argument);
}

TEST_CASE("the exported trace names every operation") {
    const auto dot = ad::trace_dot<double>(
        [](const std::vector<Value<double>>& in) { return sum(mul(sin(in[0]), in[1])); },
        {ndkit::uniform<double>({2, 2}, 1), ndkit::uniform<double>({2, 2}, 2)});
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("leaf") != std::string::npos);
    CHECK(dot.find("sin") != std::string::npos);
    CHECK(dot.find("mul") != std::string::npos);
    CHECK(dot.find("sum") != std::string::npos);
    CHECK(dot.find("[2;2]") != std::string::npos);
    CHECK(dot.find("->") != std::string::npos);
}
