#include <vector>

#include "doctest.h"
#include "ndkit/broadcast.hpp"
#include "ndkit/lazy.hpp"
#include "oracles.hpp"

using ndkit::Dim;
using ndkit::Ndarray;
using ndkit::Shape;
using ndkit::lazy::Graph;
using ndkit::lazy::NodeId;

TEST_CASE("a deferred expression evaluates to the eager result") {
    Graph<double> g;
    const auto x = ndkit::uniform<double>({3, 4}, 11, 0.1, 2.0);
    const auto y = ndkit::uniform<double>({3, 4}, 12, 0.1, 2.0);
    const NodeId vx = g.variable({3, 4}, "x");
    const NodeId vy = g.variable({3, 4}, "y");
    const NodeId out = g.mul(g.sin(g.add(vx, vy)), g.sqrt(vx));

    g.assign(vx, x);
    g.assign(vy, y);
    const auto got = g.eval(out);
    const auto want = ndkit::mul(ndkit::add(x, y).sin_(), x.sqrt());
    CHECK(ndkit::bitwise_equal(got, want));
}

TEST_CASE("evaluation demands every reachable variable to be bound") {
    Graph<double> g;
    const NodeId vx = g.variable({2, 2}, "x");
    const NodeId vy = g.variable({2, 2});
    const NodeId out = g.add(vx, vy);
    g.assign(vx, ndkit::ones<double>({2, 2}));
    CHECK_THROWS_AS(g.eval(out), std::runtime_error);

    g.assign(vy, ndkit::ones<double>({2, 2}));
    CHECK(g.eval(out)(0, 0) == 2.0);

    CHECK_THROWS_AS(g.assign(out, ndkit::ones<double>({2, 2})), std::invalid_argument);
    CHECK_THROWS_AS(g.assign(vx, ndkit::ones<double>({3})), ndkit::ShapeError);
}

TEST_CASE("an elementwise chain runs in a single buffer") {
    Graph<double> g;
    const NodeId a = g.variable({100}, "a");
    const NodeId b = g.variable({100}, "b");
    const NodeId out = g.tan(g.neg(g.sin(g.mul(a, b))));

    g.assign(a, ndkit::uniform<double>({100}, 1));
    g.assign(b, ndkit::uniform<double>({100}, 2));
    g.reset_counters();
    const auto got = g.eval(out);

    CHECK(g.exec_count() == 4);
    CHECK(g.alloc_count() == 1);  // mul allocates; sin, neg, tan reuse it
    CHECK(!g.reuse_violation());

    const auto want =
        ndkit::mul(ndkit::uniform<double>({100}, 1), ndkit::uniform<double>({100}, 2))
            .sin_()
            .neg_()
            .tan_();
    CHECK(ndkit::bitwise_equal(got, want));
}

TEST_CASE("a result read twice keeps its buffer until the last reader") {
    Graph<double> g;
    const NodeId x = g.variable({50}, "x");
    const NodeId c = g.sin(x);
    const NodeId out = g.add(c, g.sin(c));

    g.assign(x, ndkit::uniform<double>({50}, 3));
    g.reset_counters();
    const auto got = g.eval(out);

    // sin(x) and sin(sin(x)) allocate; the add takes over one of the buffers
    CHECK(g.alloc_count() == 2);
    CHECK(!g.reuse_violation());
    const auto sx = ndkit::uniform<double>({50}, 3).sin_();
    CHECK(ndkit::bitwise_equal(got, ndkit::add(sx, sx.sin())));
}

TEST_CASE("both operands may be the same node") {
    Graph<double> g;
    const NodeId x = g.variable({40}, "x");
    const NodeId c = g.sin(x);
    const NodeId out = g.add(c, c);

    g.assign(x, ndkit::uniform<double>({40}, 4));
    g.reset_counters();
    const auto got = g.eval(out);

    CHECK(g.alloc_count() == 1);  // the doubling runs inside sin's buffer
    const auto sx = ndkit::uniform<double>({40}, 4).sin_();
    CHECK(ndkit::bitwise_equal(got, ndkit::add(sx, sx)));
}

TEST_CASE("retain pins a buffer so it can be read after evaluation") {
    const auto build = [](Graph<double>& g, bool pin) {
        const NodeId x = g.variable({30}, "x");
        const NodeId c = g.sin(x);
        if (pin) g.retain(c);
        const NodeId out = g.neg(c);
        g.assign(x, ndkit::uniform<double>({30}, 5));
        g.reset_counters();
        g.eval(out);
        return c;
    };

    Graph<double> pinned;
    const NodeId c1 = build(pinned, true);
    CHECK(pinned.alloc_count() == 2);  // no takeover
    CHECK(ndkit::bitwise_equal(pinned.peek(c1), ndkit::uniform<double>({30}, 5).sin_()));

    Graph<double> loose;
    const NodeId c2 = build(loose, false);
    CHECK(loose.alloc_count() == 1);
    CHECK_THROWS_AS(loose.peek(c2), std::runtime_error);  // consumed by neg
}

TEST_CASE("assigning a variable only recomputes what depends on it") {
    Graph<double> g;
    const NodeId x = g.variable({10}, "x");
    const NodeId y = g.variable({10}, "y");
    const NodeId left = g.sin(x);
    const NodeId right = g.cos(y);
    const NodeId out = g.add(left, right);
    g.retain(left);
    g.retain(right);

    g.assign(x, ndkit::uniform<double>({10}, 6));
    g.assign(y, ndkit::uniform<double>({10}, 7));
    g.eval(out);

    g.reset_counters();
    g.eval(out);
    CHECK(g.exec_count() == 0);  // cached: nothing is stale

    g.assign(x, ndkit::uniform<double>({10}, 8));
    g.reset_counters();
    g.eval(out);
    CHECK(g.exec_count() == 2);  // sin(x) and the add, but not cos(y)

    const auto want = ndkit::add(ndkit::uniform<double>({10}, 8).sin_(),
                                 ndkit::uniform<double>({10}, 7).cos_());
    CHECK(ndkit::bitwise_equal(g.peek(out), want));
}

TEST_CASE("stretched operands are combined without buffer takeover") {
    Graph<double> g;
    const NodeId col = g.variable({2, 1}, "col");
    const NodeId row = g.variable({1, 3}, "row");
    const NodeId big = g.sin(g.add(col, row));

    const Ndarray<double> cv({2, 1}, {1, 2});
    const Ndarray<double> rv({1, 3}, {10, 20, 30});
    g.assign(col, cv);
    g.assign(row, rv);
    const auto got = g.eval(big);
    CHECK(got.shape() == Shape{2, 3});
    CHECK(ndkit::bitwise_equal(got, ndkit::add(cv, rv).sin_()));
    CHECK(!g.reuse_violation());

    CHECK_THROWS_AS(g.add(col, g.variable({3, 4})), ndkit::ShapeError);
}

TEST_CASE("matrix nodes evaluate through the dense kernels") {
    Graph<double> g;
    const auto xa = ndkit::uniform<double>({3, 4}, 13);
    const auto xb = ndkit::uniform<double>({4, 2}, 14);
    const NodeId a = g.variable({3, 4});
    const NodeId b = g.variable({4, 2});
    const NodeId mm = g.matmul(a, b);
    const NodeId tt = g.transpose(mm);
    const NodeId total = g.sum(tt);
    CHECK(g.shape_of(mm) == Shape{3, 2});
    CHECK(g.shape_of(tt) == Shape{2, 3});
    CHECK(g.shape_of(total) == Shape{1});

    g.assign(a, xa);
    g.assign(b, xb);
    CHECK(g.eval(total).get_flat(0) == ndkit::matmul(xa, xb).sum());

    CHECK_THROWS_AS(g.matmul(a, a), ndkit::ShapeError);
    CHECK_THROWS_AS(g.transpose(g.variable({2, 2, 2})), ndkit::ShapeError);
}

TEST_CASE("eval returns an independent copy") {
    Graph<double> g;
    const NodeId x = g.variable({3});
    const NodeId out = g.neg(x);
    g.assign(x, Ndarray<double>({3}, {1, 2, 3}));
    auto copy = g.eval(out);
    copy.set_flat(0, 99.0);
    CHECK(g.peek(out).get_flat(0) == -1.0);
}

TEST_CASE("the graph renders its wiring as dot") {
    Graph<double> g;
    const NodeId x = g.variable({2, 2}, "input");
    g.sum(g.mul(x, x));
    const auto dot = g.to_dot();
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("var input") != std::string::npos);
    CHECK(dot.find("mul") != std::string::npos);
    CHECK(dot.find("sum") != std::string::npos);
    CHECK(dot.find("[2;2]") != std::string::npos);
    CHECK(dot.find("->") != std::string::npos);
}

// Random expression trees evaluated both lazily and eagerly; every shared
// node, takeover, and recomputation must leave the numbers bit-identical.
TEST_CASE("randomised graphs agree with eager evaluation") {
    ndkit::Rng rng(606);
    for (int round = 0; round < 30; ++round) {
        Graph<double> g;
        std::vector<NodeId> ids;
        std::vector<Ndarray<double>> eager;

        const int n_vars = 2 + static_cast<int>(rng.below(3));
        for (int v = 0; v < n_vars; ++v) {
            Shape s = oracle::random_shape(rng, 3, 4);
            const auto value = ndkit::uniform<double>(s, 4000 + round * 10 + v, -2.0, 2.0);
            ids.push_back(g.variable(s));
            g.assign(ids.back(), value);
            eager.push_back(value);
        }

        const int n_ops = 12 + static_cast<int>(rng.below(10));
        for (int k = 0; k < n_ops; ++k) {
            const std::size_t i = rng.below(ids.size());
            const std::size_t j = rng.below(ids.size());
            switch (rng.below(8)) {
                case 0:
                    ids.push_back(g.sin(ids[i]));
                    eager.push_back(eager[i].sin());
                    break;
                case 1:
                    ids.push_back(g.tanh(ids[i]));
                    eager.push_back(eager[i].tanh());
                    break;
                case 2:
                    ids.push_back(g.neg(ids[i]));
                    eager.push_back(eager[i].neg());
                    break;
                case 3:
                    ids.push_back(g.relu(ids[i]));
                    eager.push_back(eager[i].relu());
                    break;
                case 4:
                    ids.push_back(g.sigmoid(ids[i]));
                    eager.push_back(eager[i].sigmoid());
                    break;
                default: {
                    try {
                        ndkit::broadcast_shapes(eager[i].shape(), eager[j].shape());
                    } catch (const ndkit::ShapeError&) {
                        --k;
                        continue;
                    }
                    const auto pick = rng.below(3);
                    if (pick == 0) {
                        ids.push_back(g.add(ids[i], ids[j]));
                        eager.push_back(ndkit::add(eager[i], eager[j]));
                    } else if (pick == 1) {
                        ids.push_back(g.sub(ids[i], ids[j]));
                        eager.push_back(ndkit::sub(eager[i], eager[j]));
                    } else {
                        ids.push_back(g.mul(ids[i], ids[j]));
                        eager.push_back(ndkit::mul(eager[i], eager[j]));
                    }
                }
            }
        }

        // evaluate the last node, then spot-check every node (forcing
        // recomputation of anything whose buffer was taken over)
        CHECK(ndkit::bitwise_equal(g.eval(ids.back()), eager.back()));
        for (std::size_t m = 0; m < ids.size(); ++m)
            CHECK(ndkit::bitwise_equal(g.eval(ids[m]), eager[m]));
        CHECK(!g.reuse_violation());
    }
}
