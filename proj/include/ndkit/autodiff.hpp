#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <unordered_set>
#include <variant>

#include "ndkit/broadcast.hpp"
#include "ndkit/linalg.hpp"

// Algorithmic differentiation over scalars and arrays.
//
// A Value is a handle to one node of a differentiation trace.  Plain numbers
// are Constant nodes; forward mode pairs a primal with a tangent; reverse
// mode records, for every computed node, how to push an adjoint back to its
// inputs.  Every differentiation pass gets a fresh tag, and an operation
// involving several Values dispatches on the HIGHEST tag present: lower-tag
// arguments are treated as constants of that pass but keep their own
// structure, which is what makes derivatives of derivatives come out right
// instead of collapsing (the classic perturbation-confusion bug).
//
// Tangent and adjoint rules are themselves written with these operations, so
// a reverse pass can run inside an outer forward pass (and vice versa); the
// Hessian routine below relies on exactly that.
namespace ndkit::ad {

template <std::floating_point T>
using Payload = std::variant<T, Ndarray<T>>;

namespace detail {

enum class Mode { Constant, Forward, Reverse };

inline std::atomic<std::uint64_t> tag_counter{0};
inline std::atomic<std::uint64_t> id_counter{0};

inline std::uint64_t fresh_tag() { return ++tag_counter; }

template <std::floating_point T>
struct Node;

}  // namespace detail

template <std::floating_point T>
class Value;

namespace detail {

// One backward edge: the input Value this node was computed from, plus the
// rule mapping this node's adjoint to the input's adjoint contribution.
template <std::floating_point T>
struct Edge {
    Value<T> value;
    std::function<Value<T>(const Value<T>&)> propagate;
};

template <std::floating_point T>
struct Node {
    Mode mode;
    std::uint64_t tag;  // 0 for constants
    std::uint64_t id;
    std::string op;
    std::optional<Payload<T>> payload;  // Constant
    std::optional<Value<T>> primal;     // Forward / Reverse
    std::optional<Value<T>> tangent;    // Forward
    std::optional<Value<T>> adjoint;    // Reverse, filled in by the backward pass
    std::vector<Edge<T>> parents;       // Reverse
};

template <std::floating_point T>
Shape payload_shape(const Payload<T>& p) {
    return std::holds_alternative<T>(p) ? Shape{} : std::get<Ndarray<T>>(p).shape();
}

}  // namespace detail

template <std::floating_point T>
class Value {
  public:
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Value() : Value(T(0)) {}
    Value(T scalar) : Value(constant(Payload<T>(scalar))) {}
    Value(Ndarray<T> array) : Value(constant(Payload<T>(std::move(array)))) {}
    explicit Value(NodePtr n) : node_(std::move(n)) {}

    static Value constant(Payload<T> p) {
        auto n = std::make_shared<detail::Node<T>>();
        n->mode = detail::Mode::Constant;
        n->tag = 0;
        n->id = detail::id_counter++;
        n->op = "const";
        n->payload = std::move(p);
        return Value(std::move(n));
    }

    static Value forward(Value primal, Value tangent, std::uint64_t tag) {
        auto n = std::make_shared<detail::Node<T>>();
        n->mode = detail::Mode::Forward;
        n->tag = tag;
        n->id = detail::id_counter++;
        n->op = "dual";
        n->primal = std::move(primal);
        n->tangent = std::move(tangent);
        return Value(std::move(n));
    }

    static Value reverse(std::string op, Value primal, std::vector<detail::Edge<T>> parents,
                         std::uint64_t tag) {
        auto n = std::make_shared<detail::Node<T>>();
        n->mode = detail::Mode::Reverse;
        n->tag = tag;
        n->id = detail::id_counter++;
        n->op = std::move(op);
        n->primal = std::move(primal);
        n->parents = std::move(parents);
        return Value(std::move(n));
    }

    const NodePtr& node() const { return node_; }
    detail::Mode mode() const { return node_->mode; }
    std::uint64_t tag() const { return node_->tag; }

    // The underlying number or array, unwrapped through every trace level.
    const Payload<T>& deep_payload() const {
        const detail::Node<T>* n = node_.get();
        while (n->mode != detail::Mode::Constant) n = n->primal->node_.get();
        return *n->payload;
    }

    Shape deep_shape() const { return detail::payload_shape(deep_payload()); }
    bool is_scalar() const { return std::holds_alternative<T>(deep_payload()); }

    T scalar() const {
        if (!is_scalar()) throw ShapeError("value holds an array, expected a scalar");
        return std::get<T>(deep_payload());
    }

    const Ndarray<T>& array() const {
        if (is_scalar()) throw ShapeError("value holds a scalar, expected an array");
        return std::get<Ndarray<T>>(deep_payload());
    }

  private:
    NodePtr node_;
};

// ---- payload arithmetic (the eager layer underneath the traces) ------------

namespace detail {

template <std::floating_point T, typename F>
Payload<T> unary_payload(const Payload<T>& a, F f) {
    if (std::holds_alternative<T>(a)) return f(std::get<T>(a));
    return std::get<Ndarray<T>>(a).map(f);
}

template <std::floating_point T, typename F>
Payload<T> binary_payload(const Payload<T>& a, const Payload<T>& b, F f) {
    if (std::holds_alternative<T>(a) && std::holds_alternative<T>(b))
        return f(std::get<T>(a), std::get<T>(b));
    if (std::holds_alternative<T>(a)) {
        const T x = std::get<T>(a);
        return std::get<Ndarray<T>>(b).map([&](T y) { return f(x, y); });
    }
    if (std::holds_alternative<T>(b)) {
        const T y = std::get<T>(b);
        return std::get<Ndarray<T>>(a).map([&](T x) { return f(x, y); });
    }
    return ndkit::detail::broadcast_binary(std::get<Ndarray<T>>(a), std::get<Ndarray<T>>(b), f);
}

// Reduces `p` by summation until it fits `target` (empty target = scalar).
// This is the numeric core of the broadcast backward rule.
template <std::floating_point T>
Payload<T> sum_payload_to(const Payload<T>& p, const Shape& target) {
    if (target.empty()) {
        if (std::holds_alternative<T>(p)) return p;
        return std::get<Ndarray<T>>(p).sum();
    }
    if (std::holds_alternative<T>(p))
        throw ShapeError("cannot reduce a scalar to shape " + shape_to_string(target));
    const Ndarray<T>& x = std::get<Ndarray<T>>(p);
    if (x.shape() == target) return x;

    if (target.size() > x.shape().size())
        throw ShapeError("cannot reduce " + shape_to_string(x.shape()) + " to " +
                         shape_to_string(target));
    Shape padded(x.shape().size(), 1);
    std::copy(target.begin(), target.end(), padded.end() - target.size());
    for (std::size_t d = 0; d < padded.size(); ++d)
        if (padded[d] != x.shape()[d] && padded[d] != 1)
            throw ShapeError("cannot reduce " + shape_to_string(x.shape()) + " to " +
                             shape_to_string(target));

    Ndarray<T> out(padded);
    const auto base = row_major_strides(padded);
    std::vector<Dim> ostr(padded.size());
    for (std::size_t d = 0; d < padded.size(); ++d)
        ostr[d] = padded[d] == 1 ? 0 : base[d];

    std::vector<Dim> idx(padded.size(), 0);
    const T* px = x.data();
    T* po = out.data();
    Dim off = 0;
    for (Dim flat = 0, n = x.numel(); flat < n; ++flat) {
        po[off] += px[flat];
        for (std::size_t d = padded.size(); d-- > 0;) {
            ++idx[d];
            off += ostr[d];
            if (idx[d] < x.shape()[d]) break;
            idx[d] = 0;
            off -= ostr[d] * x.shape()[d];
        }
    }
    return std::move(out).reshape(target);
}

}  // namespace detail

// ---- operations --------------------------------------------------------------

template <std::floating_point T>
Value<T> add(const Value<T>& a, const Value<T>& b);
template <std::floating_point T>
Value<T> sub(const Value<T>& a, const Value<T>& b);
template <std::floating_point T>
Value<T> mul(const Value<T>& a, const Value<T>& b);
template <std::floating_point T>
Value<T> div(const Value<T>& a, const Value<T>& b);
template <std::floating_point T>
Value<T> pow(const Value<T>& a, const Value<T>& b);
template <std::floating_point T>
Value<T> neg(const Value<T>& a);
template <std::floating_point T>
Value<T> sum_to(const Value<T>& a, Shape target);

namespace detail {

template <std::floating_point T>
Value<T> zeros_like_shape(const Shape& s) {
    if (s.empty()) return Value<T>(T(0));
    return Value<T>(ndkit::zeros<T>(s));
}

// Broadcast `v` up to shape `s` by multiplying with ones (a no-op when the
// shapes already agree).  Keeps forward tangents the same shape as primals.
template <std::floating_point T>
Value<T> expand_to(const Value<T>& v, const Shape& s) {
    if (v.deep_shape() == s || s.empty()) return v;
    return mul(v, Value<T>(ndkit::ones<T>(s)));
}

// Reduce an adjoint contribution back to the (possibly broadcast) input's
// shape.  No-op when the shapes already agree.
template <std::floating_point T>
Value<T> reduce_to(const Value<T>& v, const Shape& s) {
    if (v.deep_shape() == s) return v;
    return sum_to(v, s);
}

// Generic unary operation.  `eval` computes the payload; `fwd` maps the
// input tangent to the output tangent; `rev` maps the output adjoint to the
// input's contribution.  Both rules receive the input and output primals and
// are expressed in trace operations so they stay differentiable.
template <std::floating_point T, typename Eval, typename Fwd, typename Rev>
Value<T> unary_op(const char* name, const Value<T>& a, Eval eval, Fwd fwd, Rev rev) {
    if (a.tag() == 0) return Value<T>::constant(eval(*a.node()->payload));
    const std::uint64_t t = a.tag();
    const Value<T> ap = *a.node()->primal;
    const Value<T> yp = unary_op<T>(name, ap, eval, fwd, rev);
    if (a.mode() == Mode::Forward) {
        Value<T> dy = fwd(*a.node()->tangent, ap, yp);
        return Value<T>::forward(yp, expand_to(dy, yp.deep_shape()), t);
    }
    Edge<T> edge{a, [rev, ap, yp](const Value<T>& adj) {
                     return reduce_to(rev(adj, ap, yp), ap.deep_shape());
                 }};
    return Value<T>::reverse(name, yp, {std::move(edge)}, t);
}

// Generic binary operation; dispatches on the highest tag and treats the
// other argument as a constant of that differentiation level.
template <std::floating_point T, typename Eval, typename FwdA, typename FwdB, typename RevA,
          typename RevB>
Value<T> binary_op(const char* name, const Value<T>& a, const Value<T>& b, Eval eval, FwdA fwd_a,
                   FwdB fwd_b, RevA rev_a, RevB rev_b) {
    const std::uint64_t t = std::max(a.tag(), b.tag());
    if (t == 0) return Value<T>::constant(eval(*a.node()->payload, *b.node()->payload));

    const bool a_at = a.tag() == t;
    const bool b_at = b.tag() == t;
    if (a_at && b_at && a.mode() != b.mode())
        throw std::runtime_error(
            "forward and reverse traces of the same differentiation level cannot mix");
    const Mode m = a_at ? a.mode() : b.mode();

    const Value<T> ap = a_at ? *a.node()->primal : a;
    const Value<T> bp = b_at ? *b.node()->primal : b;
    const Value<T> yp = binary_op<T>(name, ap, bp, eval, fwd_a, fwd_b, rev_a, rev_b);

    if (m == Mode::Forward) {
        std::optional<Value<T>> dy;
        if (a_at) dy = fwd_a(*a.node()->tangent, ap, bp, yp);
        if (b_at) {
            Value<T> term = fwd_b(*b.node()->tangent, ap, bp, yp);
            dy = dy ? add(*dy, term) : term;
        }
        return Value<T>::forward(yp, expand_to(*dy, yp.deep_shape()), t);
    }

    std::vector<Edge<T>> edges;
    if (a_at)
        edges.push_back({a, [rev_a, ap, bp, yp](const Value<T>& adj) {
                             return reduce_to(rev_a(adj, ap, bp, yp), ap.deep_shape());
                         }});
    if (b_at)
        edges.push_back({b, [rev_b, ap, bp, yp](const Value<T>& adj) {
                             return reduce_to(rev_b(adj, ap, bp, yp), bp.deep_shape());
                         }});
    return Value<T>::reverse(name, yp, std::move(edges), t);
}

}  // namespace detail

// ---- arithmetic -----------------------------------------------------------------

template <std::floating_point T>
Value<T> add(const Value<T>& a, const Value<T>& b) {
    return detail::binary_op<T>(
        "add", a, b,
        [](const Payload<T>& x, const Payload<T>& y) {
            return detail::binary_payload<T>(x, y, [](T u, T v) { return u + v; });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>&, const Value<T>&) { return da; },
        [](const Value<T>& db, const Value<T>&, const Value<T>&, const Value<T>&) { return db; },
        [](const Value<T>& adj, const Value<T>&, const Value<T>&, const Value<T>&) { return adj; },
        [](const Value<T>& adj, const Value<T>&, const Value<T>&, const Value<T>&) { return adj; });
}

template <std::floating_point T>
Value<T> sub(const Value<T>& a, const Value<T>& b) {
    return detail::binary_op<T>(
        "sub", a, b,
        [](const Payload<T>& x, const Payload<T>& y) {
            return detail::binary_payload<T>(x, y, [](T u, T v) { return u - v; });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>&, const Value<T>&) { return da; },
        [](const Value<T>& db, const Value<T>&, const Value<T>&, const Value<T>&) {
            return neg(db);
        },
        [](const Value<T>& adj, const Value<T>&, const Value<T>&, const Value<T>&) { return adj; },
        [](const Value<T>& adj, const Value<T>&, const Value<T>&, const Value<T>&) {
            return neg(adj);
        });
}

template <std::floating_point T>
Value<T> mul(const Value<T>& a, const Value<T>& b) {
    return detail::binary_op<T>(
        "mul", a, b,
        [](const Payload<T>& x, const Payload<T>& y) {
            return detail::binary_payload<T>(x, y, [](T u, T v) { return u * v; });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>& bp, const Value<T>&) {
            return mul(da, bp);
        },
        [](const Value<T>& db, const Value<T>& ap, const Value<T>&, const Value<T>&) {
            return mul(ap, db);
        },
        [](const Value<T>& adj, const Value<T>&, const Value<T>& bp, const Value<T>&) {
            return mul(adj, bp);
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&, const Value<T>&) {
            return mul(adj, ap);
        });
}

template <std::floating_point T>
Value<T> div(const Value<T>& a, const Value<T>& b) {
    return detail::binary_op<T>(
        "div", a, b,
        [](const Payload<T>& x, const Payload<T>& y) {
            return detail::binary_payload<T>(x, y, [](T u, T v) { return u / v; });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>& bp, const Value<T>&) {
            return div(da, bp);
        },
        [](const Value<T>& db, const Value<T>& ap, const Value<T>& bp, const Value<T>&) {
            return neg(div(mul(ap, db), mul(bp, bp)));
        },
        [](const Value<T>& adj, const Value<T>&, const Value<T>& bp, const Value<T>&) {
            return div(adj, bp);
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>& bp, const Value<T>&) {
            return neg(div(mul(adj, ap), mul(bp, bp)));
        });
}

template <std::floating_point T>
Value<T> pow(const Value<T>& a, const Value<T>& b) {
    return detail::binary_op<T>(
        "pow", a, b,
        [](const Payload<T>& x, const Payload<T>& y) {
            return detail::binary_payload<T>(x, y, [](T u, T v) { return std::pow(u, v); });
        },
        [](const Value<T>& da, const Value<T>& ap, const Value<T>& bp, const Value<T>&) {
            return mul(da, mul(bp, pow(ap, sub(bp, Value<T>(T(1))))));
        },
        [](const Value<T>& db, const Value<T>& ap, const Value<T>&, const Value<T>& yp) {
            return mul(db, mul(yp, log(ap)));
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>& bp, const Value<T>&) {
            return mul(adj, mul(bp, pow(ap, sub(bp, Value<T>(T(1))))));
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&, const Value<T>& yp) {
            return mul(adj, mul(yp, log(ap)));
        });
}

// ---- unary math -------------------------------------------------------------------

template <std::floating_point T>
Value<T> neg(const Value<T>& a) {
    return detail::unary_op<T>(
        "neg", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return -u; });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>&) { return neg(da); },
        [](const Value<T>& adj, const Value<T>&, const Value<T>&) { return neg(adj); });
}

template <std::floating_point T>
Value<T> sin(const Value<T>& a) {
    return detail::unary_op<T>(
        "sin", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return std::sin(u); });
        },
        [](const Value<T>& da, const Value<T>& ap, const Value<T>&) { return mul(da, cos(ap)); },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&) { return mul(adj, cos(ap)); });
}

template <std::floating_point T>
Value<T> cos(const Value<T>& a) {
    return detail::unary_op<T>(
        "cos", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return std::cos(u); });
        },
        [](const Value<T>& da, const Value<T>& ap, const Value<T>&) {
            return neg(mul(da, sin(ap)));
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&) {
            return neg(mul(adj, sin(ap)));
        });
}

template <std::floating_point T>
Value<T> tan(const Value<T>& a) {
    return detail::unary_op<T>(
        "tan", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return std::tan(u); });
        },
        [](const Value<T>& da, const Value<T>& ap, const Value<T>&) {
            const Value<T> c = cos(ap);
            return div(da, mul(c, c));
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&) {
            const Value<T> c = cos(ap);
            return div(adj, mul(c, c));
        });
}

template <std::floating_point T>
Value<T> exp(const Value<T>& a) {
    return detail::unary_op<T>(
        "exp", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return std::exp(u); });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>& yp) { return mul(da, yp); },
        [](const Value<T>& adj, const Value<T>&, const Value<T>& yp) { return mul(adj, yp); });
}

template <std::floating_point T>
Value<T> log(const Value<T>& a) {
    return detail::unary_op<T>(
        "log", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return std::log(u); });
        },
        [](const Value<T>& da, const Value<T>& ap, const Value<T>&) { return div(da, ap); },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&) { return div(adj, ap); });
}

template <std::floating_point T>
Value<T> sqrt(const Value<T>& a) {
    return detail::unary_op<T>(
        "sqrt", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return std::sqrt(u); });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>& yp) {
            return div(da, mul(Value<T>(T(2)), yp));
        },
        [](const Value<T>& adj, const Value<T>&, const Value<T>& yp) {
            return div(adj, mul(Value<T>(T(2)), yp));
        });
}

template <std::floating_point T>
Value<T> sigmoid(const Value<T>& a) {
    return detail::unary_op<T>(
        "sigmoid", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return T(1) / (T(1) + std::exp(-u)); });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>& yp) {
            return mul(da, mul(yp, sub(Value<T>(T(1)), yp)));
        },
        [](const Value<T>& adj, const Value<T>&, const Value<T>& yp) {
            return mul(adj, mul(yp, sub(Value<T>(T(1)), yp)));
        });
}

template <std::floating_point T>
Value<T> tanh(const Value<T>& a) {
    return detail::unary_op<T>(
        "tanh", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return std::tanh(u); });
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>& yp) {
            return mul(da, sub(Value<T>(T(1)), mul(yp, yp)));
        },
        [](const Value<T>& adj, const Value<T>&, const Value<T>& yp) {
            return mul(adj, sub(Value<T>(T(1)), mul(yp, yp)));
        });
}

// The sub-gradient at 0 is taken as 0; the mask is detached, so it is a
// constant of every differentiation level.
template <std::floating_point T>
Value<T> relu(const Value<T>& a) {
    const Value<T> mask = Value<T>::constant(detail::unary_payload<T>(
        a.deep_payload(), [](T u) { return u > T(0) ? T(1) : T(0); }));
    return detail::unary_op<T>(
        "relu", a,
        [](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [](T u) { return u > T(0) ? u : T(0); });
        },
        [mask](const Value<T>& da, const Value<T>&, const Value<T>&) { return mul(da, mask); },
        [mask](const Value<T>& adj, const Value<T>&, const Value<T>&) { return mul(adj, mask); });
}

// Clamps to [lo, hi]; the derivative is 1 inside the interval (endpoints
// included) and 0 outside, again via a detached mask.
template <std::floating_point T>
Value<T> clamp(const Value<T>& a, T lo, T hi) {
    const Value<T> mask = Value<T>::constant(detail::unary_payload<T>(
        a.deep_payload(), [lo, hi](T u) { return (u >= lo && u <= hi) ? T(1) : T(0); }));
    return detail::unary_op<T>(
        "clamp", a,
        [lo, hi](const Payload<T>& x) {
            return detail::unary_payload<T>(x, [lo, hi](T u) { return std::clamp(u, lo, hi); });
        },
        [mask](const Value<T>& da, const Value<T>&, const Value<T>&) { return mul(da, mask); },
        [mask](const Value<T>& adj, const Value<T>&, const Value<T>&) { return mul(adj, mask); });
}

// ---- structural ops ------------------------------------------------------------

template <std::floating_point T>
Value<T> matmul(const Value<T>& a, const Value<T>& b) {
    return detail::binary_op<T>(
        "matmul", a, b,
        [](const Payload<T>& x, const Payload<T>& y) -> Payload<T> {
            if (std::holds_alternative<T>(x) || std::holds_alternative<T>(y))
                throw ShapeError("matmul needs array operands");
            return ndkit::matmul(std::get<Ndarray<T>>(x), std::get<Ndarray<T>>(y));
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>& bp, const Value<T>&) {
            return matmul(da, bp);
        },
        [](const Value<T>& db, const Value<T>& ap, const Value<T>&, const Value<T>&) {
            return matmul(ap, db);
        },
        [](const Value<T>& adj, const Value<T>&, const Value<T>& bp, const Value<T>&) {
            return matmul(adj, transpose(bp));
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&, const Value<T>&) {
            return matmul(transpose(ap), adj);
        });
}

template <std::floating_point T>
Value<T> transpose(const Value<T>& a) {
    return detail::unary_op<T>(
        "transpose", a,
        [](const Payload<T>& x) -> Payload<T> {
            if (std::holds_alternative<T>(x)) throw ShapeError("transpose needs an array operand");
            return ndkit::transpose(std::get<Ndarray<T>>(x));
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>&) { return transpose(da); },
        [](const Value<T>& adj, const Value<T>&, const Value<T>&) { return transpose(adj); });
}

template <std::floating_point T>
Value<T> reshape(const Value<T>& a, Shape target) {
    const Shape original = a.deep_shape();
    return detail::unary_op<T>(
        "reshape", a,
        [target](const Payload<T>& x) -> Payload<T> {
            if (std::holds_alternative<T>(x)) throw ShapeError("reshape needs an array operand");
            return std::get<Ndarray<T>>(x).reshape(target);
        },
        [target](const Value<T>& da, const Value<T>&, const Value<T>&) {
            return reshape(da, target);
        },
        [original](const Value<T>& adj, const Value<T>&, const Value<T>&) {
            return reshape(adj, original);
        });
}

// Sum of every element down to a scalar.
template <std::floating_point T>
Value<T> sum(const Value<T>& a) {
    return detail::unary_op<T>(
        "sum", a,
        [](const Payload<T>& x) -> Payload<T> {
            if (std::holds_alternative<T>(x)) return x;
            return std::get<Ndarray<T>>(x).sum();
        },
        [](const Value<T>& da, const Value<T>&, const Value<T>&) { return sum(da); },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&) {
            return detail::expand_to(adj, ap.deep_shape());
        });
}

// Reduces by summation to a given shape (the inverse of broadcasting).
template <std::floating_point T>
Value<T> sum_to(const Value<T>& a, Shape target) {
    if (a.deep_shape() == target) return a;
    return detail::unary_op<T>(
        "sum_to", a,
        [target](const Payload<T>& x) { return detail::sum_payload_to<T>(x, target); },
        [target](const Value<T>& da, const Value<T>&, const Value<T>&) {
            return sum_to(da, target);
        },
        [](const Value<T>& adj, const Value<T>& ap, const Value<T>&) {
            return detail::expand_to(adj, ap.deep_shape());
        });
}

// ---- operators -------------------------------------------------------------------

template <std::floating_point T>
Value<T> operator+(const Value<T>& a, const Value<T>& b) {
    return add(a, b);
}
template <std::floating_point T>
Value<T> operator-(const Value<T>& a, const Value<T>& b) {
    return sub(a, b);
}
template <std::floating_point T>
Value<T> operator*(const Value<T>& a, const Value<T>& b) {
    return mul(a, b);
}
template <std::floating_point T>
Value<T> operator/(const Value<T>& a, const Value<T>& b) {
    return div(a, b);
}
template <std::floating_point T>
Value<T> operator-(const Value<T>& a) {
    return neg(a);
}
template <std::floating_point T>
Value<T> operator+(const Value<T>& a, T b) {
    return add(a, Value<T>(b));
}
template <std::floating_point T>
Value<T> operator+(T a, const Value<T>& b) {
    return add(Value<T>(a), b);
}
template <std::floating_point T>
Value<T> operator-(const Value<T>& a, T b) {
    return sub(a, Value<T>(b));
}
template <std::floating_point T>
Value<T> operator-(T a, const Value<T>& b) {
    return sub(Value<T>(a), b);
}
template <std::floating_point T>
Value<T> operator*(const Value<T>& a, T b) {
    return mul(a, Value<T>(b));
}
template <std::floating_point T>
Value<T> operator*(T a, const Value<T>& b) {
    return mul(Value<T>(a), b);
}
template <std::floating_point T>
Value<T> operator/(const Value<T>& a, T b) {
    return div(a, Value<T>(b));
}
template <std::floating_point T>
Value<T> operator/(T a, const Value<T>& b) {
    return div(Value<T>(a), b);
}

// ---- differentiation drivers ----------------------------------------------------

namespace detail {

template <std::floating_point T>
Value<T> zeros_like(const Value<T>& v) {
    return zeros_like_shape<T>(v.deep_shape());
}

// Postorder over the reverse nodes of one differentiation level; reversing
// the result yields an order where every node precedes its inputs.
template <std::floating_point T>
std::vector<Node<T>*> collect_topo(const Value<T>& y, std::uint64_t tag) {
    std::vector<Node<T>*> topo;
    if (!(y.tag() == tag && y.mode() == Mode::Reverse)) return topo;
    struct Frame {
        Node<T>* n;
        std::size_t next;
    };
    std::unordered_set<Node<T>*> seen{y.node().get()};
    std::vector<Frame> stack{{y.node().get(), 0}};
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node<T>* p = f.n->parents[f.next++].value.node().get();
            if (p->tag == tag && p->mode == Mode::Reverse && seen.insert(p).second)
                stack.push_back({p, 0});
        } else {
            topo.push_back(f.n);
            stack.pop_back();
        }
    }
    return topo;
}

template <std::floating_point T>
void run_backward(const std::vector<Node<T>*>& topo, const Value<T>& y, const Value<T>& seed) {
    for (Node<T>* n : topo) n->adjoint.reset();
    y.node()->adjoint = seed;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node<T>* n = *it;
        if (!n->adjoint) continue;
        for (const Edge<T>& e : n->parents) {
            if (e.value.node()->mode != Mode::Reverse || e.value.node()->tag != n->tag) continue;
            Value<T> contrib = e.propagate(*n->adjoint);
            auto& slot = e.value.node()->adjoint;
            slot = slot ? add(*slot, contrib) : contrib;
        }
    }
}

}  // namespace detail

// Derivative of a scalar function by forward mode.  Returns a Value so calls
// can nest; `f` may itself differentiate.
template <std::floating_point T, typename F>
Value<T> diff_value(F&& f, const Value<T>& x) {
    const std::uint64_t t = detail::fresh_tag();
    const Value<T> dual = Value<T>::forward(x, Value<T>(T(1)), t);
    const Value<T> y = f(dual);
    if (y.tag() == t && y.mode() == detail::Mode::Forward) return *y.node()->tangent;
    return detail::zeros_like(y);
}

template <std::floating_point T, typename F>
T diff(F&& f, T x) {
    return diff_value<T>(std::forward<F>(f), Value<T>(x)).scalar();
}

// Gradient of a scalar-valued function by reverse mode, returned as a Value
// so an outer pass can differentiate through the backward computation.
template <std::floating_point T, typename F>
Value<T> grad_value(F&& f, const Value<T>& x) {
    const std::uint64_t t = detail::fresh_tag();
    const Value<T> leaf = Value<T>::reverse("leaf", x, {}, t);
    const Value<T> y = f(leaf);
    if (!y.is_scalar())
        throw std::invalid_argument("gradient needs a scalar-valued function, got shape " +
                                    shape_to_string(y.deep_shape()));
    const auto topo = detail::collect_topo(y, t);
    if (topo.empty()) return detail::zeros_like(x);
    detail::run_backward(topo, y, Value<T>(T(1)));
    const auto& adj = leaf.node()->adjoint;
    return adj ? *adj : detail::zeros_like(x);
}

template <std::floating_point T, typename F>
Ndarray<T> grad(F&& f, const Ndarray<T>& x) {
    const Value<T> g = grad_value<T>(std::forward<F>(f), Value<T>(x));
    return g.is_scalar() ? full<T>(x.shape(), g.scalar()) : g.array();
}

template <std::floating_point T, typename F>
T grad_scalar(F&& f, T x) {
    return grad_value<T>(std::forward<F>(f), Value<T>(x)).scalar();
}

// Loss and gradients of a scalar function of several array parameters in one
// reverse sweep; this is the optimizer's workhorse.
template <std::floating_point T, typename F>
std::pair<T, std::vector<Ndarray<T>>> value_and_grad(F&& f, const std::vector<Ndarray<T>>& xs) {
    const std::uint64_t t = detail::fresh_tag();
    std::vector<Value<T>> leaves;
    leaves.reserve(xs.size());
    for (const auto& x : xs) leaves.push_back(Value<T>::reverse("leaf", Value<T>(x), {}, t));
    const Value<T> y = f(leaves);
    if (!y.is_scalar())
        throw std::invalid_argument("value_and_grad needs a scalar-valued function");
    const T loss = y.scalar();

    std::vector<Ndarray<T>> grads;
    grads.reserve(xs.size());
    const auto topo = detail::collect_topo(y, t);
    if (!topo.empty()) detail::run_backward(topo, y, Value<T>(T(1)));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto& adj = leaves[i].node()->adjoint;
        grads.push_back(adj ? adj->array() : zeros<T>(xs[i].shape()));
    }
    return {loss, std::move(grads)};
}

// Jacobian of a rank-1 -> rank-1 function: one forward trace, one backward
// sweep per output element.
template <std::floating_point T, typename F>
Ndarray<T> jacobian(F&& f, const Ndarray<T>& x) {
    if (x.rank() != 1) throw ShapeError("jacobian expects a rank-1 input");
    const std::uint64_t t = detail::fresh_tag();
    const Value<T> leaf = Value<T>::reverse("leaf", Value<T>(x), {}, t);
    const Value<T> y = f(leaf);
    const Shape ys = y.deep_shape();
    if (ys.size() != 1) throw ShapeError("jacobian expects a rank-1 output");
    const Dim m = ys[0], n = x.numel();

    Ndarray<T> out(Shape{m, n});
    const auto topo = detail::collect_topo(y, t);
    for (Dim i = 0; i < m; ++i) {
        if (topo.empty()) break;
        Ndarray<T> seed(Shape{m});
        seed.set_flat(i, T(1));
        detail::run_backward(topo, y, Value<T>(std::move(seed)));
        const auto& adj = leaf.node()->adjoint;
        const Ndarray<T> row = adj ? adj->array() : zeros<T>(x.shape());
        for (Dim j = 0; j < n; ++j) out.set_flat(i * n + j, row.get_flat(j));
    }
    return out;
}

// Jacobian-vector product (forward) and vector-Jacobian product (reverse).
template <std::floating_point T, typename F>
Ndarray<T> jvp(F&& f, const Ndarray<T>& x, const Ndarray<T>& v) {
    if (v.shape() != x.shape()) throw ShapeError("jvp direction must match the input shape");
    const std::uint64_t t = detail::fresh_tag();
    const Value<T> dual = Value<T>::forward(Value<T>(x), Value<T>(v), t);
    const Value<T> y = f(dual);
    if (y.tag() == t && y.mode() == detail::Mode::Forward) {
        const Value<T> dy = *y.node()->tangent;
        return dy.is_scalar() ? full<T>(y.deep_shape().empty() ? Shape{1} : y.deep_shape(),
                                        dy.scalar())
                              : dy.array();
    }
    const Shape ys = y.deep_shape();
    return zeros<T>(ys.empty() ? Shape{1} : ys);
}

template <std::floating_point T, typename F>
Ndarray<T> vjp(F&& f, const Ndarray<T>& x, const Ndarray<T>& u) {
    const std::uint64_t t = detail::fresh_tag();
    const Value<T> leaf = Value<T>::reverse("leaf", Value<T>(x), {}, t);
    const Value<T> y = f(leaf);
    if (y.deep_shape() != u.shape())
        throw ShapeError("vjp weight must match the output shape");
    const auto topo = detail::collect_topo(y, t);
    if (topo.empty()) return zeros<T>(x.shape());
    detail::run_backward(topo, y, Value<T>(u));
    const auto& adj = leaf.node()->adjoint;
    return adj ? adj->array() : zeros<T>(x.shape());
}

// Hessian-vector product by forward-over-reverse: differentiate the whole
// reverse-mode gradient computation with an outer forward trace.
template <std::floating_point T, typename F>
Ndarray<T> hvp(F&& f, const Ndarray<T>& x, const Ndarray<T>& v) {
    if (v.shape() != x.shape()) throw ShapeError("hvp direction must match the input shape");
    const std::uint64_t t = detail::fresh_tag();
    const Value<T> dual = Value<T>::forward(Value<T>(x), Value<T>(v), t);
    const Value<T> g = grad_value<T>(f, dual);
    if (g.tag() == t && g.mode() == detail::Mode::Forward) {
        const Value<T> dg = *g.node()->tangent;
        return dg.is_scalar() ? full<T>(x.shape(), dg.scalar()) : dg.array();
    }
    return zeros<T>(x.shape());
}

template <std::floating_point T, typename F>
Ndarray<T> hessian(F&& f, const Ndarray<T>& x) {
    if (x.rank() != 1) throw ShapeError("hessian expects a rank-1 input");
    const Dim n = x.numel();
    Ndarray<T> h(Shape{n, n});
    for (Dim j = 0; j < n; ++j) {
        Ndarray<T> v(Shape{n});
        v.set_flat(j, T(1));
        const Ndarray<T> col = hvp<T>(f, x, v);
        for (Dim i = 0; i < n; ++i) h.set_flat(i * n + j, col.get_flat(i));
    }
    return h;
}

// ---- trace rendering -------------------------------------------------------------

namespace detail {
template <std::floating_point T>
Shape node_deep_shape(const Node<T>* n) {
    while (n->mode != Mode::Constant) n = n->primal->node().get();
    return payload_shape(*n->payload);
}
}  // namespace detail

// Renders the reverse trace reachable from `y` in DOT format; data flows
// along the edges from inputs to outputs.  Constants produce an empty graph.
template <std::floating_point T>
std::string export_dot(const Value<T>& y) {
    std::ostringstream os;
    os << "digraph trace {\n";
    if (y.mode() == detail::Mode::Reverse) {
        auto topo = detail::collect_topo(y, y.tag());
        std::sort(topo.begin(), topo.end(),
                  [](const auto* a, const auto* b) { return a->id < b->id; });
        for (const auto* n : topo) {
            const Shape s = detail::node_deep_shape(n);
            os << "  n" << n->id << " [label=\"" << n->op
               << (s.empty() ? "" : " " + shape_to_string(s)) << "\"];\n";
        }
        for (const auto* n : topo)
            for (const auto& e : n->parents)
                if (e.value.node()->mode == detail::Mode::Reverse && e.value.node()->tag == n->tag)
                    os << "  n" << e.value.node()->id << " -> n" << n->id << ";\n";
    }
    os << "}\n";
    return os.str();
}

// Builds a reverse trace of `f` over fresh leaves for the given inputs and
// renders it; the usual way to visualise an expression.
template <std::floating_point T, typename F>
std::string trace_dot(F&& f, const std::vector<Payload<T>>& inputs) {
    const std::uint64_t t = detail::fresh_tag();
    std::vector<Value<T>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& p : inputs)
        leaves.push_back(Value<T>::reverse("leaf", Value<T>::constant(p), {}, t));
    return export_dot(f(leaves));
}

}  // namespace ndkit::ad
