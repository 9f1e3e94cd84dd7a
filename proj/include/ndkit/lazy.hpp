#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ndkit/broadcast.hpp"
#include "ndkit/linalg.hpp"

// Lazily evaluated computation graphs.  Building operations only records
// nodes and infers shapes; eval() walks the subgraph that actually needs
// computing.  During a pass the engine counts how many pending reads each
// intermediate result still has, and when a consumer performs the last read
// of a value whose shape matches its output, it steals that buffer and runs
// the operation in place instead of allocating.  Values held externally can
// be pinned with retain().  assign() overwrites an input variable and marks
// every downstream node stale so the next eval() recomputes exactly the
// affected region.
namespace ndkit::lazy {

using NodeId = std::size_t;

enum class Op {
    Var,
    Const,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Neg,
    Relu,
    Sigmoid,
    Tanh,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min2,
    Max2,
    Matmul,
    Transpose,
    Sum
};

namespace detail {

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Var: return "var";
        case Op::Const: return "const";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Tan: return "tan";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sqrt: return "sqrt";
        case Op::Neg: return "neg";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Pow: return "pow";
        case Op::Min2: return "min2";
        case Op::Max2: return "max2";
        case Op::Matmul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::Sum: return "sum";
    }
    return "?";
}

inline bool is_unary_elementwise(Op op) {
    switch (op) {
        case Op::Sin:
        case Op::Cos:
        case Op::Tan:
        case Op::Exp:
        case Op::Log:
        case Op::Sqrt:
        case Op::Neg:
        case Op::Relu:
        case Op::Sigmoid:
        case Op::Tanh: return true;
        default: return false;
    }
}

inline bool is_binary_elementwise(Op op) {
    switch (op) {
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Pow:
        case Op::Min2:
        case Op::Max2: return true;
        default: return false;
    }
}

inline bool is_commutative(Op op) {
    return op == Op::Add || op == Op::Mul || op == Op::Min2 || op == Op::Max2;
}

template <std::floating_point T>
T (*unary_fn(Op op))(T) {
    switch (op) {
        case Op::Sin: return +[](T x) { return std::sin(x); };
        case Op::Cos: return +[](T x) { return std::cos(x); };
        case Op::Tan: return +[](T x) { return std::tan(x); };
        case Op::Exp: return +[](T x) { return std::exp(x); };
        case Op::Log: return +[](T x) { return std::log(x); };
        case Op::Sqrt: return +[](T x) { return std::sqrt(x); };
        case Op::Neg: return +[](T x) { return -x; };
        case Op::Relu: return +[](T x) { return x > T(0) ? x : T(0); };
        case Op::Sigmoid: return +[](T x) { return T(1) / (T(1) + std::exp(-x)); };
        case Op::Tanh: return +[](T x) { return std::tanh(x); };
        default: throw std::logic_error("not a unary op");
    }
}

template <std::floating_point T>
T (*binary_fn(Op op))(T, T) {
    switch (op) {
        case Op::Add: return +[](T a, T b) { return a + b; };
        case Op::Sub: return +[](T a, T b) { return a - b; };
        case Op::Mul: return +[](T a, T b) { return a * b; };
        case Op::Div: return +[](T a, T b) { return a / b; };
        case Op::Pow: return +[](T a, T b) { return std::pow(a, b); };
        case Op::Min2: return +[](T a, T b) { return b < a ? b : a; };
        case Op::Max2: return +[](T a, T b) { return a < b ? b : a; };
        default: throw std::logic_error("not a binary op");
    }
}

}  // namespace detail

template <std::floating_point T>
class Graph {
  public:
    // ---- construction ----------------------------------------------------

    NodeId variable(Shape shape, std::string name = "") {
        check_shape(shape);
        return push(Op::Var, {}, std::move(shape), std::move(name));
    }

    NodeId constant(Ndarray<T> value, std::string name = "") {
        const NodeId id = push(Op::Const, {}, value.shape(), std::move(name));
        nodes_[id].value = std::move(value);
        return id;
    }

    NodeId sin(NodeId a) { return unary(Op::Sin, a); }
    NodeId cos(NodeId a) { return unary(Op::Cos, a); }
    NodeId tan(NodeId a) { return unary(Op::Tan, a); }
    NodeId exp(NodeId a) { return unary(Op::Exp, a); }
    NodeId log(NodeId a) { return unary(Op::Log, a); }
    NodeId sqrt(NodeId a) { return unary(Op::Sqrt, a); }
    NodeId neg(NodeId a) { return unary(Op::Neg, a); }
    NodeId relu(NodeId a) { return unary(Op::Relu, a); }
    NodeId sigmoid(NodeId a) { return unary(Op::Sigmoid, a); }
    NodeId tanh(NodeId a) { return unary(Op::Tanh, a); }

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
    NodeId div(NodeId a, NodeId b) { return binary(Op::Div, a, b); }
    NodeId pow(NodeId a, NodeId b) { return binary(Op::Pow, a, b); }
    NodeId min2(NodeId a, NodeId b) { return binary(Op::Min2, a, b); }
    NodeId max2(NodeId a, NodeId b) { return binary(Op::Max2, a, b); }

    NodeId matmul(NodeId a, NodeId b) {
        check_id(a);
        check_id(b);
        const Shape &sa = nodes_[a].shape, &sb = nodes_[b].shape;
        if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
            throw ShapeError("matmul cannot combine " + shape_to_string(sa) + " with " +
                             shape_to_string(sb));
        return push(Op::Matmul, {a, b}, Shape{sa[0], sb[1]});
    }

    NodeId transpose(NodeId a) {
        check_id(a);
        const Shape& s = nodes_[a].shape;
        if (s.size() != 2)
            throw ShapeError("transpose needs a rank-2 node, got " + shape_to_string(s));
        return push(Op::Transpose, {a}, Shape{s[1], s[0]});
    }

    // Sum of all elements, kept as a one-element array.
    NodeId sum(NodeId a) {
        check_id(a);
        return push(Op::Sum, {a}, Shape{1});
    }

    // ---- data movement -----------------------------------------------------

    void assign(NodeId var, Ndarray<T> value) {
        check_id(var);
        NodeData& n = nodes_[var];
        if (n.op != Op::Var)
            throw std::invalid_argument("assign targets must be variables, node " +
                                        std::to_string(var) + " is " + detail::op_name(n.op));
        if (value.shape() != n.shape)
            throw ShapeError("variable expects " + shape_to_string(n.shape) + ", got " +
                             shape_to_string(value.shape()));
        n.value = std::move(value);
        // Everything computed from this variable is now stale.
        std::vector<NodeId> queue(n.children);
        while (!queue.empty()) {
            const NodeId id = queue.back();
            queue.pop_back();
            if (nodes_[id].dirty) continue;
            nodes_[id].dirty = true;
            queue.insert(queue.end(), nodes_[id].children.begin(), nodes_[id].children.end());
        }
    }

    // Pins a node's result: its buffer is never stolen, so references returned
    // by peek() stay valid across later evaluations of other nodes.
    void retain(NodeId id) {
        check_id(id);
        nodes_[id].reusable = false;
    }

    Ndarray<T> eval(NodeId target) {
        evaluate(target);
        return *nodes_[target].value;
    }

    // Zero-copy access to an evaluated node's result.
    const Ndarray<T>& peek(NodeId id) const {
        check_id(id);
        if (!nodes_[id].value)
            throw std::runtime_error("node " + node_label(id) + " holds no value; eval it first");
        return *nodes_[id].value;
    }

    const Shape& shape_of(NodeId id) const {
        check_id(id);
        return nodes_[id].shape;
    }

    std::size_t size() const { return nodes_.size(); }

    // ---- instrumentation ----------------------------------------------------

    std::size_t alloc_count() const { return alloc_count_; }
    std::size_t exec_count() const { return exec_count_; }
    bool reuse_violation() const { return reuse_violation_; }
    void reset_counters() {
        alloc_count_ = 0;
        exec_count_ = 0;
    }

    std::string to_dot() const {
        std::ostringstream os;
        os << "digraph lazy {\n";
        for (NodeId id = 0; id < nodes_.size(); ++id)
            os << "  n" << id << " [label=\"" << node_label(id) << " "
               << shape_to_string(nodes_[id].shape) << "\"];\n";
        for (NodeId id = 0; id < nodes_.size(); ++id)
            for (NodeId p : nodes_[id].parents) os << "  n" << p << " -> n" << id << ";\n";
        os << "}\n";
        return os.str();
    }

  private:
    struct NodeData {
        Op op;
        std::vector<NodeId> parents;
        std::vector<NodeId> children;
        Shape shape;
        std::string name;
        std::optional<Ndarray<T>> value;
        bool dirty = false;
        bool reusable = true;
    };

    void check_id(NodeId id) const {
        if (id >= nodes_.size())
            throw std::out_of_range("node id " + std::to_string(id) + " out of range");
    }

    std::string node_label(NodeId id) const {
        const NodeData& n = nodes_[id];
        std::string label = detail::op_name(n.op);
        if (!n.name.empty()) label += " " + n.name;
        return label;
    }

    NodeId push(Op op, std::vector<NodeId> parents, Shape shape, std::string name = "") {
        const NodeId id = nodes_.size();
        for (NodeId p : parents) nodes_[p].children.push_back(id);
        nodes_.push_back(NodeData{op, std::move(parents), {}, std::move(shape), std::move(name),
                                  std::nullopt, false, true});
        return id;
    }

    NodeId unary(Op op, NodeId a) {
        check_id(a);
        return push(op, {a}, nodes_[a].shape);
    }

    NodeId binary(Op op, NodeId a, NodeId b) {
        check_id(a);
        check_id(b);
        return push(op, {a, b}, broadcast_shapes(nodes_[a].shape, nodes_[b].shape).out);
    }

    // Nodes needing computation, in creation order (which is topological:
    // parents always precede children).
    std::vector<NodeId> schedule(NodeId target) {
        std::vector<char> visited(nodes_.size(), 0), need(nodes_.size(), 0);
        std::vector<NodeId> stack{target};
        while (!stack.empty()) {
            const NodeId id = stack.back();
            stack.pop_back();
            if (visited[id]) continue;
            visited[id] = 1;
            const NodeData& n = nodes_[id];
            if (n.op == Op::Var) {
                if (!n.value)
                    throw std::runtime_error("variable " + node_label(id) +
                                             " has no assigned value");
                continue;
            }
            if (n.op == Op::Const) continue;
            if (!n.value || n.dirty) {
                need[id] = 1;
                for (NodeId p : n.parents) stack.push_back(p);
            }
        }
        std::vector<NodeId> plan;
        for (NodeId id = 0; id < nodes_.size(); ++id)
            if (need[id]) plan.push_back(id);
        return plan;
    }

    void evaluate(NodeId target) {
        check_id(target);
        const auto plan = schedule(target);
        std::vector<int> pending(nodes_.size(), 0);
        std::vector<char> fresh(nodes_.size(), 0), stolen(nodes_.size(), 0);
        for (NodeId id : plan)
            for (NodeId p : nodes_[id].parents) ++pending[p];
        for (NodeId id : plan) compute(id, pending, fresh, stolen);
    }

    const Ndarray<T>& parent_value(NodeId p, const std::vector<char>& stolen) {
        const NodeData& n = nodes_[p];
        if (!n.value) {
            if (stolen[p]) {
                reuse_violation_ = true;
                throw std::logic_error("buffer reuse consumed a value that was still needed");
            }
            throw std::logic_error("evaluation order bug: parent computed after its consumer");
        }
        return *n.value;
    }

    // A parent's buffer may be taken over when it was produced during this
    // pass, nobody pinned it, the shapes agree, and the current node performs
    // the last remaining read(s) of it.
    bool can_steal(NodeId consumer, NodeId p, const std::vector<int>& pending,
                   const std::vector<char>& fresh) const {
        const NodeData& pn = nodes_[p];
        if (!fresh[p] || !pn.reusable || !pn.value) return false;
        if (pn.shape != nodes_[consumer].shape) return false;
        int reads = 0;
        for (NodeId q : nodes_[consumer].parents)
            if (q == p) ++reads;
        return pending[p] == reads;
    }

    void compute(NodeId id, std::vector<int>& pending, std::vector<char>& fresh,
                 std::vector<char>& stolen) {
        NodeData& n = nodes_[id];
        if (detail::is_unary_elementwise(n.op)) {
            const NodeId a = n.parents[0];
            const auto f = detail::unary_fn<T>(n.op);
            if (can_steal(id, a, pending, fresh)) {
                Ndarray<T> buf = std::move(*nodes_[a].value);
                nodes_[a].value.reset();
                stolen[a] = 1;
                n.value = std::move(buf.map_(f));
            } else {
                n.value = parent_value(a, stolen).map(f);
                ++alloc_count_;
            }
        } else if (detail::is_binary_elementwise(n.op)) {
            const NodeId a = n.parents[0], b = n.parents[1];
            const auto f = detail::binary_fn<T>(n.op);
            // In-place evaluation walks both operands linearly, so it is only
            // safe when neither side is being stretched.
            const bool no_stretch = nodes_[a].shape == nodes_[b].shape;
            if (no_stretch && can_steal(id, a, pending, fresh)) {
                Ndarray<T> buf = std::move(*nodes_[a].value);
                nodes_[a].value.reset();
                stolen[a] = 1;
                const T* pb = a == b ? buf.data() : parent_value(b, stolen).data();
                T* pa = buf.data();
                for (Dim i = 0, m = buf.numel(); i < m; ++i) pa[i] = f(pa[i], pb[i]);
                n.value = std::move(buf);
            } else if (no_stretch && detail::is_commutative(n.op) && a != b &&
                       can_steal(id, b, pending, fresh)) {
                Ndarray<T> buf = std::move(*nodes_[b].value);
                nodes_[b].value.reset();
                stolen[b] = 1;
                const T* pa = parent_value(a, stolen).data();
                T* pb = buf.data();
                for (Dim i = 0, m = buf.numel(); i < m; ++i) pb[i] = f(pa[i], pb[i]);
                n.value = std::move(buf);
            } else {
                n.value = ndkit::detail::broadcast_binary(parent_value(a, stolen),
                                                          parent_value(b, stolen), f);
                ++alloc_count_;
            }
        } else if (n.op == Op::Matmul) {
            n.value = ndkit::matmul(parent_value(n.parents[0], stolen),
                                    parent_value(n.parents[1], stolen));
            ++alloc_count_;
        } else if (n.op == Op::Transpose) {
            n.value = ndkit::transpose(parent_value(n.parents[0], stolen));
            ++alloc_count_;
        } else if (n.op == Op::Sum) {
            Ndarray<T> out(Shape{1});
            out.set_flat(0, parent_value(n.parents[0], stolen).sum());
            n.value = std::move(out);
            ++alloc_count_;
        } else {
            throw std::logic_error("unexpected op in schedule");
        }
        n.dirty = false;
        fresh[id] = 1;
        ++exec_count_;
        for (NodeId p : n.parents) --pending[p];
    }

    std::vector<NodeData> nodes_;
    std::size_t alloc_count_ = 0;
    std::size_t exec_count_ = 0;
    bool reuse_violation_ = false;
};

}  // namespace ndkit::lazy
