#pragma once

#include <fstream>

#include "ndkit/io.hpp"
#include "ndkit/optimizer.hpp"

// Regression models and feedforward networks.  Every fit is a thin
// configuration of optim::minimize; none of them carries its own training
// loop.
namespace ndkit::models {

// ---- linear models -----------------------------------------------------------

template <std::floating_point T>
struct LinearModel {
    Ndarray<T> weights;  // [features; outputs]
    Ndarray<T> bias;     // [1; outputs], all zero when fitted without intercept
    bool intercept = false;
    std::vector<T> history;
    Dim iterations = 0;

    Ndarray<T> predict(const Ndarray<T>& x) const {
        Ndarray<T> p = matmul(x, weights);
        if (intercept) {
            for (Dim r = 0; r < p.shape()[0]; ++r)
                for (Dim c = 0; c < p.shape()[1]; ++c)
                    p.set_flat(r * p.shape()[1] + c, p.get_flat(r * p.shape()[1] + c) +
                                                         bias.get_flat(c));
        }
        return p;
    }
};

namespace detail {
template <std::floating_point T>
void check_design(const Ndarray<T>& x, const Ndarray<T>& y) {
    if (x.rank() != 2 || y.rank() != 2)
        throw ShapeError("linear fits expect rank-2 inputs and targets, got " +
                         shape_to_string(x.shape()) + " and " + shape_to_string(y.shape()));
    if (x.shape()[0] != y.shape()[0])
        throw ShapeError("inputs carry " + std::to_string(x.shape()[0]) +
                         " rows but targets carry " + std::to_string(y.shape()[0]));
}
}  // namespace detail

// Fits weights (and optionally a bias, which is never regularised) by
// running the configured optimiser from zero initial parameters.
template <std::floating_point T>
LinearModel<T> fit_linear(const Ndarray<T>& x, const Ndarray<T>& y,
                          const optim::OptimParams<T>& params, bool intercept,
                          std::uint64_t seed = 0) {
    detail::check_design(x, y);
    const Dim d = x.shape()[1], k = y.shape()[1];

    std::vector<Ndarray<T>> theta{zeros<T>({d, k})};
    std::vector<bool> mask{true};
    if (intercept) {
        theta.push_back(zeros<T>({1, k}));
        mask.push_back(false);
    }
    auto predict = [intercept](const std::vector<ad::Value<T>>& vs, const Ndarray<T>& xb) {
        ad::Value<T> p = matmul(ad::Value<T>(xb), vs[0]);
        return intercept ? add(p, vs[1]) : p;
    };
    auto res = optim::minimize(params, predict, std::move(theta), x, y, std::move(mask), seed);

    LinearModel<T> m;
    m.weights = std::move(res.theta[0]);
    m.bias = intercept ? std::move(res.theta[1]) : zeros<T>({1, k});
    m.intercept = intercept;
    m.history = std::move(res.history);
    m.iterations = res.iterations;
    return m;
}

// The shared recipe: full batches, plain gradient direction, per-element
// adaptive rate from a base of 1, a 1e-16 plateau threshold, 1000 epochs.
// The four fits below differ only in loss and penalty.
template <std::floating_point T>
optim::OptimParams<T> regression_defaults() {
    optim::OptimParams<T> p;
    p.batch = optim::FullBatch{};
    p.loss = optim::LossKind::Quadratic;
    p.gradient = optim::GradDescent{};
    p.learning_rate = optim::AdagradRate<T>{T(1)};
    p.regularisation = optim::NoRegularisation{};
    p.stopping = T(1e-16);
    p.epochs = 1000.0;
    return p;
}

template <std::floating_point T>
LinearModel<T> ols(const Ndarray<T>& x, const Ndarray<T>& y, bool intercept = false) {
    return fit_linear(x, y, regression_defaults<T>(), intercept);
}

template <std::floating_point T>
LinearModel<T> ridge(const Ndarray<T>& x, const Ndarray<T>& y, T alpha = T(0.001),
                     bool intercept = false) {
    auto p = regression_defaults<T>();
    p.regularisation = optim::L2Norm<T>{alpha};
    return fit_linear(x, y, p, intercept);
}

template <std::floating_point T>
LinearModel<T> lasso(const Ndarray<T>& x, const Ndarray<T>& y, T alpha = T(0.001),
                     bool intercept = false) {
    auto p = regression_defaults<T>();
    p.regularisation = optim::L1Norm<T>{alpha};
    return fit_linear(x, y, p, intercept);
}

// Margin classifier: targets must be -1/+1; hinge loss with an L2 penalty.
template <std::floating_point T>
LinearModel<T> svm(const Ndarray<T>& x, const Ndarray<T>& y, T alpha = T(0.001),
                   bool intercept = false) {
    detail::check_design(x, y);
    bool ok = true;
    y.iter([&](T v) { ok = ok && (v == T(1) || v == T(-1)); });
    if (!ok) throw std::invalid_argument("svm targets must be -1 or +1");
    auto p = regression_defaults<T>();
    p.loss = optim::LossKind::Hinge;
    p.regularisation = optim::L2Norm<T>{alpha};
    return fit_linear(x, y, p, intercept);
}

// Normal-equation solution of the L2-penalised least squares problem,
// minimising (1/2n)|Xw - y|^2 + alpha |w|^2 without intercept:
//   w = (X'X + 2 n alpha I)^-1 X' y
template <std::floating_point T>
Ndarray<T> ridge_closed_form(const Ndarray<T>& x, const Ndarray<T>& y, T alpha) {
    detail::check_design(x, y);
    const Dim n = x.shape()[0], d = x.shape()[1];
    const Ndarray<T> xt = transpose(x);
    Ndarray<T> gram = matmul(xt, x);
    const T shift = T(2) * static_cast<T>(n) * alpha;
    for (Dim i = 0; i < d; ++i) gram.set_flat(i * d + i, gram.get_flat(i * d + i) + shift);
    return solve(gram, matmul(xt, y));
}

// ---- feedforward networks ---------------------------------------------------------

enum class Activation { None, Tanh, Relu, Sigmoid, Softmax };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::None: return "none";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from(const std::string& s) {
    if (s == "none") return Activation::None;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softmax") return Activation::Softmax;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

// Row-wise softmax, stabilised by subtracting each row's maximum.  The
// maxima are detached constants: subtracting them cancels in the derivative,
// so this changes nothing but the floating-point range.
template <std::floating_point T>
ad::Value<T> softmax_rows(const ad::Value<T>& z) {
    const Ndarray<T>& raw = z.array();
    if (raw.rank() != 2) throw ShapeError("softmax expects rank-2 activations");
    const Ndarray<T> row_max = raw.max(1).reshape({raw.shape()[0], 1});
    const ad::Value<T> e = exp(sub(z, ad::Value<T>(row_max)));
    return div(e, sum_to(e, Shape{raw.shape()[0], 1}));
}

template <std::floating_point T>
ad::Value<T> activate(Activation a, const ad::Value<T>& z) {
    switch (a) {
        case Activation::None: return z;
        case Activation::Tanh: return tanh(z);
        case Activation::Relu: return relu(z);
        case Activation::Sigmoid: return sigmoid(z);
        case Activation::Softmax: return softmax_rows(z);
    }
    throw std::logic_error("unknown activation");
}

struct TrainReport {
    std::vector<double> history;
    Dim iterations = 0;
};

// A stack of fully connected layers.  Describe the topology first (input +
// linear calls), then init_params, then train/predict.
template <std::floating_point T>
class Network {
  public:
    explicit Network(Dim input_size) : input_size_(input_size) {
        if (input_size < 1) throw ShapeError("input size must be positive");
    }

    Network& linear(Dim out, Activation act = Activation::None) {
        if (out < 1) throw ShapeError("layer size must be positive");
        const Dim in = layers_.empty() ? input_size_ : layers_.back().out;
        layers_.push_back({in, out, act, zeros<T>({in, out}), zeros<T>({1, out})});
        return *this;
    }

    Dim input_size() const { return input_size_; }
    std::size_t depth() const { return layers_.size(); }

    Dim param_count() const {
        Dim n = 0;
        for (const auto& l : layers_) n += l.in * l.out + l.out;
        return n;
    }

    // Uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    void init_params(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& l : layers_) {
            const T bound = std::sqrt(T(6) / static_cast<T>(l.in + l.out));
            T* p = l.w.data();
            for (Dim i = 0; i < l.w.numel(); ++i)
                p[i] = bound * (T(2) * static_cast<T>(rng.next_double()) - T(1));
            l.b.fill(T(0));
        }
    }

    std::vector<Ndarray<T>> params() const {
        std::vector<Ndarray<T>> out;
        for (const auto& l : layers_) {
            out.push_back(l.w);
            out.push_back(l.b);
        }
        return out;
    }

    void set_params(const std::vector<Ndarray<T>>& ps) {
        if (ps.size() != layers_.size() * 2)
            throw std::invalid_argument("expected " + std::to_string(layers_.size() * 2) +
                                        " parameter arrays, got " + std::to_string(ps.size()));
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (ps[2 * i].shape() != layers_[i].w.shape() ||
                ps[2 * i + 1].shape() != layers_[i].b.shape())
                throw ShapeError("parameter shapes do not match the network topology");
            layers_[i].w = ps[2 * i];
            layers_[i].b = ps[2 * i + 1];
        }
    }

    // Traced forward pass over explicit parameters (w0, b0, w1, b1, ...).
    ad::Value<T> forward(const std::vector<ad::Value<T>>& ps, const Ndarray<T>& x) const {
        if (x.rank() != 2 || x.shape()[1] != input_size_)
            throw ShapeError("network expects input of shape [n;" + std::to_string(input_size_) +
                             "], got " + shape_to_string(x.shape()));
        ad::Value<T> h(x);
        for (std::size_t i = 0; i < layers_.size(); ++i)
            h = activate(layers_[i].act, add(matmul(h, ps[2 * i]), ps[2 * i + 1]));
        return h;
    }

    Ndarray<T> predict(const Ndarray<T>& x) const {
        std::vector<ad::Value<T>> ps;
        for (const auto& l : layers_) {
            ps.emplace_back(l.w);
            ps.emplace_back(l.b);
        }
        return forward(ps, x).array();
    }

    TrainReport train(const Ndarray<T>& x, const Ndarray<T>& y,
                      const optim::OptimParams<T>& params, std::uint64_t seed = 0) {
        auto res = optim::minimize(
            params, [this](const std::vector<ad::Value<T>>& ps, const Ndarray<T>& xb) {
                return forward(ps, xb);
            },
            this->params(), x, y, {}, seed);
        set_params(res.theta);
        TrainReport report;
        report.history.assign(res.history.begin(), res.history.end());
        report.iterations = res.iterations;
        return report;
    }

    void save(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot open " + path + " for writing");
        os << "network " << input_size_ << ' ' << layers_.size() << '\n';
        for (const auto& l : layers_) {
            os << "linear " << l.in << ' ' << l.out << ' ' << activation_name(l.act) << '\n';
            write_array(os, l.w);
            write_array(os, l.b);
        }
    }

    static Network load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open " + path);
        std::string magic;
        Dim input = 0;
        std::size_t count = 0;
        if (!(is >> magic >> input >> count) || magic != "network")
            throw std::runtime_error("malformed network file " + path);
        Network net(input);
        for (std::size_t i = 0; i < count; ++i) {
            std::string kind, act;
            Dim in = 0, out = 0;
            if (!(is >> kind >> in >> out >> act) || kind != "linear")
                throw std::runtime_error("malformed layer header in " + path);
            net.linear(out, activation_from(act));
            auto& l = net.layers_.back();
            if (l.in != in)
                throw std::runtime_error("layer sizes in " + path + " do not chain together");
            l.w = read_array<T>(is);
            l.b = read_array<T>(is);
            if (l.w.shape() != Shape{in, out} || l.b.shape() != Shape{1, out})
                throw std::runtime_error("layer arrays in " + path + " have the wrong shape");
        }
        return net;
    }

  private:
    struct Layer {
        Dim in, out;
        Activation act;
        Ndarray<T> w, b;
    };

    Dim input_size_;
    std::vector<Layer> layers_;
};

}  // namespace ndkit::models
