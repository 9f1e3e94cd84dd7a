#pragma once

#include <cstdint>
#include <numeric>
#include <variant>

#include "ndkit/autodiff.hpp"
#include "ndkit/slice.hpp"

// Gradient-based minimisation assembled from orthogonal policy knobs: how
// batches are drawn, which loss is applied to predictions, how the raw
// gradient becomes an update direction, how the step size evolves, which
// regularisation penalty is added, and when to stop.  Models are thin
// wrappers that pick a particular combination.
namespace ndkit::optim {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- policy knobs -------------------------------------------------------------

struct FullBatch {};
struct MiniBatch {
    Dim size = 32;
};
struct StochasticBatch {};  // one sample per update
using BatchPolicy = std::variant<FullBatch, MiniBatch, StochasticBatch>;

enum class LossKind { Quadratic, CrossEntropy, Hinge };

struct GradDescent {};
template <std::floating_point T>
struct MomentumGrad {
    T coefficient = T(0.9);
};
struct AdagradGrad {};  // direction -g; the adaptive scaling lives in the rate

template <std::floating_point T>
struct ConstRate {
    T value = T(0.01);
};
template <std::floating_point T>
struct DecayRate {
    T base = T(0.1);
    T decay = T(0.001);  // rate_k = base / (1 + decay * k)
};
template <std::floating_point T>
struct AdagradRate {
    T base = T(1);  // rate_k = base / (sqrt(sum of squared grads) + 1e-8), per element
};

struct NoRegularisation {};
template <std::floating_point T>
struct L1Norm {
    T alpha = T(0.001);
};
template <std::floating_point T>
struct L2Norm {
    T alpha = T(0.001);
};

template <std::floating_point T>
struct OptimParams {
    BatchPolicy batch{FullBatch{}};
    LossKind loss = LossKind::Quadratic;
    std::variant<GradDescent, MomentumGrad<T>, AdagradGrad> gradient{GradDescent{}};
    std::variant<ConstRate<T>, DecayRate<T>, AdagradRate<T>> learning_rate{ConstRate<T>{}};
    std::variant<NoRegularisation, L1Norm<T>, L2Norm<T>> regularisation{NoRegularisation{}};
    T stopping = T(1e-16);  // halt when the objective moves less than this
    double epochs = 1000.0;
};

template <std::floating_point T>
void validate(const OptimParams<T>& p) {
    if (const auto* mb = std::get_if<MiniBatch>(&p.batch); mb && mb->size < 1)
        throw std::invalid_argument("mini-batch size must be at least 1");
    if (const auto* m = std::get_if<MomentumGrad<T>>(&p.gradient);
        m && !(m->coefficient >= T(0) && m->coefficient < T(1)))
        throw std::invalid_argument("momentum coefficient must lie in [0, 1)");
    if (p.stopping < T(0)) throw std::invalid_argument("stopping threshold must be non-negative");
    if (!(p.epochs >= 0)) throw std::invalid_argument("epoch count must be non-negative");
}

// ---- losses -----------------------------------------------------------------------

// All losses average over the batch (axis-0 rows), so gradients keep the
// same scale whatever the batch policy.
template <std::floating_point T>
ad::Value<T> loss_value(LossKind kind, const ad::Value<T>& pred, const Ndarray<T>& target) {
    if (pred.deep_shape() != target.shape())
        throw ShapeError("predictions of " + shape_to_string(pred.deep_shape()) +
                         " cannot be scored against targets of " +
                         shape_to_string(target.shape()));
    const T n = static_cast<T>(target.shape()[0]);
    const ad::Value<T> t(target);
    switch (kind) {
        case LossKind::Quadratic: {
            const ad::Value<T> d = sub(pred, t);
            return mul(ad::Value<T>(T(0.5) / n), sum(mul(d, d)));
        }
        case LossKind::CrossEntropy:
            return mul(ad::Value<T>(T(-1) / n),
                       sum(mul(t, log(clamp(pred, T(1e-12), T(1))))));
        case LossKind::Hinge:
            return mul(ad::Value<T>(T(1) / n),
                       sum(relu(sub(ad::Value<T>(T(1)), mul(t, pred)))));
    }
    throw std::logic_error("unknown loss kind");
}

// ---- the update rule ----------------------------------------------------------------

// Applies one parameter update; owns the state behind momentum and adaptive
// rates.  Shared by the in-process loop below and the parameter server, so
// both walk identical trajectories.
template <std::floating_point T>
class Stepper {
  public:
    Stepper(OptimParams<T> params, const std::vector<Ndarray<T>>& theta0,
            std::vector<bool> reg_mask = {})
        : p_(std::move(params)), mask_(std::move(reg_mask)) {
        validate(p_);
        if (mask_.empty()) mask_.assign(theta0.size(), true);
        if (mask_.size() != theta0.size())
            throw std::invalid_argument("regularisation mask and parameter list disagree");
        for (const auto& th : theta0) {
            sq_grad_.push_back(zeros<T>(th.shape()));
            velocity_.push_back(zeros<T>(th.shape()));
        }
    }

    const OptimParams<T>& params() const { return p_; }

    // Regularisation penalty added to the reported objective.  Exactly zero
    // (and skipped entirely) when unregularised or alpha is 0.
    T penalty(const std::vector<Ndarray<T>>& theta) const {
        T acc = T(0);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (!mask_[i]) continue;
            if (const auto* l1 = std::get_if<L1Norm<T>>(&p_.regularisation)) {
                if (l1->alpha == T(0)) continue;
                T s = T(0);
                theta[i].iter([&](T v) { s += std::abs(v); });
                acc += l1->alpha * s;
            } else if (const auto* l2 = std::get_if<L2Norm<T>>(&p_.regularisation)) {
                if (l2->alpha == T(0)) continue;
                T s = T(0);
                theta[i].iter([&](T v) { s += v * v; });
                acc += l2->alpha * s;
            }
        }
        return acc;
    }

    // One update: theta <- theta + rate (*) direction(gradient + reg subgradient).
    // k is the 0-based update index driving the schedules.
    void step(std::vector<Ndarray<T>>& theta, const std::vector<Ndarray<T>>& grads, Dim k) {
        if (grads.size() != theta.size())
            throw std::invalid_argument("gradient list and parameter list disagree");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (grads[i].shape() != theta[i].shape())
                throw ShapeError("gradient shape " + shape_to_string(grads[i].shape()) +
                                 " does not match parameter shape " +
                                 shape_to_string(theta[i].shape()));
            Ndarray<T> g = grads[i];
            add_regularisation(g, theta[i], i);
            update_one(theta[i], g, i, k);
        }
    }

  private:
    // The L1 subgradient takes sign(0) = 0.  A zero alpha adds nothing, not
    // even a zero term.
    void add_regularisation(Ndarray<T>& g, const Ndarray<T>& theta, std::size_t i) const {
        if (!mask_[i]) return;
        if (const auto* l1 = std::get_if<L1Norm<T>>(&p_.regularisation)) {
            if (l1->alpha == T(0)) return;
            const T a = l1->alpha;
            const T* pt = theta.data();
            T* pg = g.data();
            for (Dim e = 0, n = g.numel(); e < n; ++e)
                pg[e] += a * (pt[e] > T(0) ? T(1) : (pt[e] < T(0) ? T(-1) : T(0)));
        } else if (const auto* l2 = std::get_if<L2Norm<T>>(&p_.regularisation)) {
            if (l2->alpha == T(0)) return;
            const T a2 = T(2) * l2->alpha;
            const T* pt = theta.data();
            T* pg = g.data();
            for (Dim e = 0, n = g.numel(); e < n; ++e) pg[e] += a2 * pt[e];
        }
    }

    void update_one(Ndarray<T>& theta, const Ndarray<T>& g, std::size_t i, Dim k) {
        const T* pg = g.data();
        T* pt = theta.data();
        T* pv = velocity_[i].data();
        T* psq = sq_grad_[i].data();
        const bool momentum = std::holds_alternative<MomentumGrad<T>>(p_.gradient);
        const T mcoef = momentum ? std::get<MomentumGrad<T>>(p_.gradient).coefficient : T(0);

        T flat_rate = T(0);
        const bool adaptive = std::holds_alternative<AdagradRate<T>>(p_.learning_rate);
        if (const auto* c = std::get_if<ConstRate<T>>(&p_.learning_rate)) flat_rate = c->value;
        if (const auto* d = std::get_if<DecayRate<T>>(&p_.learning_rate))
            flat_rate = d->base / (T(1) + d->decay * static_cast<T>(k));
        const T base = adaptive ? std::get<AdagradRate<T>>(p_.learning_rate).base : T(0);

        for (Dim e = 0, n = theta.numel(); e < n; ++e) {
            T rate = flat_rate;
            if (adaptive) {
                psq[e] += pg[e] * pg[e];
                rate = base / (std::sqrt(psq[e]) + T(1e-8));
            }
            if (momentum) {
                pv[e] = mcoef * pv[e] - rate * pg[e];
                pt[e] += pv[e];
            } else {
                pt[e] -= rate * pg[e];
            }
        }
    }

    OptimParams<T> p_;
    std::vector<bool> mask_;
    std::vector<Ndarray<T>> sq_grad_;
    std::vector<Ndarray<T>> velocity_;
};

// ---- the minimisation loop -------------------------------------------------------

template <std::floating_point T>
struct MinimizeResult {
    std::vector<Ndarray<T>> theta;
    std::vector<T> history;  // objective (data loss + penalty) per evaluation
    Dim iterations = 0;      // completed update steps
};

// Minimises loss(predict(theta, x-batch), y-batch) + penalty(theta).
//
// `predict` maps (traced parameters, raw input batch) to a prediction Value.
// Rows of x and y pair up along axis 0.  The first history entry is the
// objective at theta0; the loop stops after `epochs` worth of updates or as
// soon as the objective moves by less than `stopping`.
template <std::floating_point T, typename Predict>
MinimizeResult<T> minimize(const OptimParams<T>& params, Predict predict,
                           std::vector<Ndarray<T>> theta, const Ndarray<T>& x,
                           const Ndarray<T>& y, std::vector<bool> reg_mask = {},
                           std::uint64_t seed = 0) {
    validate(params);
    const Dim n = x.shape()[0];
    if (y.shape()[0] != n)
        throw ShapeError("inputs carry " + std::to_string(n) + " rows but targets carry " +
                         std::to_string(y.shape()[0]));
    if (theta.empty()) throw std::invalid_argument("no parameters to optimise");

    Dim batch_size = n;
    if (const auto* mb = std::get_if<MiniBatch>(&params.batch)) batch_size = std::min(mb->size, n);
    if (std::holds_alternative<StochasticBatch>(params.batch)) batch_size = 1;
    const bool full = batch_size == n;
    const Dim per_epoch = (n + batch_size - 1) / batch_size;
    const Dim total = static_cast<Dim>(std::llround(params.epochs * static_cast<double>(per_epoch)));

    Stepper<T> stepper(params, theta, std::move(reg_mask));
    Rng rng(seed);
    std::vector<Dim> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Dim{0});

    Ndarray<T> xb, yb;
    auto load_batch = [&](Dim iter) {
        if (full) return;
        const Dim slot = iter % per_epoch;
        if (slot == 0) rng.shuffle(order);
        const Dim lo = slot * batch_size;
        const Dim hi = std::min(n, lo + batch_size);
        const std::vector<Dim> rows(order.begin() + lo, order.begin() + hi);
        xb = get_fancy(x, rows, 0);
        yb = get_fancy(y, rows, 0);
    };

    auto evaluate = [&](Dim iter) {
        load_batch(iter);
        const Ndarray<T>& bx = full ? x : xb;
        const Ndarray<T>& by = full ? y : yb;
        return ad::value_and_grad<T>(
            [&](const std::vector<ad::Value<T>>& vs) {
                return loss_value(params.loss, predict(vs, bx), by);
            },
            theta);
    };

    MinimizeResult<T> result;
    auto [loss, grads] = evaluate(0);
    result.history.push_back(loss + stepper.penalty(theta));
    for (Dim k = 1; k <= total; ++k) {
        stepper.step(theta, grads, k - 1);
        auto [lk, gk] = evaluate(k);
        const T objective = lk + stepper.penalty(theta);
        if (!std::isfinite(objective))
            throw DivergenceError("objective became non-finite at iteration " + std::to_string(k));
        grads = std::move(gk);
        result.history.push_back(objective);
        result.iterations = k;
        const T delta = std::abs(result.history[static_cast<std::size_t>(k)] -
                                 result.history[static_cast<std::size_t>(k - 1)]);
        if (delta < params.stopping) break;
    }
    result.theta = std::move(theta);
    return result;
}

}  // namespace ndkit::optim
