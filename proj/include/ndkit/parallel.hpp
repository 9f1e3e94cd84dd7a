#pragma once

#include <exception>
#include <functional>
#include <thread>

#include "ndkit/optimizer.hpp"

// In-process parallel engines.  Both are deliberately deterministic: chunks
// and shards are fixed contiguous ranges, partial results merge in index
// order, and the parameter-server rounds are synchronous, so a computation
// gives the same bits whatever the worker count permits.
namespace ndkit::actor {

namespace detail {

// n items into k contiguous ranges whose sizes differ by at most one.
inline std::vector<std::pair<Dim, Dim>> split_range(Dim n, int k) {
    std::vector<std::pair<Dim, Dim>> out;
    const Dim base = n / k, rem = n % k;
    Dim lo = 0;
    for (int i = 0; i < k; ++i) {
        const Dim len = base + (i < rem ? 1 : 0);
        out.emplace_back(lo, lo + len);
        lo += len;
    }
    return out;
}

}  // namespace detail

// ---- map-reduce ---------------------------------------------------------------

// Splits the flat element range across worker threads; results merge in
// chunk order.  map is exact regardless of chunking; fold matches the
// sequential left fold whenever the operation is associative over the data.
template <std::floating_point T>
class MapReduceEngine {
  public:
    explicit MapReduceEngine(int workers) : workers_(workers) {
        if (workers < 1) throw std::invalid_argument("worker count must be at least 1");
    }

    int workers() const { return workers_; }

    Ndarray<T> map(const std::function<T(T)>& fn, const Ndarray<T>& x) const {
        Ndarray<T> out(x.shape());
        const T* px = x.data();
        T* po = out.data();
        run_chunks(x.numel(), [&](Dim lo, Dim hi) {
            for (Dim i = lo; i < hi; ++i) po[i] = fn(px[i]);
        });
        return out;
    }

    // Left fold per chunk seeded from the chunk's first element; chunk
    // partials then fold left in chunk order.
    T fold(const std::function<T(T, T)>& fn, const Ndarray<T>& x) const {
        const T* px = x.data();
        std::vector<std::optional<T>> partials(static_cast<std::size_t>(workers_));
        const auto ranges = detail::split_range(x.numel(), workers_);
        run_chunks(x.numel(), [&](Dim lo, Dim hi) {
            T acc = px[lo];
            for (Dim i = lo + 1; i < hi; ++i) acc = fn(acc, px[i]);
            for (std::size_t c = 0; c < ranges.size(); ++c)
                if (ranges[c].first == lo) partials[c] = acc;
        });
        std::optional<T> acc;
        for (const auto& p : partials) {
            if (!p) continue;
            acc = acc ? fn(*acc, *p) : *p;
        }
        return *acc;
    }

    T sum(const Ndarray<T>& x) const {
        return fold([](T a, T b) { return a + b; }, x);
    }
    T min(const Ndarray<T>& x) const {
        return fold([](T a, T b) { return b < a ? b : a; }, x);
    }
    T max(const Ndarray<T>& x) const {
        return fold([](T a, T b) { return a < b ? b : a; }, x);
    }

    // A chunked scan would need carries across chunk boundaries; this engine
    // does not provide one.
    Ndarray<T> cumsum(const Ndarray<T>&, Dim) const {
        throw std::runtime_error(
            "cumulative scan is not supported by the map-reduce engine: chunks carry sequential "
            "dependencies");
    }

  private:
    // Runs body(lo, hi) for each non-empty chunk on its own thread; the first
    // worker exception (in chunk order) is rethrown on the caller.
    template <typename Body>
    void run_chunks(Dim n, Body body) const {
        const auto ranges = detail::split_range(n, workers_);
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(ranges.size());
        for (std::size_t c = 0; c < ranges.size(); ++c) {
            const auto [lo, hi] = ranges[c];
            if (lo == hi) continue;
            threads.emplace_back([&, lo, hi, c] {
                try {
                    body(lo, hi);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    int workers_;
};

// ---- parameter server -----------------------------------------------------------

// Synchronous data-parallel coordination: workers pull the current
// parameters, push one gradient set per round, and the final push of a round
// averages the gradients in worker order and applies a single optimiser
// step.  Reusing optim::Stepper keeps the update rule identical to the
// in-process loop.
template <std::floating_point T>
class ParamServer {
  public:
    ParamServer(std::vector<Ndarray<T>> params, optim::Stepper<T> stepper)
        : params_(std::move(params)), stepper_(std::move(stepper)) {
        if (params_.empty()) throw std::invalid_argument("parameter server needs parameters");
    }

    int register_worker() {
        if (round_ > 0 || pushed_any_)
            throw std::runtime_error("workers must register before the first round");
        pending_.emplace_back();
        return static_cast<int>(pending_.size()) - 1;
    }

    int workers() const { return static_cast<int>(pending_.size()); }
    Dim round() const { return round_; }

    const std::vector<Ndarray<T>>& pull() const { return params_; }

    // One gradient set per worker per round; the round's last push triggers
    // the update.
    void push(int worker, std::vector<Ndarray<T>> grads) {
        if (worker < 0 || worker >= workers())
            throw std::invalid_argument("unknown worker id " + std::to_string(worker));
        if (pending_[static_cast<std::size_t>(worker)])
            throw std::runtime_error("worker " + std::to_string(worker) +
                                     " already pushed this round");
        if (grads.size() != params_.size())
            throw std::invalid_argument("gradient set has the wrong number of arrays");
        for (std::size_t i = 0; i < grads.size(); ++i)
            if (grads[i].shape() != params_[i].shape())
                throw ShapeError("gradient shapes do not match the parameters");
        pending_[static_cast<std::size_t>(worker)] = std::move(grads);
        pushed_any_ = true;
        if (round_complete()) apply_round();
    }

    bool round_complete() const {
        for (const auto& p : pending_)
            if (!p) return false;
        return !pending_.empty();
    }

  private:
    void apply_round() {
        const T k = static_cast<T>(workers());
        std::vector<Ndarray<T>> mean = std::move(*pending_[0]);
        for (std::size_t w = 1; w < pending_.size(); ++w)
            for (std::size_t i = 0; i < mean.size(); ++i) add_(mean[i], (*pending_[w])[i]);
        for (auto& g : mean) g.map_([k](T v) { return v / k; });
        stepper_.step(params_, mean, round_);
        ++round_;
        for (auto& p : pending_) p.reset();
    }

    std::vector<Ndarray<T>> params_;
    optim::Stepper<T> stepper_;
    std::vector<std::optional<std::vector<Ndarray<T>>>> pending_;
    Dim round_ = 0;
    bool pushed_any_ = false;
};

// ---- data-parallel training ----------------------------------------------------

// Full-batch minimisation where the batch is sharded row-wise across K
// workers.  Each round every worker evaluates loss and gradient on its shard
// at the pulled parameters; the server averages and steps.  The reported
// objective is the mean of the shard losses plus the penalty, which for one
// worker reproduces optim::minimize bit for bit.
template <std::floating_point T, typename Predict>
optim::MinimizeResult<T> dist_minimize(const optim::OptimParams<T>& params, Predict predict,
                                       std::vector<Ndarray<T>> theta, const Ndarray<T>& x,
                                       const Ndarray<T>& y, int workers,
                                       std::vector<bool> reg_mask = {}) {
    optim::validate(params);
    if (!std::holds_alternative<optim::FullBatch>(params.batch))
        throw std::invalid_argument("distributed training shards the full batch");
    if (workers < 1) throw std::invalid_argument("worker count must be at least 1");
    const Dim n = x.shape()[0];
    if (y.shape()[0] != n)
        throw ShapeError("inputs carry " + std::to_string(n) + " rows but targets carry " +
                         std::to_string(y.shape()[0]));
    if (n < workers)
        throw std::invalid_argument("fewer rows than workers leaves idle shards");

    const auto shards = detail::split_range(n, workers);
    std::vector<Ndarray<T>> xs, ys;
    for (const auto& [lo, hi] : shards) {
        const SliceSpec rows{SliceEntry::range(lo, hi - 1)};
        xs.push_back(get_slice(x, rows));
        ys.push_back(get_slice(y, rows));
    }

    optim::Stepper<T> stepper(params, theta, std::move(reg_mask));
    ParamServer<T> server(std::move(theta), stepper);
    for (int w = 0; w < workers; ++w) server.register_worker();

    auto shard_eval = [&](int w, const std::vector<Ndarray<T>>& th) {
        return ad::value_and_grad<T>(
            [&](const std::vector<ad::Value<T>>& vs) {
                return optim::loss_value(params.loss, predict(vs, xs[static_cast<std::size_t>(w)]),
                                         ys[static_cast<std::size_t>(w)]);
            },
            th);
    };

    // One evaluation sweep at the server's current parameters: mean shard
    // loss plus every worker's gradients (pushed next round).
    auto sweep = [&]() {
        T acc = T(0);
        std::vector<std::vector<Ndarray<T>>> grads;
        const std::vector<Ndarray<T>>& th = server.pull();
        for (int w = 0; w < workers; ++w) {
            auto [loss, g] = shard_eval(w, th);
            acc += loss;
            grads.push_back(std::move(g));
        }
        return std::pair{acc / static_cast<T>(workers), std::move(grads)};
    };

    const Dim total = static_cast<Dim>(std::llround(params.epochs));
    optim::MinimizeResult<T> result;
    auto [loss, grads] = sweep();
    result.history.push_back(loss + stepper.penalty(server.pull()));
    for (Dim k = 1; k <= total; ++k) {
        for (int w = 0; w < workers; ++w)
            server.push(w, std::move(grads[static_cast<std::size_t>(w)]));
        auto [lk, gk] = sweep();
        const T objective = lk + stepper.penalty(server.pull());
        if (!std::isfinite(objective))
            throw optim::DivergenceError("objective became non-finite at round " +
                                         std::to_string(k));
        grads = std::move(gk);
        result.history.push_back(objective);
        result.iterations = k;
        const T delta = std::abs(result.history[static_cast<std::size_t>(k)] -
                                 result.history[static_cast<std::size_t>(k - 1)]);
        if (delta < params.stopping) break;
    }
    result.theta = server.pull();
    return result;
}

}  // namespace ndkit::actor
