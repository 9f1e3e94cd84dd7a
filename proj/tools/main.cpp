#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ndkit/bench.hpp"
#include "ndkit/io.hpp"
#include "ndkit/models.hpp"
#include "ndkit/parallel.hpp"

namespace {

void write_output(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << content;
}

// The demo expression traced by the `graph` subcommand:
//   sum( (x * sin(x + x) + (1 * sqrt(x)) / 7) * relu(y) )
ndkit::ad::Value<double> demo_expression(const std::vector<ndkit::ad::Value<double>>& in) {
    using V = ndkit::ad::Value<double>;
    const V& x = in[0];
    const V& y = in[1];
    const V left = add(mul(x, sin(add(x, x))), div(mul(V(1.0), sqrt(x)), V(7.0)));
    return sum(mul(left, relu(y)));
}

int run_bench(const ndkit::bench::BenchConfig& config, const std::string& out, bool digest) {
    const auto results = ndkit::bench::run_benchmarks(config);
    std::cout << ndkit::bench::format_table(results);
    if (!out.empty()) write_output(out, ndkit::bench::to_csv(results, digest));
    return 0;
}

int run_graph(const std::string& out) {
    const ndkit::Ndarray<double> x = ndkit::uniform<double>({3, 4}, 7, 0.1, 1.0);
    const ndkit::Ndarray<double> y = ndkit::uniform<double>({3, 4}, 8, -1.0, 1.0);
    write_output(out, ndkit::ad::trace_dot<double>(demo_expression, {x, y}));
    return 0;
}

int run_lasso(std::vector<double> alphas, std::uint64_t seed) {
    if (alphas.empty()) alphas = {0.0001, 0.001, 0.01, 0.1};
    const ndkit::Ndarray<double> x = ndkit::uniform<double>({80, 6}, seed, -1.0, 1.0);
    ndkit::Ndarray<double> w_true({6, 1}, {3.0, 0.0, -2.0, 0.0, 1.5, 0.0});
    const ndkit::Ndarray<double> y = ndkit::matmul(x, w_true);

    std::cout << "alpha      |w|_1       iterations  objective\n";
    for (double a : alphas) {
        const auto model = ndkit::models::lasso<double>(x, y, a);
        double l1 = 0;
        model.weights.iter([&](double v) { l1 += std::abs(v); });
        std::cout << std::left << std::setw(11) << a << std::setw(12) << l1 << std::setw(12)
                  << model.iterations << model.history.back() << '\n';
    }
    return 0;
}

int run_train_xor(std::uint64_t seed, double epochs) {
    const ndkit::Ndarray<double> x({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
    const ndkit::Ndarray<double> y({4, 2}, {1, 0, 0, 1, 0, 1, 1, 0});  // one-hot, class 1 = xor

    ndkit::models::Network<double> net(2);
    net.linear(4, ndkit::models::Activation::Tanh).linear(2, ndkit::models::Activation::Softmax);
    net.init_params(seed);

    ndkit::optim::OptimParams<double> p;
    p.loss = ndkit::optim::LossKind::CrossEntropy;
    p.learning_rate = ndkit::optim::ConstRate<double>{0.5};
    p.stopping = 0.0;
    p.epochs = epochs;
    const auto report = net.train(x, y, p);

    const auto pred = net.predict(x);
    int correct = 0;
    for (ndkit::Dim r = 0; r < 4; ++r) {
        const int want = y(r, 0) > 0.5 ? 0 : 1;
        const int got = pred(r, 0) > pred(r, 1) ? 0 : 1;
        correct += want == got;
    }
    std::cout << "iterations " << report.iterations << "\n"
              << "final objective " << report.history.back() << "\n"
              << "accuracy " << correct << "/4\n"
              << "predictions\n"
              << ndkit::format_array(pred) << '\n';
    return correct == 4 ? 0 : 1;
}

int run_dist_train(int workers, std::uint64_t seed) {
    const ndkit::Ndarray<double> x = ndkit::uniform<double>({96, 5}, seed, -1.0, 1.0);
    ndkit::Ndarray<double> w_true({5, 1}, {1.0, -2.0, 0.5, 3.0, -1.5});
    const ndkit::Ndarray<double> y = ndkit::matmul(x, w_true);

    ndkit::optim::OptimParams<double> p;
    p.learning_rate = ndkit::optim::ConstRate<double>{0.1};
    p.epochs = 200;
    auto predict = [](const std::vector<ndkit::ad::Value<double>>& vs,
                      const ndkit::Ndarray<double>& xb) {
        return matmul(ndkit::ad::Value<double>(xb), vs[0]);
    };

    std::vector<ndkit::Ndarray<double>> theta{ndkit::zeros<double>({5, 1})};
    const auto dist = ndkit::actor::dist_minimize(p, predict, theta, x, y, workers);
    const auto solo = ndkit::optim::minimize(p, predict, theta, x, y);

    double max_dev = 0;
    for (ndkit::Dim i = 0; i < 5; ++i)
        max_dev = std::max(max_dev,
                           std::abs(dist.theta[0].get_flat(i) - solo.theta[0].get_flat(i)));
    std::cout << "workers " << workers << "\n"
              << "rounds " << dist.iterations << "\n"
              << "objective (sharded) " << dist.history.back() << "\n"
              << "objective (single)  " << solo.history.back() << "\n"
              << "max parameter deviation " << max_dev << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dense array, differentiation, and training benchmarks"};
    app.require_subcommand(1);

    ndkit::bench::BenchConfig config;
    std::string out;
    bool digest = false;
    auto* bench = app.add_subcommand("bench", "time the standard operation set");
    bench->add_option("--size", config.size, "matrix side length")->check(CLI::PositiveNumber);
    bench->add_option("--repeats", config.repeats, "measured runs per op")
        ->check(CLI::PositiveNumber);
    bench->add_option("--warmup", config.warmups, "discarded runs per op")
        ->check(CLI::NonNegativeNumber);
    bench->add_option("--seed", config.seed, "rng seed for the input matrices");
    bench->add_option("--op", config.ops, "run only these ops (repeatable)");
    bench->add_option("--out", out, "also write CSV here");
    bench->add_flag("--digest", digest, "include result checksums in the CSV");

    std::string graph_out;
    auto* graph = app.add_subcommand("graph", "emit the demo expression's trace as DOT");
    graph->add_option("--out", graph_out, "write DOT here instead of stdout");

    std::vector<double> alphas;
    std::uint64_t lasso_seed = 11;
    auto* lasso = app.add_subcommand("lasso", "sparse regression over a penalty sweep");
    lasso->add_option("--alpha", alphas, "penalty strengths (repeatable)");
    lasso->add_option("--seed", lasso_seed, "rng seed for the synthetic data");

    std::uint64_t xor_seed = 1;
    double xor_epochs = 5000;
    auto* xorcmd = app.add_subcommand("train-xor", "train a tiny classifier on xor");
    xorcmd->add_option("--seed", xor_seed, "weight init seed");
    xorcmd->add_option("--epochs", xor_epochs, "training epochs")->check(CLI::PositiveNumber);

    int workers = 4;
    std::uint64_t dist_seed = 5;
    auto* dist = app.add_subcommand("dist-train", "data-parallel training demo");
    dist->add_option("--workers", workers, "worker count")->check(CLI::PositiveNumber);
    dist->add_option("--seed", dist_seed, "rng seed for the synthetic data");

    CLI11_PARSE(app, argc, argv);

    try {
        if (bench->parsed()) return run_bench(config, out, digest);
        if (graph->parsed()) return run_graph(graph_out);
        if (lasso->parsed()) return run_lasso(alphas, lasso_seed);
        if (xorcmd->parsed()) return run_train_xor(xor_seed, xor_epochs);
        if (dist->parsed()) return run_dist_train(workers, dist_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
