#include "ndkit/bench.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "ndkit/broadcast.hpp"
#include "ndkit/linalg.hpp"
#include "ndkit/slice.hpp"

namespace ndkit::bench {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t checksum_of(const Ndarray<double>& a) {
    return fnv1a(a.data(), sizeof(double) * static_cast<std::size_t>(a.numel()));
}

struct OpCase {
    std::string name;
    std::function<std::uint64_t()> run;  // executes once, returns result checksum
};

std::string half_range(Dim size) { return "0:" + std::to_string(size / 2 - 1); }

std::vector<OpCase> build_cases(const Ndarray<double>& x, const Ndarray<double>& y) {
    const Dim size = x.shape()[0];
    const SliceSpec cols = parse_slice_spec("*," + half_range(size));
    const SliceSpec rows = parse_slice_spec(half_range(size) + ",*");
    std::vector<OpCase> cases;
    cases.push_back({"slice[*;" + half_range(size) + "]",
                     [&x, cols] { return checksum_of(get_slice(x, cols)); }});
    cases.push_back({"slice[" + half_range(size) + ";*]",
                     [&x, rows] { return checksum_of(get_slice(x, rows)); }});
    cases.push_back({"relu", [&x] { return checksum_of(x.relu()); }});
    cases.push_back({"sum", [&x] {
                         const double s = x.sum();
                         return fnv1a(&s, sizeof(s));
                     }});
    cases.push_back({"cumsum", [&x] { return checksum_of(x.cumsum(1)); }});
    cases.push_back({"add", [&x, &y] { return checksum_of(add(x, y)); }});
    cases.push_back({"inv", [&x] { return checksum_of(inv(x)); }});
    cases.push_back({"iter", [&x] {
                         double acc = 0;
                         x.iter([&](double v) { acc += v; });
                         return fnv1a(&acc, sizeof(acc));
                     }});
    return cases;
}

}  // namespace

std::vector<std::string> standard_ops(Dim size) {
    return {"slice[*;" + half_range(size) + "]",
            "slice[" + half_range(size) + ";*]",
            "relu",
            "sum",
            "cumsum",
            "add",
            "inv",
            "iter"};
}

std::vector<BenchResult> run_benchmarks(const BenchConfig& config) {
    if (config.size < 2) throw std::invalid_argument("matrix size must be at least 2");
    if (config.repeats < 1) throw std::invalid_argument("repeats must be at least 1");
    if (config.warmups < 0) throw std::invalid_argument("warmup count must be non-negative");

    const Ndarray<double> x = uniform<double>({config.size, config.size}, config.seed);
    const Ndarray<double> y = uniform<double>({config.size, config.size}, config.seed + 1);
    auto cases = build_cases(x, y);

    if (!config.ops.empty()) {
        std::vector<OpCase> selected;
        for (const auto& want : config.ops) {
            bool found = false;
            for (auto& c : cases)
                if (c.name == want) {
                    selected.push_back(c);
                    found = true;
                }
            if (!found) throw std::invalid_argument("unknown benchmark op '" + want + "'");
        }
        cases = std::move(selected);
    }

    std::vector<BenchResult> results;
    for (const auto& c : cases) {
        std::vector<double> samples;
        samples.reserve(static_cast<std::size_t>(config.repeats));
        std::uint64_t checksum = 0;
        for (int r = 0; r < config.warmups + config.repeats; ++r) {
            const auto start = std::chrono::steady_clock::now();
            checksum = c.run();
            const auto stop = std::chrono::steady_clock::now();
            if (r >= config.warmups)
                samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        }
        double mean = 0;
        for (double s : samples) mean += s;
        mean /= static_cast<double>(samples.size());
        double var = 0;
        for (double s : samples) var += (s - mean) * (s - mean);
        var /= static_cast<double>(samples.size());
        results.push_back({c.name, mean, std::sqrt(var), checksum});
    }
    return results;
}

std::string format_table(const std::vector<BenchResult>& results) {
    std::size_t name_width = 9;
    for (const auto& r : results) name_width = std::max(name_width, r.op.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width) + 2) << "operation"
       << "mean (std)\n";
    for (const auto& r : results) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(3) << r.mean_ms << " (" << r.std_ms << ") ms";
        os << std::left << std::setw(static_cast<int>(name_width) + 2) << r.op << cell.str()
           << '\n';
    }
    return os.str();
}

std::string to_csv(const std::vector<BenchResult>& results, bool with_checksum) {
    std::ostringstream os;
    os << (with_checksum ? "op,mean_ms,std_ms,checksum\n" : "op,mean_ms,std_ms\n");
    os << std::setprecision(9);
    for (const auto& r : results) {
        os << r.op << ',' << r.mean_ms << ',' << r.std_ms;
        if (with_checksum) os << ',' << std::hex << r.checksum << std::dec;
        os << '\n';
    }
    return os.str();
}

}  // namespace ndkit::bench
