#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndkit/shape.hpp"

namespace ndkit::bench {

// Microbenchmark protocol: every operation runs `warmups + repeats` times on
// the same seeded input; the warmup runs are discarded and mean/std are
// taken over the remaining samples.
struct BenchConfig {
    Dim size = 1000;        // operations run on a [size; size] matrix
    int repeats = 100;      // measured runs
    int warmups = 10;       // discarded runs before measuring
    std::uint64_t seed = 42;
    std::vector<std::string> ops;  // empty = the whole standard set
};

struct BenchResult {
    std::string op;
    double mean_ms = 0;
    double std_ms = 0;
    std::uint64_t checksum = 0;  // FNV-1a over the final run's result bytes
};

// Names of the standard operation set, in report order.
std::vector<std::string> standard_ops(Dim size);

std::vector<BenchResult> run_benchmarks(const BenchConfig& config);

std::string format_table(const std::vector<BenchResult>& results);
std::string to_csv(const std::vector<BenchResult>& results, bool with_checksum = false);

}  // namespace ndkit::bench
