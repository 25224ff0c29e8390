#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nashmodes/io.hpp"
#include "nashmodes/planner.hpp"

namespace nashmodes {

inline constexpr const char* kMethodMultiNash = "multinash_pf";
inline constexpr const char* kMethodBaseline = "baseline";

/// Deterministic part of one run. Timings live in BenchTiming so records compare bitwise.
struct BenchRecord {
  std::string method;
  std::uint64_t seed = 0;
  int invocations = 0;
  int modes_found = 0;
  bool reached_target = false;
  bool failed = false;
  std::string error;
};

struct BenchTiming {
  StageTimings stages;  // baseline runs only fill refine
  double total = 0.0;
};

struct Summary {
  int count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for a single value
  double min = 0.0;
  double max = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  int count = 0;
};

/// Bins [k w, (k + 1) w) covering the values; empty input gives no bins.
std::vector<HistogramBin> histogram(const std::vector<double>& values, double width);

struct MethodAggregate {
  std::string method;
  int runs = 0;
  int failures = 0;
  int censored = 0;  // runs stopped by the budget
  Summary invocations;
  Summary total_seconds;
  Summary filter_seconds;
  Summary refine_seconds;
  double median_filter_fraction = 0.0;
  std::vector<HistogramBin> invocation_histogram;  // unit bins
  std::vector<HistogramBin> time_histogram;        // 0.5 s bins
};

struct BenchReport {
  std::string scenario;
  Json config;
  std::vector<BenchRecord> records;
  std::vector<BenchTiming> timings;  // parallel to records
  std::vector<MethodAggregate> aggregates;
  int failures = 0;

  const MethodAggregate* aggregate(const std::string& method) const;
};

std::vector<MethodAggregate> compute_aggregates(const std::vector<BenchRecord>& records,
                                                const std::vector<BenchTiming>& timings);

struct BenchConfig {
  int runs = 30;
  std::uint64_t first_seed = 0;  // run r uses first_seed + r
  PipelineConfig pipeline;
  BaselineConfig baseline;
  int threads = 1;
};

void validate(const BenchConfig& cfg);

/// Per seed: MultiNash-PF, then the baseline targeting that run's modes. A failed run is
/// recorded with its error and counted, never thrown.
BenchReport run_benchmark(const std::string& scenario, const GameSpec& game, const BenchConfig& cfg);

Json to_json(const BenchConfig& cfg);
Json bench_document(const BenchReport& report);
/// Loads and recomputes every aggregate; throws ConfigError on a mismatch above 1e-12.
BenchReport read_bench_document(const Json& doc);

/// One row per record with its timings.
CsvTable bench_records_table(const BenchReport& report);
/// Histogram rows: method, quantity, lower, upper, count.
CsvTable bench_histogram_table(const BenchReport& report);

}  // namespace nashmodes
