#include "nashmodes/bench.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nashmodes/errors.hpp"
#include "nashmodes/parallel.hpp"

namespace nashmodes {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

Json summary_json(const Summary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}};
}

Summary summary_from(const Json& j) {
  Summary s;
  s.count = j.at("count").get<int>();
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  return s;
}

Json histogram_json(const std::vector<HistogramBin>& bins) {
  Json out = Json::array();
  for (const auto& b : bins) out.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
  return out;
}

std::vector<HistogramBin> histogram_from(const Json& j) {
  std::vector<HistogramBin> out;
  for (const auto& b : j) out.push_back({b.at("lower").get<double>(), b.at("upper").get<double>(), b.at("count").get<int>()});
  return out;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

void check_summary(const Summary& stored, const Summary& fresh, const std::string& what) {
  if (stored.count != fresh.count || !close(stored.mean, fresh.mean) || !close(stored.stddev, fresh.stddev) ||
      !close(stored.min, fresh.min) || !close(stored.max, fresh.max))
    throw ConfigError("bench aggregate " + what + " does not match its records");
}

void check_histogram(const std::vector<HistogramBin>& stored, const std::vector<HistogramBin>& fresh,
                     const std::string& what) {
  bool same = stored.size() == fresh.size();
  for (std::size_t k = 0; same && k < stored.size(); ++k)
    same = stored[k].count == fresh[k].count && close(stored[k].lower, fresh[k].lower) &&
           close(stored[k].upper, fresh[k].upper);
  if (!same) throw ConfigError("bench histogram " + what + " does not match its records");
}

}  // namespace

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.count;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = s.count > 1 ? std::sqrt(sq / (s.count - 1)) : 0.0;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, double width) {
  if (!(width > 0)) throw ConfigError("histogram bin width must be positive");
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const long first = static_cast<long>(std::floor(*lo / width));
  const long last = static_cast<long>(std::floor(*hi / width));
  std::vector<HistogramBin> bins;
  for (long k = first; k <= last; ++k) bins.push_back({k * width, (k + 1) * width, 0});
  for (double v : values) bins[static_cast<std::size_t>(static_cast<long>(std::floor(v / width)) - first)].count++;
  return bins;
}

const MethodAggregate* BenchReport::aggregate(const std::string& method) const {
  for (const auto& a : aggregates)
    if (a.method == method) return &a;
  return nullptr;
}

std::vector<MethodAggregate> compute_aggregates(const std::vector<BenchRecord>& records,
                                                const std::vector<BenchTiming>& timings) {
  if (records.size() != timings.size()) throw ConfigError("bench records and timings differ in length");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> by_method;
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (!by_method.count(records[k].method)) order.push_back(records[k].method);
    by_method[records[k].method].push_back(k);
  }
  std::vector<MethodAggregate> out;
  for (const auto& method : order) {
    MethodAggregate a;
    a.method = method;
    std::vector<double> inv, total, filter, refine, fraction;
    for (std::size_t k : by_method[method]) {
      const auto& r = records[k];
      ++a.runs;
      if (r.failed) {
        ++a.failures;
        continue;
      }
      if (method == kMethodBaseline && !r.reached_target) ++a.censored;
      inv.push_back(r.invocations);
      total.push_back(timings[k].total);
      filter.push_back(timings[k].stages.filter);
      refine.push_back(timings[k].stages.refine);
      fraction.push_back(timings[k].total > 0 ? timings[k].stages.filter / timings[k].total : 0.0);
    }
    a.invocations = summarize(inv);
    a.total_seconds = summarize(total);
    a.filter_seconds = summarize(filter);
    a.refine_seconds = summarize(refine);
    a.median_filter_fraction = median(fraction);
    a.invocation_histogram = histogram(inv, 1.0);
    a.time_histogram = histogram(total, 0.5);
    out.push_back(std::move(a));
  }
  return out;
}

void validate(const BenchConfig& cfg) {
  if (cfg.runs < 1) throw ConfigError("bench needs at least one run");
  if (cfg.threads < 1) throw ConfigError("bench thread count must be >= 1");
  validate(cfg.pipeline);
  validate(cfg.baseline);
}

BenchReport run_benchmark(const std::string& scenario, const GameSpec& game, const BenchConfig& cfg) {
  validate(cfg);
  BenchReport report;
  report.scenario = scenario;
  report.config = to_json(cfg);
  const std::size_t runs = static_cast<std::size_t>(cfg.runs);
  report.records.resize(2 * runs);
  report.timings.resize(2 * runs);

  parallel_for(cfg.runs, cfg.threads, [&](int r) {
    const std::uint64_t seed = cfg.first_seed + static_cast<std::uint64_t>(r);
    BenchRecord& mn = report.records[2 * r];
    BenchRecord& bl = report.records[2 * r + 1];
    mn.method = kMethodMultiNash;
    bl.method = kMethodBaseline;
    mn.seed = bl.seed = seed;

    std::vector<JointTrajectory> targets;
    try {
      PipelineConfig pc = cfg.pipeline;
      pc.filter.seed = seed;
      const EquilibriumSet set = multinash_pf(game, pc);
      mn.invocations = set.refinements;
      mn.modes_found = static_cast<int>(set.modes.size());
      mn.reached_target = mn.modes_found == cfg.baseline.target_modes;
      report.timings[2 * r].stages = set.timings;
      report.timings[2 * r].total = set.timings.total();
      for (const auto& m : set.modes) targets.push_back(m.trajectory);
    } catch (const std::exception& e) {
      mn.failed = true;
      mn.error = e.what();
    }

    try {
      BaselineConfig bc = cfg.baseline;
      bc.seed = seed;
      if (!targets.empty()) bc.target_modes = static_cast<int>(targets.size());
      const BaselineResult res = baseline_random_init(game, cfg.pipeline.refiner, bc, targets.empty() ? nullptr : &targets);
      bl.invocations = res.invocations;
      bl.modes_found = static_cast<int>(res.modes.modes.size());
      bl.reached_target = !res.exhausted;
      report.timings[2 * r + 1].stages.refine = res.seconds;
      report.timings[2 * r + 1].total = res.seconds;
    } catch (const std::exception& e) {
      bl.failed = true;
      bl.error = e.what();
    }
  });

  report.aggregates = compute_aggregates(report.records, report.timings);
  for (const auto& a : report.aggregates) report.failures += a.failures;
  return report;
}

Json to_json(const BenchConfig& cfg) {
  return {{"runs", cfg.runs},
          {"first_seed", cfg.first_seed},
          {"pipeline", to_json(cfg.pipeline)},
          {"baseline", to_json(cfg.baseline)}};
}

Json bench_document(const BenchReport& report) {
  Json doc = make_document("bench_report");
  doc["scenario"] = report.scenario;
  doc["config"] = report.config;
  Json records = Json::array();
  Json timings = Json::array();
  for (std::size_t k = 0; k < report.records.size(); ++k) {
    const auto& r = report.records[k];
    Json rec = {{"method", r.method},         {"seed", r.seed},     {"invocations", r.invocations},
                {"modes_found", r.modes_found}, {"reached_target", r.reached_target}, {"failed", r.failed}};
    if (r.failed) rec["error"] = r.error;
    records.push_back(std::move(rec));
    const auto& t = report.timings[k];
    timings.push_back({{"filter", t.stages.filter},
                       {"cluster", t.stages.cluster},
                       {"refine", t.stages.refine},
                       {"dedup", t.stages.dedup},
                       {"total", t.total}});
  }
  doc["records"] = std::move(records);
  doc["timings"] = std::move(timings);
  Json aggregates = Json::array();
  for (const auto& a : report.aggregates) {
    aggregates.push_back({{"method", a.method},
                          {"runs", a.runs},
                          {"failures", a.failures},
                          {"censored", a.censored},
                          {"invocations", summary_json(a.invocations)},
                          {"total_seconds", summary_json(a.total_seconds)},
                          {"filter_seconds", summary_json(a.filter_seconds)},
                          {"refine_seconds", summary_json(a.refine_seconds)},
                          {"median_filter_fraction", a.median_filter_fraction},
                          {"invocation_histogram", histogram_json(a.invocation_histogram)},
                          {"time_histogram", histogram_json(a.time_histogram)}});
  }
  doc["aggregates"] = std::move(aggregates);
  doc["failures"] = report.failures;
  return doc;
}

BenchReport read_bench_document(const Json& doc) {
  check_document(doc, "bench_report");
  BenchReport report;
  try {
    report.scenario = doc.at("scenario").get<std::string>();
    report.config = doc.at("config");
    for (const auto& j : doc.at("records")) {
      BenchRecord r;
      r.method = j.at("method").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.invocations = j.at("invocations").get<int>();
      r.modes_found = j.at("modes_found").get<int>();
      r.reached_target = j.at("reached_target").get<bool>();
      r.failed = j.at("failed").get<bool>();
      r.error = j.value("error", "");
      report.records.push_back(std::move(r));
    }
    for (const auto& j : doc.at("timings")) {
      BenchTiming t;
      t.stages.filter = j.at("filter").get<double>();
      t.stages.cluster = j.at("cluster").get<double>();
      t.stages.refine = j.at("refine").get<double>();
      t.stages.dedup = j.at("dedup").get<double>();
      t.total = j.at("total").get<double>();
      report.timings.push_back(t);
    }
    for (const auto& j : doc.at("aggregates")) {
      MethodAggregate a;
      a.method = j.at("method").get<std::string>();
      a.runs = j.at("runs").get<int>();
      a.failures = j.at("failures").get<int>();
      a.censored = j.at("censored").get<int>();
      a.invocations = summary_from(j.at("invocations"));
      a.total_seconds = summary_from(j.at("total_seconds"));
      a.filter_seconds = summary_from(j.at("filter_seconds"));
      a.refine_seconds = summary_from(j.at("refine_seconds"));
      a.median_filter_fraction = j.at("median_filter_fraction").get<double>();
      a.invocation_histogram = histogram_from(j.at("invocation_histogram"));
      a.time_histogram = histogram_from(j.at("time_histogram"));
      report.aggregates.push_back(std::move(a));
    }
    report.failures = doc.at("failures").get<int>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed bench report: ") + e.what());
  }

  const auto fresh = compute_aggregates(report.records, report.timings);
  if (fresh.size() != report.aggregates.size()) throw ConfigError("bench aggregates do not match the record methods");
  int failures = 0;
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    const auto& s = report.aggregates[k];
    const auto& f = fresh[k];
    if (s.method != f.method || s.runs != f.runs || s.failures != f.failures || s.censored != f.censored)
      throw ConfigError("bench aggregate counts for " + f.method + " do not match its records");
    check_summary(s.invocations, f.invocations, f.method + " invocations");
    check_summary(s.total_seconds, f.total_seconds, f.method + " total_seconds");
    check_summary(s.filter_seconds, f.filter_seconds, f.method + " filter_seconds");
    check_summary(s.refine_seconds, f.refine_seconds, f.method + " refine_seconds");
    if (!close(s.median_filter_fraction, f.median_filter_fraction))
      throw ConfigError("bench aggregate " + f.method + " median_filter_fraction does not match its records");
    check_histogram(s.invocation_histogram, f.invocation_histogram, f.method + " invocations");
    check_histogram(s.time_histogram, f.time_histogram, f.method + " time");
    failures += f.failures;
  }
  if (failures != report.failures) throw ConfigError("bench failure count does not match its records");
  return report;
}

CsvTable bench_records_table(const BenchReport& report) {
  CsvTable t;
  t.header = {"method", "seed", "invocations", "modes_found", "reached_target", "failed",
              "filter_s", "cluster_s", "refine_s", "dedup_s", "total_s"};
  for (std::size_t k = 0; k < report.records.size(); ++k) {
    const auto& r = report.records[k];
    const auto& s = report.timings[k];
    t.rows.push_back({r.method, std::to_string(r.seed), std::to_string(r.invocations), std::to_string(r.modes_found),
                      r.reached_target ? "1" : "0", r.failed ? "1" : "0", format_number(s.stages.filter),
                      format_number(s.stages.cluster), format_number(s.stages.refine), format_number(s.stages.dedup),
                      format_number(s.total)});
  }
  return t;
}

CsvTable bench_histogram_table(const BenchReport& report) {
  CsvTable t;
  t.header = {"method", "quantity", "lower", "upper", "count"};
  for (const auto& a : report.aggregates) {
    for (const auto& b : a.invocation_histogram)
      t.rows.push_back({a.method, "invocations", format_number(b.lower), format_number(b.upper), std::to_string(b.count)});
    for (const auto& b : a.time_histogram)
      t.rows.push_back({a.method, "total_seconds", format_number(b.lower), format_number(b.upper), std::to_string(b.count)});
  }
  return t;
}

}  // namespace nashmodes
