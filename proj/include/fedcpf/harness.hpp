#pragma once

// Command implementations behind the `fedcpf` CLI. Each returns a process
// exit code: 0 success, 1 validation, 2 numeric failure, 3 fairness violation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedcpf/errors.hpp"
#include "fedcpf/experiment.hpp"
#include "fedcpf/federation.hpp"
#include "fedcpf/gradcheck.hpp"
#include "fedcpf/metrics.hpp"

namespace fedcpf {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumeric = 2, kExitFairness = 3 };

inline constexpr const char* kOutputRootEnv = "FEDCPF_OUTPUT_ROOT";

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::optional<std::string> out;     // overrides the output directory
  std::size_t workers = 1;
};

namespace detail {

// $FEDCPF_OUTPUT_ROOT/<leaf>, or runs/<leaf> when the variable is unset.
inline std::string default_output_root(const std::string& leaf) {
  const char* root = std::getenv(kOutputRootEnv);
  const std::filesystem::path base = root && *root ? root : "runs";
  return (base / leaf).string();
}

inline std::string default_output_dir(const ExperimentConfig& c) {
  return default_output_root(std::string(method_name(c.method)) + "-seed" + std::to_string(c.seed));
}

inline ExperimentConfig resolve(const CommonOptions& opt) {
  ExperimentConfig c = load_config(opt.config_path);
  if (opt.seed) c.seed = *opt.seed;
  if (opt.out) c.output_dir = *opt.out;
  if (c.output_dir.empty()) c.output_dir = default_output_dir(c);
  return c;
}

// Runs fn under the shared error-to-exit-code mapping.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const GenerationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const FairnessError& e) {
    err << "fairness violation: " << e.what() << "\n";
    return kExitFairness;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

// Runs jobs[0..n) on up to `workers` threads; the first failure is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

// Writes history.jsonl, summary.csv and resolved_config.json into config.output_dir.
inline RunResult execute_and_write(const ExperimentConfig& config) {
  RunResult result = run_experiment(config);
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "history.jsonl", std::ios::binary);
    for (const auto& r : result.records) os << history_line(r) << "\n";
  }
  {
    std::ofstream os(dir / "summary.csv", std::ios::binary);
    os << kSummaryHeader << "\n";
    for (const auto& r : result.records) os << summary_row(r) << "\n";
  }
  {
    std::ofstream os(dir / "resolved_config.json", std::ios::binary);
    os << config_to_json(config).dump(2) << "\n";
  }
  return result;
}

inline int cmd_run(const CommonOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const ExperimentConfig config = detail::resolve(opt);
    const RunResult r = execute_and_write(config);
    out << "method " << method_name(config.method) << ", seed " << config.seed << ", " << r.records.size()
        << " rounds, partition " << r.partition_digest << "\n";
    if (!r.records.empty()) out << kSummaryHeader << "\n" << summary_row(r.records.back()) << "\n";
    out << "wrote " << config.output_dir << "\n";
    return int{kExitOk};
  });
}

struct JobOutcome {
  Method method = Method::fedcpf;
  std::uint64_t seed = 0;
  std::string digest;
  ClientMeans final_means;
};

// Every seed must map to one partition digest across all methods.
inline void check_fairness(const std::vector<JobOutcome>& jobs) {
  std::map<std::uint64_t, std::string> by_seed;
  for (const auto& j : jobs) {
    auto [it, inserted] = by_seed.emplace(j.seed, j.digest);
    if (!inserted && it->second != j.digest) {
      throw FairnessError("seed " + std::to_string(j.seed) + ": method " + std::string(method_name(j.method)) +
                          " saw partition " + j.digest + ", expected " + it->second);
    }
  }
}

struct MethodStats {
  Method method = Method::fedcpf;
  std::vector<double> accuracy, precision, recall, f1;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return {xs.empty() ? 0.0 : xs.front(), 0.0};
  return {sample_mean(xs), std::sqrt(sample_variance(xs))};
}

}  // namespace detail

inline constexpr const char* kCompareHeader =
    "method,n_seeds,accuracy_mean,accuracy_sd,macro_precision_mean,macro_precision_sd,macro_recall_mean,"
    "macro_recall_sd,macro_f1_mean,macro_f1_sd,t_vs_first,p_vs_first";

// Runs every (method, seed) pair and writes compare.csv plus one run directory per job.
inline int cmd_compare(const CommonOptions& opt, const std::vector<std::string>& methods,
                       const std::vector<std::uint64_t>& seeds, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    if (methods.empty()) throw ConfigError("--methods", "at least one method is required");
    if (seeds.empty()) throw ConfigError("--seeds", "at least one seed is required");
    ExperimentConfig base = load_config(opt.config_path);
    if (opt.out) base.output_dir = *opt.out;
    if (base.output_dir.empty()) base.output_dir = detail::default_output_root("compare");
    std::vector<Method> parsed;
    for (const auto& m : methods) {
      const auto pm = parse_method(m);
      if (!pm) throw ConfigError("--methods", "unknown method '" + m + "'");
      parsed.push_back(*pm);
    }

    std::vector<JobOutcome> jobs;
    for (Method m : parsed) {
      for (std::uint64_t s : seeds) jobs.push_back({m, s, {}, {}});
    }
    detail::parallel_for(jobs.size(), opt.workers, [&](std::size_t i) {
      ExperimentConfig c = base;
      c.method = jobs[i].method;
      c.seed = jobs[i].seed;
      c.output_dir = (std::filesystem::path(base.output_dir) /
                      (std::to_string(i) + "-" + std::string(method_name(c.method)) + "-seed" + std::to_string(c.seed)))
                         .string();
      const RunResult r = execute_and_write(c);
      jobs[i].digest = r.partition_digest;
      if (!r.records.empty()) jobs[i].final_means = client_means(r.records.back());
    });
    check_fairness(jobs);

    std::vector<MethodStats> stats;
    for (std::size_t mi = 0; mi < parsed.size(); ++mi) {
      MethodStats ms{parsed[mi], {}, {}, {}, {}};
      for (std::size_t si = 0; si < seeds.size(); ++si) {
        const ClientMeans& m = jobs[mi * seeds.size() + si].final_means;
        ms.accuracy.push_back(m.test_accuracy);
        ms.precision.push_back(m.macro_precision);
        ms.recall.push_back(m.macro_recall);
        ms.f1.push_back(m.macro_f1);
      }
      stats.push_back(std::move(ms));
    }

    std::filesystem::create_directories(base.output_dir);
    std::ofstream csv(std::filesystem::path(base.output_dir) / "compare.csv", std::ios::binary);
    csv << kCompareHeader << "\n";
    out << kCompareHeader << "\n";
    for (const auto& ms : stats) {
      std::ostringstream row;
      row << method_name(ms.method) << "," << seeds.size();
      for (const auto* xs : {&ms.accuracy, &ms.precision, &ms.recall, &ms.f1}) {
        const auto [mean, sd] = detail::mean_sd(*xs);
        row << "," << detail::fmt_real(mean) << "," << detail::fmt_real(sd);
      }
      if (seeds.size() < 2) {
        row << ",n/a,n/a";
      } else {
        const TTestResult t = welch_t_test(ms.accuracy, stats.front().accuracy);
        row << "," << detail::fmt_real(t.t_statistic) << "," << detail::fmt_real(t.p_value);
      }
      csv << row.str() << "\n";
      out << row.str() << "\n";
    }
    out << "partition digests agree across methods; wrote " << base.output_dir << "\n";
    return int{kExitOk};
  });
}

// One run per value of `param` (rho or acc); writes sweep.csv.
inline int cmd_sweep(const CommonOptions& opt, const std::string& param, const std::vector<double>& values,
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    if (param != "rho" && param != "acc") throw ConfigError("--param", "expected 'rho' or 'acc'");
    if (values.empty()) throw ConfigError("--values", "at least one value is required");
    ExperimentConfig base = load_config(opt.config_path);
    if (opt.seed) base.seed = *opt.seed;
    if (opt.out) base.output_dir = *opt.out;
    if (base.output_dir.empty()) base.output_dir = detail::default_output_root("sweep-" + param);

    std::vector<ExperimentConfig> configs;
    for (std::size_t i = 0; i < values.size(); ++i) {
      ExperimentConfig c = base;
      (param == "rho" ? c.hyper.rho : c.hyper.acc) = values[i];
      c.validate();
      c.output_dir = (std::filesystem::path(base.output_dir) / (param + "-" + std::to_string(i))).string();
      configs.push_back(std::move(c));
    }
    std::vector<ClientMeans> finals(values.size());
    detail::parallel_for(configs.size(), opt.workers, [&](std::size_t i) {
      const RunResult r = execute_and_write(configs[i]);
      if (!r.records.empty()) finals[i] = client_means(r.records.back());
    });

    std::filesystem::create_directories(base.output_dir);
    std::ofstream csv(std::filesystem::path(base.output_dir) / "sweep.csv", std::ios::binary);
    const std::string header = param + ",accuracy,macro_precision,macro_recall,macro_f1";
    csv << header << "\n";
    out << header << "\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::string row = detail::fmt_real(values[i]) + "," + detail::fmt_real(finals[i].test_accuracy) + "," +
                              detail::fmt_real(finals[i].macro_precision) + "," +
                              detail::fmt_real(finals[i].macro_recall) + "," + detail::fmt_real(finals[i].macro_f1);
      csv << row << "\n";
      out << row << "\n";
    }
    return int{kExitOk};
  });
}

inline int cmd_gradcheck(std::uint64_t seed, bool corrupt = false, std::ostream& out = std::cout,
                         std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const GradcheckReport rep = gradient_check(seed, 10, corrupt);
    out << "gradcheck seed " << seed << ": max relative error " << detail::fmt_real(rep.max_rel_error)
        << " (tolerance " << kGradcheckTolerance << ")\n";
    if (rep.max_rel_error <= kGradcheckTolerance) return int{kExitOk};
    err << "gradient mismatch: worst parameter is " << rep.worst_segment << "[" << rep.worst_index << "]\n";
    return int{kExitNumeric};
  });
}

}  // namespace fedcpf
