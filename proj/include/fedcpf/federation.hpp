#pragma once

// Round execution for the masked federation and for every baseline.

#include <cassert>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedcpf/baselines.hpp"
#include "fedcpf/data.hpp"
#include "fedcpf/errors.hpp"
#include "fedcpf/mask_upgrade.hpp"
#include "fedcpf/metrics.hpp"
#include "fedcpf/model.hpp"
#include "fedcpf/protocol.hpp"
#include "fedcpf/state.hpp"

namespace fedcpf {

enum class Method { fedcpf, local_only, fedavg, fedprox, single_round_select, random_freeze };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::fedcpf: return "fedcpf";
    case Method::local_only: return "local_only";
    case Method::fedavg: return "fedavg";
    case Method::fedprox: return "fedprox";
    case Method::single_round_select: return "single_round_select";
    case Method::random_freeze: return "random_freeze";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : {Method::fedcpf, Method::local_only, Method::fedavg, Method::fedprox, Method::single_round_select,
                   Method::random_freeze}) {
    if (method_name(m) == s) return m;
  }
  return std::nullopt;
}

inline Method method_of(BaselineTag tag) {
  switch (tag) {
    case BaselineTag::local_only: return Method::local_only;
    case BaselineTag::fedavg: return Method::fedavg;
    case BaselineTag::fedprox: return Method::fedprox;
    case BaselineTag::single_round_select: return Method::single_round_select;
    case BaselineTag::random_freeze: return Method::random_freeze;
  }
  return Method::fedavg;
}

struct DataConfig {
  SkewMode mode = SkewMode::label_skew;
  double alpha = 0.5;
  double rotation_step = 0.3;
  std::size_t samples_per_client = 100;
  double noise_sigma = 0.5;
};

struct ExperimentConfig {
  Method method = Method::fedcpf;
  std::size_t n_clients = 5;
  std::size_t rounds = 100;
  HyperParams hyper;
  TokenModelConfig model;
  DataConfig data;
  BaselineKind baseline;
  std::uint64_t seed = 1;
  std::string output_dir;

  SkewSpec skew_spec() const {
    SkewSpec s;
    s.mode = data.mode;
    s.alpha = data.alpha;
    s.rotation_step = data.rotation_step;
    s.n_classes = model.n_classes;
    s.samples_per_client = data.samples_per_client;
    s.input_dim = model.input_dim;
    s.phi = model.phi;
    s.noise_sigma = data.noise_sigma;
    return s;
  }

  void validate() const {
    if (n_clients < 1) throw ConfigError("n_clients", "must be >= 1");
    hyper.validate();
    baseline.validate();
    auto wrap = [](const char* field, auto&& fn) {
      try {
        fn();
      } catch (const ContractError& e) {
        throw ConfigError(field, e.what());
      }
    };
    wrap("model", [&] { model.validate(); });
    wrap("data", [&] { skew_spec().validate(); });
  }
};

enum class SelectionRule { comprehensive, single_round, random, none };

struct RoundOutput {
  GlobalState global;
  std::vector<ClientState> clients;
  RoundRecord record;
  std::vector<ParamVector> u_plus;     // per client, after local training
  std::vector<BinaryMask> eta_used;    // masks the aggregation ran with
};

using Evaluator = std::function<ClassificationMetrics(const ClientState&)>;

namespace detail {

inline LocalResult train_client(const LocalTrainer& trainer, const ClientState& c, const HyperParams& hyper,
                                std::size_t round) {
  try {
    return trainer(c, hyper, round);
  } catch (const NumericError& e) {
    throw NumericError("client " + std::to_string(c.id) + ", round " + std::to_string(round) + ": " + e.what());
  }
}

inline void fill_eval(ClientRoundStats& s, const ClientState& c, const Evaluator& eval) {
  if (!eval) return;
  const ClassificationMetrics m = eval(c);
  s.test_accuracy = m.accuracy;
  s.macro_precision = m.macro_precision;
  s.macro_recall = m.macro_recall;
  s.macro_f1 = m.macro_f1;
}

}  // namespace detail

// One round of the masked protocol: per client partition, local training and
// mask growth; then contributor-counted aggregation; then reconstruction with
// the masks the round started with.
inline RoundOutput run_round(const GlobalState& global, std::vector<ClientState> clients, const HyperParams& hyper,
                             const LocalTrainer& trainer, SelectionRule rule = SelectionRule::comprehensive,
                             std::uint64_t freeze_seed = 0, const Evaluator& eval = {}) {
  detail::require(!clients.empty(), "run_round: no clients");
  const std::size_t r = global.round;
  RoundOutput out;
  out.record.round = r;
  out.u_plus.reserve(clients.size());
  out.eta_used.reserve(clients.size());

  std::vector<Contribution> contributions;
  contributions.reserve(clients.size());
  std::vector<BinaryMask> next_masks;
  std::vector<DeltaWindow> next_windows;
  std::vector<ClientRoundStats> stats;

  for (const auto& c : clients) {
    ClientRoundStats s;
    s.id = c.id;
    ParamVector u_plus, v_plus;
    Selection sel{c.eta, c.window};
    if (rule == SelectionRule::comprehensive) {
      const LocalTrainer wrapped = [&](const ClientState& cs, const HyperParams& h, std::size_t rr) {
        return detail::train_client(trainer, cs, h, rr);
      };
      MaskUpgradeResult mu = mask_upgrade(c, hyper, r, wrapped);
      u_plus = std::move(mu.u_plus);
      v_plus = std::move(mu.v_plus);
      sel = {std::move(mu.eta_next), std::move(mu.window)};
      s.train_accuracy = mu.train_accuracy;
    } else {
      const Partition before = partition_params(c.theta, c.eta);
      LocalResult trained = detail::train_client(trainer, c, hyper, r);
      Partition after = partition_params(trained.theta, c.eta);
      s.train_accuracy = trained.train_accuracy;
      if (rule == SelectionRule::single_round) {
        sel.eta_next = single_round_select(before.v, after.v, hyper.p, c.eta, hyper.rho);
      } else if (rule == SelectionRule::random) {
        sel.eta_next = random_freeze_select(c.eta, hyper.p, hyper.rho, mix_seed(mix_seed(freeze_seed, c.id), r));
      }
      u_plus = std::move(after.u);
      v_plus = std::move(after.v);
    }
    s.newly_frozen = sel.eta_next.popcount() - c.eta.popcount();
    s.personalization_fraction = personalization_fraction(sel.eta_next);
    s.window_k = sel.window.k;
    s.window_r_th = sel.window.r_th;
    stats.push_back(s);
    contributions.push_back({std::move(v_plus), c.eta});
    out.u_plus.push_back(std::move(u_plus));
    next_masks.push_back(std::move(sel.eta_next));
    next_windows.push_back(std::move(sel.window));
  }

  AggregateResult agg = aggregate_global(contributions);
#ifndef NDEBUG
  // indices nobody contributed must be personalized by every client
  for (std::size_t j = 0; j < agg.eta_g.size(); ++j) {
    if (agg.eta_g[j]) continue;
    for (const auto& c : clients) assert(c.eta[j]);
  }
#endif

  for (std::size_t i = 0; i < clients.size(); ++i) {
    ClientState& c = clients[i];
    c.theta = broadcast_reconstruct(agg.theta_g, c.eta, out.u_plus[i]);
    out.eta_used.push_back(std::move(c.eta));
    c.eta = std::move(next_masks[i]);
    c.window = std::move(next_windows[i]);
    detail::fill_eval(stats[i], c, eval);
  }

  out.global.theta_g = std::move(agg.theta_g);
  out.global.zeta = std::move(agg.zeta);
  out.global.eta_g = std::move(agg.eta_g);
  out.global.round = r + 1;
  out.clients = std::move(clients);
  out.record.clients = std::move(stats);
  return out;
}

struct RoundStep {
  RoundRecord record;
  std::vector<ParamVector> u_plus;   // empty for methods without masks
  std::vector<BinaryMask> eta_used;  // empty for methods without masks
};

// Holds one experiment's data and state and advances it one round at a time.
class Simulation {
 public:
  explicit Simulation(ExperimentConfig config, LocalTrainer trainer = {}) : config_(std::move(config)) {
    config_.validate();
    auto parts = generate_partition(config_.n_clients, config_.skew_spec(), config_.seed);
    digest_ = partition_digest(parts);
    std::vector<std::shared_ptr<const ClientDataset>> shared;
    shared.reserve(parts.size());
    for (auto& p : parts) shared.push_back(std::make_shared<const ClientDataset>(std::move(p)));
    datasets_ = shared;
    state_ = init_federation(config_.n_clients, config_.model, init_seed(), shared);
    trainer_ = trainer ? std::move(trainer) : default_trainer();
  }

  const ExperimentConfig& config() const noexcept { return config_; }
  const Federation& state() const noexcept { return state_; }
  const std::string& partition_digest_hex() const noexcept { return digest_; }
  const std::vector<std::shared_ptr<const ClientDataset>>& datasets() const noexcept { return datasets_; }
  std::size_t round() const noexcept { return state_.global.round; }
  bool done() const noexcept { return round() >= config_.rounds; }

  std::uint64_t init_seed() const { return mix_seed(config_.seed, 0x1417); }
  std::uint64_t freeze_seed() const {
    return config_.baseline.freeze_seed ? config_.baseline.freeze_seed : mix_seed(config_.seed, 0xf2ee);
  }

  RoundStep step() {
    const auto t0 = std::chrono::steady_clock::now();
    RoundStep out;
    switch (config_.method) {
      case Method::fedcpf: out = masked_round(SelectionRule::comprehensive); break;
      case Method::single_round_select: out = masked_round(SelectionRule::single_round); break;
      case Method::random_freeze: out = masked_round(SelectionRule::random); break;
      case Method::fedavg:
      case Method::fedprox: out = averaged_round(); break;
      case Method::local_only: out = local_round(); break;
    }
    out.record.seed = config_.seed;
    out.record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

  Evaluator evaluator() const {
    return [config = config_.model](const ClientState& c) {
      const Batch& test = c.dataset->test;
      const auto preds = predict(test, c.theta, config);
      return classification_metrics(preds, test.labels, config.n_classes);
    };
  }

 private:
  LocalTrainer default_trainer() const {
    if (config_.method == Method::fedprox) {
      return [model = config_.model, mu = config_.baseline.mu](const ClientState& c, const HyperParams& h, std::size_t) {
        return local_update(c.theta, c.eta, c.dataset->train, h, model, fedprox_hook(c.theta, mu));
      };
    }
    return model_trainer(config_.model);
  }

  RoundStep masked_round(SelectionRule rule) {
    RoundOutput ro = run_round(state_.global, std::move(state_.clients), config_.hyper, trainer_, rule,
                               freeze_seed(), evaluator());
    state_.global = std::move(ro.global);
    state_.clients = std::move(ro.clients);
    return {std::move(ro.record), std::move(ro.u_plus), std::move(ro.eta_used)};
  }

  std::vector<LocalResult> train_all() {
    std::vector<LocalResult> trained;
    trained.reserve(state_.clients.size());
    for (const auto& c : state_.clients) trained.push_back(detail::train_client(trainer_, c, config_.hyper, round()));
    return trained;
  }

  RoundStep plain_stats(const std::vector<LocalResult>& trained) {
    RoundStep out;
    out.record.round = round();
    const Evaluator eval = evaluator();
    for (std::size_t i = 0; i < state_.clients.size(); ++i) {
      ClientRoundStats s;
      s.id = state_.clients[i].id;
      s.train_accuracy = trained[i].train_accuracy;
      detail::fill_eval(s, state_.clients[i], eval);
      out.record.clients.push_back(s);
    }
    return out;
  }

  RoundStep averaged_round() {
    std::vector<LocalResult> trained = train_all();
    std::vector<ParamVector> thetas;
    std::vector<double> weights;
    for (std::size_t i = 0; i < trained.size(); ++i) {
      thetas.push_back(trained[i].theta);
      weights.push_back(config_.baseline.fedavg_weighted ? static_cast<double>(state_.clients[i].sample_count) : 1.0);
    }
    ParamVector global = fedavg_aggregate(thetas, weights);
    for (auto& c : state_.clients) c.theta = global;
    state_.global.zeta = ParamVector::zeros_like(global);
    for (std::size_t j = 0; j < global.size(); ++j) state_.global.zeta[j] = static_cast<double>(state_.clients.size());
    state_.global.eta_g = BinaryMask(global.size(), true);
    state_.global.theta_g = std::move(global);
    RoundStep out = plain_stats(trained);
    ++state_.global.round;
    return out;
  }

  RoundStep local_round() {
    std::vector<LocalResult> trained = train_all();
    for (std::size_t i = 0; i < trained.size(); ++i) state_.clients[i].theta = trained[i].theta;
    RoundStep out = plain_stats(trained);
    ++state_.global.round;
    return out;
  }

  ExperimentConfig config_;
  Federation state_;
  std::vector<std::shared_ptr<const ClientDataset>> datasets_;
  std::string digest_;
  LocalTrainer trainer_;
};

struct RunOptions {
  bool keep_trajectory = false;  // record theta_g after every round
  LocalTrainer trainer;
  std::function<void(const RoundStep&, const Simulation&)> observer;
};

struct RunResult {
  std::vector<RoundRecord> records;
  std::string partition_digest;
  std::vector<ParamVector> global_trajectory;
  Federation final_state;
};

inline RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  Simulation sim(config, options.trainer);
  RunResult out;
  out.partition_digest = sim.partition_digest_hex();
  out.records.reserve(config.rounds);
  while (!sim.done()) {
    RoundStep step = sim.step();
    if (options.observer) options.observer(step, sim);
    if (options.keep_trajectory) out.global_trajectory.push_back(sim.state().global.theta_g);
    out.records.push_back(std::move(step.record));
  }
  out.final_state = sim.state();
  return out;
}

inline std::vector<RoundRecord> run_federation(ExperimentConfig config) {
  config.method = Method::fedcpf;
  return run_experiment(config).records;
}

inline std::vector<RoundRecord> run_baseline(const BaselineKind& kind, ExperimentConfig config) {
  config.method = method_of(kind.tag);
  config.baseline = kind;
  return run_experiment(config).records;
}

}  // namespace fedcpf
