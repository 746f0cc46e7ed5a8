#pragma once

// Reference methods sharing the model, data and round plumbing:
// local-only training, FedAvg, FedProx, single-round change-rate selection,
// and random freezing.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedcpf/errors.hpp"
#include "fedcpf/mask_upgrade.hpp"
#include "fedcpf/param.hpp"

namespace fedcpf {

enum class BaselineTag { local_only, fedavg, fedprox, single_round_select, random_freeze };

struct BaselineKind {
  BaselineTag tag = BaselineTag::fedavg;
  double mu = 0.1;               // fedprox
  bool fedavg_weighted = true;   // fedavg/fedprox: weight clients by sample count
  std::uint64_t freeze_seed = 0; // random_freeze

  void validate() const {
    if (!(mu >= 0.0)) throw ConfigError("baseline.mu", "must be non-negative");
  }
};

// sum_i w_i theta_i / sum_i w_i, accumulated in client order.
inline ParamVector fedavg_aggregate(std::span<const ParamVector> client_params, std::span<const double> weights) {
  detail::require(!client_params.empty(), "fedavg_aggregate: no clients");
  detail::require_same_length(client_params.size(), weights.size(), "fedavg_aggregate");
  ParamVector out = ParamVector::zeros_like(client_params.front());
  double total = 0.0;
  for (std::size_t i = 0; i < client_params.size(); ++i) {
    detail::require_same_length(client_params[i].size(), out.size(), "fedavg_aggregate");
    detail::require(weights[i] > 0.0, "fedavg_aggregate: weights must be positive");
    total += weights[i];
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[i] * client_params[i][j];
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] /= total;
  return out;
}

// base_loss + mu/2 * ||theta - theta_g||^2
inline double fedprox_local_loss(double base_loss, const ParamVector& theta, const ParamVector& theta_g, double mu) {
  detail::require_same_length(theta.size(), theta_g.size(), "fedprox_local_loss");
  detail::require(mu >= 0.0, "fedprox_local_loss: mu must be non-negative");
  double sq = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double d = theta[j] - theta_g[j];
    sq += d * d;
  }
  return base_loss + 0.5 * mu * sq;
}

// Adds the proximal penalty and its gradient mu * (theta - anchor).
inline LossHook fedprox_hook(ParamVector anchor, double mu) {
  return [anchor = std::move(anchor), mu](const ParamVector& theta, LossGrad& lg) {
    lg.loss = fedprox_local_loss(lg.loss, theta, anchor, mu);
    for (std::size_t j = 0; j < theta.size(); ++j) lg.grad[j] += mu * (theta[j] - anchor[j]);
  };
}

// Ranks this round's |v_after - v_before| only; same top-p, union and rho-stop rules.
inline BinaryMask single_round_select(const ParamVector& v_before, const ParamVector& v_after, double p,
                                      const BinaryMask& eta, double rho) {
  if (!(personalization_fraction(eta) < rho)) return eta;
  return mask_union(top_fraction_indices(abs_diff(v_before, v_after), p, eta), eta);
}

// floor(p * eligible) uniformly random still-global indices.
inline BinaryMask random_freeze_select(const BinaryMask& eta, double p, double rho, std::uint64_t rng_seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("random_freeze_select: p must lie in [0, 1]");
  if (!(personalization_fraction(eta) < rho)) return eta;
  std::vector<std::size_t> eligible;
  for (std::size_t j = 0; j < eta.size(); ++j) {
    if (!eta[j]) eligible.push_back(j);
  }
  const std::size_t budget = fraction_budget(p, eligible.size());
  std::mt19937_64 rng(rng_seed);
  BinaryMask out = eta;
  // partial Fisher-Yates: the first `budget` slots become a uniform sample
  for (std::size_t n = 0; n < budget; ++n) {
    std::uniform_int_distribution<std::size_t> pick(n, eligible.size() - 1);
    std::swap(eligible[n], eligible[pick(rng)]);
    out.set(eligible[n]);
  }
  return out;
}

// splitmix64 finalizer, used to derive independent per-(client, round) seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fedcpf
