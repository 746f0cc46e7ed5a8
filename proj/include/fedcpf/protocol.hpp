#pragma once

// Server-side pieces of the masked federation round: splitting a client model
// by its mask, averaging the global parts with per-index contributor counts,
// and splicing the new global model back around each client's personalized
// parameters.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "fedcpf/errors.hpp"
#include "fedcpf/model.hpp"
#include "fedcpf/param.hpp"
#include "fedcpf/state.hpp"

namespace fedcpf {

struct Partition {
  ParamVector u;  // personalized part, theta (.) eta
  ParamVector v;  // global part, theta (.) not eta
};

inline Partition partition_params(const ParamVector& theta, const BinaryMask& eta) {
  detail::require_same_length(theta.size(), eta.size(), "partition_params");
  return {mask_apply(theta, eta), mask_apply(theta, mask_not(eta))};
}

struct Contribution {
  ParamVector v_plus;
  BinaryMask eta;  // the client's mask for this round
};

struct AggregateResult {
  ParamVector theta_g;
  ParamVector zeta;
  BinaryMask eta_g;
};

// For every index, average v_plus over the clients that hold it as global
// (eta = 0). Indices nobody contributes stay 0 with eta_g = 0.
inline AggregateResult aggregate_global(std::span<const Contribution> contributions) {
  detail::require(!contributions.empty(), "aggregate_global: no contributions");
  const std::size_t n = contributions.front().v_plus.size();
  for (const auto& c : contributions) {
    detail::require_same_length(c.v_plus.size(), n, "aggregate_global");
    detail::require_same_length(c.eta.size(), n, "aggregate_global");
  }

  AggregateResult r{ParamVector::zeros_like(contributions.front().v_plus),
                    ParamVector::zeros_like(contributions.front().v_plus), BinaryMask(n)};
  for (const auto& c : contributions) {
    for (std::size_t j = 0; j < n; ++j) {
      if (c.eta[j]) continue;
      r.theta_g[j] += c.v_plus[j];
      r.zeta[j] += 1.0;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (r.zeta[j] != 0.0) {
      r.eta_g.set(j);
      r.theta_g[j] /= r.zeta[j];
    }
  }
  return r;
}

// theta_g where eta_i = 0, the client's own u_plus where eta_i = 1.
inline ParamVector broadcast_reconstruct(const ParamVector& theta_g, const BinaryMask& eta_i, const ParamVector& u_plus) {
  detail::require_same_length(theta_g.size(), eta_i.size(), "broadcast_reconstruct");
  detail::require_same_length(u_plus.size(), eta_i.size(), "broadcast_reconstruct");
  ParamVector out = theta_g;
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (eta_i[j]) {
      out[j] = u_plus[j];
    } else if (u_plus[j] != 0.0) {
      throw ContractError("broadcast_reconstruct: u_plus is non-zero outside the client mask");
    }
  }
  return out;
}

struct Federation {
  GlobalState global;
  std::vector<ClientState> clients;
};

// Every client starts from the same seeded model with an all-zero mask.
inline Federation init_federation(std::size_t n_clients, const TokenModelConfig& model, std::uint64_t seed,
                                  std::span<const std::shared_ptr<const ClientDataset>> datasets = {}) {
  detail::require(n_clients >= 1, "init_federation: n_clients must be >= 1");
  detail::require(datasets.empty() || datasets.size() == n_clients, "init_federation: one dataset per client");
  Federation f;
  f.global.theta_g = init_params(model, seed);
  f.global.zeta = ParamVector::zeros_like(f.global.theta_g);
  f.global.eta_g = BinaryMask(f.global.theta_g.size());
  f.clients.reserve(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) {
    ClientState c;
    c.id = i;
    c.theta = f.global.theta_g;
    c.eta = BinaryMask(c.theta.size());
    c.window.delta_sum = ParamVector::zeros_like(c.theta);
    if (!datasets.empty()) {
      c.dataset = datasets[i];
      c.sample_count = datasets[i]->train.sample_count();
    }
    f.clients.push_back(std::move(c));
  }
  return f;
}

}  // namespace fedcpf
