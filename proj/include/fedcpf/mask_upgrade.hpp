#pragma once

// Client-side mask growth with a windowed average change rate.
//
// After local training a client measures how far each of its global
// parameters moved, |v+ - v|, and keeps a running sum since the window start
// r_th. Each time training accuracy reaches the next milestone k * acc the
// window restarts at the current round. The running sum divided by the window
// length ranks still-global parameters; the top p of them join the
// personalized set. Growth stops once the personalized fraction reaches rho.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>

#include "fedcpf/errors.hpp"
#include "fedcpf/metrics.hpp"
#include "fedcpf/model.hpp"
#include "fedcpf/param.hpp"
#include "fedcpf/protocol.hpp"
#include "fedcpf/state.hpp"

namespace fedcpf {

struct LocalResult {
  ParamVector theta;
  double train_accuracy = 0.0;
};

// Extra objective terms, e.g. a proximal penalty. Called with the current
// parameters after the cross-entropy loss/gradient is computed.
using LossHook = std::function<void(const ParamVector& theta, LossGrad& lg)>;

inline double accuracy_on(const Batch& batch, const ParamVector& theta, const TokenModelConfig& config) {
  const auto preds = predict(batch, theta, config);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < preds.size(); ++n) correct += preds[n] == batch.labels[n] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

namespace detail {

inline Batch slice_batch(const Batch& b, std::size_t begin, std::size_t end) {
  Batch out{b.phi, b.input_dim, {}, {}};
  for (std::size_t n = begin; n < end; ++n) out.push_back(b.sample(n), b.labels[n]);
  return out;
}

}  // namespace detail

// E epochs of SGD on the local cross-entropy. Mini-batches are taken in order;
// batch_size 0 means one full-batch step per epoch. lr = 0 is allowed and
// returns theta unchanged.
inline LocalResult local_update(const ParamVector& theta, const BinaryMask& eta, const Batch& train,
                                const HyperParams& hyper, const TokenModelConfig& config,
                                const LossHook& hook = {}) {
  detail::require(train.sample_count() > 0, "local_update: empty training set");
  detail::require(hyper.local_epochs >= 1, "local_update: local_epochs must be >= 1");
  const BinaryMask* freeze = hyper.freeze_mode == FreezeMode::hard_freeze ? &eta : nullptr;
  const std::size_t bs = hyper.batch_size == 0 ? train.sample_count() : std::min(hyper.batch_size, train.sample_count());

  ParamVector current = theta;
  for (std::size_t e = 0; e < hyper.local_epochs; ++e) {
    for (std::size_t begin = 0; begin < train.sample_count(); begin += bs) {
      const std::size_t end = std::min(begin + bs, train.sample_count());
      LossGrad lg;
      try {
        lg = bs == train.sample_count() ? loss_and_grad(train, current, config)
                                        : loss_and_grad(detail::slice_batch(train, begin, end), current, config);
        if (hook) hook(current, lg);
      } catch (const NumericError& err) {
        throw NumericError("local training diverged at epoch " + std::to_string(e) + ": " + err.what());
      }
      if (freeze) {
        for (std::size_t j = 0; j < lg.grad.size(); ++j) {
          if ((*freeze)[j]) lg.grad[j] = 0.0;
        }
      }
      current = sgd_step(current, lg.grad, hyper.lr);
    }
  }
  const double acc = accuracy_on(train, current, config);
  return {std::move(current), acc};
}

// Restart the window at `current_round` when accuracy reaches the k-th milestone.
// At most one advance per call.
inline DeltaWindow advance_window(DeltaWindow window, double train_accuracy, double acc, std::size_t current_round) {
  detail::require(acc > 0.0, "advance_window: acc must be positive");
  // k * acc is compared with a small slack so that e.g. 12/80 >= 3 * 0.05 holds
  if (train_accuracy >= static_cast<double>(window.k) * acc - 1e-12) {
    window.r_th = current_round;
    ++window.k;
    std::fill(window.delta_sum.values().begin(), window.delta_sum.values().end(), 0.0);
  }
  return window;
}

inline DeltaWindow accumulate_delta(DeltaWindow window, const ParamVector& v_before, const ParamVector& v_after) {
  detail::require_same_length(v_before.size(), v_after.size(), "accumulate_delta");
  detail::require_same_length(window.delta_sum.size(), v_after.size(), "accumulate_delta");
  for (std::size_t j = 0; j < v_after.size(); ++j) window.delta_sum[j] += std::fabs(v_after[j] - v_before[j]);
  return window;
}

// Windowed average change rate; the denominator is clamped to 1 when the
// window started this round.
inline ParamVector delta_avg(const DeltaWindow& window, std::size_t current_round) {
  detail::require(current_round >= window.r_th, "delta_avg: current round precedes window start");
  const double denom = static_cast<double>(std::max<std::size_t>(1, current_round - window.r_th));
  ParamVector out = window.delta_sum;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] /= denom;
  return out;
}

// Zero the running sum on newly personalized indices so it only tracks global ones.
inline void clear_frozen(DeltaWindow& window, const BinaryMask& eta) {
  for (std::size_t j = 0; j < eta.size(); ++j) {
    if (eta[j]) window.delta_sum[j] = 0.0;
  }
}

struct Selection {
  BinaryMask eta_next;
  DeltaWindow window;
};

// Selection step of MaskUpgrade given the pre/post training global parts.
inline Selection comprehensive_select(const DeltaWindow& window, const BinaryMask& eta, const ParamVector& v_before,
                                      const ParamVector& v_after, double train_accuracy, const HyperParams& hyper,
                                      std::size_t current_round) {
  if (!(personalization_fraction(eta) < hyper.rho)) return {eta, window};
  DeltaWindow w = advance_window(window, train_accuracy, hyper.acc, current_round);
  w = accumulate_delta(std::move(w), v_before, v_after);
  const ParamVector avg = delta_avg(w, current_round);
  BinaryMask next = mask_union(top_fraction_indices(avg, hyper.p, eta), eta);
  clear_frozen(w, next);
  return {std::move(next), std::move(w)};
}

struct MaskUpgradeResult {
  ParamVector u_plus;
  ParamVector v_plus;
  BinaryMask eta_next;
  DeltaWindow window;
  double train_accuracy = 0.0;
  std::size_t newly_frozen = 0;
};

using LocalTrainer = std::function<LocalResult(const ClientState&, const HyperParams&, std::size_t round)>;

// Train locally, split the trained model by the current mask and grow the mask.
inline MaskUpgradeResult mask_upgrade(const ClientState& client, const HyperParams& hyper, std::size_t current_round,
                                      const LocalTrainer& trainer) {
  const Partition before = partition_params(client.theta, client.eta);
  LocalResult trained = trainer(client, hyper, current_round);
  Partition after = partition_params(trained.theta, client.eta);
  Selection sel = comprehensive_select(client.window, client.eta, before.v, after.v, trained.train_accuracy, hyper,
                                       current_round);
  const std::size_t grown = sel.eta_next.popcount() - client.eta.popcount();
  return {std::move(after.u), std::move(after.v), std::move(sel.eta_next), std::move(sel.window),
          trained.train_accuracy, grown};
}

// Trainer backed by the token model on the client's own training split.
inline LocalTrainer model_trainer(const TokenModelConfig& config) {
  return [config](const ClientState& c, const HyperParams& hyper, std::size_t) {
    detail::require(c.dataset != nullptr, "model_trainer: client has no dataset");
    return local_update(c.theta, c.eta, c.dataset->train, hyper, config);
  };
}

}  // namespace fedcpf
