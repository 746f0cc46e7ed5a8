#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fedcpf/data.hpp"
#include "fedcpf/errors.hpp"
#include "fedcpf/param.hpp"

namespace fedcpf {

enum class FreezeMode {
  aggregation_freeze,  // personalized parameters still train locally, they just skip aggregation
  hard_freeze,         // gradients of personalized parameters are zeroed
};

struct HyperParams {
  double p = 0.05;         // share of still-global parameters frozen per selection event
  double rho = 0.5;        // personalization target; mask growth stops once reached
  double acc = 0.05;       // accuracy milestone step for the change-rate window
  std::size_t local_epochs = 1;
  double lr = 0.05;
  std::size_t batch_size = 0;  // 0 = full local batch
  FreezeMode freeze_mode = FreezeMode::aggregation_freeze;

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("hyper.p", "must lie in [0, 1]");
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("hyper.rho", "must lie in [0, 1]");
    if (!(acc > 0.0)) throw ConfigError("hyper.acc", "must be positive");
    if (local_epochs < 1) throw ConfigError("hyper.local_epochs", "must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("hyper.lr", "must be positive");
  }
};

// Running sum of |delta v| since the window start r_th, plus the milestone counter k.
struct DeltaWindow {
  ParamVector delta_sum;
  std::size_t r_th = 0;
  std::size_t k = 0;
};

struct ClientState {
  std::size_t id = 0;
  ParamVector theta;
  BinaryMask eta;
  DeltaWindow window;
  std::shared_ptr<const ClientDataset> dataset;
  std::size_t sample_count = 0;
};

struct GlobalState {
  ParamVector theta_g;
  std::size_t round = 0;
  ParamVector zeta;  // contributor count per index
  BinaryMask eta_g;  // 1 where at least one client contributed
};

struct ClientRoundStats {
  std::size_t id = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double personalization_fraction = 0.0;
  std::size_t newly_frozen = 0;
  std::size_t window_k = 0;
  std::size_t window_r_th = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  std::uint64_t seed = 0;
  std::vector<ClientRoundStats> clients;
  double wall_ms = 0.0;  // not serialized; histories must stay byte-reproducible
};

}  // namespace fedcpf
