#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fedcpf/baselines.hpp"
#include "fedcpf/model.hpp"

namespace fedcpf {

struct GradcheckCase {
  TokenModelConfig config;
  ParamVector params;
  Batch batch;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_segment;
  std::size_t worst_index = 0;
  std::vector<double> per_case;  // max relative error of each case
};

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
// Relative errors are measured against max(|analytic|, |numeric|, floor) so
// that entries whose true gradient is ~0 are judged in absolute terms.
inline constexpr double kGradcheckFloor = 1e-7;

// Small random model and batch: phi=3, d_model=d_attn=4, 3 classes.
inline GradcheckCase make_gradcheck_case(std::uint64_t seed) {
  GradcheckCase gc;
  gc.config = TokenModelConfig{3, 4, 4, 3, 1e8, 3};
  gc.params = init_params(gc.config, seed);
  std::mt19937_64 rng(mix_seed(seed, 7));
  std::normal_distribution<double> n01(0.0, 1.0);
  // biases are zero after init; give them generic values too
  for (double& v : gc.params.values()) {
    if (v == 0.0) v = 0.3 * n01(rng);
  }
  gc.batch = Batch{gc.config.phi, gc.config.input_dim, {}, {}};
  std::uniform_int_distribution<std::size_t> label(0, gc.config.n_classes - 1);
  std::vector<double> sample(gc.config.phi * gc.config.input_dim);
  for (int n = 0; n < 4; ++n) {
    for (double& v : sample) v = n01(rng);
    gc.batch.push_back(sample, label(rng));
  }
  return gc;
}

// Central differences against the analytic gradient. `corrupt` perturbs the
// analytic gradient and exists as a negative control.
inline GradcheckReport check_case(const GradcheckCase& gc, bool corrupt = false) {
  LossGrad lg = loss_and_grad(gc.batch, gc.params, gc.config);
  if (corrupt) {
    for (double& g : lg.grad.values()) g = g * 1.01 + 1e-3;
  }
  GradcheckReport rep;
  ParamVector probe = gc.params;
  for (std::size_t j = 0; j < probe.size(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + kGradcheckStep;
    const double up = loss_and_grad(gc.batch, probe, gc.config).loss;
    probe[j] = orig - kGradcheckStep;
    const double down = loss_and_grad(gc.batch, probe, gc.config).loss;
    probe[j] = orig;
    const double numeric = (up - down) / (2.0 * kGradcheckStep);
    const double analytic = lg.grad[j];
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), kGradcheckFloor});
    const double rel = std::fabs(analytic - numeric) / denom;
    if (j == 0 || rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = j;
      rep.worst_segment = probe.segment_of(j);
    }
  }
  rep.per_case.push_back(rep.max_rel_error);
  return rep;
}

inline GradcheckReport gradient_check(std::uint64_t seed, std::size_t n_cases = 10, bool corrupt = false) {
  GradcheckReport total;
  for (std::size_t c = 0; c < n_cases; ++c) {
    const GradcheckReport rep = check_case(make_gradcheck_case(mix_seed(seed, c)), corrupt);
    total.per_case.push_back(rep.max_rel_error);
    if (c == 0 || rep.max_rel_error > total.max_rel_error) {
      total.max_rel_error = rep.max_rel_error;
      total.worst_segment = rep.worst_segment;
      total.worst_index = rep.worst_index;
    }
  }
  return total;
}

}  // namespace fedcpf
