#pragma once

// Seeded synthetic non-IID client datasets.
//
// Each class owns a phi x input_dim prototype drawn from N(0, 1); a sample is
// its class prototype plus N(0, sigma^2) noise. Label skew gives every client
// Dirichlet(alpha) class proportions; feature shift keeps classes balanced and
// rotates each client's features by a client-specific angle.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedcpf/errors.hpp"
#include "fedcpf/model.hpp"

namespace fedcpf {

enum class SkewMode { label_skew, feature_shift };

struct SkewSpec {
  SkewMode mode = SkewMode::label_skew;
  double alpha = 0.5;             // Dirichlet concentration for label skew
  double rotation_step = 0.3;     // radians; client i is rotated by i * rotation_step
  std::size_t n_classes = 5;
  std::size_t samples_per_client = 100;
  std::size_t input_dim = 8;
  std::size_t phi = 4;
  double noise_sigma = 0.5;

  void validate() const {
    detail::require(alpha > 0.0, "SkewSpec: alpha must be positive");
    detail::require(n_classes >= 1 && input_dim >= 1 && phi >= 1, "SkewSpec: counts must be >= 1");
    detail::require(samples_per_client >= 2 * n_classes, "SkewSpec: samples_per_client must be >= 2 * n_classes");
    detail::require(noise_sigma >= 0.0, "SkewSpec: noise_sigma must be non-negative");
    if (mode == SkewMode::feature_shift) {
      detail::require(input_dim >= 2, "SkewSpec: feature_shift needs input_dim >= 2");
    }
  }
};

struct ClientDataset {
  std::size_t client_id = 0;
  Batch train;
  Batch test;
  std::string partition_hash;  // digest of this client's realized data
};

namespace detail {

// 64-bit FNV-1a over a canonical little-endian byte stream.
class Fnv1a64 {
 public:
  void bytes(const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline void hash_batch(Fnv1a64& h, const Batch& b) {
  h.u64(b.phi);
  h.u64(b.input_dim);
  h.u64(b.sample_count());
  for (double v : b.features) h.f64(v);
  for (std::size_t y : b.labels) h.u64(y);
}

inline std::string client_digest(const ClientDataset& d) {
  Fnv1a64 h;
  h.u64(d.client_id);
  hash_batch(h, d.train);
  hash_batch(h, d.test);
  return h.hex();
}

// Integer counts summing to `total`, proportional to `weights` (largest remainder).
inline std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    const double exact = weights[c] / wsum * static_cast<double>(total);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t n = 0; assigned < total; ++n, ++assigned) ++counts[remainders[n % remainders.size()].second];
  return counts;
}

}  // namespace detail

// Class proportions ~ Dirichlet(alpha), sampled through normalized gammas.
inline std::vector<double> sample_dirichlet(std::size_t k, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> out(k);
  double sum = 0.0;
  for (double& v : out) {
    v = gamma(rng);
    sum += v;
  }
  if (sum <= 0.0) {
    // all draws underflowed (tiny alpha); put the mass on one class
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::fill(out.begin(), out.end(), 0.0);
    out[pick(rng)] = 1.0;
    return out;
  }
  for (double& v : out) v /= sum;
  return out;
}

inline std::vector<ClientDataset> generate_partition(std::size_t n_clients, const SkewSpec& spec, std::uint64_t seed) {
  detail::require(n_clients >= 1, "generate_partition: n_clients must be >= 1");
  spec.validate();

  std::mt19937_64 rng(seed);
  const std::size_t stride = spec.phi * spec.input_dim;
  std::vector<std::vector<double>> prototypes(spec.n_classes, std::vector<double>(stride));
  {
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& proto : prototypes) {
      for (double& v : proto) v = unit(rng);
    }
  }

  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  std::vector<std::size_t> global_counts(spec.n_classes, 0);
  std::vector<ClientDataset> out;
  out.reserve(n_clients);

  for (std::size_t i = 0; i < n_clients; ++i) {
    std::vector<double> proportions(spec.n_classes, 1.0);
    if (spec.mode == SkewMode::label_skew) proportions = sample_dirichlet(spec.n_classes, spec.alpha, rng);
    const auto counts = detail::apportion(proportions, spec.samples_per_client);

    std::vector<std::size_t> labels;
    labels.reserve(spec.samples_per_client);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      labels.insert(labels.end(), counts[c], c);
      global_counts[c] += counts[c];
    }
    std::shuffle(labels.begin(), labels.end(), rng);

    const double angle = static_cast<double>(i) * spec.rotation_step;
    const double cs = std::cos(angle), sn = std::sin(angle);

    Batch all{spec.phi, spec.input_dim, {}, {}};
    std::vector<double> sample(stride);
    for (std::size_t y : labels) {
      for (std::size_t f = 0; f < stride; ++f) sample[f] = prototypes[y][f] + noise(rng);
      if (spec.mode == SkewMode::feature_shift) {
        // rotate consecutive feature pairs within every token
        for (std::size_t t = 0; t < spec.phi; ++t) {
          for (std::size_t f = 0; f + 1 < spec.input_dim; f += 2) {
            double& a = sample[t * spec.input_dim + f];
            double& b = sample[t * spec.input_dim + f + 1];
            const double ra = cs * a - sn * b;
            const double rb = sn * a + cs * b;
            a = ra;
            b = rb;
          }
        }
      }
      all.push_back(sample, y);
    }

    // 80/20 split over a shuffled index permutation
    std::vector<std::size_t> order(all.sample_count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_test = std::max<std::size_t>(1, all.sample_count() / 5);

    ClientDataset d;
    d.client_id = i;
    d.train = Batch{spec.phi, spec.input_dim, {}, {}};
    d.test = Batch{spec.phi, spec.input_dim, {}, {}};
    for (std::size_t n = 0; n < order.size(); ++n) {
      Batch& dst = n < n_test ? d.test : d.train;
      dst.push_back(all.sample(order[n]), all.labels[order[n]]);
    }
    d.partition_hash = detail::client_digest(d);
    out.push_back(std::move(d));
  }

  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    if (global_counts[c] == 0) {
      throw GenerationError("generate_partition: class " + std::to_string(c) + " received no samples");
    }
  }
  return out;
}

// Order-sensitive digest over every client's features and labels.
inline std::string partition_digest(std::span<const ClientDataset> datasets) {
  detail::require(!datasets.empty(), "partition_digest: no datasets");
  detail::Fnv1a64 h;
  h.u64(datasets.size());
  for (const auto& d : datasets) {
    h.u64(d.client_id);
    detail::hash_batch(h, d.train);
    detail::hash_batch(h, d.test);
  }
  return h.hex();
}

// One JSON object per line:
// {"client":0,"split":"train","index":3,"label":2,"features":[...]}
// Features use 17 significant digits.
inline void export_partition(std::span<const ClientDataset> datasets, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("export_partition: cannot open " + path);
  char buf[32];
  auto emit = [&](const ClientDataset& d, const Batch& b, const char* split) {
    for (std::size_t n = 0; n < b.sample_count(); ++n) {
      os << "{\"client\":" << d.client_id << ",\"split\":\"" << split << "\",\"index\":" << n
         << ",\"label\":" << b.labels[n] << ",\"features\":[";
      const auto feats = b.sample(n);
      for (std::size_t f = 0; f < feats.size(); ++f) {
        std::snprintf(buf, sizeof buf, "%.17g", feats[f]);
        os << (f ? "," : "") << buf;
      }
      os << "]}\n";
    }
  };
  for (const auto& d : datasets) {
    emit(d, d.train, "train");
    emit(d, d.test, "test");
  }
}

}  // namespace fedcpf
