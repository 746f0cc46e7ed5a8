#pragma once

// Flat parameter vectors and per-parameter binary masks.
//
// Every model in this library is viewed as one contiguous vector of doubles
// with a list of named segments on top. Personalization masks are aligned
// index-for-index with that vector: a 1 marks a parameter that a client keeps
// locally, a 0 marks a parameter that is shared through the server.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedcpf/errors.hpp"

namespace fedcpf {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const Segment&) const = default;
};

class ParamVector {
 public:
  ParamVector() = default;

  explicit ParamVector(std::size_t n) : ParamVector(std::vector<double>(n, 0.0)) {}

  ParamVector(std::initializer_list<double> values) : ParamVector(std::vector<double>(values)) {}

  explicit ParamVector(std::vector<double> values)
      : values_(std::move(values)), segments_{{"all", 0, values_.size()}} {
    detail::require(!values_.empty(), "ParamVector: length must be positive");
  }

  ParamVector(std::vector<double> values, std::vector<Segment> segments)
      : values_(std::move(values)), segments_(std::move(segments)) {
    detail::require(!values_.empty(), "ParamVector: length must be positive");
    std::size_t cursor = 0;
    for (const auto& s : segments_) {
      detail::require(s.offset == cursor && s.length > 0,
                      "ParamVector: segments must tile the vector without gaps or overlaps");
      cursor += s.length;
    }
    detail::require(cursor == values_.size(), "ParamVector: segments must cover the whole vector");
  }

  // Same shape and segment layout, all zeros.
  static ParamVector zeros_like(const ParamVector& other) {
    ParamVector out;
    out.values_.assign(other.size(), 0.0);
    out.segments_ = other.segments_;
    return out;
  }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  const std::vector<Segment>& segments() const noexcept { return segments_; }

  const Segment& segment_info(std::string_view name) const {
    for (const auto& s : segments_) {
      if (s.name == name) return s;
    }
    throw ContractError("ParamVector: no segment named '" + std::string(name) + "'");
  }

  std::span<double> segment(std::string_view name) {
    const auto& s = segment_info(name);
    return std::span<double>(values_).subspan(s.offset, s.length);
  }
  std::span<const double> segment(std::string_view name) const {
    const auto& s = segment_info(name);
    return std::span<const double>(values_).subspan(s.offset, s.length);
  }

  // Name of the segment containing flat index i.
  const std::string& segment_of(std::size_t i) const {
    for (const auto& s : segments_) {
      if (i >= s.offset && i < s.offset + s.length) return s.name;
    }
    throw ContractError("ParamVector: index out of range");
  }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
  std::vector<Segment> segments_;
};

class BinaryMask {
 public:
  BinaryMask() = default;

  explicit BinaryMask(std::size_t n, bool value = false) : bits_(n, value ? 1 : 0) {}

  BinaryMask(std::initializer_list<int> bits) {
    bits_.reserve(bits.size());
    for (int b : bits) {
      detail::require(b == 0 || b == 1, "BinaryMask: elements must be 0 or 1");
      bits_.push_back(static_cast<std::uint8_t>(b));
    }
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool value = true) { bits_[i] = value ? 1 : 0; }

  std::size_t popcount() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ContractError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                        std::to_string(b) + ")");
  }
}

}  // namespace detail

// theta (.) eta: copy where eta=1, zero elsewhere. Segments are preserved.
inline ParamVector mask_apply(const ParamVector& theta, const BinaryMask& eta) {
  detail::require_same_length(theta.size(), eta.size(), "mask_apply");
  ParamVector out = ParamVector::zeros_like(theta);
  for (std::size_t j = 0; j < theta.size(); ++j) {
    if (eta[j]) out[j] = theta[j];
  }
  return out;
}

inline BinaryMask mask_not(const BinaryMask& eta) {
  BinaryMask out(eta.size());
  for (std::size_t j = 0; j < eta.size(); ++j) out.set(j, !eta[j]);
  return out;
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_length(a.size(), b.size(), "mask_union");
  BinaryMask out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out.set(j, a[j] || b[j]);
  return out;
}

// Fraction of parameters marked personalized.
inline double personalization_fraction(const BinaryMask& eta) {
  detail::require(!eta.empty(), "personalization_fraction: empty mask");
  return static_cast<double>(eta.popcount()) / static_cast<double>(eta.size());
}

// floor(p * n), tolerant of representation error such as 0.29 * 100 = 28.999...
inline std::size_t fraction_budget(double p, std::size_t n) {
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
}

// Selects floor(p * eligible) indices with the largest values among indices
// where `excluded` is 0. Ties go to the lower index.
inline BinaryMask top_fraction_indices(const ParamVector& values, double p, const BinaryMask& excluded) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("top_fraction_indices: p must lie in [0, 1]");
  detail::require_same_length(values.size(), excluded.size(), "top_fraction_indices");

  std::vector<std::size_t> eligible;
  eligible.reserve(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (!excluded[j]) eligible.push_back(j);
  }
  const std::size_t budget = fraction_budget(p, eligible.size());

  BinaryMask out(values.size());
  if (budget == 0) return out;

  auto by_value_then_index = [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(budget),
                    eligible.end(), by_value_then_index);
  for (std::size_t n = 0; n < budget; ++n) out.set(eligible[n]);
  return out;
}

// |after - before| elementwise.
inline ParamVector abs_diff(const ParamVector& before, const ParamVector& after) {
  detail::require_same_length(before.size(), after.size(), "abs_diff");
  ParamVector out = ParamVector::zeros_like(after);
  for (std::size_t j = 0; j < after.size(); ++j) out[j] = std::fabs(after[j] - before[j]);
  return out;
}

}  // namespace fedcpf
