#pragma once

// One-block token classifier with global/local suppressed self-attention.
//
// Per sample the model sees phi local token feature rows. They are embedded
// linearly, a learned global token is prepended as row 0, and one attention
// block runs with the additive suppression matrix S: every token attends to
// itself and to the global token only. The block output goes through a
// projection with a residual connection, rows are mean-pooled and a linear
// head produces class logits. Backpropagation is written out by hand.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedcpf/errors.hpp"
#include "fedcpf/param.hpp"

namespace fedcpf {

// Row-major dense matrix. Sizes here are tiny; plain loops keep evaluation
// order fixed so results are reproducible bit for bit.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::span<const double> src)
      : rows(r), cols(c), data(src.begin(), src.end()) {
    detail::require(src.size() == r * c, "Matrix: source size does not match shape");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows = init.size();
    cols = rows ? init.begin()->size() : 0;
    data.reserve(rows * cols);
    for (const auto& row : init) {
      detail::require(row.size() == cols, "Matrix: ragged initializer");
      data.insert(data.end(), row.begin(), row.end());
    }
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

namespace detail {

// A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// A^T * B, accumulated into `out`
inline void add_matmul_at_b(const Matrix& a, const Matrix& b, std::span<double> out) {
  require(a.rows == b.rows && out.size() == a.cols * b.cols, "matmul_at_b: shape mismatch");
  for (std::size_t k = 0; k < a.rows; ++k) {
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = a(k, i);
      for (std::size_t j = 0; j < b.cols; ++j) out[i * b.cols + j] += aki * b(k, j);
    }
  }
}

// A * B^T
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, "matmul_a_bt: shape mismatch");
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  }
  return out;
}

inline void softmax_row_inplace(std::span<double> z, std::size_t row) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  if (!std::isfinite(m)) throw NumericError("attention: non-finite logit in row " + std::to_string(row));
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace detail

struct TokenModelConfig {
  std::size_t phi = 4;         // local tokens per sample
  std::size_t d_model = 16;    // embedding width
  std::size_t d_attn = 16;     // columns of Q, K, V
  std::size_t n_classes = 5;
  double lambda_suppress = 1e8;
  std::size_t input_dim = 8;   // raw feature width per token

  std::size_t tokens() const noexcept { return phi + 1; }

  void validate() const {
    detail::require(phi >= 1 && d_model >= 1 && d_attn >= 1 && n_classes >= 1 && input_dim >= 1,
                    "TokenModelConfig: all counts must be >= 1");
    detail::require(lambda_suppress > 0.0, "TokenModelConfig: lambda_suppress must be positive");
  }

  bool operator==(const TokenModelConfig&) const = default;
};

inline std::vector<Segment> model_layout(const TokenModelConfig& c) {
  std::vector<Segment> segs;
  std::size_t off = 0;
  auto add = [&](const char* name, std::size_t n) {
    segs.push_back({name, off, n});
    off += n;
  };
  add("embed", c.input_dim * c.d_model + c.d_model);
  add("global_token", c.d_model);
  add("wq", c.d_model * c.d_attn);
  add("wk", c.d_model * c.d_attn);
  add("wv", c.d_model * c.d_attn);
  add("proj", c.d_attn * c.d_model);
  add("head", c.d_model * c.n_classes + c.n_classes);
  return segs;
}

inline std::size_t model_param_count(const TokenModelConfig& c) {
  std::size_t n = 0;
  for (const auto& s : model_layout(c)) n += s.length;
  return n;
}

inline ParamVector zero_params(const TokenModelConfig& c) {
  c.validate();
  return ParamVector(std::vector<double>(model_param_count(c), 0.0), model_layout(c));
}

// Seeded initializer: weights ~ N(0, 1/fan_in), biases zero, global token ~ N(0, 0.1^2).
inline ParamVector init_params(const TokenModelConfig& c, std::uint64_t seed) {
  ParamVector p = zero_params(c);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::span<double> dst, double sd) {
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : dst) v = dist(rng);
  };
  auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  fill(p.segment("embed").first(c.input_dim * c.d_model), inv_sqrt(c.input_dim));
  fill(p.segment("global_token"), 0.1);
  fill(p.segment("wq"), inv_sqrt(c.d_model));
  fill(p.segment("wk"), inv_sqrt(c.d_model));
  fill(p.segment("wv"), inv_sqrt(c.d_model));
  fill(p.segment("proj"), inv_sqrt(c.d_attn));
  fill(p.segment("head").first(c.d_model * c.n_classes), inv_sqrt(c.d_model));
  return p;
}

// Samples of phi x input_dim token features with class labels.
struct Batch {
  std::size_t phi = 0;
  std::size_t input_dim = 0;
  std::vector<double> features;  // sample-major, then token, then feature
  std::vector<std::size_t> labels;

  std::size_t sample_count() const noexcept { return labels.size(); }
  std::size_t sample_stride() const noexcept { return phi * input_dim; }

  std::span<const double> sample(std::size_t n) const {
    return std::span<const double>(features).subspan(n * sample_stride(), sample_stride());
  }

  void push_back(std::span<const double> tokens, std::size_t label) {
    detail::require(tokens.size() == sample_stride(), "Batch: sample has wrong feature count");
    features.insert(features.end(), tokens.begin(), tokens.end());
    labels.push_back(label);
  }

  void validate(const TokenModelConfig& c) const {
    if (phi != c.phi || input_dim != c.input_dim) throw ContractError("Batch: shape does not match model config");
    if (features.size() != sample_count() * sample_stride()) throw ContractError("Batch: feature buffer size mismatch");
    for (std::size_t y : labels) {
      if (y >= c.n_classes) throw ContractError("Batch: label out of range");
    }
    for (double v : features) {
      if (!std::isfinite(v)) throw ContractError("Batch: non-finite feature value");
    }
  }

  bool operator==(const Batch&) const = default;
};

// S[i][j] = 0 when i == j or j is the global-token column (0-based j == 0), lambda otherwise.
inline Matrix build_suppression_matrix(std::size_t phi, double lambda) {
  detail::require(phi >= 1, "build_suppression_matrix: phi must be >= 1");
  detail::require(lambda > 0.0, "build_suppression_matrix: lambda must be positive");
  const std::size_t t = phi + 1;
  Matrix s(t, t, lambda);
  for (std::size_t i = 0; i < t; ++i) {
    s(i, i) = 0.0;
    s(i, 0) = 0.0;
  }
  return s;
}

struct AttentionResult {
  Matrix weights;  // tokens x tokens, rows sum to 1
  Matrix output;   // tokens x d_attn
};

// softmax((Q K^T - S) / sqrt(d)) V with per-row max subtraction.
inline AttentionResult suppressed_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& s) {
  detail::require(q.cols == k.cols && k.rows == v.rows && q.cols == v.cols, "attention: Q/K/V shape mismatch");
  detail::require(s.rows == q.rows && s.cols == k.rows, "attention: suppression matrix shape mismatch");
  const double scale = std::sqrt(static_cast<double>(q.cols));
  AttentionResult r{detail::matmul_a_bt(q, k), Matrix{}};
  for (std::size_t i = 0; i < r.weights.rows; ++i) {
    auto row = std::span<double>(r.weights.data).subspan(i * r.weights.cols, r.weights.cols);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - s(i, j)) / scale;
    detail::softmax_row_inplace(row, i);
  }
  r.output = detail::matmul(r.weights, v);
  for (std::size_t i = 0; i < r.output.rows; ++i) {
    for (std::size_t j = 0; j < r.output.cols; ++j) {
      if (!std::isfinite(r.output(i, j))) throw NumericError("attention: non-finite output in row " + std::to_string(i));
    }
  }
  return r;
}

// Unsuppressed scaled dot-product attention, softmax(Q K^T / sqrt(d)) V.
inline AttentionResult plain_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  detail::require(q.cols == k.cols && k.rows == v.rows, "attention: Q/K/V shape mismatch");
  const double scale = std::sqrt(static_cast<double>(q.cols));
  AttentionResult r{detail::matmul_a_bt(q, k), Matrix{}};
  for (std::size_t i = 0; i < r.weights.rows; ++i) {
    auto row = std::span<double>(r.weights.data).subspan(i * r.weights.cols, r.weights.cols);
    for (double& z : row) z = z / scale;
    detail::softmax_row_inplace(row, i);
  }
  r.output = detail::matmul(r.weights, v);
  return r;
}

// Typed views of the flat parameter vector.
struct ModelWeights {
  Matrix embed_w;  // input_dim x d_model
  std::vector<double> embed_b;
  std::vector<double> global_token;
  Matrix wq, wk, wv;  // d_model x d_attn
  Matrix proj;        // d_attn x d_model
  Matrix head_w;      // d_model x n_classes
  std::vector<double> head_b;

  static ModelWeights unpack(const ParamVector& p, const TokenModelConfig& c) {
    detail::require(p.size() == model_param_count(c), "model: parameter vector does not match config");
    ModelWeights w;
    auto embed = p.segment("embed");
    w.embed_w = Matrix(c.input_dim, c.d_model, embed.first(c.input_dim * c.d_model));
    w.embed_b.assign(embed.begin() + static_cast<std::ptrdiff_t>(c.input_dim * c.d_model), embed.end());
    auto g = p.segment("global_token");
    w.global_token.assign(g.begin(), g.end());
    w.wq = Matrix(c.d_model, c.d_attn, p.segment("wq"));
    w.wk = Matrix(c.d_model, c.d_attn, p.segment("wk"));
    w.wv = Matrix(c.d_model, c.d_attn, p.segment("wv"));
    w.proj = Matrix(c.d_attn, c.d_model, p.segment("proj"));
    auto head = p.segment("head");
    w.head_w = Matrix(c.d_model, c.n_classes, head.first(c.d_model * c.n_classes));
    w.head_b.assign(head.begin() + static_cast<std::ptrdiff_t>(c.d_model * c.n_classes), head.end());
    return w;
  }
};

// Token matrix M = [global_token; F W_e + b_e].
inline Matrix embed_tokens(std::span<const double> features, const ModelWeights& w, const TokenModelConfig& c) {
  const Matrix f(c.phi, c.input_dim, features);
  const Matrix e = detail::matmul(f, w.embed_w);
  Matrix m(c.tokens(), c.d_model);
  for (std::size_t j = 0; j < c.d_model; ++j) m(0, j) = w.global_token[j];
  for (std::size_t t = 0; t < c.phi; ++t) {
    for (std::size_t j = 0; j < c.d_model; ++j) m(t + 1, j) = e(t, j) + w.embed_b[j];
  }
  return m;
}

struct AttentionCache {
  Matrix q, k, v;
  AttentionResult attn;
};

inline AttentionCache attention_forward(const Matrix& m, const ModelWeights& w, const Matrix& s) {
  AttentionCache c{detail::matmul(m, w.wq), detail::matmul(m, w.wk), detail::matmul(m, w.wv), {}};
  c.attn = suppressed_attention(c.q, c.k, c.v, s);
  return c;
}

struct SampleCache {
  Matrix m;
  AttentionCache attn;
  std::vector<double> pooled;  // d_model
  std::vector<double> logits;  // n_classes
};

struct ForwardResult {
  Matrix logits;  // samples x n_classes
  std::vector<SampleCache> caches;
};

inline SampleCache forward_sample(std::span<const double> features, const ModelWeights& w,
                                  const TokenModelConfig& c, const Matrix& s) {
  SampleCache sc;
  sc.m = embed_tokens(features, w, c);
  sc.attn = attention_forward(sc.m, w, s);
  const Matrix projected = detail::matmul(sc.attn.attn.output, w.proj);
  const std::size_t t = c.tokens();
  sc.pooled.assign(c.d_model, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < c.d_model; ++j) sc.pooled[j] += sc.m(i, j) + projected(i, j);
  }
  for (double& v : sc.pooled) v /= static_cast<double>(t);
  sc.logits = w.head_b;
  for (std::size_t j = 0; j < c.d_model; ++j) {
    for (std::size_t k = 0; k < c.n_classes; ++k) sc.logits[k] += sc.pooled[j] * w.head_w(j, k);
  }
  return sc;
}

inline ForwardResult model_forward(const Batch& batch, const ParamVector& params, const TokenModelConfig& config) {
  config.validate();
  batch.validate(config);
  const ModelWeights w = ModelWeights::unpack(params, config);
  const Matrix s = build_suppression_matrix(config.phi, config.lambda_suppress);
  ForwardResult r{Matrix(batch.sample_count(), config.n_classes), {}};
  r.caches.reserve(batch.sample_count());
  for (std::size_t n = 0; n < batch.sample_count(); ++n) {
    r.caches.push_back(forward_sample(batch.sample(n), w, config, s));
    for (std::size_t k = 0; k < config.n_classes; ++k) r.logits(n, k) = r.caches.back().logits[k];
  }
  return r;
}

inline std::vector<std::size_t> predict(const Batch& batch, const ParamVector& params, const TokenModelConfig& config) {
  const ForwardResult fwd = model_forward(batch, params, config);
  std::vector<std::size_t> out(batch.sample_count());
  for (std::size_t n = 0; n < out.size(); ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < config.n_classes; ++k) {
      if (fwd.logits(n, k) > fwd.logits(n, best)) best = k;
    }
    out[n] = best;
  }
  return out;
}

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean cross-entropy over the batch and its exact gradient. When `freeze` is
// given, gradient entries at freeze=1 are zeroed after the computation.
inline LossGrad loss_and_grad(const Batch& batch, const ParamVector& params, const TokenModelConfig& config,
                              const BinaryMask* freeze = nullptr) {
  detail::require(batch.sample_count() > 0, "loss_and_grad: empty batch");
  if (freeze) detail::require_same_length(freeze->size(), params.size(), "loss_and_grad");
  const ForwardResult fwd = model_forward(batch, params, config);
  const ModelWeights w = ModelWeights::unpack(params, config);

  LossGrad out{0.0, ParamVector::zeros_like(params)};
  ParamVector& g = out.grad;
  auto g_embed = g.segment("embed");
  auto g_embed_w = g_embed.first(config.input_dim * config.d_model);
  auto g_embed_b = g_embed.subspan(config.input_dim * config.d_model);
  auto g_global = g.segment("global_token");
  auto g_wq = g.segment("wq");
  auto g_wk = g.segment("wk");
  auto g_wv = g.segment("wv");
  auto g_proj = g.segment("proj");
  auto g_head = g.segment("head");
  auto g_head_w = g_head.first(config.d_model * config.n_classes);
  auto g_head_b = g_head.subspan(config.d_model * config.n_classes);

  const std::size_t t = config.tokens();
  const double inv_b = 1.0 / static_cast<double>(batch.sample_count());
  const double inv_t = 1.0 / static_cast<double>(t);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(config.d_attn));

  for (std::size_t n = 0; n < batch.sample_count(); ++n) {
    const SampleCache& sc = fwd.caches[n];
    const std::size_t y = batch.labels[n];

    // cross-entropy and d loss / d logits
    double mx = sc.logits[0];
    for (double v : sc.logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : sc.logits) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    out.loss += (lse - sc.logits[y]) * inv_b;

    std::vector<double> d_logits(config.n_classes);
    for (std::size_t k = 0; k < config.n_classes; ++k) {
      d_logits[k] = (std::exp(sc.logits[k] - lse) - (k == y ? 1.0 : 0.0)) * inv_b;
    }

    // head
    std::vector<double> d_pooled(config.d_model, 0.0);
    for (std::size_t j = 0; j < config.d_model; ++j) {
      for (std::size_t k = 0; k < config.n_classes; ++k) {
        g_head_w[j * config.n_classes + k] += sc.pooled[j] * d_logits[k];
        d_pooled[j] += w.head_w(j, k) * d_logits[k];
      }
    }
    for (std::size_t k = 0; k < config.n_classes; ++k) g_head_b[k] += d_logits[k];

    // mean pooling over token rows; the residual passes dY straight to dM
    Matrix d_y(t, config.d_model);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < config.d_model; ++j) d_y(i, j) = d_pooled[j] * inv_t;
    }
    Matrix d_m = d_y;

    // projection
    const Matrix& o = sc.attn.attn.output;
    detail::add_matmul_at_b(o, d_y, g_proj);
    const Matrix d_o = detail::matmul_a_bt(d_y, w.proj);

    // attention: O = A V
    const Matrix& a = sc.attn.attn.weights;
    const Matrix d_a = detail::matmul_a_bt(d_o, sc.attn.v);
    Matrix d_v(t, config.d_attn);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        for (std::size_t c = 0; c < config.d_attn; ++c) d_v(j, c) += a(i, j) * d_o(i, c);
      }
    }
    // softmax rows, then the 1/sqrt(d) scale; S is constant
    Matrix d_z(t, t);
    for (std::size_t i = 0; i < t; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < t; ++j) dot += d_a(i, j) * a(i, j);
      for (std::size_t j = 0; j < t; ++j) d_z(i, j) = a(i, j) * (d_a(i, j) - dot) * inv_scale;
    }
    const Matrix d_q = detail::matmul(d_z, sc.attn.k);
    Matrix d_k(t, config.d_attn);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        const double dz = d_z(i, j);
        if (dz == 0.0) continue;
        for (std::size_t c = 0; c < config.d_attn; ++c) d_k(j, c) += dz * sc.attn.q(i, c);
      }
    }

    detail::add_matmul_at_b(sc.m, d_q, g_wq);
    detail::add_matmul_at_b(sc.m, d_k, g_wk);
    detail::add_matmul_at_b(sc.m, d_v, g_wv);
    const Matrix dm_q = detail::matmul_a_bt(d_q, w.wq);
    const Matrix dm_k = detail::matmul_a_bt(d_k, w.wk);
    const Matrix dm_v = detail::matmul_a_bt(d_v, w.wv);
    for (std::size_t idx = 0; idx < d_m.data.size(); ++idx) {
      d_m.data[idx] += dm_q.data[idx] + dm_k.data[idx] + dm_v.data[idx];
    }

    // global token row, then the local-token embedding
    for (std::size_t j = 0; j < config.d_model; ++j) g_global[j] += d_m(0, j);
    const auto feats = batch.sample(n);
    for (std::size_t tok = 0; tok < config.phi; ++tok) {
      for (std::size_t j = 0; j < config.d_model; ++j) {
        const double de = d_m(tok + 1, j);
        g_embed_b[j] += de;
        for (std::size_t f = 0; f < config.input_dim; ++f) {
          g_embed_w[f * config.d_model + j] += feats[tok * config.input_dim + f] * de;
        }
      }
    }
  }

  if (!std::isfinite(out.loss)) throw NumericError("loss_and_grad: non-finite loss");
  if (freeze) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if ((*freeze)[j]) g[j] = 0.0;
    }
  }
  return out;
}

// params - lr * grad. lr = 0 leaves params bit-identical.
inline ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
  detail::require_same_length(params.size(), grad.size(), "sgd_step");
  detail::require(lr >= 0.0, "sgd_step: learning rate must be non-negative");
  ParamVector out = params;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = params[j] - lr * grad[j];
  return out;
}

}  // namespace fedcpf
