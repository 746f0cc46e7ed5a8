#pragma once

// Experiment configuration files and run output formats.
//
// Config files are JSON objects. Only `method` is required; every other key
// falls back to its default, and unknown keys are rejected. See
// the README for the schema.
//
// Run outputs:
//   history.jsonl         one JSON object per round
//   summary.csv           one row per round, client means
//   resolved_config.json  the config with every default filled in

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedcpf/errors.hpp"
#include "fedcpf/federation.hpp"

namespace fedcpf {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown(const json& obj, std::string_view prefix, std::initializer_list<std::string_view> known) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string(prefix) + key, "unknown key");
  }
}

inline const json& object_at(const json& parent, const char* key, const std::string& field) {
  const json& v = parent.at(key);
  if (!v.is_object()) throw ConfigError(field, "expected an object");
  return v;
}

inline void read_real(const json& obj, const char* key, const std::string& field, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  out = v.get<double>();
}

template <typename U>
inline void read_count(const json& obj, const char* key, const std::string& field, U& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(field, "expected a non-negative integer");
  }
  out = static_cast<U>(v.get<unsigned long long>());
}

inline void read_bool(const json& obj, const char* key, const std::string& field, bool& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(field, "expected true or false");
  out = v.get<bool>();
}

inline std::string read_string(const json& obj, const char* key, const std::string& field) {
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(field, "expected a string");
  return v.get<std::string>();
}

inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view freeze_mode_name(FreezeMode m) {
  return m == FreezeMode::hard_freeze ? "hard-freeze" : "aggregation-freeze";
}

inline std::string_view skew_mode_name(SkewMode m) {
  return m == SkewMode::feature_shift ? "feature_shift" : "label_skew";
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  reject_unknown(j, "", {"method", "n_clients", "rounds", "seed", "output_dir", "hyper", "model", "data", "baseline"});

  ExperimentConfig c;
  if (!j.contains("method")) throw ConfigError("method", "missing required field");
  const std::string method = read_string(j, "method", "method");
  const auto m = parse_method(method);
  if (!m) throw ConfigError("method", "unknown method '" + method + "'");
  c.method = *m;

  read_count(j, "n_clients", "n_clients", c.n_clients);
  read_count(j, "rounds", "rounds", c.rounds);
  read_count(j, "seed", "seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = read_string(j, "output_dir", "output_dir");

  if (j.contains("hyper")) {
    const json& h = object_at(j, "hyper", "hyper");
    reject_unknown(h, "hyper.", {"p", "rho", "acc", "local_epochs", "lr", "batch_size", "freeze_mode"});
    read_real(h, "p", "hyper.p", c.hyper.p);
    read_real(h, "rho", "hyper.rho", c.hyper.rho);
    read_real(h, "acc", "hyper.acc", c.hyper.acc);
    read_count(h, "local_epochs", "hyper.local_epochs", c.hyper.local_epochs);
    read_real(h, "lr", "hyper.lr", c.hyper.lr);
    read_count(h, "batch_size", "hyper.batch_size", c.hyper.batch_size);
    if (h.contains("freeze_mode")) {
      const std::string fm = read_string(h, "freeze_mode", "hyper.freeze_mode");
      if (fm == "aggregation-freeze") {
        c.hyper.freeze_mode = FreezeMode::aggregation_freeze;
      } else if (fm == "hard-freeze") {
        c.hyper.freeze_mode = FreezeMode::hard_freeze;
      } else {
        throw ConfigError("hyper.freeze_mode", "expected 'aggregation-freeze' or 'hard-freeze'");
      }
    }
  }

  if (j.contains("model")) {
    const json& mo = object_at(j, "model", "model");
    reject_unknown(mo, "model.", {"phi", "d_model", "d_attn", "n_classes", "lambda", "input_dim"});
    read_count(mo, "phi", "model.phi", c.model.phi);
    read_count(mo, "d_model", "model.d_model", c.model.d_model);
    read_count(mo, "d_attn", "model.d_attn", c.model.d_attn);
    read_count(mo, "n_classes", "model.n_classes", c.model.n_classes);
    read_real(mo, "lambda", "model.lambda", c.model.lambda_suppress);
    read_count(mo, "input_dim", "model.input_dim", c.model.input_dim);
  }

  if (j.contains("data")) {
    const json& d = object_at(j, "data", "data");
    reject_unknown(d, "data.", {"mode", "alpha", "rotation_step", "samples_per_client", "noise_sigma"});
    if (d.contains("mode")) {
      const std::string mode = read_string(d, "mode", "data.mode");
      if (mode == "label_skew") {
        c.data.mode = SkewMode::label_skew;
      } else if (mode == "feature_shift") {
        c.data.mode = SkewMode::feature_shift;
      } else {
        throw ConfigError("data.mode", "expected 'label_skew' or 'feature_shift'");
      }
    }
    read_real(d, "alpha", "data.alpha", c.data.alpha);
    read_real(d, "rotation_step", "data.rotation_step", c.data.rotation_step);
    read_count(d, "samples_per_client", "data.samples_per_client", c.data.samples_per_client);
    read_real(d, "noise_sigma", "data.noise_sigma", c.data.noise_sigma);
  }

  if (j.contains("baseline")) {
    const json& b = object_at(j, "baseline", "baseline");
    reject_unknown(b, "baseline.", {"mu", "fedavg_weighted", "freeze_seed"});
    read_real(b, "mu", "baseline.mu", c.baseline.mu);
    read_bool(b, "fedavg_weighted", "baseline.fedavg_weighted", c.baseline.fedavg_weighted);
    read_count(b, "freeze_seed", "baseline.freeze_seed", c.baseline.freeze_seed);
  }

  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--config", "cannot read '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["method"] = std::string(method_name(c.method));
  j["n_clients"] = c.n_clients;
  j["rounds"] = c.rounds;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["hyper"] = {{"p", c.hyper.p},
                {"rho", c.hyper.rho},
                {"acc", c.hyper.acc},
                {"local_epochs", c.hyper.local_epochs},
                {"lr", c.hyper.lr},
                {"batch_size", c.hyper.batch_size},
                {"freeze_mode", std::string(detail::freeze_mode_name(c.hyper.freeze_mode))}};
  j["model"] = {{"phi", c.model.phi},
                {"d_model", c.model.d_model},
                {"d_attn", c.model.d_attn},
                {"n_classes", c.model.n_classes},
                {"lambda", c.model.lambda_suppress},
                {"input_dim", c.model.input_dim}};
  j["data"] = {{"mode", std::string(detail::skew_mode_name(c.data.mode))},
               {"alpha", c.data.alpha},
               {"rotation_step", c.data.rotation_step},
               {"samples_per_client", c.data.samples_per_client},
               {"noise_sigma", c.data.noise_sigma}};
  j["baseline"] = {{"mu", c.baseline.mu},
                   {"fedavg_weighted", c.baseline.fedavg_weighted},
                   {"freeze_seed", c.baseline.freeze_seed}};
  return j;
}

// {"round":R,"seed":S,"clients":[{...}, ...]} with reals at 17 significant digits.
inline std::string history_line(const RoundRecord& r) {
  using detail::fmt_real;
  std::ostringstream os;
  os << "{\"round\":" << r.round << ",\"seed\":" << r.seed << ",\"clients\":[";
  for (std::size_t i = 0; i < r.clients.size(); ++i) {
    const auto& c = r.clients[i];
    os << (i ? "," : "") << "{\"id\":" << c.id << ",\"train_accuracy\":" << fmt_real(c.train_accuracy)
       << ",\"test_accuracy\":" << fmt_real(c.test_accuracy) << ",\"macro_precision\":" << fmt_real(c.macro_precision)
       << ",\"macro_recall\":" << fmt_real(c.macro_recall) << ",\"macro_f1\":" << fmt_real(c.macro_f1)
       << ",\"personalization_fraction\":" << fmt_real(c.personalization_fraction)
       << ",\"newly_frozen\":" << c.newly_frozen << ",\"window_k\":" << c.window_k
       << ",\"window_r_th\":" << c.window_r_th << "}";
  }
  os << "]}";
  return os.str();
}

inline constexpr const char* kSummaryHeader =
    "round,mean_train_accuracy,mean_test_accuracy,mean_macro_precision,mean_macro_recall,mean_macro_f1,"
    "mean_personalization_fraction";

struct ClientMeans {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double personalization_fraction = 0.0;
};

inline ClientMeans client_means(const RoundRecord& r) {
  ClientMeans m;
  if (r.clients.empty()) return m;
  for (const auto& c : r.clients) {
    m.train_accuracy += c.train_accuracy;
    m.test_accuracy += c.test_accuracy;
    m.macro_precision += c.macro_precision;
    m.macro_recall += c.macro_recall;
    m.macro_f1 += c.macro_f1;
    m.personalization_fraction += c.personalization_fraction;
  }
  const double n = static_cast<double>(r.clients.size());
  m.train_accuracy /= n;
  m.test_accuracy /= n;
  m.macro_precision /= n;
  m.macro_recall /= n;
  m.macro_f1 /= n;
  m.personalization_fraction /= n;
  return m;
}

inline std::string summary_row(const RoundRecord& r) {
  using detail::fmt_real;
  const ClientMeans m = client_means(r);
  std::ostringstream os;
  os << r.round << "," << fmt_real(m.train_accuracy) << "," << fmt_real(m.test_accuracy) << ","
     << fmt_real(m.macro_precision) << "," << fmt_real(m.macro_recall) << "," << fmt_real(m.macro_f1) << ","
     << fmt_real(m.personalization_fraction);
  return os.str();
}

}  // namespace fedcpf
