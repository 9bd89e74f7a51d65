#pragma once

#include <tad/common.hpp>
#include <tad/corpus.hpp>
#include <tad/gan.hpp>
#include <tad/gan_train.hpp>
#include <tad/io.hpp>
#include <tad/ood.hpp>

#include <array>
#include <set>
#include <string>
#include <vector>

namespace tad {

// Flat JSON config shared by every stage. Unknown keys are rejected so typos
// fail loudly instead of silently falling back to defaults.
struct Config {
  // architecture / gan objective
  int K = 2;
  int d_z = 100;
  int d_e = 100;
  int d_h = 300;
  std::vector<int> window_sizes = {3, 4, 5};
  int n_filters = 100;
  double lambda_r = 1.0;
  double lambda_m = 1.0;
  double temperature = 100.0;
  bool conditional = false;
  std::string objective = "semisup";
  // gan training
  int epochs = 10;
  int batch_size = 32;
  int n_d = 1;
  double learning_rate = 1e-4;
  double clip_norm = 5.0;
  uint64_t seed = 42;
  // corpus
  std::string corpus_path;
  std::string corpus_format = "labeled-tsv";
  std::string embedding_path;  // empty -> seeded random initialization
  std::array<double, 3> ratios = {0.6, 0.2, 0.2};
  double labeled_fraction = 0.1;
  int max_len = 50;
  int min_freq = 1;
  int max_vocab = 50000;
  // stats
  double stats_val_fraction = 0.2;
  // autoencoder / threshold
  int ae_hidden = 64;
  int ae_epochs = 100;
  double ae_learning_rate = 1e-3;
  int ae_batch_size = 32;
  int ae_patience = 10;
  std::string ae_activation = "tanh";
  double quantile = 0.95;
  // evaluation
  std::string eval_baseline_path;  // empty -> corpus test split
  std::string eval_novel_path;
  bool eval_plots = false;
  int histogram_bins = 30;
  // output
  std::string out_dir = "out";

  GanArch gan_arch() const {
    GanArch a;
    a.K = K;
    a.d_z = d_z;
    a.d_e = d_e;
    a.d_h = d_h;
    a.window_sizes = window_sizes;
    a.n_filters = n_filters;
    a.temperature = temperature;
    a.conditional = conditional;
    a.lambda_r = lambda_r;
    a.lambda_m = lambda_m;
    a.max_len = max_len;
    a.objective = gan_objective_from_string(objective);
    a.validate();
    return a;
  }

  GanTrainConfig gan_train_config() const {
    GanTrainConfig c;
    c.arch = gan_arch();
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.n_d = n_d;
    c.learning_rate = learning_rate;
    c.clip_norm = clip_norm;
    c.seed = seed;
    return c;
  }

  AeTrainConfig ae_train_config() const {
    AeTrainConfig c;
    c.d_ae = ae_hidden;
    c.epochs = ae_epochs;
    c.batch_size = ae_batch_size;
    c.learning_rate = ae_learning_rate;
    c.patience = ae_patience;
    c.activation = ae_activation_from_string(ae_activation);
    c.clip_norm = clip_norm;
    c.seed = seed;
    return c;
  }

  void validate() const {
    gan_arch();
    ae_train_config();
    corpus_format_from_string(corpus_format);
    if (epochs < 0 || ae_epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1 || ae_batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (n_d < 1) throw ConfigError("n_d must be >= 1");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
      throw ConfigError("labeled_fraction must be in (0, 1]");
    if (!(stats_val_fraction > 0.0 && stats_val_fraction < 1.0))
      throw ConfigError("stats_val_fraction must be in (0, 1)");
    if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("quantile must be in (0, 1)");
    if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
    if (max_vocab < 1) throw ConfigError("max_vocab must be >= 1");
    if (histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
    if (out_dir.empty()) throw ConfigError("out_dir must be set");
  }
};

inline Config config_from_json(const Json& j) {
  Config c;
  static const std::set<std::string> known = {
      "K", "d_z", "d_e", "d_h", "window_sizes", "n_filters", "lambda_r", "lambda_m",
      "temperature", "conditional", "objective", "epochs", "batch_size", "n_d",
      "learning_rate", "clip_norm", "seed", "corpus_path", "corpus_format", "embedding_path",
      "ratios", "labeled_fraction", "max_len", "min_freq", "max_vocab", "stats_val_fraction",
      "ae_hidden", "ae_epochs", "ae_learning_rate", "ae_batch_size", "ae_patience",
      "ae_activation", "quantile", "eval_baseline_path", "eval_novel_path", "eval_plots",
      "histogram_bins", "out_dir"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key: " + key);
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
  };
  get("K", c.K);
  get("d_z", c.d_z);
  get("d_e", c.d_e);
  get("d_h", c.d_h);
  get("window_sizes", c.window_sizes);
  get("n_filters", c.n_filters);
  get("lambda_r", c.lambda_r);
  get("lambda_m", c.lambda_m);
  get("temperature", c.temperature);
  get("conditional", c.conditional);
  get("objective", c.objective);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("n_d", c.n_d);
  get("learning_rate", c.learning_rate);
  get("clip_norm", c.clip_norm);
  get("seed", c.seed);
  get("corpus_path", c.corpus_path);
  get("corpus_format", c.corpus_format);
  get("embedding_path", c.embedding_path);
  if (j.contains("ratios")) {
    const auto r = j.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw ConfigError("ratios must have exactly 3 entries");
    c.ratios = {r[0], r[1], r[2]};
  }
  get("labeled_fraction", c.labeled_fraction);
  get("max_len", c.max_len);
  get("min_freq", c.min_freq);
  get("max_vocab", c.max_vocab);
  get("stats_val_fraction", c.stats_val_fraction);
  get("ae_hidden", c.ae_hidden);
  get("ae_epochs", c.ae_epochs);
  get("ae_learning_rate", c.ae_learning_rate);
  get("ae_batch_size", c.ae_batch_size);
  get("ae_patience", c.ae_patience);
  get("ae_activation", c.ae_activation);
  get("quantile", c.quantile);
  get("eval_baseline_path", c.eval_baseline_path);
  get("eval_novel_path", c.eval_novel_path);
  get("eval_plots", c.eval_plots);
  get("histogram_bins", c.histogram_bins);
  get("out_dir", c.out_dir);
  c.validate();
  return c;
}

inline Config load_config(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("config file not found: " + path);
  try {
    return config_from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  }
}

}  // namespace tad
