#pragma once

#include <tad/autodiff.hpp>
#include <tad/common.hpp>
#include <tad/io.hpp>
#include <tad/nn.hpp>
#include <tad/rng.hpp>
#include <tad/stats.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

// LSTM autoencoder over layer-statistic sequences. One timestep per layer:
// the encoder's final hidden state is the bottleneck, repeated as the decoder
// input at every step; a dense head maps decoder states back to d_stat.
// Training and threshold calibration consume baseline data only.

namespace tad {

enum class AeActivation { kTanh, kRelu };

inline AeActivation ae_activation_from_string(const std::string& s) {
  if (s == "tanh") return AeActivation::kTanh;
  if (s == "relu") return AeActivation::kRelu;
  throw ConfigError("unknown autoencoder activation: " + s);
}

inline std::string to_string(AeActivation a) { return a == AeActivation::kTanh ? "tanh" : "relu"; }

struct AutoencoderModel {
  int d_stat = 0;
  int d_ae = 64;
  int n_layers = 0;  // timesteps per sequence
  AeActivation activation = AeActivation::kTanh;
  std::string scaler_id;
  std::string gan_checkpoint_id;
  uint64_t seed = 0;
  int epochs_run = 0;
  nn::ParamStore params;

  AutoencoderModel() = default;
  AutoencoderModel(int d_stat_, int d_ae_, int n_layers_, AeActivation act, Rng& rng)
      : d_stat(d_stat_), d_ae(d_ae_), n_layers(n_layers_), activation(act) {
    nn::add_lstm_params(params, "enc", d_stat, d_ae, rng);
    nn::add_lstm_params(params, "dec", d_ae, d_ae, rng);
    nn::add_dense_params(params, "out", d_ae, d_stat, rng);
  }
};

// step_inputs[l] is batch x d_stat. Returns the reconstruction stacked
// sample-major: row i * n_layers + l is sample i, layer l.
inline ad::Var autoencoder_forward(ad::Tape& tape, const nn::BoundParams& p,
                                   const AutoencoderModel& model,
                                   const std::vector<Matrix>& step_inputs) {
  using namespace ad;
  if (step_inputs.empty()) throw NumericError("autoencoder_forward: no steps");
  const auto batch = static_cast<Eigen::Index>(step_inputs.front().rows());
  nn::LstmState enc = nn::lstm_zero_state(tape, batch, model.d_ae);
  for (const Matrix& x : step_inputs)
    enc = nn::lstm_step(tape.constant(x), enc, p["enc_w"], p["enc_b"]);
  const Var bottleneck = enc.h;
  nn::LstmState dec = nn::lstm_zero_state(tape, batch, model.d_ae);
  std::vector<Var> outputs;
  outputs.reserve(step_inputs.size());
  for (size_t l = 0; l < step_inputs.size(); ++l) {
    dec = nn::lstm_step(bottleneck, dec, p["dec_w"], p["dec_b"]);
    Var h = model.activation == AeActivation::kTanh ? vtanh(dec.h) : relu(dec.h);
    outputs.push_back(nn::dense(h, p, "out"));
  }
  return stack_timesteps(outputs);
}

// Masked mean squared error over a stacked batch; total_unmasked is the sum
// of mask entries.
inline ad::Var masked_mse_graph(ad::Tape& tape, const ad::Var& reconstruction, const Matrix& target,
                                const Matrix& mask) {
  using namespace ad;
  const double total = mask.sum();
  if (total <= 0.0) throw ConfigError("masked mse: all positions masked out");
  Var diff = mul(sub(reconstruction, tape.constant(target)), tape.constant(mask));
  return scale(sum(mul(diff, diff)), 1.0 / total);
}

// Mean squared error over unmasked positions only.
inline double reconstruction_error(const LayerStatSequence& input, const Matrix& reconstruction) {
  if (reconstruction.rows() != input.padded.rows() || reconstruction.cols() != input.padded.cols())
    throw ConfigError("reconstruction_error: shape mismatch");
  const double total = input.mask.sum();
  if (total <= 0.0) throw ConfigError("reconstruction_error: all positions masked out");
  const Matrix diff = (reconstruction - input.padded).cwiseProduct(input.mask);
  return diff.squaredNorm() / total;
}

namespace ood_detail {

// Masked positions are forced to zero at intake so out-of-mask values can
// never influence the encoding.
inline std::vector<Matrix> batch_steps(const std::vector<const LayerStatSequence*>& seqs) {
  const auto L = seqs.front()->padded.rows();
  const auto d = seqs.front()->padded.cols();
  std::vector<Matrix> steps(static_cast<size_t>(L), Matrix(static_cast<Eigen::Index>(seqs.size()), d));
  for (size_t i = 0; i < seqs.size(); ++i)
    for (Eigen::Index l = 0; l < L; ++l)
      steps[static_cast<size_t>(l)].row(static_cast<Eigen::Index>(i)) =
          seqs[i]->padded.row(l).cwiseProduct(seqs[i]->mask.row(l));
  return steps;
}

inline std::pair<Matrix, Matrix> stacked_target_and_mask(
    const std::vector<const LayerStatSequence*>& seqs) {
  const auto L = seqs.front()->padded.rows();
  const auto d = seqs.front()->padded.cols();
  Matrix target(static_cast<Eigen::Index>(seqs.size()) * L, d);
  Matrix mask(static_cast<Eigen::Index>(seqs.size()) * L, d);
  for (size_t i = 0; i < seqs.size(); ++i) {
    target.middleRows(static_cast<Eigen::Index>(i) * L, L) = seqs[i]->padded;
    mask.middleRows(static_cast<Eigen::Index>(i) * L, L) = seqs[i]->mask;
  }
  return {target, mask};
}

}  // namespace ood_detail

inline Matrix reconstruct(AutoencoderModel& model, const LayerStatSequence& seq) {
  if (seq.padded.cols() != model.d_stat || seq.padded.rows() != model.n_layers)
    throw ConfigError("reconstruct: sequence shape does not match model");
  ad::Tape tape;
  auto bound = nn::bind(tape, model.params, false);
  auto recon = autoencoder_forward(tape, bound, model, ood_detail::batch_steps({&seq}));
  return recon.value();
}

// Reconstruction error of the model on one scaled sequence.
inline double score(AutoencoderModel& model, const LayerStatSequence& seq) {
  return reconstruction_error(seq, reconstruct(model, seq));
}

inline std::vector<double> score_dataset(AutoencoderModel& model, const StatsDataset& ds,
                                         int batch_size = 64) {
  if (!model.scaler_id.empty() && ds.manifest.scaler_id != model.scaler_id)
    throw ArtifactError("score_dataset: dataset scaled with a different scaler than the model");
  ds.check_shapes();
  std::vector<double> out;
  out.reserve(ds.sequences.size());
  for (size_t start = 0; start < ds.sequences.size(); start += static_cast<size_t>(batch_size)) {
    const size_t count = std::min(static_cast<size_t>(batch_size), ds.sequences.size() - start);
    std::vector<const LayerStatSequence*> ptrs;
    for (size_t i = 0; i < count; ++i) ptrs.push_back(&ds.sequences[start + i]);
    ad::Tape tape;
    auto bound = nn::bind(tape, model.params, false);
    auto recon = autoencoder_forward(tape, bound, model, ood_detail::batch_steps(ptrs));
    const auto L = static_cast<Eigen::Index>(model.n_layers);
    for (size_t i = 0; i < count; ++i) {
      LayerStatSequence tmp = *ptrs[i];
      out.push_back(reconstruction_error(
          tmp, recon.value().middleRows(static_cast<Eigen::Index>(i) * L, L)));
    }
  }
  return out;
}

struct AeTrainConfig {
  int d_ae = 64;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int patience = 10;
  AeActivation activation = AeActivation::kTanh;
  double clip_norm = 5.0;
  uint64_t seed = 42;
};

struct AeLossCurvePoint {
  int epoch;
  double train_loss;
  double val_loss;
};

struct AeTrainResult {
  AutoencoderModel model;
  std::vector<AeLossCurvePoint> curve;
  int best_epoch = 0;
};

// Minimizes masked MSE on the training split with early stopping on the
// validation split; both must be scaled baseline data from the same chain.
inline AeTrainResult train_autoencoder(const StatsDataset& train, const StatsDataset& val,
                                       const AeTrainConfig& cfg) {
  if (train.sequences.empty() || val.sequences.empty())
    throw ConfigError("train_autoencoder: empty dataset");
  require_baseline_only(train, "train_autoencoder");
  require_baseline_only(val, "train_autoencoder");
  train.check_shapes();
  val.check_shapes();
  if (train.manifest.scaler_id.empty())
    throw ArtifactError("train_autoencoder: dataset is not scaled");
  if (train.manifest.scaler_id != val.manifest.scaler_id ||
      train.manifest.gan_checkpoint_id != val.manifest.gan_checkpoint_id)
    throw ArtifactError("train_autoencoder: train/validation come from different chains");

  const int L = static_cast<int>(train.manifest.layers.size());
  Rng init_rng = Rng(cfg.seed).fork(0xae01);
  AeTrainResult result;
  result.model = AutoencoderModel(train.manifest.d_stat, cfg.d_ae, L, cfg.activation, init_rng);
  result.model.scaler_id = train.manifest.scaler_id;
  result.model.gan_checkpoint_id = train.manifest.gan_checkpoint_id;
  result.model.seed = cfg.seed;
  AutoencoderModel& model = result.model;

  auto eval_loss = [&](const StatsDataset& ds) {
    double acc = 0.0;
    const auto scores = score_dataset(model, ds);
    for (double s : scores) acc += s;
    return acc / static_cast<double>(scores.size());
  };

  Rng shuffle_rng = Rng(cfg.seed).fork(0xae02);
  std::vector<Matrix> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_best = 0;
  long updates = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order(train.sequences.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    double train_acc = 0.0;
    long n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t count = std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
      std::vector<const LayerStatSequence*> ptrs;
      for (size_t i = 0; i < count; ++i) ptrs.push_back(&train.sequences[order[start + i]]);
      ad::Tape tape;
      auto bound = nn::bind(tape, model.params, true);
      auto recon = autoencoder_forward(tape, bound, model, ood_detail::batch_steps(ptrs));
      auto [target, mask] = ood_detail::stacked_target_and_mask(ptrs);
      auto loss = masked_mse_graph(tape, recon, target, mask);
      const double value = loss.scalar();
      if (!std::isfinite(value)) throw NumericError("non-finite autoencoder loss");
      tape.backward(loss);
      nn::AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.clip_norm};
      nn::adam_step(bound, adam, ++updates);
      train_acc += value;
      ++n_batches;
    }
    const double val_loss = eval_loss(val);
    result.curve.push_back({epoch, train_acc / static_cast<double>(n_batches), val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      since_best = 0;
      best_params.clear();
      for (const auto& [name, p] : model.params.items()) best_params.push_back(p.value);
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (!best_params.empty()) {
    size_t i = 0;
    for (auto& [name, p] : model.params.items()) p.value = best_params[i++];
  }
  model.epochs_run = static_cast<int>(result.curve.size());
  result.best_epoch = best_epoch;
  return result;
}

struct ReconstructionReport {
  std::string sample_id;
  double error = 0.0;
  bool is_above_threshold = false;
};

inline std::vector<ReconstructionReport> reconstruction_reports(
    const std::vector<std::string>& sample_ids, const std::vector<double>& errors, double tau) {
  if (sample_ids.size() != errors.size())
    throw ConfigError("reconstruction_reports: id/error count mismatch");
  std::vector<ReconstructionReport> out;
  out.reserve(errors.size());
  for (size_t i = 0; i < errors.size(); ++i)
    out.push_back({sample_ids[i], errors[i], errors[i] > tau});
  return out;
}

// ---- threshold calibration ----

struct CalibratedThreshold {
  double tau = 0.0;
  double q = 0.95;
  long calibration_set_size = 0;
  std::string scaler_id;
  std::string ae_checkpoint_id;
};

// Empirical q-quantile with linear interpolation between order statistics.
inline double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("empirical_quantile: empty sample");
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("empirical_quantile: q must be in (0,1)");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - std::floor(h);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline CalibratedThreshold calibrate_threshold(const std::vector<double>& validation_errors,
                                               double q = 0.95) {
  CalibratedThreshold th;
  th.tau = empirical_quantile(validation_errors, q);
  th.q = q;
  th.calibration_set_size = static_cast<long>(validation_errors.size());
  return th;
}

inline Json threshold_json(const CalibratedThreshold& th) {
  Json j;
  j["tau"] = th.tau;
  j["q"] = th.q;
  j["n"] = th.calibration_set_size;
  j["scaler_id"] = th.scaler_id;
  j["ae_checkpoint_id"] = th.ae_checkpoint_id;
  return j;
}

inline CalibratedThreshold threshold_from_json(const Json& j) {
  CalibratedThreshold th;
  th.tau = j.at("tau");
  th.q = j.at("q");
  th.calibration_set_size = j.at("n");
  th.scaler_id = j.at("scaler_id");
  th.ae_checkpoint_id = j.at("ae_checkpoint_id");
  return th;
}

// ---- checkpointing ----

inline BinContainer ae_checkpoint_container(const AutoencoderModel& model) {
  BinContainer c;
  c.kind = "ae_checkpoint";
  c.header["format_version"] = kFormatVersion;
  c.header["d_stat"] = model.d_stat;
  c.header["d_ae"] = model.d_ae;
  c.header["n_layers"] = model.n_layers;
  c.header["activation"] = to_string(model.activation);
  c.header["scaler_id"] = model.scaler_id;
  c.header["gan_checkpoint_id"] = model.gan_checkpoint_id;
  c.header["seed"] = model.seed;
  c.header["epochs_run"] = model.epochs_run;
  for (const auto& [name, p] : model.params.items()) c.blobs.emplace_back(name, p.value);
  return c;
}

inline std::string save_ae_checkpoint(const AutoencoderModel& model, const std::string& path) {
  return save_container(ae_checkpoint_container(model), path);
}

inline std::pair<AutoencoderModel, std::string> load_ae_checkpoint(const std::string& path) {
  auto [c, id] = load_container(path, "ae_checkpoint");
  Rng dummy(0);
  AutoencoderModel model(c.header.at("d_stat"), c.header.at("d_ae"), c.header.at("n_layers"),
                         ae_activation_from_string(c.header.at("activation")), dummy);
  model.scaler_id = c.header.at("scaler_id");
  model.gan_checkpoint_id = c.header.at("gan_checkpoint_id");
  model.seed = c.header.at("seed");
  model.epochs_run = c.header.at("epochs_run");
  for (auto& [name, p] : model.params.items()) {
    const Matrix& m = c.blob(name);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw ArtifactError("ae checkpoint parameter shape mismatch for " + name);
    p.value = m;
  }
  return {std::move(model), id};
}

}  // namespace tad
