#pragma once

#include <tad/autodiff.hpp>
#include <tad/common.hpp>
#include <tad/corpus.hpp>
#include <tad/io.hpp>
#include <tad/mmd.hpp>
#include <tad/nn.hpp>
#include <tad/rng.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

// The conditional semi-supervised text GAN. The generator is an LSTM rolled
// out through a soft-argmax relaxation so gradients reach it through the
// discriminator; the discriminator is a multi-window CNN with max-over-time
// pooling, a tanh feature layer, a latent-reconstruction head and a
// (K+1)-way class head whose extra class marks generated text.

namespace tad {

enum class GanObjective { kSemisup, kTextgan };

inline GanObjective gan_objective_from_string(const std::string& s) {
  if (s == "semisup") return GanObjective::kSemisup;
  if (s == "textgan") return GanObjective::kTextgan;
  throw ConfigError("unknown objective: " + s);
}

inline std::string to_string(GanObjective o) {
  return o == GanObjective::kSemisup ? "semisup" : "textgan";
}

struct GanArch {
  int K = 2;
  int d_z = 100;
  int d_e = 100;
  int d_h = 300;
  std::vector<int> window_sizes = {3, 4, 5};
  int n_filters = 100;
  double temperature = 100.0;
  bool conditional = false;
  double lambda_r = 1.0;
  double lambda_m = 1.0;
  int max_len = 50;
  GanObjective objective = GanObjective::kSemisup;

  int feature_dim() const { return static_cast<int>(window_sizes.size()) * n_filters; }
  int max_window() const { return *std::max_element(window_sizes.begin(), window_sizes.end()); }
  int latent_input_dim() const { return d_z + (conditional ? K : 0); }

  void validate() const {
    if (K < 1) throw ConfigError("K must be >= 1");
    if (d_z < 1 || d_e < 1 || d_h < 1 || n_filters < 1) throw ConfigError("bad architecture width");
    if (window_sizes.empty()) throw ConfigError("window_sizes empty");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw ConfigError("temperature must be finite and positive");
    if (lambda_r < 0 || lambda_m < 0) throw ConfigError("lambda_r and lambda_m must be >= 0");
    if (max_len < max_window())
      throw ConfigError("max_len must be at least the largest window size");
  }

  Json to_json() const {
    Json j;
    j["K"] = K;
    j["d_z"] = d_z;
    j["d_e"] = d_e;
    j["d_h"] = d_h;
    j["window_sizes"] = window_sizes;
    j["n_filters"] = n_filters;
    j["temperature"] = temperature;
    j["conditional"] = conditional;
    j["lambda_r"] = lambda_r;
    j["lambda_m"] = lambda_m;
    j["max_len"] = max_len;
    j["objective"] = to_string(objective);
    return j;
  }

  static GanArch from_json(const Json& j) {
    GanArch a;
    a.K = j.at("K");
    a.d_z = j.at("d_z");
    a.d_e = j.at("d_e");
    a.d_h = j.at("d_h");
    a.window_sizes = j.at("window_sizes").get<std::vector<int>>();
    a.n_filters = j.at("n_filters");
    a.temperature = j.at("temperature");
    a.conditional = j.at("conditional");
    a.lambda_r = j.at("lambda_r");
    a.lambda_m = j.at("lambda_m");
    a.max_len = j.at("max_len");
    a.objective = gan_objective_from_string(j.at("objective"));
    return a;
  }
};

// ---- models ----

struct GeneratorModel {
  GanArch arch;
  int vocab_size = 0;
  nn::ParamStore params;

  GeneratorModel() = default;
  GeneratorModel(const GanArch& a, int vocab, Rng& rng) : arch(a), vocab_size(vocab) {
    params.add("init_w", nn::glorot_uniform(a.latent_input_dim(), a.d_h, rng));
    params.add("init_b", Matrix::Zero(1, a.d_h));
    nn::add_lstm_params(params, "lstm", a.d_e, a.d_h, rng);
    nn::add_dense_params(params, "out", a.d_h, vocab, rng);
  }
};

struct DiscriminatorModel {
  GanArch arch;
  nn::ParamStore params;

  DiscriminatorModel() = default;
  DiscriminatorModel(const GanArch& a, Rng& rng) : arch(a) {
    for (int w : a.window_sizes)
      nn::add_dense_params(params, "conv" + std::to_string(w), w * a.d_e, a.n_filters, rng);
    nn::add_dense_params(params, "feat", a.feature_dim(), a.feature_dim(), rng);
    nn::add_dense_params(params, "rec", a.feature_dim(), a.d_z, rng);
    nn::add_dense_params(params, "cls", a.feature_dim(), a.K + 1, rng);
  }
};

// Fixed capture order; the softmax output must stay last (the inference
// pipeline reads the final element as the class distribution).
inline std::vector<std::pair<std::string, int>> capture_layer_spec(const GanArch& a) {
  std::vector<std::pair<std::string, int>> layers;
  for (int w : a.window_sizes) layers.emplace_back("conv_pool_w" + std::to_string(w), a.n_filters);
  layers.emplace_back("feature", a.feature_dim());
  layers.emplace_back("recon_head", a.d_z);
  layers.emplace_back("class_logits", a.K + 1);
  layers.emplace_back("softmax", a.K + 1);
  return layers;
}

// ---- forward graphs ----

struct DiscriminatorGraph {
  ad::Var feature;      // batch x feature_dim
  ad::Var class_logits; // batch x (K+1)
  ad::Var z_hat;        // batch x d_z
  // capture order per capture_layer_spec; populated when capture is set
  std::vector<std::pair<std::string, ad::Var>> layers;
};

// input is (batch * seq_len) x d_e in sample-major stacking.
inline DiscriminatorGraph discriminator_forward(ad::Tape& tape, const nn::BoundParams& d,
                                                const GanArch& arch, const ad::Var& input,
                                                int batch, int seq_len, bool capture) {
  using namespace ad;
  if (input.tape() != &tape) throw NumericError("discriminator_forward: input from another tape");
  if (input.rows() != static_cast<Eigen::Index>(batch) * seq_len || input.cols() != arch.d_e)
    throw NumericError("discriminator_forward: bad input shape");
  if (seq_len < arch.max_window())
    throw NumericError("discriminator_forward: sequence shorter than largest window");
  DiscriminatorGraph out;
  std::vector<Var> pools;
  for (int w : arch.window_sizes) {
    Var cols = im2col_segments(input, w, seq_len);
    Var act = relu(add_rowvec(matmul(cols, d["conv" + std::to_string(w) + "_w"]),
                              d["conv" + std::to_string(w) + "_b"]));
    Var pooled = max_segments(act, seq_len - w + 1);
    if (capture) out.layers.emplace_back("conv_pool_w" + std::to_string(w), pooled);
    pools.push_back(pooled);
  }
  Var concat = concat_cols(pools);
  out.feature = vtanh(nn::dense(concat, d, "feat"));
  if (capture) out.layers.emplace_back("feature", out.feature);
  out.z_hat = nn::dense(out.feature, d, "rec");
  if (capture) out.layers.emplace_back("recon_head", out.z_hat);
  out.class_logits = nn::dense(out.feature, d, "cls");
  if (capture) {
    out.layers.emplace_back("class_logits", out.class_logits);
    out.layers.emplace_back("softmax", softmax_rows(out.class_logits));
  }
  return out;
}

struct GeneratorRollout {
  ad::Var soft_sequence;  // (batch * max_len) x d_e, sample-major
  // batch x max_len argmax token ids (inspection only, no gradient path)
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> hard_tokens;
  std::vector<ad::Var> prob_steps;  // per-step soft-argmax coefficients, batch x |V|
};

// Autoregressive soft rollout: step t consumes the soft embedding emitted at
// step t-1. The first input is a zero embedding.
inline GeneratorRollout generator_rollout(ad::Tape& tape, const nn::BoundParams& g,
                                          const GanArch& arch, const Matrix& z, int max_len,
                                          const ad::Var& embedding) {
  using namespace ad;
  if (z.cols() != arch.latent_input_dim()) throw NumericError("generator_rollout: bad z width");
  const auto batch = static_cast<int>(z.rows());
  GeneratorRollout out;
  out.hard_tokens.resize(batch, max_len);
  nn::LstmState state{vtanh(add_rowvec(matmul(tape.constant(z), g["init_w"]), g["init_b"])),
                      tape.constant(Matrix::Zero(batch, arch.d_h))};
  Var x = tape.constant(Matrix::Zero(batch, arch.d_e));
  std::vector<Var> steps;
  steps.reserve(static_cast<size_t>(max_len));
  for (int t = 0; t < max_len; ++t) {
    state = lstm_step(x, state, g["lstm_w"], g["lstm_b"]);
    Var logits = nn::dense(state.h, g, "out");
    for (int i = 0; i < batch; ++i) {
      Eigen::Index best;
      logits.value().row(i).maxCoeff(&best);
      out.hard_tokens(i, t) = static_cast<int>(best);
    }
    Var probs = softmax_rows(scale(logits, arch.temperature));
    x = matmul(probs, embedding);  // soft-argmax: convex mix of embedding rows
    out.prob_steps.push_back(probs);
    steps.push_back(x);
  }
  out.soft_sequence = stack_timesteps(steps);
  return out;
}

// ---- public single-sample operations ----

// softmax(L * logits) . W_e: a convex combination of embedding rows.
inline Vector soft_argmax(const Vector& vocab_logits, double temperature, const EmbeddingMatrix& emb) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("soft_argmax: temperature must be finite and positive");
  if (!vocab_logits.allFinite()) throw NumericError("soft_argmax: non-finite logits");
  if (vocab_logits.size() != emb.w.rows()) throw ConfigError("soft_argmax: logits/vocab mismatch");
  ad::Tape tape;
  auto probs = ad::softmax_rows(tape.constant(temperature * vocab_logits.transpose()));
  return (probs.value() * emb.w).transpose();
}

struct GenerateResult {
  Matrix soft_sequence;          // one row per emitted step
  Matrix soft_coefficients;      // per-step mixing weights over the vocabulary
  std::vector<int> hard_tokens;  // argmax path, truncated at (and including) EOS
};

inline GenerateResult generate(GeneratorModel& model, const EmbeddingMatrix& emb, const Vector& z,
                               int max_len) {
  if (max_len < 1) throw ConfigError("generate: max_len must be >= 1");
  ad::Tape tape;
  auto bound = nn::bind(tape, model.params, false);
  auto emb_var = tape.constant(emb.w);
  auto roll = generator_rollout(tape, bound, model.arch, z.transpose(), max_len, emb_var);
  GenerateResult res;
  int T = max_len;
  for (int t = 0; t < max_len; ++t) {
    if (roll.hard_tokens(0, t) == Vocabulary::kEos) {
      T = t + 1;
      break;
    }
  }
  res.soft_sequence = roll.soft_sequence.value().topRows(T);
  res.soft_coefficients.resize(T, model.vocab_size);
  res.hard_tokens.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    res.soft_coefficients.row(t) = roll.prob_steps[static_cast<size_t>(t)].value().row(0);
    res.hard_tokens.push_back(roll.hard_tokens(0, t));
  }
  return res;
}

struct DiscriminatorOutput {
  Vector feature;
  Vector class_logits;  // K+1
  Vector z_hat;
  std::vector<std::pair<std::string, Vector>> layer_record;  // when captured
};

// Accepts any sequence length; shorter-than-window inputs are padded with
// zero rows internally.
inline DiscriminatorOutput discriminate(DiscriminatorModel& model, const Matrix& embedded_sequence,
                                        bool capture_stats) {
  const GanArch& arch = model.arch;
  if (embedded_sequence.cols() != arch.d_e)
    throw ConfigError("discriminate: embedding width mismatch");
  Matrix input = embedded_sequence;
  if (input.rows() < arch.max_window()) {
    Matrix padded = Matrix::Zero(arch.max_window(), arch.d_e);
    padded.topRows(input.rows()) = input;
    input = std::move(padded);
  }
  ad::Tape tape;
  auto bound = nn::bind(tape, model.params, false);
  auto graph = discriminator_forward(tape, bound, arch, tape.constant(input), 1,
                                     static_cast<int>(input.rows()), capture_stats);
  DiscriminatorOutput out;
  out.feature = graph.feature.value().row(0).transpose();
  out.class_logits = graph.class_logits.value().row(0).transpose();
  out.z_hat = graph.z_hat.value().row(0).transpose();
  for (const auto& [name, var] : graph.layers)
    out.layer_record.emplace_back(name, Vector(var.value().row(0).transpose()));
  return out;
}

// ---- losses ----

// Mean over the batch of ||z_hat_i - z_i||^2.
inline ad::Var loss_recon_graph(ad::Tape& tape, const ad::Var& z_hat, const ad::Var& z) {
  if (z_hat.tape() != &tape) throw NumericError("loss_recon: var from another tape");
  if (z_hat.rows() != z.rows() || z_hat.cols() != z.cols())
    throw ConfigError("loss_recon: dimension mismatch");
  auto d = ad::sub(z_hat, z);
  return ad::scale(ad::sum(ad::mul(d, d)), 1.0 / static_cast<double>(z.rows()));
}

inline double loss_recon(const Matrix& z, const Matrix& z_hat) {
  ad::Tape tape;
  return loss_recon_graph(tape, tape.constant(z_hat), tape.constant(z)).scalar();
}

// Eq.-style semi-supervised discriminator objective: the sum of
//   (a) mean log P(y | s) over labeled rows,
//   (b) mean log P(y <= K) over unlabeled rows,
//   (c) mean log P(K+1) over generated rows,
// all through log-sum-exp stabilised log-softmax.
inline ad::Var loss_dssl_graph(ad::Tape& tape, const ad::Var& labeled_logits,
                               const std::vector<int>& labels, const ad::Var& unlabeled_logits,
                               const ad::Var& fake_logits, int K) {
  using namespace ad;
  if (labeled_logits.tape() != &tape) throw NumericError("loss_dssl: var from another tape");
  if (labeled_logits.cols() != K + 1 || unlabeled_logits.cols() != K + 1 ||
      fake_logits.cols() != K + 1)
    throw ConfigError("loss_dssl: logits must have K+1 columns");
  if (static_cast<Eigen::Index>(labels.size()) != labeled_logits.rows())
    throw ConfigError("loss_dssl: label count mismatch");
  std::vector<int> cols;
  cols.reserve(labels.size());
  for (int y : labels) {
    if (y < 1 || y > K) throw ConfigError("loss_dssl: label out of range 1..K");
    cols.push_back(y - 1);
  }
  Var term_a = mean(gather_cols(log_softmax_rows(labeled_logits), cols));
  Var term_b = mean(logsumexp_rows(slice_cols(log_softmax_rows(unlabeled_logits), 0, K)));
  Var term_c = mean(slice_cols(log_softmax_rows(fake_logits), K, 1));
  return add(add(term_a, term_b), term_c);
}

inline double loss_dssl(const Matrix& labeled_logits, const std::vector<int>& labels,
                        const Matrix& unlabeled_logits, const Matrix& fake_logits, int K) {
  ad::Tape tape;
  return loss_dssl_graph(tape, tape.constant(labeled_logits), labels,
                         tape.constant(unlabeled_logits), tape.constant(fake_logits), K)
      .scalar();
}

// Standard GAN objective on probabilities, the TextGAN baseline composition.
inline double loss_gan_standard(const std::vector<double>& real_scores,
                                const std::vector<double>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) throw ConfigError("loss_gan_standard: empty batch");
  auto clamp = [](double p) { return std::min(1.0 - 1e-7, std::max(1e-7, p)); };
  double lr_acc = 0.0, lf_acc = 0.0;
  for (double p : real_scores) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("loss_gan_standard: score outside [0,1]");
    lr_acc += std::log(clamp(p));
  }
  for (double p : fake_scores) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("loss_gan_standard: score outside [0,1]");
    lf_acc += std::log(1.0 - clamp(p));
  }
  return lr_acc / static_cast<double>(real_scores.size()) +
         lf_acc / static_cast<double>(fake_scores.size());
}

// Graph form over (K+1)-way logits: D(s) = P(y <= K), 1 - D(fake) = P(K+1).
inline ad::Var loss_gan_standard_graph(ad::Tape& tape, const ad::Var& real_logits,
                                       const ad::Var& fake_logits, int K) {
  using namespace ad;
  if (real_logits.tape() != &tape) throw NumericError("loss_gan_standard: var from another tape");
  Var term_real = mean(logsumexp_rows(slice_cols(log_softmax_rows(real_logits), 0, K)));
  Var term_fake = mean(slice_cols(log_softmax_rows(fake_logits), K, 1));
  return add(term_real, term_fake);
}

struct GanLossBreakdown {
  double l_dssl = 0.0;  // or l_gan under the textgan objective
  double l_recon = 0.0;
  double l_mmd2 = 0.0;
  double l_d = 0.0;
  double l_g = 0.0;
  double lambda_r = 0.0;
  double lambda_m = 0.0;
};

inline double compose_discriminator_loss(double l_dssl, double l_recon, double l_mmd2,
                                         double lambda_r, double lambda_m) {
  return l_dssl - lambda_r * l_recon + lambda_m * l_mmd2;
}

inline double compose_generator_loss(double l_mmd2) { return l_mmd2; }

// ---- checkpointing ----

struct GanCheckpoint {
  GanArch arch;
  uint64_t seed = 0;
  int epoch = 0;
  Vocabulary vocab;
  EmbeddingMatrix embedding;
  GeneratorModel generator;
  DiscriminatorModel discriminator;
  std::vector<double> mmd_bandwidths;  // empty until frozen at first step
};

inline BinContainer gan_checkpoint_container(const GanCheckpoint& ckpt) {
  BinContainer c;
  c.kind = "gan_checkpoint";
  c.header["format_version"] = kFormatVersion;
  c.header["arch"] = ckpt.arch.to_json();
  c.header["seed"] = ckpt.seed;
  c.header["epoch"] = ckpt.epoch;
  c.header["vocab"] = ckpt.vocab.id_to_token;
  c.header["mmd_bandwidths"] = ckpt.mmd_bandwidths;
  c.blobs.emplace_back("embedding", ckpt.embedding.w);
  for (const auto& [name, p] : ckpt.generator.params.items()) c.blobs.emplace_back("g." + name, p.value);
  for (const auto& [name, p] : ckpt.discriminator.params.items())
    c.blobs.emplace_back("d." + name, p.value);
  return c;
}

inline std::string save_gan_checkpoint(const GanCheckpoint& ckpt, const std::string& path) {
  return save_container(gan_checkpoint_container(ckpt), path);
}

// Returns the checkpoint and its content id.
inline std::pair<GanCheckpoint, std::string> load_gan_checkpoint(const std::string& path) {
  auto [c, id] = load_container(path, "gan_checkpoint");
  GanCheckpoint ckpt;
  ckpt.arch = GanArch::from_json(c.header.at("arch"));
  ckpt.arch.validate();
  ckpt.seed = c.header.at("seed");
  ckpt.epoch = c.header.at("epoch");
  ckpt.mmd_bandwidths = c.header.at("mmd_bandwidths").get<std::vector<double>>();
  const auto tokens = c.header.at("vocab").get<std::vector<std::string>>();
  if (tokens.size() < 3 || tokens[0] != "<pad>" || tokens[1] != "<unk>" || tokens[2] != "</s>")
    throw ArtifactError("gan checkpoint vocabulary is missing special tokens: " + path);
  ckpt.vocab = Vocabulary();
  for (size_t i = 3; i < tokens.size(); ++i) ckpt.vocab.add(tokens[i]);
  ckpt.embedding.w = c.blob("embedding");
  if (ckpt.embedding.w.rows() != ckpt.vocab.size())
    throw ArtifactError("gan checkpoint embedding/vocab size mismatch: " + path);
  Rng dummy(0);
  ckpt.generator = GeneratorModel(ckpt.arch, ckpt.vocab.size(), dummy);
  ckpt.discriminator = DiscriminatorModel(ckpt.arch, dummy);
  auto restore = [&](nn::ParamStore& store, const std::string& prefix) {
    for (auto& [name, p] : store.items()) {
      const Matrix& m = c.blob(prefix + name);
      if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
        throw ArtifactError("gan checkpoint parameter shape mismatch for " + prefix + name);
      p.value = m;
    }
  };
  restore(ckpt.generator.params, "g.");
  restore(ckpt.discriminator.params, "d.");
  return {std::move(ckpt), id};
}

// ---- classification helpers ----

// Argmax over the K real classes (the K+1 synthetic class never competes at
// classification time).
inline int classify_logits(const Vector& class_logits, int K) {
  Eigen::Index best;
  class_logits.head(K).maxCoeff(&best);
  return static_cast<int>(best) + 1;
}

inline double labeled_accuracy(DiscriminatorModel& disc, const EmbeddingMatrix& emb,
                               const std::vector<Document>& docs, int batch_size, int max_len) {
  if (docs.empty()) throw ConfigError("labeled_accuracy: empty document set");
  long correct = 0, total = 0;
  BatchStream stream(docs, batch_size, max_len);
  while (auto batch = stream.next()) {
    ad::Tape t;
    auto bound = nn::bind(t, disc.params, false);
    auto graph = discriminator_forward(t, bound, disc.arch, t.constant(embed_batch(*batch, emb)),
                                       batch->size(), max_len, false);
    for (int i = 0; i < batch->size(); ++i) {
      if (batch->labels[static_cast<size_t>(i)] == 0) continue;
      const Vector logits = graph.class_logits.value().row(i).transpose();
      correct += classify_logits(logits, disc.arch.K) == batch->labels[static_cast<size_t>(i)];
      ++total;
    }
  }
  if (total == 0) throw ConfigError("labeled_accuracy: no labeled documents");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace tad
