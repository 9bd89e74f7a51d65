#pragma once

#include <tad/config.hpp>
#include <tad/corpus.hpp>
#include <tad/eval.hpp>
#include <tad/gan.hpp>
#include <tad/gan_train.hpp>
#include <tad/io.hpp>
#include <tad/ood.hpp>
#include <tad/stats.hpp>

#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

// End-to-end orchestration: train-gan -> extract-stats -> train-ae ->
// calibrate -> detect / evaluate. Every stage persists artifacts under
// out_dir and validates the id chain of everything it consumes, so a
// mismatched artifact pair fails before any scoring happens.

namespace tad {

enum class Stage { kTrainGan, kExtractStats, kTrainAe, kCalibrate, kDetect, kEvaluate };

inline Stage stage_from_string(const std::string& s) {
  if (s == "train-gan") return Stage::kTrainGan;
  if (s == "extract-stats") return Stage::kExtractStats;
  if (s == "train-ae") return Stage::kTrainAe;
  if (s == "calibrate") return Stage::kCalibrate;
  if (s == "detect") return Stage::kDetect;
  if (s == "evaluate") return Stage::kEvaluate;
  throw ConfigError("unknown stage: " + s);
}

struct ArtifactPaths {
  std::string out_dir;
  std::string split() const { return out_dir + "/split.json"; }
  std::string gan_checkpoint() const { return out_dir + "/gan.ckpt"; }
  std::string gan_loss() const { return out_dir + "/gan_loss.csv"; }
  std::string stats_train() const { return out_dir + "/stats_train.bin"; }
  std::string stats_val() const { return out_dir + "/stats_val.bin"; }
  std::string scaler() const { return out_dir + "/scaler.bin"; }
  std::string ae_checkpoint() const { return out_dir + "/ae.ckpt"; }
  std::string ae_loss() const { return out_dir + "/ae_loss.csv"; }
  std::string threshold() const { return out_dir + "/threshold.json"; }
  std::string manifest() const { return out_dir + "/manifest.json"; }
  std::string report_dir() const { return out_dir + "/report"; }
};

inline void require_artifact(const std::string& path, const std::string& what,
                             const std::string& producing_stage) {
  if (!file_exists(path))
    throw ArtifactError("missing " + what + ": " + path + " (run " + producing_stage + " first)");
}

// The pipeline manifest accumulates ids, paths, seeds and creation
// timestamps. Timestamps live only here; artifact files stay timestamp-free
// so identical reruns rewrite identical bytes.
inline void update_manifest(const ArtifactPaths& paths, const std::string& stage, Json fields) {
  Json manifest = file_exists(paths.manifest()) ? load_json(paths.manifest()) : Json::object();
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  fields["created_at"] = buf;
  manifest[stage] = std::move(fields);
  save_json(manifest, paths.manifest());
}

// ---- corpus preparation shared by stages ----

struct PreparedCorpus {
  Vocabulary vocab;
  EmbeddingMatrix embedding;
  std::vector<Document> train, validation, test;
  SplitIndices indices;
};

inline PreparedCorpus prepare_corpus(const Config& cfg,
                                     const std::optional<Vocabulary>& fixed_vocab = std::nullopt,
                                     const std::optional<EmbeddingMatrix>& fixed_emb = std::nullopt) {
  if (cfg.corpus_path.empty()) throw ConfigError("corpus_path is not set");
  const auto format = corpus_format_from_string(cfg.corpus_format);
  const auto raw = load_corpus(cfg.corpus_path, format);
  PreparedCorpus out;
  out.indices = split_indices(raw.size(), cfg.ratios, cfg.seed);
  if (fixed_vocab) {
    out.vocab = *fixed_vocab;
  } else {
    // Vocabulary comes from the training split only.
    std::vector<RawDocument> train_raw;
    train_raw.reserve(out.indices.train.size());
    for (size_t i : out.indices.train) train_raw.push_back(raw[i]);
    out.vocab = build_vocabulary(train_raw, cfg.min_freq, cfg.max_vocab);
  }
  if (fixed_emb) {
    out.embedding = *fixed_emb;
  } else if (!cfg.embedding_path.empty()) {
    out.embedding = load_embeddings(cfg.embedding_path, out.vocab, cfg.d_e, cfg.seed);
  } else {
    out.embedding = random_embeddings(out.vocab, cfg.d_e, cfg.seed);
  }
  auto encode_at = [&](const std::vector<size_t>& idx, std::vector<Document>& dst) {
    dst.reserve(idx.size());
    for (size_t i : idx) dst.push_back(encode_document(raw[i], out.vocab, cfg.max_len));
  };
  encode_at(out.indices.train, out.train);
  encode_at(out.indices.validation, out.validation);
  encode_at(out.indices.test, out.test);
  return out;
}

// ---- stages ----

inline void stage_train_gan(const Config& cfg) {
  ArtifactPaths paths{cfg.out_dir};
  std::filesystem::create_directories(cfg.out_dir);
  PreparedCorpus corpus = prepare_corpus(cfg);
  if (cfg.gan_arch().objective == GanObjective::kSemisup) {
    for (const auto& d : corpus.train)
      if (d.label && (*d.label < 1 || *d.label > cfg.K))
        throw ConfigError("training label outside 1..K; check the K config key");
  }
  Json split_json;
  split_json["seed"] = cfg.seed;
  split_json["ratios"] = cfg.ratios;
  split_json["n_documents"] =
      corpus.indices.train.size() + corpus.indices.validation.size() + corpus.indices.test.size();
  split_json["train"] = corpus.indices.train;
  split_json["validation"] = corpus.indices.validation;
  split_json["test"] = corpus.indices.test;
  save_json(split_json, paths.split());

  SemiSupervisedSets sets;
  if (cfg.gan_arch().objective == GanObjective::kSemisup) {
    sets = make_semisupervised_sets(corpus.train, cfg.labeled_fraction, cfg.seed, cfg.K);
  } else {
    sets.unlabeled = corpus.train;
    for (auto& d : sets.unlabeled) d.label.reset();
  }
  GanTrainer trainer(cfg.gan_train_config(), corpus.vocab, corpus.embedding, sets, corpus.train);
  trainer.set_dump_dir(cfg.out_dir);
  auto result = trainer.run(cfg.out_dir);

  Json m;
  m["path"] = paths.gan_checkpoint();
  m["id"] = result.checkpoint_id;
  m["seed"] = cfg.seed;
  m["epochs"] = cfg.epochs;
  update_manifest(paths, "train-gan", std::move(m));
}

inline SplitIndices load_split_indices(const ArtifactPaths& paths, size_t expected_n) {
  require_artifact(paths.split(), "split manifest", "train-gan");
  const Json j = load_json(paths.split());
  SplitIndices idx;
  idx.train = j.at("train").get<std::vector<size_t>>();
  idx.validation = j.at("validation").get<std::vector<size_t>>();
  idx.test = j.at("test").get<std::vector<size_t>>();
  if (expected_n != 0 &&
      idx.train.size() + idx.validation.size() + idx.test.size() != expected_n)
    throw ArtifactError("split manifest does not match the corpus size; regenerate with train-gan");
  return idx;
}

inline void stage_extract_stats(const Config& cfg) {
  ArtifactPaths paths{cfg.out_dir};
  require_artifact(paths.gan_checkpoint(), "gan checkpoint", "train-gan");
  auto [ckpt, gan_id] = load_gan_checkpoint(paths.gan_checkpoint());

  const auto format = corpus_format_from_string(cfg.corpus_format);
  if (cfg.corpus_path.empty()) throw ConfigError("corpus_path is not set");
  const auto raw = load_corpus(cfg.corpus_path, format);
  const SplitIndices idx = load_split_indices(paths, raw.size());
  std::vector<Document> train_docs;
  train_docs.reserve(idx.train.size());
  for (size_t i : idx.train) train_docs.push_back(encode_document(raw[i], ckpt.vocab, ckpt.arch.max_len));

  StatsDataset all = extract_stats_dataset(ckpt.discriminator, ckpt.embedding, train_docs,
                                           cfg.batch_size, ckpt.arch.max_len, gan_id,
                                           "baseline-train", "train", false, cfg.seed);

  // Deterministic split of baseline statistics into AE train/validation.
  std::vector<size_t> order(all.sequences.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(cfg.seed).fork(0x57a75);
  rng.shuffle(order);
  const auto n_val = static_cast<size_t>(
      std::llround(cfg.stats_val_fraction * static_cast<double>(order.size())));
  if (n_val == 0 || n_val >= order.size())
    throw ConfigError("stats_val_fraction leaves an empty train or validation set");
  StatsDataset train_ds, val_ds;
  train_ds.manifest = all.manifest;
  train_ds.manifest.split = "ae-train";
  val_ds.manifest = all.manifest;
  val_ds.manifest.split = "ae-val";
  for (size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_val ? val_ds : train_ds;
    dst.sequences.push_back(all.sequences[order[i]]);
  }

  StatsScaler scaler = fit_scaler(train_ds);
  const std::string scaler_id = save_scaler(scaler, paths.scaler());
  const std::string train_id = save_stats(apply_scaler(scaler, train_ds, scaler_id), paths.stats_train());
  const std::string val_id = save_stats(apply_scaler(scaler, val_ds, scaler_id), paths.stats_val());

  Json m;
  m["gan_checkpoint_id"] = gan_id;
  m["scaler"] = Json{{"path", paths.scaler()}, {"id", scaler_id}};
  m["stats_train"] = Json{{"path", paths.stats_train()}, {"id", train_id}};
  m["stats_val"] = Json{{"path", paths.stats_val()}, {"id", val_id}};
  update_manifest(paths, "extract-stats", std::move(m));
}

inline void stage_train_ae(const Config& cfg) {
  ArtifactPaths paths{cfg.out_dir};
  require_artifact(paths.stats_train(), "training statistics", "extract-stats");
  require_artifact(paths.stats_val(), "validation statistics", "extract-stats");
  auto [train_ds, train_id] = load_stats(paths.stats_train());
  auto [val_ds, val_id] = load_stats(paths.stats_val());
  auto result = train_autoencoder(train_ds, val_ds, cfg.ae_train_config());

  const std::string ae_id = save_ae_checkpoint(result.model, paths.ae_checkpoint());
  std::vector<std::array<double, 3>> rows;
  for (const auto& p : result.curve)
    rows.push_back({static_cast<double>(p.epoch), p.train_loss, p.val_loss});
  emit_loss_curve(rows, paths.ae_loss());

  Json m;
  m["path"] = paths.ae_checkpoint();
  m["id"] = ae_id;
  m["epochs_run"] = result.model.epochs_run;
  m["best_epoch"] = result.best_epoch;
  update_manifest(paths, "train-ae", std::move(m));
}

inline void stage_calibrate(const Config& cfg) {
  ArtifactPaths paths{cfg.out_dir};
  require_artifact(paths.ae_checkpoint(), "autoencoder checkpoint", "train-ae");
  require_artifact(paths.stats_val(), "validation statistics", "extract-stats");
  auto [model, ae_id] = load_ae_checkpoint(paths.ae_checkpoint());
  auto [val_ds, val_id] = load_stats(paths.stats_val());
  require_baseline_only(val_ds, "calibrate_threshold");
  if (val_ds.manifest.scaler_id != model.scaler_id)
    throw ArtifactError("calibrate: statistics and autoencoder use different scalers");
  const std::vector<double> errors = score_dataset(model, val_ds);
  CalibratedThreshold th = calibrate_threshold(errors, cfg.quantile);
  th.scaler_id = model.scaler_id;
  th.ae_checkpoint_id = ae_id;
  save_json(threshold_json(th), paths.threshold());

  Json m;
  m["path"] = paths.threshold();
  m["tau"] = th.tau;
  m["q"] = th.q;
  m["n"] = th.calibration_set_size;
  update_manifest(paths, "calibrate", std::move(m));
}

// ---- detection ----

struct Verdict {
  enum class Kind { kAnomalous, kInDistribution };
  Kind kind = Kind::kAnomalous;
  double score = 0.0;
  std::optional<int> class_id;       // present iff in-distribution
  std::vector<double> class_probs;   // K entries, renormalized over real classes
};

inline Json verdict_json(const Verdict& v) {
  Json j;
  j["kind"] = v.kind == Verdict::Kind::kAnomalous ? "anomalous" : "in_distribution";
  j["score"] = v.score;
  if (v.class_id) {
    j["class_id"] = *v.class_id;
    j["class_probs"] = v.class_probs;
  }
  return j;
}

// Loads the full artifact chain and verifies that every stored parent id
// matches the content id of the artifact actually on disk.
class Detector {
public:
  explicit Detector(const std::string& out_dir) {
    ArtifactPaths paths{out_dir};
    require_artifact(paths.gan_checkpoint(), "gan checkpoint", "train-gan");
    require_artifact(paths.scaler(), "scaler", "extract-stats");
    require_artifact(paths.ae_checkpoint(), "autoencoder checkpoint", "train-ae");
    require_artifact(paths.threshold(), "threshold", "calibrate");
    std::tie(gan_, gan_id_) = load_gan_checkpoint(paths.gan_checkpoint());
    std::tie(scaler_, scaler_id_) = load_scaler(paths.scaler());
    std::tie(ae_, ae_id_) = load_ae_checkpoint(paths.ae_checkpoint());
    threshold_ = threshold_from_json(load_json(paths.threshold()));
    check_chain();
  }

  Verdict detect(const std::string& text) {
    if (tokenize(text).empty()) throw ConfigError("empty document after tokenization");
    const Document doc = encode_document({text, std::nullopt}, gan_.vocab, gan_.arch.max_len);
    const Batch batch = pad_documents({doc}, 0, 1, gan_.arch.max_len);
    auto seqs = extract_stats(gan_.discriminator, gan_.embedding, batch, "detect", 0, false);
    const LayerStatSequence raw = seqs.front();
    const LayerStatSequence scaled = apply_scaler(scaler_, raw);
    Verdict v;
    v.score = score(ae_, scaled);
    if (v.score > threshold_.tau) {
      v.kind = Verdict::Kind::kAnomalous;
      return v;
    }
    v.kind = Verdict::Kind::kInDistribution;
    // The final stats element is the softmax layer; drop the synthetic class
    // K+1 and renormalize over the real classes.
    const Vector softmax_out = unpad(raw.padded, raw.mask).back();
    const int K = gan_.arch.K;
    Vector real = softmax_out.head(K);
    const double total = real.sum();
    if (total <= 0.0) throw NumericError("detect: degenerate class distribution");
    real /= total;
    v.class_probs.assign(real.data(), real.data() + K);
    Eigen::Index best;
    real.maxCoeff(&best);
    v.class_id = static_cast<int>(best) + 1;
    return v;
  }

  double tau() const { return threshold_.tau; }
  const GanCheckpoint& gan() { return gan_; }
  GanCheckpoint& mutable_gan() { return gan_; }
  const StatsScaler& scaler() const { return scaler_; }
  AutoencoderModel& ae() { return ae_; }
  const CalibratedThreshold& threshold() const { return threshold_; }
  const std::string& gan_id() const { return gan_id_; }
  const std::string& scaler_id() const { return scaler_id_; }

private:
  void check_chain() {
    auto mismatch = [](const std::string& what, const std::string& want, const std::string& got) {
      throw ArtifactError("artifact chain mismatch: " + what + " expected id " + want +
                          " but found " + got);
    };
    if (scaler_.gan_checkpoint_id != gan_id_)
      mismatch("scaler -> gan checkpoint", scaler_.gan_checkpoint_id, gan_id_);
    if (ae_.gan_checkpoint_id != gan_id_)
      mismatch("autoencoder -> gan checkpoint", ae_.gan_checkpoint_id, gan_id_);
    if (ae_.scaler_id != scaler_id_) mismatch("autoencoder -> scaler", ae_.scaler_id, scaler_id_);
    if (threshold_.scaler_id != scaler_id_)
      mismatch("threshold -> scaler", threshold_.scaler_id, scaler_id_);
    if (threshold_.ae_checkpoint_id != ae_id_)
      mismatch("threshold -> autoencoder", threshold_.ae_checkpoint_id, ae_id_);
    const auto spec = capture_layer_spec(gan_.arch);
    if (ae_.n_layers != static_cast<int>(spec.size()))
      throw ArtifactError("autoencoder layer count does not match the discriminator architecture");
  }

  GanCheckpoint gan_;
  StatsScaler scaler_;
  AutoencoderModel ae_;
  CalibratedThreshold threshold_;
  std::string gan_id_, scaler_id_, ae_id_;
};

// One verdict line per input line.
inline int stage_detect(const Config& cfg, std::istream& in, std::ostream& out) {
  Detector detector(cfg.out_dir);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      out << verdict_json(detector.detect(line)).dump() << "\n";
    } catch (const ConfigError& e) {
      throw ConfigError("input line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return 0;
}

// Scores baseline-test and novel documents through the full chain and emits
// the metric report.
inline void stage_evaluate(const Config& cfg) {
  ArtifactPaths paths{cfg.out_dir};
  Detector detector(cfg.out_dir);
  GanCheckpoint& gan = detector.mutable_gan();

  // Baseline evaluation documents: held-out test split by default.
  std::vector<Document> baseline_docs;
  if (!cfg.eval_baseline_path.empty()) {
    for (const auto& raw : load_corpus(cfg.eval_baseline_path,
                                       corpus_format_from_string(cfg.corpus_format)))
      baseline_docs.push_back(encode_document(raw, gan.vocab, gan.arch.max_len));
  } else {
    if (cfg.corpus_path.empty()) throw ConfigError("corpus_path is not set");
    const auto raw = load_corpus(cfg.corpus_path, corpus_format_from_string(cfg.corpus_format));
    const SplitIndices idx = load_split_indices(paths, raw.size());
    for (size_t i : idx.test) baseline_docs.push_back(encode_document(raw[i], gan.vocab, gan.arch.max_len));
  }
  if (cfg.eval_novel_path.empty()) throw ConfigError("eval_novel_path is not set");
  std::vector<Document> novel_docs;
  for (const auto& raw : load_corpus(cfg.eval_novel_path, CorpusFormat::kOneDocPerLine))
    novel_docs.push_back(encode_document(raw, gan.vocab, gan.arch.max_len));
  if (baseline_docs.empty() || novel_docs.empty())
    throw ConfigError("evaluate: baseline and novel sets must be nonempty");

  auto score_docs = [&](const std::vector<Document>& docs, const std::string& split, bool ood) {
    StatsDataset ds = extract_stats_dataset(gan.discriminator, gan.embedding, docs, cfg.batch_size,
                                            gan.arch.max_len, detector.gan_id(), split, split, ood,
                                            cfg.seed);
    StatsDataset scaled = apply_scaler(detector.scaler(), ds, detector.scaler_id());
    return score_dataset(detector.ae(), scaled);
  };
  const auto baseline_scores = score_docs(baseline_docs, "eval-baseline", false);
  const auto novel_scores = score_docs(novel_docs, "eval-novel", true);

  BinaryOutcomeSet outcomes;
  for (double s : baseline_scores) {
    outcomes.scores.push_back(s);
    outcomes.truth.push_back(false);
  }
  for (double s : novel_scores) {
    outcomes.scores.push_back(s);
    outcomes.truth.push_back(true);
  }
  MetricsReport report = build_report(outcomes, detector.tau(), cfg.histogram_bins);
  emit_report(report, paths.report_dir(), cfg.eval_plots);
  if (file_exists(paths.ae_loss()))
    write_file(paths.report_dir() + "/loss_curves.csv", read_file(paths.ae_loss()));

  Json m;
  m["report_dir"] = paths.report_dir();
  m["auc"] = report.auc;
  m["precision"] = report.precision_at_tau;
  m["recall"] = report.recall_at_tau;
  m["accuracy"] = report.accuracy_at_tau;
  m["n_baseline"] = baseline_scores.size();
  m["n_novel"] = novel_scores.size();
  update_manifest(paths, "evaluate", std::move(m));
}

inline void run_stage(Stage stage, const Config& cfg) {
  switch (stage) {
    case Stage::kTrainGan: stage_train_gan(cfg); break;
    case Stage::kExtractStats: stage_extract_stats(cfg); break;
    case Stage::kTrainAe: stage_train_ae(cfg); break;
    case Stage::kCalibrate: stage_calibrate(cfg); break;
    case Stage::kDetect: throw ConfigError("detect needs an input stream; use stage_detect");
    case Stage::kEvaluate: stage_evaluate(cfg); break;
  }
}

}  // namespace tad
