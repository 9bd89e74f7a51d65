// Acceptance suite: one test per acceptance criterion, each printing a
// single "[criterion N] PASS|FAIL|SKIP" line. Criteria 5 and 6 share one
// full pipeline run on the synthetic two-distribution corpus.

#include <tad/tad.hpp>

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "test_util.hpp"

using namespace tad;
using tad::testing::grad_check;
using tad::testing::random_matrix;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class CriterionLine {
public:
  CriterionLine(int num, std::string desc) : num_(num), desc_(std::move(desc)) {}
  ~CriterionLine() {
    if (skipped_.empty()) {
      std::printf("[criterion %d] %s: %s\n", num_,
                  ::testing::Test::HasFailure() ? "FAIL" : "PASS", desc_.c_str());
    } else {
      std::printf("[criterion %d] SKIP: %s (%s)\n", num_, desc_.c_str(), skipped_.c_str());
    }
    std::fflush(stdout);
  }
  void mark_skipped(const std::string& why) { skipped_ = why; }

private:
  int num_;
  std::string desc_;
  std::string skipped_;
};

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// ---- criterion 1: gradients vs central finite differences ----

TEST(Acceptance, C1GradientCorrectness) {
  CriterionLine line(1, "analytic gradients match central finite differences (< 1e-4)");
  const auto t0 = Clock::now();
  Rng rng(101);

  const double mmd_err = grad_check(
      {random_matrix(4, 3, rng), random_matrix(5, 3, rng)},
      [](ad::Tape& t, const std::vector<ad::Var>& v) { return mmd2(t, v[0], v[1], {0.7, 2.0}); });
  EXPECT_LT(mmd_err, 1e-4) << "mmd2 gradient";

  const double recon_err = grad_check(
      {random_matrix(3, 4, rng), random_matrix(3, 4, rng)},
      [](ad::Tape& t, const std::vector<ad::Var>& v) { return loss_recon_graph(t, v[0], v[1]); });
  EXPECT_LT(recon_err, 1e-4) << "loss_recon gradient";

  const double dssl_err = grad_check(
      {random_matrix(3, 4, rng), random_matrix(4, 4, rng), random_matrix(2, 4, rng)},
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return loss_dssl_graph(t, v[0], {1, 3, 2}, v[1], v[2], 3);
      });
  EXPECT_LT(dssl_err, 1e-4) << "loss_dssl gradient";

  // Autoencoder loss with respect to every parameter, 2-layer d_stat = 4 toy.
  const int d_stat = 4, d_ae = 3, L = 2, batch = 2;
  Rng rng_ae(102);
  AutoencoderModel shape_model(d_stat, d_ae, L, AeActivation::kTanh, rng_ae);
  std::vector<Matrix> inputs;
  std::vector<std::string> names;
  for (const auto& [name, p] : shape_model.params.items()) {
    inputs.push_back(random_matrix(p.value.rows(), p.value.cols(), rng_ae, -0.4, 0.4));
    names.push_back(name);
  }
  std::vector<Matrix> steps;
  for (int l = 0; l < L; ++l) steps.push_back(random_matrix(batch, d_stat, rng_ae));
  Matrix target(batch * L, d_stat);
  for (int i = 0; i < batch; ++i)
    for (int l = 0; l < L; ++l) target.row(i * L + l) = steps[static_cast<size_t>(l)].row(i);
  Matrix mask = Matrix::Ones(batch * L, d_stat);
  mask(1, 2) = 0.0;
  const double ae_err = grad_check(inputs, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
    nn::BoundParams bp;
    for (size_t i = 0; i < names.size(); ++i) {
      bp.names.push_back(names[i]);
      bp.entries.emplace_back(nullptr, v[i]);
    }
    auto recon = autoencoder_forward(t, bp, shape_model, steps);
    return masked_mse_graph(t, recon, target, mask);
  });
  EXPECT_LT(ae_err, 1e-4) << "autoencoder loss gradient";

  EXPECT_LT(seconds_since(t0), 60.0) << "criterion 1 runtime budget";
}

// ---- criterion 2: MMD estimator vs double-loop reference ----

double mmd2_reference(const Matrix& x, const Matrix& y, const std::vector<double>& bw) {
  auto kernel_mean = [&](const Matrix& a, const Matrix& b, double sigma) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index jj = 0; jj < b.rows(); ++jj) {
        double d2 = 0.0;
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
          const double diff = a(i, k) - b(jj, k);
          d2 += diff * diff;
        }
        acc += std::exp(-d2 / (2.0 * sigma * sigma));
      }
    return acc / static_cast<double>(a.rows() * b.rows());
  };
  double total = 0.0;
  for (double sigma : bw)
    total += kernel_mean(x, x, sigma) + kernel_mean(y, y, sigma) - 2.0 * kernel_mean(x, y, sigma);
  return total / static_cast<double>(bw.size());
}

TEST(Acceptance, C2MmdOracle) {
  CriterionLine line(2, "vectorized MMD equals double-loop reference within 1e-10");
  const auto t0 = Clock::now();
  Rng rng(103);
  for (int it = 0; it < 100; ++it) {
    const auto n = static_cast<Eigen::Index>(1 + rng.uniform_index(20));
    const auto m = static_cast<Eigen::Index>(1 + rng.uniform_index(20));
    const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    Matrix x = random_matrix(n, d, rng, -2, 2);
    Matrix y = random_matrix(m, d, rng, -2, 2);
    const std::vector<double> bw = {rng.uniform(0.3, 1.0), rng.uniform(1.0, 4.0)};
    const double got = mmd2(x, y, bw);
    const double want = mmd2_reference(x, y, bw);
    EXPECT_LT(std::abs(got - want) / std::max(1.0, std::abs(want)), 1e-10) << "instance " << it;
  }
  Matrix same = random_matrix(9, 5, rng);
  EXPECT_NEAR(mmd2(same, same, {1.0, 2.0}), 0.0, 1e-10);
  EXPECT_LT(seconds_since(t0), 60.0) << "criterion 2 runtime budget";
}

// ---- criterion 3: Eq.-style semi-supervised loss vs scalar oracle ----

TEST(Acceptance, C3DsslOracle) {
  CriterionLine line(3, "semi-supervised loss matches scalar brute force within 1e-8");
  Matrix lab(1, 3), unl(1, 3), fak(1, 3);
  lab << 0.5, -0.3, 0.2;
  unl << 0.1, 0.4, -0.2;
  fak << -0.5, 0.3, 0.8;
  // Frozen from an independent scalar log-softmax computation.
  EXPECT_NEAR(loss_dssl(lab, {1}, unl, fak, 2), -1.6887766317828685, 1e-8);

  // Second instance recomputed in place with scalar arithmetic only.
  auto log_softmax_entry = [](const Vector& v, int idx) {
    double mx = v.maxCoeff();
    double lse = 0.0;
    for (int i = 0; i < v.size(); ++i) lse += std::exp(v(i) - mx);
    return v(idx) - (mx + std::log(lse));
  };
  Vector l2(4), u2(4), f2(4);
  l2 << 0.9, -1.2, 0.3, 0.1;
  u2 << -0.4, 0.2, 0.6, -0.9;
  f2 << 0.2, 0.2, -0.3, 1.4;
  const double term_a = log_softmax_entry(l2, 2);
  const double term_b = std::log(std::exp(log_softmax_entry(u2, 0)) +
                                 std::exp(log_softmax_entry(u2, 1)) +
                                 std::exp(log_softmax_entry(u2, 2)));
  const double term_c = log_softmax_entry(f2, 3);
  Matrix lm = l2.transpose(), um = u2.transpose(), fm = f2.transpose();
  EXPECT_NEAR(loss_dssl(lm, {3}, um, fm, 3), term_a + term_b + term_c, 1e-8);
}

// ---- criterion 4: trapezoidal AUC vs pairwise estimate ----

TEST(Acceptance, C4AucOracle) {
  CriterionLine line(4, "trapezoidal AUC equals pairwise estimate within 1e-9");
  Rng rng(104);
  for (int it = 0; it < 50; ++it) {
    BinaryOutcomeSet o;
    const size_t n = 10 + rng.uniform_index(60);
    for (size_t i = 0; i < n; ++i) {
      double s = rng.uniform(0, 1);
      if (it % 2 == 1 && rng.uniform() < 0.3) s = std::floor(s * 8) / 8.0;
      o.scores.push_back(s);
      o.truth.push_back(rng.uniform() < 0.4);
    }
    o.truth[0] = true;
    o.truth[1] = false;
    double acc = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < n; ++i) {
      if (!o.truth[i]) continue;
      for (size_t jj = 0; jj < n; ++jj) {
        if (o.truth[jj]) continue;
        ++pairs;
        if (o.scores[i] > o.scores[jj]) acc += 1.0;
        else if (o.scores[i] == o.scores[jj]) acc += 0.5;
      }
    }
    EXPECT_NEAR(roc_auc(o).auc, acc / static_cast<double>(pairs), 1e-9) << "instance " << it;
  }
}

// ---- criteria 5 and 6: shared full pipeline on the synthetic corpus ----

class EndToEnd : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    data_dir = ::testing::TempDir() + "accept_data";
    out_dir = ::testing::TempDir() + "accept_out";
    std::filesystem::remove_all(data_dir);
    std::filesystem::remove_all(out_dir);
    SyntheticSpec spec;
    spec.n_baseline = 2000;
    spec.n_novel = 2000;
    spec.K = 2;
    spec.min_len = 5;
    spec.max_len = 19;  // <= 20 after the EOS terminator
    spec.seed = 7;
    write_synthetic_corpus(spec, data_dir, 32);

    const auto t0 = Clock::now();
    const Config cfg = config();
    stage_train_gan(cfg);
    stage_extract_stats(cfg);
    stage_train_ae(cfg);
    stage_calibrate(cfg);
    stage_evaluate(cfg);
    pipeline_seconds = seconds_since(t0);
  }

  static Config config() {
    Config cfg;
    cfg.K = 2;
    cfg.d_z = 32;
    cfg.d_e = 32;
    cfg.d_h = 128;
    cfg.window_sizes = {3, 4, 5};
    cfg.n_filters = 50;
    cfg.temperature = 100.0;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.seed = 42;
    cfg.learning_rate = 2e-4;
    cfg.corpus_path = data_dir + "/baseline.tsv";
    cfg.corpus_format = "labeled-tsv";
    cfg.embedding_path = data_dir + "/embeddings.txt";
    cfg.labeled_fraction = 0.1;
    cfg.max_len = 20;
    cfg.ae_hidden = 64;
    cfg.ae_epochs = 60;
    cfg.ae_patience = 10;
    cfg.quantile = 0.95;
    cfg.eval_novel_path = data_dir + "/novel.txt";
    cfg.out_dir = out_dir;
    return cfg;
  }

  static inline std::string data_dir;
  static inline std::string out_dir;
  static inline double pipeline_seconds = 0.0;
};

TEST_F(EndToEnd, C5SyntheticEndToEnd) {
  CriterionLine line(5, "synthetic end-to-end separation at desk scale");
  EXPECT_LT(pipeline_seconds, 15.0 * 60.0) << "pipeline exceeded the desk-scale budget";

  const Config cfg = config();
  Detector detector(out_dir);
  GanCheckpoint& gan = detector.mutable_gan();

  // Held-out baseline (test split) and novel scores through the full chain.
  const auto raw = load_corpus(cfg.corpus_path, CorpusFormat::kLabeledTsv);
  const SplitIndices idx = load_split_indices(ArtifactPaths{out_dir}, raw.size());
  std::vector<Document> baseline_docs, novel_docs;
  for (size_t i : idx.test) baseline_docs.push_back(encode_document(raw[i], gan.vocab, gan.arch.max_len));
  for (const auto& r : load_corpus(cfg.eval_novel_path, CorpusFormat::kOneDocPerLine))
    novel_docs.push_back(encode_document(r, gan.vocab, gan.arch.max_len));

  auto score_docs = [&](const std::vector<Document>& docs, const std::string& split, bool ood) {
    StatsDataset ds = extract_stats_dataset(gan.discriminator, gan.embedding, docs, cfg.batch_size,
                                            gan.arch.max_len, detector.gan_id(), split, split, ood,
                                            cfg.seed);
    return score_dataset(detector.ae(), apply_scaler(detector.scaler(), ds, detector.scaler_id()));
  };
  const auto baseline_scores = score_docs(baseline_docs, "eval-baseline", false);
  const auto novel_scores = score_docs(novel_docs, "eval-novel", true);

  // (a) mean reconstruction error on novel >= 1.5x held-out baseline.
  const double mean_a = mean_of(baseline_scores);
  const double mean_b = mean_of(novel_scores);
  EXPECT_GE(mean_b, 1.5 * mean_a) << "mean separation (baseline " << mean_a << ", novel " << mean_b << ")";

  // (b) AUC >= 0.90.
  BinaryOutcomeSet outcomes;
  for (double s : baseline_scores) {
    outcomes.scores.push_back(s);
    outcomes.truth.push_back(false);
  }
  for (double s : novel_scores) {
    outcomes.scores.push_back(s);
    outcomes.truth.push_back(true);
  }
  const double auc = roc_auc(outcomes).auc;
  EXPECT_GE(auc, 0.90);

  // (c) at the 0.95-quantile threshold: recall >= 0.85 and FPR <= 0.10.
  const Confusion c = confusion_at(outcomes, detector.tau());
  const double rec = recall(c.tp, c.fn);
  const double fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
  EXPECT_GE(rec, 0.85);
  EXPECT_LE(fpr, 0.10);

  // The evaluate stage agrees with the direct computation.
  const Json metrics = load_json(out_dir + "/report/metrics.json");
  EXPECT_NEAR(metrics.at("auc").get<double>(), auc, 1e-9);

  std::printf("  criterion 5 detail: pipeline %.1fs, mean ratio %.2f, auc %.4f, recall %.4f, fpr %.4f\n",
              pipeline_seconds, mean_b / mean_a, auc, rec, fpr);
}

TEST_F(EndToEnd, C6SemisupClassifierSanity) {
  CriterionLine line(6, "discriminator labeled accuracy >= 0.90 with 10% labels");
  const Config cfg = config();
  auto [gan, gan_id] = load_gan_checkpoint(out_dir + "/gan.ckpt");
  const auto raw = load_corpus(cfg.corpus_path, CorpusFormat::kLabeledTsv);
  const SplitIndices idx = load_split_indices(ArtifactPaths{out_dir}, raw.size());
  std::vector<Document> val_docs;
  for (size_t i : idx.validation) val_docs.push_back(encode_document(raw[i], gan.vocab, gan.arch.max_len));
  const double acc = labeled_accuracy(gan.discriminator, gan.embedding, val_docs, cfg.batch_size,
                                      gan.arch.max_len);
  EXPECT_GE(acc, 0.90);
  std::printf("  criterion 6 detail: held-out labeled accuracy %.4f\n", acc);
}

// ---- criterion 7: real-data qualitative reproduction (optional, slow) ----

TEST(Acceptance, C7RealDataQualitative) {
  CriterionLine line(7, "20Newsgroups-vs-polarity qualitative reproduction");
  const char* news = std::getenv("TAD_20NEWS_TSV");
  const char* polarity = std::getenv("TAD_POLARITY_TXT");
  if (!news || !polarity) {
    line.mark_skipped(
        "set TAD_20NEWS_TSV (labeled-tsv, 4 groups as labels 1..4) and "
        "TAD_POLARITY_TXT (one document per line) to run");
    GTEST_SKIP() << "real datasets not provided";
  }
  const std::string out = ::testing::TempDir() + "accept_real";
  std::filesystem::remove_all(out);
  Config cfg;
  cfg.K = 4;
  cfg.d_z = 32;
  cfg.d_e = 50;
  cfg.d_h = 128;
  cfg.n_filters = 50;
  cfg.epochs = 8;
  cfg.batch_size = 32;
  cfg.seed = 42;
  cfg.learning_rate = 2e-4;
  cfg.corpus_path = news;
  cfg.corpus_format = "labeled-tsv";
  cfg.labeled_fraction = 0.1;
  cfg.max_len = 50;
  cfg.min_freq = 2;
  cfg.max_vocab = 20000;
  cfg.ae_hidden = 64;
  cfg.ae_epochs = 40;
  cfg.ae_patience = 10;
  cfg.eval_novel_path = polarity;
  cfg.out_dir = out;

  const auto t0 = Clock::now();
  stage_train_gan(cfg);
  stage_extract_stats(cfg);
  stage_train_ae(cfg);
  stage_calibrate(cfg);

  Detector detector(out);
  GanCheckpoint& gan = detector.mutable_gan();
  const auto raw = load_corpus(cfg.corpus_path, CorpusFormat::kLabeledTsv);
  const SplitIndices idx = load_split_indices(ArtifactPaths{out}, raw.size());
  std::vector<Document> baseline_docs, novel_docs;
  for (size_t i : idx.test) baseline_docs.push_back(encode_document(raw[i], gan.vocab, gan.arch.max_len));
  for (const auto& r : load_corpus(cfg.eval_novel_path, CorpusFormat::kOneDocPerLine))
    novel_docs.push_back(encode_document(r, gan.vocab, gan.arch.max_len));
  auto score_docs = [&](const std::vector<Document>& docs, const std::string& split, bool ood) {
    StatsDataset ds = extract_stats_dataset(gan.discriminator, gan.embedding, docs, cfg.batch_size,
                                            gan.arch.max_len, detector.gan_id(), split, split, ood,
                                            cfg.seed);
    return score_dataset(detector.ae(), apply_scaler(detector.scaler(), ds, detector.scaler_id()));
  };
  auto baseline_scores = score_docs(baseline_docs, "eval-baseline", false);
  auto novel_scores = score_docs(novel_docs, "eval-novel", true);

  BinaryOutcomeSet outcomes;
  for (double s : baseline_scores) {
    outcomes.scores.push_back(s);
    outcomes.truth.push_back(false);
  }
  for (double s : novel_scores) {
    outcomes.scores.push_back(s);
    outcomes.truth.push_back(true);
  }
  EXPECT_GE(roc_auc(outcomes).auc, 0.80);
  // Stochastic-dominance pattern: median(novel) > 0.90-quantile(baseline).
  EXPECT_GT(empirical_quantile(novel_scores, 0.5), empirical_quantile(baseline_scores, 0.9));
  EXPECT_LT(seconds_since(t0), 30.0 * 60.0);
}

// ---- criterion 8: stage determinism under a fixed seed ----

TEST(Acceptance, C8Determinism) {
  CriterionLine line(8, "identical seed reproduces loss logs, threshold and metric CSVs");
  const std::string data = ::testing::TempDir() + "accept_det_data";
  const std::string out = ::testing::TempDir() + "accept_det_out";
  std::filesystem::remove_all(data);
  std::filesystem::remove_all(out);
  SyntheticSpec spec;
  spec.n_baseline = 300;
  spec.n_novel = 150;
  spec.max_len = 10;
  spec.seed = 5;
  write_synthetic_corpus(spec, data, 16);

  Config cfg;
  cfg.K = 2;
  cfg.d_z = 8;
  cfg.d_e = 16;
  cfg.d_h = 24;
  cfg.window_sizes = {2, 3};
  cfg.n_filters = 8;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 11;
  cfg.corpus_path = data + "/baseline.tsv";
  cfg.embedding_path = data + "/embeddings.txt";
  cfg.labeled_fraction = 0.2;
  cfg.max_len = 12;
  cfg.ae_hidden = 16;
  cfg.ae_epochs = 5;
  cfg.ae_patience = 5;
  cfg.eval_novel_path = data + "/novel.txt";
  cfg.out_dir = out;

  auto run_all = [&] {
    stage_train_gan(cfg);
    stage_extract_stats(cfg);
    stage_train_ae(cfg);
    stage_calibrate(cfg);
    stage_evaluate(cfg);
  };
  run_all();
  ArtifactPaths paths{out};
  auto epoch1_rows = [](const std::string& csv) {
    std::string rows;
    std::istringstream ss(csv);
    std::string lineb;
    while (std::getline(ss, lineb))
      if (lineb.rfind("1,", 0) == 0) rows += lineb + "\n";
    return rows;
  };
  const std::string gan_log = read_file(paths.gan_loss());
  const std::string ae_log = read_file(paths.ae_loss());
  const std::string threshold = read_file(paths.threshold());
  const std::string ckpt = read_file(paths.gan_checkpoint());
  std::map<std::string, std::string> report_files;
  for (const auto& entry : std::filesystem::directory_iterator(paths.report_dir()))
    report_files[entry.path().filename().string()] = read_file(entry.path().string());

  run_all();  // identical seed, full rerun of every stage

  EXPECT_EQ(epoch1_rows(read_file(paths.gan_loss())), epoch1_rows(gan_log));
  EXPECT_EQ(read_file(paths.gan_loss()), gan_log);
  EXPECT_EQ(read_file(paths.ae_loss()), ae_log);
  EXPECT_EQ(read_file(paths.threshold()), threshold) << "threshold file must be byte-identical";
  EXPECT_EQ(read_file(paths.gan_checkpoint()), ckpt);
  for (const auto& [name, body] : report_files)
    EXPECT_EQ(read_file(paths.report_dir() + "/" + name), body) << name;
}

// ---- criterion 9: baseline-only contract ----

TEST(Acceptance, C9BaselineOnlyContract) {
  CriterionLine line(9, "OOD-tagged data in AE training or calibration is rejected");
  // Library level: poisoned datasets are rejected by training and calibration
  // consumers.
  StatsDataset train, val;
  train.manifest.gan_checkpoint_id = val.manifest.gan_checkpoint_id = "ck";
  train.manifest.scaler_id = val.manifest.scaler_id = "sc";
  train.manifest.d_stat = val.manifest.d_stat = 3;
  for (int l = 0; l < 2; ++l) {
    train.manifest.layers.push_back({"l" + std::to_string(l), 3});
    val.manifest.layers.push_back({"l" + std::to_string(l), 3});
  }
  Rng rng(105);
  for (int i = 0; i < 6; ++i) {
    LayerStatSequence s;
    s.sample_id = "s" + std::to_string(i);
    s.padded = random_matrix(2, 3, rng);
    s.mask = Matrix::Ones(2, 3);
    (i < 4 ? train : val).sequences.push_back(s);
  }
  AeTrainConfig cfg;
  cfg.epochs = 1;
  cfg.d_ae = 4;

  auto poisoned_train = train;
  poisoned_train.sequences[1].is_ood = true;
  EXPECT_THROW(train_autoencoder(poisoned_train, val, cfg), ArtifactError);

  auto poisoned_val = val;
  poisoned_val.sequences[0].is_ood = true;
  EXPECT_THROW(train_autoencoder(train, poisoned_val, cfg), ArtifactError);
  EXPECT_THROW(fit_scaler(poisoned_train), ArtifactError);

  // Stage level: a poisoned validation-statistics artifact stops calibration
  // and AE training.
  const std::string data = ::testing::TempDir() + "accept_ood_data";
  const std::string out = ::testing::TempDir() + "accept_ood_out";
  std::filesystem::remove_all(data);
  std::filesystem::remove_all(out);
  SyntheticSpec spec;
  spec.n_baseline = 120;
  spec.n_novel = 40;
  spec.max_len = 8;
  spec.seed = 3;
  write_synthetic_corpus(spec, data, 8);
  Config pcfg;
  pcfg.K = 2;
  pcfg.d_z = 6;
  pcfg.d_e = 8;
  pcfg.d_h = 12;
  pcfg.window_sizes = {2};
  pcfg.n_filters = 6;
  pcfg.epochs = 1;
  pcfg.batch_size = 16;
  pcfg.seed = 9;
  pcfg.corpus_path = data + "/baseline.tsv";
  pcfg.embedding_path = data + "/embeddings.txt";
  pcfg.labeled_fraction = 0.5;
  pcfg.max_len = 10;
  pcfg.ae_hidden = 8;
  pcfg.ae_epochs = 2;
  pcfg.out_dir = out;
  stage_train_gan(pcfg);
  stage_extract_stats(pcfg);
  stage_train_ae(pcfg);  // clean chain first, so calibrate reaches the data check

  ArtifactPaths paths{out};
  auto [val_ds, val_id] = load_stats(paths.stats_val());
  val_ds.sequences.front().is_ood = true;
  save_stats(val_ds, paths.stats_val());
  try {
    stage_calibrate(pcfg);
    FAIL() << "calibrate accepted OOD-tagged statistics";
  } catch (const ArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("out-of-distribution"), std::string::npos) << e.what();
  }
  try {
    stage_train_ae(pcfg);
    FAIL() << "train-ae accepted OOD-tagged statistics";
  } catch (const ArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("out-of-distribution"), std::string::npos) << e.what();
  }
}

}  // namespace
