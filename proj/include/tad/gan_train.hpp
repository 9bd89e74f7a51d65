#pragma once

#include <tad/gan.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

// Alternating GAN training: n_d discriminator updates per generator update.
// The run is a single logical sequence of steps and is bitwise reproducible
// under a fixed seed on one device.

namespace tad {

struct GanTrainConfig {
  GanArch arch;
  int epochs = 10;
  int batch_size = 32;
  int n_d = 1;
  double learning_rate = 1e-4;
  double clip_norm = 5.0;
  uint64_t seed = 42;
};

struct GanTrainResult {
  GanCheckpoint checkpoint;
  std::string checkpoint_path;
  std::string loss_log_path;
  std::string checkpoint_id;
  std::vector<GanLossBreakdown> step_losses;
};

class GanTrainer {
public:
  GanTrainer(const GanTrainConfig& cfg, Vocabulary vocab, EmbeddingMatrix embedding,
             SemiSupervisedSets sets, std::vector<Document> unlabeled_pool)
      : cfg_(cfg),
        vocab_(std::move(vocab)),
        embedding_(std::move(embedding)),
        sets_(std::move(sets)),
        unlabeled_pool_(std::move(unlabeled_pool)) {
    cfg_.arch.validate();
    if (sets_.labeled.empty() && cfg_.arch.objective == GanObjective::kSemisup)
      throw ConfigError("semisup objective requires a labeled subset");
    if (unlabeled_pool_.empty()) throw ConfigError("empty training pool");
    Rng init_rng = Rng(cfg_.seed).fork(0x1219);
    gen_ = GeneratorModel(cfg_.arch, vocab_.size(), init_rng);
    disc_ = DiscriminatorModel(cfg_.arch, init_rng);
    z_rng_ = Rng(cfg_.seed).fork(0x2a7e);
    shuffle_rng_ = Rng(cfg_.seed).fork(0x3c41);
  }

  // Trains, writing <out_dir>/gan.ckpt and <out_dir>/gan_loss.csv each epoch.
  GanTrainResult run(const std::string& out_dir) {
    const std::string ckpt_path = out_dir + "/gan.ckpt";
    const std::string log_path = out_dir + "/gan_loss.csv";
    GanTrainResult result;
    result.checkpoint_path = ckpt_path;
    result.loss_log_path = log_path;

    std::vector<size_t> labeled_order(sets_.labeled.size());
    for (size_t i = 0; i < labeled_order.size(); ++i) labeled_order[i] = i;
    size_t labeled_pos = labeled_order.size();  // force shuffle on first use

    long global_step = 0;
    write_log(log_path);  // header only, so a 0-epoch run still emits the log
    if (cfg_.epochs == 0) {
      result.checkpoint_id = save(ckpt_path, 0);
      result.checkpoint = snapshot(0);
      return result;
    }

    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      std::vector<size_t> pool_order(unlabeled_pool_.size());
      for (size_t i = 0; i < pool_order.size(); ++i) pool_order[i] = i;
      shuffle_rng_.shuffle(pool_order);
      for (size_t start = 0; start < pool_order.size(); start += static_cast<size_t>(cfg_.batch_size)) {
        const size_t count =
            std::min(static_cast<size_t>(cfg_.batch_size), pool_order.size() - start);
        std::vector<Document> pool_batch_docs;
        pool_batch_docs.reserve(count);
        for (size_t i = 0; i < count; ++i)
          pool_batch_docs.push_back(unlabeled_pool_[pool_order[start + i]]);
        const Batch pool_batch = pad_documents(pool_batch_docs, 0, count, cfg_.arch.max_len);

        ++global_step;
        GanLossBreakdown losses;
        for (int i = 0; i < cfg_.n_d; ++i)
          losses = discriminator_step(pool_batch, labeled_order, labeled_pos, epoch, global_step);
        losses.l_g = generator_step(pool_batch);
        log_rows_.push_back({epoch, global_step, losses, last_labeled_accuracy_});
        result.step_losses.push_back(losses);
      }
      write_log(log_path);
      result.checkpoint_id = save(ckpt_path, epoch);
    }
    result.checkpoint = snapshot(cfg_.epochs);
    return result;
  }

  GeneratorModel& generator() { return gen_; }
  DiscriminatorModel& discriminator() { return disc_; }

private:
  GanCheckpoint snapshot(int epoch) const {
    GanCheckpoint ckpt;
    ckpt.arch = cfg_.arch;
    ckpt.seed = cfg_.seed;
    ckpt.epoch = epoch;
    ckpt.vocab = vocab_;
    ckpt.embedding = embedding_;
    ckpt.generator = gen_;
    ckpt.discriminator = disc_;
    ckpt.mmd_bandwidths = bandwidths_;
    return ckpt;
  }

  std::string save(const std::string& path, int epoch) {
    return save_gan_checkpoint(snapshot(epoch), path);
  }

  Matrix sample_latent(int batch) {
    Matrix z(batch, cfg_.arch.latent_input_dim());
    for (int i = 0; i < batch; ++i) {
      for (int j = 0; j < cfg_.arch.d_z; ++j) z(i, j) = z_rng_.normal();
      if (cfg_.arch.conditional) {
        z.row(i).tail(cfg_.arch.K).setZero();
        z(i, cfg_.arch.d_z + static_cast<int>(z_rng_.uniform_index(static_cast<size_t>(cfg_.arch.K)))) = 1.0;
      }
    }
    return z;
  }

  Batch next_labeled_batch(std::vector<size_t>& order, size_t& pos) {
    std::vector<Document> docs;
    const size_t want = std::min(static_cast<size_t>(cfg_.batch_size), sets_.labeled.size());
    for (size_t i = 0; i < want; ++i) {
      if (pos >= order.size()) {
        shuffle_rng_.shuffle(order);
        pos = 0;
      }
      docs.push_back(sets_.labeled[order[pos++]]);
    }
    return pad_documents(docs, 0, docs.size(), cfg_.arch.max_len);
  }

  void ensure_finite(const GanLossBreakdown& l, int epoch, long step, const Batch& batch) {
    const bool ok = std::isfinite(l.l_dssl) && std::isfinite(l.l_recon) && std::isfinite(l.l_mmd2) &&
                    std::isfinite(l.l_d);
    if (ok) return;
    if (!dump_dir_.empty()) {
      Json dump;
      dump["epoch"] = epoch;
      dump["step"] = step;
      dump["l_dssl"] = l.l_dssl;
      dump["l_recon"] = l.l_recon;
      dump["l_mmd2"] = l.l_mmd2;
      std::vector<std::vector<int>> ids;
      for (int i = 0; i < batch.size(); ++i) {
        std::vector<int> row(static_cast<size_t>(batch.token_ids.cols()));
        for (Eigen::Index t = 0; t < batch.token_ids.cols(); ++t)
          row[static_cast<size_t>(t)] = batch.token_ids(i, t);
        ids.push_back(std::move(row));
      }
      dump["batch_token_ids"] = ids;
      save_json(dump, dump_dir_ + "/diagnostic_dump.json");
    }
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                       std::to_string(step));
  }

  GanLossBreakdown discriminator_step(const Batch& pool_batch, std::vector<size_t>& labeled_order,
                                      size_t& labeled_pos, int epoch, long step) {
    using namespace ad;
    const GanArch& arch = cfg_.arch;
    ad::Tape tape;
    auto d = nn::bind(tape, disc_.params, true);
    auto g = nn::bind(tape, gen_.params, false);
    auto emb_var = tape.constant(embedding_.w);

    const Matrix z = sample_latent(pool_batch.size());
    auto roll = generator_rollout(tape, g, arch, z, arch.max_len, emb_var);
    auto fake = discriminator_forward(tape, d, arch, roll.soft_sequence, pool_batch.size(),
                                      arch.max_len, false);
    auto unl = discriminator_forward(tape, d, arch, tape.constant(embed_batch(pool_batch, embedding_)),
                                     pool_batch.size(), arch.max_len, false);
    if (bandwidths_.empty()) bandwidths_ = scaled_bandwidths(unl.feature.value());

    GanLossBreakdown out;
    out.lambda_r = arch.lambda_r;
    out.lambda_m = arch.lambda_m;

    Var l_cls = tape.scalar_constant(0.0);
    if (arch.objective == GanObjective::kSemisup) {
      const Batch labeled = next_labeled_batch(labeled_order, labeled_pos);
      auto lab = discriminator_forward(tape, d, arch, tape.constant(embed_batch(labeled, embedding_)),
                                       labeled.size(), arch.max_len, false);
      l_cls = loss_dssl_graph(tape, lab.class_logits, labeled.labels, unl.class_logits,
                              fake.class_logits, arch.K);
      last_labeled_accuracy_ = batch_accuracy(lab.class_logits.value(), labeled.labels, arch.K);
    } else {
      l_cls = loss_gan_standard_graph(tape, unl.class_logits, fake.class_logits, arch.K);
      last_labeled_accuracy_ = std::numeric_limits<double>::quiet_NaN();
    }

    Var l_recon = loss_recon_graph(tape, fake.z_hat, tape.constant(z.leftCols(arch.d_z)));
    Var l_mmd = mmd2(tape, unl.feature, fake.feature, bandwidths_);

    // Composition l_d = l_dssl - lambda_r*l_recon + lambda_m*l_mmd2, left to
    // right so the logged value equals compose_discriminator_loss bitwise;
    // maximized by descending on its negation.
    Var l_d = add(sub(l_cls, scale(l_recon, arch.lambda_r)), scale(l_mmd, arch.lambda_m));
    Var objective = neg(l_d);

    out.l_dssl = l_cls.scalar();
    out.l_recon = l_recon.scalar();
    out.l_mmd2 = l_mmd.scalar();
    out.l_d = l_d.scalar();
    ensure_finite(out, epoch, step, pool_batch);

    tape.backward(objective);
    nn::AdamConfig adam{cfg_.learning_rate, 0.9, 0.999, 1e-8, cfg_.clip_norm};
    nn::adam_step(d, adam, ++d_updates_);
    return out;
  }

  double generator_step(const Batch& pool_batch) {
    using namespace ad;
    const GanArch& arch = cfg_.arch;
    ad::Tape tape;
    auto d = nn::bind(tape, disc_.params, false);
    auto g = nn::bind(tape, gen_.params, true);
    auto emb_var = tape.constant(embedding_.w);

    const Matrix z = sample_latent(pool_batch.size());
    auto roll = generator_rollout(tape, g, arch, z, arch.max_len, emb_var);
    auto fake = discriminator_forward(tape, d, arch, roll.soft_sequence, pool_batch.size(),
                                      arch.max_len, false);
    auto real = discriminator_forward(tape, d, arch, tape.constant(embed_batch(pool_batch, embedding_)),
                                      pool_batch.size(), arch.max_len, false);
    if (bandwidths_.empty()) bandwidths_ = scaled_bandwidths(real.feature.value());
    Var l_g = mmd2(tape, real.feature, fake.feature, bandwidths_);
    const double value = l_g.scalar();
    if (!std::isfinite(value)) throw NumericError("non-finite generator loss");
    tape.backward(l_g);
    nn::AdamConfig adam{cfg_.learning_rate, 0.9, 0.999, 1e-8, cfg_.clip_norm};
    nn::adam_step(g, adam, ++g_updates_);
    return value;
  }

  static double batch_accuracy(const Matrix& logits, const std::vector<int>& labels, int K) {
    long correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      correct += classify_logits(logits.row(i).transpose(), K) == labels[static_cast<size_t>(i)];
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
  }

  struct LogRow {
    int epoch;
    long step;
    GanLossBreakdown losses;
    double labeled_accuracy;
  };

  void write_log(const std::string& path) {
    std::string body =
        "# optimizer: gradient descent on -l_d (l_d is maximized) and on l_g (minimized); "
        "l_d = l_dssl - lambda_r*l_recon + lambda_m*l_mmd2\n";
    body += "epoch,step,l_dssl,l_recon,l_mmd2,l_d,l_g,labeled_accuracy\n";
    for (const auto& row : log_rows_) {
      body += std::to_string(row.epoch) + "," + std::to_string(row.step) + "," +
              format_double(row.losses.l_dssl) + "," + format_double(row.losses.l_recon) + "," +
              format_double(row.losses.l_mmd2) + "," + format_double(row.losses.l_d) + "," +
              format_double(row.losses.l_g) + "," + format_double(row.labeled_accuracy) + "\n";
    }
    write_file(path, body);
  }

public:
  void set_dump_dir(const std::string& dir) { dump_dir_ = dir; }

private:
  GanTrainConfig cfg_;
  Vocabulary vocab_;
  EmbeddingMatrix embedding_;
  SemiSupervisedSets sets_;
  std::vector<Document> unlabeled_pool_;
  GeneratorModel gen_;
  DiscriminatorModel disc_;
  Rng z_rng_{0};
  Rng shuffle_rng_{0};
  std::vector<double> bandwidths_;
  std::vector<LogRow> log_rows_;
  double last_labeled_accuracy_ = 0.0;
  long d_updates_ = 0;
  long g_updates_ = 0;
  std::string dump_dir_;
};

}  // namespace tad
