#pragma once

#include <tad/common.hpp>
#include <tad/corpus.hpp>
#include <tad/gan.hpp>
#include <tad/io.hpp>

#include <optional>
#include <string>
#include <vector>

// Sequences of per-layer discriminator statistics (one vector V_l per layer,
// one sequence per sample). Layers have different widths, so each sequence is
// zero-padded to the widest layer with a mask; standardization is fit on
// baseline data only.

namespace tad {

struct LayerStatSequence {
  std::string sample_id;
  Matrix padded;  // L_layers x d_stat
  Matrix mask;    // same shape, 1 = real value, 0 = padding
  std::optional<int> origin_label;
  bool is_ood = false;
};

struct LayerSpec {
  std::string name;
  int dim = 0;
};

struct StatsManifest {
  std::string gan_checkpoint_id;
  std::vector<LayerSpec> layers;
  int d_stat = 0;
  std::string scaler_id;  // empty while unscaled
  std::string split;      // e.g. "ae-train", "ae-val", "eval-baseline", "eval-novel"
  uint64_t seed = 0;
};

struct StatsDataset {
  StatsManifest manifest;
  std::vector<LayerStatSequence> sequences;

  void check_shapes() const {
    const auto L = static_cast<Eigen::Index>(manifest.layers.size());
    for (const auto& s : sequences) {
      if (s.padded.rows() != L || s.padded.cols() != manifest.d_stat ||
          s.mask.rows() != L || s.mask.cols() != manifest.d_stat)
        throw ArtifactError("stats sequence shape does not match manifest");
    }
  }
};

// Zero-pad ragged layer vectors to the widest layer; mask marks real entries.
inline std::pair<Matrix, Matrix> pad_and_mask(const std::vector<Vector>& layers) {
  if (layers.empty()) throw ConfigError("pad_and_mask: no layers");
  Eigen::Index d_stat = 0;
  for (const auto& v : layers) d_stat = std::max(d_stat, v.size());
  Matrix padded = Matrix::Zero(static_cast<Eigen::Index>(layers.size()), d_stat);
  Matrix mask = Matrix::Zero(static_cast<Eigen::Index>(layers.size()), d_stat);
  for (size_t i = 0; i < layers.size(); ++i) {
    padded.row(static_cast<Eigen::Index>(i)).head(layers[i].size()) = layers[i].transpose();
    mask.row(static_cast<Eigen::Index>(i)).head(layers[i].size()).setOnes();
  }
  return {padded, mask};
}

inline std::vector<Vector> unpad(const Matrix& padded, const Matrix& mask) {
  std::vector<Vector> out;
  for (Eigen::Index i = 0; i < padded.rows(); ++i) {
    Eigen::Index width = 0;
    while (width < mask.cols() && mask(i, width) == 1.0) ++width;
    out.push_back(padded.row(i).head(width).transpose());
  }
  return out;
}

// Capture statistics for one batch of documents. Layer order is the fixed
// capture order of the discriminator; the embedding layer is never included.
inline std::vector<LayerStatSequence> extract_stats(DiscriminatorModel& disc,
                                                    const EmbeddingMatrix& emb, const Batch& batch,
                                                    const std::string& id_prefix, size_t first_index,
                                                    bool tag_ood) {
  const GanArch& arch = disc.arch;
  ad::Tape tape;
  auto bound = nn::bind(tape, disc.params, false);
  const int T = static_cast<int>(batch.token_ids.cols());
  auto graph = discriminator_forward(tape, bound, arch, tape.constant(embed_batch(batch, emb)),
                                     batch.size(), T, true);
  const auto spec = capture_layer_spec(arch);
  std::vector<LayerStatSequence> out;
  out.reserve(static_cast<size_t>(batch.size()));
  for (int i = 0; i < batch.size(); ++i) {
    std::vector<Vector> layers;
    layers.reserve(spec.size());
    for (const auto& [name, var] : graph.layers) layers.push_back(var.value().row(i).transpose());
    LayerStatSequence seq;
    seq.sample_id = id_prefix + std::to_string(first_index + static_cast<size_t>(i));
    std::tie(seq.padded, seq.mask) = pad_and_mask(layers);
    if (batch.labels[static_cast<size_t>(i)] != 0) seq.origin_label = batch.labels[static_cast<size_t>(i)];
    seq.is_ood = tag_ood;
    out.push_back(std::move(seq));
  }
  return out;
}

inline std::vector<LayerSpec> layer_specs(const GanArch& arch) {
  std::vector<LayerSpec> out;
  for (const auto& [name, dim] : capture_layer_spec(arch)) out.push_back({name, dim});
  return out;
}

// Dataset-level extraction over a document list.
inline StatsDataset extract_stats_dataset(DiscriminatorModel& disc, const EmbeddingMatrix& emb,
                                          const std::vector<Document>& docs, int batch_size,
                                          int max_len, const std::string& gan_checkpoint_id,
                                          const std::string& split, const std::string& id_prefix,
                                          bool tag_ood, uint64_t seed) {
  StatsDataset ds;
  ds.manifest.gan_checkpoint_id = gan_checkpoint_id;
  ds.manifest.layers = layer_specs(disc.arch);
  int d_stat = 0;
  for (const auto& l : ds.manifest.layers) d_stat = std::max(d_stat, l.dim);
  ds.manifest.d_stat = d_stat;
  ds.manifest.split = split;
  ds.manifest.seed = seed;
  BatchStream stream(docs, batch_size, max_len);
  size_t index = 0;
  while (auto batch = stream.next()) {
    auto seqs = extract_stats(disc, emb, *batch, id_prefix, index, tag_ood);
    index += seqs.size();
    for (auto& s : seqs) ds.sequences.push_back(std::move(s));
  }
  ds.check_shapes();
  return ds;
}

// ---- standardization ----

struct StatsScaler {
  Matrix mean;  // L_layers x d_stat
  Matrix stddev;
  long fit_count = 0;
  double epsilon = 1e-6;
  std::string gan_checkpoint_id;
};

inline void require_baseline_only(const StatsDataset& ds, const std::string& consumer) {
  for (const auto& s : ds.sequences)
    if (s.is_ood)
      throw ArtifactError(consumer + " consumes baseline data only, but sequence '" + s.sample_id +
                          "' is tagged out-of-distribution");
}

// Per-position mean/std over unmasked entries of baseline sequences.
inline StatsScaler fit_scaler(const StatsDataset& baseline, double epsilon = 1e-6) {
  if (baseline.sequences.empty()) throw ConfigError("fit_scaler: empty baseline dataset");
  require_baseline_only(baseline, "fit_scaler");
  baseline.check_shapes();
  const Matrix& mask = baseline.sequences.front().mask;
  StatsScaler sc;
  sc.epsilon = epsilon;
  sc.fit_count = static_cast<long>(baseline.sequences.size());
  sc.gan_checkpoint_id = baseline.manifest.gan_checkpoint_id;
  sc.mean = Matrix::Zero(mask.rows(), mask.cols());
  for (const auto& s : baseline.sequences) sc.mean += s.padded;
  sc.mean /= static_cast<double>(sc.fit_count);
  Matrix var = Matrix::Zero(mask.rows(), mask.cols());
  for (const auto& s : baseline.sequences) {
    const Matrix d = s.padded - sc.mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(sc.fit_count);
  sc.stddev = var.cwiseSqrt().cwiseMax(epsilon);
  // Masked positions are identically zero; keep them that way after scaling.
  sc.mean = sc.mean.cwiseProduct(mask);
  sc.stddev = (sc.stddev.array() * mask.array() + (1.0 - mask.array())).matrix();
  return sc;
}

inline LayerStatSequence apply_scaler(const StatsScaler& sc, const LayerStatSequence& seq) {
  if (seq.padded.rows() != sc.mean.rows() || seq.padded.cols() != sc.mean.cols())
    throw ArtifactError("apply_scaler: shape mismatch");
  LayerStatSequence out = seq;
  out.padded = ((seq.padded - sc.mean).cwiseQuotient(sc.stddev)).cwiseProduct(seq.mask);
  return out;
}

inline LayerStatSequence inverse_scale(const StatsScaler& sc, const LayerStatSequence& seq) {
  if (seq.padded.rows() != sc.mean.rows() || seq.padded.cols() != sc.mean.cols())
    throw ArtifactError("inverse_scale: shape mismatch");
  LayerStatSequence out = seq;
  out.padded = (seq.padded.cwiseProduct(sc.stddev) + sc.mean).cwiseProduct(seq.mask);
  return out;
}

// Scaling a dataset stamps the scaler id into the manifest; a second
// application is rejected rather than silently compounding.
inline StatsDataset apply_scaler(const StatsScaler& sc, const StatsDataset& ds,
                                 const std::string& scaler_id) {
  if (!ds.manifest.scaler_id.empty())
    throw ArtifactError("dataset already scaled with scaler " + ds.manifest.scaler_id);
  if (sc.gan_checkpoint_id != ds.manifest.gan_checkpoint_id)
    throw ArtifactError("scaler and stats come from different gan checkpoints");
  StatsDataset out;
  out.manifest = ds.manifest;
  out.manifest.scaler_id = scaler_id;
  out.sequences.reserve(ds.sequences.size());
  for (const auto& s : ds.sequences) out.sequences.push_back(apply_scaler(sc, s));
  return out;
}

// ---- persistence ----

inline Json layer_specs_json(const std::vector<LayerSpec>& layers) {
  Json out = Json::array();
  for (const auto& l : layers) out.push_back(Json{{"name", l.name}, {"dim", l.dim}});
  return out;
}

inline std::vector<LayerSpec> layer_specs_from_json(const Json& j) {
  std::vector<LayerSpec> out;
  for (const auto& item : j) out.push_back({item.at("name"), item.at("dim")});
  return out;
}

inline BinContainer stats_container(const StatsDataset& ds) {
  ds.check_shapes();
  BinContainer c;
  c.kind = "stats_dataset";
  c.header["format_version"] = kFormatVersion;
  c.header["gan_checkpoint_id"] = ds.manifest.gan_checkpoint_id;
  c.header["layers"] = layer_specs_json(ds.manifest.layers);
  c.header["d_stat"] = ds.manifest.d_stat;
  c.header["scaler_id"] = ds.manifest.scaler_id;
  c.header["split"] = ds.manifest.split;
  c.header["seed"] = ds.manifest.seed;
  Json samples = Json::array();
  for (size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& s = ds.sequences[i];
    Json meta;
    meta["sample_id"] = s.sample_id;
    meta["is_ood"] = s.is_ood;
    if (s.origin_label) meta["origin_label"] = *s.origin_label;
    samples.push_back(meta);
    c.blobs.emplace_back("seq" + std::to_string(i), s.padded);
    c.blobs.emplace_back("mask" + std::to_string(i), s.mask);
  }
  c.header["samples"] = samples;
  return c;
}

inline std::string save_stats(const StatsDataset& ds, const std::string& path) {
  return save_container(stats_container(ds), path);
}

inline std::pair<StatsDataset, std::string> load_stats(const std::string& path) {
  auto [c, id] = load_container(path, "stats_dataset");
  if (c.header.at("format_version") != kFormatVersion)
    throw ArtifactError("stats dataset format version mismatch: " + path);
  StatsDataset ds;
  ds.manifest.gan_checkpoint_id = c.header.at("gan_checkpoint_id");
  ds.manifest.layers = layer_specs_from_json(c.header.at("layers"));
  ds.manifest.d_stat = c.header.at("d_stat");
  ds.manifest.scaler_id = c.header.at("scaler_id");
  ds.manifest.split = c.header.at("split");
  ds.manifest.seed = c.header.at("seed");
  const Json& samples = c.header.at("samples");
  for (size_t i = 0; i < samples.size(); ++i) {
    LayerStatSequence s;
    s.sample_id = samples[i].at("sample_id");
    s.is_ood = samples[i].at("is_ood");
    if (samples[i].contains("origin_label")) s.origin_label = samples[i].at("origin_label").get<int>();
    s.padded = c.blob("seq" + std::to_string(i));
    s.mask = c.blob("mask" + std::to_string(i));
    ds.sequences.push_back(std::move(s));
  }
  ds.check_shapes();
  return {std::move(ds), id};
}

inline BinContainer scaler_container(const StatsScaler& sc) {
  BinContainer c;
  c.kind = "stats_scaler";
  c.header["format_version"] = kFormatVersion;
  c.header["fit_count"] = sc.fit_count;
  c.header["epsilon"] = sc.epsilon;
  c.header["gan_checkpoint_id"] = sc.gan_checkpoint_id;
  c.blobs.emplace_back("mean", sc.mean);
  c.blobs.emplace_back("stddev", sc.stddev);
  return c;
}

inline std::string save_scaler(const StatsScaler& sc, const std::string& path) {
  return save_container(scaler_container(sc), path);
}

inline std::pair<StatsScaler, std::string> load_scaler(const std::string& path) {
  auto [c, id] = load_container(path, "stats_scaler");
  StatsScaler sc;
  sc.fit_count = c.header.at("fit_count");
  sc.epsilon = c.header.at("epsilon");
  sc.gan_checkpoint_id = c.header.at("gan_checkpoint_id");
  sc.mean = c.blob("mean");
  sc.stddev = c.blob("stddev");
  return {std::move(sc), id};
}

}  // namespace tad
