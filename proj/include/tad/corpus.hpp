#pragma once

#include <tad/common.hpp>
#include <tad/io.hpp>
#include <tad/rng.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

// Corpus ingestion: raw text -> token ids -> splits and batches for the
// semi-supervised trainer. Every operation is a pure function of its inputs
// and a seed.

namespace tad {

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  Vocabulary() {
    for (const char* s : {"<pad>", "<unk>", "</s>"}) {
      token_to_id.emplace(s, static_cast<int>(id_to_token.size()));
      id_to_token.emplace_back(s);
    }
  }

  int size() const { return static_cast<int>(id_to_token.size()); }

  int add(const std::string& tok) {
    auto it = token_to_id.find(tok);
    if (it != token_to_id.end()) return it->second;
    const int id = size();
    token_to_id.emplace(tok, id);
    id_to_token.push_back(tok);
    return id;
  }

  int id_of(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= size()) throw ConfigError("token id out of range");
    return id_to_token[static_cast<size_t>(id)];
  }
};

// Lowercased ASCII, split on whitespace and punctuation boundaries. Multibyte
// UTF-8 sequences count as word characters so non-ASCII text stays intact.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
      flush();
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  flush();
  return out;
}

struct RawDocument {
  std::string text;
  std::optional<int> label;  // class id in 1..K
};

enum class CorpusFormat { kOneDocPerLine, kLabeledTsv };

inline CorpusFormat corpus_format_from_string(const std::string& s) {
  if (s == "one-doc-per-line") return CorpusFormat::kOneDocPerLine;
  if (s == "labeled-tsv") return CorpusFormat::kLabeledTsv;
  throw ConfigError("unknown corpus format: " + s);
}

inline std::vector<RawDocument> load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw ConfigError("corpus file not found: " + path);
  std::vector<RawDocument> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    RawDocument d;
    if (format == CorpusFormat::kLabeledTsv) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(line_no) + ": expected label<TAB>text");
      try {
        size_t used = 0;
        const int label = std::stoi(line.substr(0, tab), &used);
        if (used != tab || label < 1)
          throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed label");
        d.label = label;
      } catch (const std::logic_error&) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed label");
      }
      d.text = line.substr(tab + 1);
    } else {
      d.text = line;
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

// Token ids, EOS-terminated, never padded here; length <= max_len.
struct Document {
  std::vector<int> tokens;
  std::optional<int> label;
};

// Truncation keeps the first max_len - 1 tokens and always terminates with EOS.
inline Document encode_document(const RawDocument& raw, const Vocabulary& vocab, int max_len) {
  Document d;
  d.label = raw.label;
  const auto toks = tokenize(raw.text);
  const size_t keep = std::min(toks.size(), static_cast<size_t>(max_len - 1));
  d.tokens.reserve(keep + 1);
  for (size_t i = 0; i < keep; ++i) d.tokens.push_back(vocab.id_of(toks[i]));
  d.tokens.push_back(Vocabulary::kEos);
  return d;
}

inline std::string detokenize(const Document& d, const Vocabulary& vocab) {
  std::string out;
  for (int id : d.tokens) {
    if (id == Vocabulary::kEos || id == Vocabulary::kPad) break;
    if (!out.empty()) out += ' ';
    out += vocab.token_of(id);
  }
  return out;
}

// Frequency >= min_freq, capped at max_size by descending frequency with
// lexicographic tie-break. Specials are always present.
inline Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, int min_freq, int max_size) {
  if (docs.empty()) throw ConfigError("build_vocabulary: empty corpus");
  std::map<std::string, long> freq;
  for (const auto& d : docs)
    for (const auto& tok : tokenize(d.text)) ++freq[tok];
  std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [tok, f] : items) {
    if (f < min_freq) break;
    if (vocab.size() >= max_size + 3) break;  // cap excludes the three specials
    vocab.add(tok);
  }
  return vocab;
}

struct EmbeddingMatrix {
  Matrix w;  // |V| x d_e; PAD row is all zeros
  int dim() const { return static_cast<int>(w.cols()); }
};

inline EmbeddingMatrix random_embeddings(const Vocabulary& vocab, int d_e, uint64_t seed) {
  Rng rng = Rng(seed).fork(0x456d62);
  EmbeddingMatrix e;
  e.w.resize(vocab.size(), d_e);
  for (Eigen::Index i = 0; i < e.w.rows(); ++i)
    for (Eigen::Index j = 0; j < d_e; ++j) e.w(i, j) = rng.uniform(-0.25, 0.25);
  e.w.row(Vocabulary::kPad).setZero();
  return e;
}

// Pretrained-embedding text format: token then d_e decimals per line.
// In-file vocabulary rows are copied verbatim; OOV rows are drawn from
// uniform(-0.25, 0.25) under the seed; the PAD row is zeroed.
inline EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab, int d_e,
                                       uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("embedding file not found: " + path);
  EmbeddingMatrix e = random_embeddings(vocab, d_e, seed);
  std::string line;
  size_t line_no = 0;
  std::vector<char> seen(static_cast<size_t>(vocab.size()), 0);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    auto it = vocab.token_to_id.find(tok);
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (!ss.eof())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": unparseable embedding line");
    if (static_cast<int>(vals.size()) != d_e)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(d_e) +
                        " components, found " + std::to_string(vals.size()));
    if (it == vocab.token_to_id.end()) continue;
    for (int j = 0; j < d_e; ++j) e.w(it->second, j) = vals[static_cast<size_t>(j)];
    seen[static_cast<size_t>(it->second)] = 1;
  }
  e.w.row(Vocabulary::kPad).setZero();
  return e;
}

struct CorpusSplit {
  std::vector<Document> train;
  std::vector<Document> validation;
  std::vector<Document> test;
  // Original corpus indices per partition, for the persisted manifest.
  std::vector<size_t> train_idx, validation_idx, test_idx;
  uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<size_t> train, validation, test;
};

// Deterministic shuffle under the seed, then contiguous partition. Membership
// depends only on (n, ratios, seed), never on document content.
inline SplitIndices split_indices(size_t n, const std::array<double, 3>& ratios, uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (n < 3) throw ConfigError("cannot split fewer than 3 documents");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).fork(0x5b711);
  rng.shuffle(order);
  auto n_train = static_cast<size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  auto n_val = static_cast<size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  SplitIndices idx;
  for (size_t i = 0; i < n; ++i) {
    if (i < n_train) idx.train.push_back(order[i]);
    else if (i < n_train + n_val) idx.validation.push_back(order[i]);
    else idx.test.push_back(order[i]);
  }
  return idx;
}

inline CorpusSplit split_corpus(const std::vector<Document>& docs,
                                const std::array<double, 3>& ratios, uint64_t seed) {
  const SplitIndices idx = split_indices(docs.size(), ratios, seed);
  CorpusSplit split;
  split.seed = seed;
  split.train_idx = idx.train;
  split.validation_idx = idx.validation;
  split.test_idx = idx.test;
  for (size_t i : idx.train) split.train.push_back(docs[i]);
  for (size_t i : idx.validation) split.validation.push_back(docs[i]);
  for (size_t i : idx.test) split.test.push_back(docs[i]);
  return split;
}

inline Json split_manifest_json(const CorpusSplit& split, const std::array<double, 3>& ratios) {
  Json j;
  j["seed"] = split.seed;
  j["ratios"] = ratios;
  j["train"] = split.train_idx;
  j["validation"] = split.validation_idx;
  j["test"] = split.test_idx;
  return j;
}

struct SemiSupervisedSets {
  std::vector<Document> labeled;    // the labeled subset, labels kept
  std::vector<Document> unlabeled;  // remainder, labels stripped
};

// Per-class stratified sample of ceil(fraction * |class|) documents.
inline SemiSupervisedSets make_semisupervised_sets(const std::vector<Document>& train,
                                                   double labeled_fraction, uint64_t seed,
                                                   int expected_classes = 0) {
  if (labeled_fraction <= 0.0 || labeled_fraction > 1.0)
    throw ConfigError("labeled_fraction must be in (0, 1]");
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < train.size(); ++i) {
    if (!train[i].label) throw ConfigError("make_semisupervised_sets: unlabeled training document");
    by_class[*train[i].label].push_back(i);
  }
  if (expected_classes > 0) {
    for (int k = 1; k <= expected_classes; ++k)
      if (!by_class.count(k))
        throw ConfigError("class " + std::to_string(k) + " has zero training documents");
  }
  Rng rng = Rng(seed).fork(0x1ab31);
  std::vector<char> is_labeled(train.size(), 0);
  for (auto& [cls, idxs] : by_class) {
    rng.shuffle(idxs);
    const auto want = static_cast<size_t>(
        std::ceil(labeled_fraction * static_cast<double>(idxs.size()) - 1e-12));
    for (size_t i = 0; i < want && i < idxs.size(); ++i) is_labeled[idxs[i]] = 1;
  }
  SemiSupervisedSets sets;
  for (size_t i = 0; i < train.size(); ++i) {
    if (is_labeled[i]) {
      sets.labeled.push_back(train[i]);
    } else {
      Document d = train[i];
      d.label.reset();
      sets.unlabeled.push_back(std::move(d));
    }
  }
  return sets;
}

struct Batch {
  // batch x max_len token ids, PAD-filled on the right.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> token_ids;
  std::vector<int> lengths;
  std::vector<int> labels;  // 0 where absent
  int size() const { return static_cast<int>(token_ids.rows()); }
};

inline Batch pad_documents(const std::vector<Document>& docs, size_t first, size_t count, int max_len) {
  Batch b;
  b.token_ids.setConstant(static_cast<Eigen::Index>(count), max_len, Vocabulary::kPad);
  for (size_t i = 0; i < count; ++i) {
    const Document& d = docs[first + i];
    std::vector<int> toks = d.tokens;
    if (static_cast<int>(toks.size()) > max_len) {
      toks.resize(static_cast<size_t>(max_len));
      toks.back() = Vocabulary::kEos;
    }
    for (size_t t = 0; t < toks.size(); ++t)
      b.token_ids(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = toks[t];
    b.lengths.push_back(static_cast<int>(toks.size()));
    b.labels.push_back(d.label.value_or(0));
  }
  return b;
}

// Single-consumer stream of fixed-width batches; the final batch may be short.
class BatchStream {
public:
  BatchStream(const std::vector<Document>& docs, int batch_size, int max_len)
      : docs_(docs), batch_size_(batch_size), max_len_(max_len) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }

  std::optional<Batch> next() {
    if (pos_ >= docs_.size()) return std::nullopt;
    const size_t count = std::min(static_cast<size_t>(batch_size_), docs_.size() - pos_);
    Batch b = pad_documents(docs_, pos_, count, max_len_);
    pos_ += count;
    return b;
  }

private:
  const std::vector<Document>& docs_;
  int batch_size_;
  int max_len_;
  size_t pos_ = 0;
};

// Embedded batch in sample-major stacking: row i * max_len + t is sample i,
// position t. This is the discriminator's input layout.
inline Matrix embed_batch(const Batch& batch, const EmbeddingMatrix& emb) {
  const int T = static_cast<int>(batch.token_ids.cols());
  Matrix out(batch.size() * T, emb.dim());
  for (int i = 0; i < batch.size(); ++i)
    for (int t = 0; t < T; ++t) out.row(i * T + t) = emb.w.row(batch.token_ids(i, t));
  return out;
}

}  // namespace tad
