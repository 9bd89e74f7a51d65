#pragma once

#include <tad/common.hpp>
#include <tad/io.hpp>
#include <tad/rng.hpp>

#include <cstdio>
#include <string>
#include <vector>

// Synthetic two-distribution corpus over disjoint vocabulary halves: baseline
// classes draw from the "a" half (one disjoint slice per class), novel
// documents from the "b" half. Used by the end-to-end tests and the demo.

namespace tad {

struct SyntheticSpec {
  int n_baseline = 2000;       // total baseline documents, spread over K classes
  int n_novel = 2000;
  int K = 2;
  int tokens_per_class = 50;   // "a" half size = K * tokens_per_class
  int novel_tokens = 100;      // "b" half size
  int min_len = 5;
  int max_len = 19;            // token count before the EOS terminator
  uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::string baseline_path;   // labeled-tsv
  std::string novel_path;      // one-doc-per-line
  std::string embedding_path;  // covers both halves
};

namespace synth_detail {

inline std::string token_name(char half, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%03d", half, index);
  return std::string(buf);
}

}  // namespace synth_detail

// Writes baseline.tsv, novel.txt and embeddings.txt under dir.
inline SyntheticCorpus write_synthetic_corpus(const SyntheticSpec& spec, const std::string& dir,
                                              int embedding_dim = 32) {
  if (spec.K < 1 || spec.n_baseline < spec.K || spec.n_novel < 1)
    throw ConfigError("synthetic corpus: bad sizes");
  if (spec.min_len < 1 || spec.max_len < spec.min_len)
    throw ConfigError("synthetic corpus: bad length range");
  Rng rng = Rng(spec.seed).fork(0x57a7);

  auto doc_of = [&](char half, int lo, int span) {
    const int len = spec.min_len + static_cast<int>(rng.uniform_index(
                                       static_cast<size_t>(spec.max_len - spec.min_len + 1)));
    std::string text;
    for (int t = 0; t < len; ++t) {
      if (t) text += ' ';
      text += synth_detail::token_name(half, lo + static_cast<int>(rng.uniform_index(
                                                      static_cast<size_t>(span))));
    }
    return text;
  };

  std::string baseline;
  for (int i = 0; i < spec.n_baseline; ++i) {
    const int cls = (i % spec.K) + 1;
    baseline += std::to_string(cls) + "\t" +
                doc_of('a', (cls - 1) * spec.tokens_per_class, spec.tokens_per_class) + "\n";
  }
  std::string novel;
  for (int i = 0; i < spec.n_novel; ++i) novel += doc_of('b', 0, spec.novel_tokens) + "\n";

  std::string embeddings;
  Rng emb_rng = Rng(spec.seed).fork(0x57a8);
  auto emit_rows = [&](char half, int count) {
    for (int i = 0; i < count; ++i) {
      embeddings += synth_detail::token_name(half, i);
      for (int jdim = 0; jdim < embedding_dim; ++jdim) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), " %.6f", emb_rng.uniform(-0.5, 0.5));
        embeddings += buf;
      }
      embeddings += '\n';
    }
  };
  emit_rows('a', spec.K * spec.tokens_per_class);
  emit_rows('b', spec.novel_tokens);

  SyntheticCorpus out;
  out.baseline_path = dir + "/baseline.tsv";
  out.novel_path = dir + "/novel.txt";
  out.embedding_path = dir + "/embeddings.txt";
  write_file(out.baseline_path, baseline);
  write_file(out.novel_path, novel);
  write_file(out.embedding_path, embeddings);
  return out;
}

}  // namespace tad
