// Command-line front end for the text anomaly detection pipeline.
//
//   tad <stage> --config <path> [--input <file>] [--out <dir>]
//
// Stages: train-gan, extract-stats, train-ae, calibrate, detect, evaluate.
// detect reads documents from --input or standard input (one per line) and
// emits one JSON verdict per line on standard output.
//
// Exit codes: 0 success, 1 usage/config error, 2 artifact-chain error,
// 3 numerical failure.

#include <tad/tad.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

namespace {

struct StageOptions {
  std::string config_path;
  std::string input_path;
  std::string out_dir;
  bool plots = false;
};

tad::Config make_config(const StageOptions& opt) {
  tad::Config cfg = tad::load_config(opt.config_path);
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (opt.plots) cfg.eval_plots = true;
  cfg.validate();
  return cfg;
}

int run(const std::string& stage_name, const StageOptions& opt) {
  const tad::Stage stage = tad::stage_from_string(stage_name);
  const tad::Config cfg = make_config(opt);
  if (stage == tad::Stage::kDetect) {
    if (!opt.input_path.empty()) {
      std::ifstream in(opt.input_path);
      if (!in) throw tad::ConfigError("cannot open input file: " + opt.input_path);
      return tad::stage_detect(cfg, in, std::cout);
    }
    return tad::stage_detect(cfg, std::cin, std::cout);
  }
  tad::run_stage(stage, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level text anomaly detection: semi-supervised text GAN + "
               "LSTM autoencoder over discriminator layer statistics"};
  app.require_subcommand(1);

  StageOptions opt;
  const std::vector<std::string> stages = {"train-gan", "extract-stats", "train-ae",
                                           "calibrate", "detect", "evaluate"};
  for (const auto& name : stages) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "JSON config file")->required();
    sub->add_option("--out", opt.out_dir, "output directory (overrides config out_dir)");
    if (name == "detect")
      sub->add_option("--input", opt.input_path, "documents, one per line (default: stdin)");
    if (name == "evaluate") sub->add_flag("--plots", opt.plots, "also emit SVG plots");
  }

  auto* synth = app.add_subcommand("synth-corpus", "write a synthetic two-distribution corpus");
  tad::SyntheticSpec spec;
  std::string synth_dir = "data";
  int synth_dim = 32;
  synth->add_option("--out", synth_dir, "output directory");
  synth->add_option("--baseline", spec.n_baseline, "baseline document count");
  synth->add_option("--novel", spec.n_novel, "novel document count");
  synth->add_option("--classes", spec.K, "number of baseline classes");
  synth->add_option("--seed", spec.seed, "corpus seed");
  synth->add_option("--min-len", spec.min_len, "minimum document length");
  synth->add_option("--max-len", spec.max_len, "maximum document length");
  synth->add_option("--embedding-dim", synth_dim, "embedding file dimensionality");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto corpus = tad::write_synthetic_corpus(spec, synth_dir, synth_dim);
      std::cout << "baseline: " << corpus.baseline_path << "\n"
                << "novel: " << corpus.novel_path << "\n"
                << "embeddings: " << corpus.embedding_path << "\n";
      return 0;
    }
    for (const auto& name : stages)
      if (app.get_subcommand(name)->parsed()) return run(name, opt);
    std::cerr << "no stage selected\n";
    return 1;
  } catch (const tad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const tad::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 2;
  } catch (const tad::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
