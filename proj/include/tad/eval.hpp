#pragma once

#include <tad/common.hpp>
#include <tad/io.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

// Evaluation harness for the detector: the positive class is "anomalous" and
// a sample is predicted positive when its reconstruction error exceeds the
// threshold. Truth labels exist only here; they never reach training or
// calibration code paths.

namespace tad {

struct BinaryOutcomeSet {
  std::vector<double> scores;  // reconstruction errors
  std::vector<bool> truth;     // true = anomalous origin

  void validate() const {
    if (scores.size() != truth.size()) throw ConfigError("outcome set: length mismatch");
    if (scores.empty()) throw ConfigError("outcome set: empty");
  }
};

// 0/0 resolves to 0 by convention, with a warning on stderr.
inline double precision(long tp, long fp) {
  if (tp < 0 || fp < 0) throw ConfigError("precision: negative counts");
  if (tp + fp == 0) {
    std::cerr << "warning: precision 0/0 resolved to 0 by convention\n";
    return 0.0;
  }
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

inline double recall(long tp, long fn) {
  if (tp < 0 || fn < 0) throw ConfigError("recall: negative counts");
  if (tp + fn == 0) {
    std::cerr << "warning: recall 0/0 resolved to 0 by convention\n";
    return 0.0;
  }
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

// Predicted anomalous iff score > tau.
inline Confusion confusion_at(const BinaryOutcomeSet& outcomes, double tau) {
  outcomes.validate();
  Confusion c;
  for (size_t i = 0; i < outcomes.scores.size(); ++i) {
    const bool predicted = outcomes.scores[i] > tau;
    const bool actual = outcomes.truth[i];
    if (predicted && actual) ++c.tp;
    else if (predicted && !actual) ++c.fp;
    else if (!predicted && actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double accuracy(const Confusion& c) {
  return c.total() == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  std::vector<RocPoint> curve;
  double auc = 0.0;
};

// Threshold sweep over distinct scores, descending; equal scores flip
// together, so ties are grouped by construction. The curve runs from (0,0)
// to (1,1); AUC is the trapezoidal area.
inline RocResult roc_auc(const BinaryOutcomeSet& outcomes) {
  outcomes.validate();
  long n_pos = 0, n_neg = 0;
  for (bool t : outcomes.truth) (t ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw ConfigError("roc_auc: both truth classes must be present");

  // Group by distinct score, descending.
  std::map<double, std::pair<long, long>> groups;  // score -> (pos, neg)
  for (size_t i = 0; i < outcomes.scores.size(); ++i) {
    auto& g = groups[outcomes.scores[i]];
    (outcomes.truth[i] ? g.first : g.second)++;
  }

  RocResult out;
  out.curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  long tp = 0, fp = 0;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    tp += it->second.first;
    fp += it->second.second;
    // Threshold just below this score group: predicted positive iff score > t.
    out.curve.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                         static_cast<double>(tp) / static_cast<double>(n_pos), it->first});
  }
  double auc = 0.0;
  for (size_t i = 1; i < out.curve.size(); ++i) {
    const auto& a = out.curve[i - 1];
    const auto& b = out.curve[i];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  out.auc = auc;
  return out;
}

struct CurvePoint {
  double threshold = 0.0;
  double value = 0.0;
};

// Recall of the anomalous class at each grid threshold.
inline std::vector<CurvePoint> recall_vs_threshold(const BinaryOutcomeSet& outcomes,
                                                   const std::vector<double>& grid) {
  outcomes.validate();
  if (grid.empty()) throw ConfigError("recall_vs_threshold: empty grid");
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  for (double tau : grid) {
    const Confusion c = confusion_at(outcomes, tau);
    out.push_back({tau, recall(c.tp, c.fn)});
  }
  return out;
}

// Precision/recall pairs along the same threshold sweep as the ROC.
inline std::vector<std::pair<double, double>> precision_recall_curve(
    const BinaryOutcomeSet& outcomes) {
  outcomes.validate();
  std::map<double, std::pair<long, long>> groups;
  long n_pos = 0;
  for (size_t i = 0; i < outcomes.scores.size(); ++i) {
    auto& g = groups[outcomes.scores[i]];
    (outcomes.truth[i] ? g.first : g.second)++;
    n_pos += outcomes.truth[i];
  }
  std::vector<std::pair<double, double>> out;  // (recall, precision)
  long tp = 0, fp = 0;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    tp += it->second.first;
    fp += it->second.second;
    out.emplace_back(n_pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_pos),
                     precision(tp, fp));
  }
  return out;
}

// 100 evenly spaced quantiles of the observed scores.
inline std::vector<double> quantile_grid(const std::vector<double>& scores, int n_points = 100) {
  if (scores.empty()) throw ConfigError("quantile_grid: empty scores");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> grid;
  grid.reserve(static_cast<size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    const double h = static_cast<double>(i) / static_cast<double>(n_points - 1) *
                     static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    grid.push_back(sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]));
  }
  return grid;
}

struct HistogramBin {
  double lo = 0.0, hi = 0.0;
  long count_baseline = 0;
  long count_novel = 0;
};

inline std::vector<HistogramBin> score_histogram(const std::vector<double>& baseline,
                                                 const std::vector<double>& novel, int bins = 30) {
  if (baseline.empty() && novel.empty()) throw ConfigError("score_histogram: no scores");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : baseline) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : novel) lo = std::min(lo, v), hi = std::max(hi, v);
  if (hi <= lo) hi = lo + 1.0;
  std::vector<HistogramBin> out(static_cast<size_t>(bins));
  const double width = (hi - lo) / static_cast<double>(bins);
  for (int b = 0; b < bins; ++b) {
    out[static_cast<size_t>(b)].lo = lo + b * width;
    out[static_cast<size_t>(b)].hi = lo + (b + 1) * width;
  }
  auto place = [&](double v) {
    auto idx = static_cast<long>((v - lo) / width);
    return static_cast<size_t>(std::clamp<long>(idx, 0, bins - 1));
  };
  for (double v : baseline) out[place(v)].count_baseline++;
  for (double v : novel) out[place(v)].count_novel++;
  return out;
}

struct MetricsReport {
  double precision_at_tau = 0.0;
  double recall_at_tau = 0.0;
  double accuracy_at_tau = 0.0;
  double auc = 0.0;
  Confusion confusion;
  std::vector<RocPoint> roc_curve;
  std::vector<CurvePoint> recall_curve;                  // (threshold, recall)
  std::vector<std::pair<double, double>> pr_curve;       // (recall, precision)
  std::vector<HistogramBin> histogram;
  double tau_used = 0.0;
  std::vector<double> scores_baseline;
  std::vector<double> scores_novel;
};

inline MetricsReport build_report(const BinaryOutcomeSet& outcomes, double tau,
                                  int histogram_bins = 30) {
  outcomes.validate();
  MetricsReport r;
  r.tau_used = tau;
  r.confusion = confusion_at(outcomes, tau);
  r.precision_at_tau = precision(r.confusion.tp, r.confusion.fp);
  r.recall_at_tau = recall(r.confusion.tp, r.confusion.fn);
  r.accuracy_at_tau = accuracy(r.confusion);
  const RocResult roc = roc_auc(outcomes);
  r.auc = roc.auc;
  r.roc_curve = roc.curve;
  r.recall_curve = recall_vs_threshold(outcomes, quantile_grid(outcomes.scores));
  r.pr_curve = precision_recall_curve(outcomes);
  for (size_t i = 0; i < outcomes.scores.size(); ++i)
    (outcomes.truth[i] ? r.scores_novel : r.scores_baseline).push_back(outcomes.scores[i]);
  r.histogram = score_histogram(r.scores_baseline, r.scores_novel, histogram_bins);
  return r;
}

// ---- emission ----

namespace eval_detail {

// Minimal deterministic SVG line plot.
inline std::string svg_plot(const std::vector<std::pair<double, double>>& points,
                            const std::string& title, const std::string& x_label,
                            const std::string& y_label) {
  const int w = 480, h = 360, m = 48;
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& [x, y] : points) {
    xlo = std::min(xlo, x), xhi = std::max(xhi, x);
    ylo = std::min(ylo, y), yhi = std::max(yhi, y);
  }
  if (!(xhi > xlo)) xhi = xlo + 1.0;
  if (!(yhi > ylo)) yhi = ylo + 1.0;
  auto sx = [&](double x) { return m + (x - xlo) / (xhi - xlo) * (w - 2 * m); };
  auto sy = [&](double y) { return h - m - (y - ylo) / (yhi - ylo) * (h - 2 * m); };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
                  "\" height=\"" + std::to_string(h) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(w / 2) + "\" y=\"20\" text-anchor=\"middle\">" + title +
       "</text>\n";
  s += "<text x=\"" + std::to_string(w / 2) + "\" y=\"" + std::to_string(h - 10) +
       "\" text-anchor=\"middle\" font-size=\"11\">" + x_label + "</text>\n";
  s += "<text x=\"14\" y=\"" + std::to_string(h / 2) + "\" text-anchor=\"middle\" font-size=\"11\" "
       "transform=\"rotate(-90 14 " + std::to_string(h / 2) + ")\">" + y_label + "</text>\n";
  s += "<polyline fill=\"none\" stroke=\"black\" points=\"";
  for (const auto& [x, y] : points) s += format_double(sx(x)) + "," + format_double(sy(y)) + " ";
  s += "\"/>\n</svg>\n";
  return s;
}

}  // namespace eval_detail

// Writes CSVs for every curve plus the confusion matrix and a summary; file
// contents are byte-stable for fixed inputs. Plot files are optional so the
// suite can run headless.
inline std::vector<std::string> emit_report(const MetricsReport& report, const std::string& out_dir,
                                            bool plots = false) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& body) {
    const std::string path = out_dir + "/" + name;
    write_file(path, body);
    written.push_back(path);
  };

  {
    CsvWriter csv({"fpr", "tpr", "threshold"});
    for (const auto& p : report.roc_curve)
      csv.row({format_double(p.fpr), format_double(p.tpr), format_double(p.threshold)});
    emit("roc.csv", csv.str());
  }
  {
    CsvWriter csv({"threshold", "recall"});
    for (const auto& p : report.recall_curve)
      csv.row({format_double(p.threshold), format_double(p.value)});
    emit("recall_vs_error.csv", csv.str());
  }
  {
    CsvWriter csv({"recall", "precision"});
    for (const auto& [rec, prec] : report.pr_curve)
      csv.row({format_double(rec), format_double(prec)});
    emit("precision_recall.csv", csv.str());
  }
  {
    CsvWriter csv({"bin_lo", "bin_hi", "count_baseline", "count_novel"});
    for (const auto& b : report.histogram)
      csv.row({format_double(b.lo), format_double(b.hi), std::to_string(b.count_baseline),
               std::to_string(b.count_novel)});
    emit("error_histogram.csv", csv.str());
  }
  {
    CsvWriter csv({"predicted", "actual_baseline", "actual_anomalous"});
    csv.row({"baseline", std::to_string(report.confusion.tn), std::to_string(report.confusion.fn)});
    csv.row({"anomalous", std::to_string(report.confusion.fp), std::to_string(report.confusion.tp)});
    emit("confusion.csv", csv.str());
  }
  {
    Json j;
    j["precision"] = report.precision_at_tau;
    j["recall"] = report.recall_at_tau;
    j["accuracy"] = report.accuracy_at_tau;
    j["auc"] = report.auc;
    j["tau"] = report.tau_used;
    j["n_baseline"] = report.scores_baseline.size();
    j["n_novel"] = report.scores_novel.size();
    emit("metrics.json", j.dump(2) + "\n");
  }

  if (plots) {
    std::vector<std::pair<double, double>> roc_pts, recall_pts, pr_pts;
    for (const auto& p : report.roc_curve) roc_pts.emplace_back(p.fpr, p.tpr);
    for (const auto& p : report.recall_curve) recall_pts.emplace_back(p.threshold, p.value);
    for (const auto& p : report.pr_curve) pr_pts.emplace_back(p.first, p.second);
    emit("roc.svg", eval_detail::svg_plot(roc_pts, "ROC (AUC " + format_double(report.auc) + ")",
                                          "false positive rate", "true positive rate"));
    emit("recall_vs_error.svg",
         eval_detail::svg_plot(recall_pts, "Recall vs reconstruction-error threshold", "threshold",
                               "recall"));
    emit("precision_recall.svg",
         eval_detail::svg_plot(pr_pts, "Precision vs recall", "recall", "precision"));
  }
  return written;
}

// Training/validation loss curves (the loss-panel analog); rows are
// (epoch, train_loss, val_loss).
inline void emit_loss_curve(const std::vector<std::array<double, 3>>& rows,
                            const std::string& path) {
  CsvWriter csv({"epoch", "train_loss", "val_loss"});
  for (const auto& r : rows)
    csv.row({format_double(r[0]), format_double(r[1]), format_double(r[2])});
  csv.save(path);
}

}  // namespace tad
