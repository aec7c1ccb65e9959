// SPDX-License-Identifier: Apache-2.0
#include "snlds/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

#include "snlds/model/generative.hpp"

namespace snlds::eval {

using nn::ConfigurationError;

AlignMode parse_align_mode(const std::string& s) {
  if (s == "permutation") return AlignMode::permutation;
  if (s == "greedy") return AlignMode::greedy;
  if (s == "merging") return AlignMode::merging;
  throw ConfigurationError("unknown alignment mode '" + s + "' (permutation, greedy, merging)");
}

std::string to_string(AlignMode m) {
  switch (m) {
    case AlignMode::permutation: return "permutation";
    case AlignMode::greedy: return "greedy";
    case AlignMode::merging: return "merging";
  }
  return "permutation";
}

Labels decode(const Matrix& gamma1) {
  Labels out(static_cast<std::size_t>(gamma1.rows()));
  for (Eigen::Index t = 0; t < gamma1.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < gamma1.cols(); ++k) {
      if (gamma1(t, k) > gamma1(t, best)) best = k;
    }
    out[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return out;
}

Labels Alignment::relabel(std::span<const int> pred) const {
  Labels out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i];
    if (p < 0 || p >= static_cast<int>(mapping.size())) {
      throw ConfigurationError("predicted label " + std::to_string(p) + " has no alignment");
    }
    out[i] = mapping[static_cast<std::size_t>(p)];
  }
  return out;
}

namespace {

int label_count(std::span<const int> s, const char* what) {
  int n = 0;
  for (int v : s) {
    if (v < 0) throw ConfigurationError(std::string(what) + " labels must be non-negative");
    n = std::max(n, v + 1);
  }
  return n;
}

void check_lengths(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw ConfigurationError("prediction and truth lengths differ (" + std::to_string(pred.size()) +
                             " vs " + std::to_string(truth.size()) + ")");
  }
}

// confusion[p][c] = frames with prediction p and truth c.
std::vector<std::vector<int>> confusion(std::span<const int> pred, std::span<const int> truth,
                                        int Kp, int Kt) {
  std::vector<std::vector<int>> m(static_cast<std::size_t>(Kp),
                                  std::vector<int>(static_cast<std::size_t>(Kt), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++m[static_cast<std::size_t>(pred[i])][static_cast<std::size_t>(truth[i])];
  }
  return m;
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Macro F1 from per-class counts; classes with no truth frames are ignored.
double macro_f1(const std::vector<int>& tp, const std::vector<int>& predicted,
                const std::vector<int>& actual) {
  double P = 0.0, R = 0.0;
  int classes = 0;
  for (std::size_t c = 0; c < actual.size(); ++c) {
    if (actual[c] == 0) continue;
    ++classes;
    if (predicted[c] > 0) P += static_cast<double>(tp[c]) / predicted[c];
    R += static_cast<double>(tp[c]) / actual[c];
  }
  if (classes == 0) return 0.0;
  return harmonic(P / classes, R / classes);
}

Alignment align_permutation(const std::vector<std::vector<int>>& conf, int Kp, int Kt) {
  const int N = std::max(Kp, Kt);
  if (Kp > 8 || N > 8) {
    throw UnsupportedError("permutation alignment supports at most 8 labels (got " +
                           std::to_string(N) + ")");
  }
  std::vector<int> pred_count(static_cast<std::size_t>(Kp), 0);
  std::vector<int> actual(static_cast<std::size_t>(Kt), 0);
  for (int p = 0; p < Kp; ++p) {
    for (int c = 0; c < Kt; ++c) {
      pred_count[static_cast<std::size_t>(p)] += conf[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)];
      actual[static_cast<std::size_t>(c)] += conf[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)];
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_f1 = -1.0;
  std::vector<int> tp(static_cast<std::size_t>(Kt)), predicted(static_cast<std::size_t>(Kt));
  do {
    std::fill(tp.begin(), tp.end(), 0);
    std::fill(predicted.begin(), predicted.end(), 0);
    for (int p = 0; p < Kp; ++p) {
      const int c = perm[static_cast<std::size_t>(p)];
      if (c >= Kt) continue;
      tp[static_cast<std::size_t>(c)] = conf[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)];
      predicted[static_cast<std::size_t>(c)] = pred_count[static_cast<std::size_t>(p)];
    }
    const double f1 = macro_f1(tp, predicted, actual);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.resize(static_cast<std::size_t>(Kp));
  return Alignment{best};
}

Alignment align_greedy(const std::vector<std::vector<int>>& conf, int Kp, int Kt) {
  std::vector<std::tuple<int, int, int>> pairs;  // (-overlap, truth, pred)
  for (int p = 0; p < Kp; ++p) {
    for (int c = 0; c < Kt; ++c) {
      pairs.emplace_back(-conf[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)], c, p);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<int> mapping(static_cast<std::size_t>(Kp), -1);
  std::vector<bool> truth_used(static_cast<std::size_t>(Kt), false);
  for (const auto& [neg, c, p] : pairs) {
    if (mapping[static_cast<std::size_t>(p)] >= 0 || truth_used[static_cast<std::size_t>(c)]) continue;
    mapping[static_cast<std::size_t>(p)] = c;
    truth_used[static_cast<std::size_t>(c)] = true;
  }
  int spare = Kt;
  for (int& m : mapping) {
    if (m < 0) m = spare++;
  }
  return Alignment{mapping};
}

Alignment align_merging(const std::vector<std::vector<int>>& conf, int Kp, int Kt) {
  std::vector<int> mapping(static_cast<std::size_t>(Kp), 0);
  for (int p = 0; p < Kp; ++p) {
    const auto& row = conf[static_cast<std::size_t>(p)];
    int best = 0;
    for (int c = 1; c < Kt; ++c) {
      if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(best)]) best = c;
    }
    mapping[static_cast<std::size_t>(p)] = best;
  }
  return Alignment{mapping};
}

}  // namespace

Alignment align_labels(std::span<const int> pred, std::span<const int> truth, AlignMode mode) {
  check_lengths(pred, truth);
  const int Kp = label_count(pred, "predicted");
  const int Kt = label_count(truth, "truth");
  if (Kp == 0) return Alignment{};
  const auto conf = confusion(pred, truth, Kp, Kt);
  switch (mode) {
    case AlignMode::permutation: return align_permutation(conf, Kp, Kt);
    case AlignMode::greedy: return align_greedy(conf, Kp, Kt);
    case AlignMode::merging: return align_merging(conf, Kp, Kt);
  }
  return Alignment{};
}

double f1_frame(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth);
  if (truth.empty()) throw ConfigurationError("f1_frame is undefined for empty sequences");
  const int Kt = label_count(truth, "truth");
  label_count(pred, "predicted");
  std::vector<int> tp(static_cast<std::size_t>(Kt), 0), predicted(static_cast<std::size_t>(Kt), 0),
      actual(static_cast<std::size_t>(Kt), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto c = static_cast<std::size_t>(truth[i]);
    ++actual[c];
    if (pred[i] < Kt) ++predicted[static_cast<std::size_t>(pred[i])];
    if (pred[i] == truth[i]) ++tp[c];
  }
  return macro_f1(tp, predicted, actual);
}

SwitchCounts& SwitchCounts::operator+=(const SwitchCounts& o) {
  matched += o.matched;
  predicted += o.predicted;
  actual += o.actual;
  return *this;
}

double SwitchCounts::f1() const {
  if (actual == 0) return predicted == 0 ? 1.0 : 0.0;
  const double P = predicted > 0 ? static_cast<double>(matched) / predicted : 0.0;
  const double R = static_cast<double>(matched) / actual;
  return harmonic(P, R);
}

std::vector<int> change_points(std::span<const int> s) {
  std::vector<int> out;
  for (std::size_t t = 1; t < s.size(); ++t) {
    if (s[t] != s[t - 1]) out.push_back(static_cast<int>(t));
  }
  return out;
}

SwitchCounts switch_counts(std::span<const int> pred, std::span<const int> truth, int tolerance,
                           bool require_label_match) {
  check_lengths(pred, truth);
  if (tolerance < 0) throw ConfigurationError("tolerance must be non-negative");
  const std::vector<int> cp_pred = change_points(pred);
  const std::vector<int> cp_true = change_points(truth);
  // Candidate pairs ordered by distance, then time, so a wider tolerance only
  // appends candidates after the ones a narrower tolerance already saw.
  std::vector<std::tuple<int, int, int>> pairs;  // (|dt|, true index, pred index)
  for (std::size_t i = 0; i < cp_true.size(); ++i) {
    for (std::size_t j = 0; j < cp_pred.size(); ++j) {
      const int dt = std::abs(cp_pred[j] - cp_true[i]);
      if (dt > tolerance) continue;
      if (require_label_match &&
          pred[static_cast<std::size_t>(cp_pred[j])] != truth[static_cast<std::size_t>(cp_true[i])]) {
        continue;
      }
      pairs.emplace_back(dt, static_cast<int>(i), static_cast<int>(j));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_true(cp_true.size(), false), used_pred(cp_pred.size(), false);
  SwitchCounts out;
  out.predicted = static_cast<int>(cp_pred.size());
  out.actual = static_cast<int>(cp_true.size());
  for (const auto& [dt, i, j] : pairs) {
    if (used_true[static_cast<std::size_t>(i)] || used_pred[static_cast<std::size_t>(j)]) continue;
    used_true[static_cast<std::size_t>(i)] = true;
    used_pred[static_cast<std::size_t>(j)] = true;
    ++out.matched;
  }
  return out;
}

double f1_switch(std::span<const int> pred, std::span<const int> truth, int tolerance,
                 bool require_label_match) {
  return switch_counts(pred, truth, tolerance, require_label_match).f1();
}

DatasetScore score_dataset(const std::vector<Labels>& pred, const std::vector<Labels>& truth,
                           AlignMode mode, const std::vector<int>& tolerances,
                           bool require_label_match) {
  if (pred.size() != truth.size()) {
    throw ConfigurationError("prediction and truth sequence counts differ");
  }
  Labels all_pred, all_truth;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_lengths(pred[i], truth[i]);
    all_pred.insert(all_pred.end(), pred[i].begin(), pred[i].end());
    all_truth.insert(all_truth.end(), truth[i].begin(), truth[i].end());
  }
  DatasetScore score;
  score.alignment = align_labels(all_pred, all_truth, mode);
  score.f1_frame = f1_frame(score.alignment.relabel(all_pred), all_truth);
  score.tolerances = tolerances;
  for (int tol : tolerances) {
    SwitchCounts total;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      total += switch_counts(score.alignment.relabel(pred[i]), truth[i], tol, require_label_match);
    }
    score.f1_switch.push_back(total.f1());
  }
  return score;
}

std::vector<double> state_occupancy(const std::vector<Labels>& pred, int K) {
  std::vector<double> counts(static_cast<std::size_t>(K), 0.0);
  double total = 0.0;
  for (const Labels& s : pred) {
    for (int k : s) {
      if (k < 0 || k >= K) throw ConfigurationError("state label out of range");
      counts[static_cast<std::size_t>(k)] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (double& c : counts) c /= total;
  }
  return counts;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ConfigurationError("pearson needs two non-empty vectors of equal length");
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

Correlation mean_pairwise_correlation(const std::vector<std::vector<double>>& vectors) {
  Correlation out;
  double sum = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      const double r = pearson(vectors[i], vectors[j]);
      if (std::isnan(r)) {
        ++out.skipped;
        continue;
      }
      sum += r;
      ++out.pairs;
    }
  }
  out.mean = out.pairs > 0 ? sum / out.pairs : std::numeric_limits<double>::quiet_NaN();
  return out;
}

Correlation weight_correlation(model::GenerativeModel& gen) {
  const int K = gen.config().K;
  if (K < 2) throw ConfigurationError("weight_correlation needs at least two states");
  std::vector<std::vector<double>> flat;
  for (int k = 0; k < K; ++k) {
    std::vector<double> v;
    for (nn::Parameter* p : gen.transition_parameters(k)) {
      v.insert(v.end(), p->value().data(), p->value().data() + p->value().size());
    }
    flat.push_back(std::move(v));
  }
  return mean_pairwise_correlation(flat);
}

void write_report_header(std::ostream& out) {
  out << "dataset,model,seed,f1_frame,f1_switch_tol0,f1_switch_tol5,alignment_mode\n";
}

void write_report_row(std::ostream& out, const ReportRow& row) {
  out << row.dataset << ',' << row.model << ',' << row.seed << ',' << row.f1_frame << ','
      << row.f1_switch_tol0 << ',' << row.f1_switch_tol5 << ',' << to_string(row.alignment) << '\n';
}

void write_gamma_csv(std::ostream& out, const std::vector<Matrix>& gamma1) {
  out << "sequence,t,k,gamma\n";
  for (std::size_t i = 0; i < gamma1.size(); ++i) {
    for (Eigen::Index t = 0; t < gamma1[i].rows(); ++t) {
      for (Eigen::Index k = 0; k < gamma1[i].cols(); ++k) {
        out << i << ',' << t << ',' << k << ',' << gamma1[i](t, k) << '\n';
      }
    }
  }
}

std::vector<Matrix> read_gamma_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "sequence,t,k,gamma") {
    throw ConfigurationError("posterior CSV must start with 'sequence,t,k,gamma'");
  }
  struct Cell {
    long t, k;
    double g;
  };
  std::map<long, std::vector<Cell>> cells;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    long seq = 0;
    Cell c{};
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> seq >> c1 >> c.t >> c2 >> c.k >> c3 >> c.g) || c1 != ',' || c2 != ',' || c3 != ',' ||
        seq < 0 || c.t < 0 || c.k < 0) {
      throw ConfigurationError("posterior CSV line " + std::to_string(lineno) + " is malformed");
    }
    cells[seq].push_back(c);
  }
  std::vector<Matrix> out;
  for (const auto& [seq, list] : cells) {
    if (seq != static_cast<long>(out.size())) {
      throw ConfigurationError("posterior CSV skips sequence " + std::to_string(out.size()));
    }
    long T = 0, K = 0;
    for (const Cell& c : list) {
      T = std::max(T, c.t + 1);
      K = std::max(K, c.k + 1);
    }
    if (static_cast<long>(list.size()) != T * K) {
      throw ConfigurationError("posterior CSV sequence " + std::to_string(seq) + " is not a full T x K grid");
    }
    Matrix m = Matrix::Constant(T, K, std::numeric_limits<double>::quiet_NaN());
    for (const Cell& c : list) m(c.t, c.k) = c.g;
    if (!m.allFinite()) {
      throw ConfigurationError("posterior CSV sequence " + std::to_string(seq) + " repeats a cell");
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace snlds::eval
