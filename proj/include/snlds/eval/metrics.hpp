// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snlds/nn/tensor.hpp"

namespace snlds::model {
class GenerativeModel;
}

namespace snlds::eval {

using nn::Matrix;
using Labels = std::vector<int>;

class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AlignMode { permutation, greedy, merging };
AlignMode parse_align_mode(const std::string& s);
std::string to_string(AlignMode m);

/// Per-row argmax; ties go to the lower index.
Labels decode(const Matrix& gamma1);

/// mapping[p] is the label assigned to predicted label p. Targets at or
/// above the number of truth labels never match any frame.
struct Alignment {
  std::vector<int> mapping;
  Labels relabel(std::span<const int> pred) const;
};

/// Exhaustive search in permutation mode, so both label sets must fit in 8.
Alignment align_labels(std::span<const int> pred, std::span<const int> truth, AlignMode mode);

/// Macro-averaged precision and recall over the classes present in `truth`,
/// combined as 2PR / (P + R).
double f1_frame(std::span<const int> pred, std::span<const int> truth);

struct SwitchCounts {
  int matched = 0;
  int predicted = 0;
  int actual = 0;

  SwitchCounts& operator+=(const SwitchCounts& o);
  /// With no true change points this is 1 when nothing was predicted, else 0.
  double f1() const;
  bool undefined_recall() const { return actual == 0; }
};

/// Indices t >= 1 where s[t] != s[t-1].
std::vector<int> change_points(std::span<const int> s);

/// Greedy nearest-first matching of change points within `tolerance` steps.
SwitchCounts switch_counts(std::span<const int> pred, std::span<const int> truth, int tolerance,
                           bool require_label_match = true);
double f1_switch(std::span<const int> pred, std::span<const int> truth, int tolerance,
                 bool require_label_match = true);

/// Scores over many sequences: one alignment fitted on all frames, switch
/// counts pooled before forming F1.
struct DatasetScore {
  Alignment alignment;
  double f1_frame = 0.0;
  std::vector<int> tolerances;
  std::vector<double> f1_switch;  // parallel to tolerances
};

DatasetScore score_dataset(const std::vector<Labels>& pred, const std::vector<Labels>& truth,
                           AlignMode mode, const std::vector<int>& tolerances = {0, 5},
                           bool require_label_match = true);

/// Fraction of frames per predicted state.
std::vector<double> state_occupancy(const std::vector<Labels>& pred, int K);

struct Correlation {
  double mean = 0.0;  // NaN when every pair was skipped
  int pairs = 0;
  int skipped = 0;    // pairs with a zero-variance vector
};

/// Pearson correlation of two equal-length vectors; NaN if either is constant.
double pearson(std::span<const double> a, std::span<const double> b);
/// Mean over unordered pairs of the given vectors.
Correlation mean_pairwise_correlation(const std::vector<std::vector<double>>& vectors);
/// Mean pairwise correlation of the flattened per-state transition networks.
Correlation weight_correlation(model::GenerativeModel& gen);

struct ReportRow {
  std::string dataset;
  std::string model;
  std::uint64_t seed = 0;
  double f1_frame = 0.0;
  double f1_switch_tol0 = 0.0;
  double f1_switch_tol5 = 0.0;
  AlignMode alignment = AlignMode::permutation;
};

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const ReportRow& row);

/// Long-format posterior dump: sequence,t,k,gamma.
void write_gamma_csv(std::ostream& out, const std::vector<Matrix>& gamma1);
/// Inverse of write_gamma_csv. Every (sequence, t, k) cell must appear once.
std::vector<Matrix> read_gamma_csv(std::istream& in);

}  // namespace snlds::eval
