// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "snlds/nn/tensor.hpp"

namespace snlds::data {

using nn::Matrix;

/// An observed sequence with optional ground-truth regimes.
struct Trajectory {
  Matrix x;                        // T x D
  std::vector<std::uint8_t> s_true;  // empty, or length T
  std::string generator;
  std::uint64_t seed = 0;
  std::map<std::string, double> params;

  int steps() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
  bool has_labels() const { return !s_true.empty(); }
};

/// Time-major minibatch: x[t] is B x D.
struct SequenceBatch {
  std::vector<Matrix> x;
  std::vector<std::vector<int>> labels;  // per sequence, empty when unlabelled

  int steps() const { return static_cast<int>(x.size()); }
  int size() const { return x.empty() ? 0 : static_cast<int>(x.front().rows()); }
};

/// Stacks equal-length trajectories. Throws nn::ConfigurationError on ragged input.
SequenceBatch make_batch(std::span<const Trajectory> all, std::span<const std::size_t> indices);
SequenceBatch make_batch(std::span<const Trajectory> all);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

// Binary dataset container (little-endian):
//
//   bytes 0..7  magic "SNLDSDAT"
//   u32         format version
//   u64         record count N
//   N records:
//     u64       payload length in bytes
//     u32 T, u32 D, u8 has_labels
//     f64[T*D]  observations, row-major
//     u8[T]     labels (only when has_labels)
void write_dataset(std::ostream& out, std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, std::span<const Trajectory> trajectories);
std::vector<Trajectory> load_dataset(const std::filesystem::path& path);

/// One row per (sequence, step): sequence,t,x0..x{D-1}[,label].
void write_dataset_csv(std::ostream& out, std::span<const Trajectory> trajectories);

}  // namespace snlds::data
