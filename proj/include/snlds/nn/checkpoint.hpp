// SPDX-License-Identifier: Apache-2.0
//
// Binary parameter container.
//
// Layout (all integers and floats little-endian):
//
//   bytes 0..7   magic "SNLDSCKP"
//   u32          format version (currently 1)
//   u64          training step the snapshot was taken at
//   u64          record count N
//   N records:
//     u32        name length L, followed by L bytes of UTF-8 name
//     u32        rank R, followed by R u64 dimensions
//     f64[prod]  values, row-major
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "snlds/nn/tensor.hpp"

namespace snlds::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

NamedArray to_named_array(const std::string& name, const Matrix& m);

/// Copies parameter values, in order, into named records.
std::vector<NamedArray> snapshot(const std::vector<Parameter*>& params,
                                 const std::string& prefix = "");
/// Writes stored values back into `params`, matching records by name.
/// Throws CheckpointError naming the first missing or mis-shaped tensor.
void restore(const Checkpoint& ckpt, const std::vector<Parameter*>& params,
             const std::string& prefix = "");

}  // namespace snlds::nn
