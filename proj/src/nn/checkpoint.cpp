// SPDX-License-Identifier: Apache-2.0
#include "snlds/nn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace snlds::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'N', 'L', 'D', 'S', 'C', 'K', 'P'};

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw CheckpointError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double d) { put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, ckpt.step);
  put_le<std::uint64_t>(out, ckpt.arrays.size());
  for (const auto& a : ckpt.arrays) {
    std::uint64_t count = 1;
    for (auto d : a.shape) count *= d;
    if (count != a.values.size()) {
      throw CheckpointError("array '" + a.name + "' shape does not match its value count");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_le<std::uint64_t>(out, d);
    for (double v : a.values) put_f64(out, v);
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.step = get_le<std::uint64_t>(in);
  const auto n = get_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedArray a;
    const auto len = get_le<std::uint32_t>(in);
    a.name.resize(len);
    in.read(a.name.data(), len);
    if (!in) throw CheckpointError("checkpoint truncated in record name");
    const auto rank = get_le<std::uint32_t>(in);
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(get_le<std::uint64_t>(in));
      count *= a.shape.back();
    }
    a.values.resize(count);
    for (auto& v : a.values) v = get_f64(in);
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  return read_checkpoint(in);
}

NamedArray to_named_array(const std::string& name, const Matrix& m) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.values.assign(m.data(), m.data() + m.size());
  return a;
}

std::vector<NamedArray> snapshot(const std::vector<Parameter*>& params, const std::string& prefix) {
  std::vector<NamedArray> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(to_named_array(prefix + p->name(), p->value()));
  return out;
}

void restore(const Checkpoint& ckpt, const std::vector<Parameter*>& params,
             const std::string& prefix) {
  for (Parameter* p : params) {
    const std::string name = prefix + p->name();
    const NamedArray* a = ckpt.find(name);
    if (a == nullptr) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    const auto want = p->shape();
    if (a->shape.size() != want.size() ||
        !std::equal(want.begin(), want.end(), a->shape.begin())) {
      std::string got;
      for (auto d : a->shape) got += (got.empty() ? "" : "x") + std::to_string(d);
      throw CheckpointError("tensor '" + name + "' has shape " + got + ", expected " +
                            std::to_string(want[0]) + "x" + std::to_string(want[1]));
    }
    std::memcpy(p->value().data(), a->values.data(), a->values.size() * sizeof(double));
  }
}

}  // namespace snlds::nn
