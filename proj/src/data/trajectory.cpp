// SPDX-License-Identifier: Apache-2.0
#include "snlds/data/trajectory.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace snlds::data {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'N', 'L', 'D', 'S', 'D', 'A', 'T'};

template <typename U>
void put_le(std::string& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (!in) throw DatasetError("dataset truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace

SequenceBatch make_batch(std::span<const Trajectory> all, std::span<const std::size_t> indices) {
  SequenceBatch batch;
  if (indices.empty()) return batch;
  const Trajectory& first = all[indices.front()];
  const int T = first.steps();
  const int D = first.dim();
  const auto B = static_cast<Eigen::Index>(indices.size());
  batch.x.assign(static_cast<std::size_t>(T), Matrix(B, D));
  batch.labels.resize(indices.size());
  for (Eigen::Index b = 0; b < B; ++b) {
    const Trajectory& tr = all[indices[static_cast<std::size_t>(b)]];
    if (tr.steps() != T || tr.dim() != D) {
      throw nn::ConfigurationError("batch mixes sequence shapes (" + std::to_string(T) + "x" +
                                   std::to_string(D) + " vs " + std::to_string(tr.steps()) + "x" +
                                   std::to_string(tr.dim()) + ")");
    }
    for (int t = 0; t < T; ++t) batch.x[static_cast<std::size_t>(t)].row(b) = tr.x.row(t);
    batch.labels[static_cast<std::size_t>(b)].assign(tr.s_true.begin(), tr.s_true.end());
  }
  return batch;
}

SequenceBatch make_batch(std::span<const Trajectory> all) {
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(all, idx);
}

void write_dataset(std::ostream& out, std::span<const Trajectory> trajectories) {
  std::string buf(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(buf, kDatasetVersion);
  put_le<std::uint64_t>(buf, trajectories.size());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  for (const Trajectory& tr : trajectories) {
    if (tr.has_labels() && static_cast<int>(tr.s_true.size()) != tr.steps()) {
      throw DatasetError("label count does not match sequence length");
    }
    std::string rec;
    put_le<std::uint32_t>(rec, static_cast<std::uint32_t>(tr.steps()));
    put_le<std::uint32_t>(rec, static_cast<std::uint32_t>(tr.dim()));
    rec.push_back(tr.has_labels() ? 1 : 0);
    for (Eigen::Index i = 0; i < tr.x.size(); ++i) {
      put_le<std::uint64_t>(rec, std::bit_cast<std::uint64_t>(tr.x.data()[i]));
    }
    for (std::uint8_t s : tr.s_true) rec.push_back(static_cast<char>(s));
    std::string head;
    put_le<std::uint64_t>(head, rec.size());
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw DatasetError("failed writing dataset");
}

std::vector<Trajectory> read_dataset(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DatasetError("not a dataset file (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kDatasetVersion) {
    throw DatasetError("unsupported dataset version " + std::to_string(version));
  }
  const auto n = get_le<std::uint64_t>(in);
  std::vector<Trajectory> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto length = get_le<std::uint64_t>(in);
    const auto T = get_le<std::uint32_t>(in);
    const auto D = get_le<std::uint32_t>(in);
    const int has_labels = in.get();
    if (!in) throw DatasetError("dataset truncated");
    const std::uint64_t expect =
        9 + 8ULL * T * D + (has_labels != 0 ? static_cast<std::uint64_t>(T) : 0ULL);
    if (length != expect) throw DatasetError("record " + std::to_string(i) + " has a bad length");
    Trajectory tr;
    tr.x.resize(T, D);
    for (Eigen::Index j = 0; j < tr.x.size(); ++j) {
      tr.x.data()[j] = std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
    if (has_labels != 0) {
      tr.s_true.resize(T);
      in.read(reinterpret_cast<char*>(tr.s_true.data()), T);
      if (!in) throw DatasetError("dataset truncated in labels");
    }
    out.push_back(std::move(tr));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const Trajectory> trajectories) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open '" + path.string() + "' for writing");
  write_dataset(out, trajectories);
}

std::vector<Trajectory> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + path.string() + "'");
  return read_dataset(in);
}

void write_dataset_csv(std::ostream& out, std::span<const Trajectory> trajectories) {
  int D = trajectories.empty() ? 0 : trajectories.front().dim();
  bool labels = !trajectories.empty() && trajectories.front().has_labels();
  out << "sequence,t";
  for (int d = 0; d < D; ++d) out << ",x" << d;
  if (labels) out << ",label";
  out << '\n';
  std::ostringstream row;
  row.precision(17);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    for (int t = 0; t < tr.steps(); ++t) {
      row.str("");
      row << i << ',' << t;
      for (int d = 0; d < tr.dim(); ++d) row << ',' << tr.x(t, d);
      if (labels) row << ',' << (tr.has_labels() ? static_cast<int>(tr.s_true[static_cast<std::size_t>(t)]) : -1);
      out << row.str() << '\n';
    }
  }
}

}  // namespace snlds::data
