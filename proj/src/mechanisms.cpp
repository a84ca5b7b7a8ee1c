// Copyright 2026 The MVU Mechanism Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mvu/mechanisms.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace mvu {

namespace {

constexpr char kPayloadMagic[4] = {'M', 'V', 'U', 'P'};
constexpr std::uint32_t kPayloadVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<std::uint8_t>((value >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::uint8_t bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void VectorSpec::validate() const {
  if (dimension < 1) throw std::invalid_argument("vector spec: dimension");
  if (!(norm_order >= 1.0))
    throw std::invalid_argument("vector spec: norm order must be >= 1");
  if (!(sensitivity > 0))
    throw std::invalid_argument("vector spec: sensitivity must be positive");
}

int privatize_scalar(const MechanismTable& table, double x, Rng& rng) {
  if (!(x >= -DitherGrid::kSnapTolerance &&
        x <= 1.0 + DitherGrid::kSnapTolerance))
    throw std::domain_error("privatize: input " + std::to_string(x) +
                            " outside [0, 1]");
  const DitherGrid grid = DitherGrid::unit(table.input_levels());
  const int i = dither_scalar(x, grid, rng).index;
  const Eigen::Index cols = table.P.cols();
  const double u = rng.next_double();
  double acc = 0.0;
  for (Eigen::Index j = 0; j + 1 < cols; ++j) {
    acc += table.P(i, j);
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(cols - 1);
}

double decode(const MechanismTable& table, int index) {
  if (index < 0 || index >= table.output_levels())
    throw std::out_of_range("decode: index " + std::to_string(index) +
                            " out of range");
  return table.A[index];
}

Payload privatize_vector(const MechanismTable& table,
                         const Eigen::Ref<const Eigen::VectorXd>& x,
                         const VectorSpec& spec, Rng& rng) {
  spec.validate();
  if (table.privacy.kind != PrivacyKind::kMetric)
    throw std::invalid_argument(
        "privatize_vector: requires a metric-DP table");
  if (x.size() != spec.dimension)
    throw std::invalid_argument("privatize_vector: dimension mismatch");
  const double norm = lp_norm(x, spec.norm_order);
  if (norm > spec.sensitivity * (1.0 + 1e-9))
    throw std::domain_error("privatize_vector: ||x|| = " +
                            std::to_string(norm) + " exceeds sensitivity " +
                            std::to_string(spec.sensitivity));
  Payload payload;
  payload.bits_per_index = table.b_out;
  payload.indices.resize(static_cast<std::size_t>(spec.dimension));
  const double s = spec.sensitivity;
  for (int k = 0; k < spec.dimension; ++k) {
    const double scaled = (x[k] + s) / (2.0 * s);
    payload.indices[static_cast<std::size_t>(k)] = static_cast<std::uint16_t>(
        privatize_scalar(table, std::clamp(scaled, 0.0, 1.0), rng));
  }
  return payload;
}

Eigen::VectorXd decode_vector(const MechanismTable& table,
                              const Payload& payload,
                              const VectorSpec& spec) {
  spec.validate();
  if (static_cast<int>(payload.indices.size()) != spec.dimension)
    throw std::invalid_argument("decode_vector: dimension mismatch");
  Eigen::VectorXd out(spec.dimension);
  const double s = spec.sensitivity;
  for (int k = 0; k < spec.dimension; ++k)
    out[k] = 2.0 * s * decode(table, payload.indices[static_cast<std::size_t>(k)]) - s;
  return out;
}

Eigen::VectorXd laplace_mechanism(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  double l1_sensitivity, double epsilon,
                                  Rng& rng) {
  if (!(l1_sensitivity > 0))
    throw std::invalid_argument("laplace: sensitivity must be positive");
  if (!(epsilon > 0)) throw std::invalid_argument("laplace: epsilon");
  const double scale =
      std::isinf(epsilon) ? 0.0 : l1_sensitivity / epsilon;
  Eigen::VectorXd out(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k)
    out[k] = x[k] + scale * rng.laplace();
  return out;
}

double gaussian_sigma(double l2_sensitivity, double epsilon, double delta) {
  if (!(l2_sensitivity > 0))
    throw std::invalid_argument("gaussian: sensitivity must be positive");
  if (!(epsilon > 0)) throw std::invalid_argument("gaussian: epsilon");
  if (!(delta > 0 && delta < 1))
    throw std::invalid_argument("gaussian: delta must be in (0, 1)");
  if (std::isinf(epsilon)) return 0.0;
  return l2_sensitivity * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

Eigen::VectorXd gaussian_mechanism(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   double l2_sensitivity, double epsilon,
                                   double delta, Rng& rng) {
  const double sigma = gaussian_sigma(l2_sensitivity, epsilon, delta);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k)
    out[k] = x[k] + sigma * rng.normal();
  return out;
}

std::vector<std::uint8_t> pack_indices(std::span<const std::uint16_t> indices,
                                       int bits) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("pack: bits");
  const std::size_t total_bits = indices.size() * static_cast<std::size_t>(bits);
  std::vector<std::uint8_t> out((total_bits + 7) / 8, 0);
  std::size_t bit_pos = 0;
  for (const std::uint16_t raw : indices) {
    if (raw >= (1u << bits))
      throw std::invalid_argument("pack: index exceeds bit width");
    for (int b = 0; b < bits; ++b, ++bit_pos) {
      if ((raw >> b) & 1u)
        out[bit_pos / 8] |= static_cast<std::uint8_t>(1u << (bit_pos % 8));
    }
  }
  return out;
}

std::vector<std::uint16_t> unpack_indices(std::span<const std::uint8_t> bytes,
                                          int bits, std::size_t count) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("unpack: bits");
  const std::size_t need = (count * static_cast<std::size_t>(bits) + 7) / 8;
  if (bytes.size() < need)
    throw std::invalid_argument("unpack: buffer too short");
  std::vector<std::uint16_t> out(count, 0);
  std::size_t bit_pos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint16_t value = 0;
    for (int b = 0; b < bits; ++b, ++bit_pos) {
      if ((bytes[bit_pos / 8] >> (bit_pos % 8)) & 1u)
        value |= static_cast<std::uint16_t>(1u << b);
    }
    out[i] = value;
  }
  return out;
}

void write_payload_file(const std::filesystem::path& path,
                        const PayloadFile& file) {
  if (file.dimension < 1 || file.bits_per_index < 1 ||
      file.bits_per_index > 16)
    throw std::invalid_argument("payload file: bad header fields");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(kPayloadMagic, 4);
  write_le<std::uint32_t>(out, kPayloadVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.dimension));
  write_le<std::uint32_t>(out,
                          static_cast<std::uint32_t>(file.bits_per_index));
  write_le<std::uint64_t>(out, file.records.size());
  const std::string meta = file.metadata.dump();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  for (const auto& record : file.records) {
    if (static_cast<int>(record.size()) != file.dimension)
      throw std::invalid_argument("payload file: record dimension mismatch");
    const auto packed = pack_indices(record, file.bits_per_index);
    out.write(reinterpret_cast<const char*>(packed.data()),
              static_cast<std::streamsize>(packed.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PayloadFile read_payload_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPayloadMagic, 4) != 0)
    throw std::invalid_argument("payload file: bad magic");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kPayloadVersion)
    throw std::invalid_argument("payload file: unsupported version");
  PayloadFile file;
  file.dimension = static_cast<int>(read_le<std::uint32_t>(in));
  file.bits_per_index = static_cast<int>(read_le<std::uint32_t>(in));
  const auto count = read_le<std::uint64_t>(in);
  const auto meta_len = read_le<std::uint32_t>(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), meta_len);
  if (!in) throw std::invalid_argument("payload file: truncated header");
  file.metadata = nlohmann::json::parse(meta);
  if (file.dimension < 1 || file.bits_per_index < 1 ||
      file.bits_per_index > 16)
    throw std::invalid_argument("payload file: bad header fields");
  const std::size_t record_bytes =
      (static_cast<std::size_t>(file.dimension) *
           static_cast<std::size_t>(file.bits_per_index) +
       7) /
      8;
  file.records.reserve(count);
  std::vector<std::uint8_t> buf(record_bytes);
  for (std::uint64_t r = 0; r < count; ++r) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::invalid_argument("payload file: truncated records");
    file.records.push_back(unpack_indices(
        buf, file.bits_per_index, static_cast<std::size_t>(file.dimension)));
  }
  return file;
}

}  // namespace mvu
