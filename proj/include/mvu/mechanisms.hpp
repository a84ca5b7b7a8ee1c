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

#ifndef MVU_MECHANISMS_HPP_
#define MVU_MECHANISMS_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mvu/lattice.hpp"
#include "mvu/rng.hpp"
#include "mvu/tables.hpp"

namespace mvu {

// Client-vector domain: an L_p ball of radius `sensitivity` in original
// units, privatized coordinate-wise after the affine map onto [0,1].
struct VectorSpec {
  int dimension = 1;
  double norm_order = 1.0;
  double sensitivity = 1.0;
  void validate() const;
};

struct Payload {
  std::vector<std::uint16_t> indices;
  int bits_per_index = 0;
  [[nodiscard]] int bit_cost() const {
    return static_cast<int>(indices.size()) * bits_per_index;
  }
};

// One online step: dither x onto the input grid, then draw an output index
// from the categorical law of the matching table row.
int privatize_scalar(const MechanismTable& table, double x, Rng& rng);

double decode(const MechanismTable& table, int index);

// Coordinate-wise privatization of a vector in the spec's L_p ball. The
// input is shifted and scaled onto [0,1] per coordinate (which halves the
// L_p radius), then each coordinate runs privatize_scalar independently.
// Requires a metric-kind table; the metric order need not equal the ball's
// norm order (accounting-based pipelines deliberately mix them).
Payload privatize_vector(const MechanismTable& table,
                         const Eigen::Ref<const Eigen::VectorXd>& x,
                         const VectorSpec& spec, Rng& rng);

// Inverse of privatize_vector's scaling applied to the alphabet lookups.
Eigen::VectorXd decode_vector(const MechanismTable& table,
                              const Payload& payload, const VectorSpec& spec);

Eigen::VectorXd laplace_mechanism(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  double l1_sensitivity, double epsilon,
                                  Rng& rng);

// Classical calibration sigma = l2_sensitivity * sqrt(2 ln(1.25/delta)) /
// epsilon.
double gaussian_sigma(double l2_sensitivity, double epsilon, double delta);
Eigen::VectorXd gaussian_mechanism(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   double l2_sensitivity, double epsilon,
                                   double delta, Rng& rng);

// Little-endian, coordinate-major bit packing at `bits` bits per index,
// zero-padded to a byte boundary.
std::vector<std::uint8_t> pack_indices(std::span<const std::uint16_t> indices,
                                       int bits);
std::vector<std::uint16_t> unpack_indices(std::span<const std::uint8_t> bytes,
                                          int bits, std::size_t count);

// Payload container file: magic "MVUP", version, dimension, bits per index,
// record count, a JSON metadata blob (tool version, resolved config, seed),
// then one bit-packed record per client.
struct PayloadFile {
  int dimension = 0;
  int bits_per_index = 0;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::vector<std::uint16_t>> records;
};

void write_payload_file(const std::filesystem::path& path,
                        const PayloadFile& file);
PayloadFile read_payload_file(const std::filesystem::path& path);

}  // namespace mvu

#endif  // MVU_MECHANISMS_HPP_
