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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mvu/designer.hpp"
#include "mvu/mechanisms.hpp"

using namespace mvu;

namespace {

MechanismTable identity_table(int bits) {
  MechanismTable t;
  t.b_in = bits;
  t.b_out = bits;
  t.privacy = PrivacySpec::pure_ldp(20.0);
  const int B = 1 << bits;
  t.P = Eigen::MatrixXd::Identity(B, B);
  t.A = Eigen::VectorXd::LinSpaced(B, 0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("noiseless table is a round trip on grid points") {
  const MechanismTable t = identity_table(3);
  Rng rng(3);
  for (int k = 0; k < 8; ++k) {
    const double x = k / 7.0;
    const int j = privatize_scalar(t, x, rng);
    CHECK(decode(t, j) == doctest::Approx(x).epsilon(1e-15));
  }
}

TEST_CASE("one-bit randomized response law at x = 1") {
  const MechanismTable t = build_bitwise_rr(std::log(3.0), 1);
  Rng rng(17);
  const int n = 200000;
  int high = 0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = privatize_scalar(t, 1.0, rng);
    if (j == 1) ++high;
    sum += decode(t, j);
  }
  const double p_hat = high / static_cast<double>(n);
  CHECK(std::abs(p_hat - 0.75) <= 4 * std::sqrt(0.75 * 0.25 / n));
  // Mean of decodes is 1: values are 1.5 w.p. 0.75 and -0.5 w.p. 0.25.
  const double se = std::sqrt(0.75) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum / n - 1.0) <= 4 * se);
}

TEST_CASE("privatized mean is unbiased for off-grid inputs") {
  SolverOptions opts;
  const MechanismTable t =
      design_mvu(PrivacySpec::pure_ldp(3.0), 3, 3, opts).table;
  Rng rng(29);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = decode(t, privatize_scalar(t, 0.3, rng));
    sum += y;
    sum2 += y * y;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(mean - 0.3) <= 4 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("privatize and decode validate their inputs") {
  const MechanismTable t = identity_table(2);
  Rng rng(5);
  CHECK_THROWS_AS(privatize_scalar(t, 1.2, rng), std::domain_error);
  CHECK_THROWS_AS(decode(t, 4), std::out_of_range);
  CHECK_THROWS_AS(decode(t, -1), std::out_of_range);
}

TEST_CASE("vector privatization of one coordinate is the scaled scalar path") {
  SolverOptions opts;
  const MechanismTable t =
      design_mvu(PrivacySpec::metric(2.0, 1.0), 3, 3, opts).table;
  VectorSpec spec{1, 1.0, 1.0};
  Eigen::VectorXd x(1);
  x << 0.3;
  Rng a(77), b(77);
  const Payload payload = privatize_vector(t, x, spec, a);
  const int direct = privatize_scalar(t, (0.3 + 1.0) / 2.0, b);
  CHECK(payload.indices[0] == direct);
  CHECK(payload.bit_cost() == t.b_out);

  const Eigen::VectorXd dec = decode_vector(t, payload, spec);
  CHECK(dec[0] == doctest::Approx(2.0 * t.A[direct] - 1.0).epsilon(1e-15));
}

TEST_CASE("vector privatization requires a metric table and a bounded input") {
  const MechanismTable pure = identity_table(2);
  VectorSpec spec{2, 1.0, 1.0};
  Eigen::VectorXd x(2);
  x << 0.2, 0.3;
  Rng rng(1);
  CHECK_THROWS_AS(privatize_vector(pure, x, spec, rng),
                  std::invalid_argument);

  SolverOptions opts;
  const MechanismTable t =
      design_mvu(PrivacySpec::metric(1.0, 1.0), 2, 2, opts).table;
  Eigen::VectorXd big(2);
  big << 0.8, 0.8;
  CHECK_THROWS_AS(privatize_vector(t, big, spec, rng), std::domain_error);
}

TEST_CASE("coordinate-wise privacy composes over the joint law") {
  // Exhaustive version of the vector guarantee at desk scale: the joint
  // log-likelihood ratio over all quantized input pairs and outputs is
  // bounded by the realized metric epsilon times the scaled L1 distance.
  SolverOptions opts;
  const MechanismTable t =
      design_mvu(PrivacySpec::metric(2.0, 1.0), 2, 2, opts).table;
  const double eps = realized_epsilon(t);
  const int B_in = t.input_levels();
  const int B_out = t.output_levels();
  const int d = 2;
  double worst = -1.0;
  for (int u0 = 0; u0 < B_in; ++u0)
    for (int u1 = 0; u1 < B_in; ++u1)
      for (int v0 = 0; v0 < B_in; ++v0)
        for (int v1 = 0; v1 < B_in; ++v1) {
          const double dist = (std::abs(u0 - v0) + std::abs(u1 - v1)) /
                              static_cast<double>(B_in - 1);
          for (int j0 = 0; j0 < B_out; ++j0)
            for (int j1 = 0; j1 < B_out; ++j1) {
              const double ratio =
                  std::log(t.P(u0, j0) * t.P(u1, j1)) -
                  std::log(t.P(v0, j0) * t.P(v1, j1));
              worst = std::max(worst, std::abs(ratio) - eps * dist);
            }
        }
  (void)d;
  CHECK(worst <= 1e-9);
}

TEST_CASE("vector outputs are independent across coordinates") {
  SolverOptions opts;
  const MechanismTable t =
      design_mvu(PrivacySpec::metric(1.5, 1.0), 1, 1, opts).table;
  VectorSpec spec{2, 1.0, 1.0};
  Eigen::VectorXd x(2);
  x << 0.5, -0.5;
  Rng rng(31);
  const int n = 200000;
  int joint[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < n; ++i) {
    const Payload p = privatize_vector(t, x, spec, rng);
    joint[p.indices[0]][p.indices[1]]++;
  }
  const double m0 = (joint[1][0] + joint[1][1]) / static_cast<double>(n);
  const double m1 = (joint[0][1] + joint[1][1]) / static_cast<double>(n);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double expected = (a ? m0 : 1 - m0) * (b ? m1 : 1 - m1);
      const double got = joint[a][b] / static_cast<double>(n);
      CHECK(std::abs(got - expected) <=
            4 * std::sqrt(expected * (1 - expected) / n) + 1e-4);
    }
}

TEST_CASE("vector privatization is unbiased per coordinate") {
  SolverOptions opts;
  const MechanismTable t =
      design_mvu(PrivacySpec::metric(2.0, 1.0), 3, 3, opts).table;
  VectorSpec spec{3, 1.0, 1.0};
  Eigen::VectorXd x(3);
  x << 0.2, -0.4, 0.3;  // L1 norm 0.9 <= 1
  Rng rng(41);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < n; ++i)
    sum += decode_vector(t, privatize_vector(t, x, spec, rng), spec);
  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(sum[k] / n - x[k]) <= 0.02);
}

TEST_CASE("laplace mechanism variance and limits") {
  Eigen::VectorXd x(2);
  x << 0.25, -0.5;
  Rng rng(51);
  const Eigen::VectorXd exact = laplace_mechanism(
      x, 1.0, std::numeric_limits<double>::infinity(), rng);
  CHECK((exact - x).cwiseAbs().maxCoeff() == 0.0);

  const double eps = 2.0;
  const int n = 200000;
  double sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd y = laplace_mechanism(x, 1.0, eps, rng);
    sum2 += (y[0] - x[0]) * (y[0] - x[0]);
  }
  const double target = 2.0 / (eps * eps);
  CHECK(std::abs(sum2 / n - target) <= 0.05 * target);
}

TEST_CASE("gaussian mechanism calibration and validation") {
  CHECK(gaussian_sigma(1.0, 1.0, 1e-5) ==
        doctest::Approx(std::sqrt(2.0 * std::log(1.25e5))));
  CHECK_THROWS_AS(gaussian_sigma(1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_sigma(1.0, 1.0, 1.5), std::invalid_argument);

  Eigen::VectorXd x(1);
  x << 0.1;
  Rng rng(61);
  const double eps = 1.5, delta = 1e-4;
  const double sigma = gaussian_sigma(1.0, eps, delta);
  const int n = 200000;
  double sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd y = gaussian_mechanism(x, 1.0, eps, delta, rng);
    sum2 += (y[0] - x[0]) * (y[0] - x[0]);
  }
  CHECK(std::abs(sum2 / n - sigma * sigma) <= 0.05 * sigma * sigma);
}

TEST_CASE("payload bit cost is exact") {
  SolverOptions opts;
  const MechanismTable t =
      design_mvu(PrivacySpec::metric(1.0, 1.0), 2, 2, opts).table;
  VectorSpec spec{5, 1.0, 1.0};
  Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 0.1);
  Rng rng(71);
  const Payload p = privatize_vector(t, x, spec, rng);
  CHECK(p.bit_cost() == 5 * 2);
  const auto packed = pack_indices(p.indices, p.bits_per_index);
  CHECK(packed.size() == (5 * 2 + 7) / 8);
}

TEST_CASE("bit packing round trips at every width") {
  Rng rng(81);
  for (int bits = 1; bits <= 16; ++bits) {
    const std::size_t count = 1 + rng.next_u64() % 50;
    std::vector<std::uint16_t> indices(count);
    for (auto& v : indices)
      v = static_cast<std::uint16_t>(rng.next_u64() & ((1u << bits) - 1));
    const auto packed = pack_indices(indices, bits);
    CHECK(packed.size() == (count * static_cast<std::size_t>(bits) + 7) / 8);
    const auto back = unpack_indices(packed, bits, count);
    CHECK(back == indices);
  }
  std::vector<std::uint16_t> overflow = {4};
  CHECK_THROWS_AS(pack_indices(overflow, 2), std::invalid_argument);
}

TEST_CASE("payload files round trip with their metadata") {
  PayloadFile file;
  file.dimension = 3;
  file.bits_per_index = 5;
  file.metadata = {{"seed", 7}, {"tool", "mvu test"}};
  Rng rng(91);
  for (int r = 0; r < 23; ++r) {
    std::vector<std::uint16_t> record(3);
    for (auto& v : record)
      v = static_cast<std::uint16_t>(rng.next_u64() % 32);
    file.records.push_back(record);
  }
  const auto path =
      std::filesystem::temp_directory_path() / "mvu_test_payload.bin";
  write_payload_file(path, file);
  const PayloadFile back = read_payload_file(path);
  CHECK(back.dimension == file.dimension);
  CHECK(back.bits_per_index == file.bits_per_index);
  CHECK(back.metadata == file.metadata);
  CHECK(back.records == file.records);
  std::filesystem::remove(path);
}

TEST_CASE("payload reader rejects corrupted headers") {
  const auto path =
      std::filesystem::temp_directory_path() / "mvu_test_payload_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(read_payload_file(path), std::invalid_argument);
  std::filesystem::remove(path);
}
