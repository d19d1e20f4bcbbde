// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vlg/voxel.hpp"

using namespace vlg;

namespace {

// Independent oracle: three nested loops, no Eigen products.
std::vector<double> brute_force_volume(const FactorTriplet& f) {
  std::vector<double> v(kGridCells, 0.0);
  for (int i = 0; i < kFactorDim; ++i)
    for (int j = 0; j < kFactorDim; ++j)
      for (int k = 0; k < kFactorDim; ++k)
        v[(i * kFactorDim + j) * kFactorDim + k] = f.x[i] * f.y[j] * f.z[k];
  return v;
}

FactorTriplet random_triplet(std::uint64_t seed, double lo = 0.0,
                             double hi = 1.0) {
  Rng rng(seed);
  FactorTriplet f;
  for (int i = 0; i < kFactorDim; ++i) f.x[i] = rng.uniform(lo, hi);
  for (int i = 0; i < kFactorDim; ++i) f.y[i] = rng.uniform(lo, hi);
  for (int i = 0; i < kFactorDim; ++i) f.z[i] = rng.uniform(lo, hi);
  return f;
}

FactorSet random_factor_set(std::uint64_t seed) {
  FactorSet fs;
  for (int k = 0; k < kFactorCount; ++k)
    fs.factors.push_back(random_triplet(mix_seed(seed, k)));
  return fs;
}

double max_abs_diff(const Vector& a, const std::vector<double>& b) {
  double m = 0.0;
  for (int c = 0; c < kGridCells; ++c)
    m = std::max(m, std::abs(a[c] - b[static_cast<std::size_t>(c)]));
  return m;
}

}  // namespace

TEST_CASE("factor_volume: standard basis vectors give a single cell") {
  FactorTriplet f;
  f.x[0] = 1.0;
  f.y[1] = 1.0;
  f.z[2] = 1.0;
  VoxelGrid g = factor_volume(f);
  CHECK(g(0, 1, 2) == 1.0);
  CHECK(g.values().sum() == 1.0);
}

TEST_CASE("factor_volume: zero x vector gives an all-zero grid") {
  FactorTriplet f = random_triplet(99);
  f.x.setZero();
  VoxelGrid g = factor_volume(f);
  CHECK(g.values().isZero(0.0));
}

TEST_CASE("factor_volume: seed 7 matches the brute-force triple loop") {
  FactorTriplet f = random_triplet(7);
  VoxelGrid g = factor_volume(f);
  CHECK(max_abs_diff(g.values(), brute_force_volume(f)) <= 1e-12);
}

TEST_CASE("factor_volume: oracle equivalence over 100 seeded triplets") {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    FactorTriplet f = random_triplet(mix_seed(1000, s), -1.0, 1.0);
    worst = std::max(worst,
                     max_abs_diff(factor_volume(f).values(), brute_force_volume(f)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("factor_volume: scaling x scales the volume elementwise") {
  FactorTriplet f = random_triplet(21);
  VoxelGrid base = factor_volume(f);
  FactorTriplet scaled = f;
  scaled.x *= 2.0;
  // Power-of-two scale commutes with the product bit-exactly.
  CHECK((factor_volume(scaled).values() - 2.0 * base.values())
            .lpNorm<Eigen::Infinity>() == 0.0);
  scaled = f;
  scaled.x *= 2.5;
  CHECK((factor_volume(scaled).values() - 2.5 * base.values())
            .lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("factor_volume: non-finite entries are rejected") {
  FactorTriplet f = random_triplet(5);
  f.y[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(factor_volume(f), ValidationError);
  f = random_triplet(5);
  f.z[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(factor_volume(f), ValidationError);
}

TEST_CASE("assemble_volume: 12 identical triplets sum to 12x one volume") {
  FactorTriplet f;
  f.x[4] = 1.0;
  f.y[5] = 1.0;
  f.z[6] = 0.25;
  FactorSet fs;
  fs.factors.assign(kFactorCount, f);
  VoxelGrid g = assemble_volume(fs);
  CHECK(g(4, 5, 6) == doctest::Approx(12 * 0.25).epsilon(1e-15));
}

TEST_CASE("assemble_volume: all-zero set gives an all-zero grid") {
  VoxelGrid g = assemble_volume(FactorSet::zeros());
  CHECK(g.values().isZero(0.0));
}

TEST_CASE("assemble_volume: seed 11 equals the sum of brute-forced volumes") {
  FactorSet fs = random_factor_set(11);
  VoxelGrid g = assemble_volume(fs);
  std::vector<double> expect(kGridCells, 0.0);
  for (const auto& f : fs.factors) {
    auto part = brute_force_volume(f);
    for (int c = 0; c < kGridCells; ++c) expect[c] += part[c];
  }
  CHECK(max_abs_diff(g.values(), expect) <= 1e-10);
}

TEST_CASE("assemble_volume: linearity against factor_volume") {
  FactorSet fs = random_factor_set(1234);
  Vector sum = Vector::Zero(kGridCells);
  for (const auto& f : fs.factors) sum += factor_volume(f).values();
  CHECK((assemble_volume(fs).values() - sum).lpNorm<Eigen::Infinity>() <=
        1e-10);
}

TEST_CASE("assemble_volume: wrong factor count is rejected") {
  FactorSet fs = random_factor_set(3);
  fs.factors.pop_back();
  CHECK_THROWS_AS(assemble_volume(fs), ValidationError);
}

TEST_CASE("binarize: uniform grids fall on the right side of the threshold") {
  VoxelGrid g;
  g.values().setConstant(0.6);
  CHECK(binarize(g, 0.5).bits.all());
  g.values().setConstant(0.4);
  CHECK(binarize(g, 0.5).bits.none());
}

TEST_CASE("binarize: values above 1 clamp before thresholding") {
  VoxelGrid g;
  g(0, 0, 0) = 0.0;
  g(0, 0, 1) = 0.5;
  g(0, 0, 2) = 2.0;
  OccupancyGrid occ = binarize(g, 0.5);
  CHECK_FALSE(occ(0, 0, 0));
  CHECK(occ(0, 0, 1));
  CHECK(occ(0, 0, 2));
}

TEST_CASE("binarize: threshold outside (0,1) is rejected") {
  VoxelGrid g;
  CHECK_THROWS_AS(binarize(g, 0.0), ValidationError);
  CHECK_THROWS_AS(binarize(g, 1.0), ValidationError);
  CHECK_THROWS_AS(binarize(g, -0.2), ValidationError);
}

TEST_CASE("voxel_iou: identical, disjoint, and empty conventions") {
  OccupancyGrid a, b;
  a.bits[5] = true;
  a.bits[100] = true;
  CHECK(voxel_iou(a, a) == 1.0);
  b.bits[200] = true;
  CHECK(voxel_iou(a, b) == 0.0);
  OccupancyGrid e1, e2;
  CHECK(voxel_iou(e1, e2) == 1.0);
}

TEST_CASE("voxel_iou: shifted cube overlap counted by enumeration") {
  // a: 2x2x2 cube at origin; b: the same cube shifted by one along i.
  // Exhaustive count: intersection 4 cells, union 12 cells.
  OccupancyGrid a, b;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        a.bits[VoxelGrid::index(i, j, k)] = true;
        b.bits[VoxelGrid::index(i + 1, j, k)] = true;
      }
  CHECK(voxel_iou(a, b) == doctest::Approx(4.0 / 12.0).epsilon(1e-15));
  CHECK(voxel_iou(a, b) == voxel_iou(b, a));
}

TEST_CASE("voxel_iou: symmetric and bounded on random grids") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(77, s));
    OccupancyGrid a, b;
    for (int c = 0; c < kGridCells; ++c) {
      a.bits[c] = rng.uniform() < 0.1;
      b.bits[c] = rng.uniform() < 0.1;
    }
    const double iou = voxel_iou(a, b);
    CHECK(iou == voxel_iou(b, a));
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    if (a.bits.any()) CHECK((voxel_iou(a, a) == 1.0));
  }
}

TEST_CASE("factor_tokens: concatenation layout") {
  FactorSet fs = FactorSet::zeros();
  fs.factors[0].x.setOnes();
  fs.factors[0].z.setOnes();
  FactorTokenSequence t = factor_tokens(fs);
  CHECK(t.rows() == kFactorCount);
  CHECK(t.cols() == kFactorTokenDim);
  CHECK(t.row(0).segment(0, 32).sum() == 32.0);
  CHECK(t.row(0).segment(32, 32).sum() == 0.0);
  CHECK(t.row(0).segment(64, 32).sum() == 32.0);
}

TEST_CASE("factor_tokens: round-trip recovers the factor set exactly") {
  FactorSet fs = random_factor_set(42);
  FactorSet back = factors_from_tokens(factor_tokens(fs));
  for (int k = 0; k < kFactorCount; ++k) {
    CHECK(back.factors[k].x == fs.factors[k].x);
    CHECK(back.factors[k].y == fs.factors[k].y);
    CHECK(back.factors[k].z == fs.factors[k].z);
  }
}

TEST_CASE("factor_tokens: index arithmetic on a seeded set") {
  FactorSet fs = random_factor_set(3);
  FactorTokenSequence t = factor_tokens(fs);
  CHECK(t(5, 40) == fs.factors[5].y[8]);
}
