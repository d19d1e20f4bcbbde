// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bitset>

#include "vlg/common.hpp"

// Factorized voxel maps. An object's 32x32x32 occupancy volume is carried
// around as 12 rank-1 factors; each factor is three 32-vectors whose triple
// outer product spans one part of the volume. The fusion model consumes the
// factors directly (as 96-wide tokens); dense volumes are only materialized
// for inspection and IoU checks.

namespace vlg {

inline constexpr int kFactorDim = 32;       // per-axis vector length, grid side
inline constexpr int kFactorCount = 12;     // rank-1 factors per object
inline constexpr int kFactorTokenDim = 3 * kFactorDim;  // [x;y;z]
inline constexpr int kGridCells = kFactorDim * kFactorDim * kFactorDim;

struct FactorTriplet {
  Vector x{Vector::Zero(kFactorDim)};
  Vector y{Vector::Zero(kFactorDim)};
  Vector z{Vector::Zero(kFactorDim)};

  void validate() const;
};

struct FactorSet {
  std::vector<FactorTriplet> factors;

  static FactorSet zeros();
  void validate() const;
};

// Dense occupancy mass on the 32^3 grid, stored flat with i-major layout:
// cell (i, j, k) lives at index (i*32 + j)*32 + k.
class VoxelGrid {
 public:
  VoxelGrid() : values_(Vector::Zero(kGridCells)) {}

  static int index(int i, int j, int k) {
    return (i * kFactorDim + j) * kFactorDim + k;
  }

  double operator()(int i, int j, int k) const { return values_[index(i, j, k)]; }
  double& operator()(int i, int j, int k) { return values_[index(i, j, k)]; }

  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

 private:
  Vector values_;
};

struct OccupancyGrid {
  std::bitset<kGridCells> bits;

  bool operator()(int i, int j, int k) const {
    return bits[VoxelGrid::index(i, j, k)];
  }
};

// tokens: kFactorCount x kFactorTokenDim, row k = [x_k ; y_k ; z_k].
using FactorTokenSequence = Matrix;

// V[i,j,k] = x[i] * y[j] * z[k], written into the flat grid. Accepts any
// Eigen expressions of length kFactorDim.
template <typename DX, typename DY, typename DZ>
void triple_outer_product(const Eigen::MatrixBase<DX>& x,
                          const Eigen::MatrixBase<DY>& y,
                          const Eigen::MatrixBase<DZ>& z, Vector& out) {
  for (int i = 0; i < kFactorDim; ++i)
    for (int j = 0; j < kFactorDim; ++j)
      out.segment((i * kFactorDim + j) * kFactorDim, kFactorDim) =
          (x[i] * y[j]) * z;
}

VoxelGrid factor_volume(const FactorTriplet& f);
VoxelGrid assemble_volume(const FactorSet& fs);

// Occupancy view: mass is clamped to [0,1] and compared against threshold,
// which must lie strictly inside (0,1).
OccupancyGrid binarize(const VoxelGrid& g, double threshold);

// |a AND b| / |a OR b|; both grids empty counts as perfect agreement (1.0).
double voxel_iou(const OccupancyGrid& a, const OccupancyGrid& b);

FactorTokenSequence factor_tokens(const FactorSet& fs);
FactorSet factors_from_tokens(const FactorTokenSequence& tokens);

}  // namespace vlg
