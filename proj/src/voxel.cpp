// SPDX-License-Identifier: Apache-2.0
#include "vlg/voxel.hpp"

#include <algorithm>

namespace vlg {

namespace {

void check_axis(const Vector& v, const char* axis) {
  if (v.size() != kFactorDim)
    throw ValidationError(std::string("factor axis ") + axis +
                          " must have length " + std::to_string(kFactorDim) +
                          ", got " + std::to_string(v.size()));
  if (!v.allFinite())
    throw ValidationError(std::string("factor axis ") + axis +
                          " contains non-finite entries");
}

}  // namespace

void FactorTriplet::validate() const {
  check_axis(x, "x");
  check_axis(y, "y");
  check_axis(z, "z");
}

FactorSet FactorSet::zeros() {
  FactorSet fs;
  fs.factors.resize(kFactorCount);
  return fs;
}

void FactorSet::validate() const {
  if (factors.size() != static_cast<std::size_t>(kFactorCount))
    throw ValidationError("factor set must contain exactly " +
                          std::to_string(kFactorCount) + " triplets, got " +
                          std::to_string(factors.size()));
  for (const auto& f : factors) f.validate();
}

VoxelGrid factor_volume(const FactorTriplet& f) {
  f.validate();
  VoxelGrid grid;
  triple_outer_product(f.x, f.y, f.z, grid.values());
  return grid;
}

VoxelGrid assemble_volume(const FactorSet& fs) {
  fs.validate();
  VoxelGrid grid;
  Vector part(kGridCells);
  for (const auto& f : fs.factors) {
    triple_outer_product(f.x, f.y, f.z, part);
    grid.values() += part;
  }
  return grid;
}

OccupancyGrid binarize(const VoxelGrid& g, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValidationError("binarize threshold must lie in (0,1), got " +
                          std::to_string(threshold));
  OccupancyGrid occ;
  const Vector& v = g.values();
  for (int c = 0; c < kGridCells; ++c)
    occ.bits[c] = std::min(1.0, v[c]) >= threshold;
  return occ;
}

double voxel_iou(const OccupancyGrid& a, const OccupancyGrid& b) {
  const std::size_t union_count = (a.bits | b.bits).count();
  if (union_count == 0) return 1.0;
  return static_cast<double>((a.bits & b.bits).count()) /
         static_cast<double>(union_count);
}

FactorTokenSequence factor_tokens(const FactorSet& fs) {
  fs.validate();
  FactorTokenSequence tokens(kFactorCount, kFactorTokenDim);
  for (int k = 0; k < kFactorCount; ++k) {
    tokens.row(k).segment(0, kFactorDim) = fs.factors[k].x.transpose();
    tokens.row(k).segment(kFactorDim, kFactorDim) = fs.factors[k].y.transpose();
    tokens.row(k).segment(2 * kFactorDim, kFactorDim) =
        fs.factors[k].z.transpose();
  }
  return tokens;
}

FactorSet factors_from_tokens(const FactorTokenSequence& tokens) {
  if (tokens.rows() != kFactorCount || tokens.cols() != kFactorTokenDim)
    throw ValidationError(
        "token matrix must be " + std::to_string(kFactorCount) + "x" +
        std::to_string(kFactorTokenDim) + ", got " +
        std::to_string(tokens.rows()) + "x" + std::to_string(tokens.cols()));
  FactorSet fs;
  fs.factors.resize(kFactorCount);
  for (int k = 0; k < kFactorCount; ++k) {
    fs.factors[k].x = tokens.row(k).segment(0, kFactorDim).transpose();
    fs.factors[k].y = tokens.row(k).segment(kFactorDim, kFactorDim).transpose();
    fs.factors[k].z =
        tokens.row(k).segment(2 * kFactorDim, kFactorDim).transpose();
  }
  return fs;
}

}  // namespace vlg
