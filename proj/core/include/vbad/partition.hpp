#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "vbad/models.hpp"
#include "vbad/random.hpp"
#include "vbad/tensor.hpp"

namespace vbad {

enum class PartitionMethod { uniform, random, per_pixel };

std::string_view to_string(PartitionMethod m);
/// Accepts the CLI spellings: uniform, random, pixel.
PartitionMethod parse_partition_method(std::string_view s);

struct PartitionSpec {
  PartitionMethod method = PartitionMethod::uniform;
  std::uint32_t grid_rows = 8;     // uniform
  std::uint32_t grid_cols = 8;     // uniform
  std::uint32_t patch_count = 0;   // random; 0 = match the uniform grid's count

  static PartitionSpec uniform(std::uint32_t rows, std::uint32_t cols) {
    return {PartitionMethod::uniform, rows, cols, 0};
  }
  static PartitionSpec random(std::uint32_t patches) {
    return {PartitionMethod::random, 8, 8, patches};
  }
  static PartitionSpec per_pixel() { return {PartitionMethod::per_pixel, 1, 1, 0}; }

  /// Number of patches this spec produces for `shape`.
  std::uint32_t patches_for(const Shape& shape) const;
  void validate(const Shape& shape) const;
};

/// M direction vectors with pairwise-disjoint supports, stored as one CSR-style
/// block: patch m owns entries [offsets[m], offsets[m+1]).
class PatchBasis {
 public:
  PatchBasis() = default;

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return degenerate_.size(); }

  std::span<const std::uint32_t> indices(std::size_t m) const noexcept {
    return std::span<const std::uint32_t>(indices_).subspan(
        offsets_[m], offsets_[m + 1] - offsets_[m]);
  }
  std::span<const float> values(std::size_t m) const noexcept {
    return std::span<const float>(values_).subspan(offsets_[m],
                                                   offsets_[m + 1] - offsets_[m]);
  }
  SparseDirection direction(std::size_t m) const noexcept {
    return {indices(m), values(m)};
  }
  /// True when the tentative perturbation was zero on the whole patch.
  bool degenerate(std::size_t m) const noexcept { return degenerate_[m] != 0; }

 private:
  friend PatchBasis build_basis(const VideoTensor&, const PartitionSpec&, Rng&);

  Shape shape_{};
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> indices_;
  std::vector<float> values_;
  std::vector<std::uint8_t> degenerate_;
};

/// u^(m) = h restricted to patch m, normalized to unit L2 norm. Indices where h
/// is zero are left out of every support. Patch order is frame-major then
/// grid-row-major for uniform grids; the last row/column absorbs remainders.
/// Random partitions consume rng, other methods do not.
PatchBasis build_basis(const VideoTensor& h, const PartitionSpec& spec, Rng& rng);

/// sum_m v_m u^(m)
VideoTensor rectify(std::span<const double> v, const PatchBasis& basis);

/// clamp01(x + scale * sum_m v_m u^(m)), the query point for a weight sample.
VideoTensor perturb_along(const VideoTensor& x, const PatchBasis& basis,
                          std::span<const double> v, double scale);

/// x + t u^(m) on one patch, clamped to [0, 1].
VideoTensor perturb_patch(const VideoTensor& x, const PatchBasis& basis,
                          std::size_t m, double t);

struct Projection {
  std::vector<double> weights;  // <u^(m), g>
  VideoTensor tensor;           // rectify(weights)
};

/// Orthogonal projection of g onto span(U).
Projection project_onto_basis(const VideoTensor& g, const PatchBasis& basis);

}  // namespace vbad
