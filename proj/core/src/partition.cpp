#include "vbad/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vbad/errors.hpp"

namespace vbad {

std::string_view to_string(PartitionMethod m) {
  switch (m) {
    case PartitionMethod::uniform: return "uniform";
    case PartitionMethod::random: return "random";
    case PartitionMethod::per_pixel: return "pixel";
  }
  return "?";
}

PartitionMethod parse_partition_method(std::string_view s) {
  if (s == "uniform") return PartitionMethod::uniform;
  if (s == "random") return PartitionMethod::random;
  if (s == "pixel") return PartitionMethod::per_pixel;
  throw ConfigError("unknown partition method: " + std::string(s));
}

std::uint32_t PartitionSpec::patches_for(const Shape& shape) const {
  switch (method) {
    case PartitionMethod::uniform: return shape.frames * grid_rows * grid_cols;
    case PartitionMethod::random:
      return patch_count != 0 ? patch_count : shape.frames * grid_rows * grid_cols;
    case PartitionMethod::per_pixel: return static_cast<std::uint32_t>(shape.size());
  }
  return 0;
}

void PartitionSpec::validate(const Shape& shape) const {
  shape.validate();
  if (method == PartitionMethod::uniform) {
    if (grid_rows == 0 || grid_cols == 0) throw ConfigError("grid must be non-empty");
    if (grid_rows > shape.height || grid_cols > shape.width) {
      throw ShapeError("partition grid is finer than the frame");
    }
  }
  if (method == PartitionMethod::random) {
    const std::uint32_t m = patches_for(shape);
    if (m == 0 || m > shape.size()) {
      throw ShapeError("random partition patch count out of range");
    }
  }
}

PatchBasis build_basis(const VideoTensor& h, const PartitionSpec& spec, Rng& rng) {
  const Shape& s = h.shape();
  spec.validate(s);
  PatchBasis b;
  b.shape_ = s;
  const std::uint32_t M = spec.patches_for(s);
  b.offsets_.reserve(M + 1);
  b.indices_.reserve(s.size());
  b.values_.reserve(s.size());
  b.degenerate_.reserve(M);

  auto close_patch = [&](std::size_t start) {
    double norm2 = 0.0;
    for (std::size_t e = start; e < b.values_.size(); ++e) {
      norm2 += double(b.values_[e]) * double(b.values_[e]);
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t e = start; e < b.values_.size(); ++e) {
        b.values_[e] = static_cast<float>(double(b.values_[e]) * inv);
      }
    }
    b.degenerate_.push_back(norm2 > 0.0 ? 0 : 1);
    b.offsets_.push_back(b.indices_.size());
  };
  auto add = [&](std::size_t idx) {
    if (h[idx] != 0.0f) {
      b.indices_.push_back(static_cast<std::uint32_t>(idx));
      b.values_.push_back(h[idx]);
    }
  };

  switch (spec.method) {
    case PartitionMethod::uniform: {
      const std::uint32_t bh = s.height / spec.grid_rows;
      const std::uint32_t bw = s.width / spec.grid_cols;
      for (std::uint32_t n = 0; n < s.frames; ++n) {
        for (std::uint32_t gr = 0; gr < spec.grid_rows; ++gr) {
          const std::uint32_t y1 = gr + 1 == spec.grid_rows ? s.height : (gr + 1) * bh;
          for (std::uint32_t gc = 0; gc < spec.grid_cols; ++gc) {
            const std::uint32_t x1 = gc + 1 == spec.grid_cols ? s.width : (gc + 1) * bw;
            const std::size_t start = b.indices_.size();
            for (std::uint32_t y = gr * bh; y < y1; ++y) {
              for (std::uint32_t x = gc * bw; x < x1; ++x) {
                for (std::uint32_t c = 0; c < s.channels; ++c) add(s.index(n, y, x, c));
              }
            }
            close_patch(start);
          }
        }
      }
      break;
    }
    case PartitionMethod::random: {
      std::vector<std::uint32_t> order(s.size());
      std::iota(order.begin(), order.end(), 0u);
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t base = s.size() / M;
      const std::size_t extra = s.size() % M;
      std::size_t pos = 0;
      for (std::uint32_t m = 0; m < M; ++m) {
        const std::size_t len = base + (m < extra ? 1 : 0);
        std::sort(order.begin() + pos, order.begin() + pos + len);
        const std::size_t start = b.indices_.size();
        for (std::size_t e = pos; e < pos + len; ++e) add(order[e]);
        close_patch(start);
        pos += len;
      }
      break;
    }
    case PartitionMethod::per_pixel: {
      for (std::size_t idx = 0; idx < s.size(); ++idx) {
        const std::size_t start = b.indices_.size();
        add(idx);
        close_patch(start);
      }
      break;
    }
  }
  return b;
}

VideoTensor rectify(std::span<const double> v, const PatchBasis& basis) {
  if (v.size() != basis.size()) {
    throw ShapeError("rectify: weight vector length " + std::to_string(v.size()) +
                     " does not match patch count " + std::to_string(basis.size()));
  }
  VideoTensor out(basis.shape());
  for (std::size_t m = 0; m < basis.size(); ++m) {
    const auto idx = basis.indices(m);
    const auto val = basis.values(m);
    for (std::size_t e = 0; e < idx.size(); ++e) {
      out[idx[e]] = static_cast<float>(v[m] * double(val[e]));
    }
  }
  return out;
}

VideoTensor perturb_along(const VideoTensor& x, const PatchBasis& basis,
                          std::span<const double> v, double scale) {
  if (x.shape() != basis.shape()) throw ShapeError("perturb_along: shape mismatch");
  if (v.size() != basis.size()) throw ShapeError("perturb_along: weight length mismatch");
  VideoTensor out = x;
  for (std::size_t m = 0; m < basis.size(); ++m) {
    const double w = scale * v[m];
    const auto idx = basis.indices(m);
    const auto val = basis.values(m);
    for (std::size_t e = 0; e < idx.size(); ++e) {
      const double p = double(x[idx[e]]) + w * double(val[e]);
      out[idx[e]] = static_cast<float>(std::clamp(p, 0.0, 1.0));
    }
  }
  return out;
}

VideoTensor perturb_patch(const VideoTensor& x, const PatchBasis& basis,
                          std::size_t m, double t) {
  if (x.shape() != basis.shape()) throw ShapeError("perturb_patch: shape mismatch");
  VideoTensor out = x;
  const auto idx = basis.indices(m);
  const auto val = basis.values(m);
  for (std::size_t e = 0; e < idx.size(); ++e) {
    const double p = double(x[idx[e]]) + t * double(val[e]);
    out[idx[e]] = static_cast<float>(std::clamp(p, 0.0, 1.0));
  }
  return out;
}

Projection project_onto_basis(const VideoTensor& g, const PatchBasis& basis) {
  if (g.shape() != basis.shape()) throw ShapeError("project_onto_basis: shape mismatch");
  Projection p;
  p.weights.assign(basis.size(), 0.0);
  for (std::size_t m = 0; m < basis.size(); ++m) {
    const auto idx = basis.indices(m);
    const auto val = basis.values(m);
    double s = 0.0;
    for (std::size_t e = 0; e < idx.size(); ++e) s += double(val[e]) * double(g[idx[e]]);
    p.weights[m] = s;
  }
  p.tensor = rectify(p.weights, basis);
  return p;
}

}  // namespace vbad
