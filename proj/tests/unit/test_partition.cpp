#include "doctest.h"

#include <cmath>
#include <set>

#include "support/oracles.hpp"
#include "vbad/errors.hpp"
#include "vbad/partition.hpp"
#include "vbad/tentative.hpp"

using namespace vbad;
using namespace vbad::testing;

namespace {

// Disjoint supports, unit norms, and every nonzero entry of h covered once.
void check_partition_of(const VideoTensor& h, const PatchBasis& b) {
  std::vector<int> hits(h.size(), 0);
  for (std::size_t m = 0; m < b.size(); ++m) {
    const auto idx = b.indices(m);
    const auto val = b.values(m);
    double n2 = 0.0;
    for (std::size_t e = 0; e < idx.size(); ++e) {
      ++hits[idx[e]];
      n2 += double(val[e]) * val[e];
      CHECK((val[e] > 0) == (h[idx[e]] > 0));
    }
    if (b.degenerate(m)) {
      CHECK(idx.empty());
    } else {
      CHECK(n2 == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(hits[i] == (h[i] != 0.0f ? 1 : 0));
}

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_partition_method("uniform") == PartitionMethod::uniform);
  CHECK(parse_partition_method("random") == PartitionMethod::random);
  CHECK(parse_partition_method("pixel") == PartitionMethod::per_pixel);
  CHECK_THROWS_AS(parse_partition_method("voronoi"), ConfigError);
}

TEST_CASE("uniform grid: count, order and coverage") {
  Rng rng(1);
  const Shape s{3, 10, 9, 3};
  const VideoTensor h = tentative_random(s, rng);
  const auto spec = PartitionSpec::uniform(4, 2);
  const PatchBasis b = build_basis(h, spec, rng);
  CHECK(b.size() == 3 * 4 * 2);
  CHECK(spec.patches_for(s) == 24);
  check_partition_of(h, b);

  // frame-major, then grid rows; the last row and column absorb the remainder
  CHECK(b.indices(0).front() == s.index(0, 0, 0, 0));
  CHECK(b.indices(8).front() == s.index(1, 0, 0, 0));
  CHECK(b.indices(1).front() == s.index(0, 0, 4, 0));
  CHECK(b.indices(7).size() == std::size_t(4) * 5 * 3);  // rows 6..9, cols 4..8
  CHECK(b.indices(0).size() == std::size_t(2) * 4 * 3);
  for (float v : b.values(0)) CHECK(std::abs(std::abs(v) - 1.0f / std::sqrt(24.0f)) < 1e-6f);
}

TEST_CASE("uniform grid consumes no randomness") {
  const Shape s{2, 8, 8, 3};
  const VideoTensor h = tentative_static(s);
  Rng a(4), b(4);
  build_basis(h, PartitionSpec::uniform(2, 2), a);
  CHECK(a() == b());
}

TEST_CASE("per-pixel basis is the signed standard basis") {
  Rng rng(2);
  const Shape s{2, 3, 3, 2};
  const VideoTensor h = tentative_random(s, rng);
  const PatchBasis b = build_basis(h, PartitionSpec::per_pixel(), rng);
  REQUIRE(b.size() == s.size());
  for (std::size_t m = 0; m < b.size(); ++m) {
    REQUIRE(b.indices(m).size() == 1);
    CHECK(b.indices(m)[0] == m);
    CHECK(b.values(m)[0] == h[m]);
  }
}

TEST_CASE("random partition: balanced, disjoint, seeded") {
  const Shape s{2, 7, 7, 3};
  const VideoTensor h = tentative_static(s);
  Rng rng(3);
  const PatchBasis b = build_basis(h, PartitionSpec::random(10), rng);
  CHECK(b.size() == 10);
  check_partition_of(h, b);
  std::size_t lo = s.size(), hi = 0;
  for (std::size_t m = 0; m < b.size(); ++m) {
    lo = std::min(lo, b.indices(m).size());
    hi = std::max(hi, b.indices(m).size());
  }
  CHECK(hi - lo <= 1);

  Rng a(9), c(9), d(10);
  const PatchBasis ba = build_basis(h, PartitionSpec::random(10), a);
  const PatchBasis bc = build_basis(h, PartitionSpec::random(10), c);
  const PatchBasis bd = build_basis(h, PartitionSpec::random(10), d);
  bool same = true, differs = false;
  for (std::size_t m = 0; m < 10; ++m) {
    same = same && std::equal(ba.indices(m).begin(), ba.indices(m).end(),
                              bc.indices(m).begin(), bc.indices(m).end());
    differs = differs || !std::equal(ba.indices(m).begin(), ba.indices(m).end(),
                                     bd.indices(m).begin(), bd.indices(m).end());
  }
  CHECK(same);
  CHECK(differs);

  // patch count 0 matches the uniform grid count
  CHECK(PartitionSpec{PartitionMethod::random, 2, 3, 0}.patches_for(s) == 12);
}

TEST_CASE("zero tentative entries leave holes; all-zero patches are degenerate") {
  const Shape s{1, 4, 4, 1};
  VideoTensor h(s, 1.0f);
  for (std::uint32_t y = 0; y < 2; ++y) {
    for (std::uint32_t x = 0; x < 2; ++x) h.at(0, y, x, 0) = 0.0f;
  }
  h.at(0, 3, 3, 0) = 0.0f;
  Rng rng(5);
  const PatchBasis b = build_basis(h, PartitionSpec::uniform(2, 2), rng);
  CHECK(b.degenerate(0));
  CHECK_FALSE(b.degenerate(1));
  CHECK(b.indices(3).size() == 3);
  check_partition_of(h, b);

  const PatchBasis z = build_basis(VideoTensor(s), PartitionSpec::uniform(2, 2), rng);
  for (std::size_t m = 0; m < z.size(); ++m) CHECK(z.degenerate(m));
}

TEST_CASE("spec validation") {
  const Shape s{1, 4, 4, 1};
  Rng rng(6);
  const VideoTensor h = tentative_static(s);
  CHECK_THROWS_AS(build_basis(h, PartitionSpec::uniform(5, 1), rng), ShapeError);
  CHECK_THROWS_AS(build_basis(h, PartitionSpec::uniform(0, 1), rng), ConfigError);
  CHECK_THROWS_AS(build_basis(h, PartitionSpec::random(17), rng), ShapeError);
}

TEST_CASE("rectify is linear in the weights") {
  Rng rng(7);
  const Shape s{2, 6, 6, 3};
  const VideoTensor h = tentative_random(s, rng);
  const PatchBasis b = build_basis(h, PartitionSpec::uniform(3, 3), rng);
  std::vector<double> v(b.size()), w(b.size()), vw(b.size());
  for (std::size_t m = 0; m < b.size(); ++m) {
    v[m] = standard_normal(rng);
    w[m] = standard_normal(rng);
    vw[m] = 2.0 * v[m] - w[m];
  }
  const VideoTensor rv = rectify(v, b), rw = rectify(w, b), rvw = rectify(vw, b);
  for (std::size_t i = 0; i < rv.size(); ++i) {
    CHECK(rvw[i] == doctest::Approx(2.0 * rv[i] - rw[i]).epsilon(1e-5));
  }
  CHECK_THROWS_AS(rectify(std::vector<double>(3), b), ShapeError);
}

TEST_CASE("projection leaves an orthogonal residual") {
  Rng rng(8);
  const Shape s{2, 6, 6, 3};
  const VideoTensor h = tentative_random(s, rng);
  const PatchBasis b = build_basis(h, PartitionSpec::uniform(2, 3), rng);
  const VideoTensor g = gaussian_video(s, rng);
  const Projection p = project_onto_basis(g, b);
  const VideoTensor resid = add_scaled(g, -1.0, p.tensor);
  for (std::size_t m = 0; m < b.size(); ++m) {
    double d = 0.0;
    const auto idx = b.indices(m);
    const auto val = b.values(m);
    for (std::size_t e = 0; e < idx.size(); ++e) d += double(val[e]) * resid[idx[e]];
    CHECK(std::abs(d) < 1e-5);
  }
  // projecting twice changes nothing
  const Projection pp = project_onto_basis(p.tensor, b);
  for (std::size_t m = 0; m < b.size(); ++m) {
    CHECK(pp.weights[m] == doctest::Approx(p.weights[m]).epsilon(1e-5));
  }
}

TEST_CASE("perturbations stay in the unit box") {
  Rng rng(9);
  const Shape s{1, 4, 4, 3};
  const VideoTensor x = uniform_video(s, rng);
  const VideoTensor h = tentative_random(s, rng);
  const PatchBasis b = build_basis(h, PartitionSpec::uniform(2, 2), rng);
  const std::vector<double> v{5.0, -5.0, 1.0, 0.0};
  const VideoTensor y = perturb_along(x, b, v, 1.0);
  for (float f : y.data()) CHECK((f >= 0.0f && f <= 1.0f));
  const VideoTensor tiny = perturb_along(VideoTensor(s, 0.5f), b, v, 1e-3);
  const VideoTensor expect = add_scaled(VideoTensor(s, 0.5f), 1e-3, rectify(v, b));
  for (std::size_t i = 0; i < tiny.size(); ++i) CHECK(tiny[i] == doctest::Approx(expect[i]));

  const VideoTensor q = perturb_patch(VideoTensor(s, 0.5f), b, 1, 0.1);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const bool in_patch = std::find(b.indices(1).begin(), b.indices(1).end(), i) !=
                          b.indices(1).end();
    if (!in_patch) CHECK(q[i] == 0.5f);
  }
}
