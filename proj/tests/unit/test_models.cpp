#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "support/oracles.hpp"
#include "vbad/errors.hpp"
#include "vbad/models.hpp"

using namespace vbad;
using namespace vbad::testing;

namespace {

// |a - b| <= tol * max(|a|, |b|, floor)
bool close_rel(double a, double b, double tol, double floor) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

TEST_CASE("generation is seeded") {
  const auto a = ToyClassifier::generate(tiny_config(4));
  const auto b = ToyClassifier::generate(tiny_config(4));
  const auto c = ToyClassifier::generate(tiny_config(5));
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.conv_weights().size() == 4 * 9 * 3);
  CHECK(a.linear_weights().size() == 5 * 4 * 16);
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  c.classes = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.height = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.logit_scale = 0.0f;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("forward is a distribution and matches the direct convolution path") {
  Rng rng(8);
  for (std::uint32_t seed = 0; seed < 10; ++seed) {
    const auto m = ToyClassifier::generate(tiny_config(seed));
    const VideoTensor x = uniform_video(m.input_shape(), rng);
    const auto p = m.forward(x);
    const auto q = m.forward_reference(x);
    REQUIRE(p.size() == 5);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t k = 0; k < p.size(); ++k) {
      CHECK(p[k] >= 0.0);
      CHECK(std::abs(p[k] - q[k]) <= 1e-9);
    }
  }
  const auto m = ToyClassifier::generate(tiny_config());
  CHECK_THROWS_AS(m.forward(VideoTensor(Shape{4, 8, 8, 1})), ShapeError);
}

TEST_CASE("uneven frames pool with the last row and column absorbing the rest") {
  ModelConfig c = tiny_config(2);
  c.height = 10;
  c.width = 11;
  const auto m = ToyClassifier::generate(c);
  Rng rng(1);
  const VideoTensor x = uniform_video(m.input_shape(), rng);
  const auto p = m.forward(x);
  const auto q = m.forward_reference(x);
  for (std::size_t k = 0; k < p.size(); ++k) CHECK(std::abs(p[k] - q[k]) <= 1e-9);
}

TEST_CASE("golden probabilities for a fixed model and input") {
  const auto m = ToyClassifier::generate(tiny_config(7));
  VideoTensor x(m.input_shape());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = float((i * 37) % 101) / 100.0f;
  const auto p = m.forward(x);
  // Pinned from the first deterministic build.
  const std::vector<double> golden = {0.00056353411780739619, 0.017879452571541454,
                                       0.98013803305368541, 0.00063915449458159103,
                                       0.00077982576238429886};
  REQUIRE(p.size() == golden.size());
  for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k] == doctest::Approx(golden[k]).epsilon(1e-9));
}

TEST_CASE("input gradient matches central differences") {
  Rng rng(21);
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const auto m = ToyClassifier::generate(tiny_config(100 + seed));
    const VideoTensor x = uniform_video(m.input_shape(), rng, 0.05f, 0.95f);
    const std::uint32_t label = std::uint32_t(rng() % m.classes());
    const AttackGoal goal =
        seed % 2 ? AttackGoal::targeted(label) : AttackGoal::untargeted(label);
    const VideoTensor g = m.input_gradient(x, goal);
    double gmax = 0.0;
    for (float v : g.data()) gmax = std::max(gmax, double(std::abs(v)));

    std::vector<double> xd = as_double(x);
    for (int k = 0; k < 100; ++k) {
      const std::size_t i = rng() % x.size();
      const double xi = xd[i];
      xd[i] = xi + 1e-3;
      const double fp = m.adversarial_loss(xd, goal);
      xd[i] = xi - 1e-3;
      const double fm = m.adversarial_loss(xd, goal);
      xd[i] = xi;
      const double fd = (fp - fm) / 2e-3;
      CHECK(close_rel(fd, g[i], 1e-3, 1e-3 * gmax));
    }
  }
}

TEST_CASE("untargeted and targeted gradients for the same class are negatives") {
  Rng rng(5);
  const auto m = ToyClassifier::generate(tiny_config(3));
  const VideoTensor x = uniform_video(m.input_shape(), rng);
  const VideoTensor gu = m.input_gradient(x, AttackGoal::untargeted(2));
  const VideoTensor gt = m.input_gradient(x, AttackGoal::targeted(2));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(gu[i] == -gt[i]);
  CHECK(m.adversarial_loss(x, AttackGoal::untargeted(2)) ==
        doctest::Approx(-m.adversarial_loss(x, AttackGoal::targeted(2))));
}

TEST_CASE("directional derivative equals <u, grad>") {
  Rng rng(9);
  const auto m = ToyClassifier::generate(tiny_config(6));
  const VideoTensor x = uniform_video(m.input_shape(), rng);
  const AttackGoal goal = AttackGoal::untargeted(1);
  const VideoTensor g = m.input_gradient(x, goal);

  std::vector<std::uint32_t> idx;
  std::vector<float> val;
  for (std::uint32_t i = 0; i < x.size(); i += 7) {
    idx.push_back(i);
    val.push_back(float(standard_normal(rng)));
  }
  double expect = 0.0;
  for (std::size_t e = 0; e < idx.size(); ++e) expect += double(val[e]) * double(g[idx[e]]);
  const SparseDirection u{idx, val};
  CHECK(m.directional_derivative(x, u, goal) == doctest::Approx(expect).epsilon(1e-5));

  const std::vector<SparseDirection> dirs{u, u};
  const auto batch = m.directional_derivatives(x, dirs, goal);
  CHECK(batch[0] == m.directional_derivative(x, u, goal));
  CHECK(batch[1] == batch[0]);

  const std::vector<std::uint32_t> bad_idx{std::uint32_t(x.size())};
  const std::vector<float> one{1.0f};
  CHECK_THROWS_AS(m.directional_derivative(x, SparseDirection{bad_idx, one}, goal),
                  ShapeError);
}

TEST_CASE("feature extractor output shape and range") {
  const auto fe = FeatureExtractor::generate(4, 3, 12);
  Image frame(6, 7, 3, 0.3f);
  const Image f = fe.forward(frame);
  CHECK(f.height == 6);
  CHECK(f.width == 7);
  CHECK(f.channels == 4);
  for (float v : f.data) CHECK(std::abs(v) < 1.0f);
  CHECK_THROWS_AS(fe.forward(Image(6, 7, 1)), ShapeError);
}

TEST_CASE("feature distance gradient matches central differences") {
  Rng rng(31);
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const auto fe = FeatureExtractor::generate(3, 3, 500 + seed);
    Image frame(6, 6, 3);
    for (float& v : frame.data) v = float(0.1 + 0.8 * (rng() % 1000) / 1000.0);
    Image target(6, 6, 3);
    for (float& v : target.data) v = float(standard_normal(rng));
    Image mask(6, 6, 3);
    for (float& v : mask.data) v = (rng() % 2) ? 1.0f : 0.0f;

    const Image g = fe.feature_distance_gradient(frame, target, mask);
    double gmax = 0.0;
    for (float v : g.data) gmax = std::max(gmax, double(std::abs(v)));
    for (int k = 0; k < 50; ++k) {
      const std::size_t i = rng() % frame.size();
      Image p = frame, q = frame;
      p.data[i] += 1e-3f;
      q.data[i] -= 1e-3f;
      const double h = double(p.data[i]) - double(q.data[i]);
      const double fd = (fe.feature_distance(p, target, mask) -
                         fe.feature_distance(q, target, mask)) / h;
      CHECK(close_rel(fd, g.data[i], 1e-3, 1e-3 * gmax));
    }
  }
}

TEST_CASE("bundle carries three distinct surrogates") {
  const ModelBundle b = generate_bundle(tiny_config(2));
  REQUIRE(b.surrogates.size() == ModelConfig::kSurrogateCount);
  CHECK_FALSE(*b.surrogates[0] == *b.surrogates[1]);
  CHECK_FALSE(*b.surrogates[1] == *b.surrogates[2]);
  CHECK(b.surrogates[0]->filters() == 3);
}

TEST_CASE("VBM round-trips bit-exactly") {
  const ModelBundle b = generate_bundle(tiny_config(13));
  std::stringstream ss;
  write_vbm(ss, b);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "VBM1");
  const ModelBundle back = read_vbm(ss);
  CHECK(back.classifier == b.classifier);
  REQUIRE(back.surrogates.size() == b.surrogates.size());
  for (std::size_t s = 0; s < b.surrogates.size(); ++s) {
    CHECK(*back.surrogates[s] == *b.surrogates[s]);
  }
  std::stringstream again;
  write_vbm(again, back);
  CHECK(again.str() == bytes);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 2));
  CHECK_THROWS_AS(read_vbm(truncated), IoError);
  std::stringstream bad("VBM2" + bytes.substr(4));
  CHECK_THROWS_AS(read_vbm(bad), IoError);
}
