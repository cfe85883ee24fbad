#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "support/oracles.hpp"
#include "vbad/errors.hpp"
#include "vbad/oracle.hpp"
#include "vbad/protocol.hpp"

using namespace vbad;
using namespace vbad::testing;

TEST_CASE("query counter charges atomically and never overruns") {
  QueryCounter c(5);
  c.acquire(3);
  CHECK(c.used() == 3);
  CHECK(c.remaining() == 2);
  CHECK_THROWS_AS(c.acquire(3), BudgetExceeded);
  CHECK(c.used() == 3);
  c.acquire(2);
  CHECK_THROWS_AS(c.acquire(), BudgetExceeded);
  CHECK(c.used() == 5);
  CHECK_THROWS_AS(QueryCounter(0), ConfigError);
}

TEST_CASE("query counter is exact under contention") {
  QueryCounter c(10000);
  std::atomic<int> granted{0}, refused{0};
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&] {
      for (int i = 0; i < 3000; ++i) {
        try {
          c.acquire();
          ++granted;
        } catch (const BudgetExceeded&) {
          ++refused;
        }
      }
    });
  }
  for (auto& t : ts) t.join();
  CHECK(granted.load() == 10000);
  CHECK(refused.load() == 2000);
  CHECK(c.used() == 10000);
}

TEST_CASE("query_top1 charges before asking") {
  ScriptedOracle o({{1, 0.9}});
  QueryCounter c(2);
  const VideoTensor x(Shape{1, 1, 1, 1});
  query_top1(o, x, c);
  query_top1(o, x, c);
  CHECK_THROWS_AS(query_top1(o, x, c), BudgetExceeded);
  CHECK(o.calls() == 2);
}

TEST_CASE("adversarial loss from a top-1 answer") {
  const auto u = adversarial_loss({3, 0.8}, AttackGoal::untargeted(3));
  CHECK(u.valid);
  CHECK(u.value == doctest::Approx(std::log(0.8)));
  CHECK_FALSE(adversarial_loss({2, 0.8}, AttackGoal::untargeted(3)).valid);
  const auto t = adversarial_loss({4, 0.25}, AttackGoal::targeted(4));
  CHECK(t.valid);
  CHECK(t.value == doctest::Approx(-std::log(0.25)));
  CHECK_FALSE(adversarial_loss({1, 0.9}, AttackGoal::targeted(4)).valid);
}

TEST_CASE("top1 picks the first maximum") {
  const std::vector<double> p{0.1, 0.4, 0.4, 0.1};
  const auto r = top1_of(p);
  CHECK(r.label == 1);
  CHECK(r.prob == 0.4);
}

TEST_CASE("base64 round-trips and rejects junk") {
  for (std::size_t n = 0; n < 20; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = std::uint8_t(i * 29 + 7);
    const std::string enc = base64_encode(bytes);
    CHECK(enc.size() % 4 == 0);
    CHECK(base64_decode(enc) == bytes);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
  CHECK_THROWS_AS(base64_decode("TW$u"), IoError);
  CHECK_THROWS_AS(base64_decode("TWF"), IoError);
}

TEST_CASE("request handling: answers, parse errors and shape errors") {
  const auto model = ToyClassifier::generate(tiny_config(3));
  Rng rng(4);
  const VideoTensor x = uniform_video(model.input_shape(), rng);

  const auto ok = nlohmann::json::parse(handle_request_line(model, encode_request(17, x)));
  CHECK(ok["id"] == 17);
  const auto expect = top1_of(model.forward(x));
  CHECK(ok["label"] == expect.label);
  CHECK(ok["prob"].get<double>() == expect.prob);

  const auto parse = nlohmann::json::parse(handle_request_line(model, "{not json"));
  CHECK(parse["id"].is_null());
  CHECK(parse["error"] == "parse");

  const VideoTensor wrong(Shape{1, 8, 8, 3});
  const auto shape = nlohmann::json::parse(handle_request_line(model, encode_request(5, wrong)));
  CHECK(shape["id"] == 5);
  CHECK(shape["error"] == "shape mismatch");

  const auto short_payload = nlohmann::json::parse(handle_request_line(
      model, R"({"id":9,"shape":[4,8,8,3],"data_b64":"AAAA"})"));
  CHECK(short_payload["id"] == 9);
  CHECK(short_payload.contains("error"));
}

TEST_CASE("serve_stream answers one line per request") {
  const auto model = ToyClassifier::generate(tiny_config(3));
  Rng rng(6);
  std::stringstream in, out;
  for (int i = 0; i < 3; ++i) in << encode_request(i, uniform_video(model.input_shape(), rng)) << "\n";
  in << "\n" << "garbage\n";
  serve_stream(model, in, out);
  std::string line;
  int n = 0;
  while (std::getline(out, line)) ++n;
  CHECK(n == 4);
}

TEST_CASE("response decoding") {
  const auto r = decode_response(encode_response(3, {2, 0.125}));
  REQUIRE(r.result);
  CHECK(*r.id == 3);
  CHECK(r.result->label == 2);
  CHECK(r.result->prob == 0.125);
  const auto e = decode_response(encode_error(std::nullopt, "parse"));
  CHECK_FALSE(e.id);
  CHECK(e.error == "parse");
  CHECK_THROWS_AS(decode_response("nope"), OracleUnavailable);
  CHECK_THROWS_AS(decode_response(R"({"id":1})"), OracleUnavailable);
}

TEST_CASE("TCP adapter agrees with the in-process oracle") {
  auto model = std::make_shared<const ToyClassifier>(ToyClassifier::generate(tiny_config(8)));
  TcpServer server(model, "127.0.0.1", 0);
  std::thread th([&] { server.run(); });
  {
    RemoteOracle remote(connect_tcp_channel("127.0.0.1", server.port()));
    ToyOracle local(model);
    Rng rng(12);
    for (int i = 0; i < 20; ++i) {
      const VideoTensor x = uniform_video(model->input_shape(), rng);
      const auto a = remote.evaluate(x);
      const auto b = local.evaluate(x);
      CHECK(a.label == b.label);
      CHECK(a.prob == b.prob);
    }
    CHECK_THROWS_AS(remote.evaluate(VideoTensor(Shape{1, 2, 2, 3})), OracleUnavailable);
  }
  server.stop();
  th.join();
}

TEST_CASE("open_oracle validates URIs") {
  CHECK_THROWS_AS(open_oracle("nothing"), ConfigError);
  CHECK_THROWS_AS(open_oracle("ftp:host"), ConfigError);
  CHECK_THROWS_AS(open_oracle("tcp:localhost"), ConfigError);
  CHECK_THROWS_AS(open_oracle("builtin:/nonexistent.vbm"), IoError);
  CHECK_THROWS_AS(open_oracle("tcp:127.0.0.1:1"), OracleUnavailable);
}

TEST_CASE("builtin oracle loads a model file") {
  const auto path = std::filesystem::temp_directory_path() / "vbad_test_oracle.vbm";
  const ModelBundle b = generate_bundle(tiny_config(5));
  save_vbm(path, b);
  auto o = open_oracle("builtin:" + path.string());
  Rng rng(1);
  const VideoTensor x = uniform_video(b.classifier.input_shape(), rng);
  const auto r = o->evaluate(x);
  const auto e = top1_of(b.classifier.forward(x));
  CHECK(r.label == e.label);
  CHECK(r.prob == e.prob);
  std::filesystem::remove(path);
}
