#pragma once

// Line-delimited JSON oracle protocol, one object per line:
//   request:  {"id": <u64>, "shape": [N,H,W,C], "data_b64": "<float32 LE>"}
//   response: {"id": <u64>, "label": <u32>, "prob": <f64>}
//   error:    {"id": <u64|null>, "error": "<string>"}
// Responses on a connection come back in request order.

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "vbad/models.hpp"
#include "vbad/oracle.hpp"
#include "vbad/tensor.hpp"

namespace vbad {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws IoError on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct OracleRequest {
  std::uint64_t id = 0;
  VideoTensor x;
};

std::string encode_request(std::uint64_t id, const VideoTensor& x);
std::string encode_response(std::uint64_t id, const OracleResponse& r);
std::string encode_error(std::optional<std::uint64_t> id, std::string_view message);

/// Parsed response line: either a result or an error message.
struct ResponseLine {
  std::optional<std::uint64_t> id;
  std::optional<OracleResponse> result;
  std::string error;
};
ResponseLine decode_response(std::string_view line);

/// Answer one request line. Never throws for malformed input; returns an
/// error line instead ("parse" when the JSON itself is unreadable).
std::string handle_request_line(const ToyClassifier& model, std::string_view line);

/// Serve requests from `in` until EOF.
void serve_stream(const ToyClassifier& model, std::istream& in, std::ostream& out);

/// Blocking TCP server; one thread per connection.
class TcpServer {
 public:
  /// Binds immediately; port 0 picks an ephemeral port.
  TcpServer(std::shared_ptr<const ToyClassifier> model, const std::string& host,
            std::uint16_t port);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  /// Accept loop; returns after stop().
  void run();
  void stop();

 private:
  void serve_connection(int fd);

  std::shared_ptr<const ToyClassifier> model_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

/// Bidirectional line transport used by the client adapters.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void send_line(std::string_view line) = 0;
  /// Returns nullopt on EOF.
  virtual std::optional<std::string> recv_line() = 0;
};

/// Oracle adapter speaking the protocol over a LineChannel. One request in
/// flight at a time per connection.
class RemoteOracle final : public Oracle {
 public:
  explicit RemoteOracle(std::unique_ptr<LineChannel> channel);
  OracleResponse evaluate(const VideoTensor& x) override;

 private:
  std::unique_ptr<LineChannel> channel_;
  std::mutex mu_;
  std::uint64_t next_id_ = 1;
};

/// Spawn `/bin/sh -c command` and talk over its stdin/stdout.
std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command);
std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host,
                                                 std::uint16_t port);

/// Build an oracle from "builtin:PATH.vbm", "exec:CMD" or "tcp:HOST:PORT".
std::unique_ptr<Oracle> open_oracle(const std::string& uri);

}  // namespace vbad
