#include "vbad/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "vbad/errors.hpp"

namespace vbad {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char ch) {
  if (ch >= 'A' && ch <= 'Z') return ch - 'A';
  if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
  if (ch >= '0' && ch <= '9') return ch - '0' + 52;
  if (ch == '+') return 62;
  if (ch == '/') return 63;
  return -1;
}

std::vector<std::uint8_t> tensor_bytes(const VideoTensor& x) {
  std::vector<std::uint8_t> out(x.size() * 4);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(x[i]);
    out[4 * i] = u & 0xff;
    out[4 * i + 1] = (u >> 8) & 0xff;
    out[4 * i + 2] = (u >> 16) & 0xff;
    out[4 * i + 3] = (u >> 24) & 0xff;
  }
  return out;
}

// Thrown while decoding a request whose id is already known.
struct RequestError {
  std::optional<std::uint64_t> id;
  std::string message;
};

OracleRequest decode_request(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw RequestError{std::nullopt, "parse"};
  }
  if (!j.is_object()) throw RequestError{std::nullopt, "request must be an object"};
  std::optional<std::uint64_t> id;
  if (auto it = j.find("id"); it != j.end() && it->is_number_unsigned()) {
    id = it->get<std::uint64_t>();
  } else {
    throw RequestError{std::nullopt, "missing or invalid id"};
  }
  const auto shape_it = j.find("shape");
  if (shape_it == j.end() || !shape_it->is_array() || shape_it->size() != 4) {
    throw RequestError{id, "shape must be [N,H,W,C]"};
  }
  std::array<std::uint32_t, 4> dims{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& d = (*shape_it)[i];
    if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0 ||
        d.get<std::uint64_t>() > 0xffffffffULL) {
      throw RequestError{id, "shape entries must be positive integers"};
    }
    dims[i] = d.get<std::uint32_t>();
  }
  const Shape shape{dims[0], dims[1], dims[2], dims[3]};
  try {
    shape.validate();
  } catch (const ShapeError& e) {
    throw RequestError{id, e.what()};
  }
  const auto data_it = j.find("data_b64");
  if (data_it == j.end() || !data_it->is_string()) {
    throw RequestError{id, "missing data_b64"};
  }
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(data_it->get_ref<const std::string&>());
  } catch (const IoError& e) {
    throw RequestError{id, e.what()};
  }
  if (bytes.size() != shape.size() * 4) {
    throw RequestError{id, "payload length does not match shape"};
  }
  std::vector<float> data(shape.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint32_t u = std::uint32_t{bytes[4 * i]} |
                            (std::uint32_t{bytes[4 * i + 1]} << 8) |
                            (std::uint32_t{bytes[4 * i + 2]} << 16) |
                            (std::uint32_t{bytes[4 * i + 3]} << 24);
    data[i] = std::bit_cast<float>(u);
  }
  return {*id, VideoTensor(shape, std::move(data))};
}

// -- fd-backed line transport ------------------------------------------------

class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd) : rfd_(read_fd), wfd_(write_fd) {}
  ~FdChannel() override { close_fds(); }

  void send_line(std::string_view line) override {
    std::string buf(line);
    buf.push_back('\n');
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t n = write_some(p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable(std::string("oracle write failed: ") +
                                std::strerror(errno));
      }
      p += n;
      left -= std::size_t(n);
    }
  }

  std::optional<std::string> recv_line() override {
    for (;;) {
      if (auto pos = buf_.find('\n'); pos != std::string::npos) {
        std::string line = buf_.substr(0, pos);
        buf_.erase(0, pos + 1);
        return line;
      }
      std::array<char, 65536> chunk{};
      const ssize_t n = ::read(rfd_, chunk.data(), chunk.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable(std::string("oracle read failed: ") +
                                std::strerror(errno));
      }
      if (n == 0) {
        if (buf_.empty()) return std::nullopt;
        std::string line = std::move(buf_);
        buf_.clear();
        return line;
      }
      buf_.append(chunk.data(), std::size_t(n));
    }
  }

 protected:
  virtual ssize_t write_some(const char* p, std::size_t n) {
    return ::write(wfd_, p, n);
  }
  void close_fds() {
    if (wfd_ >= 0 && wfd_ != rfd_) ::close(wfd_);
    if (rfd_ >= 0) ::close(rfd_);
    rfd_ = wfd_ = -1;
  }
  void close_write() {
    if (wfd_ >= 0 && wfd_ != rfd_) {
      ::close(wfd_);
      wfd_ = -1;
    }
  }

  int rfd_;
  int wfd_;
  std::string buf_;
};

class SocketChannel final : public FdChannel {
 public:
  explicit SocketChannel(int fd) : FdChannel(fd, fd) {}

 protected:
  ssize_t write_some(const char* p, std::size_t n) override {
    return ::send(wfd_, p, n, MSG_NOSIGNAL);
  }
};

class ProcessChannel final : public FdChannel {
 public:
  ProcessChannel(int read_fd, int write_fd, pid_t pid)
      : FdChannel(read_fd, write_fd), pid_(pid) {}
  ~ProcessChannel() override {
    close_write();  // child sees EOF and exits
    int status = 0;
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) return;
      ::usleep(10000);
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, &status, 0);
  }

 private:
  pid_t pid_;
};

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(),
                               service.c_str(), &hints, &res);
  if (rc != 0 || res == nullptr) {
    throw OracleUnavailable("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  return res;
}

}  // namespace

// -- base64 -------------------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) |
                            (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v =
        (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw IoError("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      int d;
      if (ch == '=' && last && k >= 2) {
        ++pad;
        d = 0;
      } else {
        if (pad > 0) throw IoError("base64 padding in the middle of a quantum");
        d = b64_value(ch);
        if (d < 0) throw IoError("invalid base64 character");
      }
      v = (v << 6) | std::uint32_t(d);
    }
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

// -- message codec ------------------------------------------------------------

std::string encode_request(std::uint64_t id, const VideoTensor& x) {
  const Shape& s = x.shape();
  json j;
  j["id"] = id;
  j["shape"] = {s.frames, s.height, s.width, s.channels};
  j["data_b64"] = base64_encode(tensor_bytes(x));
  return j.dump();
}

std::string encode_response(std::uint64_t id, const OracleResponse& r) {
  json j;
  j["id"] = id;
  j["label"] = r.label;
  j["prob"] = r.prob;
  return j.dump();
}

std::string encode_error(std::optional<std::uint64_t> id,
                         std::string_view message) {
  json j;
  j["id"] = id ? json(*id) : json(nullptr);
  j["error"] = std::string(message);
  return j.dump();
}

ResponseLine decode_response(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw OracleUnavailable("oracle sent unparseable line");
  }
  if (!j.is_object()) throw OracleUnavailable("oracle response is not an object");
  ResponseLine out;
  if (auto it = j.find("id"); it != j.end() && it->is_number_unsigned()) {
    out.id = it->get<std::uint64_t>();
  }
  if (auto it = j.find("error"); it != j.end()) {
    out.error = it->is_string() ? it->get<std::string>() : it->dump();
    return out;
  }
  const auto label = j.find("label");
  const auto prob = j.find("prob");
  if (label == j.end() || !label->is_number_unsigned() || prob == j.end() ||
      !prob->is_number()) {
    throw OracleUnavailable("oracle response lacks label/prob");
  }
  out.result = OracleResponse{label->get<std::uint32_t>(), prob->get<double>()};
  return out;
}

std::string handle_request_line(const ToyClassifier& model, std::string_view line) {
  try {
    OracleRequest req = decode_request(line);
    if (req.x.shape() != model.input_shape()) {
      return encode_error(req.id, "shape mismatch");
    }
    return encode_response(req.id, top1_of(model.forward(req.x)));
  } catch (const RequestError& e) {
    return encode_error(e.id, e.message);
  }
}

void serve_stream(const ToyClassifier& model, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << handle_request_line(model, line) << '\n';
    out.flush();
  }
}

// -- TCP server ---------------------------------------------------------------

TcpServer::TcpServer(std::shared_ptr<const ToyClassifier> model,
                     const std::string& host, std::uint16_t port)
    : model_(std::move(model)) {
  if (!model_) throw ConfigError("TcpServer needs a model");
  addrinfo* res = resolve(host, port, true);
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    throw IoError(std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 ||
      ::listen(listen_fd_, 16) != 0) {
    const std::string msg = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    throw IoError("cannot listen on " + host + ":" + std::to_string(port) + ": " + msg);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpServer::~TcpServer() {
  stop();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpServer::run() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  std::lock_guard lock(mu_);
  for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
}

void TcpServer::serve_connection(int fd) {
  SocketChannel ch(fd);
  try {
    while (auto line = ch.recv_line()) {
      if (!line->empty() && line->back() == '\r') line->pop_back();
      if (line->empty()) continue;
      ch.send_line(handle_request_line(*model_, *line));
    }
  } catch (const OracleUnavailable&) {
    // peer went away
  }
}

// -- client adapters ------------------------------------------------------------

RemoteOracle::RemoteOracle(std::unique_ptr<LineChannel> channel)
    : channel_(std::move(channel)) {
  if (!channel_) throw ConfigError("RemoteOracle needs a channel");
}

OracleResponse RemoteOracle::evaluate(const VideoTensor& x) {
  std::lock_guard lock(mu_);
  const std::uint64_t id = next_id_++;
  channel_->send_line(encode_request(id, x));
  const auto line = channel_->recv_line();
  if (!line) throw OracleUnavailable("oracle closed the connection");
  const ResponseLine resp = decode_response(*line);
  if (!resp.error.empty()) throw OracleUnavailable("oracle error: " + resp.error);
  if (!resp.id || *resp.id != id) {
    throw OracleUnavailable("oracle answered out of order");
  }
  return *resp.result;
}

std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) throw OracleUnavailable("pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw OracleUnavailable("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw OracleUnavailable("fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  ::signal(SIGPIPE, SIG_IGN);
  return std::make_unique<ProcessChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host,
                                                 std::uint16_t port) {
  addrinfo* res = resolve(host, port, false);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string msg = std::strerror(errno);
    if (fd >= 0) ::close(fd);
    ::freeaddrinfo(res);
    throw OracleUnavailable("cannot connect to " + host + ":" +
                            std::to_string(port) + ": " + msg);
  }
  ::freeaddrinfo(res);
  return std::make_unique<SocketChannel>(fd);
}

namespace {

class OwningToyOracle final : public Oracle {
 public:
  explicit OwningToyOracle(std::shared_ptr<const ToyClassifier> m) : inner_(std::move(m)) {}
  OracleResponse evaluate(const VideoTensor& x) override { return inner_.evaluate(x); }

 private:
  ToyOracle inner_;
};

}  // namespace

std::unique_ptr<Oracle> open_oracle(const std::string& uri) {
  const auto colon = uri.find(':');
  if (colon == std::string::npos) {
    throw ConfigError("oracle must be builtin:PATH, exec:CMD or tcp:HOST:PORT");
  }
  const std::string scheme = uri.substr(0, colon);
  const std::string rest = uri.substr(colon + 1);
  if (scheme == "builtin") {
    auto bundle = load_vbm(rest);
    return std::make_unique<OwningToyOracle>(
        std::make_shared<const ToyClassifier>(std::move(bundle.classifier)));
  }
  if (scheme == "exec") {
    if (rest.empty()) throw ConfigError("exec: oracle needs a command");
    return std::make_unique<RemoteOracle>(spawn_process_channel(rest));
  }
  if (scheme == "tcp") {
    const auto pc = rest.rfind(':');
    if (pc == std::string::npos) throw ConfigError("tcp oracle needs HOST:PORT");
    int port = 0;
    try {
      port = std::stoi(rest.substr(pc + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad tcp port in " + uri);
    }
    if (port <= 0 || port > 65535) throw ConfigError("bad tcp port in " + uri);
    return std::make_unique<RemoteOracle>(
        connect_tcp_channel(rest.substr(0, pc), static_cast<std::uint16_t>(port)));
  }
  throw ConfigError("unknown oracle scheme: " + scheme);
}

}  // namespace vbad
