#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "peec/bytes.hpp"
#include "peec/corpus.hpp"
#include "peec/errors.hpp"
#include "peec/privacy_model.hpp"
#include "peec/svm.hpp"
#include "peec/wire.hpp"

namespace peec::net {

// ---------------------------------------------------------------------------
// Addresses and sockets
// ---------------------------------------------------------------------------

struct Address {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline Address parse_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= text.size()) {
    throw ValueError("address '" + text + "' is not host:port");
  }
  Address addr;
  addr.host = text.substr(0, colon);
  const std::string port_str = text.substr(colon + 1);
  int port = 0;
  for (char c : port_str) {
    if (c < '0' || c > '9') {
      throw ValueError("address '" + text + "' has a non-numeric port");
    }
    port = port * 10 + (c - '0');
    if (port > 65535) throw ValueError("port out of range in '" + text + "'");
  }
  addr.port = static_cast<std::uint16_t>(port);
  return addr;
}

/// RAII TCP socket with exact-length framed I/O.
class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  /// Interrupt any blocked read/write from another thread.
  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void send_all(std::span<const std::uint8_t> data) const {
    size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off,
                               MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw NetworkError(std::string("send failed: ") + std::strerror(errno));
      }
      off += static_cast<size_t>(n);
    }
  }

  /// Fill `data` completely. Returns false on a clean EOF before the first
  /// byte; throws on errors or EOF mid-buffer.
  bool recv_exact(std::span<std::uint8_t> data) const {
    size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::recv(fd_, data.data() + off, data.size() - off, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw NetworkError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        if (off == 0) return false;
        throw NetworkError("connection closed after " + std::to_string(off) +
                           " of " + std::to_string(data.size()) +
                           " expected bytes");
      }
      off += static_cast<size_t>(n);
    }
    return true;
  }

private:
  int fd_ = -1;
};

inline Socket connect_to(const Address& addr) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(addr.port);
  const int rc = ::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) {
    throw NetworkError("cannot resolve '" + addr.str() +
                       "': " + gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) {
      last_error = std::strerror(errno);
      continue;
    }
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return Socket(fd);
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw NetworkError("cannot connect to " + addr.str() + ": " + last_error);
}

inline void write_frame(const Socket& sock, const wire::WireFrame& frame) {
  sock.send_all(wire::encode_frame(frame));
}

/// Read one frame. Returns nullopt on a clean EOF at a frame boundary.
/// Header validation failures throw the same distinct errors as
/// wire::decode_frame; transport failures throw NetworkError.
inline std::optional<wire::WireFrame> read_frame(const Socket& sock) {
  std::uint8_t header[wire::kHeaderSize];
  if (!sock.recv_exact(header)) return std::nullopt;
  for (size_t i = 0; i < 4; ++i) {
    if (header[i] != wire::kMagic[i]) {
      throw BadMagicError("frame does not start with PEEC magic");
    }
  }
  if (header[4] != wire::kProtocolVersion) {
    throw VersionError("frame version " + std::to_string(header[4]) +
                       ", expected " +
                       std::to_string(wire::kProtocolVersion));
  }
  if (header[5] < 1 || header[5] > 6) {
    throw UnknownTypeError("unknown frame type " + std::to_string(header[5]));
  }
  std::uint32_t payload_len = 0;
  for (int i = 0; i < 4; ++i) {
    payload_len |= static_cast<std::uint32_t>(header[6 + i]) << (8 * i);
  }
  if (payload_len > (1u << 24)) {
    throw ParseError("frame payload length " + std::to_string(payload_len) +
                     " exceeds the 16 MiB limit");
  }
  wire::WireFrame frame;
  frame.type = static_cast<wire::MsgType>(header[5]);
  frame.payload.resize(payload_len);
  if (payload_len > 0 && !sock.recv_exact(frame.payload)) {
    throw NetworkError("connection closed before frame payload");
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Server scaffolding
// ---------------------------------------------------------------------------

/// Accept loop + per-connection handler threads + clean stop. Handlers run
/// against immutable shared state owned by the derived service.
class TcpServer {
public:
  explicit TcpServer(const std::string& listen_addr) {
    const Address want = parse_address(listen_addr);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
      throw NetworkError(std::string("socket failed: ") +
                         std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(want.port);
    if (want.host == "0.0.0.0" || want.host == "*") {
      sa.sin_addr.s_addr = INADDR_ANY;
    } else if (::inet_pton(AF_INET, want.host.c_str(), &sa.sin_addr) != 1) {
      hostent* he = ::gethostbyname(want.host.c_str());
      if (he == nullptr || he->h_addrtype != AF_INET) {
        ::close(listen_fd_);
        throw NetworkError("cannot resolve listen host '" + want.host + "'");
      }
      std::memcpy(&sa.sin_addr, he->h_addr_list[0], sizeof(sa.sin_addr));
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0 ||
        ::listen(listen_fd_, 64) != 0) {
      const std::string why = std::strerror(errno);
      ::close(listen_fd_);
      throw NetworkError("cannot listen on " + listen_addr + ": " + why);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    address_ = {want.host == "*" ? "127.0.0.1" : want.host,
                ntohs(bound.sin_port)};
  }

  virtual ~TcpServer() { stop(); }

  /// host:port actually bound (resolves port 0 to the kernel's choice).
  std::string address() const { return address_.str(); }
  std::uint16_t port() const { return address_.port; }

  void start() {
    if (running_.exchange(true)) return;
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    {
      std::lock_guard lock(mu_);
      for (auto& conn : connections_) conn->sock.shutdown();
    }
    for (;;) {
      std::shared_ptr<Connection> conn;
      {
        std::lock_guard lock(mu_);
        if (connections_.empty()) break;
        conn = connections_.back();
        connections_.pop_back();
      }
      if (conn->worker.joinable()) conn->worker.join();
    }
    ::close(listen_fd_);
    listen_fd_ = -1;
  }

protected:
  /// Serve one client until EOF/error; runs on a dedicated thread.
  virtual void handle_connection(Socket& client) = 0;

private:
  struct Connection {
    Socket sock;
    std::thread worker;
  };

  void accept_loop() {
    while (running_.load()) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        break; // listener shut down
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      auto conn = std::make_shared<Connection>();
      conn->sock = Socket(fd);
      {
        std::lock_guard lock(mu_);
        connections_.push_back(conn);
      }
      conn->worker = std::thread([this, conn] {
        try {
          handle_connection(conn->sock);
        } catch (const std::exception&) {
          // connection-scoped failure; the socket closes with the handler
        }
        conn->sock.shutdown();
      });
    }
  }

  int listen_fd_ = -1;
  Address address_;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::shared_ptr<Connection>> connections_;
};

// ---------------------------------------------------------------------------
// Cloud service: LATENT -> PREDICTION
// ---------------------------------------------------------------------------

class CloudService : public TcpServer {
public:
  CloudService(const std::string& listen_addr, SvmModel model)
      : TcpServer(listen_addr), model_(std::move(model)) {}

protected:
  void handle_connection(Socket& client) override {
    for (;;) {
      std::optional<wire::WireFrame> frame;
      try {
        frame = read_frame(client);
      } catch (const NetworkError&) {
        return; // peer vanished; nothing to answer
      } catch (const Error& e) {
        try {
          write_frame(client, wire::make_error_frame(e.what()));
        } catch (const NetworkError&) {
        }
        return; // malformed stream: one ERROR, then close
      }
      if (!frame) return;
      try {
        switch (frame->type) {
        case wire::MsgType::Ping:
          write_frame(client, wire::make_pong_frame());
          break;
        case wire::MsgType::Latent: {
          const auto payload = wire::decode_vector_payload(frame->payload);
          if (payload.values.size() != model_.dim()) {
            write_frame(client,
                        wire::make_error_frame(
                            "latent dim " +
                            std::to_string(payload.values.size()) +
                            " does not match classifier dim " +
                            std::to_string(model_.dim())));
            break;
          }
          Matrix z(1, model_.dim());
          for (size_t j = 0; j < model_.dim(); ++j) {
            z(0, j) = static_cast<double>(payload.values[j]);
          }
          const double score = decision_values(model_, z)[0];
          const std::uint8_t valence = score < 0.0 ? 0 : 1;
          write_frame(client,
                      wire::make_prediction_frame(payload.id, valence,
                                                  static_cast<float>(score)));
          break;
        }
        default:
          write_frame(client,
                      wire::make_error_frame(
                          std::string("unexpected frame type ") +
                          wire::to_string(frame->type) +
                          " on the cloud leg"));
          return;
        }
      } catch (const NetworkError&) {
        return;
      } catch (const Error& e) {
        try {
          write_frame(client, wire::make_error_frame(e.what()));
        } catch (const NetworkError&) {
        }
        return;
      }
    }
  }

private:
  const SvmModel model_;
};

// ---------------------------------------------------------------------------
// Edge service: FEATURES -> (scale, encode) -> LATENT upstream -> relay
// ---------------------------------------------------------------------------

struct EdgeOptions {
  /// Test-only negative control: forward FEATURES upstream verbatim instead
  /// of encoding, so the leakage audit has something to catch.
  bool passthrough = false;
};

class EdgeService : public TcpServer {
public:
  EdgeService(const std::string& listen_addr, PrivacyEncoderModel model,
              std::string cloud_addr, EdgeOptions options = {})
      : TcpServer(listen_addr), model_(std::move(model)),
        cloud_addr_(parse_address(cloud_addr)), options_(options) {
    if (!model_.scaler().valid()) {
      throw ValueError("edge service requires a model with a fitted scaler");
    }
  }

protected:
  void handle_connection(Socket& client) override {
    Socket upstream; // lazy; one per client connection, preserving order
    for (;;) {
      std::optional<wire::WireFrame> frame;
      try {
        frame = read_frame(client);
      } catch (const NetworkError&) {
        return;
      } catch (const Error& e) {
        try {
          write_frame(client, wire::make_error_frame(e.what()));
        } catch (const NetworkError&) {
        }
        return;
      }
      if (!frame) return;
      try {
        switch (frame->type) {
        case wire::MsgType::Ping:
          write_frame(client, wire::make_pong_frame());
          break;
        case wire::MsgType::Features:
          serve_features(client, upstream, *frame);
          break;
        default:
          write_frame(client,
                      wire::make_error_frame(
                          std::string("unexpected frame type ") +
                          wire::to_string(frame->type) + " on the edge leg"));
          return;
        }
      } catch (const NetworkError&) {
        return;
      } catch (const Error& e) {
        try {
          write_frame(client, wire::make_error_frame(e.what()));
        } catch (const NetworkError&) {
        }
        return;
      }
    }
  }

private:
  void serve_features(Socket& client, Socket& upstream,
                      const wire::WireFrame& frame) {
    const auto payload = wire::decode_vector_payload(frame.payload);
    if (payload.values.size() != model_.input_dim()) {
      write_frame(client, wire::make_error_frame(
                              "feature dim " +
                              std::to_string(payload.values.size()) +
                              " does not match model input dim " +
                              std::to_string(model_.input_dim())));
      return; // nothing goes upstream
    }

    wire::WireFrame up;
    if (options_.passthrough) {
      up = frame;
    } else {
      Matrix x(1, model_.input_dim());
      for (size_t j = 0; j < x.cols(); ++j) {
        x(0, j) = static_cast<double>(payload.values[j]);
      }
      const Matrix z = model_.encode_raw(x);
      up = wire::make_latent_frame(payload.id, z.row(0));
    }

    std::optional<wire::WireFrame> reply;
    try {
      if (!upstream.valid()) upstream = connect_to(cloud_addr_);
      write_frame(upstream, up);
      reply = read_frame(upstream);
    } catch (const Error&) {
      reply = std::nullopt;
    }
    if (!reply) {
      upstream.close(); // reconnect lazily on the next request
      write_frame(client,
                  wire::make_error_frame(
                      "cloud at " + cloud_addr_.str() +
                      " unreachable; retry after 1s (utterance '" +
                      payload.id + "' not classified)"));
      return;
    }
    write_frame(client, *reply); // PREDICTION, or the cloud's own ERROR
  }

  const PrivacyEncoderModel model_;
  const Address cloud_addr_;
  const EdgeOptions options_;
};

// ---------------------------------------------------------------------------
// Eavesdropper tap: frame-level proxy recording the upstream direction
// ---------------------------------------------------------------------------

class TapService : public TcpServer {
public:
  TapService(const std::string& listen_addr, std::string upstream_addr)
      : TcpServer(listen_addr), upstream_addr_(parse_address(upstream_addr)) {}

  /// Everything captured so far, as concatenated raw frames.
  std::vector<std::uint8_t> capture() const {
    std::lock_guard lock(capture_mu_);
    return capture_;
  }

  void write_capture(const std::string& path) const {
    std::lock_guard lock(capture_mu_);
    bytes::write_file(path, capture_);
  }

protected:
  void handle_connection(Socket& client) override {
    Socket upstream = connect_to(upstream_addr_);
    for (;;) {
      std::optional<wire::WireFrame> request;
      try {
        request = read_frame(client);
      } catch (const Error&) {
        return;
      }
      if (!request) return;
      {
        const auto raw = wire::encode_frame(*request);
        std::lock_guard lock(capture_mu_);
        capture_.insert(capture_.end(), raw.begin(), raw.end());
      }
      try {
        write_frame(upstream, *request);
        const auto reply = read_frame(upstream);
        if (!reply) return;
        write_frame(client, *reply);
      } catch (const Error&) {
        return;
      }
    }
  }

private:
  const Address upstream_addr_;
  mutable std::mutex capture_mu_;
  std::vector<std::uint8_t> capture_;
};

// ---------------------------------------------------------------------------
// Sensing client
// ---------------------------------------------------------------------------

struct TranscriptRow {
  std::string id;
  int valence = -1;    // 0/1, or -1 when errored
  double score = 0.0;  // decision value as received (f32 precision)
  double rtt_ms = 0.0;
  std::string error;   // empty on success
};

/// Stream every corpus record to the edge as FEATURES and collect one
/// transcript row per utterance. Transport failures are recorded on the
/// affected row and streaming continues on a fresh connection.
/// `rate_limit` is frames per second; 0 streams unpaced.
inline std::vector<TranscriptRow> run_sensor(const Corpus& corpus,
                                             const std::string& edge_addr,
                                             double rate_limit = 0.0) {
  if (rate_limit < 0.0) throw ValueError("run_sensor: negative rate limit");
  const Address addr = parse_address(edge_addr);
  std::vector<TranscriptRow> transcript;
  transcript.reserve(corpus.size());
  Socket sock;

  for (size_t r = 0; r < corpus.size(); ++r) {
    const auto& rec = corpus[r];
    TranscriptRow row;
    row.id = rec.id;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (!sock.valid()) sock = connect_to(addr);
      write_frame(sock, wire::make_features_frame(rec.id, rec.features));
      const auto reply = read_frame(sock);
      if (!reply) throw NetworkError("edge closed the connection");
      if (reply->type == wire::MsgType::Prediction) {
        const auto p = wire::decode_prediction_payload(reply->payload);
        row.valence = p.valence;
        row.score = static_cast<double>(p.score);
      } else if (reply->type == wire::MsgType::Error) {
        row.error = wire::decode_error_payload(reply->payload);
      } else {
        row.error = std::string("unexpected reply type ") +
                    wire::to_string(reply->type);
      }
    } catch (const Error& e) {
      row.error = e.what();
      sock.close();
    }
    row.rtt_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    transcript.push_back(std::move(row));
    if (rate_limit > 0.0 && r + 1 < corpus.size()) {
      std::this_thread::sleep_for(
          std::chrono::duration<double>(1.0 / rate_limit));
    }
  }
  return transcript;
}

inline std::string transcript_csv(std::span<const TranscriptRow> rows) {
  std::string out = "id,valence,score,rtt_ms,error\n";
  for (const auto& r : rows) {
    out += r.id;
    out += ',';
    out += r.valence < 0 ? "" : std::to_string(r.valence);
    out += ',';
    out += peec::detail::format_double(r.score);
    out += ',';
    out += peec::detail::format_double(r.rtt_ms);
    out += ',';
    std::string err = r.error;
    for (char& c : err) {
      if (c == ',' || c == '\n' || c == '\r') c = ' ';
    }
    out += err;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leakage audit
// ---------------------------------------------------------------------------

struct AuditResult {
  bool pass = false;
  size_t n_frames = 0;
  size_t n_latent = 0;
  size_t n_features = 0;
  size_t n_raw_dim = 0; // payloads of the protected raw dimension D
  std::vector<std::string> violations;
  Matrix captured_latents; // one row per captured LATENT frame

  std::string verdict() const { return pass ? "PASS" : "FAIL"; }
};

/// Decide whether a captured edge->cloud byte stream leaks raw features:
/// no FEATURES frames, no vector payload of dimension D, and every data
/// frame is a LATENT of dimension L. Control frames (PING/PONG/ERROR) are
/// allowed.
inline AuditResult audit_leakage_bytes(std::span<const std::uint8_t> capture,
                                       size_t raw_dim, size_t latent_dim) {
  const auto frames = wire::decode_all_frames(capture);
  AuditResult result;
  result.n_frames = frames.size();
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    switch (f.type) {
    case wire::MsgType::Features: {
      ++result.n_features;
      const auto p = wire::decode_vector_payload(f.payload);
      if (p.values.size() == raw_dim) ++result.n_raw_dim;
      result.violations.push_back(
          "frame " + std::to_string(i) + ": FEATURES (id '" + p.id +
          "', dim " + std::to_string(p.values.size()) +
          ") crossed the edge boundary");
      break;
    }
    case wire::MsgType::Latent: {
      ++result.n_latent;
      const auto p = wire::decode_vector_payload(f.payload);
      if (p.values.size() == raw_dim) {
        ++result.n_raw_dim;
        result.violations.push_back(
            "frame " + std::to_string(i) + ": LATENT of raw dimension " +
            std::to_string(raw_dim));
      } else if (p.values.size() != latent_dim) {
        result.violations.push_back(
            "frame " + std::to_string(i) + ": LATENT dim " +
            std::to_string(p.values.size()) + ", expected " +
            std::to_string(latent_dim));
      }
      break;
    }
    case wire::MsgType::Prediction:
      result.violations.push_back("frame " + std::to_string(i) +
                                  ": PREDICTION on the upstream leg");
      break;
    case wire::MsgType::Ping:
    case wire::MsgType::Pong:
    case wire::MsgType::Error:
      break;
    }
  }
  result.pass = result.violations.empty();
  std::vector<wire::WireFrame> latent_frames;
  for (const auto& f : frames) {
    if (f.type == wire::MsgType::Latent) latent_frames.push_back(f);
  }
  try {
    result.captured_latents = wire::latent_matrix(latent_frames);
  } catch (const ShapeError&) {
    // mixed dims already recorded as violations; leave the matrix empty
  }
  return result;
}

inline AuditResult audit_leakage(const std::string& capture_path,
                                 size_t raw_dim, size_t latent_dim) {
  return audit_leakage_bytes(bytes::read_file(capture_path), raw_dim,
                             latent_dim);
}

} // namespace peec::net
