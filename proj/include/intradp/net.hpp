#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>

#include "wire.hpp"

namespace intradp::net {

using Clock = std::chrono::steady_clock;

/// Owning TCP socket handle.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  // Unblocks any thread waiting on this socket without releasing the fd.
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  static Endpoint parse(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::InvalidArgument, "address must be host:port, got '" + s + "'");
    Endpoint e;
    e.host = s.substr(0, colon);
    const int port = std::stoi(s.substr(colon + 1));
    if (port < 0 || port > 65535) throw Error(Errc::InvalidArgument, "port out of range");
    e.port = static_cast<std::uint16_t>(port);
    return e;
  }
  std::string str() const { return host + ":" + std::to_string(port); }
};

namespace detail {

inline sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw Error(Errc::InvalidArgument, "cannot resolve host '" + ep.host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return addr;
}

inline std::string errno_text() { return std::strerror(errno); }

}  // namespace detail

inline Socket listen_on(const Endpoint& ep) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw Error(Errc::ConnectionLost, "socket: " + detail::errno_text());
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = detail::resolve(ep);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error(Errc::ConnectionLost, "bind " + ep.str() + ": " + detail::errno_text());
  }
  if (::listen(s.fd(), 4) != 0) throw Error(Errc::ConnectionLost, "listen: " + detail::errno_text());
  return s;
}

inline std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

inline void set_nodelay(const Socket& s) {
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

/// Waits up to `timeout` for a connection; empty when none arrived.
inline std::optional<Socket> accept_for(const Socket& listener, std::chrono::milliseconds timeout) {
  pollfd pfd{listener.fd(), POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (rc <= 0) return std::nullopt;
  Socket s(::accept(listener.fd(), nullptr, nullptr));
  if (!s.valid()) return std::nullopt;
  set_nodelay(s);
  return s;
}

inline Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  const auto deadline = Clock::now() + timeout;
  sockaddr_in addr = detail::resolve(ep);
  for (;;) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
      set_nodelay(s);
      return s;
    }
    if (Clock::now() >= deadline) {
      throw Error(Errc::ConnectionLost, "connect " + ep.str() + ": " + detail::errno_text());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

inline void send_all(const Socket& s, std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(s.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::ConnectionLost, "send: " + detail::errno_text());
    }
    off += static_cast<std::size_t>(n);
  }
}

/// Reads exactly `out.size()` bytes. Returns false on a clean EOF before the
/// first byte; EOF part way through is a protocol violation.
inline bool recv_exact(const Socket& s, std::span<std::uint8_t> out, Clock::time_point deadline) {
  std::size_t off = 0;
  while (off < out.size()) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) throw Error(Errc::Timeout, "receive timed out");
    pollfd pfd{s.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (rc < 0 && errno != EINTR) throw Error(Errc::ConnectionLost, "poll: " + detail::errno_text());
    if (rc <= 0) continue;
    const ssize_t n = ::recv(s.fd(), out.data() + off, out.size() - off, 0);
    if (n == 0) {
      if (off == 0) return false;
      throw Error(Errc::ProtocolViolation, "connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::ConnectionLost, "recv: " + detail::errno_text());
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

/// Reads one frame; empty optional on clean EOF at a frame boundary.
inline std::optional<wire::Frame> read_frame(const Socket& s, Clock::time_point deadline) {
  std::array<std::uint8_t, wire::kHeaderSize> h{};
  if (!recv_exact(s, h, deadline)) return std::nullopt;
  const wire::Header hd = wire::decode_header(h);
  wire::Frame f{hd.type, hd.plan_id, hd.node_id, hd.range_lo, hd.range_hi, std::vector<std::uint8_t>(hd.payload_len)};
  if (hd.payload_len > 0 && !recv_exact(s, f.payload, deadline)) {
    throw Error(Errc::ProtocolViolation, "connection closed before payload");
  }
  return f;
}

/// Paces outbound bytes to a fixed rate. Tokens start empty and never bank,
/// so `n` bytes always take at least n*8/rate seconds, back to back like a
/// serial link. An unset (infinite) rate sends without delay.
class TokenBucket {
 public:
  TokenBucket() = default;
  explicit TokenBucket(double rate_mbps) : rate_bps_(rate_mbps * 1e6) {
    if (rate_mbps < 0 || std::isnan(rate_mbps)) throw Error(Errc::InvalidArgument, "throttle rate must be >= 0");
  }

  bool unlimited() const { return std::isinf(rate_bps_); }
  double rate_mbps() const { return rate_bps_ / 1e6; }

  /// Books `bytes` on the link; returns when they may leave. Never for rate 0.
  Clock::time_point reserve(std::size_t bytes) {
    if (unlimited() || bytes == 0) return Clock::now();
    if (rate_bps_ <= 0.0) return Clock::time_point::max();
    const auto now = Clock::now();
    if (next_free_ < now) next_free_ = now;
    next_free_ += std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(8.0 * static_cast<double>(bytes) / rate_bps_));
    return next_free_;
  }

  /// Blocks until `bytes` may leave. Throws Timeout when that moment lies
  /// beyond `deadline`.
  void acquire(std::size_t bytes, Clock::time_point deadline) {
    if (unlimited() || bytes == 0) return;
    if (rate_bps_ <= 0.0) {
      std::this_thread::sleep_until(deadline);
      throw Error(Errc::Timeout, "link throttled to 0 Mbps");
    }
    const auto now = Clock::now();
    if (next_free_ < now) next_free_ = now;
    const auto cost = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(8.0 * static_cast<double>(bytes) / rate_bps_));
    next_free_ += cost;
    if (next_free_ > deadline) {
      std::this_thread::sleep_until(deadline);
      throw Error(Errc::Timeout, "throttled send would miss the deadline");
    }
    std::this_thread::sleep_until(next_free_);
  }

 private:
  double rate_bps_ = std::numeric_limits<double>::infinity();
  Clock::time_point next_free_{};
};

/// Sends `bytes` through the throttle in chunks; returns the wall time spent.
inline double throttled_send(const Socket& s, TokenBucket& tb, std::span<const std::uint8_t> bytes,
                             Clock::time_point deadline, std::size_t chunk = 16 * 1024) {
  const auto t0 = Clock::now();
  for (std::size_t off = 0; off < bytes.size(); off += chunk) {
    const std::size_t n = std::min(chunk, bytes.size() - off);
    tb.acquire(n, deadline);
    send_all(s, bytes.subspan(off, n));
  }
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace intradp::net
