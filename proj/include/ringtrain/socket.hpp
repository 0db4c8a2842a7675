#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <thread>
#include <utility>

#include "ringtrain/errors.hpp"

namespace ringtrain::net {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  // Wakes any thread blocked in read on this socket.
  void shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline std::string errno_text() { return std::strerror(errno); }

inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

inline sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw ConfigError("cannot resolve host '" + host + "'");
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(port);
  return addr;
}

// Listening socket; port 0 picks an ephemeral port.
inline std::pair<Socket, std::uint16_t> listen_tcp(const std::string& host,
                                                   std::uint16_t port, int backlog = 256) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw CommError("socket: " + errno_text());
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, port);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw CommError("bind " + host + ":" + std::to_string(port) + ": " + errno_text());
  if (::listen(s.fd(), backlog) != 0) throw CommError("listen: " + errno_text());
  socklen_t len = sizeof addr;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return {std::move(s), ntohs(addr.sin_port)};
}

inline bool wait_readable(int fd, double timeout_s) {
  pollfd p{fd, POLLIN, 0};
  const int ms = timeout_s < 0 ? -1 : static_cast<int>(timeout_s * 1000.0);
  int rc;
  do {
    rc = ::poll(&p, 1, ms);
  } while (rc < 0 && errno == EINTR);
  return rc > 0;
}

inline Socket accept_tcp(int listen_fd, double timeout_s, std::string* peer_host = nullptr) {
  if (!wait_readable(listen_fd, timeout_s)) throw TimeoutError("accept timed out");
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  Socket s(::accept(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len));
  if (!s.valid()) throw CommError("accept: " + errno_text());
  set_nodelay(s.fd());
  if (peer_host) {
    char buf[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
    *peer_host = buf;
  }
  return s;
}

// Retries until the peer is listening or the timeout runs out.
inline Socket connect_tcp(const std::string& host, std::uint16_t port, double timeout_s) {
  const sockaddr_in addr = resolve(host, port);
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_s);
  for (;;) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw CommError("socket: " + errno_text());
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      set_nodelay(s.fd());
      return s;
    }
    if (std::chrono::steady_clock::now() >= deadline)
      throw TimeoutError("cannot connect to " + host + ":" + std::to_string(port) + ": " +
                         errno_text());
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

// Returns false if the peer closed the connection.
inline bool write_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

// Returns the number of bytes read; fewer than requested means EOF.
inline std::size_t read_all(int fd, std::span<std::uint8_t> out) {
  std::size_t off = 0;
  while (off < out.size()) {
    const ssize_t n = ::recv(fd, out.data() + off, out.size() - off, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (n == 0) break;
    off += static_cast<std::size_t>(n);
  }
  return off;
}

// Splits "host:port".
inline std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
    throw ConfigError("expected host:port, got '" + s + "'");
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("bad port in '" + s + "'");
  }
  if (port > 65535) throw ConfigError("bad port in '" + s + "'");
  return {s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace ringtrain::net
