#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/wire.hpp"

namespace ringtrain {

using Bytes = std::vector<std::uint8_t>;

// Point-to-point contract shared by the TCP and simulated transports.
// Messages between a pair of ranks are delivered in send order; recv
// fails with TagMismatchError if the next message from `peer` carries a
// different tag.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual int rank() const noexcept = 0;
  virtual int size() const noexcept = 0;

  virtual void send(int peer, std::uint32_t tag,
                    std::span<const std::uint8_t> payload) = 0;
  virtual Bytes recv(int peer, std::uint32_t tag) = 0;

  // Blocks until every send issued so far has left this rank.
  virtual void flush() {}

  // Seconds on this rank's clock: wall time for real transports, virtual
  // time for the simulator.
  virtual double clock() const = 0;
  // Accounts for local work in virtual time. No-op on real transports,
  // where the work itself takes the time.
  virtual void elapse(double /*seconds*/) {}
  virtual bool is_simulated() const noexcept { return false; }
};

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Group of one: collectives return immediately and never touch it.
class SoloTransport final : public Transport {
 public:
  int rank() const noexcept override { return 0; }
  int size() const noexcept override { return 1; }
  void send(int peer, std::uint32_t, std::span<const std::uint8_t>) override {
    throw CommError("no peers in a group of one", peer);
  }
  Bytes recv(int peer, std::uint32_t) override {
    throw CommError("no peers in a group of one", peer);
  }
  double clock() const override { return clock_.seconds(); }

 private:
  WallClock clock_;
};

// A rank's view of its collective group. Each collective call gets a fresh
// invocation number that is folded into message tags, so a rank that falls
// out of step is detected instead of silently mixing payloads.
class CommGroup {
 public:
  explicit CommGroup(Transport& t) : transport_(&t) {}

  int rank() const noexcept { return transport_->rank(); }
  int size() const noexcept { return transport_->size(); }
  int next() const noexcept { return (rank() + 1) % size(); }
  int prev() const noexcept { return (rank() + size() - 1) % size(); }
  Transport& transport() noexcept { return *transport_; }

  std::uint64_t invocations() const noexcept { return invocations_; }
  std::uint32_t begin_invocation() noexcept {
    return static_cast<std::uint32_t>(invocations_++ & 0xFFFF);
  }

  static std::uint32_t tag(std::uint32_t invocation, std::uint32_t step) {
    return (invocation << 16) | (step & 0xFFFF);
  }

  void send_floats(int peer, std::uint32_t tag, std::span<const float> v) {
    const auto bytes = wire::floats_to_bytes(v);
    transport_->send(peer, tag, bytes);
  }

  // Receives exactly out.size() floats; any other length is a protocol
  // error naming the sender.
  void recv_floats(int peer, std::uint32_t tag, std::span<float> out) {
    const auto bytes = transport_->recv(peer, tag);
    if (bytes.size() != out.size() * 4)
      throw ProtocolError("rank " + std::to_string(peer) + " sent " +
                              std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(out.size() * 4),
                          peer);
    wire::bytes_to_floats(bytes, out);
  }

 private:
  Transport* transport_;
  std::uint64_t invocations_ = 0;
};

}  // namespace ringtrain
