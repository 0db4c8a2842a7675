#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/net_profile.hpp"
#include "ringtrain/transport.hpp"

namespace ringtrain {

class SimTransport;

// In-memory network shared by K simulated ranks. Each rank keeps its own
// virtual clock. A message leaves when both the sender is ready and the
// (src, dst) link is idle, and arrives after sim_transfer_time; the
// receiver's clock jumps to the arrival time. Link state is only written by
// the sending rank and every rank draws from its own RNG stream, so virtual
// time does not depend on thread interleaving.
class SimNetwork {
 public:
  SimNetwork(int k, NetProfile profile, double recv_timeout_s = 30.0)
      : k_(k),
        profile_(profile),
        recv_timeout_s_(recv_timeout_s),
        queues_(static_cast<std::size_t>(k * k)),
        link_free_(static_cast<std::size_t>(k * k), 0.0) {
    if (k < 1) throw ConfigError("simulated group needs at least one rank");
    profile_.validate();
  }

  int size() const noexcept { return k_; }
  const NetProfile& profile() const noexcept { return profile_; }
  double recv_timeout() const noexcept { return recv_timeout_s_; }

  std::unique_ptr<SimTransport> endpoint(int rank);

  // Marks the run as failed; every blocked or future recv throws.
  void fail(int rank, const std::string& why) {
    {
      std::lock_guard lk(mu_);
      if (failed_rank_ < 0) {
        failed_rank_ = rank;
        failure_ = why;
      }
    }
    cv_.notify_all();
  }

 private:
  friend class SimTransport;

  struct Pending {
    std::uint32_t tag;
    Bytes payload;
    double arrival;
  };

  std::size_t idx(int src, int dst) const {
    return static_cast<std::size_t>(src * k_ + dst);
  }

  [[noreturn]] void throw_failure() const {
    throw CommError("rank " + std::to_string(failed_rank_) + " failed: " + failure_,
                    failed_rank_);
  }

  int k_;
  NetProfile profile_;
  double recv_timeout_s_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::deque<Pending>> queues_;
  std::vector<double> link_free_;
  int failed_rank_ = -1;
  std::string failure_;
};

class SimTransport final : public Transport {
 public:
  SimTransport(SimNetwork& net, int rank)
      : net_(&net), rank_(rank), link_(net.profile(), static_cast<std::uint64_t>(rank)) {}

  int rank() const noexcept override { return rank_; }
  int size() const noexcept override { return net_->size(); }
  bool is_simulated() const noexcept override { return true; }

  void send(int peer, std::uint32_t tag,
            std::span<const std::uint8_t> payload) override {
    check_peer(peer);
    if (link_.disconnect()) {
      net_->fail(rank_, "disconnected while sending to rank " + std::to_string(peer));
      throw DisconnectError("rank " + std::to_string(rank_) + " disconnected", rank_);
    }
    const double t = link_.transfer_time(static_cast<double>(payload.size()), size());
    {
      std::lock_guard lk(net_->mu_);
      if (net_->failed_rank_ >= 0) net_->throw_failure();
      double& free_at = net_->link_free_[net_->idx(rank_, peer)];
      const double start = std::max(now_, free_at);
      free_at = start + t;
      now_ = start;
      net_->queues_[net_->idx(rank_, peer)].push_back(
          {tag, Bytes(payload.begin(), payload.end()), free_at});
    }
    net_->cv_.notify_all();
    ++sends_;
    bytes_sent_ += payload.size();
  }

  Bytes recv(int peer, std::uint32_t tag) override {
    check_peer(peer);
    std::unique_lock lk(net_->mu_);
    auto& q = net_->queues_[net_->idx(peer, rank_)];
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(net_->recv_timeout());
    while (q.empty()) {
      if (net_->failed_rank_ >= 0) net_->throw_failure();
      if (net_->cv_.wait_until(lk, deadline) == std::cv_status::timeout && q.empty())
        throw TimeoutError("rank " + std::to_string(rank_) + " timed out waiting for rank " +
                               std::to_string(peer),
                           peer);
    }
    auto& m = q.front();
    if (m.tag != tag)
      throw TagMismatchError("rank " + std::to_string(rank_) + " expected tag " +
                                 std::to_string(tag) + " from rank " +
                                 std::to_string(peer) + ", got " + std::to_string(m.tag),
                             peer);
    Bytes out = std::move(m.payload);
    now_ = std::max(now_, m.arrival);
    q.pop_front();
    return out;
  }

  void flush() override {
    std::lock_guard lk(net_->mu_);
    for (int d = 0; d < size(); ++d)
      now_ = std::max(now_, net_->link_free_[net_->idx(rank_, d)]);
  }

  double clock() const override { return now_; }
  void elapse(double seconds) override { now_ += seconds; }

  std::size_t sends() const noexcept { return sends_; }
  std::size_t bytes_sent() const noexcept { return bytes_sent_; }

 private:
  void check_peer(int peer) const {
    if (peer < 0 || peer >= size() || peer == rank_)
      throw CommError("invalid peer " + std::to_string(peer), peer);
  }

  SimNetwork* net_;
  int rank_;
  LinkSampler link_;
  double now_ = 0.0;
  std::size_t sends_ = 0;
  std::size_t bytes_sent_ = 0;
};

inline std::unique_ptr<SimTransport> SimNetwork::endpoint(int rank) {
  if (rank < 0 || rank >= k_) throw ConfigError("rank out of range");
  return std::make_unique<SimTransport>(*this, rank);
}

// Runs fn(rank, transport) for every rank on its own thread and rethrows the
// first failure (a rank's own exception wins over the knock-on errors it
// causes in its peers).
template <typename Fn>
void run_ranks(std::vector<std::unique_ptr<Transport>>& transports, Fn&& fn,
               const std::function<void(int, const std::string&)>& on_fail = {}) {
  const auto k = transports.size();
  std::vector<std::exception_ptr> errors(k);
  std::vector<int> order;
  std::mutex order_mu;
  std::vector<std::thread> threads;
  threads.reserve(k);
  for (std::size_t r = 0; r < k; ++r)
    threads.emplace_back([&, r] {
      try {
        fn(static_cast<int>(r), *transports[r]);
      } catch (const std::exception& e) {
        errors[r] = std::current_exception();
        {
          std::lock_guard lk(order_mu);
          order.push_back(static_cast<int>(r));
        }
        if (on_fail) on_fail(static_cast<int>(r), e.what());
      }
    });
  for (auto& t : threads) t.join();
  if (!order.empty()) std::rethrow_exception(errors[static_cast<std::size_t>(order.front())]);
}

template <typename Fn>
void run_simulated(int k, const NetProfile& profile, Fn&& fn,
                   double recv_timeout_s = 30.0) {
  SimNetwork net(k, profile, recv_timeout_s);
  std::vector<std::unique_ptr<Transport>> ts;
  for (int r = 0; r < k; ++r) ts.push_back(net.endpoint(r));
  run_ranks(ts, std::forward<Fn>(fn),
            [&](int r, const std::string& why) { net.fail(r, why); });
}

// Decorator that records every message a rank sends.
class CountingTransport final : public Transport {
 public:
  struct Record {
    int dst;
    std::uint32_t tag;
    std::size_t bytes;
  };

  explicit CountingTransport(Transport& inner) : inner_(&inner) {}

  int rank() const noexcept override { return inner_->rank(); }
  int size() const noexcept override { return inner_->size(); }
  void send(int peer, std::uint32_t tag, std::span<const std::uint8_t> p) override {
    sent_.push_back({peer, tag, p.size()});
    inner_->send(peer, tag, p);
  }
  Bytes recv(int peer, std::uint32_t tag) override { return inner_->recv(peer, tag); }
  void flush() override { inner_->flush(); }
  double clock() const override { return inner_->clock(); }
  void elapse(double s) override { inner_->elapse(s); }
  bool is_simulated() const noexcept override { return inner_->is_simulated(); }

  const std::vector<Record>& sent() const noexcept { return sent_; }
  std::size_t bytes_sent() const {
    std::size_t b = 0;
    for (const auto& r : sent_) b += r.bytes;
    return b;
  }

 private:
  Transport* inner_;
  std::vector<Record> sent_;
};

}  // namespace ringtrain
