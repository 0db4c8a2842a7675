#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/socket.hpp"
#include "ringtrain/transport.hpp"
#include "ringtrain/wire.hpp"

namespace ringtrain {

struct TcpOptions {
  double recv_timeout_s = 30.0;
  double connect_timeout_s = 30.0;
};

// Framed TCP over a full mesh. One reader thread per connection drains
// frames into a per-peer mailbox, so a send never waits on the peer's recv
// and the ring's send-then-recv steps cannot deadlock.
class TcpTransport final : public Transport {
 public:
  static constexpr std::uint32_t kHelloTag = 0xFFFF0001u;
  static constexpr std::uint32_t kTableTag = 0xFFFF0002u;

  // peers[i] is the connection to rank i; peers[rank] is unused.
  TcpTransport(int rank, int size, std::vector<net::Socket> peers, TcpOptions opts = {})
      : rank_(rank), size_(size), opts_(opts), peers_(std::move(peers)),
        boxes_(static_cast<std::size_t>(size)) {
    if (static_cast<int>(peers_.size()) != size) throw ConfigError("peer table size mismatch");
    for (auto& b : boxes_) b = std::make_unique<Mailbox>();
    for (int p = 0; p < size_; ++p)
      if (p != rank_) readers_.emplace_back([this, p] { read_loop(p); });
  }

  ~TcpTransport() override {
    for (auto& s : peers_) s.shutdown();
    for (auto& t : readers_) t.join();
  }

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  // Rank 0: accepts size-1 workers on `listener` and hands out the table.
  static std::unique_ptr<TcpTransport> coordinate(net::Socket listener, int size,
                                                  TcpOptions opts = {}) {
    if (size < 1) throw ConfigError("group size must be >= 1");
    std::vector<net::Socket> peers(static_cast<std::size_t>(size));
    std::vector<std::string> hosts(static_cast<std::size_t>(size));
    std::vector<std::uint32_t> ports(static_cast<std::size_t>(size), 0);
    for (int joined = 1; joined < size; ++joined) {
      std::string host;
      net::Socket s = net::accept_tcp(listener.fd(), opts.connect_timeout_s, &host);
      const auto [rank, port] = read_hello(s.fd(), size);
      if (rank == 0 || peers[static_cast<std::size_t>(rank)].valid())
        throw ProtocolError("duplicate or invalid rank " + std::to_string(rank) + " at rendezvous",
                            rank);
      peers[static_cast<std::size_t>(rank)] = std::move(s);
      hosts[static_cast<std::size_t>(rank)] = host;
      ports[static_cast<std::size_t>(rank)] = port;
    }
    std::ostringstream table;
    for (int r = 1; r < size; ++r) table << hosts[r] << ':' << ports[r] << '\n';
    const std::string t = table.str();
    for (int r = 1; r < size; ++r) {
      const auto frame = wire::encode_frame(
          kTableTag, {reinterpret_cast<const std::uint8_t*>(t.data()), t.size()});
      if (!net::write_all(peers[static_cast<std::size_t>(r)].fd(), frame))
        throw PeerClosedError("rank " + std::to_string(r) + " left during rendezvous", r);
    }
    return std::make_unique<TcpTransport>(0, size, std::move(peers), opts);
  }

  // Any rank > 0: registers with the coordinator, then connects to lower
  // ranks and accepts higher ones.
  static std::unique_ptr<TcpTransport> join(int rank, int size, const std::string& host,
                                            std::uint16_t port, TcpOptions opts = {}) {
    if (rank < 1 || rank >= size) throw ConfigError("worker rank out of range");
    auto [listener, my_port] = net::listen_tcp("0.0.0.0", 0);
    std::vector<net::Socket> peers(static_cast<std::size_t>(size));
    peers[0] = net::connect_tcp(host, port, opts.connect_timeout_s);
    write_hello(peers[0].fd(), rank, size, my_port);

    const auto table = read_frame_blocking(peers[0].fd(), opts.connect_timeout_s, 0);
    if (table.tag != kTableTag) throw ProtocolError("expected peer table from rank 0", 0);
    std::vector<std::pair<std::string, std::uint16_t>> eps;
    std::istringstream in(std::string(table.payload.begin(), table.payload.end()));
    for (std::string line; std::getline(in, line);) eps.push_back(net::parse_endpoint(line));
    if (static_cast<int>(eps.size()) != size - 1) throw ProtocolError("bad peer table", 0);

    for (int p = 1; p < rank; ++p) {
      auto& [h, pp] = eps[static_cast<std::size_t>(p - 1)];
      peers[static_cast<std::size_t>(p)] = net::connect_tcp(h, pp, opts.connect_timeout_s);
      write_hello(peers[static_cast<std::size_t>(p)].fd(), rank, size, 0);
    }
    for (int n = rank + 1; n < size; ++n) {
      net::Socket s = net::accept_tcp(listener.fd(), opts.connect_timeout_s);
      const auto [r, unused] = read_hello(s.fd(), size);
      (void)unused;
      if (r <= rank || peers[static_cast<std::size_t>(r)].valid())
        throw ProtocolError("unexpected connection from rank " + std::to_string(r), r);
      peers[static_cast<std::size_t>(r)] = std::move(s);
    }
    return std::make_unique<TcpTransport>(rank, size, std::move(peers), opts);
  }

  int rank() const noexcept override { return rank_; }
  int size() const noexcept override { return size_; }

  void send(int peer, std::uint32_t tag, std::span<const std::uint8_t> payload) override {
    check_peer(peer);
    if (payload.size() > wire::kMaxPayload) throw ProtocolError("payload too large", peer);
    const auto header = wire::encode_header(tag, static_cast<std::uint32_t>(payload.size()));
    auto& box = *boxes_[static_cast<std::size_t>(peer)];
    std::lock_guard lk(box.write_mu);
    const int fd = peers_[static_cast<std::size_t>(peer)].fd();
    if (!net::write_all(fd, header) || !net::write_all(fd, payload))
      throw PeerClosedError("rank " + std::to_string(peer) + " closed the connection", peer);
  }

  Bytes recv(int peer, std::uint32_t tag) override {
    check_peer(peer);
    auto& box = *boxes_[static_cast<std::size_t>(peer)];
    std::unique_lock lk(box.mu);
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(opts_.recv_timeout_s);
    while (box.frames.empty()) {
      if (box.state == State::protocol_error) throw ProtocolError(box.reason, peer);
      if (box.state == State::closed)
        throw PeerClosedError("rank " + std::to_string(peer) + " closed the connection", peer);
      if (box.cv.wait_until(lk, deadline) == std::cv_status::timeout && box.frames.empty())
        throw TimeoutError("timed out after " + std::to_string(opts_.recv_timeout_s) +
                               " s waiting for rank " + std::to_string(peer),
                           peer);
    }
    auto& f = box.frames.front();
    if (f.tag != tag)
      throw TagMismatchError("expected tag " + std::to_string(tag) + " from rank " +
                                 std::to_string(peer) + ", got " + std::to_string(f.tag),
                             peer);
    Bytes out = std::move(f.payload);
    box.frames.pop_front();
    return out;
  }

  double clock() const override { return clock_.seconds(); }

  bool alive(int peer) const {
    auto& box = *boxes_[static_cast<std::size_t>(peer)];
    std::lock_guard lk(box.mu);
    return box.state == State::open;
  }

 private:
  enum class State { open, closed, protocol_error };

  struct Mailbox {
    mutable std::mutex mu;
    std::condition_variable cv;
    std::deque<wire::Frame> frames;
    State state = State::open;
    std::string reason;
    std::mutex write_mu;
  };

  void check_peer(int peer) const {
    if (peer < 0 || peer >= size_ || peer == rank_)
      throw CommError("invalid peer " + std::to_string(peer), peer);
  }

  void read_loop(int peer) {
    auto& box = *boxes_[static_cast<std::size_t>(peer)];
    const int fd = peers_[static_cast<std::size_t>(peer)].fd();
    auto finish = [&](State s, std::string why) {
      {
        std::lock_guard lk(box.mu);
        box.state = s;
        box.reason = std::move(why);
      }
      box.cv.notify_all();
    };
    for (;;) {
      std::array<std::uint8_t, wire::kHeaderSize> h{};
      if (net::read_all(fd, h) != h.size()) return finish(State::closed, "closed");
      wire::FrameHeader hdr{};
      try {
        hdr = wire::decode_header(h);
      } catch (const ProtocolError& e) {
        ::shutdown(fd, SHUT_RDWR);
        return finish(State::protocol_error,
                      "rank " + std::to_string(peer) + ": " + e.what());
      }
      wire::Frame f{hdr.tag, Bytes(hdr.length)};
      if (net::read_all(fd, f.payload) != f.payload.size())
        return finish(State::closed, "closed mid-frame");
      {
        std::lock_guard lk(box.mu);
        box.frames.push_back(std::move(f));
      }
      box.cv.notify_all();
    }
  }

  static void write_hello(int fd, int rank, int size, std::uint16_t port) {
    std::array<std::uint8_t, 12> p{};
    wire::put_u32_be(p.data(), static_cast<std::uint32_t>(rank));
    wire::put_u32_be(p.data() + 4, static_cast<std::uint32_t>(size));
    wire::put_u32_be(p.data() + 8, port);
    if (!net::write_all(fd, wire::encode_frame(kHelloTag, p)))
      throw PeerClosedError("connection lost during rendezvous");
  }

  static std::pair<int, std::uint16_t> read_hello(int fd, int size) {
    const auto f = read_frame_blocking(fd, 30.0, -1);
    if (f.tag != kHelloTag || f.payload.size() != 12)
      throw ProtocolError("malformed hello at rendezvous");
    const auto r = static_cast<int>(wire::get_u32_be(f.payload.data()));
    const auto k = static_cast<int>(wire::get_u32_be(f.payload.data() + 4));
    if (k != size)
      throw ConfigError("rank " + std::to_string(r) + " expects group size " +
                        std::to_string(k) + ", coordinator has " + std::to_string(size));
    if (r < 0 || r >= size) throw ProtocolError("rank out of range at rendezvous", r);
    return {r, static_cast<std::uint16_t>(wire::get_u32_be(f.payload.data() + 8))};
  }

  static wire::Frame read_frame_blocking(int fd, double timeout_s, int peer) {
    if (!net::wait_readable(fd, timeout_s))
      throw TimeoutError("rendezvous timed out", peer);
    std::array<std::uint8_t, wire::kHeaderSize> h{};
    if (net::read_all(fd, h) != h.size())
      throw PeerClosedError("connection closed during rendezvous", peer);
    const auto hdr = wire::decode_header(h);
    wire::Frame f{hdr.tag, Bytes(hdr.length)};
    if (net::read_all(fd, f.payload) != f.payload.size())
      throw PeerClosedError("connection closed during rendezvous", peer);
    return f;
  }

  int rank_;
  int size_;
  TcpOptions opts_;
  std::vector<net::Socket> peers_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  std::vector<std::thread> readers_;
  WallClock clock_;
};

// K ranks in one process over loopback TCP, one thread each.
template <typename Fn>
void run_tcp_local(int k, Fn&& fn, TcpOptions opts = {}) {
  auto [listener, port] = net::listen_tcp("127.0.0.1", 0);
  std::vector<std::unique_ptr<Transport>> ts(static_cast<std::size_t>(k));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(k));
  {
    std::vector<std::thread> th;
    th.emplace_back([&, l = std::move(listener)]() mutable {
      try {
        ts[0] = TcpTransport::coordinate(std::move(l), k, opts);
      } catch (...) {
        errs[0] = std::current_exception();
      }
    });
    for (int r = 1; r < k; ++r)
      th.emplace_back([&, r, p = port] {
        try {
          ts[static_cast<std::size_t>(r)] = TcpTransport::join(r, k, "127.0.0.1", p, opts);
        } catch (...) {
          errs[static_cast<std::size_t>(r)] = std::current_exception();
        }
      });
    for (auto& t : th) t.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  std::vector<std::exception_ptr> run_errs(static_cast<std::size_t>(k));
  std::vector<std::thread> th;
  for (int r = 0; r < k; ++r)
    th.emplace_back([&, r] {
      try {
        fn(r, *ts[static_cast<std::size_t>(r)]);
      } catch (...) {
        run_errs[static_cast<std::size_t>(r)] = std::current_exception();
        ts[static_cast<std::size_t>(r)].reset();  // peers see the close instead of waiting
      }
    });
  for (auto& t : th) t.join();
  for (auto& e : run_errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace ringtrain
