#include <gtest/gtest.h>

#include <sys/socket.h>

#include <thread>

#include "ringtrain/tcp_transport.hpp"

using namespace ringtrain;

namespace {

// Rank 0 of a two-rank group whose peer is the raw other end of a socketpair.
struct RawPair {
  std::unique_ptr<TcpTransport> t;
  net::Socket raw;

  explicit RawPair(double recv_timeout = 2.0) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) throw std::runtime_error("socketpair");
    std::vector<net::Socket> peers(2);
    peers[1] = net::Socket(sv[0]);
    raw = net::Socket(sv[1]);
    TcpOptions o;
    o.recv_timeout_s = recv_timeout;
    t = std::make_unique<TcpTransport>(0, 2, std::move(peers), o);
  }
};

std::uint64_t fnv(const Bytes& b) {
  std::uint64_t h = 1469598103934665603ull;
  for (auto c : b) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace

TEST(Tcp, EmptyPayloadRoundTrip) {
  run_tcp_local(2, [](int r, Transport& t) {
    if (r == 0) {
      t.send(1, 42, {});
      EXPECT_TRUE(t.recv(1, 43).empty());
    } else {
      EXPECT_TRUE(t.recv(0, 42).empty());
      t.send(0, 43, {});
    }
  });
}

TEST(Tcp, AnchorSizedPayloadIsBitExact) {
  Bytes big(39321600);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i * 2654435761u >> 13);
  const auto want = fnv(big);
  std::uint64_t echoed = 0;
  run_tcp_local(2, [&](int r, Transport& t) {
    if (r == 0) {
      t.send(1, 1, big);
      echoed = fnv(t.recv(1, 2));
    } else {
      auto b = t.recv(0, 1);
      t.send(0, 2, b);
    }
  });
  EXPECT_EQ(echoed, want);
}

TEST(Tcp, OrderPreservedPerPair) {
  run_tcp_local(3, [](int r, Transport& t) {
    for (int p = 0; p < 3; ++p)
      if (p != r)
        for (std::uint32_t i = 0; i < 50; ++i) {
          const std::uint8_t v = static_cast<std::uint8_t>(i);
          t.send(p, i, std::span<const std::uint8_t>(&v, 1));
        }
    for (int p = 0; p < 3; ++p)
      if (p != r)
        for (std::uint32_t i = 0; i < 50; ++i) EXPECT_EQ(t.recv(p, i), Bytes{static_cast<std::uint8_t>(i)});
  });
}

TEST(Tcp, CorruptMagicIsProtocolErrorAndConnectionDies) {
  RawPair p;
  auto frame = wire::encode_frame(7, Bytes{1, 2, 3});
  frame[1] ^= 0xFF;
  ASSERT_TRUE(net::write_all(p.raw.fd(), frame));
  EXPECT_THROW(p.t->recv(1, 7), ProtocolError);
  EXPECT_FALSE(p.t->alive(1));
  // no resynchronisation afterwards
  EXPECT_THROW(p.t->recv(1, 7), ProtocolError);
}

TEST(Tcp, RecvTimeout) {
  RawPair p(0.2);
  EXPECT_THROW(p.t->recv(1, 1), TimeoutError);
}

TEST(Tcp, TagMismatch) {
  RawPair p;
  ASSERT_TRUE(net::write_all(p.raw.fd(), wire::encode_frame(5, Bytes{9})));
  EXPECT_THROW(p.t->recv(1, 6), TagMismatchError);
}

TEST(Tcp, PeerClosed) {
  RawPair p;
  p.raw.close();
  try {
    p.t->recv(1, 1);
    FAIL() << "expected PeerClosedError";
  } catch (const PeerClosedError& e) {
    EXPECT_EQ(e.rank(), 1);
  }
}

TEST(Tcp, TruncatedFrameIsNotDelivered) {
  RawPair p;
  auto frame = wire::encode_frame(3, Bytes(100, 1));
  frame.resize(50);
  ASSERT_TRUE(net::write_all(p.raw.fd(), frame));
  p.raw.close();
  EXPECT_THROW(p.t->recv(1, 3), CommError);
}

TEST(Tcp, InvalidPeer) {
  RawPair p;
  EXPECT_THROW(p.t->send(0, 1, {}), CommError);
  EXPECT_THROW(p.t->recv(2, 1), CommError);
}

TEST(Tcp, ConnectTimeout) {
  // grab a free port, then close it so nothing is listening
  std::uint16_t port;
  {
    auto [s, pt] = net::listen_tcp("127.0.0.1", 0);
    port = pt;
  }
  TcpOptions o;
  o.connect_timeout_s = 0.3;
  EXPECT_THROW(TcpTransport::join(1, 2, "127.0.0.1", port, o), TimeoutError);
}

TEST(Tcp, RendezvousEightRanks) {
  std::vector<int> seen(8, 0);
  run_tcp_local(8, [&](int r, Transport& t) {
    EXPECT_EQ(t.size(), 8);
    const std::uint8_t me = static_cast<std::uint8_t>(r);
    for (int p = 0; p < 8; ++p)
      if (p != r) t.send(p, 0, std::span<const std::uint8_t>(&me, 1));
    int sum = 0;
    for (int p = 0; p < 8; ++p)
      if (p != r) sum += t.recv(p, 0).at(0);
    seen[r] = sum + r;
  });
  for (int v : seen) EXPECT_EQ(v, 28);
}

TEST(Tcp, FailedRankClosesItsConnections) {
  EXPECT_THROW(run_tcp_local(2,
                             [](int r, Transport& t) {
                               if (r == 1) throw CommError("boom", 1);
                               t.recv(1, 0);
                             }),
               CommError);
}

TEST(Endpoint, Parse) {
  EXPECT_EQ(net::parse_endpoint("10.0.0.1:5000"), (std::pair<std::string, std::uint16_t>{"10.0.0.1", 5000}));
  EXPECT_THROW(net::parse_endpoint("nohost"), ConfigError);
  EXPECT_THROW(net::parse_endpoint("h:99999"), ConfigError);
}
