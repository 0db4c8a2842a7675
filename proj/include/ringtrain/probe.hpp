#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/net_profile.hpp"
#include "ringtrain/socket.hpp"
#include "ringtrain/transport.hpp"
#include "ringtrain/wire.hpp"

namespace ringtrain {

struct ProbeResult {
  double mbps = 0.0;
  double bytes = 0.0;
  double seconds = 0.0;
  bool partial = false;  // aborted by a disconnect
  std::string error;
};

struct ProbeSummary {
  std::vector<ProbeResult> runs;
  double mean_mbps = 0.0;
  double std_mbps = 0.0;  // sample std, 0 for a single run
  bool partial = false;
};

inline ProbeSummary summarize(std::vector<ProbeResult> runs) {
  ProbeSummary s;
  s.runs = std::move(runs);
  if (s.runs.empty()) return s;
  for (const auto& r : s.runs) {
    s.mean_mbps += r.mbps;
    s.partial = s.partial || r.partial;
  }
  s.mean_mbps /= static_cast<double>(s.runs.size());
  if (s.runs.size() > 1) {
    double ss = 0;
    for (const auto& r : s.runs) ss += (r.mbps - s.mean_mbps) * (r.mbps - s.mean_mbps);
    s.std_mbps = std::sqrt(ss / static_cast<double>(s.runs.size() - 1));
  }
  return s;
}

inline constexpr std::size_t kProbeBlock = 1u << 20;

// Simulated iperf-style stream between two nodes: latency once, then 1 MiB
// blocks at the jittered effective bandwidth until the duration is used up.
// A sampled disconnect ends the run early with partial set.
inline ProbeResult probe_sim(const NetProfile& p, double duration_s,
                             std::uint64_t stream = 0, int k_active = 2) {
  if (!(duration_s > 0)) throw ConfigError("probe duration must be > 0");
  LinkSampler link(p, stream);
  ProbeResult r;
  double t = p.latency_ms * 1e-3;
  const double bw = p.effective_bandwidth_mbps(k_active);
  while (t < duration_s) {
    if (link.disconnect()) {
      r.partial = true;
      r.error = "disconnected";
      break;
    }
    const double dt = link.jitter() * kProbeBlock * 8.0 / (1e6 * bw);
    if (t + dt > duration_s) {
      r.bytes += kProbeBlock * (duration_s - t) / dt;
      t = duration_s;
      break;
    }
    r.bytes += kProbeBlock;
    t += dt;
  }
  r.seconds = r.partial ? t : duration_s;
  r.mbps = r.seconds > 0 ? r.bytes * 8.0 / 1e6 / r.seconds : 0.0;
  return r;
}

inline ProbeSummary probe_sim_repeated(const NetProfile& p, double duration_s, int repeat,
                                       int k_active = 2) {
  std::vector<ProbeResult> runs;
  for (int i = 0; i < repeat; ++i) {
    runs.push_back(probe_sim(p, duration_s, static_cast<std::uint64_t>(i), k_active));
    if (runs.back().partial) break;
  }
  return summarize(std::move(runs));
}

namespace detail {
inline constexpr std::uint32_t kProbeData = 0xFFFE0001u;
inline constexpr std::uint32_t kProbeEnd = 0xFFFE0002u;
inline constexpr std::uint32_t kProbeAck = 0xFFFE0003u;
}  // namespace detail

// Serves `sessions` probe connections (0 = forever). Each session is
// answered with the byte count the server actually received.
inline void probe_serve(int listen_fd, int sessions, double timeout_s = 60.0) {
  for (int served = 0; sessions == 0 || served < sessions; ++served) {
    net::Socket s = net::accept_tcp(listen_fd, timeout_s);
    std::uint64_t got = 0;
    for (;;) {
      std::array<std::uint8_t, wire::kHeaderSize> h{};
      if (net::read_all(s.fd(), h) != h.size()) break;
      const auto hdr = wire::decode_header(h);
      Bytes payload(hdr.length);
      if (net::read_all(s.fd(), payload) != payload.size()) break;
      if (hdr.tag == detail::kProbeEnd) {
        std::array<std::uint8_t, 8> ack{};
        wire::put_u32_be(ack.data(), static_cast<std::uint32_t>(got >> 32));
        wire::put_u32_be(ack.data() + 4, static_cast<std::uint32_t>(got));
        net::write_all(s.fd(), wire::encode_frame(detail::kProbeAck, ack));
        break;
      }
      got += payload.size();
    }
  }
}

// Streams data frames for duration_s, then waits for the server's count.
// Mbps = acknowledged bytes over the time until the ack arrived.
inline ProbeResult probe_client(const std::string& host, std::uint16_t port,
                                double duration_s, double timeout_s = 30.0) {
  ProbeResult r;
  net::Socket s = net::connect_tcp(host, port, timeout_s);
  const Bytes block(kProbeBlock, 0xA5);
  const auto frame = wire::encode_frame(detail::kProbeData, block);
  WallClock clock;
  double sent = 0;
  while (clock.seconds() < duration_s) {
    if (!net::write_all(s.fd(), frame)) {
      r.partial = true;
      r.error = "connection lost";
      break;
    }
    sent += static_cast<double>(block.size());
  }
  if (!r.partial) {
    net::write_all(s.fd(), wire::encode_frame(detail::kProbeEnd, {}));
    std::array<std::uint8_t, wire::kHeaderSize> h{};
    std::array<std::uint8_t, 8> ack{};
    if (net::wait_readable(s.fd(), timeout_s) && net::read_all(s.fd(), h) == h.size() &&
        wire::decode_header(h).tag == detail::kProbeAck && net::read_all(s.fd(), ack) == 8) {
      r.bytes = static_cast<double>((std::uint64_t{wire::get_u32_be(ack.data())} << 32) |
                                    wire::get_u32_be(ack.data() + 4));
    } else {
      r.partial = true;
      r.error = "no acknowledgement";
    }
  }
  if (r.partial) r.bytes = sent;
  r.seconds = clock.seconds();
  r.mbps = r.seconds > 0 ? r.bytes * 8.0 / 1e6 / r.seconds : 0.0;
  return r;
}

}  // namespace ringtrain
