// ringtrain: workers, launcher, simulator experiments, probes, calibration.

#include <signal.h>
#include <sys/prctl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ringtrain/ringtrain.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ringtrain;

#ifndef RINGTRAIN_PRESET_DIR
#define RINGTRAIN_PRESET_DIR "presets"
#endif

namespace {

enum Exit { kOk = 0, kUsage = 2, kComm = 3, kAssert = 4 };

struct AssertionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string now_iso() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

std::string self_exe() {
  std::error_code ec;
  auto p = fs::read_symlink("/proc/self/exe", ec);
  if (ec) throw ConfigError("cannot locate own executable");
  return p.string();
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("RINGTRAIN_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("RINGTRAIN_SEED is not an integer: '") + s + "'");
  }
}

// flag > environment > file
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag, bool ignore_env) {
  if (flag) return flag;
  if (!ignore_env) return env_seed();
  return std::nullopt;
}

std::string default_preset_dir() {
  if (const char* d = std::getenv("RINGTRAIN_PRESET_DIR"); d && *d) return d;
  return RINGTRAIN_PRESET_DIR;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

// Everything a run records so it can be reproduced.
struct Manifest {
  std::string subcommand;
  std::vector<std::string> command;
  std::vector<std::string> resolved;
  json config_paths = json::object();
  json seeds = json::object();
  std::vector<std::string> outputs;

  void write(const std::string& path) {
    outputs.push_back(absolute(path));
    json j{{"subcommand", subcommand},
           {"command", command},
           {"resolved_args", resolved},
           {"config_paths", config_paths},
           {"seeds", seeds},
           {"outputs", outputs},
           {"timestamp", now_iso()},
           {"version", kVersion}};
    write_text_file(path, j.dump(2) + "\n");
  }
};

void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw ConfigError("cannot create output directory " + d + ": " + ec.message());
}

std::string write_report(const ExperimentReport& r, const std::string& out, Manifest& mf) {
  ensure_dir(out);
  const std::string csv = (fs::path(out) / (r.experiment + ".csv")).string();
  const std::string side = (fs::path(out) / (r.experiment + ".json")).string();
  write_text_file(csv, csv_string(r));
  write_text_file(side, sidecar(r).dump(2) + "\n");
  mf.outputs.push_back(absolute(csv));
  mf.outputs.push_back(absolute(side));
  if (!r.series.empty()) {
    std::ostringstream os;
    write_series_csv(os, r);
    const std::string ser = (fs::path(out) / (r.experiment + "_series.csv")).string();
    write_text_file(ser, os.str());
    mf.outputs.push_back(absolute(ser));
  }
  return csv;
}

void write_weights(const std::string& path, const std::vector<Tensor>& ws) {
  std::string bytes;
  for (const auto& w : ws) {
    const auto b = wire::floats_to_bytes(w.values());
    bytes.append(reinterpret_cast<const char*>(b.data()), b.size());
  }
  write_text_file(path, bytes);
}

// ---------------------------------------------------------------- sim

struct SimOpts {
  std::string preset_dir;
  std::string net, wifi, compute, thermal;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool ignore_env_seed = false;
  std::string model;
  int batch = 32;
  std::vector<int> ks;
  std::string alg;
  std::vector<std::size_t> sizes;
  std::vector<std::string> models;
  double duration = 1200.0;
  bool fan = false;
};

void add_sim_options(CLI::App* sub, SimOpts& o) {
  sub->add_option("--preset-dir", o.preset_dir, "directory holding the shipped presets");
  sub->add_option("--net", o.net, "network profile JSON (default: ethernet.json)");
  sub->add_option("--wifi", o.wifi, "wireless profile JSON for the collective bench (default: wifi5.json)");
  sub->add_option("--compute", o.compute, "compute profile JSON (default: compute_s10.json)");
  sub->add_option("--thermal", o.thermal, "thermal profile JSON (default: thermal_s10.json)");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "override network seeds");
  sub->add_flag("--ignore-env-seed", o.ignore_env_seed)->group("");
}

std::string preset_path(const SimOpts& o, const std::string& given, const char* file) {
  if (!given.empty()) return absolute(given);
  return absolute((fs::path(o.preset_dir.empty() ? default_preset_dir() : o.preset_dir) / file).string());
}

int run_sim(const std::string& which, SimOpts o, const std::vector<std::string>& command) {
  Manifest mf;
  mf.subcommand = "sim " + which;
  mf.command = command;
  const auto seed = resolve_seed(o.seed, o.ignore_env_seed);

  std::vector<std::string> res{"sim", which};
  auto load_net = [&](const std::string& given, const char* file, const char* key) {
    const auto path = preset_path(o, given, file);
    auto p = load_net_profile(path);
    if (seed) p.seed = *seed;
    mf.config_paths[key] = path;
    mf.seeds[key] = p.seed;
    res.insert(res.end(), {std::string("--") + key, path});
    return p;
  };
  auto load_compute = [&] {
    const auto path = preset_path(o, o.compute, "compute_s10.json");
    mf.config_paths["compute"] = path;
    res.insert(res.end(), {"--compute", path});
    return load_compute_profile(path);
  };
  auto ks_or = [&](std::vector<int> def) {
    if (o.ks.empty()) o.ks = std::move(def);
    res.insert(res.end(), {"--k", join(o.ks)});
    return o.ks;
  };
  auto model_or = [&](const std::string& def) {
    if (o.model.empty()) o.model = def;
    res.insert(res.end(), {"--model", o.model});
    return o.model;
  };

  ExperimentReport r;
  if (which == "scaling") {
    const auto net = load_net(o.net, "ethernet.json", "net");
    const auto cp = load_compute();
    const auto m = build_profile(model_or("GoogleNet"));
    const auto ks = ks_or({1, 2, 4, 8, 16, 32});
    if (o.alg.empty()) o.alg = "tree_packed";
    res.insert(res.end(), {"--batch", std::to_string(o.batch), "--alg", o.alg});
    r = run_scaling_experiment(m, o.batch, ks, net, cp, parse_aggregation(o.alg));
  } else if (which == "collective") {
    const auto eth = load_net(o.net, "ethernet.json", "net");
    const auto wifi = load_net(o.wifi, "wifi5.json", "wifi");
    const auto cp = load_compute();
    const auto ks = ks_or({2, 4, 8, 16});
    if (o.sizes.empty()) o.sizes = {0, 1u << 20, 10u << 20, kAnchorBytes};
    res.insert(res.end(), {"--sizes", join(o.sizes)});
    std::vector<Algorithm> algs;
    if (o.alg.empty() || o.alg == "both") algs = {Algorithm::ring, Algorithm::tree};
    else if (o.alg == "ring") algs = {Algorithm::ring};
    else if (o.alg == "tree") algs = {Algorithm::tree};
    else throw ConfigError("collective --alg must be ring, tree or both");
    res.insert(res.end(), {"--alg", o.alg.empty() ? "both" : o.alg});
    r = run_collective_bench(o.sizes, ks,
                             {{fs::path(mf.config_paths["net"].get<std::string>()).stem().string(), eth},
                              {fs::path(mf.config_paths["wifi"].get<std::string>()).stem().string(), wifi}},
                             algs, cp.tree_segment_bytes);
  } else if (which == "aggregation") {
    const auto net = load_net(o.net, "ethernet.json", "net");
    const auto cp = load_compute();
    const auto ks = ks_or({138});
    if (ks.size() != 1) throw ConfigError("aggregation takes a single --k");
    if (o.models.empty()) o.models = profile_names();
    res.insert(res.end(), {"--models", join(o.models)});
    std::vector<ModelProfile> ms;
    for (const auto& n : o.models) ms.push_back(build_profile(n));
    r = run_aggregation_comparison(ms, ks[0], net, cp);
  } else if (which == "efficiency") {
    const auto net = load_net(o.net, "ethernet.json", "net");
    const auto cp = load_compute();
    const auto ks = ks_or({138});
    if (ks.size() != 1) throw ConfigError("efficiency takes a single --k");
    if (o.alg.empty()) o.alg = "ring_packed";
    res.insert(res.end(), {"--alg", o.alg});
    r = run_efficiency_sweep(ks[0], net, cp, parse_aggregation(o.alg));
  } else if (which == "rar-vs-tree") {
    const auto net = load_net(o.net, "ethernet.json", "net");
    const auto cp = load_compute();
    const auto m = build_profile(model_or("ResNet-152"));
    const auto ks = ks_or({1, 2, 4, 8, 16, 32, 46, 64, 138});
    r = run_rar_vs_tree(m, ks, net, cp);
  } else if (which == "thermal") {
    const auto path = preset_path(o, o.thermal, "thermal_s10.json");
    mf.config_paths["thermal"] = path;
    res.insert(res.end(), {"--thermal", path, "--duration", fmt_num(o.duration)});
    if (o.fan) res.push_back("--fan");
    r = run_thermal_scenario(model_or("unspecified"), o.duration, load_thermal_model(path), o.fan);
  } else {
    throw ConfigError("unknown sim experiment '" + which + "'");
  }

  res.insert(res.end(), {"--out", absolute(o.out), "--ignore-env-seed"});
  if (seed) res.insert(res.end(), {"--seed", std::to_string(*seed)});
  mf.resolved = res;
  const auto csv = write_report(r, o.out, mf);
  mf.write((fs::path(o.out) / (r.experiment + ".manifest.json")).string());

  std::cout << csv_string(r);
  if (!r.derived.empty()) std::cout << "# derived " << r.derived.dump() << "\n";
  std::cerr << "wrote " << csv << "\n";
  if (!r.ok()) {
    for (const auto& f : r.failures) std::cerr << "assertion failed: " << f << "\n";
    return kAssert;
  }
  return kOk;
}

// ---------------------------------------------------------------- training

struct TrainOpts {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> iterations;
  std::string aggregation;
  bool ignore_env_seed = false;
};

TrainingConfig resolve_training(const TrainOpts& o, Manifest& mf) {
  if (o.config.empty()) throw ConfigError("--config is required");
  const auto path = absolute(o.config);
  TrainingConfig cfg = load_training_config(path);
  mf.config_paths["training"] = path;
  if (o.workers) cfg = cfg.with_workers(*o.workers);
  if (o.iterations) cfg.iterations = *o.iterations;
  if (!o.aggregation.empty()) cfg.aggregation = parse_aggregation(o.aggregation);
  if (const auto s = resolve_seed(o.seed, o.ignore_env_seed)) cfg.seed = *s;
  mf.seeds["training"] = cfg.seed;
  cfg.validate();
  return cfg;
}

void write_rank_outputs(const std::string& out, int rank, const RankResult& rr, Manifest& mf) {
  std::ostringstream os;
  write_metrics_csv(os, rr.metrics);
  const auto m = (fs::path(out) / ("metrics_rank" + std::to_string(rank) + ".csv")).string();
  write_text_file(m, os.str());
  const auto w = (fs::path(out) / ("weights_rank" + std::to_string(rank) + ".f32")).string();
  write_weights(w, rr.weights);
  mf.outputs.push_back(absolute(m));
  mf.outputs.push_back(absolute(w));
}

// Rank-0 stream plus a one-row summary in the common report format.
void write_training_report(const std::string& out, const TrainingConfig& cfg, const std::string& mode,
                           const std::vector<std::uint64_t>& checksums,
                           const std::vector<IterationMetrics>& rank0, Manifest& mf) {
  std::ostringstream os;
  write_metrics_csv(os, rank0);
  const auto m = (fs::path(out) / "metrics.csv").string();
  write_text_file(m, os.str());
  mf.outputs.push_back(absolute(m));

  ExperimentReport r;
  r.experiment = "train";
  r.mode = mode;
  double tc = 0, tm = 0;
  for (const auto& x : rank0) {
    tc += x.t_comp;
    tm += x.t_comm;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, rank0.size()));
  r.rows.push_back({"train", mode, "mlp", cfg.workers, to_string(cfg.aggregation), tc / n, tm / n});
  r.meta["config"] = cfg;
  json cs = json::array();
  for (auto c : checksums) cs.push_back(c);
  r.derived["weight_checksums"] = cs;
  r.derived["final_loss"] = rank0.empty() ? 0.0 : rank0.back().loss;
  r.derived["first_loss"] = rank0.empty() ? 0.0 : rank0.front().loss;
  write_report(r, out, mf);
}

int run_worker(int rank, int size, const std::string& coordinator, TrainOpts o,
               const std::vector<std::string>& command, double connect_timeout) {
  Manifest mf;
  mf.subcommand = "worker";
  mf.command = command;
  TrainingConfig cfg = resolve_training(o, mf);
  if (size != cfg.workers) cfg = cfg.with_workers(size);
  if (rank < 0 || rank >= size) throw ConfigError("--rank must be in [0, size)");
  const auto [host, port] = net::parse_endpoint(coordinator);
  ensure_dir(o.out);
  TcpOptions topts;
  topts.recv_timeout_s = cfg.recv_timeout_s;
  topts.connect_timeout_s = connect_timeout;

  const auto ds = make_dataset(cfg);
  RankResult rr;
  if (size == 1) {
    SoloTransport solo;
    rr = run_training(cfg, solo, ds);
  } else {
    std::unique_ptr<TcpTransport> t;
    if (rank == 0) {
      auto [listener, bound] = net::listen_tcp(host, port);
      (void)bound;
      t = TcpTransport::coordinate(std::move(listener), size, topts);
    } else {
      t = TcpTransport::join(rank, size, host, port, topts);
    }
    rr = run_training(cfg, *t, ds);
  }
  write_rank_outputs(o.out, rank, rr, mf);
  mf.resolved = command;
  mf.write((fs::path(o.out) / ("worker" + std::to_string(rank) + ".manifest.json")).string());
  return kOk;
}

std::vector<pid_t> g_children;
std::atomic<bool> g_interrupted{false};

void forward_signal(int sig) {
  g_interrupted = true;
  for (pid_t p : g_children) ::kill(p, SIGTERM);
  (void)sig;
}

pid_t spawn(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const pid_t parent = ::getpid();
  const pid_t pid = ::fork();
  if (pid < 0) throw CommError("fork failed");
  if (pid == 0) {
    ::prctl(PR_SET_PDEATHSIG, SIGTERM);
    if (::getppid() != parent) ::_exit(kComm);
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  return pid;
}

std::vector<float> read_weights(const std::string& path) {
  const auto s = read_text_file(path);
  std::vector<float> v(s.size() / 4);
  wire::bytes_to_floats({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, v);
  return v;
}

int run_launch(int workers, TrainOpts o, const std::string& transport, const std::string& net_path,
               const std::vector<std::string>& command) {
  Manifest mf;
  mf.subcommand = "launch";
  mf.command = command;
  o.workers = workers;
  TrainingConfig cfg = resolve_training(o, mf);
  ensure_dir(o.out);
  std::vector<std::string> res{"launch", "--workers", std::to_string(workers), "--config",
                               absolute(o.config), "--out", absolute(o.out), "--transport", transport,
                               "--seed", std::to_string(cfg.seed), "--iterations",
                               std::to_string(cfg.iterations), "--aggregation", to_string(cfg.aggregation)};

  std::vector<std::uint64_t> checksums;
  std::vector<IterationMetrics> rank0;
  std::string mode;
  if (transport == "sim") {
    mode = "sim";
    std::string path = net_path.empty() ? (fs::path(default_preset_dir()) / "ethernet.json").string() : net_path;
    path = absolute(path);
    mf.config_paths["net"] = path;
    res.insert(res.end(), {"--net", path});
    const auto net = load_net_profile(path);
    const auto results = train_sim(cfg, net);
    for (int r = 0; r < workers; ++r) {
      write_rank_outputs(o.out, r, results[static_cast<std::size_t>(r)], mf);
      checksums.push_back(weights_checksum(results[static_cast<std::size_t>(r)].weights));
    }
    rank0 = results[0].metrics;
  } else if (transport == "tcp") {
    mode = "real";
    std::uint16_t port;
    {
      auto [l, p] = net::listen_tcp("127.0.0.1", 0);
      port = p;
    }
    const std::string exe = self_exe();
    struct sigaction sa {};
    sa.sa_handler = forward_signal;
    ::sigaction(SIGINT, &sa, nullptr);
    ::sigaction(SIGTERM, &sa, nullptr);
    for (int r = 0; r < workers; ++r)
      g_children.push_back(spawn({exe, "worker", "--rank", std::to_string(r), "--size",
                                  std::to_string(workers), "--coordinator",
                                  "127.0.0.1:" + std::to_string(port), "--config", absolute(o.config),
                                  "--out", absolute(o.out), "--seed", std::to_string(cfg.seed),
                                  "--iterations", std::to_string(cfg.iterations), "--aggregation",
                                  to_string(cfg.aggregation), "--ignore-env-seed"}));
    int worst = kOk;
    for (std::size_t done = 0; done < g_children.size();) {
      int status = 0;
      const pid_t p = ::waitpid(-1, &status, 0);
      if (p < 0) {
        if (errno == EINTR) continue;
        break;
      }
      ++done;
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kComm;
      if (code != kOk && worst == kOk) {
        worst = code == kUsage || code == kAssert ? code : kComm;
        for (pid_t c : g_children)
          if (c != p) ::kill(c, SIGTERM);
        std::cerr << "worker pid " << p << " exited with " << code << "; stopping the others\n";
      }
    }
    if (g_interrupted) return kComm;
    if (worst != kOk) return worst;
    for (int r = 0; r < workers; ++r) {
      const auto w = read_weights((fs::path(o.out) / ("weights_rank" + std::to_string(r) + ".f32")).string());
      checksums.push_back(weights_checksum({Tensor({w.size()}, w)}));
      mf.outputs.push_back(absolute((fs::path(o.out) / ("metrics_rank" + std::to_string(r) + ".csv")).string()));
    }
    std::ifstream in(fs::path(o.out) / "metrics_rank0.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      IterationMetrics m;
      if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf", &m.iter, &m.rank, &m.t_comp, &m.t_comm, &m.loss) == 5)
        rank0.push_back(m);
    }
  } else {
    throw ConfigError("--transport must be tcp or sim");
  }

  write_training_report(o.out, cfg, mode, checksums, rank0, mf);
  mf.resolved = res;
  mf.write((fs::path(o.out) / "launch.manifest.json").string());
  std::cout << "workers=" << workers << " iterations=" << rank0.size();
  if (!rank0.empty())
    std::cout << " loss " << fmt_num(rank0.front().loss) << " -> " << fmt_num(rank0.back().loss);
  std::cout << "\n";
  for (auto c : checksums)
    if (c != checksums.front()) {
      std::cerr << "replica weights diverged across ranks\n";
      return kAssert;
    }
  return kOk;
}

// ---------------------------------------------------------------- probe

int run_probe(bool server, const std::string& bind, const std::string& client, const std::string& sim,
              double seconds, int repeat, int k_active) {
  if (repeat < 1) throw ConfigError("--repeat must be >= 1");
  if (!(seconds > 0)) throw ConfigError("--seconds must be > 0");
  const int modes = (server ? 1 : 0) + (client.empty() ? 0 : 1) + (sim.empty() ? 0 : 1);
  if (modes != 1) throw ConfigError("choose exactly one of --server, --client, --sim");
  if (server) {
    const auto [host, port] = net::parse_endpoint(bind);
    auto [l, p] = net::listen_tcp(host, port);
    std::cout << "listening on " << host << ":" << p << std::endl;
    probe_serve(l.fd(), repeat, 3600.0);
    return kOk;
  }
  std::vector<ProbeResult> runs;
  if (!client.empty()) {
    const auto [host, port] = net::parse_endpoint(client);
    for (int i = 0; i < repeat; ++i) {
      runs.push_back(probe_client(host, port, seconds));
      if (runs.back().partial) break;
    }
  } else {
    const auto s = probe_sim_repeated(load_net_profile(sim), seconds, repeat, k_active);
    runs = s.runs;
  }
  const auto s = summarize(runs);
  for (std::size_t i = 0; i < s.runs.size(); ++i)
    std::cout << "run " << i << ": " << fmt_num(s.runs[i].mbps) << " Mbps"
              << (s.runs[i].partial ? " (partial: " + s.runs[i].error + ")" : "") << "\n";
  std::printf("%.3f +- %.3f Mbps over %zu runs%s\n", s.mean_mbps, s.std_mbps, s.runs.size(),
              s.partial ? " [partial]" : "");
  return s.partial ? kComm : kOk;
}

// ---------------------------------------------------------------- calibrate

int run_calibrate(std::string preset_dir, const std::string& write_dir, bool check) {
  if (preset_dir.empty()) preset_dir = default_preset_dir();
  const auto dir = fs::path(preset_dir);
  const auto eth = load_net_profile((dir / "ethernet.json").string());
  const auto wifi = load_net_profile((dir / "wifi5.json").string());
  const auto cp = load_compute_profile((dir / "compute_s10.json").string());
  const auto c = calibrate(eth, wifi, cp);

  NetProfile wifi_fit = wifi;
  wifi_fit.contention_coeff = c.contention_coeff;
  ComputeProfile cp_fit = cp;
  cp_fit.invocation_overhead_s = c.invocation_overhead_s;
  cp_fit.throughput = c.throughput;

  std::printf("contention_coeff      %.10g  (WiFi K=2->16 slowdown %.4g)\n", c.contention_coeff,
              contention_slowdown(wifi_fit, cp.tree_segment_bytes));
  std::printf("ethernet slowdown     %.4g\n", contention_slowdown(eth, cp.tree_segment_bytes));
  std::printf("invocation_overhead_s %.10g\n", c.invocation_overhead_s);
  std::printf("break-even throughput %.10g samples/s\n", c.breakeven_throughput);
  std::printf("throughput            %.10g samples/s (x%.2f)\n", c.throughput, kThroughputMargin);

  if (!write_dir.empty()) {
    ensure_dir(write_dir);
    const auto w = fs::path(write_dir);
    write_text_file((w / "wifi5.json").string(), json(wifi_fit).dump(2) + "\n");
    write_text_file((w / "compute_s10.json").string(), json(cp_fit).dump(2) + "\n");
    if (fs::absolute(w) != fs::absolute(dir)) {
      write_text_file((w / "ethernet.json").string(), json(eth).dump(2) + "\n");
      fs::copy_file(dir / "thermal_s10.json", w / "thermal_s10.json", fs::copy_options::overwrite_existing);
    }
    std::cout << "wrote presets to " << write_dir << "\n";
  }
  if (check) {
    auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-6 * std::max(std::fabs(b), 1e-12); };
    bool ok = close(wifi.contention_coeff, c.contention_coeff) &&
              close(cp.invocation_overhead_s, c.invocation_overhead_s) && close(cp.throughput, c.throughput);
    std::cout << (ok ? "shipped presets match the calibration\n" : "shipped presets are stale\n");
    return ok ? kOk : kAssert;
  }
  return kOk;
}

// ---------------------------------------------------------------- replay

int run_cli(const std::vector<std::string>& args);

int run_replay(const std::string& manifest_path, const std::string& out_override) {
  const auto j = read_json_file(manifest_path);
  std::vector<std::string> args;
  try {
    args = j.at("resolved_args").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError("manifest has no resolved_args: " + std::string(e.what()));
  }
  if (args.empty()) throw ConfigError("manifest has empty resolved_args");
  if (args[0] != "sim" && !(args[0] == "launch" && std::find(args.begin(), args.end(), "sim") != args.end()))
    throw ConfigError("only sim-mode runs are reproducible; this manifest is '" + args[0] + "'");

  std::string orig_out;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--out") orig_out = args[i + 1];
  std::vector<std::pair<std::string, std::string>> before;  // file name, bytes
  for (const auto& p : j.at("outputs").get<std::vector<std::string>>())
    if (fs::path(p).extension() == ".csv" && fs::exists(p))
      before.emplace_back(fs::path(p).filename().string(), read_text_file(p));

  std::string out = orig_out;
  if (!out_override.empty()) {
    out = absolute(out_override);
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") args[i + 1] = out;
  }
  const int rc = run_cli(args);
  if (rc != kOk && rc != kAssert) return rc;
  bool same = true;
  for (const auto& [name, bytes] : before) {
    const auto now = (fs::path(out) / name).string();
    const bool eq = fs::exists(now) && read_text_file(now) == bytes;
    std::cout << (eq ? "identical " : "DIFFERS   ") << name << "\n";
    same = same && eq;
  }
  if (before.empty()) std::cout << "no CSV outputs recorded to compare\n";
  return same ? rc : kAssert;
}

// ---------------------------------------------------------------- main

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"ringtrain: ring-allreduce data-parallel training and cluster simulator"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::vector<std::string> command{"ringtrain"};
  command.insert(command.end(), args.begin(), args.end());

  // worker
  auto* worker = app.add_subcommand("worker", "run one rank of a TCP training group");
  int w_rank = 0, w_size = 1;
  std::string w_coord;
  double w_connect = 30.0;
  TrainOpts w_opts;
  worker->add_option("--rank", w_rank)->required();
  worker->add_option("--size", w_size)->required();
  worker->add_option("--coordinator", w_coord, "host:port of rank 0")->required();
  worker->add_option("--config", w_opts.config, "training config JSON")->required();
  worker->add_option("--out", w_opts.out);
  worker->add_option("--seed", w_opts.seed);
  worker->add_option("--iterations", w_opts.iterations);
  worker->add_option("--aggregation", w_opts.aggregation);
  worker->add_option("--connect-timeout", w_connect, "rendezvous timeout in seconds");
  worker->add_flag("--ignore-env-seed", w_opts.ignore_env_seed)->group("");

  // launch
  auto* launch = app.add_subcommand("launch", "spawn K local workers and collect the rank-0 report");
  int l_workers = 1;
  TrainOpts l_opts;
  std::string l_transport = "tcp", l_net;
  launch->add_option("--workers", l_workers)->required();
  launch->add_option("--config", l_opts.config, "training config JSON")->required();
  launch->add_option("--out", l_opts.out);
  launch->add_option("--seed", l_opts.seed);
  launch->add_option("--iterations", l_opts.iterations);
  launch->add_option("--aggregation", l_opts.aggregation);
  launch->add_option("--transport", l_transport, "tcp (processes) or sim (virtual time)");
  launch->add_option("--net", l_net, "network profile for --transport sim");
  launch->add_flag("--ignore-env-seed", l_opts.ignore_env_seed)->group("");

  // sim
  auto* sim = app.add_subcommand("sim", "simulator experiments");
  sim->require_subcommand(1);
  SimOpts s_opts;
  std::string s_which;
  for (const char* name : {"scaling", "collective", "aggregation", "efficiency", "rar-vs-tree", "thermal"}) {
    auto* sub = sim->add_subcommand(name);
    add_sim_options(sub, s_opts);
    sub->callback([&s_which, name] { s_which = name; });
    const std::string n = name;
    if (n == "scaling" || n == "rar-vs-tree" || n == "thermal") sub->add_option("--model", s_opts.model);
    if (n == "scaling") sub->add_option("--batch", s_opts.batch, "fixed global batch");
    if (n != "thermal") sub->add_option("--k", s_opts.ks, "worker counts")->delimiter(',');
    if (n == "scaling" || n == "efficiency" || n == "collective") sub->add_option("--alg", s_opts.alg);
    if (n == "collective") sub->add_option("--sizes", s_opts.sizes, "payload bytes")->delimiter(',');
    if (n == "aggregation") sub->add_option("--models", s_opts.models)->delimiter(',');
    if (n == "thermal") {
      sub->add_option("--duration", s_opts.duration, "seconds of training to simulate");
      sub->add_flag("--fan", s_opts.fan, "cooling fan on");
    }
  }

  // probe
  auto* probe = app.add_subcommand("probe", "point-to-point bandwidth probe");
  bool p_server = false;
  std::string p_bind = "0.0.0.0:5201", p_client, p_sim, p_out;
  double p_seconds = 10.0;
  int p_repeat = 10, p_k = 2;
  probe->add_flag("--server", p_server);
  probe->add_option("--bind", p_bind, "server address");
  probe->add_option("--client", p_client, "server host:port");
  probe->add_option("--sim", p_sim, "network profile JSON to probe in simulation");
  probe->add_option("--seconds", p_seconds);
  probe->add_option("--repeat", p_repeat);
  probe->add_option("--k-active", p_k, "active nodes sharing the medium (sim)");

  // replay
  auto* replay = app.add_subcommand("replay", "rerun a sim-mode command from its manifest and compare CSVs");
  std::string r_manifest, r_out;
  replay->add_option("manifest", r_manifest)->required();
  replay->add_option("--out", r_out, "write to this directory instead of the original one");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "fit contention, overhead and throughput presets");
  std::string c_dir, c_write;
  bool c_check = false;
  cal->add_option("--preset-dir", c_dir);
  cal->add_option("--write", c_write, "write calibrated presets here");
  cal->add_flag("--check", c_check, "fail if shipped presets differ from a fresh fit");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*worker) return run_worker(w_rank, w_size, w_coord, w_opts, command, w_connect);
  if (*launch) return run_launch(l_workers, l_opts, l_transport, l_net, command);
  if (*sim) return run_sim(s_which, s_opts, command);
  if (*probe) return run_probe(p_server, p_bind, p_client, p_sim, p_seconds, p_repeat, p_k);
  if (*replay) return run_replay(r_manifest, r_out);
  if (*cal) return run_calibrate(c_dir, c_write, c_check);
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run_cli(args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NotFoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CommError& e) {
    std::cerr << "communication failure";
    if (e.rank() >= 0) std::cerr << " (rank " << e.rank() << ")";
    std::cerr << ": " << e.what() << "\n";
    return kComm;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const AssertionFailed& e) {
    std::cerr << "assertion failed: " << e.what() << "\n";
    return kAssert;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAssert;
  }
}
