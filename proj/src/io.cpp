#include "driftsim/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "driftsim/nn.hpp"
#include "driftsim/path.hpp"

namespace driftsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kCkptMagic[8] = {'D', 'S', 'I', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>(v >> (8 * k)));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>(v >> (8 * k)));
}

void put_f64(std::string& buf, double d) {
  put_u64(buf, std::bit_cast<std::uint64_t>(d));
}

struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("truncated checkpoint file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + k]))
           << (8 * k);
    }
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + k]))
           << (8 * k);
    }
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

std::string g17(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json trainer_to_json(const TrainerConfig& cfg) {
  json t;
  t["n_envs"] = cfg.n_envs;
  t["rollout_length"] = cfg.rollout_length;
  t["gamma"] = cfg.gamma;
  t["gae_lambda"] = cfg.gae_lambda;
  t["clip_eps"] = cfg.clip_eps;
  t["lr"] = cfg.lr;
  t["lr_decay"] = cfg.lr_decay;
  t["epochs_per_update"] = cfg.epochs_per_update;
  t["minibatch_size"] = cfg.minibatch_size;
  t["entropy_coef"] = cfg.entropy_coef;
  t["value_coef"] = cfg.value_coef;
  t["max_grad_norm"] = cfg.max_grad_norm;
  t["total_env_steps"] = cfg.total_env_steps;
  t["seed"] = cfg.seed;
  return t;
}

constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c",
                                    "#ff7f0e", "#9467bd", "#8c564b"};
constexpr int kPaletteSize = 6;

struct Box {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  void add(double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  bool empty() const { return xmin > xmax; }
};

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot hash missing file: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write file: " + tmp);
    os.write(content.data(),
             static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("short write: " + tmp);
  }
  fs::rename(tmp, path);
}

void save_checkpoint(const PolicyNet& net, const TrainerConfig& cfg,
                     const std::string& file) {
  std::string buf;
  buf.append(kCkptMagic, sizeof kCkptMagic);
  put_u32(buf, kCkptVersion);
  put_u32(buf, static_cast<std::uint32_t>(net.obs_dim()));
  put_u32(buf, static_cast<std::uint32_t>(net.act_dim()));
  put_u32(buf, static_cast<std::uint32_t>(Mlp::kHidden.size()));
  for (int h : Mlp::kHidden) put_u32(buf, static_cast<std::uint32_t>(h));
  for (int i = 0; i < net.act_dim(); ++i) put_f64(buf, net.action_low()(i));
  for (int i = 0; i < net.act_dim(); ++i) put_f64(buf, net.action_high()(i));
  put_u64(buf, static_cast<std::uint64_t>(net.params.size()));
  for (Eigen::Index i = 0; i < net.params.size(); ++i) {
    put_f64(buf, net.params(i));
  }
  atomic_write_file(file, buf);

  json j;
  j["tool_version"] = kToolVersion;
  j["obs_dim"] = net.obs_dim();
  j["act_dim"] = net.act_dim();
  j["trainer"] = trainer_to_json(cfg);
  atomic_write_file(file + ".json", j.dump(2) + "\n");
}

PolicyNet load_checkpoint(const std::string& file) {
  const std::string buf = read_file(file);
  Cursor c{buf};
  c.need(sizeof kCkptMagic);
  if (std::memcmp(buf.data(), kCkptMagic, sizeof kCkptMagic) != 0) {
    throw FormatError("not a driftsim checkpoint (bad magic): " + file);
  }
  c.pos = sizeof kCkptMagic;
  const std::uint32_t version = c.u32();
  if (version != kCkptVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  const std::uint32_t obs_dim = c.u32();
  const std::uint32_t act_dim = c.u32();
  if (obs_dim == 0 || obs_dim > 1000000 || act_dim == 0 || act_dim > 1000) {
    throw FormatError("implausible checkpoint dimensions");
  }
  const std::uint32_t n_hidden = c.u32();
  if (n_hidden != Mlp::kHidden.size()) {
    throw FormatError("checkpoint hidden-layer count mismatch");
  }
  for (int h : Mlp::kHidden) {
    if (c.u32() != static_cast<std::uint32_t>(h)) {
      throw FormatError("checkpoint hidden-layer widths mismatch");
    }
  }
  Eigen::VectorXd lo(act_dim), hi(act_dim);
  for (std::uint32_t i = 0; i < act_dim; ++i) lo(i) = c.f64();
  for (std::uint32_t i = 0; i < act_dim; ++i) hi(i) = c.f64();
  for (std::uint32_t i = 0; i < act_dim; ++i) {
    if (!(hi(i) > lo(i))) throw FormatError("checkpoint action bounds invalid");
  }
  PolicyNet net(static_cast<int>(obs_dim), static_cast<int>(act_dim), lo, hi);
  const std::uint64_t count = c.u64();
  if (count != static_cast<std::uint64_t>(net.params.size())) {
    throw FormatError("checkpoint parameter count mismatch");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    net.params(static_cast<Eigen::Index>(i)) = c.f64();
  }
  if (c.pos != buf.size()) {
    throw FormatError("trailing bytes after checkpoint payload");
  }
  return net;
}

std::optional<TrainerConfig> load_checkpoint_config(const std::string& file) {
  const std::string side = file + ".json";
  std::ifstream is(side);
  if (!is) return std::nullopt;
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw FormatError("bad checkpoint sidecar " + side + ": " + e.what());
  }
  TrainerConfig cfg;
  const json t = j.value("trainer", json::object());
  cfg.n_envs = t.value("n_envs", cfg.n_envs);
  cfg.rollout_length = t.value("rollout_length", cfg.rollout_length);
  cfg.gamma = t.value("gamma", cfg.gamma);
  cfg.gae_lambda = t.value("gae_lambda", cfg.gae_lambda);
  cfg.clip_eps = t.value("clip_eps", cfg.clip_eps);
  cfg.lr = t.value("lr", cfg.lr);
  cfg.lr_decay = t.value("lr_decay", cfg.lr_decay);
  cfg.epochs_per_update = t.value("epochs_per_update", cfg.epochs_per_update);
  cfg.minibatch_size = t.value("minibatch_size", cfg.minibatch_size);
  cfg.entropy_coef = t.value("entropy_coef", cfg.entropy_coef);
  cfg.value_coef = t.value("value_coef", cfg.value_coef);
  cfg.max_grad_norm = t.value("max_grad_norm", cfg.max_grad_norm);
  cfg.total_env_steps = t.value("total_env_steps", cfg.total_env_steps);
  cfg.seed = t.value("seed", cfg.seed);
  return cfg;
}

void write_curve_csv(const std::vector<CurveRow>& rows, std::ostream& os) {
  os << "update,env_steps,mean_return,mean_abs_beta,rmse_proxy,steps_per_sec"
     << "\n";
  for (const CurveRow& r : rows) {
    os << r.update << ',' << r.env_steps << ',' << g17(r.mean_return) << ','
       << g17(r.mean_abs_beta) << ',' << g17(r.rmse_proxy) << ','
       << g17(r.steps_per_sec) << "\n";
  }
}

void write_curve_csv_file(const std::vector<CurveRow>& rows,
                          const std::string& file) {
  std::ostringstream ss;
  write_curve_csv(rows, ss);
  atomic_write_file(file, ss.str());
}

void write_state_trace_header(std::ostream& os) {
  os << "t,x,y,psi,xdot,ydot,psidot,delta,omega_fl,omega_fr,omega_rl,"
        "omega_rr,beta,V,r\n";
}

void write_state_trace_row(std::ostream& os, double t, const VehicleState& s,
                           const ControlInput& u) {
  os << g17(t) << ',' << g17(s.x) << ',' << g17(s.y) << ',' << g17(s.psi)
     << ',' << g17(s.xdot) << ',' << g17(s.ydot) << ',' << g17(s.psidot)
     << ',' << g17(u.delta);
  for (int w = 0; w < kNumWheels; ++w) os << ',' << g17(u.omega[w]);
  os << ',' << g17(s.sideslip()) << ',' << g17(s.speed()) << ','
     << g17(s.psidot) << "\n";
}

std::string episode_summary_json(const EpisodeSummary& s) {
  json j;
  j["instance"] = s.instance;
  j["path_index"] = s.path_index;
  j["reason"] = termination_name(s.reason);
  j["steps"] = s.steps;
  j["return"] = s.ep_return;
  j["mean_abs_beta"] = s.mean_abs_beta;
  j["rmse_epos"] = s.rmse_epos;
  j["progress_s"] = s.progress_s;
  return j.dump();
}

std::string eval_report_json(const EvalReport& r) {
  json j;
  j["path_id"] = r.path_id;
  j["n_trials"] = r.n_trials;
  j["rmse_mean"] = r.rmse_mean;
  j["rmse_std"] = r.rmse_std;
  j["mean_abs_beta"] = r.mean_abs_beta;
  j["mean_v"] = r.mean_v;
  j["success_rate"] = r.success_rate;
  if (r.equilibrium.has_value()) {
    j["equilibrium"] = {{"r", r.equilibrium->r},
                        {"beta", r.equilibrium->beta},
                        {"v", r.equilibrium->v}};
  } else {
    j["equilibrium"] = nullptr;
  }
  return j.dump(2) + "\n";
}

void write_overlay_svg(const ReferencePath& path,
                       const std::vector<TrialTrace>& traces,
                       std::ostream& os) {
  Box box;
  for (const Waypoint& w : path.waypoints) box.add(w.x, w.y);
  for (const TrialTrace& t : traces) {
    for (const TraceSample& s : t.samples) box.add(s.x, s.y);
  }
  if (box.empty()) box = Box{0, 1, 0, 1};
  const double margin = 30.0, size = 800.0, inner = size - 2 * margin;
  const double spanx = std::max(box.xmax - box.xmin, 1e-9);
  const double spany = std::max(box.ymax - box.ymin, 1e-9);
  const double scale = inner / std::max(spanx, spany);
  const double offx = (inner - spanx * scale) / 2.0;
  const double offy = (inner - spany * scale) / 2.0;
  auto mx = [&](double x) { return margin + offx + (x - box.xmin) * scale; };
  auto my = [&](double y) {
    return size - (margin + offy + (y - box.ymin) * scale);
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" "
        "height=\"800\" viewBox=\"0 0 800 800\">\n"
     << "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"#999999\" stroke-width=\"2\" "
        "stroke-dasharray=\"7 5\" points=\"";
  for (const Waypoint& w : path.waypoints) {
    os << svg_num(mx(w.x)) << ',' << svg_num(my(w.y)) << ' ';
  }
  os << "\"/>\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    os << "<polyline fill=\"none\" stroke=\"" << kPalette[i % kPaletteSize]
       << "\" stroke-width=\"1.2\" points=\"";
    for (const TraceSample& s : traces[i].samples) {
      os << svg_num(mx(s.x)) << ',' << svg_num(my(s.y)) << ' ';
    }
    os << "\"/>\n";
  }
  os << "<text x=\"30\" y=\"20\" font-family=\"sans-serif\" "
        "font-size=\"14\">dashed: reference path, solid: trials ("
     << traces.size() << ")</text>\n";
  os << "</svg>\n";
}

void write_phase_svg(const std::vector<TrialTrace>& traces, std::ostream& os) {
  Box box;
  for (const TrialTrace& t : traces) {
    for (const TraceSample& s : t.samples) box.add(s.beta, s.r);
  }
  if (box.empty()) box = Box{-1, 1, -1, 1};
  const double margin = 50.0, size = 800.0, inner = size - 2 * margin;
  const double spanx = std::max(box.xmax - box.xmin, 1e-9);
  const double spany = std::max(box.ymax - box.ymin, 1e-9);
  auto mx = [&](double b) { return margin + (b - box.xmin) / spanx * inner; };
  auto my = [&](double r) {
    return size - margin - (r - box.ymin) / spany * inner;
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" "
        "height=\"800\" viewBox=\"0 0 800 800\">\n"
     << "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
  if (box.xmin < 0.0 && box.xmax > 0.0) {
    os << "<line x1=\"" << svg_num(mx(0)) << "\" y1=\"" << svg_num(margin)
       << "\" x2=\"" << svg_num(mx(0)) << "\" y2=\"" << svg_num(size - margin)
       << "\" stroke=\"#cccccc\"/>\n";
  }
  if (box.ymin < 0.0 && box.ymax > 0.0) {
    os << "<line x1=\"" << svg_num(margin) << "\" y1=\"" << svg_num(my(0))
       << "\" x2=\"" << svg_num(size - margin) << "\" y2=\"" << svg_num(my(0))
       << "\" stroke=\"#cccccc\"/>\n";
  }
  for (std::size_t i = 0; i < traces.size(); ++i) {
    os << "<polyline fill=\"none\" stroke=\"" << kPalette[i % kPaletteSize]
       << "\" stroke-width=\"1\" points=\"";
    for (const TraceSample& s : traces[i].samples) {
      os << svg_num(mx(s.beta)) << ',' << svg_num(my(s.r)) << ' ';
    }
    os << "\"/>\n";
  }
  os << "<text x=\"" << svg_num(size / 2) << "\" y=\"" << svg_num(size - 12)
     << "\" font-family=\"sans-serif\" font-size=\"14\" "
        "text-anchor=\"middle\">beta [rad]</text>\n";
  os << "<text x=\"16\" y=\"" << svg_num(size / 2)
     << "\" font-family=\"sans-serif\" font-size=\"14\" "
        "text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << svg_num(size / 2) << ")\">r [rad/s]</text>\n";
  os << "<text x=\"" << svg_num(margin) << "\" y=\"" << svg_num(size - 30)
     << "\" font-family=\"sans-serif\" font-size=\"11\">" << g17(box.xmin)
     << "</text>\n";
  os << "<text x=\"" << svg_num(size - margin) << "\" y=\""
     << svg_num(size - 30)
     << "\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"end\">"
     << g17(box.xmax) << "</text>\n";
  os << "</svg>\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& out_dir, const RunConfig& cfg,
                    const std::vector<std::string>& files,
                    const std::string& started_at,
                    const std::string& finished_at) {
  json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = cfg.seed;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["config"] = json::array();
  {
    std::istringstream ss(dump_run_config(cfg));
    std::string line;
    while (std::getline(ss, line)) j["config"].push_back(line);
  }
  j["files"] = json::array();
  for (const std::string& f : files) {
    const fs::path p = fs::path(out_dir) / f;
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(p.string())));
    j["files"].push_back({{"name", f},
                          {"bytes", static_cast<std::uint64_t>(
                                        fs::file_size(p))},
                          {"fnv1a64", hex}});
  }
  atomic_write_file((fs::path(out_dir) / "manifest.json").string(),
                    j.dump(2) + "\n");
}

bool verify_manifest(const std::string& out_dir, std::string* error) {
  auto fail = [&](const std::string& msg) {
    if (error != nullptr) *error = msg;
    return false;
  };
  const fs::path mf = fs::path(out_dir) / "manifest.json";
  std::ifstream is(mf);
  if (!is) return fail("missing manifest: " + mf.string());
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    return fail(std::string("bad manifest json: ") + e.what());
  }
  for (const json& f : j.value("files", json::array())) {
    const std::string name = f.value("name", "");
    const fs::path p = fs::path(out_dir) / name;
    if (!fs::exists(p)) return fail("missing file: " + name);
    if (fs::file_size(p) != f.value("bytes", std::uint64_t{0})) {
      return fail("size mismatch: " + name);
    }
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(p.string())));
    if (f.value("fnv1a64", "") != hex) return fail("hash mismatch: " + name);
  }
  return true;
}

RunLock::RunLock(const std::string& out_dir)
    : path_((fs::path(out_dir) / ".lock").string()) {
  fs::create_directories(out_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw std::runtime_error("out_dir '" + out_dir +
                             "' is locked by another run (remove " + path_ +
                             " if stale)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  const ssize_t written = ::write(fd, pid.data(), pid.size());
  (void)written;
  ::close(fd);
  held_ = true;
}

RunLock::~RunLock() {
  if (held_) ::unlink(path_.c_str());
}

}  // namespace driftsim
