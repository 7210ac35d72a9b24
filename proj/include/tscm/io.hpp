#pragma once

// Plain-text persistence for meshes, fields, measurement sets, run logs
// and experiment presets. Doubles are written in shortest round-trip
// form, so save -> load -> save is byte-identical.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tscm/presets.hpp"

namespace tscm {

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
};

namespace ioutil {

inline std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline std::string fmt(const Complex& z) {
  return fmt(z.real()) + " " + fmt(z.imag());
}

inline double parse_double(const std::string& tok, const std::string& path,
                           int line) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw IoError(path, line, "bad number '" + tok + "'");
  }
  return x;
}

inline long long parse_int(const std::string& tok, const std::string& path,
                           int line) {
  long long x = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw IoError(path, line, "bad integer '" + tok + "'");
  }
  return x;
}

inline std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

class LineReader {
 public:
  LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw std::runtime_error("cannot open " + path);
  }
  // Next non-empty line; throws on end of file.
  std::string require_line(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      if (!line.empty()) return line;
    }
    throw IoError(path_, lineno_, std::string("unexpected end of file, expected ") + what);
  }
  std::optional<std::string> next_line() {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      if (!line.empty()) return line;
    }
    return std::nullopt;
  }
  int lineno() const { return lineno_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  int lineno_ = 0;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace ioutil

// ---------------------------------------------------------------------
// Mesh: "nodes N triangles T bedges B", then node/triangle/edge lines.

inline void save_mesh(const std::string& path, const Mesh& mesh) {
  auto out = ioutil::open_out(path);
  out << "nodes " << mesh.n_nodes() << " triangles " << mesh.n_triangles()
      << " bedges " << mesh.boundary_edges.size() << "\n";
  for (const auto& p : mesh.nodes) {
    out << ioutil::fmt(p.x()) << " " << ioutil::fmt(p.y()) << "\n";
  }
  for (const auto& t : mesh.triangles) {
    out << t[0] << " " << t[1] << " " << t[2] << "\n";
  }
  for (const auto& e : mesh.boundary_edges) {
    out << e.a << " " << e.b << " " << e.arc << "\n";
  }
}

inline Mesh load_mesh(const std::string& path) {
  ioutil::LineReader in(path);
  const auto head = ioutil::split(in.require_line("mesh header"));
  if (head.size() != 6 || head[0] != "nodes" || head[2] != "triangles" ||
      head[4] != "bedges") {
    throw IoError(path, in.lineno(), "bad mesh header");
  }
  const auto n = ioutil::parse_int(head[1], path, in.lineno());
  const auto t = ioutil::parse_int(head[3], path, in.lineno());
  const auto b = ioutil::parse_int(head[5], path, in.lineno());
  Mesh mesh;
  for (long long i = 0; i < n; ++i) {
    const auto tok = ioutil::split(in.require_line("node line"));
    if (tok.size() != 2) throw IoError(path, in.lineno(), "bad node line");
    mesh.nodes.emplace_back(ioutil::parse_double(tok[0], path, in.lineno()),
                            ioutil::parse_double(tok[1], path, in.lineno()));
  }
  for (long long i = 0; i < t; ++i) {
    const auto tok = ioutil::split(in.require_line("triangle line"));
    if (tok.size() != 3) throw IoError(path, in.lineno(), "bad triangle line");
    mesh.triangles.push_back(
        {static_cast<int>(ioutil::parse_int(tok[0], path, in.lineno())),
         static_cast<int>(ioutil::parse_int(tok[1], path, in.lineno())),
         static_cast<int>(ioutil::parse_int(tok[2], path, in.lineno()))});
  }
  for (long long i = 0; i < b; ++i) {
    const auto tok = ioutil::split(in.require_line("boundary edge line"));
    if (tok.size() != 3) throw IoError(path, in.lineno(), "bad boundary edge");
    mesh.boundary_edges.push_back(
        {static_cast<int>(ioutil::parse_int(tok[0], path, in.lineno())),
         static_cast<int>(ioutil::parse_int(tok[1], path, in.lineno())),
         static_cast<int>(ioutil::parse_int(tok[2], path, in.lineno()))});
  }
  mesh.finalize();
  return mesh;
}

// ---------------------------------------------------------------------
// Field dumps: one line per node, "x y v" or "x y re im"; the plotting
// format used for all CLI field outputs (no header).

inline void dump_field(const std::string& path, const RealField& f) {
  f.check_size();
  auto out = ioutil::open_out(path);
  for (int v = 0; v < f.size(); ++v) {
    const Vec2& p = f.mesh->nodes[v];
    out << ioutil::fmt(p.x()) << " " << ioutil::fmt(p.y()) << " "
        << ioutil::fmt(f[v]) << "\n";
  }
}

inline void dump_field(const std::string& path, const ComplexField& f) {
  f.check_size();
  auto out = ioutil::open_out(path);
  for (int v = 0; v < f.size(); ++v) {
    const Vec2& p = f.mesh->nodes[v];
    out << ioutil::fmt(p.x()) << " " << ioutil::fmt(p.y()) << " "
        << ioutil::fmt(f[v]) << "\n";
  }
}

// Versioned field persistence with a lossless round trip.

inline void save_field(const std::string& path, const RealField& f) {
  f.check_size();
  auto out = ioutil::open_out(path);
  out << "tscm-field v1 nodes " << f.size() << " complex 0\n";
  for (int v = 0; v < f.size(); ++v) {
    const Vec2& p = f.mesh->nodes[v];
    out << ioutil::fmt(p.x()) << " " << ioutil::fmt(p.y()) << " "
        << ioutil::fmt(f[v]) << "\n";
  }
}

inline RealField load_field(const std::string& path, const Mesh& mesh) {
  ioutil::LineReader in(path);
  const auto head = ioutil::split(in.require_line("field header"));
  if (head.size() != 6 || head[0] != "tscm-field" || head[1] != "v1" ||
      head[2] != "nodes" || head[4] != "complex") {
    throw IoError(path, in.lineno(), "bad field header (version mismatch?)");
  }
  if (ioutil::parse_int(head[3], path, in.lineno()) != mesh.n_nodes() ||
      head[5] != "0") {
    throw IoError(path, in.lineno(), "field does not match mesh");
  }
  Eigen::VectorXd vals(mesh.n_nodes());
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    const auto tok = ioutil::split(in.require_line("field line"));
    if (tok.size() != 3) throw IoError(path, in.lineno(), "bad field line");
    vals[v] = ioutil::parse_double(tok[2], path, in.lineno());
  }
  return RealField(mesh, std::move(vals));
}

// ---------------------------------------------------------------------
// Measurements: "omegas K coils C nodes B seed S rho R", then for each
// (omega, coil) in plan order B lines "re im" along the boundary loop.

inline void save_measurements(const std::string& path,
                              const MeasurementSet& ms) {
  ms.validate();
  auto out = ioutil::open_out(path);
  out << "omegas " << ms.plan.n_omegas() << " coils " << ms.plan.n_coils()
      << " nodes " << ms.n_boundary << " seed " << ms.seed << " rho "
      << ioutil::fmt(ms.rho) << "\n";
  for (const auto& tr : ms.m) {
    for (int i = 0; i < ms.n_boundary; ++i) {
      out << ioutil::fmt(tr[i]) << "\n";
    }
  }
}

inline MeasurementSet load_measurements(const std::string& path,
                                        const ExcitationPlan& plan) {
  ioutil::LineReader in(path);
  const auto head = ioutil::split(in.require_line("measurement header"));
  if (head.size() != 10 || head[0] != "omegas" || head[2] != "coils" ||
      head[4] != "nodes" || head[6] != "seed" || head[8] != "rho") {
    throw IoError(path, in.lineno(), "bad measurement header");
  }
  MeasurementSet ms;
  ms.plan = plan;
  if (ioutil::parse_int(head[1], path, in.lineno()) != plan.n_omegas() ||
      ioutil::parse_int(head[3], path, in.lineno()) != plan.n_coils()) {
    throw IoError(path, in.lineno(), "measurement file does not match plan");
  }
  ms.n_boundary =
      static_cast<int>(ioutil::parse_int(head[5], path, in.lineno()));
  ms.seed = static_cast<std::uint64_t>(
      ioutil::parse_int(head[7], path, in.lineno()));
  ms.rho = ioutil::parse_double(head[9], path, in.lineno());
  ms.m.resize(plan.n_cases());
  for (int cs = 0; cs < plan.n_cases(); ++cs) {
    ms.m[cs].resize(ms.n_boundary);
    for (int i = 0; i < ms.n_boundary; ++i) {
      const auto tok = ioutil::split(in.require_line("trace line"));
      if (tok.size() != 2) throw IoError(path, in.lineno(), "bad trace line");
      ms.m[cs][i] = Complex(ioutil::parse_double(tok[0], path, in.lineno()),
                            ioutil::parse_double(tok[1], path, in.lineno()));
    }
  }
  ms.validate();
  return ms;
}

// ---------------------------------------------------------------------
// Run logs as CSV; stage summaries as "lambda,iters".

inline void save_runlog(const std::string& path, const RunLog& log) {
  auto out = ioutil::open_out(path);
  out << "n,lambda,fidelity,reg,total,gnorm2_sl2,gnorm2_phi,step,seconds\n";
  for (const auto& r : log.iters) {
    out << r.n << "," << ioutil::fmt(r.lambda) << "," << ioutil::fmt(r.fidelity)
        << "," << ioutil::fmt(r.reg) << "," << ioutil::fmt(r.total) << ","
        << ioutil::fmt(r.gnorm2_sl2) << "," << ioutil::fmt(r.gnorm2_phi) << ","
        << ioutil::fmt(r.step) << "," << ioutil::fmt(r.seconds) << "\n";
  }
}

inline std::vector<IterRecord> load_runlog(const std::string& path) {
  ioutil::LineReader in(path);
  const std::string head = in.require_line("runlog header");
  if (head !=
      "n,lambda,fidelity,reg,total,gnorm2_sl2,gnorm2_phi,step,seconds") {
    throw IoError(path, in.lineno(), "bad runlog header");
  }
  std::vector<IterRecord> rows;
  while (auto line = in.next_line()) {
    std::vector<std::string> tok;
    std::string cur;
    std::istringstream is(*line);
    while (std::getline(is, cur, ',')) tok.push_back(cur);
    if (tok.size() != 9) throw IoError(path, in.lineno(), "bad runlog row");
    IterRecord r;
    r.n = static_cast<int>(ioutil::parse_int(tok[0], path, in.lineno()));
    r.lambda = ioutil::parse_double(tok[1], path, in.lineno());
    r.fidelity = ioutil::parse_double(tok[2], path, in.lineno());
    r.reg = ioutil::parse_double(tok[3], path, in.lineno());
    r.total = ioutil::parse_double(tok[4], path, in.lineno());
    r.gnorm2_sl2 = ioutil::parse_double(tok[5], path, in.lineno());
    r.gnorm2_phi = ioutil::parse_double(tok[6], path, in.lineno());
    r.step = ioutil::parse_double(tok[7], path, in.lineno());
    r.seconds = ioutil::parse_double(tok[8], path, in.lineno());
    rows.push_back(r);
  }
  return rows;
}

inline void save_stage_summary(const std::string& path, const RunLog& log) {
  auto out = ioutil::open_out(path);
  out << "lambda,iters\n";
  for (const auto& s : log.stages) {
    out << ioutil::fmt(s.lambda) << "," << s.iters << "\n";
  }
}

// Equality of run logs with the wall-time column ignored; wall time is
// the one legitimately non-reproducible column.
inline bool runlogs_equal(const std::vector<IterRecord>& a,
                          const std::vector<IterRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].n != b[i].n || a[i].lambda != b[i].lambda ||
        a[i].fidelity != b[i].fidelity || a[i].reg != b[i].reg ||
        a[i].total != b[i].total || a[i].gnorm2_sl2 != b[i].gnorm2_sl2 ||
        a[i].gnorm2_phi != b[i].gnorm2_phi || a[i].step != b[i].step) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------
// Preset files: "key = value" lines grouped in sections.

inline void save_preset(const std::string& path, const ExperimentPreset& p) {
  auto out = ioutil::open_out(path);
  out << "# tscm-preset v1\n";
  out << "[meta]\n";
  out << "name = " << p.name << "\n";
  out << "[mesh]\n";
  out << "radius = " << ioutil::fmt(p.radius) << "\n";
  out << "target_h = " << ioutil::fmt(p.target_h) << "\n";
  out << "n_arcs = " << p.n_arcs << "\n";
  out << "data_refine = " << p.data_refine << "\n";
  out << "[phantom]\n";
  out << "sigma1 = " << ioutil::fmt(p.phantom.sigma1) << "\n";
  out << "sigma2 = " << ioutil::fmt(p.phantom.sigma2) << "\n";
  for (const auto& d : p.phantom.disks) {
    out << "disk = " << ioutil::fmt(d.center.x()) << " "
        << ioutil::fmt(d.center.y()) << " " << ioutil::fmt(d.radius) << "\n";
  }
  for (const auto& a : p.phantom.annuli) {
    out << "annulus = " << ioutil::fmt(a.center.x()) << " "
        << ioutil::fmt(a.center.y()) << " " << ioutil::fmt(a.r_inner) << " "
        << ioutil::fmt(a.r_outer) << "\n";
  }
  if (p.has_initial_guess) {
    out << "[init]\n";
    for (const auto& d : p.initial_guess.disks) {
      out << "disk = " << ioutil::fmt(d.center.x()) << " "
          << ioutil::fmt(d.center.y()) << " " << ioutil::fmt(d.radius) << "\n";
    }
    for (const auto& a : p.initial_guess.annuli) {
      out << "annulus = " << ioutil::fmt(a.center.x()) << " "
          << ioutil::fmt(a.center.y()) << " " << ioutil::fmt(a.r_inner) << " "
          << ioutil::fmt(a.r_outer) << "\n";
    }
  }
  out << "[plan]\n";
  out << "n_omegas = " << p.n_omegas << "\n";
  out << "amplitude = " << ioutil::fmt(p.amplitude) << "\n";
  out << "mu_mode = " << p.mu_mode << "\n";
  out << "[reg]\n";
  out << "alpha = " << ioutil::fmt(p.reg.alpha) << "\n";
  out << "beta = " << ioutil::fmt(p.reg.beta) << "\n";
  out << "eps_mode = " << (p.eps_auto ? "h2" : "explicit") << "\n";
  if (!p.eps_auto) {
    out << "eps_heaviside = " << ioutil::fmt(p.reg.eps_heaviside) << "\n";
    out << "eps_tv = " << ioutil::fmt(p.reg.eps_tv) << "\n";
  }
  out << "normalize_fidelity = " << (p.normalize_fidelity ? 1 : 0) << "\n";
  out << "h0_projection = " << (p.reg.h0_projection ? 1 : 0) << "\n";
  out << "[tscm]\n";
  out << "delta_lambda = " << ioutil::fmt(p.tscm.delta_lambda) << "\n";
  out << "n_lambda_stages = " << p.tscm.n_lambda_stages << "\n";
  out << "tau1 = " << ioutil::fmt(p.tscm.tau1) << "\n";
  out << "tau2 = " << ioutil::fmt(p.tscm.tau2) << "\n";
  out << "delta1 = " << ioutil::fmt(p.tscm.delta1) << "\n";
  out << "delta2 = " << ioutil::fmt(p.tscm.delta2) << "\n";
  out << "s_init = " << ioutil::fmt(p.tscm.s_init) << "\n";
  out << "max_inner_iters = " << p.tscm.max_inner_iters << "\n";
  out << "k_max_halvings = " << p.tscm.k_max_halvings << "\n";
  out << "lambda_stage_ladder =";
  for (int v : p.lambda_stage_ladder) out << " " << v;
  out << "\n";
  out << "[noise]\n";
  out << "rho = " << ioutil::fmt(p.rho) << "\n";
  out << "seed = " << p.seed << "\n";
  out << "ladder =";
  for (double v : p.noise_ladder) out << " " << ioutil::fmt(v);
  out << "\n";
}

inline ExperimentPreset load_preset(const std::string& path) {
  ioutil::LineReader in(path);
  ExperimentPreset p;
  p.phantom.disks.clear();
  p.phantom.annuli.clear();
  p.lambda_stage_ladder.clear();
  p.noise_ladder.clear();
  std::string section;
  while (auto maybe = in.next_line()) {
    std::string line = *maybe;
    if (line[0] == '#') continue;
    if (line[0] == '[') {
      section = line;
      if (section == "[init]") p.has_initial_guess = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(path, in.lineno(), "expected 'key = value'");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const auto tok = ioutil::split(val);
    const int ln = in.lineno();
    auto num = [&](int i = 0) { return ioutil::parse_double(tok.at(i), path, ln); };
    auto inum = [&](int i = 0) {
      return static_cast<int>(ioutil::parse_int(tok.at(i), path, ln));
    };
    try {
      if (section == "[meta]" && key == "name") {
        p.name = val;
      } else if (section == "[mesh]") {
        if (key == "radius") p.radius = num();
        else if (key == "target_h") p.target_h = num();
        else if (key == "n_arcs") p.n_arcs = inum();
        else if (key == "data_refine") p.data_refine = inum();
        else throw IoError(path, ln, "unknown mesh key " + key);
      } else if (section == "[phantom]" || section == "[init]") {
        PhantomSpec& ph =
            (section == "[phantom]") ? p.phantom : p.initial_guess;
        if (key == "sigma1") p.phantom.sigma1 = num();
        else if (key == "sigma2") p.phantom.sigma2 = num();
        else if (key == "disk") ph.disks.push_back({Vec2(num(0), num(1)), num(2)});
        else if (key == "annulus")
          ph.annuli.push_back({Vec2(num(0), num(1)), num(2), num(3)});
        else throw IoError(path, ln, "unknown phantom key " + key);
      } else if (section == "[plan]") {
        if (key == "n_omegas") p.n_omegas = inum();
        else if (key == "amplitude") p.amplitude = num();
        else if (key == "mu_mode") p.mu_mode = val;
        else throw IoError(path, ln, "unknown plan key " + key);
      } else if (section == "[reg]") {
        if (key == "alpha") p.reg.alpha = num();
        else if (key == "beta") p.reg.beta = num();
        else if (key == "eps_mode") p.eps_auto = (val == "h2");
        else if (key == "eps_heaviside") p.reg.eps_heaviside = num();
        else if (key == "eps_tv") p.reg.eps_tv = num();
        else if (key == "normalize_fidelity") p.normalize_fidelity = inum() != 0;
        else if (key == "h0_projection") p.reg.h0_projection = inum() != 0;
        else throw IoError(path, ln, "unknown reg key " + key);
      } else if (section == "[tscm]") {
        if (key == "delta_lambda") p.tscm.delta_lambda = num();
        else if (key == "n_lambda_stages") p.tscm.n_lambda_stages = inum();
        else if (key == "tau1") p.tscm.tau1 = num();
        else if (key == "tau2") p.tscm.tau2 = num();
        else if (key == "delta1") p.tscm.delta1 = num();
        else if (key == "delta2") p.tscm.delta2 = num();
        else if (key == "s_init") p.tscm.s_init = num();
        else if (key == "max_inner_iters") p.tscm.max_inner_iters = inum();
        else if (key == "k_max_halvings") p.tscm.k_max_halvings = inum();
        else if (key == "lambda_stage_ladder") {
          for (std::size_t i = 0; i < tok.size(); ++i) {
            p.lambda_stage_ladder.push_back(inum(static_cast<int>(i)));
          }
        } else {
          throw IoError(path, ln, "unknown tscm key " + key);
        }
      } else if (section == "[noise]") {
        if (key == "rho") p.rho = num();
        else if (key == "seed")
          p.seed = static_cast<std::uint64_t>(ioutil::parse_int(tok.at(0), path, ln));
        else if (key == "ladder") {
          for (std::size_t i = 0; i < tok.size(); ++i) {
            p.noise_ladder.push_back(num(static_cast<int>(i)));
          }
        } else {
          throw IoError(path, ln, "unknown noise key " + key);
        }
      } else {
        throw IoError(path, ln, "key outside a known section: " + key);
      }
    } catch (const std::out_of_range&) {
      throw IoError(path, ln, "missing values for key " + key);
    }
  }
  p.initial_guess.sigma1 = p.phantom.sigma1;
  p.initial_guess.sigma2 = p.phantom.sigma2;
  p.validate();
  return p;
}

}  // namespace tscm
