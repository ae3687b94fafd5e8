#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "odmn/equilibrium.hpp"
#include "odmn/error.hpp"
#include "odmn/material_laws.hpp"
#include "odmn/network.hpp"
#include "odmn/texture.hpp"
#include "odmn/trainer.hpp"

namespace odmn::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Shortest decimal that reads back to the same double.
inline std::string fmt(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed for " + path.string());
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string content_hash(const std::string &bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

namespace detail {

inline json parse(const std::string &text, const std::string &what) {
  try {
    return json::parse(text);
  } catch (const json::exception &e) {
    throw DataError(what + ": " + e.what());
  }
}

inline void check_header(const json &j, const std::string &format, const std::string &what) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format)
    throw DataError(what + ": expected format \"" + format + "\"");
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw DataError(what + ": missing version");
  const int v = j["version"].get<int>();
  if (v != kFormatVersion) throw DataError(what + ": unsupported version " + std::to_string(v));
}

template <typename T> T get(const json &j, const char *key, const std::string &what) {
  if (!j.contains(key)) throw DataError(what + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &) {
    throw DataError(what + ": field \"" + key + "\" has the wrong type");
  }
}

inline double finite(double x, const std::string &what) {
  if (!std::isfinite(x)) throw DataError(what + ": non-finite value");
  return x;
}

inline bool is_cubic(const StiffnessMatrix &c) { return c == cubic_stiffness(c(0, 0), c(0, 1), c(3, 3)); }

inline json stiffness_to_json(const StiffnessMatrix &c) {
  if (is_cubic(c)) return json{{"C11", c(0, 0)}, {"C12", c(0, 1)}, {"C44", c(3, 3)}};
  json a = json::array();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) a.push_back(c(i, j));
  return a;
}

inline StiffnessMatrix stiffness_from_json(const json &j, const std::string &what) {
  if (j.is_object()) {
    return cubic_stiffness(finite(get<double>(j, "C11", what), what), finite(get<double>(j, "C12", what), what),
                           finite(get<double>(j, "C44", what), what));
  }
  if (!j.is_array() || j.size() != 36) throw DataError(what + ": stiffness needs {C11, C12, C44} or 36 values");
  StiffnessMatrix c;
  for (int k = 0; k < 36; ++k) {
    if (!j[k].is_number()) throw DataError(what + ": stiffness entry is not a number");
    c(k / 6, k % 6) = finite(j[k].get<double>(), what);
  }
  return c;
}

inline void check_symmetric(const StiffnessMatrix &c, const std::string &what) {
  if ((c - c.transpose()).norm() > 1e-9 * c.norm()) throw DataError(what + ": stiffness is not symmetric");
}

inline Mat3 mat3_from_json(const json &j, const std::string &what) {
  Mat3 m;
  if (j.is_array() && j.size() == 3 && j[0].is_array()) {
    for (int r = 0; r < 3; ++r) {
      if (!j[r].is_array() || j[r].size() != 3) throw DataError(what + ": expected a 3x3 matrix");
      for (int c = 0; c < 3; ++c) m(r, c) = finite(j[r][c].get<double>(), what);
    }
    return m;
  }
  if (j.is_array() && j.size() == 9) {
    for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = finite(j[k].get<double>(), what);
    return m;
  }
  throw DataError(what + ": expected a 3x3 matrix");
}

} // namespace detail

// ---------------------------------------------------------------- checkpoint

struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::string dataset_hash;
  int epochs = 0;
};

struct Checkpoint {
  ParameterSet params;
  CheckpointInfo info;
};

inline std::string checkpoint_to_string(const Checkpoint &c) {
  c.params.validate();
  json j;
  j["format"] = "odmn-checkpoint";
  j["version"] = kFormatVersion;
  j["depth"] = c.params.depth;
  j["z"] = c.params.z;
  j["alpha"] = c.params.alpha;
  j["beta"] = c.params.beta;
  j["gamma"] = c.params.gamma;
  j["theta"] = c.params.theta;
  j["phi"] = c.params.phi;
  j["provenance"] = {{"seed", c.info.seed}, {"dataset_hash", c.info.dataset_hash}, {"epochs", c.info.epochs}};
  return j.dump(2) + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string &text, const std::string &what = "checkpoint") {
  const json j = detail::parse(text, what);
  detail::check_header(j, "odmn-checkpoint", what);
  Checkpoint c;
  const int depth = detail::get<int>(j, "depth", what);
  if (depth < 1 || depth > Topology::kMaxDepth) throw DataError(what + ": depth out of range");
  c.params = ParameterSet(depth);
  c.params.z = detail::get<std::vector<double>>(j, "z", what);
  c.params.alpha = detail::get<std::vector<double>>(j, "alpha", what);
  c.params.beta = detail::get<std::vector<double>>(j, "beta", what);
  c.params.gamma = detail::get<std::vector<double>>(j, "gamma", what);
  c.params.theta = detail::get<std::vector<double>>(j, "theta", what);
  c.params.phi = detail::get<std::vector<double>>(j, "phi", what);
  try {
    c.params.validate();
  } catch (const DataError &e) {
    throw DataError(what + ": " + e.what());
  }
  if (j.contains("provenance")) {
    const json &p = j["provenance"];
    c.info.seed = p.value("seed", std::uint64_t{0});
    c.info.dataset_hash = p.value("dataset_hash", std::string{});
    c.info.epochs = p.value("epochs", 0);
  }
  return c;
}

inline void save_checkpoint(const std::filesystem::path &path, const Checkpoint &c) {
  write_file(path, checkpoint_to_string(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
  return checkpoint_from_string(read_file(path), path.string());
}

// ------------------------------------------------------------------- dataset

/// JSON Lines, one self-describing sample per line. Stiffness in GPa.
inline std::string dataset_to_string(const Dataset &d) {
  std::string out;
  for (const Sample &s : d.samples) {
    json r;
    r["format"] = "odmn-sample";
    r["version"] = kFormatVersion;
    r["units"] = "GPa";
    r["provenance"] = d.provenance;
    r["phase1"] = detail::stiffness_to_json(s.phase1);
    if (s.phase2) r["phase2"] = detail::stiffness_to_json(*s.phase2);
    json t = json::array();
    for (int i = 0; i < 6; ++i)
      for (int k = 0; k < 6; ++k) t.push_back(s.target(i, k));
    r["target"] = std::move(t);
    out += r.dump() + "\n";
  }
  return out;
}

inline Dataset dataset_from_string(const std::string &text, const std::string &what = "dataset") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Dataset d;
  d.provenance.clear();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = what + " line " + std::to_string(line_no);
    const json j = detail::parse(line, where);
    detail::check_header(j, "odmn-sample", where);
    if (j.value("units", std::string{}) != "GPa") throw DataError(where + ": units must be \"GPa\"");
    if (!j.contains("phase1") || !j.contains("target")) throw DataError(where + ": record needs phase1 and target");
    const std::string prov = j.value("provenance", std::string{"unknown"});
    if (d.samples.empty()) d.provenance = prov;
    if (prov != d.provenance) d.provenance = "mixed";
    Sample s;
    s.phase1 = detail::stiffness_from_json(j["phase1"], where);
    if (j.contains("phase2")) s.phase2 = detail::stiffness_from_json(j["phase2"], where);
    const json &t = j["target"];
    if (!t.is_array() || t.size() != 36) throw DataError(where + ": target needs 36 values");
    s.target = detail::stiffness_from_json(t, where);
    detail::check_symmetric(s.target, where);
    detail::check_symmetric(s.phase1, where);
    if (s.phase2) detail::check_symmetric(*s.phase2, where);
    if (s.target.norm() == 0.0) throw DataError(where + ": target is zero");
    if (!d.samples.empty() && d.samples.front().phase2.has_value() != s.phase2.has_value())
      throw DataError(where + ": mixes single-phase and two-phase samples");
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw DataError(what + ": no samples");
  return d;
}

inline void save_dataset(const std::filesystem::path &path, const Dataset &d) { write_file(path, dataset_to_string(d)); }

inline Dataset load_dataset(const std::filesystem::path &path) {
  return dataset_from_string(read_file(path), path.string());
}

// ------------------------------------------------------------------ material

/// One local law per phase; a second phase, when present, goes to the odd
/// nodes. Stresses and moduli in MPa.
struct MaterialSpec {
  std::vector<LawPtr> phases;
};

inline LawPtr law_from_json(const json &j, const std::string &what) {
  const std::string law = detail::get<std::string>(j, "law", what);
  if (law == "elastic" || law == "linear_elastic") {
    if (!j.contains("stiffness")) throw DataError(what + ": missing field \"stiffness\"");
    const StiffnessMatrix c = detail::stiffness_from_json(j["stiffness"], what);
    detail::check_symmetric(c, what);
    if (law == "elastic") return std::make_shared<ElasticLaw>(c);
    return std::make_shared<LinearElasticLaw>(c);
  }
  if (law == "crystal_plasticity") {
    PhenoPlasticityParams p = PhenoPlasticityParams::aa6022_t4();
    const auto opt = [&](const char *key, double &field) {
      if (j.contains(key)) field = detail::finite(detail::get<double>(j, key, what), what);
    };
    if (j.contains("slip_systems")) p.slip_systems = detail::get<int>(j, "slip_systems", what);
    opt("h0", p.h0);
    opt("xi_inf", p.xi_inf);
    opt("xi0", p.xi0);
    opt("n", p.n);
    opt("a", p.a);
    opt("gamma_dot0", p.gamma_dot0);
    opt("h_int", p.h_int);
    opt("C11", p.c11);
    opt("C12", p.c12);
    opt("C44", p.c44);
    if (j.contains("h_slsl")) {
      const auto v = detail::get<std::vector<double>>(j, "h_slsl", what);
      if (v.size() != 7) throw DataError(what + ": h_slsl needs 7 entries");
      std::copy(v.begin(), v.end(), p.h_slsl.begin());
    }
    try {
      return std::make_shared<CrystalPlasticityLaw>(p);
    } catch (const DataError &e) {
      throw DataError(what + ": " + e.what());
    }
  }
  throw DataError(what + ": unknown law \"" + law + "\"");
}

inline MaterialSpec material_from_string(const std::string &text, const std::string &what = "material") {
  const json j = detail::parse(text, what);
  detail::check_header(j, "odmn-material", what);
  if (j.value("units", std::string{}) != "MPa") throw DataError(what + ": units must be \"MPa\"");
  if (!j.contains("phases") || !j["phases"].is_array() || j["phases"].empty() || j["phases"].size() > 2)
    throw DataError(what + ": phases must list one or two laws");
  MaterialSpec m;
  for (const json &p : j["phases"]) m.phases.push_back(law_from_json(p, what));
  return m;
}

inline MaterialSpec load_material(const std::filesystem::path &path) {
  return material_from_string(read_file(path), path.string());
}

inline OnlineModel build_online_model(const ParameterSet &params, const MaterialSpec &m) {
  return build_online_model(params, m.phases.at(0), m.phases.size() > 1 ? m.phases[1] : nullptr);
}

// ----------------------------------------------------------------- load path

/// Explicit steps, or a ramp of one component of F from its identity value
/// at a constant rate: steps {F, dt}, or ramp {component, rate, final, steps}.
inline std::vector<LoadStep> load_path_from_string(const std::string &text, const std::string &what = "load path") {
  const json j = detail::parse(text, what);
  detail::check_header(j, "odmn-loadpath", what);
  std::vector<LoadStep> steps;
  if (j.contains("steps")) {
    if (!j["steps"].is_array() || j["steps"].empty()) throw DataError(what + ": steps must be a non-empty array");
    std::size_t k = 0;
    for (const json &s : j["steps"]) {
      const std::string where = what + " step " + std::to_string(++k);
      if (!s.is_object() || !s.contains("F")) throw DataError(where + ": missing F");
      LoadStep st{detail::mat3_from_json(s["F"], where), detail::finite(detail::get<double>(s, "dt", where), where)};
      if (!(st.f.determinant() > 0.0)) throw DataError(where + ": det F <= 0");
      if (!(st.dt > 0.0)) throw DataError(where + ": dt must be positive");
      steps.push_back(st);
    }
  } else if (j.contains("ramp")) {
    const json &r = j["ramp"];
    const std::string comp = detail::get<std::string>(r, "component", what);
    if (comp.size() != 3 || comp[0] != 'F' || comp[1] < '1' || comp[1] > '3' || comp[2] < '1' || comp[2] > '3')
      throw DataError(what + ": component must be F11 .. F33");
    const int row = comp[1] - '1', col = comp[2] - '1';
    const double rate = detail::finite(detail::get<double>(r, "rate", what), what);
    const double final_value = detail::finite(detail::get<double>(r, "final", what), what);
    const int n = detail::get<int>(r, "steps", what);
    if (n < 1) throw DataError(what + ": ramp needs at least one step");
    const double start = row == col ? 1.0 : 0.0;
    const double dt = (final_value - start) / (rate * n);
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DataError(what + ": rate and final value give a non-positive dt");
    for (int k = 1; k <= n; ++k) {
      LoadStep st;
      st.f(row, col) = start + (final_value - start) * double(k) / double(n);
      st.dt = dt;
      if (!(st.f.determinant() > 0.0)) throw DataError(what + ": ramp reaches det F <= 0");
      steps.push_back(st);
    }
  } else {
    throw DataError(what + ": needs \"steps\" or \"ramp\"");
  }
  return steps;
}

inline std::vector<LoadStep> load_load_path(const std::filesystem::path &path) {
  return load_path_from_string(read_file(path), path.string());
}

// ----------------------------------------------------------------------- CSV

inline std::string curves_csv(const std::vector<EpochErrors> &curves) {
  std::string out = "epoch,train_error,val_error\n";
  for (const auto &e : curves) out += std::to_string(e.epoch) + "," + fmt(e.train_error) + "," + fmt(e.val_error) + "\n";
  return out;
}

inline std::string history_header() {
  std::string h = "step,time";
  for (const char *m : {"F", "P"})
    for (int i = 1; i <= 3; ++i)
      for (int j = 1; j <= 3; ++j) h += std::string(",") + m + std::to_string(i) + std::to_string(j);
  return h + ",residual,iterations\n";
}

inline std::string history_row(std::size_t step, const StepResult &r) {
  std::string row = std::to_string(step) + "," + fmt(r.state.time);
  for (const Mat3 *m : {&r.state.f_bar, &r.p_bar})
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) row += "," + fmt((*m)(i, j));
  return row + "," + fmt(r.residual) + "," + std::to_string(r.iterations) + "\n";
}

inline std::string orientation_header() { return "step,node,q0,q1,q2,q3,weight\n"; }

inline std::string orientation_rows(std::size_t step, const OrientationSamples &s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(step) + "," + std::to_string(i);
    for (int k = 0; k < 4; ++k) out += "," + fmt(s[i].q[k]);
    out += "," + fmt(s[i].weight) + "\n";
  }
  return out;
}

/// Reads an orientation dump; step < 0 selects the last step in the file.
inline OrientationSamples orientations_from_csv(const std::string &text, long step, const std::string &what) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<long, OrientationSample>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line.rfind("step,node,q0", 0) != 0) throw DataError(what + ": not an orientation file");
      continue;
    }
    if (line.empty()) continue;
    std::vector<double> v;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      double x = 0.0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (r.ec != std::errc{} || r.ptr != cell.data() + cell.size())
        throw DataError(what + " line " + std::to_string(line_no) + ": bad number \"" + cell + "\"");
      v.push_back(x);
    }
    if (v.size() != 7) throw DataError(what + " line " + std::to_string(line_no) + ": expected 7 columns");
    OrientationSample s{Quat(v[2], v[3], v[4], v[5]), v[6]};
    if (std::abs(s.q.norm() - 1.0) > 1e-9)
      throw DataError(what + " line " + std::to_string(line_no) + ": quaternion is not normalized");
    s.q.normalize();
    rows.emplace_back(long(v[0]), s);
  }
  if (rows.empty()) throw DataError(what + ": no orientations");
  const long pick = step < 0 ? rows.back().first : step;
  OrientationSamples out;
  for (const auto &[k, s] : rows)
    if (k == pick) out.push_back(s);
  if (out.empty()) throw DataError(what + ": no orientations for step " + std::to_string(pick));
  return out;
}

inline std::string pole_figure_csv(const PoleFigureData &pf) {
  std::string out = "x,y,intensity\n";
  for (const auto &p : pf.points) out += fmt(p.x) + "," + fmt(p.y) + "," + fmt(p.intensity) + "\n";
  return out;
}

inline std::string odf_csv(const ODFGrid &f) {
  std::string out = "q0,q1,q2,q3,density,quadrature_weight\n";
  for (std::size_t i = 0; i < f.density.size(); ++i) {
    const Quat &q = f.grid->q[i];
    out += fmt(q[0]) + "," + fmt(q[1]) + "," + fmt(q[2]) + "," + fmt(q[3]) + "," + fmt(f.density[i]) + "," +
           fmt(f.grid->weight[i]) + "\n";
  }
  return out;
}

} // namespace odmn::io
