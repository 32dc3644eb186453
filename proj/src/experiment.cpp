#include "hjhom/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"

#include "hjhom/effective.hpp"
#include "hjhom/linf.hpp"
#include "hjhom/rng.hpp"

namespace hjhom {

namespace {

using nlohmann::json;

[[noreturn]] void bad_config(const std::string& msg) { fail(Err::InvalidConfig, msg.c_str()); }

void expect_keys(const json& j, const std::string& where, std::set<std::string> allowed) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) bad_config(where + ": unknown key '" + it.key() + "'");
}

const json& need(const json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) bad_config(where + ": missing key '" + key + "'");
  return j.at(key);
}

Vec parse_vec(const json& j, const std::string& where, int dim) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    bad_config(where + " must be an array of length " + std::to_string(dim));
  Vec v = vzero;
  for (int a = 0; a < dim; ++a) v[a] = j[a].get<double>();
  return v;
}

Grid parse_grid(const json& j, const std::string& where, int dim) {
  expect_keys(j, where, {"origin", "h", "cells", "periodic"});
  Vec origin = parse_vec(need(j, where, "origin"), where + ".origin", dim);
  Vec h = parse_vec(need(j, where, "h"), where + ".h", dim);
  const json& jc = need(j, where, "cells");
  const json& jp = need(j, where, "periodic");
  if (!jc.is_array() || static_cast<int>(jc.size()) != dim)
    bad_config(where + ".cells must be an array of length " + std::to_string(dim));
  if (!jp.is_array() || static_cast<int>(jp.size()) != dim)
    bad_config(where + ".periodic must be an array of length " + std::to_string(dim));
  Idx cells{1, 1, 1};
  std::array<bool, 3> periodic{false, false, false};
  for (int a = 0; a < dim; ++a) {
    cells[a] = jc[a].get<int>();
    periodic[a] = jp[a].get<bool>();
  }
  return make_grid(dim, origin, h, cells, periodic);
}

HamiltonianSpec parse_ham(const json& j) {
  expect_keys(j, "hamiltonian", {"kind", "dim", "power", "diag", "shift", "aniso_base",
                                 "lambda", "Lambda"});
  HamiltonianSpec spec;
  const std::string kind = need(j, "hamiltonian", "kind").get<std::string>();
  spec.dim = need(j, "hamiltonian", "dim").get<int>();
  if (spec.dim < 1 || spec.dim > 3) bad_config("hamiltonian.dim must be 1..3");
  if (kind == "ponly") spec.kind = HamKind::POnly;
  else if (kind == "separable") spec.kind = HamKind::Separable;
  else if (kind == "metric") spec.kind = HamKind::Metric;
  else if (kind == "aniso") spec.kind = HamKind::AnisoHomogeneous;
  else if (kind == "drift") spec.kind = HamKind::QuadraticDrift;
  else bad_config("hamiltonian.kind must be ponly|separable|metric|aniso|drift");
  if (j.contains("power")) spec.ponly.power = j.at("power").get<double>();
  if (j.contains("diag")) spec.ponly.diag = parse_vec(j.at("diag"), "hamiltonian.diag", spec.dim);
  if (j.contains("shift")) spec.ponly.shift = parse_vec(j.at("shift"), "hamiltonian.shift", spec.dim);
  if (j.contains("aniso_base")) {
    const json& m = j.at("aniso_base");
    if (!m.is_array() || m.size() != 9) bad_config("hamiltonian.aniso_base must be a flat 3x3 array");
    for (int k = 0; k < 9; ++k) spec.aniso_base.m[k] = m[k].get<double>();
  }
  if (spec.kind != HamKind::POnly) {
    spec.lambda = need(j, "hamiltonian", "lambda").get<double>();
    spec.Lambda = need(j, "hamiltonian", "Lambda").get<double>();
  } else {
    if (j.contains("lambda")) spec.lambda = j.at("lambda").get<double>();
    if (j.contains("Lambda")) spec.Lambda = j.at("Lambda").get<double>();
  }
  return spec;
}

EnvParams parse_env(const json& j) {
  expect_keys(j, "environment", {"kind", "cell", "values", "probs", "waves", "amplitude",
                                 "offset", "bump_radius", "jitter", "stream_bumps"});
  EnvParams p;
  const std::string kind = need(j, "environment", "kind").get<std::string>();
  if (kind == "periodic") p.kind = EnvKind::Periodic;
  else if (kind == "checkerboard") p.kind = EnvKind::IidCheckerboard;
  else if (kind == "bumps") p.kind = EnvKind::SmoothedBump;
  else if (kind == "stream") p.kind = EnvKind::StreamDrift;
  else bad_config("environment.kind must be periodic|checkerboard|bumps|stream");
  if (j.contains("cell")) p.cell = j.at("cell").get<double>();
  if (j.contains("values")) p.values = j.at("values").get<std::vector<double>>();
  if (j.contains("probs")) p.probs = j.at("probs").get<std::vector<double>>();
  if (j.contains("waves")) {
    const json& w = j.at("waves");
    if (!w.is_array() || w.size() > 3) bad_config("environment.waves must be an array of <= 3 ints");
    for (std::size_t a = 0; a < w.size(); ++a) p.waves[a] = w[a].get<int>();
  }
  if (j.contains("amplitude")) p.amplitude = j.at("amplitude").get<double>();
  if (j.contains("offset")) p.offset = j.at("offset").get<double>();
  if (j.contains("bump_radius")) p.bump_radius = j.at("bump_radius").get<double>();
  if (j.contains("jitter")) p.jitter = j.at("jitter").get<double>();
  if (j.contains("stream_bumps")) p.stream_bumps = j.at("stream_bumps").get<bool>();
  return p;
}

SweepParams parse_sweep(const json& j, const std::string& where, int dim) {
  SweepParams sp;
  if (j.contains("tol")) sp.tol = j.at("tol").get<double>();
  if (j.contains("max_sweeps")) sp.max_sweeps = j.at("max_sweeps").get<int>();
  if (j.contains("sigma_margin")) sp.sigma_margin = j.at("sigma_margin").get<double>();
  if (j.contains("p_offset")) sp.p_offset = parse_vec(j.at("p_offset"), where + ".p_offset", dim);
  return sp;
}

// Cone sources shared by homogenize/cdf/amle sections.
ConeProvider parse_cone(const json& j, const HamiltonianSpec& spec, const EnvParams& envp) {
  expect_keys(j, "cone", {"source", "path", "dirs", "values", "oracle_n"});
  const std::string src = need(j, "cone", "source").get<std::string>();
  if (src == "ponly") return make_ponly_provider(spec);
  if (src == "table") return make_table_provider(load_table(need(j, "cone", "path").get<std::string>()));
  if (src == "homogeneous") {
    const json& jd = need(j, "cone", "dirs");
    const json& jv = need(j, "cone", "values");
    if (!jd.is_array() || !jv.is_array() || jd.size() != jv.size())
      bad_config("cone.dirs and cone.values must be matching arrays");
    std::vector<Vec> dirs;
    std::vector<double> vals;
    for (std::size_t k = 0; k < jd.size(); ++k) {
      dirs.push_back(parse_vec(jd[k], "cone.dirs", spec.dim));
      vals.push_back(jv[k].get<double>());
    }
    return make_homogeneous_provider(dirs, vals, spec.dim);
  }
  if (src == "oracle-separable-1d") {
    if (spec.dim != 1 || spec.kind != HamKind::Separable || envp.kind != EnvKind::Periodic)
      bad_config("the separable oracle cone needs a 1d periodic separable medium");
    const int n = j.contains("oracle_n") ? j.at("oracle_n").get<int>() : 8192;
    const EnvParams ep = envp;
    auto V = [ep](double y) {
      return ep.offset + ep.amplitude * std::sin(2.0 * M_PI * ep.waves[0] * y);
    };
    return make_pfn_provider(
        [V, n](const Vec& p) { return oracle_hbar_separable_1d(V, p[0], n); }, 1, 1e-9);
  }
  bad_config("cone.source must be ponly|table|homogeneous|oracle-separable-1d");
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  if (!f) bad_config("cannot open output path " + path);
  f << body;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// FNV-1a 64 over the file bytes, for the manifest's artifact list.
std::string file_hash_hex(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (f.read(buf, sizeof buf), f.gcount() > 0)
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// Every regular file in the run directory except the manifest itself, sorted
// for determinism.
json artifact_list(const std::string& out_dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& de : std::filesystem::directory_iterator(out_dir))
    if (de.is_regular_file() && de.path().filename() != "manifest.json")
      files.push_back(de.path());
  std::sort(files.begin(), files.end());
  json a = json::array();
  for (const auto& p : files)
    a.push_back({{"file", p.filename().string()},
                 {"bytes", std::filesystem::file_size(p)},
                 {"fnv1a64", file_hash_hex(p)}});
  return a;
}

// Check {metric, max/min/equals} entries against the summary scalars and
// record the observations; false when any entry fails.
bool apply_asserts(json& summary, const json& ja) {
  if (!ja.is_array()) bad_config("assert must be an array");
  bool all = true;
  json recs = json::array();
  for (const json& a : ja) {
    expect_keys(a, "assert entry", {"metric", "max", "min", "equals"});
    const std::string m = need(a, "assert entry", "metric").get<std::string>();
    if (!summary.contains(m)) bad_config("assert: summary has no metric '" + m + "'");
    const json& v = summary.at(m);
    bool ok = true;
    if (a.contains("max")) ok = ok && v.is_number() && v.get<double>() <= a.at("max").get<double>();
    if (a.contains("min")) ok = ok && v.is_number() && v.get<double>() >= a.at("min").get<double>();
    if (a.contains("equals")) ok = ok && v == a.at("equals");
    recs.push_back({{"metric", m}, {"value", v}, {"pass", ok}});
    all = all && ok;
  }
  summary["assertions"] = recs;
  return all;
}

json report_json(const DistanceField::Report& r) {
  return json{{"sweep_tol", r.sweep_tol},   {"last_change", r.last_change},
              {"sweeps", r.sweeps},         {"converged", r.converged},
              {"residual", r.residual},     {"scheme_tol", r.scheme_tol},
              {"lipschitz", r.lipschitz},   {"lip_bound", r.lip_bound},
              {"sublevel_R", r.sublevel_R}, {"window_size", r.window_size}};
}

// ---- experiment bodies ----------------------------------------------------

json run_distance(const json& sec, const HamiltonianSpec& spec, const EnvParams& envp,
                  std::uint64_t seed, const Grid& grid, const std::string& out) {
  expect_keys(sec, "distance", {"mu", "x0", "p_offset", "tol", "max_sweeps", "sigma_margin",
                                "save_csv"});
  const double mu = need(sec, "distance", "mu").get<double>();
  const Vec x0 = parse_vec(need(sec, "distance", "x0"), "distance.x0", spec.dim);
  const SweepParams sp = parse_sweep(sec, "distance", spec.dim);
  const EnvironmentRealization env = sample_environment(spec, envp, seed, grid);
  const DistanceField d = solve_distance(spec, env, mu, x0, grid, sp);
  save_distance(d, out + "/field");
  if (sec.value("save_csv", true)) export_csv(d.field, out + "/field.csv");
  json s;
  s["experiment"] = "distance";
  s["mu"] = mu;
  s["x0"] = {d.x0[0], d.x0[1], d.x0[2]};
  s["report"] = report_json(d.report);
  return s;
}

json run_subadditivity(const json& sec, const HamiltonianSpec& spec, const EnvParams& envp,
                       std::uint64_t seed, const Grid& grid, const std::string& out) {
  expect_keys(sec, "subadditivity", {"mu", "triples", "tol", "max_sweeps", "sigma_margin"});
  const double mu = need(sec, "subadditivity", "mu").get<double>();
  const SweepParams sp = parse_sweep(sec, "subadditivity", spec.dim);
  const json& jt = need(sec, "subadditivity", "triples");
  if (!jt.is_array() || jt.empty()) bad_config("subadditivity.triples must be a nonempty array");
  std::vector<std::array<Vec, 3>> triples;
  for (const json& t : jt) {
    if (!t.is_array() || t.size() != 3) bad_config("each triple is [x, z, y]");
    triples.push_back({parse_vec(t[0], "triple.x", spec.dim), parse_vec(t[1], "triple.z", spec.dim),
                       parse_vec(t[2], "triple.y", spec.dim)});
  }
  const EnvironmentRealization env = sample_environment(spec, envp, seed, grid);
  const SubadditivityResult r = check_subadditivity(spec, env, mu, triples, grid, sp);
  std::string csv = "triple,violation\n";
  for (std::size_t k = 0; k < r.per_triple.size(); ++k)
    csv += std::to_string(k) + "," + fmt_g(r.per_triple[k]) + "\n";
  write_text(out + "/triples.csv", csv);
  json s;
  s["experiment"] = "subadditivity";
  s["mu"] = mu;
  s["max_violation"] = r.max_violation;
  s["per_triple"] = r.per_triple;
  return s;
}

json run_hbar(const json& sec, const HamiltonianSpec& spec, const EnvParams& envp,
              std::uint64_t seed, const Grid& grid, const std::string& out) {
  expect_keys(sec, "hbar-table", {"p", "p_grid", "deltas", "seeds", "march_tol", "max_steps"});
  TableBuildParams bp;
  if (sec.contains("deltas")) bp.deltas = sec.at("deltas").get<std::vector<double>>();
  for (const double d : bp.deltas)
    if (!(d > 0.0)) bad_config("hbar-table.deltas must be positive");
  if (sec.contains("march_tol")) bp.march.tol = sec.at("march_tol").get<double>();
  if (sec.contains("max_steps")) bp.march.max_steps = sec.at("max_steps").get<int>();
  std::vector<std::uint64_t> seeds{seed};
  if (sec.contains("seeds")) seeds = sec.at("seeds").get<std::vector<std::uint64_t>>();

  json s;
  s["experiment"] = "hbar-table";
  if (sec.contains("p") == sec.contains("p_grid"))
    bad_config("hbar-table needs exactly one of p / p_grid");
  if (sec.contains("p")) {
    const Vec p = parse_vec(sec.at("p"), "hbar-table.p", spec.dim);
    const EnvironmentRealization env = sample_environment(spec, envp, seed, grid);
    const HbarPointResult r = hbar_point(spec, env, p, grid, bp.deltas, bp.march);
    emit_plotdata(r, out + "/plot_delta_trend.txt");
    s["p"] = {p[0], p[1], p[2]};
    s["hbar"] = r.hbar;
    s["m"] = r.m;
    s["deltas"] = r.deltas;
    s["alpha"] = r.alpha;
    s["fit_residual"] = r.fit_residual;
    s["reliable"] = r.reliable;
    s["crude_lo"] = r.crude_lo;
    s["crude_hi"] = r.crude_hi;
    s["subcorrector_ub"] = r.subcorrector_ub;
    return s;
  }
  const Grid pgrid = parse_grid(sec.at("p_grid"), "hbar-table.p_grid", spec.dim);
  const HbarTable t = build_table(spec, envp, seeds, pgrid, grid, bp);
  save_table(t, out + "/hbar_table.json");
  std::string csv = "lin,value,spread,reliable\n";
  for (std::size_t k = 0; k < t.value.size(); ++k)
    csv += std::to_string(k) + "," + fmt_g(t.value[k]) + "," + fmt_g(t.spread[k]) + "," +
           std::to_string(int(t.reliable[k])) + "\n";
  write_text(out + "/hbar_table.csv", csv);
  emit_plotdata(t, out);
  const ConvexityReport cr = convexity_report(t);
  const ArgminRegion ar = argmin_region(t, 1e-6);
  s["convexity_defect"] = cr.max_defect;
  s["min_value"] = ar.min_value;
  s["argmin"] = {ar.argmin[0], ar.argmin[1], ar.argmin[2]};
  s["argmin_flat"] = ar.flat;
  s["argmin_touches_boundary"] = ar.touches_boundary;
  return s;
}

json run_homogenize(const json& sec, const HamiltonianSpec& spec, const EnvParams& envp,
                    std::uint64_t seed, const std::string& out) {
  expect_keys(sec, "homogenize", {"mu", "eps", "window", "margin", "h_micro", "cone", "tol",
                                  "max_sweeps", "sigma_margin"});
  HomogConfig cfg;
  cfg.mu = need(sec, "homogenize", "mu").get<double>();
  cfg.eps = need(sec, "homogenize", "eps").get<std::vector<double>>();
  if (sec.contains("window")) cfg.window = sec.at("window").get<double>();
  if (sec.contains("margin")) cfg.margin = sec.at("margin").get<double>();
  if (sec.contains("h_micro")) cfg.h_micro = sec.at("h_micro").get<double>();
  cfg.sweep = parse_sweep(sec, "homogenize", spec.dim);
  const ConeProvider cone = parse_cone(need(sec, "homogenize", "cone"), spec, envp);
  for (const double e : cfg.eps)
    if (!(e > 0.0)) bad_config("homogenize.eps must be positive");
  const HomogResult r = homogenization_experiment(spec, envp, seed, cone, cfg);
  std::string csv = "eps,sup_err\n";
  for (std::size_t k = 0; k < r.eps.size(); ++k)
    csv += fmt_g(r.eps[k]) + "," + fmt_g(r.sup_err[k]) + "\n";
  write_text(out + "/scaling.csv", csv);
  emit_plotdata(r, out + "/plot_scaling.txt");
  json s;
  s["experiment"] = "homogenize";
  s["mu"] = cfg.mu;
  s["eps"] = r.eps;
  s["sup_err"] = r.sup_err;
  s["final_err"] = r.final_err;
  s["decreasing"] = r.decreasing;
  return s;
}

ScalarField boundary_field(const json& jb, const Grid& grid, const ConeProvider& cone,
                           std::uint64_t seed) {
  expect_keys(jb, "boundary", {"kind", "slope", "value0", "mu", "vertex", "scale"});
  const std::string kind = need(jb, "boundary", "kind").get<std::string>();
  ScalarField f(grid);
  if (kind == "affine") {
    const Vec slope = parse_vec(need(jb, "boundary", "slope"), "boundary.slope", grid.dim);
    const double v0 = jb.value("value0", 0.0);
    for_each_node(grid, [&](const Idx& id, std::size_t s) {
      f.values[s] = v0 + dot(slope, grid.coord(id));
    });
  } else if (kind == "cone") {
    const double mu = need(jb, "boundary", "mu").get<double>();
    const Vec vertex = parse_vec(need(jb, "boundary", "vertex"), "boundary.vertex", grid.dim);
    for_each_node(grid, [&](const Idx& id, std::size_t s) {
      f.values[s] = cone.value(mu, grid.coord(id) - vertex);
    });
  } else if (kind == "random") {
    const double scale = jb.value("scale", 1.0);
    for_each_node(grid, [&](const Idx&, std::size_t s) {
      f.values[s] = scale * (2.0 * u01(mix(seed, 0xB0DAu, s)) - 1.0);
    });
  } else {
    bad_config("boundary.kind must be affine|cone|random");
  }
  return f;
}

json run_amle(const json& sec, const HamiltonianSpec& spec, const EnvParams& envp,
              std::uint64_t seed, const Grid& grid, const std::string& out) {
  expect_keys(sec, "amle", {"boundary", "cone", "tol", "max_sweeps", "audit_count", "mu_span",
                            "audit_tol"});
  const ConeProvider cone = parse_cone(need(sec, "amle", "cone"), spec, envp);
  AmleParams ap;
  if (sec.contains("tol")) ap.tol = sec.at("tol").get<double>();
  if (sec.contains("max_sweeps")) ap.max_sweeps = sec.at("max_sweeps").get<int>();
  ap.audit_configs = sec.value("audit_count", 24);
  if (sec.contains("mu_span")) ap.audit_mu_span = sec.at("mu_span").get<double>();
  if (sec.contains("audit_tol")) ap.audit_tol = sec.at("audit_tol").get<double>();
  ap.audit_seed = seed ^ 0x5EEDu;
  const ScalarField bd = boundary_field(need(sec, "amle", "boundary"), grid, cone, seed);
  const AmleResult res = construct_amle(bd, cone, ap);
  save_field(res.u, out + "/amle.txt");
  export_csv(res.u, out + "/amle.csv");

  json s;
  s["experiment"] = "amle";
  s["worst_above"] = res.audit.worst_above;
  s["worst_below"] = res.audit.worst_below;
  s["audit_count"] = ap.audit_configs;
  s["sweeps"] = res.sweeps;
  s["unique"] = res.unique;
  return s;
}

json run_cdf(const json& sec, const HamiltonianSpec& spec, const EnvParams& envp,
             std::uint64_t seed, const Grid& grid, const std::string& out) {
  expect_keys(sec, "check-cdf", {"cone", "count", "mu_span", "boundary", "tol", "max_sweeps"});
  const ConeProvider cone = parse_cone(need(sec, "check-cdf", "cone"), spec, envp);
  AmleParams ap;
  if (sec.contains("tol")) ap.tol = sec.at("tol").get<double>();
  if (sec.contains("max_sweeps")) ap.max_sweeps = sec.at("max_sweeps").get<int>();
  const ScalarField bd = boundary_field(need(sec, "check-cdf", "boundary"), grid, cone, seed);
  ap.audit = false; // this experiment reports the excesses itself
  const ScalarField u = construct_amle(bd, cone, ap).u;

  const int count = sec.value("count", 32);
  const double span = sec.value("mu_span", 2.0);
  const auto configs = random_cdf_configs(grid, cone.min_lv, span, count, seed ^ 0xCDFu);
  const CdfReport rep = check_cdf(u, cone, configs);
  std::string csv = "center_0,center_1,radius,x0_0,x0_1,mu,above,below\n";
  for (std::size_t k = 0; k < configs.size(); ++k)
    csv += fmt_g(configs[k].center[0]) + "," + fmt_g(configs[k].center[1]) + "," +
           fmt_g(configs[k].radius) + "," + fmt_g(configs[k].x0[0]) + "," +
           fmt_g(configs[k].x0[1]) + "," + fmt_g(configs[k].mu) + "," + fmt_g(rep.above[k]) +
           "," + fmt_g(rep.below[k]) + "\n";
  write_text(out + "/cdf.csv", csv);
  json s;
  s["experiment"] = "check-cdf";
  s["count"] = count;
  s["worst_above"] = rep.worst_above;
  s["worst_below"] = rep.worst_below;
  return s;
}

json run_oracle_compare(const json& sec, const HamiltonianSpec& spec, const EnvParams& envp,
                        std::uint64_t seed, const Grid& grid, const std::string& out) {
  expect_keys(sec, "oracle-compare", {"oracle", "p_values", "deltas", "march_tol", "max_steps",
                                      "rel_threshold", "abs_floor", "oracle_n"});
  const std::string oracle = need(sec, "oracle-compare", "oracle").get<std::string>();
  const auto ps = need(sec, "oracle-compare", "p_values").get<std::vector<double>>();
  if (ps.empty()) bad_config("oracle-compare.p_values must be nonempty");
  const auto deltas = need(sec, "oracle-compare", "deltas").get<std::vector<double>>();
  for (const double d : deltas)
    if (!(d > 0.0)) bad_config("oracle-compare.deltas must be positive");
  MarchParams mp;
  if (sec.contains("march_tol")) mp.tol = sec.at("march_tol").get<double>();
  if (sec.contains("max_steps")) mp.max_steps = sec.at("max_steps").get<int>();
  const double rel = sec.value("rel_threshold", 0.05);
  const double floor_abs = sec.value("abs_floor", 0.0);
  if (!(rel > 0.0)) bad_config("oracle-compare.rel_threshold must be positive");

  std::function<double(double)> truth;
  if (oracle == "separable-1d") {
    if (spec.dim != 1 || spec.kind != HamKind::Separable || envp.kind != EnvKind::Periodic)
      bad_config("oracle-compare.oracle 'separable-1d' needs a 1d periodic separable medium");
    const int n = sec.value("oracle_n", 8192);
    const EnvParams ep = envp;
    truth = [ep, n](double p) {
      auto V = [ep](double y) {
        return ep.offset + ep.amplitude * std::sin(2.0 * M_PI * ep.waves[0] * y);
      };
      return oracle_hbar_separable_1d(V, p, n);
    };
  } else if (oracle == "metric-1d") {
    if (spec.dim != 1 || spec.kind != HamKind::Metric || envp.kind != EnvKind::IidCheckerboard)
      bad_config("oracle-compare.oracle 'metric-1d' needs a 1d checkerboard metric medium");
    const std::vector<double> vals = envp.values, probs = envp.probs;
    truth = [vals, probs](double p) { return oracle_hbar_metric_1d(vals, probs, p); };
  } else {
    bad_config("oracle-compare.oracle must be separable-1d|metric-1d");
  }

  const EnvironmentRealization env = sample_environment(spec, envp, seed, grid);
  std::string csv = "p,measured,oracle,abs_err,rel_err,pass\n";
  std::string plot = "# p  effective_level_measured   (momentum units vs level units)\n";
  json nodes = json::array();
  bool all = true;
  double worst_abs = 0.0, worst_rel = 0.0;
  for (const double p : ps) {
    const HbarPointResult r = hbar_point(spec, env, {p, 0, 0}, grid, deltas, mp);
    const double tv = truth(p);
    const double ae = std::fabs(r.hbar - tv);
    const double re = ae / std::max(std::fabs(tv), 1e-300);
    const bool ok = ae <= std::max(rel * std::fabs(tv), floor_abs);
    all = all && ok;
    worst_abs = std::max(worst_abs, ae);
    worst_rel = std::max(worst_rel, re);
    nodes.push_back({{"p", p}, {"measured", r.hbar}, {"oracle", tv}, {"abs_err", ae},
                     {"rel_err", re}, {"pass", ok}});
    csv += fmt_g(p) + "," + fmt_g(r.hbar) + "," + fmt_g(tv) + "," + fmt_g(ae) + "," +
           fmt_g(re) + "," + std::to_string(int(ok)) + "\n";
    plot += fmt_g(p) + " " + fmt_g(r.hbar) + "\n";
  }
  write_text(out + "/oracle_compare.csv", csv);
  write_text(out + "/plot_compare.txt", plot);
  json s;
  s["experiment"] = "oracle-compare";
  s["oracle"] = oracle;
  s["nodes"] = nodes;
  s["worst_abs_err"] = worst_abs;
  s["worst_rel_err"] = worst_rel;
  s["pass"] = all;
  return s;
}

} // namespace

// ---- plot series ------------------------------------------------------------

void emit_plotdata(const HbarTable& t, const std::string& out_dir) {
  Idx at{0, 0, 0};
  double best = std::numeric_limits<double>::infinity();
  for_each_node(t.pgrid, [&](const Idx& i, std::size_t s) {
    if (t.value[s] < best) {
      best = t.value[s];
      at = i;
    }
  });
  for (int a = 0; a < t.dim; ++a) {
    std::string body = "# p[" + std::to_string(a) +
                       "]  effective_level   (momentum units vs level units; axis slice "
                       "through the table argmin)\n";
    Idx i = at;
    for (int k = 0; k < t.pgrid.nodes(a); ++k) {
      i[a] = k;
      body += fmt_g(t.pgrid.coord(i)[a]) + " " + fmt_g(t.value[t.pgrid.lin(i)]) + "\n";
    }
    write_text(out_dir + "/plot_hbar_axis" + std::to_string(a) + ".txt", body);
  }
}

void emit_plotdata(const HomogResult& r, const std::string& path) {
  std::string body =
      "# eps  sup_window_error   (dimensionless; intended for log-log axes)\n";
  for (std::size_t k = 0; k < r.eps.size(); ++k)
    body += fmt_g(r.eps[k]) + " " + fmt_g(r.sup_err[k]) + "\n";
  write_text(path, body);
}

void emit_plotdata(const HbarPointResult& r, const std::string& path) {
  std::string body =
      "# delta  minus_delta_v_at_origin   (discount rate vs level units)\n";
  for (std::size_t k = 0; k < r.deltas.size() && k < r.m.size(); ++k)
    body += fmt_g(r.deltas[k]) + " " + fmt_g(r.m[k]) + "\n";
  write_text(path, body);
}

int run_experiment_file(const std::string& config_path, const std::string& out_dir,
                        int workers, std::int64_t seed_override,
                        const std::string& expected_kind) {
  const auto t0 = std::chrono::steady_clock::now();
  json cfg;
  try {
    std::ifstream f(config_path);
    if (!f) bad_config("cannot open config " + config_path);
    f >> cfg;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config parse error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }

  json stages = json::array();
  auto stage = [&](const char* name, const char* status, const std::string& note = "") {
    json st{{"stage", name}, {"status", status}};
    if (!note.empty()) st["error"] = note;
    stages.push_back(st);
  };
  auto write_manifest = [&] {
    json manifest;
    manifest["tool"] = "hjhom";
    manifest["version"] = "1.0";
    manifest["format"] = "hjhom-run v1";
    manifest["config"] = cfg;
    manifest["workers"] = worker_count();
    manifest["stages"] = stages;
    manifest["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    manifest["artifacts"] = artifact_list(out_dir);
    write_json(out_dir + "/manifest.json", manifest);
  };

  bool solving = false; // errors before this point are config validation
  try {
    if (const char* we = std::getenv("HJHOM_WORKERS")) workers = std::atoi(we);
    if (workers > 0) set_worker_count(workers);
    const std::string kind = need(cfg, "config", "experiment").get<std::string>();
    if (!expected_kind.empty() && kind != expected_kind)
      bad_config("experiment: config says '" + kind + "' but the subcommand expects '" +
                 expected_kind + "'");
    expect_keys(cfg, "config",
                {"experiment", "seed", "hamiltonian", "environment", "grid", "assert", kind});
    std::uint64_t seed = need(cfg, "config", "seed").get<std::uint64_t>();
    if (seed_override >= 0) seed = static_cast<std::uint64_t>(seed_override);
    const HamiltonianSpec spec = parse_ham(need(cfg, "config", "hamiltonian"));
    const EnvParams envp = parse_env(need(cfg, "config", "environment"));
    const json& sec = need(cfg, "config", kind);
    stage("validate", "ok");

    std::filesystem::create_directories(out_dir);
    solving = true;
    json summary;
    if (kind == "homogenize") {
      summary = run_homogenize(sec, spec, envp, seed, out_dir);
    } else {
      const Grid grid = parse_grid(need(cfg, "config", "grid"), "grid", spec.dim);
      if (kind == "distance") summary = run_distance(sec, spec, envp, seed, grid, out_dir);
      else if (kind == "subadditivity") summary = run_subadditivity(sec, spec, envp, seed, grid, out_dir);
      else if (kind == "hbar-table") summary = run_hbar(sec, spec, envp, seed, grid, out_dir);
      else if (kind == "check-cdf") summary = run_cdf(sec, spec, envp, seed, grid, out_dir);
      else if (kind == "amle") summary = run_amle(sec, spec, envp, seed, grid, out_dir);
      else if (kind == "oracle-compare") summary = run_oracle_compare(sec, spec, envp, seed, grid, out_dir);
      else bad_config("experiment must be hbar-table|distance|homogenize|amle|check-cdf|"
                      "oracle-compare|subadditivity");
    }
    stage("run", "ok");

    summary["seed"] = seed;
    bool pass = summary.value("pass", true);
    if (cfg.contains("assert")) pass = apply_asserts(summary, cfg.at("assert")) && pass;
    summary["pass"] = pass;
    write_json(out_dir + "/summary.json", summary);
    stage("persist", "ok");
    write_manifest();
    return pass ? 0 : 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    const bool validation = !solving || e.code == Err::InvalidConfig;
    if (!validation) {
      // keep the partial artifacts and mark the failure
      try {
        stage("run", "failed", e.what());
        write_json(out_dir + "/failure.json",
                   json{{"error", e.what()}, {"code", static_cast<int>(e.code)},
                        {"detail", e.detail}});
        write_manifest();
      } catch (...) {
      }
    }
    return validation ? 1 : 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

std::string describe_config(const std::string& config_path) {
  std::ifstream f(config_path);
  if (!f) bad_config("cannot open config " + config_path);
  json cfg;
  f >> cfg;
  const HamiltonianSpec spec = parse_ham(need(cfg, "config", "hamiltonian"));
  const EnvParams envp = parse_env(need(cfg, "config", "environment"));
  const std::uint64_t seed = need(cfg, "config", "seed").get<std::uint64_t>();
  return describe_medium(spec, envp, seed);
}

} // namespace hjhom
