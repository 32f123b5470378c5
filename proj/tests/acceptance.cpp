// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "mmslab/experiment.hpp"
#include "mmslab/flows.hpp"
#include "mmslab/spectral.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace mms;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kTheta = 2.8209479178171357;   // p_0.01(0,0) on the circle, frozen from the theta series
constexpr double kThetaTol = 1e-6;
constexpr double kHeatSeconds = 5.0;
constexpr double kAStability = 0.30;
constexpr double kPairC = 50.0;
constexpr double kKeyC = 100.0;
constexpr double kSpread = 2.0;
constexpr double kExcluded = 0.1;
constexpr double kCore = 0.8;
constexpr double kRk4Ratio = 8.0;
constexpr double kIsoL = 1.1;
constexpr double kIsoDrift = 1e-6;

const fs::path kOut = "acceptance-out";

struct Criterion {
  bool pass = true;
  std::vector<std::string> notes;
  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!ok) notes.push_back(what);
  }
};

ExperimentResult run(const std::string& tag, const std::string& text) {
  ExperimentConfig cfg = experiment_config_from(parse_config_string(text), text);
  cfg.out_dir = kOut / tag;
  return run_experiment(cfg);
}

const ReportRow& row(const ExperimentResult& r, const std::string& name) {
  for (const auto& x : r.rows)
    if (x.name == name) return x;
  throw std::runtime_error("missing report row " + name);
}

void gated(Criterion& c, const ExperimentResult& r, const std::string& tag, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    const auto& x = row(r, n);
    c.require(x.pass, tag + "/" + n + " = " + format_constant(x.constant));
  }
}

std::string fmt(double v) { return format_constant(v); }

double spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
  return s;
}

Criterion check_heat_kernel() {
  Criterion c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run("c1", "scenario = heat-kernel-check\n[space]\nkind = torus\ndims = 1\nresolution = 32\n");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  gated(c, r, "heat", {"trace-identity", "chapman-kolmogorov", "mass-conservation", "heat-closed-form"});
  const auto T1 = build_torus_grid(1, 32);
  const auto B = eigendecompose(assemble_laplacian(T1, LaplacianScheme::TorusFourierExact), T1.size());
  const double p = heat_kernel(B, 0.01, 0, 0);
  c.require(std::abs(p - kTheta) < kThetaTol, "p_0.01(0,0) = " + fmt(p));
  c.require(secs < kHeatSeconds, "runtime " + fmt(secs) + " s");
  c.notes.push_back("p_0.01(0,0) = " + fmt(p) + ", " + fmt(secs) + " s");
  return c;
}

Criterion check_green_identities() {
  Criterion c;
  const auto r = run("c2", "scenario = green-check\n[space]\nkind = torus\ndims = 3\nresolution = 10\n");
  gated(c, r, "green", {"green-action", "green-laplacian", "green-pseudo-inverse", "green-time-integral"});
  return c;
}

Criterion check_green_asymptotics() {
  Criterion c;
  const auto r12 = run("c3-12", "scenario = green-check\n[space]\nkind = torus\ndims = 3\nresolution = 12\n");
  const auto r8 = run("c3-8", "scenario = green-check\n[space]\nkind = torus\ndims = 3\nresolution = 8\n");
  gated(c, r12, "res12", {"green-near-diagonal", "green-slope", "green-comparability"});
  const double a12 = row(r12, "green-comparability").constant, a8 = row(r8, "green-comparability").constant;
  const double drift = std::abs(a12 / a8 - 1.0);
  c.require(drift <= kAStability, "A drift " + fmt(drift));
  c.notes.push_back("A(8) = " + fmt(a8) + ", A(12) = " + fmt(a12));
  return c;
}

Criterion check_maximal() {
  Criterion c;
  std::vector<double> pair, key;
  for (int res : {8, 12, 16}) {
    const auto r = run("c4-" + std::to_string(res), "scenario = maximal-estimates\n[space]\nkind = torus\ndims = 3\n"
                                                    "resolution = " + std::to_string(res) + "\n[field]\nname = gradient_heat\n");
    const double cp = row(r, "pair-kernel-estimate").constant, ck = row(r, "key-maximal-estimate").constant;
    c.require(cp < kPairC, "pair C(" + std::to_string(res) + ") = " + fmt(cp));
    c.require(ck < kKeyC, "key C(" + std::to_string(res) + ") = " + fmt(ck));
    pair.push_back(cp);
    key.push_back(ck);
  }
  c.require(spread(pair) <= kSpread, "pair C spread " + fmt(spread(pair)));
  const auto cdl = run("c4-cdl", "scenario = maximal-estimates\n[space]\nkind = torus\ndims = 3\nresolution = 12\n"
                                 "[field]\nname = cdl_singular\n");
  const double kc = row(cdl, "key-maximal-estimate").constant;
  c.require(std::isfinite(kc), "cdl key C = " + fmt(kc));
  c.notes.push_back("pair C " + join(pair) + "; key C " + join(key) + "; cdl key C " + fmt(kc));
  return c;
}

Criterion check_contraction() {
  Criterion c;
  const auto rot = run("c5-rot", "scenario = contraction\n");
  gated(c, rot, "rotation", {"w2-contraction", "trajectory-lipschitz"});
  const auto sh = run("c5-shear", "scenario = contraction\n[space]\nkind = torus\ndims = 2\nresolution = 16\n"
                                  "[field]\nname = shear\ns = 0.5\n");
  gated(c, sh, "shear", {"w2-contraction", "trajectory-lipschitz", "w2-derivative", "joint-derivative"});
  c.notes.push_back("rotation ratio " + fmt(row(rot, "w2-contraction").constant) + ", shear ratio " +
                    fmt(row(sh, "w2-contraction").constant));
  return c;
}

Criterion check_lusin() {
  Criterion c;
  const auto r = run("c6", "scenario = lusin-regularity\n[space]\nkind = torus\ndims = 3\nresolution = 16\n"
                           "[field]\nname = cdl_singular\n");
  gated(c, r, "cdl16", {"q-le-phi", "lipschitz-on-E", "chebyshev-mass", "excluded-near-core"});
  const double ex = row(r, "chebyshev-mass").constant;
  c.require(ex < kExcluded, "excluded mass " + fmt(ex));
  c.require(row(r, "excluded-near-core").constant >= kCore, "core share " + fmt(row(r, "excluded-near-core").constant));

  const std::vector<std::pair<std::string, std::string>> corpus{
      {"zero", "name = zero\n"},
      {"shear-0.25", "name = shear\ns = 0.25\n"},
      {"shear-0.5", "name = shear\ns = 0.5\n"},
      {"shear-1", "name = shear\ns = 1\n"},
      {"gradient_heat", "name = gradient_heat\n"},
      {"cdl-0.3", "name = cdl_singular\nalpha = 0.3\n"},
      {"cdl-0.5", "name = cdl_singular\nalpha = 0.5\n"}};
  std::vector<double> ratios;
  for (const auto& [tag, field] : corpus) {
    const auto q = run("c6-" + tag, "scenario = lusin-regularity\n[space]\nkind = torus\ndims = 3\nresolution = 12\n"
                                    "[field]\n" + field);
    ratios.push_back(row(q, "qstar-bound").constant);
  }
  c.require(spread(ratios) <= kSpread, "qstar ratio spread " + fmt(spread(ratios)));
  c.notes.push_back("excluded " + fmt(ex) + "; qstar ratios " + join(ratios));
  return c;
}

Criterion check_lift() {
  Criterion c;
  const auto r = run("c7", "scenario = n2-lift\n[space]\nkind = torus\ndims = 2\nresolution = 16\ncircle = 8\n");
  for (const auto& x : r.rows)
    if (x.gated) c.require(x.pass, x.name + " = " + fmt(x.constant));
  return c;
}

Criterion check_flows() {
  Criterion c;
  const auto T2 = build_torus_grid(2, 16);
  const auto b = builtin_field("gradient_heat", {}, T2);
  const auto tg = uniform_time_grid(0.5, 5);
  const std::vector<Index> starts{0, 37, 101, 200};
  const auto ref = integrate_flow(T2, *b, tg, 0.5 / 12800, starts, false);
  std::vector<double> err;
  for (double h : {0.005, 0.0025, 0.00125}) {
    const auto F = integrate_flow(T2, *b, tg, h, starts, false);
    double e = 0.0;
    for (std::size_t i = 0; i < starts.size(); ++i) e = std::max(e, T2.chart_distance(F.position(5, i), ref.position(5, i)));
    err.push_back(e);
  }
  const double r1 = err[0] / err[1], r2 = err[1] / err[2];
  c.require(r1 >= kRk4Ratio && r2 >= kRk4Ratio, "RK4 ratios " + fmt(r1) + " " + fmt(r2));

  const auto g = uniform_time_grid(0.5, 10);
  auto rlf = [&](const MetricMeasureSpace& sp, const std::string& name, const FieldParams& p) {
    const auto f = builtin_field(name, p, sp);
    const auto F = integrate_flow(sp, *f, g, std::min(max_flow_step(sp, *f, g), 1e-3), {}, false);
    const auto rr = rlf_residual(F, *f, default_test_functions(sp, 10, 17));
    c.require(rr.pass, "RLF " + name + " ratio " + fmt(rr.max_ratio));
  };
  const auto T3 = build_torus_grid(3, 6);
  rlf(T3, "constant", {{"v", {0.2, 0.2, 0.2}}});
  for (const char* n : {"shear", "gradient_heat", "cdl_singular", "zero"}) rlf(T3, n, {});
  rlf(build_sphere_mesh(120), "rotation", {});

  const auto iso = run("c8-iso", "scenario = lusin-regularity\n[space]\nkind = torus\ndims = 3\nresolution = 8\n"
                                 "[field]\nname = constant\nv = [0.3, -0.2, 0.1]\n");
  const double L = row(iso, "isometric-compressibility").constant, drift = row(iso, "isometric-q-star").constant;
  c.require(L <= kIsoL, "isometric L = " + fmt(L));
  c.require(drift < kIsoDrift, "Q* drift " + fmt(drift));
  c.notes.push_back("RK4 ratios " + fmt(r1) + " " + fmt(r2) + "; isometric L " + fmt(L) + ", Q* drift " + fmt(drift));
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Criterion check_determinism() {
  Criterion c;
  const fs::path cfg = kOut / "c9.cfg";
  fs::create_directories(kOut);
  std::ofstream(cfg) << "scenario = contraction\n[space]\nkind = torus\ndims = 2\nresolution = 12\n"
                        "[field]\nname = shear\ns = 0.5\n[numerics]\nseed = 7\n";
  for (const char* d : {"c9-a", "c9-b"}) {
    const std::string cmd = std::string(MMSLAB_CLI) + " run " + cfg.string() + " -q --out " + (kOut / d).string();
    const int status = std::system(cmd.c_str());
    c.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, std::string("exit status of run ") + d);
  }
  const std::string a = slurp(kOut / "c9-a" / "report.csv"), b = slurp(kOut / "c9-b" / "report.csv");
  c.require(!a.empty() && a == b, "report.csv differs between runs");
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Criterion()>>> criteria{
      {"heat kernel on T1", check_heat_kernel},
      {"Green identities on T3", check_green_identities},
      {"Green asymptotics on T3", check_green_asymptotics},
      {"maximal and key estimates", check_maximal},
      {"W2 contraction", check_contraction},
      {"Lusin regularity", check_lusin},
      {"lift to T2 x S1", check_lift},
      {"flow integration and RLF", check_flows},
      {"deterministic reports", check_determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Criterion c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.pass = false;
      c.notes.push_back(std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : c.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << (c.pass ? "PASS " : "FAIL ") << i + 1 << " " << criteria[i].first
              << (detail.empty() ? "" : " (" + detail + ")") << std::endl;
    failed += !c.pass;
  }
  return failed == 0 ? 0 : 1;
}
