#include "mmslab/experiment.hpp"

#include "mmslab/serialize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace mms {
namespace {

constexpr const char* kVersion = "mmslab 1.0.0";

// ---------------------------------------------------------------------------
// configuration

const ConfigValue* find(const ConfigTable& t, const std::string& k) {
  auto it = t.find(k);
  return it == t.end() ? nullptr : &it->second;
}

void check_keys(const ConfigTable& t, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : t)
    if (!allowed.count(k)) throw ConfigError(v.line, "unknown key '" + k + "' in " + where);
}

int positive_int(const ConfigValue& v, const std::string& key) {
  const long x = v.integer(key);
  if (x <= 0) throw ConfigError(v.line, "'" + key + "' must be positive");
  return static_cast<int>(x);
}

double positive_number(const ConfigValue& v, const std::string& key) {
  const double x = v.number(key);
  if (!(x > 0.0)) throw ConfigError(v.line, "'" + key + "' must be positive");
  return x;
}

SpaceSpec default_space(const std::string& scenario) {
  SpaceSpec s;
  s.kind = "torus";
  if (scenario == "heat-kernel-check") {
    s.dims = 1;
    s.resolution = {32};
  } else if (scenario == "green-check") {
    s.dims = 3;
    s.resolution = {10};
  } else if (scenario == "maximal-estimates") {
    s.dims = 3;
    s.resolution = {12};
  } else if (scenario == "contraction") {
    s.kind = "sphere";
    s.points = 400;
  } else if (scenario == "lusin-regularity") {
    s.dims = 3;
    s.resolution = {16};
  } else if (scenario == "n2-lift") {
    s.dims = 2;
    s.resolution = {16};
    s.circle = 8;
  }
  return s;
}

std::string default_field(const std::string& scenario, const SpaceSpec& s) {
  if (scenario == "maximal-estimates") return "gradient_heat";
  if (scenario == "contraction") return s.kind == "sphere" ? "rotation" : "shear";
  if (scenario == "lusin-regularity" || scenario == "n2-lift") return "cdl_singular";
  return "zero";
}

const std::map<std::string, std::set<std::string>>& field_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"constant", {"v"}},
      {"rotation", {"axis", "speed"}},
      {"shear", {"s"}},
      {"gradient_heat", {"mode", "amp", "tau"}},
      {"cdl_singular", {"center", "alpha", "rho", "amp"}},
      {"zero", {}},
  };
  return keys;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"heat-kernel-check", "green-check",     "maximal-estimates", "contraction",
                                              "lusin-regularity",  "n2-lift",         "full-suite"};
  return names;
}

ExperimentConfig experiment_config_from(const ParsedConfig& cfg, const std::string& source) {
  ExperimentConfig ec;
  ec.source = source;
  check_keys(cfg.top, {"scenario", "out"}, "top level");
  for (const auto& [name, t] : cfg.tables)
    if (name != "space" && name != "field" && name != "numerics")
      throw ConfigError(cfg.table_lines.at(name), "unknown section '" + name + "'");

  const ConfigValue* sc = find(cfg.top, "scenario");
  if (!sc) throw ConfigError(0, "missing 'scenario'");
  ec.scenario = sc->text("scenario");
  const auto& names = scenario_names();
  if (std::find(names.begin(), names.end(), ec.scenario) == names.end())
    throw ConfigError(sc->line, "unknown scenario '" + ec.scenario + "'");
  if (const auto* o = find(cfg.top, "out")) ec.out_dir = o->text("out");

  ec.space = default_space(ec.scenario);
  if (auto it = cfg.tables.find("space"); it != cfg.tables.end()) {
    const auto& t = it->second;
    check_keys(t, {"kind", "dims", "resolution", "points", "base", "circle"}, "[space]");
    if (const auto* v = find(t, "kind")) {
      ec.space.kind = v->text("kind");
      if (ec.space.kind != "torus" && ec.space.kind != "sphere" && ec.space.kind != "product")
        throw ConfigError(v->line, "space kind must be torus, sphere or product");
      if (ec.space.kind == "sphere" && ec.space.points == 0) ec.space.points = 400;
      if (ec.space.kind == "product") {
        if (ec.space.base.empty()) ec.space.base = "torus";
        if (ec.space.circle == 0) ec.space.circle = 8;
        if (ec.space.dims == 0) ec.space.dims = 2;
        if (ec.space.resolution.empty()) ec.space.resolution = {16};
      }
    }
    if (const auto* v = find(t, "dims")) {
      ec.space.dims = positive_int(*v, "dims");
      if (ec.space.dims > 3) throw ConfigError(v->line, "torus dimension must be 1, 2 or 3");
    }
    if (const auto* v = find(t, "resolution")) {
      ec.space.resolution.clear();
      for (double r : v->numbers("resolution")) {
        if (r < 2 || r != std::floor(r)) throw ConfigError(v->line, "resolution entries must be integers >= 2");
        ec.space.resolution.push_back(static_cast<int>(r));
      }
      if (ec.space.resolution.empty()) throw ConfigError(v->line, "'resolution' is empty");
    }
    if (const auto* v = find(t, "points")) ec.space.points = positive_int(*v, "points");
    if (const auto* v = find(t, "base")) {
      ec.space.base = v->text("base");
      if (ec.space.base != "torus" && ec.space.base != "sphere")
        throw ConfigError(v->line, "product base must be torus or sphere");
    }
    if (const auto* v = find(t, "circle")) ec.space.circle = positive_int(*v, "circle");
    const bool torus_like = ec.space.kind == "torus" || (ec.space.kind == "product" && ec.space.base == "torus");
    if (torus_like && ec.space.dims == 0) ec.space.dims = 2;
    if (torus_like && ec.space.resolution.empty()) ec.space.resolution = {16};
    if (torus_like && ec.space.resolution.size() != 1 &&
        static_cast<int>(ec.space.resolution.size()) != ec.space.dims)
      throw ConfigError(t.count("resolution") ? t.at("resolution").line : it->second.begin()->second.line,
                        "resolution needs one entry or one per axis");
    if (ec.space.kind == "product" && ec.space.base == "sphere" && ec.space.points == 0) ec.space.points = 400;
  }

  ec.field.name = default_field(ec.scenario, ec.space);
  if (auto it = cfg.tables.find("field"); it != cfg.tables.end()) {
    const auto& t = it->second;
    if (const auto* v = find(t, "name")) ec.field.name = v->text("name");
    auto known = field_keys().find(ec.field.name);
    if (known == field_keys().end())
      throw ConfigError(t.count("name") ? t.at("name").line : cfg.table_lines.at("field"),
                        "unknown field '" + ec.field.name + "'");
    for (const auto& [k, v] : t) {
      if (k == "name") continue;
      if (!known->second.count(k))
        throw ConfigError(v.line, "field '" + ec.field.name + "' has no parameter '" + k + "'");
      ec.field.params[k] = v.numbers(k);
    }
  }

  if (ec.scenario == "contraction") {
    ec.numerics.T = 1.0;
    ec.numerics.t_intervals = 20;
  }
  if (auto it = cfg.tables.find("numerics"); it != cfg.tables.end()) {
    const auto& t = it->second;
    check_keys(t,
               {"scheme", "k_max", "bandwidth", "step", "T", "t_intervals", "t_grid", "r_grid", "r_count", "epsilon",
                "green_epsilon", "seed", "pairs", "n"},
               "[numerics]");
    auto& nm = ec.numerics;
    if (const auto* v = find(t, "scheme")) {
      nm.scheme = v->text("scheme");
      try {
        scheme_from_string(nm.scheme);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(v->line, e.what());
      }
    }
    if (const auto* v = find(t, "k_max")) nm.k_max = positive_int(*v, "k_max");
    if (const auto* v = find(t, "bandwidth")) nm.bandwidth = positive_number(*v, "bandwidth");
    if (const auto* v = find(t, "step")) nm.step = positive_number(*v, "step");
    if (const auto* v = find(t, "T")) nm.T = positive_number(*v, "T");
    if (const auto* v = find(t, "t_intervals")) nm.t_intervals = positive_int(*v, "t_intervals");
    if (const auto* v = find(t, "t_grid")) {
      nm.t_grid = v->numbers("t_grid");
      if (nm.t_grid.size() < 2 || nm.t_grid.front() != 0.0 || !std::is_sorted(nm.t_grid.begin(), nm.t_grid.end()) ||
          std::adjacent_find(nm.t_grid.begin(), nm.t_grid.end()) != nm.t_grid.end())
        throw ConfigError(v->line, "t_grid must increase strictly from 0");
    }
    if (const auto* v = find(t, "r_grid")) {
      nm.r_grid = v->numbers("r_grid");
      for (double r : nm.r_grid)
        if (!(r > 0.0)) throw ConfigError(v->line, "r_grid entries must be positive");
    }
    if (const auto* v = find(t, "r_count")) nm.r_count = positive_int(*v, "r_count");
    if (const auto* v = find(t, "epsilon")) {
      nm.epsilon = positive_number(*v, "epsilon");
      if (nm.epsilon >= 1.0) throw ConfigError(v->line, "epsilon must lie in (0, 1)");
    }
    if (const auto* v = find(t, "green_epsilon")) {
      nm.green_epsilon = v->number("green_epsilon");
      if (nm.green_epsilon < 0.0) throw ConfigError(v->line, "green_epsilon must be >= 0");
    }
    if (const auto* v = find(t, "seed")) {
      const long s = v->integer("seed");
      if (s < 0) throw ConfigError(v->line, "seed must be >= 0");
      nm.seed = static_cast<std::uint64_t>(s);
    }
    if (const auto* v = find(t, "pairs")) nm.pairs = positive_int(*v, "pairs");
    if (const auto* v = find(t, "n")) nm.n = positive_number(*v, "n");
  }
  return ec;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return experiment_config_from(parse_config_string(text), text);
}

std::string format_constant(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v == 0.0 ? 0.0 : v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "name,statement,constant,status,tolerance\n";
  for (const auto& r : rows)
    out << csv_field(r.name) << ',' << csv_field(r.statement) << ',' << format_constant(r.constant) << ','
        << (r.pass ? "pass" : "fail") << ',' << csv_field(r.gated ? r.tolerance : "report-only; " + r.tolerance)
        << '\n';
}

SpectralBasis cached_basis(const MetricMeasureSpace& space, const LaplacianOperator& L, Index k_max,
                           const std::filesystem::path& cache_dir) {
  const Index k = k_max > 0 ? std::min<Index>(k_max, space.size()) : space.size();
  if (cache_dir.empty() || L.scheme() == LaplacianScheme::TorusFourierExact) return eigendecompose(L, k);
  std::ostringstream key;
  save_space(key, space);
  key << to_string(L.scheme()) << ' ' << k << ' ' << format_double(L.bandwidth());
  char name[64];
  std::snprintf(name, sizeof name, "basis-%016llx.mms", static_cast<unsigned long long>(fnv1a(key.str())));
  const auto path = cache_dir / name;
  if (std::ifstream in(path); in) {
    try {
      return load_basis(in, space);
    } catch (const FormatError&) {
    } catch (const std::invalid_argument&) {
    }
  }
  SpectralBasis B = eigendecompose(L, k);
  std::error_code ec;
  std::filesystem::create_directories(cache_dir, ec);
  if (std::ofstream out(path); out) save_basis(out, B);
  return B;
}

namespace {

// ---------------------------------------------------------------------------
// running

using Clock = std::chrono::steady_clock;

struct Run {
  Run(const ExperimentConfig& c, std::ostream* l) : cfg(c), log(l) {}
  const ExperimentConfig& cfg;
  std::ostream* log = nullptr;
  std::string prefix;
  std::vector<ReportRow> rows;
  std::vector<std::pair<std::string, std::string>> series;
  std::vector<std::pair<std::string, double>> timings;
  Clock::time_point mark = Clock::now();

  void gate(const std::string& name, const std::string& statement, double c, bool pass, const std::string& tol) {
    rows.push_back({prefix + name, statement, c, pass, tol, true});
    if (log) *log << "  " << (pass ? "pass " : "FAIL ") << prefix << name << " = " << format_constant(c) << '\n';
  }
  void info(const std::string& name, const std::string& statement, double c, bool pass, const std::string& tol) {
    rows.push_back({prefix + name, statement, c, pass, tol, false});
    if (log) *log << "  info " << prefix << name << " = " << format_constant(c) << '\n';
  }
  void add_series(const std::string& name, std::string csv) { series.emplace_back(prefix_file(name), std::move(csv)); }
  void lap(const std::string& what) {
    const auto now = Clock::now();
    const double s = std::chrono::duration<double>(now - mark).count();
    timings.emplace_back(prefix + what, s);
    mark = now;
    if (log) *log << "[" << prefix << what << "] " << format_constant(s) << " s\n";
  }
  std::string prefix_file(const std::string& name) const {
    std::string p = prefix;
    std::replace(p.begin(), p.end(), '/', '-');
    return p + name;
  }
};

struct Setup {
  SpaceSpec space;
  FieldSpec field;
  Numerics num;
};

std::shared_ptr<const MetricMeasureSpace> torus_from(const SpaceSpec& s) {
  if (s.resolution.size() == 1)
    return std::make_shared<const MetricMeasureSpace>(build_torus_grid(s.dims, s.resolution[0]));
  return std::make_shared<const MetricMeasureSpace>(build_torus_grid(s.resolution));
}

std::shared_ptr<const MetricMeasureSpace> make_space(const SpaceSpec& s) {
  if (s.kind == "torus") return torus_from(s);
  if (s.kind == "sphere") return std::make_shared<const MetricMeasureSpace>(build_sphere_mesh(s.points));
  auto base = s.base == "sphere" ? std::make_shared<const MetricMeasureSpace>(build_sphere_mesh(s.points)) : torus_from(s);
  return std::make_shared<const MetricMeasureSpace>(build_product_with_circle(base, s.circle));
}

LaplacianScheme scheme_for(const MetricMeasureSpace& space, const Numerics& num) {
  if (!num.scheme.empty()) return scheme_from_string(num.scheme);
  if (space.is_periodic_grid()) return LaplacianScheme::TorusFourierExact;
  if (space.factors().size() > 1) return LaplacianScheme::ProductKron;
  return LaplacianScheme::GraphGaussian;
}

double nominal_n(const MetricMeasureSpace& space, const Numerics& num) {
  return num.n > 0 ? num.n : space.nominal_dimension();
}

std::vector<double> time_grid(const Numerics& num) {
  return num.t_grid.empty() ? uniform_time_grid(num.T, num.t_intervals) : num.t_grid;
}

double flow_step(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& tg,
                 const Numerics& num) {
  return num.step > 0 ? num.step : std::min(max_flow_step(space, b, tg), 1e-3);
}

std::vector<std::pair<Index, Index>> sample_pairs(Index n, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::vector<std::pair<Index, Index>> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    const Index x = pick(rng), y = pick(rng);
    if (x != y) out.emplace_back(x, y);
  }
  return out;
}

std::vector<Index> spread_points(Index n, int count) {
  std::vector<Index> out;
  for (int i = 0; i < count && i < n; ++i) out.push_back(static_cast<Index>((static_cast<double>(i) * n) / count));
  return out;
}

std::vector<double> log_grid(double a, double b, int count) {
  std::vector<double> g;
  for (int i = 0; i < count; ++i) g.push_back(a * std::pow(b / a, count == 1 ? 0.0 : double(i) / (count - 1)));
  return g;
}

std::string fmt(double v) { return format_constant(v); }

std::string tol_lt(double t) { return "< " + fmt(t); }

// ---------------------------------------------------------------------------
// heat-kernel-check

void heat_kernel_check(Run& run, const Setup& st) {
  const auto space = make_space(st.space);
  const auto L = assemble_laplacian(*space, scheme_for(*space, st.num), st.num.bandwidth);
  const SpectralBasis B = cached_basis(*space, L, st.num.k_max, run.cfg.cache_dir);
  run.lap("basis");
  const Index N = space->size();
  const double t = 0.01;

  const auto [tr_kernel, tr_spec] = heat_trace(B, t);
  const double tr_res = std::abs(tr_kernel - tr_spec);
  run.gate("trace-identity", "sum_x p_t(x,x) m(x) = sum_i exp(-lambda_i t) at t = 0.01", tr_res, tr_res < 1e-9,
           tol_lt(1e-9));

  // Chapman-Kolmogorov through the weighted sum over all intermediate points.
  const std::vector<Index> xs = spread_points(N, 8);
  double ck = 0.0, sym = 0.0, mass = 0.0;
  const double s = 0.004, u = 0.006;
  Eigen::MatrixXd Pu(N, xs.size());
  for (std::size_t j = 0; j < xs.size(); ++j) Pu.col(j) = heat_kernel_column(B, u, xs[j]);
  for (Index x : xs) {
    const Eigen::VectorXd ps = heat_kernel_column(B, s, x);
    const Eigen::VectorXd psu = heat_kernel_column(B, s + u, x);
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const double sum = (ps.array() * Pu.col(j).array() * space->weights().array()).sum();
      ck = std::max(ck, std::abs(sum - psu[xs[j]]));
    }
    for (double tt : {0.001, 0.01, 0.1}) {
      const Eigen::VectorXd p = heat_kernel_column(B, tt, x);
      mass = std::max(mass, std::abs(p.dot(space->weights()) - 1.0));
    }
    for (Index y : xs) sym = std::max(sym, std::abs(heat_kernel(B, t, x, y) - heat_kernel(B, t, y, x)));
  }
  run.gate("chapman-kolmogorov", "sum_z p_s(x,z) p_u(z,y) m(z) = p_{s+u}(x,y)", ck, ck < 1e-9, tol_lt(1e-9));
  run.gate("mass-conservation", "sum_y p_t(x,y) m(y) = 1", mass, mass < 1e-9, tol_lt(1e-9));
  run.gate("kernel-symmetry", "p_t(x,y) = p_t(y,x)", sym, sym < 1e-12, tol_lt(1e-12));

  std::ostringstream ser;
  ser << "t,p_t(0,0),closed_form,trace\n";
  const bool periodic = space->is_periodic_grid() && B.k_max() == N;
  for (double tt : log_grid(1e-3, 1.0, 13))
    ser << fmt(tt) << ',' << fmt(heat_kernel(B, tt, 0, 0)) << ','
        << (periodic ? fmt(torus_heat_kernel_closed_form(*space, tt, 0, 0)) : "nan") << ','
        << fmt(heat_trace(B, tt).second) << '\n';
  run.add_series("heat_kernel.csv", ser.str());
  if (periodic) {
    const double dev = std::abs(heat_kernel(B, t, 0, 0) - torus_heat_kernel_closed_form(*space, t, 0, 0));
    run.gate("heat-closed-form", "p_t(0,0) matches the theta series at t = 0.01", dev, dev < 1e-6, tol_lt(1e-6));
  }
  run.lap("identities");

  const double n = nominal_n(*space, st.num);
  std::mt19937_64 rng(st.num.seed);
  const auto pairs = sample_pairs(N, std::min(200, st.num.pairs), rng);
  const auto t_grid = log_grid(0.005, 0.1, 6);
  const HeatKernelReport hk = verify_gaussian_bounds(B, *space, n, t_grid, pairs);
  run.gate("gaussian-bounds", "two-sided Gaussian bounds for p_t with fitted C1 (C3 fixed), t in [0.005, 0.1]", hk.C1,
           std::isfinite(hk.C1), "finite");
  run.info("gaussian-gradient", "|grad p_t| Gaussian bound with fitted C2", hk.C2, std::isfinite(hk.C2), "finite");
  run.lap("gaussian-bounds");

  std::unique_ptr<GradientStencil> stencil;
  if (!B.analytic()) stencil = std::make_unique<GradientStencil>(*space);
  std::vector<Eigen::VectorXd> fs;
  for (const auto& f : default_test_functions(*space, 4, st.num.seed)) fs.push_back(f->sample(*space));
  const double K = space->chart() == "sphere" ? 1.0 : 0.0;
  const BakryEmeryReport be = verify_bakry_emery(B, K, fs, {0.001, 0.01, 0.05}, stencil.get());
  if (B.analytic())
    run.gate("bakry-emery", "|grad P_t f|^2 <= exp(-2Kt) P_t |grad f|^2, relative excess", be.worst_relative,
             be.worst_relative < 1e-9, tol_lt(1e-9));
  else
    run.info("bakry-emery", "|grad P_t f|^2 <= exp(-2Kt) P_t |grad f|^2, relative excess", be.worst_relative,
             be.worst_relative < 0.1, "< 0.1 with stencil gradients");

  const auto radii = default_ahlfors_radii(*space, 6);
  const AhlforsReport ah = check_ahlfors(*space, n, radii, spread_points(N, 16));
  const auto eb = eigenfunction_bounds(B, n, K, ah.c1, hk.C1, hk.C3, stencil.get(), 64);
  run.info("eigenfunction-sup", "||u_i||_inf against (C1 e / c1)(C3 + lambda_i)^{n/2}", eb.max_sup_ratio,
           eb.max_sup_ratio <= 1.0, "<= 1");
  run.gate("eigenfunction-gradient", "||grad u_i||_inf <= e sqrt((lambda_i + |K|)/2) ||u_i||_inf",
           eb.max_grad_ratio_with_e, eb.max_grad_ratio_with_e <= 1.0 + 1e-9, "<= 1");
  run.info("eigenfunction-gradient-no-e", "||grad u_i||_inf <= sqrt((lambda_i + |K|)/2) ||u_i||_inf",
           eb.max_grad_ratio, eb.max_grad_ratio <= 1.0, "<= 1");
  run.lap("bakry-emery");
}

// ---------------------------------------------------------------------------
// green-check

MetricMeasureSpace three_point_graph() {
  Eigen::VectorXd w(3);
  w << 0.2, 0.3, 0.5;
  return build_graph(3, {{0, 1, 1.0}, {1, 2, 1.5}, {0, 2, 2.0}}, w, 1);
}

double pseudo_inverse_deviation() {
  const auto g = three_point_graph();
  const auto L = assemble_laplacian(g, LaplacianScheme::GraphGaussian, 1.5);
  const SpectralBasis B = eigendecompose(L, 3);
  const GreenFunction G(B, 0.0);
  const Eigen::MatrixXd K = L.dense();
  const Eigen::VectorXd sw = g.weights().cwiseSqrt();
  const Eigen::MatrixXd S = sw.asDiagonal() * K * sw.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd Sp = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(0.5 * (S + S.transpose())).pseudoInverse();
  const Eigen::MatrixXd op = sw.cwiseInverse().asDiagonal() * Sp * sw.asDiagonal();
  double dev = 0.0;
  for (Index x = 0; x < 3; ++x)
    for (Index y = 0; y < 3; ++y) dev = std::max(dev, std::abs(op(x, y) / g.weight(y) - G(x, y)));
  return dev;
}

void green_check(Run& run, const Setup& st) {
  const auto space = make_space(st.space);
  const auto L = assemble_laplacian(*space, scheme_for(*space, st.num), st.num.bandwidth);
  const SpectralBasis B = cached_basis(*space, L, st.num.k_max, run.cfg.cache_dir);
  const GreenFunction G(B, st.num.green_epsilon);
  run.lap("basis");
  const Index N = space->size();
  const double n = nominal_n(*space, st.num);
  std::mt19937_64 rng(st.num.seed);
  std::normal_distribution<double> gauss;

  double act = 0.0;
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd f(N);
    for (Index p = 0; p < N; ++p) f[p] = gauss(rng);
    act = std::max(act, verify_green_action(G, L, f));
  }
  run.gate("green-action", "sum_y G(x,y) Delta f(y) m(y) = mean f - f(x), 50 random f", act, act < 1e-8, tol_lt(1e-8));

  double lap = 0.0, semi = 0.0;
  for (Index x : spread_points(N, 4)) {
    lap = std::max(lap, verify_green_laplacian(B, L, 0.01, x));
    semi = std::max(semi, verify_green_semigroup(B, 0.02, x));
  }
  run.gate("green-laplacian", "Delta G^eps_x = 1 - p_eps(x, .) at eps = 0.01", lap, lap < 1e-8, tol_lt(1e-8));
  run.gate("green-semigroup", "G^eps_x = P_{eps/2} G^{eps/2}_x at eps = 0.02", semi, semi < 1e-8, tol_lt(1e-8));

  const double pinv = pseudo_inverse_deviation();
  run.gate("green-pseudo-inverse", "G is the pseudo-inverse of -Delta on mean-zero functions (3-point graph)", pinv,
           pinv < 1e-10, tol_lt(1e-10));
  run.lap("identities");

  // Quadrature cross-check on a far pair and a mid-range pair.
  Index far = 1, mid = 1;
  for (Index y = 1; y < N; ++y) {
    if (space->distance(0, y) > space->distance(0, far)) far = y;
    if (std::abs(space->distance(0, y) - 0.25) < std::abs(space->distance(0, mid) - 0.25)) mid = y;
  }
  double quad = 0.0;
  for (Index y : {far, mid}) quad = std::max(quad, std::abs(green_time_integral(B, 0, y) - green(B, 0.0, 0, y)));
  run.gate("green-time-integral", "int (p_t - 1) dt over log-spaced t in [1e-6, 50] = spectral G", quad, quad < 1e-4,
           tol_lt(1e-4));
  run.lap("quadrature");

  std::ostringstream ser;
  ser << "d,G\n";
  {
    const Eigen::VectorXd g0 = G.column(0);
    std::vector<std::pair<double, double>> prof;
    for (Index y = 1; y < N; ++y) prof.emplace_back(space->distance(0, y), g0[y]);
    std::sort(prof.begin(), prof.end());
    for (const auto& [d, g] : prof) ser << fmt(d) << ',' << fmt(g) << '\n';
  }
  run.add_series("green_profile.csv", ser.str());

  if (n > 2 && !space->is_graph()) {
    const auto [lo, hi] = green_distance_profile(G, n, 1.5 * space->grid_spacing());
    run.gate("green-near-diagonal", "G(x,y) d^{n-2} near the diagonal against the flat value 1/(4 pi)", hi,
             lo >= 0.04 && hi <= 0.16, "range " + fmt(lo) + ".." + fmt(hi) + " inside [0.04, 0.16]");
    const ShiftedGreen sg = fit_comparability_constants(G, n);
    run.gate("green-comparability", "|G|, G_bar <= A d^{2-n} and G_bar >= d^{2-n}/A with fitted A", sg.A,
             std::isfinite(sg.A), "finite");
    const double cs = fit_green_slope_constant(G, 0, n);
    run.gate("green-slope", "slope of G_x at y <= C d(x,y)^{1-n}", cs, std::isfinite(cs), "finite");
    run.lap("comparability");
  }

  const double p = n > 1 ? 1.0 + 0.4 * (n / (n - 1) - 1.0) : 1.5;
  const W1pReport w = verify_w1p_convergence(B, 0, p, {0.04, 0.02, 0.01, 0.005, 0.0025});
  run.gate("w1p-convergence", "||G^eps_x - G_x||_{W^{1,p}} decreases as eps -> 0", w.norms.back(),
           w.monotone_within_10pct, "nonincreasing within 10% per step");
  run.info("w1p-final", "W^{1,p} distance at eps = 0.0025", w.norms.back(), w.final_below_1e6, tol_lt(1e-6));
  run.lap("w1p");
}

// ---------------------------------------------------------------------------
// maximal-estimates

FieldPtr make_field(const FieldSpec& f, const MetricMeasureSpace& space, double T) {
  auto b = std::const_pointer_cast<VectorField>(builtin_field(f.name, f.params, space));
  b->set_t_end(T);
  return b;
}

void maximal_estimates(Run& run, const Setup& st) {
  const auto space = make_space(st.space);
  const FieldPtr b = make_field(st.field, *space, 1.0);
  const auto L = assemble_laplacian(*space, scheme_for(*space, st.num), st.num.bandwidth);
  const SpectralBasis B = cached_basis(*space, L, st.num.k_max, run.cfg.cache_dir);
  const GreenFunction G(B, st.num.green_epsilon);
  const GradientStencil stencil(*space);
  run.lap("basis");
  const Index N = space->size();
  const double n = nominal_n(*space, st.num);
  std::mt19937_64 rng(st.num.seed);

  const AhlforsReport ah = check_ahlfors(*space, n, default_ahlfors_radii(*space, 8), spread_points(N, 24));
  run.gate("ahlfors-regularity", "c1 r^n <= m(B(x,r)) <= c2 r^n, ratio c2/c1", ah.c2 / ah.c1, !ah.ratio_flagged,
           "c2/c1 <= 100");
  run.info("doubling", "m(B(x,2r)) <= c_D m(B(x,r))", ah.c_doubling, true, "measured");

  const RegularityModuli mod = compute_moduli(*space, *b, 0.0);
  Eigen::VectorXd f = mod.g_combined;
  if (f.maxCoeff() <= 0.0) {
    std::uniform_real_distribution<double> unif;
    for (Index p = 0; p < N; ++p) f[p] = unif(rng);
  }
  const Eigen::VectorXd Mf = maximal_function(*space, f);
  const double dom = (f - Mf).maxCoeff();
  run.gate("maximal-dominates", "Mf >= f pointwise", dom, dom <= 1e-12, "max(f - Mf) <= 1e-12");
  run.lap("maximal-function");

  const auto pairs = sample_pairs(N, st.num.pairs, rng);
  const PairEstimateReport pk = verify_pair_kernel_estimate(*space, f, n, pairs);
  run.gate("pair-kernel-estimate", "sum_z f(z) d(x,z)^{1-n} d(y,z)^{1-n} m(z) <= C d(x,y)^{2-n} (Mf(x) + Mf(y))",
           pk.C, pk.C < 50, tol_lt(50));
  run.lap("pair-kernel");

  const KeyEstimateReport ke = verify_key_maximal_estimate(stencil, G, *b, 0.0, n, pairs);
  const bool smooth = st.field.name == "gradient_heat";
  run.gate("key-maximal-estimate", "|b.grad G_x(y) + b.grad G_y(x)| <= C d(x,y)^{2-n} (Mg(x) + Mg(y))", ke.C,
           smooth ? ke.C < 100 : std::isfinite(ke.C), smooth ? tol_lt(100) : "finite");
  {
    std::ostringstream ser;
    ser << "x,y,d,ratio\n";
    for (std::size_t i = 0; i < pairs.size(); ++i)
      ser << pairs[i].first << ',' << pairs[i].second << ',' << fmt(space->distance(pairs[i].first, pairs[i].second))
          << ',' << fmt(ke.ratios[i]) << '\n';
    run.add_series("key_estimate.csv", ser.str());
  }
  run.lap("key-estimate");

  const ProbeEnvelopeReport pe = sym_modulus_probe(B, L, *b, 0.0, 12, 12, 8, 0.01, &stencil);
  run.gate("sym-modulus-envelope", "|B(f,g)| <= sum h |grad f| |grad g| m over probe pairs", pe.max_violation,
           pe.feasible && pe.max_violation <= 1e-9, "feasible, violation <= 1e-9");
  run.info("sym-modulus-l2", "||h_probe||_2 / || |sym grad b| ||_2", pe.l2_chart > 0 ? pe.l2_probe / pe.l2_chart : 0.0,
           true, "measured");
  const Eigen::VectorXd dd = discrete_divergence(stencil, *b, 0.0);
  run.info("divergence-consistency", "discrete divergence against the closed form, max difference",
           (dd - mod.div).cwiseAbs().maxCoeff(), true, "O(h^2)");
  double adj = 0.0;
  for (const auto& tf : default_test_functions(*space, 4, st.num.seed))
    adj = std::max(adj, adjoint_residual(stencil, *b, tf->sample(*space), 0.0));
  run.info("derivation-adjoint", "|int b.grad f + int div b f|", adj, true, "O(h^2)");
  const DistancePowerIntegral dp = distance_power_integral(*space, 0, n - 1);
  run.info("distance-power-integral", "int d(x,z)^{1-n} dm(z)", dp.value, !dp.divergent_in_limit, "finite");
  run.lap("modulus");
}

// ---------------------------------------------------------------------------
// contraction

std::pair<DiscreteMeasure, DiscreteMeasure> bump_pair(const MetricMeasureSpace& space) {
  if (space.chart() == "sphere") {
    const std::vector<double> a{0.8, 0.6, 0.0}, c{0.0, 0.6, 0.8};
    return {gaussian_bump(space, space.nearest_point(a), 0.3, 0.8),
            gaussian_bump(space, space.nearest_point(c), 0.3, 0.8)};
  }
  std::vector<double> a(space.ambient_dim(), 0.3), c(space.ambient_dim(), 0.3);
  c[0] = 0.6;
  if (c.size() > 1) c[1] = 0.55;
  const double sigma = std::max(0.08, 1.5 * space.grid_spacing());
  return {gaussian_bump(space, space.nearest_point(a), sigma, 2.5 * sigma),
          gaussian_bump(space, space.nearest_point(c), sigma, 2.5 * sigma)};
}

double sym_sup_over(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& tg) {
  double L = 0.0;
  for (double t : tg) L = std::max(L, sym_modulus_chart(space, b, t).maxCoeff());
  return L;
}

void rlf_rows(Run& run, const FlowMap& F, const VectorField& b, std::uint64_t) {
  const RlfResidualReport r = rlf_residual(F, b, default_test_functions(*F.space, 10, 17));
  run.gate("rlf-residual", "|f(X_{t+h}) - f(X_t) - h b.grad f| <= 2 h^2 max|d^2 f/dt^2|", r.max_ratio, r.pass,
           "ratio <= 1");
  const double L = compressibility(F);
  run.info("compressibility", "X_t# m <= L m", L, std::isfinite(L), "measured");
}

void contraction(Run& run, const Setup& st) {
  const auto space = make_space(st.space);
  const auto tg = time_grid(st.num);
  const FieldPtr b = make_field(st.field, *space, tg.back());
  const FlowMap F = integrate_flow(*space, *b, tg, flow_step(*space, *b, tg, st.num));
  run.lap("flow");
  rlf_rows(run, F, *b, st.num.seed);
  const double h = space->grid_spacing();

  const double L = sym_sup_over(*space, *b, tg);
  const auto [mu0, nu0] = bump_pair(*space);
  const ContractionReport cr = verify_contraction(F, mu0, nu0, L, st.num.pairs, st.num.seed);
  if (L <= 1e-9)
    run.gate("w2-contraction", "W2(mu_t, nu_t) = W2(mu_0, nu_0) for an isometric flow", cr.max_ratio,
             cr.min_ratio >= 1 - cr.tol && cr.max_ratio <= 1 + cr.tol, "|ratio - 1| <= tol = " + fmt(cr.tol));
  else
    run.gate("w2-contraction", "W2(mu_t, nu_t) <= exp(L t) W2(mu_0, nu_0)", cr.max_ratio, cr.bound_holds,
             "ratio <= 1 + tol = " + fmt(1 + cr.tol));
  run.info("sym-sup", "L = sup_t || |sym grad b_t| ||_inf", L, true, "measured");
  run.gate("trajectory-lipschitz", "d(X_t x, X_t y) <= exp(L t) d(x, y)", cr.pair_max_ratio, cr.pairs_hold,
           "ratio <= 1 + 1e-3");
  {
    std::ostringstream ser;
    ser << "t,w2,bound,ratio\n";
    for (std::size_t k = 0; k < cr.times.size(); ++k)
      ser << fmt(cr.times[k]) << ',' << fmt(cr.w2[k]) << ',' << fmt(cr.bound[k]) << ',' << fmt(cr.ratio[k]) << '\n';
    run.add_series("contraction.csv", ser.str());
  }
  run.lap("contraction");

  const MeasureTrajectory tm = pushforward(F, mu0), tn = pushforward(F, nu0);
  const DerivativeReport dr = verify_w2_derivative(*space, tm, *b, atoms_of(nu0));
  run.gate("w2-derivative", "d/dt W2^2(mu_t, nu)/2 = int b.grad phi_t dmu_t", dr.max_discrepancy, dr.pass,
           "<= 5 h ||b||_inf W2 per node");
  const DerivativeReport jr = verify_joint_derivative(*space, tm, tn, *b);
  run.gate("joint-derivative", "d/dt W2^2(mu_t, nu_t)/2 <= int b.grad phi dmu_t + int b.grad psi dnu_t",
           jr.max_discrepancy, jr.pass, "excess <= 5 h ||b||_inf W2 per node");
  const double wc = weak_continuity_residual(*space, tm, *b, default_test_functions(*space, 6, st.num.seed));
  run.gate("weak-continuity", "d/dt int f dmu_t = int b.grad f dmu_t", wc, wc <= 1.0, "<= 5 h Lip(f) sup|b|");
  run.lap("derivatives");

  if (space->is_periodic_grid() && st.field.name != "cdl_singular") {
    const MeasureTrajectory up = continuity_equation_solve(*space, *b, mu0, tg, CeMethod::Upwind);
    double worst = 0.0;
    for (std::size_t k = 0; k < tg.size(); k += std::max<std::size_t>(1, tg.size() / 4))
      worst = std::max(worst, wasserstein2(*space, tm.measures[k], up.measures[k]).w2());
    run.gate("upwind-agreement", "W2(pushforward, upwind) at sampled nodes", worst, worst <= 3 * h,
             "<= 3 h = " + fmt(3 * h));
    run.lap("upwind");
  }

  const AtomCloud e0 = atoms_of(mu0), e1 = atoms_of(nu0);
  if (e0.mass.size() <= 200 && e1.mass.size() <= 200) {
    std::vector<double> sg;
    for (int i = 0; i <= 20; ++i) sg.push_back(i / 20.0);
    const GeodesicReport gr = verify_geodesic_differentiation(*space, *b, 0.0, e0, e1, sg);
    run.info("geodesic-differentiation", "d/ds int b.v_s deta_s = int sym grad b(v_s, v_s) deta_s", gr.max_relative,
             gr.pass, "relative <= 0.15");
    run.lap("geodesic");
  }
}

// ---------------------------------------------------------------------------
// lusin-regularity and the lift

void lift_rows(Run& run, const LiftReport& lr, double eps) {
  run.gate("lift-tensorization", "product eigenvalues = lambda_i + 4 pi^2 k^2", lr.tensor_error,
           lr.tensor_error < 1e-8, tol_lt(1e-8));
  run.gate("lift-eigen-residual", "|L u - lambda u| on product eigenpairs", lr.eigen_residual,
           lr.eigen_residual < 1e-8, tol_lt(1e-8));
  run.gate("lift-divergence", "div of the lift = div b composed with the projection", lr.div_error,
           lr.div_error < 1e-10, tol_lt(1e-10));
  run.gate("lift-sym-modulus", "|sym grad| of the lift = |sym grad b| composed with the projection", lr.sym_error,
           lr.sym_error < 1e-8, tol_lt(1e-8));
  run.gate("lift-projection", "projected lifted flow = base flow", lr.projection_error, lr.projection_error < 1e-10,
           tol_lt(1e-10));
  run.gate("lift-circle-drift", "circle coordinate is constant along the lifted flow", lr.circle_drift,
           lr.circle_drift < 1e-12, tol_lt(1e-12));
  run.info("product-A", "comparability constant of the product Green function", lr.A, std::isfinite(lr.A), "finite");
  run.gate("product-q-le-phi", "Q_{t,r} <= Phi_{t,r} on the product", static_cast<double>(lr.product_q.phi_violations),
           lr.product_q.phi_violations == 0, "0 violations");
  run.info("product-chebyshev-mass", "m(product \\ E)", lr.product_lusin.excluded_mass,
           lr.product_lusin.excluded_mass < eps, tol_lt(eps));
  run.gate("base-chebyshev-mass", "m(base \\ E) with Q* maximized over the circle", lr.base_lusin.excluded_mass,
           lr.base_lusin.excluded_mass < eps, tol_lt(eps));
  run.gate("base-lipschitz-on-E", "d(X_t x, X_t y) <= C exp(C (Q*(x) + Q*(y))) d(x, y) on E x E",
           lr.base_lusin.C_fit, lr.base_lusin.all_within, "all sampled pairs");
}

void n2_lift(Run& run, const Setup& st) {
  SpaceSpec base = st.space;
  if (base.kind == "product") base.kind = base.base;
  const int circle = st.space.circle > 0 ? st.space.circle : 8;
  auto bs = make_space(base);
  if (bs->nominal_dimension() != 2) throw ConfigError(0, "n2-lift needs a two-dimensional base");
  const auto tg = time_grid(st.num);
  const FieldPtr b = make_field(st.field, *bs, tg.back());
  LiftOptions opt;
  opt.step = flow_step(*bs, *b, tg, st.num);
  opt.epsilon = st.num.epsilon;
  opt.green_epsilon = st.num.green_epsilon;
  opt.r_count = st.num.r_count;
  opt.seed = st.num.seed;
  const LiftReport lr = lift_and_verify_n2(bs, b, tg, circle, opt);
  lift_rows(run, lr, st.num.epsilon);
  std::ostringstream ser;
  ser << "point,base_q_star,retained\n";
  for (Index p = 0; p < bs->size(); ++p)
    ser << p << ',' << fmt(lr.base_q_star[p]) << ',' << int(lr.base_lusin.retained[p]) << '\n';
  run.add_series("base_qstar.csv", ser.str());
  run.lap("lift");
}

void lusin_regularity(Run& run, const Setup& st) {
  const auto space = make_space(st.space);
  if (space->nominal_dimension() == 2 && !space->base()) {
    n2_lift(run, st);
    return;
  }
  const double n = nominal_n(*space, st.num);
  const auto tg = time_grid(st.num);
  const FieldPtr b = make_field(st.field, *space, tg.back());
  const auto L = assemble_laplacian(*space, scheme_for(*space, st.num), st.num.bandwidth);
  const SpectralBasis B = cached_basis(*space, L, st.num.k_max, run.cfg.cache_dir);
  const GreenFunction G(B, st.num.green_epsilon);
  const ShiftedGreen sg = fit_comparability_constants(G, n);
  run.info("comparability-A", "fitted A for G comparable to d^{2-n}", sg.A, std::isfinite(sg.A), "finite");
  run.lap("green");

  const FlowMap F = integrate_flow(*space, *b, tg, flow_step(*space, *b, tg, st.num));
  run.lap("flow");
  rlf_rows(run, F, *b, st.num.seed);
  run.lap("compressibility");

  const ShiftedGreenLookup lookup(G, sg.A_bar);
  const auto radii = st.num.r_grid.empty() ? default_r_grid(*space, st.num.r_count) : st.num.r_grid;
  const QStarReport q = q_star(F, radii, sg.A, n, &lookup);
  run.gate("q-le-phi", "Q_{t,r}(x) <= Phi_{t,r}(x) on the (x, t, r) grid", static_cast<double>(q.phi_violations),
           q.phi_violations == 0, "0 violations of " + std::to_string(q.phi_checks));
  run.info("q-minus-phi", "max Q - Phi", q.worst_q_minus_phi, q.worst_q_minus_phi <= 0, "<= 0");
  run.lap("q-star");

  if (st.field.name == "constant" || st.field.name == "rotation" || st.field.name == "zero") {
    const double drift = (q.q_star - q.q_star_initial).cwiseAbs().maxCoeff();
    run.gate("isometric-q-star", "Q* = Q*(t = 0) for an isometric flow", drift, drift < 1e-6, tol_lt(1e-6));
    const double Lc = compressibility(F);
    run.gate("isometric-compressibility", "L for an isometric flow", Lc, Lc <= 1.1, "<= 1.1");
  }

  LusinReport lr = lusin_set(*space, q.q_star, st.num.epsilon);
  run.gate("chebyshev-mass", "m(X \\ E) with E = {Q* <= ||Q*||_2 / sqrt(eps)}", lr.excluded_mass,
           lr.excluded_mass < st.num.epsilon, tol_lt(st.num.epsilon));
  verify_lipschitz_on_set(F, q.q_star, lr, st.num.seed);
  run.gate("lipschitz-on-E", "d(X_t x, X_t y) <= C exp(C (Q*(x) + Q*(y))) d(x, y) on E x E", lr.C_fit,
           lr.all_within, "all " + std::to_string(lr.pairs_checked) + " sampled pairs");
  run.info("lipschitz-constant", "C exp(2 C ||Q*||_2 / sqrt(eps))", lr.lip_constant, true, "measured");
  run.lap("lusin");

  if (st.field.name == "cdl_singular") {
    const auto it = st.field.params.find("center");
    std::vector<double> c = it == st.field.params.end() ? std::vector<double>(space->ambient_dim(), 0.5) : it->second;
    const auto rit = st.field.params.find("rho");
    const double rho = rit == st.field.params.end() ? 0.2 : rit->second.at(0);
    double inside = 0.0;
    for (Index p = 0; p < space->size(); ++p)
      if (!lr.retained[p] && space->chart_distance(space->coords(p), c) < 2 * rho) inside += space->weight(p);
    const double frac = lr.excluded_mass > 0 ? inside / lr.excluded_mass : 1.0;
    run.gate("excluded-near-core", "share of m(X \\ E) inside B(center, 2 rho)", frac, frac >= 0.8,
             lr.excluded_mass > 0 ? ">= 0.8" : ">= 0.8 (vacuous: nothing excluded)");
  }

  const double gint = g_time_integral(*space, *b, tg);
  const double ratio = qstar_bound_ratio(q.l2, compressibility(F), gint);
  run.gate("qstar-bound", "||Q*||_2 <= C (L int ||g_t||_2 dt + 1)", ratio, std::isfinite(ratio), "finite");

  if (B.analytic() && B.k_max() == space->size()) {
    std::mt19937_64 rng(st.num.seed + 1);
    const GreenFlowReport gf = verify_green_derivative_along_flow(F, B, st.num.green_epsilon, *b,
                                                                  sample_pairs(space->size(), 100, rng));
    run.gate("green-along-flow", "d/dt G(X_t x, X_t y) = b.grad G_{X_t x}(X_t y) + b.grad G_{X_t y}(X_t x)",
             gf.pass_rate, gf.pass_rate >= 0.95, ">= 0.95 of checks");
  }
  run.lap("bounds");

  std::ostringstream ser;
  ser << "point,q_star,q_star_initial,retained\n";
  for (Index p = 0; p < space->size(); ++p)
    ser << p << ',' << fmt(q.q_star[p]) << ',' << fmt(q.q_star_initial[p]) << ',' << int(lr.retained[p]) << '\n';
  run.add_series("qstar.csv", ser.str());
}

void run_scenario(Run& run, const std::string& scenario, const Setup& st) {
  if (scenario == "heat-kernel-check") heat_kernel_check(run, st);
  else if (scenario == "green-check") green_check(run, st);
  else if (scenario == "maximal-estimates") maximal_estimates(run, st);
  else if (scenario == "contraction") contraction(run, st);
  else if (scenario == "lusin-regularity") lusin_regularity(run, st);
  else if (scenario == "n2-lift") n2_lift(run, st);
}

Setup defaults_for(const std::string& scenario, const Numerics& base) {
  Setup st;
  st.space = default_space(scenario);
  st.field.name = default_field(scenario, st.space);
  st.num = Numerics{};
  st.num.seed = base.seed;
  st.num.pairs = base.pairs;
  st.num.epsilon = base.epsilon;
  if (scenario == "contraction") {
    st.num.T = 1.0;
    st.num.t_intervals = 20;
  }
  return st;
}

void write_outputs(const ExperimentConfig& cfg, const Run& run, bool pass) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir / "series");
  {
    std::ofstream out(cfg.out_dir / "report.csv", std::ios::binary);
    write_report_csv(out, run.rows);
  }
  for (const auto& [name, text] : run.series) {
    std::ofstream out(cfg.out_dir / "series" / name, std::ios::binary);
    out << text;
  }
  std::ofstream m(cfg.out_dir / "manifest.txt", std::ios::binary);
  m << kVersion << '\n';
  m << "eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
#ifdef __VERSION__
  m << "compiler " << __VERSION__ << '\n';
#endif
  m << "scenario " << cfg.scenario << '\n';
  m << "seed " << cfg.numerics.seed << '\n';
  m << "cache " << (cfg.cache_dir.empty() ? "none" : cfg.cache_dir.string()) << '\n';
  m << "result " << (pass ? "pass" : "fail") << '\n';
  m << "\n[timings]\n";
  double total = 0.0;
  for (const auto& [what, s] : run.timings) {
    m << what << ' ' << format_constant(s) << " s\n";
    total += s;
  }
  m << "total " << format_constant(total) << " s\n";
  m << "\n[config]\n" << cfg.source;
  if (!cfg.source.empty() && cfg.source.back() != '\n') m << '\n';
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  Run run(config, log);
  if (config.scenario == "full-suite") {
    for (const auto& s : scenario_names()) {
      if (s == "full-suite") continue;
      Setup st = defaults_for(s, config.numerics);
      // The suite keeps the Lusin run at desk scale.
      if (s == "lusin-regularity") st.space.resolution = {12};
      run.prefix = s + "/";
      if (log) *log << "== " << s << '\n';
      run_scenario(run, s, st);
    }
    run.prefix.clear();
  } else {
    Setup st{config.space, config.field, config.numerics};
    if (log) *log << "== " << config.scenario << '\n';
    try {
      run_scenario(run, config.scenario, st);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::out_of_range& e) {
      throw ConfigError(0, e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(0, e.what());
    }
  }
  ExperimentResult res;
  res.rows = run.rows;
  res.directory = config.out_dir;
  for (const auto& r : run.rows)
    if (r.gated && !r.pass) res.pass = false;
  write_outputs(config, run, res.pass);
  return res;
}

}  // namespace mms
