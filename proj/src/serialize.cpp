#include "mmslab/serialize.hpp"

#include <cstdio>
#include <iterator>
#include <sstream>

namespace mms {
namespace {

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void emit(std::ostream& out, const std::string& body) { out << body << "checksum " << hex64(fnv1a(body)) << '\n'; }

// Splits a checksummed artifact and returns the verified body.
std::string verified_body(std::istream& in) {
  const std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (all.empty() || all.back() != '\n') throw FormatError("checksum error: artifact is truncated");
  const auto pos = all.rfind("\nchecksum ", all.size() - 2);
  if (pos == std::string::npos) throw FormatError("checksum error: checksum line missing");
  const std::string body = all.substr(0, pos + 1);
  const std::string stored = all.substr(pos + 10, all.size() - pos - 11);
  if (stored != hex64(fnv1a(body))) throw FormatError("checksum error: content does not match its checksum");
  return body;
}

class LineReader {
 public:
  explicit LineReader(const std::string& body) : in_(body) {}
  std::istringstream next() {
    std::string line;
    if (!std::getline(in_, line)) throw FormatError("unexpected end of artifact");
    ++line_;
    return std::istringstream(line);
  }
  void expect(std::istringstream& s, const std::string& word) {
    std::string w;
    if (!(s >> w) || w != word) throw FormatError("line " + std::to_string(line_) + ": expected '" + word + "'");
  }
  template <class T>
  T read(std::istringstream& s) {
    std::string tok;
    if (!(s >> tok)) throw FormatError("line " + std::to_string(line_) + ": missing value");
    if constexpr (std::is_floating_point_v<T>) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (*end) throw FormatError("line " + std::to_string(line_) + ": bad number '" + tok + "'");
      return v;
    } else if constexpr (std::is_integral_v<T>) {
      char* end = nullptr;
      const long long v = std::strtoll(tok.c_str(), &end, 10);
      if (*end) throw FormatError("line " + std::to_string(line_) + ": bad integer '" + tok + "'");
      return static_cast<T>(v);
    } else {
      return tok;
    }
  }

 private:
  std::istringstream in_;
  int line_ = 0;
};

void check_header(LineReader& r, std::istringstream& s, const std::string& magic) {
  std::string m, v;
  s >> m >> v;
  if (m != magic) throw FormatError("not an " + magic + " artifact");
  if (v != "v1") throw FormatError("version mismatch: expected v1, found " + v);
  (void)r;
}

void write_row(std::ostringstream& o, const double* p, Index n) {
  for (Index k = 0; k < n; ++k) o << (k ? " " : "") << format_double(p[k]);
  o << '\n';
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void save_space(std::ostream& out, const MetricMeasureSpace& space) {
  std::ostringstream o;
  o << "mms-space v1 " << space.chart() << ' ' << space.size() << '\n';
  if (space.is_graph()) {
    o << "graph " << space.nominal_dimension() << ' ' << space.edges().size() << '\n';
    for (const auto& e : space.edges()) o << e.a << ' ' << e.b << ' ' << format_double(e.length) << '\n';
  } else {
    o << "factors " << space.factors().size() << '\n';
    for (const auto& f : space.factors()) {
      if (const auto* p = std::get_if<PeriodicAxis>(&f)) o << "periodic " << p->resolution << '\n';
      else o << "sphere " << std::get<SphereLattice>(f).points.size() << '\n';
    }
  }
  for (Index p = 0; p < space.size(); ++p) {
    o << p << ' ' << format_double(space.weight(p));
    for (double c : space.coords(p)) o << ' ' << format_double(c);
    o << '\n';
  }
  emit(out, o.str());
}

std::shared_ptr<MetricMeasureSpace> load_space(std::istream& in) {
  const std::string body = verified_body(in);
  LineReader r(body);
  auto head = r.next();
  check_header(r, head, "mms-space");
  const auto chart = r.read<std::string>(head);
  const auto n = r.read<Index>(head);
  auto kind = r.next();
  const auto tag = r.read<std::string>(kind);
  std::shared_ptr<MetricMeasureSpace> space;
  if (tag == "graph") {
    const int dim = r.read<int>(kind);
    const auto m = r.read<std::size_t>(kind);
    std::vector<GraphEdge> edges(m);
    for (auto& e : edges) {
      auto s = r.next();
      e.a = r.read<Index>(s);
      e.b = r.read<Index>(s);
      e.length = r.read<double>(s);
    }
    Eigen::VectorXd w(n);
    for (Index p = 0; p < n; ++p) {
      auto s = r.next();
      if (r.read<Index>(s) != p) throw FormatError("point ids out of order");
      w[p] = r.read<double>(s);
    }
    return std::make_shared<MetricMeasureSpace>(build_graph(n, std::move(edges), w, dim));
  }
  if (tag != "factors") throw FormatError("expected factor or graph description");
  const auto nf = r.read<std::size_t>(kind);
  std::vector<int> periodic;
  int sphere_points = 0;
  for (std::size_t f = 0; f < nf; ++f) {
    auto s = r.next();
    const auto t = r.read<std::string>(s);
    const int size = r.read<int>(s);
    if (t == "periodic") periodic.push_back(size);
    else if (t == "sphere" && f == 0) sphere_points = size;
    else throw FormatError("unsupported factor '" + t + "'");
  }
  const bool product = chart.rfind("product-circle(", 0) == 0;
  if (product) {
    if (periodic.empty()) throw FormatError("product chart needs a circle factor");
    const int circle = periodic.back();
    periodic.pop_back();
    std::shared_ptr<const MetricMeasureSpace> base =
        sphere_points ? std::make_shared<const MetricMeasureSpace>(build_sphere_mesh(sphere_points))
                      : std::make_shared<const MetricMeasureSpace>(build_torus_grid(periodic));
    space = std::make_shared<MetricMeasureSpace>(build_product_with_circle(base, circle));
  } else if (sphere_points) {
    space = std::make_shared<MetricMeasureSpace>(build_sphere_mesh(sphere_points));
  } else {
    space = std::make_shared<MetricMeasureSpace>(build_torus_grid(periodic));
  }
  if (space->chart() != chart || space->size() != n) throw FormatError("stored chart does not match its factors");
  for (Index p = 0; p < n; ++p) {
    auto s = r.next();
    if (r.read<Index>(s) != p) throw FormatError("point ids out of order");
    if (std::abs(r.read<double>(s) - space->weight(p)) > 1e-15) throw FormatError("stored weight mismatch");
    for (double c : space->coords(p))
      if (std::abs(r.read<double>(s) - c) > 1e-12) throw FormatError("stored coordinates mismatch");
  }
  return space;
}

void save_basis(std::ostream& out, const SpectralBasis& basis) {
  std::ostringstream o;
  const Index n = basis.size(), k = basis.k_max();
  o << "mms-spectral v1 " << to_string(basis.scheme) << ' ' << n << ' ' << k << '\n';
  o << "chart " << basis.space->chart() << '\n';
  o << "eigenvalues\n";
  write_row(o, basis.eigenvalues.data(), k);
  o << "eigenfunctions\n";
  const RowMatrix U = basis.eigenfunctions;
  for (Index p = 0; p < n; ++p) write_row(o, U.data() + p * k, k);
  o << "factors " << basis.factors.size() << '\n';
  for (const auto& f : basis.factors) {
    o << (f.periodic ? "periodic " : "lattice ") << f.eigenvalues.size() << '\n';
    if (f.periodic) continue;
    write_row(o, f.eigenvalues.data(), f.eigenvalues.size());
    const RowMatrix V = f.vectors;
    for (Index p = 0; p < V.rows(); ++p) write_row(o, V.data() + p * V.cols(), V.cols());
  }
  if (!basis.factors.empty())
    for (const auto& mi : basis.mode_index) {
      for (std::size_t f = 0; f < mi.size(); ++f) o << (f ? " " : "") << mi[f];
      o << '\n';
    }
  emit(out, o.str());
}

SpectralBasis load_basis(std::istream& in, const MetricMeasureSpace& space) {
  const std::string body = verified_body(in);
  LineReader r(body);
  auto head = r.next();
  check_header(r, head, "mms-spectral");
  SpectralBasis B;
  B.space = &space;
  B.scheme = scheme_from_string(r.read<std::string>(head));
  const auto n = r.read<Index>(head);
  const auto k = r.read<Index>(head);
  auto cl = r.next();
  r.expect(cl, "chart");
  const auto chart = r.read<std::string>(cl);
  if (n != space.size() || chart != space.chart())
    throw std::invalid_argument("dimension error: stored basis has " + std::to_string(n) + " points on " + chart +
                                ", space has " + std::to_string(space.size()) + " on " + space.chart());
  auto s = r.next();
  r.expect(s, "eigenvalues");
  B.eigenvalues.resize(k);
  s = r.next();
  for (Index i = 0; i < k; ++i) B.eigenvalues[i] = r.read<double>(s);
  s = r.next();
  r.expect(s, "eigenfunctions");
  B.eigenfunctions.resize(n, k);
  for (Index p = 0; p < n; ++p) {
    s = r.next();
    for (Index i = 0; i < k; ++i) B.eigenfunctions(p, i) = r.read<double>(s);
  }
  s = r.next();
  r.expect(s, "factors");
  const auto nf = r.read<std::size_t>(s);
  if (nf && nf != space.factors().size()) throw std::invalid_argument("dimension error: factor count mismatch");
  for (std::size_t f = 0; f < nf; ++f) {
    s = r.next();
    const auto kind = r.read<std::string>(s);
    const auto m = r.read<Index>(s);
    FactorBasis fb;
    fb.periodic = kind == "periodic";
    if (fb.periodic) {
      const auto* ax = std::get_if<PeriodicAxis>(&space.factors()[f]);
      if (!ax || ax->resolution != m) throw std::invalid_argument("dimension error: factor resolution mismatch");
      fb.modes = fourier_modes(ax->resolution);
      fb.eigenvalues.resize(m);
      fb.vectors.resize(m, m);
      for (Index j = 0; j < m; ++j) {
        fb.eigenvalues[j] = fb.modes[j].eigenvalue();
        for (Index p = 0; p < m; ++p) fb.vectors(p, j) = fb.modes[j].value(static_cast<double>(p) / m);
      }
    } else {
      fb.eigenvalues.resize(m);
      s = r.next();
      for (Index j = 0; j < m; ++j) fb.eigenvalues[j] = r.read<double>(s);
      fb.vectors.resize(m, m);
      for (Index p = 0; p < m; ++p) {
        s = r.next();
        for (Index j = 0; j < m; ++j) fb.vectors(p, j) = r.read<double>(s);
      }
    }
    B.factors.push_back(std::move(fb));
  }
  if (nf) {
    B.mode_index.assign(k, std::vector<int>(nf));
    for (Index i = 0; i < k; ++i) {
      s = r.next();
      for (std::size_t f = 0; f < nf; ++f) B.mode_index[i][f] = r.read<int>(s);
    }
  }
  return B;
}

void save_flow(std::ostream& out, const FlowMap& flow) {
  std::ostringstream o;
  o << "mms-flow v1 " << flow.space->chart() << ' ' << flow.starts.size() << ' ' << flow.times.size() << ' '
    << flow.dim() << '\n';
  o << "integrator " << flow.integrator << ' ' << format_double(flow.step) << ' '
    << format_double(flow.compressibility) << '\n';
  o << "times\n";
  write_row(o, flow.times.data(), static_cast<Index>(flow.times.size()));
  for (std::size_t i = 0; i < flow.starts.size(); ++i)
    for (std::size_t k = 0; k < flow.times.size(); ++k) {
      o << flow.starts[i] << ' ' << k;
      for (double c : flow.position(k, i)) o << ' ' << format_double(c);
      o << '\n';
    }
  emit(out, o.str());
}

FlowMap load_flow(std::istream& in, const MetricMeasureSpace& space) {
  const std::string body = verified_body(in);
  LineReader r(body);
  auto head = r.next();
  check_header(r, head, "mms-flow");
  const auto chart = r.read<std::string>(head);
  const auto ns = r.read<std::size_t>(head);
  const auto nt = r.read<std::size_t>(head);
  const auto dim = r.read<int>(head);
  if (chart != space.chart() || dim != space.ambient_dim())
    throw std::invalid_argument("dimension error: flow chart does not match the space");
  FlowMap flow;
  flow.space = &space;
  auto s = r.next();
  r.expect(s, "integrator");
  flow.integrator = r.read<std::string>(s);
  flow.step = r.read<double>(s);
  flow.compressibility = r.read<double>(s);
  s = r.next();
  r.expect(s, "times");
  s = r.next();
  flow.times.resize(nt);
  for (auto& t : flow.times) t = r.read<double>(s);
  flow.starts.resize(ns);
  flow.positions.assign(nt, RowMatrix(static_cast<Index>(ns), dim));
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t k = 0; k < nt; ++k) {
      s = r.next();
      const auto id = r.read<Index>(s);
      if (id < 0 || id >= space.size()) throw std::invalid_argument("dimension error: start id outside the space");
      if (r.read<std::size_t>(s) != k) throw FormatError("flow rows out of order");
      flow.starts[i] = id;
      for (int a = 0; a < dim; ++a) flow.positions[k](static_cast<Index>(i), a) = r.read<double>(s);
    }
  return flow;
}

}  // namespace mms
