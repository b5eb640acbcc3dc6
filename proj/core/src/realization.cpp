#include "flexlab/realization.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace flexlab {

namespace {
constexpr double kLn10 = 2.302585092994046;
}

// ---------------------------------------------------------------- Reparam

Reparam::Reparam(std::vector<double> log_r, std::vector<double> theta)
    : log_r_(std::move(log_r)), theta_(std::move(theta)) {
  if (log_r_.size() < 2 || log_r_.size() != theta_.size())
    throw InvalidArgument("reparametrisation needs at least two breakpoints");
  for (std::size_t k = 0; k < log_r_.size(); ++k) {
    if (!std::isfinite(log_r_[k]) || !std::isfinite(theta_[k]))
      throw InvalidArgument("non-finite reparametrisation entry");
    if (k > 0 && !(log_r_[k] > log_r_[k - 1]))
      throw InvalidArgument("reparametrisation radii must increase");
  }
}

std::size_t Reparam::segment(double ls) const {
  auto it = std::lower_bound(log_r_.begin(), log_r_.end(), ls);
  std::size_t idx = static_cast<std::size_t>(it - log_r_.begin());
  if (idx == 0) return 0;
  return std::min(idx - 1, log_r_.size() - 2);
}

double Reparam::operator()(double ls) const {
  if (ls <= log_r_.front()) return theta_.front();
  if (ls >= log_r_.back()) return theta_.back();
  const std::size_t k = segment(ls);
  const double w = (ls - log_r_[k]) / (log_r_[k + 1] - log_r_[k]);
  if (w >= 1.0) return theta_[k + 1];
  return theta_[k] + w * (theta_[k + 1] - theta_[k]);
}

double Reparam::slope(double ls) const {
  if (!(ls > log_r_.front()) || ls > log_r_.back()) return 0.0;
  const std::size_t k = segment(ls);
  return (theta_[k + 1] - theta_[k]) / (log_r_[k + 1] - log_r_[k]);
}

void Reparam::value_slope(double ls, double& theta, double& slope) const {
  if (!(ls > log_r_.front())) {
    theta = theta_.front();
    slope = 0.0;
    return;
  }
  if (ls > log_r_.back()) {
    theta = theta_.back();
    slope = 0.0;
    return;
  }
  const std::size_t k = segment(ls);
  const double len = log_r_[k + 1] - log_r_[k];
  slope = (theta_[k + 1] - theta_[k]) / len;
  const double w = (ls - log_r_[k]) / len;
  theta = w >= 1.0 ? theta_[k + 1] : theta_[k] + w * (theta_[k + 1] - theta_[k]);
}

int Reparam::direction_below(double ls) const {
  const double s = slope(ls);
  return s > 0 ? 1 : (s < 0 ? -1 : 0);
}

double Reparam::theta_min() const { return *std::min_element(theta_.begin(), theta_.end()); }
double Reparam::theta_max() const { return *std::max_element(theta_.begin(), theta_.end()); }

Reparam compose_reparam(const CocyclePath& path, const double log_outer,
                        const std::vector<ReparamSegment>& segments, const double speed,
                        const int min_breakpoints) {
  if (segments.empty()) throw InvalidArgument("empty reparametrisation");
  constexpr double kMinWidth = 1e-3;

  // Each traversal is split at path nodes so that A o theta is affine between
  // consecutive breakpoints.
  struct Piece {
    double t1, t2, width;
  };
  std::vector<Piece> pieces;
  for (const auto& s : segments) {
    if (s.kind == ReparamSegment::Kind::Hold) {
      if (!(s.log_width > 0)) throw InvalidArgument("hold segment needs positive width");
      pieces.push_back({s.t_from, s.t_from, s.log_width});
      continue;
    }
    if (s.t_from == s.t_to) continue;
    std::vector<double> ts{s.t_from};
    const bool up = s.t_to > s.t_from;
    const auto& nodes = path.nodes();
    if (up) {
      for (double t : nodes)
        if (t > s.t_from && t < s.t_to) ts.push_back(t);
    } else {
      for (auto it = nodes.rbegin(); it != nodes.rend(); ++it)
        if (*it < s.t_from && *it > s.t_to) ts.push_back(*it);
    }
    ts.push_back(s.t_to);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
      const double len = path.arc_length(ts[k], ts[k + 1]);
      const double w = speed > 0 ? std::max(len / speed, kMinWidth) : kMinWidth;
      pieces.push_back({ts[k], ts[k + 1], w});
    }
  }
  double total = 0.0;
  for (const auto& p : pieces) total += p.width;
  const double chunk = total / std::max(1, min_breakpoints);

  std::vector<double> lr{log_outer}, th{pieces.front().t1};
  double cur = log_outer;
  for (const auto& p : pieces) {
    const int q = std::max(1, static_cast<int>(std::ceil(p.width / chunk - 1e-9)));
    for (int s = 1; s <= q; ++s) {
      lr.push_back(cur - p.width * s / q);
      th.push_back(s == q ? p.t2 : p.t1 + (p.t2 - p.t1) * s / q);
    }
    cur -= p.width;
  }
  std::reverse(lr.begin(), lr.end());
  std::reverse(th.begin(), th.end());
  return Reparam(std::move(lr), std::move(th));
}

ReparamBuild build_reparam_log(const CocyclePath& path, double delta, double log_inner,
                               double log_outer) {
  if (!(delta > 0)) throw InvalidArgument("delta must be positive");
  if (!(log_outer > log_inner)) throw InvalidArgument("inner radius must be below outer radius");
  ReparamBuild b;
  b.length = path.arc_length(path.t_lo(), path.t_hi());
  if (!std::isfinite(b.length)) throw InvalidArgument("path has infinite length");
  b.log_outer = log_outer;
  if (b.length == 0.0) {
    std::vector<double> lr, th;
    for (int k = 0; k < 256; ++k) {
      lr.push_back(log_inner + (log_outer - log_inner) * k / 255.0);
      th.push_back(path.t_lo());
    }
    b.theta = Reparam(std::move(lr), std::move(th));
    b.log_inner = log_inner;
    return b;
  }
  const double need = b.length / delta;
  if (log_outer - log_inner < need) {
    log_inner = log_outer - need;
    b.inner_shrunk = true;
  }
  b.speed = b.length / (log_outer - log_inner);
  b.theta = compose_reparam(path, log_outer,
                            {ReparamSegment::traverse(path.t_hi(), path.t_lo())}, b.speed);
  b.log_inner = b.theta.inner_log_radius();
  return b;
}

ReparamBuild build_reparam(const CocyclePath& path, double delta, double inner_radius,
                           double outer_radius) {
  if (!(inner_radius > 0) || !(outer_radius > inner_radius))
    throw InvalidArgument("need 0 < inner_radius < outer_radius");
  return build_reparam_log(path, delta, std::log(inner_radius), std::log(outer_radius));
}

// ---------------------------------------------------------- RadialCocycle

RadialCocycle::RadialCocycle(CocyclePath path, Reparam theta, double epsilon1)
    : path_(std::move(path)), theta_(std::move(theta)), epsilon1_(epsilon1) {
  const double lo = theta_.theta_min(), hi = theta_.theta_max();
  std::vector<double> ts{lo, hi};
  const auto& nodes = path_.nodes();
  for (std::size_t j = 0; j + 1 < nodes.size(); ++j) {
    for (int s = 0; s < 16; ++s) {
      const double t = nodes[j] + (nodes[j + 1] - nodes[j]) * s / 16.0;
      if (t >= lo && t <= hi) ts.push_back(t);
    }
  }
  const std::size_t n = period();
  constexpr int kCap = 1 << 16;
  for (double t : ts) {
    std::vector<Mat2> a(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = path_.at(i, t);
      const Singular sv = singular_values(a[i]);
      K_ = std::max({K_, sv.max, 1.0 / sv.min});
    }
    for (std::size_t i = 0; i < n; ++i) {
      Mat2 p = Mat2::identity();
      int k = 0;
      double ls = 0.0;
      while (true) {
        p = a[(i + k) % n] * p;
        ++k;
        const double nr = op_norm(p);
        if (ls + std::log(nr) < std::log(0.5)) break;
        p = (1.0 / nr) * p;
        ls += std::log(nr);
        if (k > kCap) throw InvalidArgument("path is not uniformly contracting");
      }
      k_ = std::max(k_, k);
    }
  }
}

Mat2 RadialCocycle::matrix_at(std::size_t i, double log_r) const {
  return path_.at(i, theta_(log_r));
}

Mat2 RadialCocycle::dmatrix(std::size_t i, double log_r) const {
  const double g = theta_.slope(log_r);
  if (g == 0.0) return Mat2{};
  return g * path_.slope(i, theta_(log_r), g < 0);
}

void RadialCocycle::local(std::size_t i, double log_r, Mat2& a, Mat2& da) const {
  double t, g;
  theta_.value_slope(log_r, t, g);
  if (g == 0.0) {
    a = path_.at(i, t);
    da = Mat2{};
    return;
  }
  Mat2 s;
  path_.at_with_slope(i, t, g < 0, a, s);
  da = g * s;
}

ScaledPoint RadialCocycle::apply(std::size_t i, const ScaledPoint& x) const {
  if (x.is_origin()) return x;
  return flexlab::apply(matrix_at(i, x.ls), x);
}

Mat2 RadialCocycle::jacobian(std::size_t i, const ScaledPoint& x) const {
  if (x.is_origin()) return germ_at_origin()[i];
  Mat2 a, da;
  local(i, x.ls, a, da);
  if (da == Mat2{}) return a;
  return a + da * Mat2::outer(x.d, x.d);
}

ScaledPoint RadialCocycle::invert(std::size_t i, const ScaledPoint& y) const {
  if (y.is_origin()) return y;
  // h(s) = log|A(s)^{-1} y| - s is strictly decreasing with slope near -1.
  auto eval = [&](double s, double& hp, Vec2& w) {
    Mat2 a, da;
    local(i, s, a, da);
    const Mat2 ai = inverse(a);
    w = ai * y.d;
    const double nw2 = dot(w, w);
    const Vec2 dw = -1.0 * (ai * (da * w));
    hp = dot(w, dw) / nw2 - 1.0;
    return y.ls + 0.5 * std::log(nw2) - s;
  };
  double hp = -1.0;
  Vec2 w;
  double s = y.ls;
  s += eval(s, hp, w);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double h = eval(s, hp, w);
    if (h > 0) lo = std::max(lo, s);
    else hi = std::min(hi, s);
    const double tol = 1e-14 + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(s);
    if (std::abs(h) <= tol) break;
    double sn = s - h / std::min(hp, -0.25);
    if (!(sn > lo && sn < hi)) {
      if (std::isfinite(lo) && std::isfinite(hi)) sn = 0.5 * (lo + hi);
      else sn = s + 2.0 * h;
    }
    if (std::abs(sn - s) <= tol) {
      s = sn;
      eval(s, hp, w);
      break;
    }
    s = sn;
  }
  return ScaledPoint::make(y.ls, w);
}

LinearCocycle RadialCocycle::germ_at_origin() const { return path_.at(theta_.theta_inner()); }

Vec2 eval_fiber_map(const RadialCocycle& rc, std::size_t i, Vec2 x) {
  const double r = norm(x);
  if (r == 0.0) return x;
  return rc.matrix_at(i, std::log(r)) * x;
}

Mat2 eval_fiber_derivative(const RadialCocycle& rc, std::size_t i, Vec2 x) {
  return rc.jacobian(i, ScaledPoint::from(x));
}

// ------------------------------------------------------------ certificate

namespace {

struct Window {
  double lo, hi;
};

Window certificate_window(const RadialCocycle& rc, const GridSpec& g) {
  double lo = rc.theta().inner_log_radius() - kLn10;
  double hi = rc.theta().outer_log_radius() + kLn10;
  const double want = g.decades * kLn10;
  if (hi - lo < want) {
    const double mid = 0.5 * (lo + hi);
    lo = mid - want / 2;
    hi = mid + want / 2;
  }
  return {lo, hi};
}

}  // namespace

RealizationCertificate certify_realization(const RadialCocycle& rc, const GridSpec& g) {
  if (g.decades < 8 || g.angles < 32) throw InvalidArgument("grid too coarse");
  const auto start = std::chrono::steady_clock::now();
  RealizationCertificate c;
  c.grid = g;
  c.k = rc.k_contract();
  c.epsilon1 = rc.epsilon1();
  const Window win = certificate_window(rc, g);
  c.log_lo = win.lo;
  c.log_hi = win.hi;
  const int nr = g.decades * g.per_decade;
  const std::size_t n = rc.period();
  const double h = (win.hi - win.lo) / nr;

  std::vector<Mat2> at_ls(n);
  for (int a = 0; a < nr; ++a) {
    const double ls = win.lo + (a + 0.5) * h;
    for (std::size_t i = 0; i < n; ++i) at_ls[i] = rc.matrix_at(i, ls);
    for (int b = 0; b < g.angles; ++b) {
      const ScaledPoint x = ScaledPoint::polar(ls, 2.0 * M_PI * (b + 0.5) / g.angles);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = op_norm(rc.jacobian(i, x) - at_ls[i]);
        if (r > c.one_step_max) {
          c.one_step_max = r;
          c.one_step_witness = {i, x, r};
        }
      }
      if (b % std::max(1, g.angles / g.jstep_angles) != 0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        ScaledPoint y = x;
        Mat2 pd = Mat2::identity(), pa = Mat2::identity();
        for (int j = 1; j < c.k; ++j) {
          const std::size_t f = (i + j - 1) % n;
          Mat2 m, dm;
          rc.local(f, y.ls, m, dm);
          pd = (dm == Mat2{} ? m : m + dm * Mat2::outer(y.d, y.d)) * pd;
          pa = at_ls[f] * pa;
          const Vec2 v = m * y.d;
          const double v2 = dot(v, v);
          y = {y.ls + 0.5 * std::log(v2), (1.0 / std::sqrt(v2)) * v};
          // The operator norm never exceeds the Frobenius norm.
          const Mat2 e = pd - pa;
          if (e.a11 * e.a11 + e.a12 * e.a12 + e.a21 * e.a21 + e.a22 * e.a22 <=
              c.jstep_max * c.jstep_max)
            continue;
          const double r = op_norm(e);
          if (r > c.jstep_max) {
            c.jstep_max = r;
            c.jstep_witness = {i, x, r};
          }
        }
      }
    }
  }

  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<double> ul(win.lo, win.hi), ua(0.0, 2.0 * M_PI);
  std::uniform_int_distribution<std::size_t> uf(0, n - 1);
  for (int o = 0; o < g.orbits; ++o) {
    const ScaledPoint x0 = ScaledPoint::polar(ul(rng), ua(rng));
    const std::size_t i0 = uf(rng);
    ScaledPoint y = x0;
    Mat2 pd = Mat2::identity();
    double lsc = 0.0;
    for (int j = 0; j < c.k; ++j) {
      const std::size_t f = (i0 + j) % n;
      pd = rc.jacobian(f, y) * pd;
      const double nn = op_norm(pd);
      pd = (1.0 / nn) * pd;
      lsc += std::log(nn);
      y = rc.apply(f, y);
    }
    const double v = std::exp(lsc);
    if (v > c.contraction_max) {
      c.contraction_max = v;
      c.contraction_witness = {i0, x0, v};
    }
  }
  c.pass = c.one_step_max < c.epsilon1 && c.jstep_max < c.epsilon1 && c.contraction_max < 1.0;
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

std::string RealizationCertificate::to_text() const {
  std::ostringstream o;
  o.precision(12);
  auto wit = [&](const char* name, const SampleWitness& w) {
    o << name << " fiber=" << w.fiber << " log_r=" << w.x.ls << " dir=(" << w.x.d.x << ","
      << w.x.d.y << ") value=" << w.value << "\n";
  };
  o << "realization-certificate\n";
  o << "grid decades=" << grid.decades << " per_decade=" << grid.per_decade
    << " angles=" << grid.angles << " jstep_angles=" << grid.jstep_angles
    << " orbits=" << grid.orbits << " seed=" << grid.seed << "\n";
  o << "window log_r=[" << log_lo << "," << log_hi << "]\n";
  o << "epsilon1 " << epsilon1 << "\nk " << k << "\n";
  o << "one_step_max " << one_step_max << "\njstep_max " << jstep_max << "\ncontraction_max "
    << contraction_max << "\n";
  wit("one_step_witness", one_step_witness);
  wit("jstep_witness", jstep_witness);
  wit("contraction_witness", contraction_witness);
  o << "verdict " << (pass ? "pass" : "fail") << "\n";
  return o.str();
}

FiniteDifferenceReport finite_difference_check(const RadialCocycle& rc, std::size_t samples,
                                               std::uint64_t seed, double step) {
  FiniteDifferenceReport rep;
  std::mt19937_64 rng(seed);
  const double lo = rc.theta().inner_log_radius() - 1.0;
  const double hi = rc.theta().outer_log_radius() + 1.0;
  std::uniform_real_distribution<double> ul(lo, hi), ua(0.0, 2.0 * M_PI);
  std::uniform_int_distribution<std::size_t> uf(0, rc.period() - 1);
  const auto& bps = rc.theta().log_r();
  while (rep.samples < samples) {
    const double ls = ul(rng);
    auto it = std::lower_bound(bps.begin(), bps.end(), ls);
    double gap = std::numeric_limits<double>::infinity();
    if (it != bps.end()) gap = std::min(gap, *it - ls);
    if (it != bps.begin()) gap = std::min(gap, ls - *(it - 1));
    if (gap < 100.0 * step) continue;
    const ScaledPoint x = ScaledPoint::polar(ls, ua(rng));
    const std::size_t i = uf(rng);
    Mat2 fd;
    for (int col = 0; col < 2; ++col) {
      const Vec2 e = col == 0 ? Vec2{step, 0.0} : Vec2{0.0, step};
      const ScaledPoint xp = ScaledPoint::make(ls, x.d + e);
      const ScaledPoint xm = ScaledPoint::make(ls, x.d - e);
      const Vec2 diff =
          (1.0 / (2.0 * step)) * (rc.apply(i, xp).at_scale(ls) - rc.apply(i, xm).at_scale(ls));
      if (col == 0) {
        fd.a11 = diff.x;
        fd.a21 = diff.y;
      } else {
        fd.a12 = diff.x;
        fd.a22 = diff.y;
      }
    }
    const Mat2 j = rc.jacobian(i, x);
    const double rel = op_norm(fd - j) / op_norm(j);
    if (rel > rep.max_rel_error) rep.worst = {i, x, rel};
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    ++rep.samples;
  }
  return rep;
}

// -------------------------------------------------------- witness pipeline

RetardableRealization realize_flexible(const CocyclePath& witness, const RealizeOptions& opt) {
  if (witness.t_lo() != -1.0 || witness.t_hi() != 1.0)
    throw InvalidArgument("witness path must live on [-1,1]");
  if (!(opt.eta > 0 && opt.eta < 1)) throw InvalidArgument("eta must lie in (0,1)");
  const std::size_t n = witness.period();
  const double t_in = 1.0 - opt.eta;

  // Band data at t = -1.
  std::vector<Mat2> band(n);
  for (std::size_t i = 0; i < n; ++i) band[i] = witness.at(i, -1.0);
  const ScaledMat2 prod = scaled_product(band);
  if (homothety_residual(prod.m) > 1e-9 || trace(prod.m) <= 0)
    throw InvalidArgument("witness return product at t=-1 is not a positive homothety");
  const double log_lambda = prod.log_scale + std::log(trace(prod.m) / 2.0);
  if (log_lambda >= 0) throw InvalidArgument("band homothety is not contracting");

  double log_gplus = 0.0, log_gminus = 0.0;
  {
    ScaledMat2 p{Mat2::identity(), 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      p.m = band[j] * p.m;
      const double nn = op_norm(p.m);
      p.m = (1.0 / nn) * p.m;
      p.log_scale += std::log(nn);
      const Singular sv = singular_values(p.m);
      log_gplus = std::max(log_gplus, p.log_scale + std::log(sv.max));
      log_gminus = std::min(log_gminus, p.log_scale + std::log(sv.min));
    }
  }
  const double band_width =
      log_gplus - log_lambda - log_gminus + 2.0 * opt.band_margin;

  const double L1 = witness.arc_length(0.0, -1.0);
  const double L2 = witness.arc_length(-1.0, t_in);

  auto build = [&](double speed) {
    const std::vector<ReparamSegment> segs{
        ReparamSegment::traverse(0.0, -1.0), ReparamSegment::hold(-1.0, band_width),
        ReparamSegment::traverse(-1.0, t_in)};
    Reparam th = compose_reparam(witness, opt.log_outer, segs, speed);
    return std::make_shared<const RadialCocycle>(witness, std::move(th), opt.epsilon1);
  };

  RetardableRealization out;
  out.path_length = L1 + L2;
  double speed = 0.45 * opt.epsilon1;
  GridSpec probe = opt.grid;
  probe.angles = 32;
  probe.jstep_angles = 8;
  probe.orbits = 100;
  std::shared_ptr<const RadialCocycle> rc;
  for (int attempt = 0; attempt < 12; ++attempt) {
    rc = build(speed);
    const RealizationCertificate c = certify_realization(*rc, probe);
    const double worst = std::max(c.one_step_max, c.jstep_max);
    const double target = 0.45 * opt.epsilon1;
    if (worst <= target * 0.9) break;
    speed *= std::min(0.7, 0.8 * target / worst);
  }
  for (int attempt = 0; attempt < 8; ++attempt) {
    out.certificate = certify_realization(*rc, opt.grid);
    if (out.certificate.one_step_max <= 0.5 * opt.epsilon1 &&
        out.certificate.jstep_max <= 0.8 * opt.epsilon1)
      break;
    speed *= 0.7;
    rc = build(speed);
  }
  out.cocycle = rc;
  out.speed = speed;

  // Locate the band inside the reparametrisation: the hold segment sits below
  // the first traversal.
  const double log_R3 = opt.log_outer - std::max(L1 / speed, 1e-3);
  const double log_R1 = log_R3 - band_width;
  const double log_R2 = log_R3 - log_gplus - opt.band_margin;
  out.spec.log_R1 = log_R1;
  out.spec.log_R2 = log_R2;
  out.spec.log_R3 = log_R3;
  out.spec.lambda = std::exp(log_lambda);
  out.spec.homothety_factors = band;
  return out;
}

}  // namespace flexlab
