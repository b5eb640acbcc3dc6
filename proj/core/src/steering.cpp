#include "flexlab/steering.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

namespace flexlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double frac(double x) { return x - std::floor(x); }
// Representative in [-0.5, 0.5).
double wrap_half(double x) { return x - std::floor(x + 0.5); }

double f_exp(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
double f_exp_slope(double x) { return x > 0.0 ? std::exp(-1.0 / x) / (x * x) : 0.0; }

// Periodic piecewise-linear profile on n uniform nodes of [0, 1).
struct Periodic {
  const std::vector<double>* s;
  void eval(double u, double& val, double& slope) const {
    const std::size_t n = s->size();
    const double t = frac(u) * static_cast<double>(n);
    std::size_t k = static_cast<std::size_t>(t);
    if (k >= n) k = n - 1;
    const double w = t - static_cast<double>(k);
    const double a = (*s)[k], b = (*s)[(k + 1) % n];
    val = a + w * (b - a);
    slope = (b - a) * static_cast<double>(n);
  }
};

Mat2 J90() { return {0.0, -1.0, 1.0, 0.0}; }

}  // namespace

double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = f_exp(x), b = f_exp(1.0 - x);
  return a / (a + b);
}

double smooth_step_slope(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double a = f_exp(x), b = f_exp(1.0 - x);
  const double s = a + b;
  return (f_exp_slope(x) * b + a * f_exp_slope(1.0 - x)) / (s * s);
}

double smooth_bump(double x, double lo, double hi) {
  if (x <= lo || x >= hi) return 0.0;
  const double w = 0.5 * (hi - lo);
  return smooth_step((x - lo) / w) * smooth_step((hi - x) / w);
}

double smooth_bump_slope(double x, double lo, double hi) {
  if (x <= lo || x >= hi) return 0.0;
  const double w = 0.5 * (hi - lo);
  const double p = (x - lo) / w, q = (hi - x) / w;
  return (smooth_step_slope(p) * smooth_step(q) - smooth_step(p) * smooth_step_slope(q)) / w;
}

// ---------------------------------------------------------------- fields

VerticalProfileField::VerticalProfileField(std::vector<double> samples) : s_(std::move(samples)) {
  if (s_.size() < 2) throw InvalidArgument("profile needs at least two samples");
}

Vec2 VerticalProfileField::value(double u, double) const {
  double b, db;
  Periodic{&s_}.eval(u, b, db);
  return {0.0, b};
}

Mat2 VerticalProfileField::jacobian(double u, double) const {
  double b, db;
  Periodic{&s_}.eval(u, b, db);
  return {0.0, 0.0, db, 0.0};
}

double VerticalProfileField::max_abs() const {
  double m = 0.0;
  for (double x : s_) m = std::max(m, std::abs(x));
  return m;
}

VerticalBumpField::VerticalBumpField(double amplitude, double u_lo, double u_hi, double v_centre,
                                     double v_half)
    : amp_(amplitude), u_lo_(u_lo), u_hi_(u_hi), v_c_(v_centre), v_h_(v_half) {
  if (!(u_hi > u_lo) || u_hi - u_lo > 1.0) throw InvalidArgument("bad u-support");
}

Vec2 VerticalBumpField::value(double u, double v) const {
  const double uu = u_lo_ + frac(u - u_lo_);
  const double bu = smooth_bump(uu, u_lo_, u_hi_);
  if (bu == 0.0) return {0.0, 0.0};
  const double bv = v_h_ >= 0.5 ? 1.0 : smooth_bump(wrap_half(v - v_c_), -v_h_, v_h_);
  return {0.0, amp_ * bu * bv};
}

Mat2 VerticalBumpField::jacobian(double u, double v) const {
  const double uu = u_lo_ + frac(u - u_lo_);
  const double bu = smooth_bump(uu, u_lo_, u_hi_);
  const double dbu = smooth_bump_slope(uu, u_lo_, u_hi_);
  double bv = 1.0, dbv = 0.0;
  if (v_h_ < 0.5) {
    const double x = wrap_half(v - v_c_);
    bv = smooth_bump(x, -v_h_, v_h_);
    dbv = smooth_bump_slope(x, -v_h_, v_h_);
  }
  return {0.0, 0.0, amp_ * dbu * bv, amp_ * bu * dbv};
}

PlateauPairField::PlateauPairField(std::vector<double> e, std::vector<double> m1,
                                   std::vector<double> m2, double delta)
    : e_(std::move(e)), m1_(std::move(m1)), m2_(std::move(m2)), delta_(delta) {
  if (e_.size() != m1_.size() || e_.size() != m2_.size() || e_.size() < 2)
    throw InvalidArgument("plateau profiles must have equal length");
  if (!(delta > 0.0)) throw InvalidArgument("plateau ramp width must be positive");
}

namespace {

struct PlateauEval {
  double beta = 0.0, dbeta_u = 0.0, dbeta_v = 0.0;
};

// Plateau of half width a (slope da in u) centred at m (slope dm), ramp delta.
PlateauEval plateau(double v, double m, double dm, double a, double da, double delta) {
  PlateauEval r;
  const double x = wrap_half(v - m);
  const double ax = std::abs(x);
  if (ax <= a) {
    r.beta = 1.0;
    return r;
  }
  if (ax >= a + delta) return r;
  const double y = (a + delta - ax) / delta;
  const double sg = x >= 0.0 ? 1.0 : -1.0;
  const double sp = smooth_step_slope(y);
  r.beta = smooth_step(y);
  r.dbeta_v = -sp * sg / delta;
  r.dbeta_u = sp * (da + sg * dm) / delta;
  return r;
}

}  // namespace

Vec2 PlateauPairField::value(double u, double v) const {
  double e, de, m1, dm1, m2, dm2;
  Periodic{&e_}.eval(u, e, de);
  if (e == 0.0) return {0.0, 0.0};
  Periodic{&m1_}.eval(u, m1, dm1);
  Periodic{&m2_}.eval(u, m2, dm2);
  const double q = std::sqrt(0.25 * e * e + 0.25 * delta_ * delta_);
  const double a = q + 0.5 * delta_;
  const double da = 0.25 * e * de / q;
  const PlateauEval b1 = plateau(v, m1, dm1, a, da, delta_);
  const PlateauEval b2 = plateau(v, m2, dm2, a, da, delta_);
  return {0.0, e * (b1.beta - b2.beta)};
}

Mat2 PlateauPairField::jacobian(double u, double v) const {
  double e, de, m1, dm1, m2, dm2;
  Periodic{&e_}.eval(u, e, de);
  Periodic{&m1_}.eval(u, m1, dm1);
  Periodic{&m2_}.eval(u, m2, dm2);
  const double q = std::sqrt(0.25 * e * e + 0.25 * delta_ * delta_);
  const double a = q + 0.5 * delta_;
  const double da = 0.25 * e * de / q;
  const PlateauEval b1 = plateau(v, m1, dm1, a, da, delta_);
  const PlateauEval b2 = plateau(v, m2, dm2, a, da, delta_);
  return {0.0, 0.0, de * (b1.beta - b2.beta) + e * (b1.dbeta_u - b2.dbeta_u),
          e * (b1.dbeta_v - b2.dbeta_v)};
}

BandField::BandField(std::shared_ptr<const TorusField> base, int band, int bands, double offset)
    : base_(std::move(base)), band_(band), bands_(bands), offset_(offset) {
  if (bands < 2 || band < 0 || band >= bands) throw InvalidArgument("bad partition band");
}

// Window of half width h = 1/(2 bands) with ramps of width 2w, w = h/2,
// around p_b; neighbouring windows sum to one since S(y) + S(1 - y) = 1.
double BandField::chi(double u) const {
  const double h = 0.5 / bands_, w = 0.5 * h;
  const double x = wrap_half(u - offset_ - static_cast<double>(band_) / bands_);
  return smooth_step((h + w - std::abs(x)) / (2.0 * w));
}

double BandField::chi_slope(double u) const {
  const double h = 0.5 / bands_, w = 0.5 * h;
  const double x = wrap_half(u - offset_ - static_cast<double>(band_) / bands_);
  const double sg = x >= 0.0 ? 1.0 : -1.0;
  return -sg * smooth_step_slope((h + w - std::abs(x)) / (2.0 * w)) / (2.0 * w);
}

double BandField::cut() const {
  return frac(offset_ + static_cast<double>(band_) / bands_ + 0.5);
}

Vec2 BandField::value(double u, double v) const {
  const double c = chi(u);
  if (c == 0.0) return {0.0, 0.0};
  return c * base_->value(u, v);
}

Mat2 BandField::jacobian(double u, double v) const {
  const double c = chi(u);
  if (c == 0.0) return {};
  const Vec2 w = base_->value(u, v);
  const double dc = chi_slope(u);
  return c * base_->jacobian(u, v) + Mat2{w.x * dc, 0.0, w.y * dc, 0.0};
}

// ---------------------------------------------------------------- flows

TorusFlowResult flow_torus(const TorusField& W, double time, TorusPoint p, int steps) {
  const double h = time / steps;
  Vec2 x{p.u, p.v};
  Mat2 D = Mat2::identity();
  auto fx = [&](Vec2 q) { return W.value(q.x, q.y); };
  for (int s = 0; s < steps; ++s) {
    const Vec2 k1 = fx(x);
    const Mat2 j1 = W.jacobian(x.x, x.y);
    const Vec2 x2 = x + 0.5 * h * k1;
    const Vec2 k2 = fx(x2);
    const Mat2 j2 = W.jacobian(x2.x, x2.y);
    const Vec2 x3 = x + 0.5 * h * k2;
    const Vec2 k3 = fx(x3);
    const Mat2 j3 = W.jacobian(x3.x, x3.y);
    const Vec2 x4 = x + h * k3;
    const Vec2 k4 = fx(x4);
    const Mat2 j4 = W.jacobian(x4.x, x4.y);
    const Mat2 m1 = j1 * D;
    const Mat2 m2 = j2 * (D + 0.5 * h * m1);
    const Mat2 m3 = j3 * (D + 0.5 * h * m2);
    const Mat2 m4 = j4 * (D + h * m3);
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    D = D + (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
  }
  return {{x.x, x.y}, D};
}

TorusPoint TorusFactor::apply(TorusPoint p) const { return flow_torus(*field, time, p).p; }
TorusPoint TorusFactor::apply_inverse(TorusPoint p) const { return flow_torus(*field, -time, p).p; }
Mat2 TorusFactor::jacobian(TorusPoint p) const { return flow_torus(*field, time, p).D; }

double torus_c1_distance(const TorusFactor& f, int grid) {
  double worst = 0.0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const TorusPoint p{(i + 0.5) / grid, (j + 0.5) / grid};
      const TorusFlowResult r = flow_torus(*f.field, f.time, p);
      const double disp = std::hypot(r.p.u - p.u, r.p.v - p.v);
      worst = std::max(worst, disp + op_norm(r.D - Mat2::identity()));
    }
  }
  return worst;
}

TorusPoint TorusFlow::apply(TorusPoint p, int steps) const {
  for (const auto& s : stages) p = flow_torus(*s, 1.0, p, steps).p;
  return p;
}

TorusPoint TorusDiffeoFactorization::transport(TorusPoint p) const {
  for (const auto& f : factors) p = f.apply_inverse(p);
  return p;
}

TorusCurve TorusDiffeoFactorization::transport(const TorusCurve& c) const {
  TorusCurve out = c;
  for (auto& p : out.pts) p = transport(p);
  return out;
}

namespace {

struct FieldNorms {
  double c0 = 0.0, c1 = 0.0;
};

FieldNorms field_norms(const TorusField& W, int nu = 512, int nv = 128) {
  FieldNorms n;
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      const double u = (i + 0.5) / nu, v = (j + 0.5) / nv;
      n.c0 = std::max(n.c0, norm(W.value(u, v)));
      n.c1 = std::max(n.c1, op_norm(W.jacobian(u, v)));
    }
  }
  return n;
}

// Centre of the widest parallel strip on which W vanishes, or -1.
double widest_zero_strip(const TorusField& W, int nu = 1024, int nv = 128) {
  std::vector<char> zero(nu, 1);
  for (int i = 0; i < nu; ++i) {
    for (double u : {static_cast<double>(i) / nu, (i + 0.5) / nu, (i + 1.0) / nu}) {
      for (int j = 0; j < nv && zero[i]; ++j) {
        const Vec2 w = W.value(u, (j + 0.5) / nv);
        if (w.x != 0.0 || w.y != 0.0) zero[i] = 0;
      }
    }
  }
  if (std::all_of(zero.begin(), zero.end(), [](char z) { return z != 0; })) return 0.0;
  int start = 0;
  while (zero[start]) ++start;  // a nonzero column exists
  int best_len = 0, best_start = -1, run = 0, run_start = 0;
  for (int k = 1; k <= nu; ++k) {
    const int i = (start + k) % nu;
    if (zero[i]) {
      if (run == 0) run_start = i;
      ++run;
    } else {
      if (run > best_len) best_len = run, best_start = run_start;
      run = 0;
    }
  }
  if (best_len < 3) return -1.0;
  return frac((best_start + 0.5 * best_len) / nu);
}

bool is_zero_field(const TorusField& W) {
  const FieldNorms n = field_norms(W, 256, 64);
  return n.c0 == 0.0 && n.c1 == 0.0;
}

}  // namespace

TorusDiffeoFactorization fragment(const TorusFlow& psi, double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
  TorusDiffeoFactorization out;
  out.mu = mu;
  int prototype = 0;
  for (std::size_t s = 0; s < psi.stages.size(); ++s) {
    const auto& W = psi.stages[s];
    if (!W || is_zero_field(*W)) {
      out.steps_per_stage.push_back(0);
      out.bands_per_stage.push_back(0);
      continue;
    }
    struct Piece {
      std::shared_ptr<const TorusField> field;
      double cut;
    };
    std::vector<Piece> pieces;
    const double cut = widest_zero_strip(*W);
    if (cut >= 0.0) {
      pieces.push_back({W, cut});
    } else {
      for (int b = 0; b < 3; ++b) {
        auto bf = std::make_shared<BandField>(W, b, 3, 0.0);
        pieces.push_back({bf, bf->cut()});
      }
    }
    double piece_rate = 0.0;
    for (const auto& p : pieces) {
      const FieldNorms n = field_norms(*p.field);
      piece_rate = std::max(piece_rate, n.c0 + n.c1);
    }
    const FieldNorms whole = field_norms(*W);
    // First-order estimate, then certified on grids.
    int k = std::max(1, static_cast<int>(std::ceil(
                            1.1 * std::max(2.0 * (whole.c0 + whole.c1), piece_rate) / mu)));
    std::vector<double> dist;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 40 || k > 10000000)
        throw InvalidArgument("fragmentation failed: factor distances do not fall below mu");
      const double tau = 1.0 / k;
      const double step = torus_c1_distance(TorusFactor{W, tau});
      dist.clear();
      bool ok = step < 0.5 * mu;
      for (const auto& p : pieces) {
        if (!ok) break;
        dist.push_back(torus_c1_distance(TorusFactor{p.field, -tau}));
        ok = dist.back() < mu;
      }
      if (ok) break;
      k = static_cast<int>(std::ceil(1.25 * k));
    }
    out.steps_per_stage.push_back(k);
    out.bands_per_stage.push_back(static_cast<int>(pieces.size()));
    for (int j = 0; j < k; ++j) {
      for (std::size_t b = 0; b < pieces.size(); ++b) {
        TorusFactor f;
        f.field = pieces[b].field;
        f.time = -1.0 / k;
        f.cut = pieces[b].cut;
        f.distance = dist[b];
        f.stage = static_cast<int>(s);
        f.prototype = prototype + static_cast<int>(b);
        out.factors.push_back(f);
        out.max_distance = std::max(out.max_distance, dist[b]);
      }
    }
    prototype += static_cast<int>(pieces.size());
  }
  return out;
}

// ---------------------------------------------------------------- lifts

AnnulusDiffeo::AnnulusDiffeo(TorusFactor factor, double log_origin, double log_lambda, int depth,
                             int steps)
    : factor_(std::move(factor)),
      log_origin_(log_origin),
      log_lambda_(log_lambda),
      depth_(depth),
      steps_(steps) {
  if (!(log_lambda < 0.0)) throw InvalidArgument("homothety ratio must be contracting");
  log_r0_ = log_origin_ + log_lambda_ * (depth_ + factor_.cut);
  if (steps_ <= 0) {
    // h * (|V|/|p| + ||DV||) <= 0.01 keeps the RK4 defect near 1e-12.
    double rate = 0.0;
    for (int i = 0; i < 24; ++i) {
      const double lr = log_lambda_ * (i + 0.5) / 24.0;
      for (int j = 0; j < 48; ++j) {
        const double a = kTwoPi * (j + 0.5) / 48.0;
        const Vec2 p = std::exp(lr) * Vec2{std::cos(a), std::sin(a)};
        rate = std::max(rate, norm(field(p)) / norm(p) + op_norm(field_jacobian(p)));
      }
    }
    steps_ = std::clamp(static_cast<int>(std::ceil(std::abs(factor_.time) * rate / 0.01)), 2, 256);
  }
}

bool AnnulusDiffeo::contains(const ScaledPoint& x) const {
  return !x.is_origin() && x.ls > log_inner() && x.ls < log_r0_;
}

// Normalised coordinates: p = x / r0, so |p| in (lambda, 1).
TorusPoint AnnulusDiffeo::torus_of(Vec2 p) const {
  const double L = -log_lambda_;
  const double lr = 0.5 * std::log(p.x * p.x + p.y * p.y);
  return {factor_.cut - lr / L, std::atan2(p.y, p.x) / kTwoPi};
}

Vec2 AnnulusDiffeo::field(Vec2 p) const {
  const TorusPoint t = torus_of(p);
  const Vec2 w = factor_.field->value(t.u, t.v);
  const double L = -log_lambda_;
  return (-L * w.x) * p + (kTwoPi * w.y) * perp(p);
}

Mat2 AnnulusDiffeo::field_jacobian(Vec2 p) const {
  const TorusPoint t = torus_of(p);
  const Vec2 w = factor_.field->value(t.u, t.v);
  const Mat2 dw = factor_.field->jacobian(t.u, t.v);
  const double L = -log_lambda_;
  const double r2 = p.x * p.x + p.y * p.y;
  const Vec2 grad_u = (-1.0 / (L * r2)) * p;
  const Vec2 grad_v = (1.0 / (kTwoPi * r2)) * perp(p);
  const Vec2 gwu = dw.a11 * grad_u + dw.a12 * grad_v;
  const Vec2 gwv = dw.a21 * grad_u + dw.a22 * grad_v;
  return (-L) * Mat2::outer(p, gwu) + Mat2::scalar(-L * w.x) + kTwoPi * Mat2::outer(perp(p), gwv) +
         (kTwoPi * w.y) * J90();
}

void AnnulusDiffeo::flow(Vec2& p, Mat2* D, double time) const {
  const double h = time / steps_;
  Mat2 M = Mat2::identity();
  for (int s = 0; s < steps_; ++s) {
    const Vec2 k1 = field(p);
    const Vec2 p2 = p + 0.5 * h * k1;
    const Vec2 k2 = field(p2);
    const Vec2 p3 = p + 0.5 * h * k2;
    const Vec2 k3 = field(p3);
    const Vec2 p4 = p + h * k3;
    const Vec2 k4 = field(p4);
    if (D) {
      const Mat2 m1 = field_jacobian(p) * M;
      const Mat2 m2 = field_jacobian(p2) * (M + 0.5 * h * m1);
      const Mat2 m3 = field_jacobian(p3) * (M + 0.5 * h * m2);
      const Mat2 m4 = field_jacobian(p4) * (M + h * m3);
      M = M + (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
    }
    p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (D) *D = M;
}

ScaledPoint AnnulusDiffeo::apply(const ScaledPoint& x) const {
  if (!contains(x)) return x;
  const Vec2 p0 = x.at_scale(log_r0_);
  Vec2 p = p0;
  flow(p, nullptr, factor_.time);
  if (p == p0) return x;
  return ScaledPoint::make(log_r0_, p);
}

ScaledPoint AnnulusDiffeo::apply_inverse(const ScaledPoint& y) const {
  if (!contains(y)) return y;
  const Vec2 p0 = y.at_scale(log_r0_);
  Vec2 p = p0;
  flow(p, nullptr, -factor_.time);
  if (p == p0) return y;
  return ScaledPoint::make(log_r0_, p);
}

Mat2 AnnulusDiffeo::jacobian(const ScaledPoint& x) const {
  if (!contains(x)) return Mat2::identity();
  Vec2 p = x.at_scale(log_r0_);
  Mat2 D;
  flow(p, &D, factor_.time);
  return D;
}

AnnulusDiffeo AnnulusDiffeo::conjugated(int k) const {
  AnnulusDiffeo c = *this;
  c.depth_ += k;
  c.log_r0_ += k * log_lambda_;
  return c;
}

AnnulusDiffeo::Certificate AnnulusDiffeo::certify(int radial, int angular) const {
  Certificate c;
  c.min_det = std::numeric_limits<double>::infinity();
  for (int i = 0; i < radial; ++i) {
    const double lr = log_lambda_ * (i + 0.5) / radial;
    for (int j = 0; j < angular; ++j) {
      const double a = kTwoPi * (j + 0.5) / angular;
      const Vec2 p0 = std::exp(lr) * Vec2{std::cos(a), std::sin(a)};
      Vec2 p = p0;
      Mat2 D;
      flow(p, &D, factor_.time);
      const double r = norm(p0);
      c.c1 = std::max(c.c1, op_norm(D - Mat2::identity()));
      c.c0 = std::max(c.c0, norm(p - p0) / r);
      c.min_det = std::min(c.min_det, det(D));
      Vec2 q = p;
      flow(q, nullptr, -factor_.time);
      c.round_trip = std::max(c.round_trip, norm(q - p0) / r);
    }
  }
  return c;
}

AnnulusDiffeo lift_factor(const TorusFactor& factor, const RetardedCocycle& ret, int depth) {
  if (!factor.field) throw InvalidArgument("factor has no field");
  for (int j = 0; j < 128; ++j) {
    const Vec2 w = factor.field->value(factor.cut, (j + 0.5) / 128.0);
    if (w.x != 0.0 || w.y != 0.0)
      throw InvalidArgument("factor support hits every round parallel");
  }
  const double lo = depth + factor.cut;
  if (lo < 0.0 || lo + 1.0 > ret.m() + 1.0)
    throw InvalidArgument("target annulus is not inside the homothetic region");
  return AnnulusDiffeo(factor, ret.spec().log_R2, ret.spec().log_lambda(), depth);
}

// ---------------------------------------------------------------- composition

PerturbedCocycle::PerturbedCocycle(std::shared_ptr<const RetardedCocycle> base,
                                   std::vector<AnnulusDiffeo> lifts)
    : base_(std::move(base)), lifts_(std::move(lifts)) {
  std::sort(lifts_.begin(), lifts_.end(),
            [](const AnnulusDiffeo& a, const AnnulusDiffeo& b) { return a.log_inner() < b.log_inner(); });
}

const AnnulusDiffeo* PerturbedCocycle::lift_at(const ScaledPoint& y) const {
  if (lifts_.empty() || y.is_origin()) return nullptr;
  auto it = std::upper_bound(lifts_.begin(), lifts_.end(), y.ls,
                             [](double ls, const AnnulusDiffeo& a) { return ls < a.log_inner(); });
  if (it == lifts_.begin()) return nullptr;
  --it;
  return it->contains(y) ? &*it : nullptr;
}

ScaledPoint PerturbedCocycle::apply(std::size_t i, const ScaledPoint& x) const {
  const ScaledPoint y = base_->apply(i, x);
  if (i % period() != period() - 1) return y;
  const AnnulusDiffeo* L = lift_at(y);
  return L ? L->apply(y) : y;
}

ScaledPoint PerturbedCocycle::invert(std::size_t i, const ScaledPoint& y) const {
  if (i % period() != period() - 1) return base_->invert(i, y);
  const AnnulusDiffeo* L = lift_at(y);
  return base_->invert(i, L ? L->apply_inverse(y) : y);
}

Mat2 PerturbedCocycle::jacobian(std::size_t i, const ScaledPoint& x) const {
  const Mat2 J = base_->jacobian(i, x);
  if (i % period() != period() - 1) return J;
  const ScaledPoint y = base_->apply(i, x);
  const AnnulusDiffeo* L = lift_at(y);
  return L ? L->jacobian(y) * J : J;
}

ScaledPoint PerturbedCocycle::return_map(const ScaledPoint& x) const {
  const ScaledPoint y = base_->return_map(x);
  const AnnulusDiffeo* L = lift_at(y);
  return L ? L->apply(y) : y;
}

ScaledPoint PerturbedCocycle::return_inverse(const ScaledPoint& y) const {
  const AnnulusDiffeo* L = lift_at(y);
  return base_->return_inverse(L ? L->apply_inverse(y) : y);
}

std::optional<HomotheticAnnulus> PerturbedCocycle::homothetic_annulus() const {
  return base_->homothetic_annulus();
}

std::shared_ptr<const PerturbedCocycle> compose_perturbation(
    std::shared_ptr<const RetardedCocycle> ret, std::vector<AnnulusDiffeo> lifts,
    CompositionCertificate* cert) {
  if (!ret) throw InvalidArgument("no base cocycle");
  std::sort(lifts.begin(), lifts.end(),
            [](const AnnulusDiffeo& a, const AnnulusDiffeo& b) { return a.log_inner() < b.log_inner(); });
  const double lo = ret->homothetic_log_inner();
  // The outermost fundamental annulus stays untouched: it carries the torus chart.
  const double hi = ret->homothetic_log_outer() + ret->spec().log_lambda();
  const double tol = 1e-12 * std::max(1.0, std::abs(lo));
  for (std::size_t k = 0; k < lifts.size(); ++k) {
    const auto& L = lifts[k];
    if (L.log_inner() < lo - tol || L.log_outer() > hi + tol)
      throw InvalidArgument("lift annulus escapes the homothetic region");
    if (std::abs(L.log_lambda() - ret->spec().log_lambda()) > 1e-12)
      throw InvalidArgument("lift built for a different homothety");
    if (k > 0 && !(lifts[k - 1].log_outer() < L.log_inner()))
      throw InvalidArgument("lift annuli overlap");
  }
  if (cert) {
    CompositionCertificate c;
    c.C = op_norm(ret->spec().homothety_factors.back());
    // Lifts sharing a prototype are conjugate by homotheties: certify once.
    std::vector<int> seen;
    const std::size_t n = ret->period();
    for (const auto& L : lifts) {
      if (std::find(seen.begin(), seen.end(), L.factor().prototype) != seen.end()) continue;
      seen.push_back(L.factor().prototype);
      const auto ce = L.certify();
      if (!ce.ok()) throw InvalidArgument("lift failed bijectivity certification");
      c.max_eta = std::max(c.max_eta, ce.c1);
      for (int i = 0; i < 8; ++i) {
        const double ls = L.log_inner() + (L.log_outer() - L.log_inner()) * (i + 0.5) / 8.0;
        for (int j = 0; j < 32; ++j) {
          const ScaledPoint y = ScaledPoint::polar(ls, kTwoPi * (j + 0.5) / 32.0);
          const ScaledPoint x = ret->invert(n - 1, y);
          const Mat2 Df = ret->jacobian(n - 1, x);
          c.measured = std::max(c.measured, op_norm((L.jacobian(y) - Mat2::identity()) * Df));
        }
      }
    }
    c.bound = c.C * c.max_eta;
    *cert = c;
  }
  return std::make_shared<PerturbedCocycle>(std::move(ret), std::move(lifts));
}

double sample_lift_deviation(const PerturbedCocycle& g, const LinearCocycle& ref, int radial,
                             int angular) {
  const std::size_t n = g.period();
  std::vector<int> seen;
  double worst = 0.0;
  for (const auto& L : g.lifts()) {
    if (std::find(seen.begin(), seen.end(), L.factor().prototype) != seen.end()) continue;
    seen.push_back(L.factor().prototype);
    for (int i = 0; i < radial; ++i) {
      const double ls = L.log_inner() + (L.log_outer() - L.log_inner()) * (i + 0.5) / radial;
      for (int j = 0; j < angular; ++j) {
        const ScaledPoint y = ScaledPoint::polar(ls, kTwoPi * (j + 0.5) / angular);
        const ScaledPoint x = g.base().invert(n - 1, y);
        worst = std::max(worst, op_norm(g.jacobian(n - 1, x) - ref[n - 1]));
      }
    }
  }
  return worst;
}

// ---------------------------------------------------------------- targets

TargetFamily parse_target_family(const std::string& name) {
  if (name == "identity") return TargetFamily::Identity;
  if (name == "shift") return TargetFamily::Shift;
  if (name == "finger") return TargetFamily::Finger;
  if (name == "twist") return TargetFamily::Twist;
  throw InvalidArgument("unknown target family: " + name);
}

const char* to_string(TargetFamily f) {
  switch (f) {
    case TargetFamily::Identity: return "identity";
    case TargetFamily::Shift: return "shift";
    case TargetFamily::Finger: return "finger";
    case TargetFamily::Twist: return "twist";
  }
  return "?";
}

std::array<TorusCurve, 2> family_targets(const std::array<TorusCurve, 2>& current,
                                         TargetFamily family) {
  std::array<TorusCurve, 2> out;
  for (int b = 0; b < 2; ++b) {
    out[b] = family == TargetFamily::Identity ? current[b] : resample(current[b], 0.002);
    for (auto& p : out[b].pts) {
      const double u = frac(p.u);
      switch (family) {
        case TargetFamily::Identity: break;
        case TargetFamily::Shift: p.v += 0.1; break;
        case TargetFamily::Finger:
          if (b == 0) p.v += 0.12 * smooth_bump(u, 0.35, 0.65);
          break;
        case TargetFamily::Twist: p.v += smooth_bump(u, 0.2, 0.8); break;
      }
    }
  }
  return out;
}

std::vector<double> graph_samples(const TorusCurve& c0, int n) {
  if (c0.pts.size() < 2) throw InvalidArgument("curve has fewer than two points");
  if (std::abs(c0.wraps_u) != 1 || c0.wraps_v != 0)
    throw InvalidArgument("curve is not in the (1,0) homology class");
  TorusCurve c = c0;
  if (c.wraps_u < 0) {
    std::reverse(c.pts.begin(), c.pts.end());
    c.wraps_u = 1;
  }
  // Closed lift: append the first point shifted by one turn in u.
  std::vector<TorusPoint> q = c.pts;
  q.push_back({c.pts.front().u + 1.0, c.pts.front().v});
  for (std::size_t k = 0; k + 1 < q.size(); ++k)
    if (!(q[k + 1].u > q[k].u)) throw InvalidArgument("curve is not a graph over u");
  const double u0 = q.front().u;
  std::vector<double> g(n);
  for (int k = 0; k < n; ++k) {
    const double uq = u0 + frac(static_cast<double>(k) / n - u0);
    auto it = std::upper_bound(q.begin(), q.end(), uq,
                               [](double x, const TorusPoint& p) { return x < p.u; });
    std::size_t j = static_cast<std::size_t>(it - q.begin());
    if (j == 0) j = 1;
    if (j >= q.size()) j = q.size() - 1;
    const TorusPoint& a = q[j - 1];
    const TorusPoint& b = q[j];
    const double w = (uq - a.u) / (b.u - a.u);
    g[k] = a.v + w * (b.v - a.v);
  }
  // Continuity across the seam at u = u0 is automatic; make the lift start near 0.
  const double shift = std::floor(g[0]);
  for (double& x : g) x -= shift;
  return g;
}

TorusFlow steering_flow(const std::array<TorusCurve, 2>& current,
                        const std::array<TorusCurve, 2>& targets, int samples) {
  const int n = samples;
  std::vector<double> G1 = graph_samples(current[0], n), G2 = graph_samples(current[1], n);
  const auto lift_above = [&](const std::vector<double>& lo, std::vector<double>& hi,
                              const char* what) {
    const double s = std::floor(hi[0] - lo[0]);
    for (double& x : hi) x -= s;
    for (int k = 0; k < n; ++k) {
      const double d = hi[k] - lo[k];
      if (!(d > 0.0 && d < 1.0)) throw InvalidArgument(what);
    }
  };
  lift_above(G1, G2, "current meridians intersect");
  std::vector<double> S[2] = {graph_samples(targets[0], n), graph_samples(targets[1], n)};

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> d1, d2;
  for (int pairing = 0; pairing < 2; ++pairing) {
    std::vector<double> S1 = S[pairing], S2 = S[1 - pairing];
    double mean = 0.0;
    for (int k = 0; k < n; ++k) mean += G1[k] - S1[k];
    const double n1 = std::round(mean / n);
    for (double& x : S1) x += n1;
    lift_above(S1, S2, "target curves intersect");
    double cost = 0.0;
    std::vector<double> a(n), b(n);
    for (int k = 0; k < n; ++k) {
      a[k] = S1[k] - G1[k];
      b[k] = S2[k] - G2[k];
      cost += std::abs(a[k]) + std::abs(b[k]);
    }
    if (cost < best) best = cost, d1 = a, d2 = b;
  }

  std::vector<double> c(n), e(n), m1(n), m2(n);
  bool any_e = false;
  double gap = 1.0;
  for (int k = 0; k < n; ++k) {
    // Displacements at round-off level are treated as exact zeros.
    c[k] = 0.5 * (d1[k] + d2[k]);
    e[k] = 0.5 * (d1[k] - d2[k]);
    if (std::abs(c[k]) < 1e-10) c[k] = 0.0;
    if (std::abs(e[k]) < 1e-10) e[k] = 0.0;
    any_e = any_e || e[k] != 0.0;
    const double a1 = G1[k] + c[k], a2 = G2[k] + c[k];
    m1[k] = a1 + 0.5 * e[k];
    m2[k] = a2 - 0.5 * e[k];
    // Swept intervals [a1, a1 + e] and [a2 - e, a2] and their cyclic gaps.
    const double lo1 = std::min(a1, a1 + e[k]), hi1 = std::max(a1, a1 + e[k]);
    const double lo2 = std::min(a2, a2 - e[k]), hi2 = std::max(a2, a2 - e[k]);
    gap = std::min({gap, lo2 - hi1, lo1 + 1.0 - hi2});
  }
  if (!(gap > 0.0)) throw InvalidArgument("target curves intersect the swept region");
  TorusFlow psi;
  psi.stages.push_back(std::make_shared<VerticalProfileField>(c));
  if (any_e) psi.stages.push_back(std::make_shared<PlateauPairField>(e, m1, m2, gap / 5.0));
  return psi;
}

// ---------------------------------------------------------------- steering

namespace {

double matched_hausdorff(const std::array<TorusCurve, 2>& a, const std::array<TorusCurve, 2>& b) {
  const double same = std::max(curve_hausdorff(a[0], b[0]), curve_hausdorff(a[1], b[1]));
  const double swap = std::max(curve_hausdorff(a[0], b[1]), curve_hausdorff(a[1], b[0]));
  return std::min(same, swap);
}

struct LiftPlan {
  TorusDiffeoFactorization fac;
  double max_c1 = 0.0;
  bool ok = false;
};

LiftPlan plan_lifts(const TorusFlow& psi, double mu, double eta, const RetardedCocycle& ret) {
  LiftPlan p;
  p.fac = fragment(psi, mu);
  std::vector<int> seen;
  for (const auto& f : p.fac.factors) {
    if (std::find(seen.begin(), seen.end(), f.prototype) != seen.end()) continue;
    seen.push_back(f.prototype);
    const AnnulusDiffeo L(f, ret.spec().log_R2, ret.spec().log_lambda(), 0);
    const auto ce = L.certify();
    if (!ce.ok()) return p;
    p.max_c1 = std::max(p.max_c1, ce.c1);
  }
  p.ok = p.max_c1 < eta;
  return p;
}

}  // namespace

SteerResult steer_meridians(std::shared_ptr<const RetardedCocycle> ret,
                            const std::array<TorusCurve, 2>& targets, const SteerOptions& opt) {
  if (!ret) throw InvalidArgument("no retarded cocycle");
  if (!(opt.epsilon0 > 0.0)) throw InvalidArgument("epsilon0 must be positive");
  SteerResult res;
  SteerReport& rep = res.report;
  using clock = std::chrono::steady_clock;
  auto mark = clock::now();
  const auto lap = [&](const std::string& what) {
    const auto t = clock::now();
    rep.log.push_back(what + ": " + std::to_string(std::chrono::duration<double>(t - mark).count()) + " s");
    mark = t;
  };
  rep.targets = targets;
  rep.m_before = ret->m();
  for (const auto& t : targets) graph_samples(t, 16);  // homology and graph checks

  rep.before = meridians(*ret, opt.trace);
  const TorusFlow psi = steering_flow(rep.before, targets, opt.samples);
  lap("trace before");

  rep.C = op_norm(ret->spec().homothety_factors.back());
  rep.eta = opt.epsilon0 / rep.C;

  // Largest mu (halving, then bisection) whose lifts certify below eta.
  double mu = opt.mu_start;
  LiftPlan plan = plan_lifts(psi, mu, rep.eta, *ret);
  double mu_bad = -1.0;
  for (int h = 0; !plan.ok; ++h) {
    if (h > 30) throw InvalidArgument("fragmentation failure: no mu certifies the lifts");
    mu_bad = mu;
    mu *= 0.5;
    plan = plan_lifts(psi, mu, rep.eta, *ret);
  }
  if (mu_bad > 0.0) {
    double good = mu;
    for (int b = 0; b < opt.bisections; ++b) {
      const double mid = 0.5 * (good + mu_bad);
      LiftPlan trial = plan_lifts(psi, mid, rep.eta, *ret);
      if (trial.ok && trial.fac.factors.size() <= plan.fac.factors.size()) {
        good = mid;
        plan = std::move(trial);
      } else {
        mu_bad = mid;
      }
    }
    mu = good;
  }
  rep.mu = mu;
  rep.factors = static_cast<int>(plan.fac.factors.size());
  rep.max_factor_distance = plan.fac.max_distance;
  lap("fragment into " + std::to_string(rep.factors) + " factors");

  const int k = rep.factors;
  const int m_req = 3 * (k + 1);
  std::shared_ptr<const RetardedCocycle> base = ret;
  if (ret->m() < m_req) {
    base = retard(ret->base(), ret->spec(), m_req);
    rep.log.push_back("re-retarded to m = " + std::to_string(m_req));
  }
  rep.m_after = base->m();

  std::vector<AnnulusDiffeo> lifts;
  lifts.reserve(k);
  for (int i = 1; i <= k; ++i)
    lifts.push_back(lift_factor(plan.fac.factors[i - 1], *base, base->m() - 3 * i));

  CompositionCertificate cert;
  res.cocycle = compose_perturbation(base, std::move(lifts), &cert);
  rep.max_lift_c1 = cert.max_eta;
  rep.perturbation_bound = cert.bound;
  rep.measured_perturbation = cert.measured;
  lap("compose");

  rep.after = meridians(*res.cocycle, opt.trace);
  lap("trace after");
  rep.hausdorff = matched_hausdorff(rep.after, targets);
  return res;
}

}  // namespace flexlab
