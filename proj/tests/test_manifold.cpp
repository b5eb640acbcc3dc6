#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "flexlab/manifold.hpp"
#include "support.hpp"

using namespace flexlab;

namespace {

const RetardableRealization& demo() { return flexlab::testing::demo_pipeline().realization; }

std::shared_ptr<const RetardedCocycle> demo_retard(int m) {
  return retard(demo().cocycle, demo().spec, m);
}

double wrap_dist(double a) { return std::abs(a - std::round(a)); }

// v at the unique crossing of the parallel u = u0 by a (1,0) curve.
double v_at(const TorusCurve& c, double u0) {
  const std::size_t n = c.pts.size();
  for (std::size_t k = 0; k < n; ++k) {
    TorusPoint a = c.pts[k];
    TorusPoint b = c.pts[(k + 1) % n];
    if (k + 1 == n) b = {b.u + c.wraps_u, b.v + c.wraps_v};
    const double shift = std::floor(std::min(a.u, b.u) - u0) + 1.0;
    for (double s : {shift - 1.0, shift}) {
      const double target = u0 + s;
      if ((a.u - target) * (b.u - target) <= 0.0 && a.u != b.u) {
        const double w = (target - a.u) / (b.u - a.u);
        return a.v + w * (b.v - a.v);
      }
    }
  }
  return NAN;
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double l2 = dot(ab, ab);
  const double w = l2 > 0 ? std::clamp(dot(p - a, ab) / l2, 0.0, 1.0) : 0.0;
  return norm(p - (a + w * ab));
}

// Distance from x to the union of polylines, in units of exp(ref).
double polyline_distance(const ScaledPoint& x, const std::vector<Polyline>& ps, double ref) {
  double best = INFINITY;
  const Vec2 p = x.at_scale(ref);
  for (const Polyline& pl : ps)
    for (std::size_t k = 0; k + 1 < pl.size(); ++k)
      best = std::min(best, segment_distance(p, pl[k].at_scale(ref), pl[k + 1].at_scale(ref)));
  return best;
}

// The retarded cocycle with the last fiber post-composed with a rotation
// about c by an angle that is a bump in |x - c| of radius rho.
class DiscTwist final : public CocycleDynamics {
 public:
  DiscTwist(std::shared_ptr<const RetardedCocycle> base, double scale, Vec2 c, double rho, double a)
      : base_(std::move(base)), scale_(scale), c_(c), rho_(rho), alpha_(a) {}
  std::size_t period() const override { return base_->period(); }
  ScaledPoint apply(std::size_t i, const ScaledPoint& x) const override {
    const ScaledPoint y = base_->apply(i, x);
    return i % period() == period() - 1 ? twist(y, 1.0) : y;
  }
  ScaledPoint invert(std::size_t i, const ScaledPoint& y) const override {
    return base_->invert(i, i % period() == period() - 1 ? twist(y, -1.0) : y);
  }
  Mat2 jacobian(std::size_t i, const ScaledPoint& x) const override {
    return base_->jacobian(i, x);  // not used by projection
  }
  LinearCocycle germ_at_origin() const override { return base_->germ_at_origin(); }
  double linear_core_log_radius() const override { return base_->linear_core_log_radius(); }
  std::optional<HomotheticAnnulus> homothetic_annulus() const override {
    return base_->homothetic_annulus();
  }
  bool inside(const ScaledPoint& y) const {
    return !y.is_origin() && norm(y.at_scale(scale_) - c_) < rho_;
  }

 private:
  ScaledPoint twist(const ScaledPoint& y, double sign) const {
    if (!inside(y)) return y;
    const Vec2 q = y.at_scale(scale_) - c_;
    const double s = norm(q) / rho_;
    const double bump = std::pow(std::sin(M_PI * s), 4);
    const Vec2 out = c_ + Mat2::rotation(sign * alpha_ * bump) * q;
    return ScaledPoint::make(scale_, out);
  }
  std::shared_ptr<const RetardedCocycle> base_;
  double scale_;
  Vec2 c_;
  double rho_, alpha_;
};

}  // namespace

TEST_CASE("inverse of a linear fiber is the inverse matrix") {
  const Mat2 A{0.7, 0.2, -0.3, 0.5};
  const LinearDynamics f(LinearCocycle({A}));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 100; ++k) {
    const ScaledPoint y = ScaledPoint::from({u(rng), u(rng)});
    const ScaledPoint x = eval_fiber_inverse(f, 0, y);
    const ScaledPoint want = apply(inverse(A), y);
    CHECK(x.ls == want.ls);
    CHECK(x.d == want.d);
  }
  CHECK(eval_fiber_inverse(f, 0, ScaledPoint{}).is_origin());
  CHECK(eval_fiber_inverse(*demo_retard(1), 3, ScaledPoint{}).is_origin());
}

TEST_CASE("strong stable trace of a linear saddle is the strong axis") {
  const LinearDynamics f(LinearCocycle({Mat2::diag(0.9, 0.4)}));
  const WssTrace t = trace_wss(f, -6.0, -1.0, 0.0);
  CHECK(std::abs(t.strong_direction.x) < 1e-15);
  for (int b = 0; b < 2; ++b) {
    REQUIRE_FALSE(t.pieces[b].empty());
    double sign = 0.0;
    for (const Polyline& pl : t.pieces[b])
      for (const ScaledPoint& p : pl) {
        CHECK(std::abs(p.d.x) < 1e-12);
        sign += p.d.y;
      }
    if (b == 0) CHECK(sign != 0.0);
  }
  // The branches point in opposite directions.
  CHECK(t.pieces[0].front().front().d.y * t.pieces[1].front().front().d.y < 0.0);
}

TEST_CASE("meridians of the realized cocycle are two disjoint simple (1,0) curves") {
  const auto ret = demo_retard(1);
  const auto mer = meridians(*ret);
  for (const TorusCurve& c : mer) {
    CHECK(c.wraps_u == 1);
    CHECK(c.wraps_v == 0);
    for (int k = 0; k < 50; ++k) CHECK(parallel_crossings(c, (k + 0.37) / 50.0) == 1);
  }
  for (int k = 0; k < 50; ++k) {
    const double u0 = (k + 0.37) / 50.0;
    CHECK(wrap_dist(v_at(mer[0], u0) - v_at(mer[1], u0)) > 0.1);
  }
}

TEST_CASE("retarding leaves the meridians and the band trace unchanged") {
  const auto f0 = demo_retard(0);
  const auto mer0 = meridians(*f0);
  const double R2 = demo().spec.log_R2, ll = demo().spec.log_lambda();
  const Spectrum sp = return_spectrum(f0->germ_at_origin());
  for (int m : {1, 4}) {
    const auto fm = demo_retard(m);
    const auto merm = meridians(*fm);
    for (int b = 0; b < 2; ++b) CHECK(curve_hausdorff(mer0[b], merm[b]) < 1e-6);

    const double seed = std::min(fm->linear_core_log_radius(), R2 + (m + 1) * ll) +
                        sp.log_small - 1.0;
    const WssTrace tm = trace_wss(*fm, seed, R2 + (m + 1) * ll, R2);
    const WssTrace t0 =
        trace_wss(*f0, std::min(f0->linear_core_log_radius(), R2 + ll) + sp.log_small - 1.0,
                  R2 + 2 * ll, R2 - ll);
    for (int b = 0; b < 2; ++b) {
      double worst = 0.0;
      int checked = 0;
      for (const Polyline& pl : tm.pieces[b])
        for (std::size_t k = 0; k < pl.size(); k += 7) {
          const ScaledPoint& x = pl[k];
          if (x.ls > R2 || x.ls < R2 + (m + 1) * ll) continue;
          const int l = std::min(m, static_cast<int>(std::floor((x.ls - R2) / ll)));
          const ScaledPoint back = x.shifted(-l * ll);
          ++checked;
          worst = std::max(worst, polyline_distance(back, t0.pieces[b], back.ls));
        }
      CHECK(checked > 100);
      CHECK(worst < 1e-8);
    }
  }
}

TEST_CASE("torus projection conventions") {
  const auto ret = demo_retard(1);
  const double R2 = demo().spec.log_R2, ll = demo().spec.log_lambda();
  const TorusPoint o = project_to_torus(*ret, ScaledPoint::polar(R2, 0.3));
  CHECK(wrap_dist(o.u) < 1e-12);
  CHECK(o.v == doctest::Approx(0.3 / (2 * M_PI)));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ul(R2 + 2 * ll, R2), ua(0, 2 * M_PI);
  for (int k = 0; k < 200; ++k) {
    const ScaledPoint p = ScaledPoint::polar(ul(rng), ua(rng));
    const TorusPoint a = project_to_torus(*ret, p);
    const TorusPoint b = project_to_torus(*ret, p.shifted(ll));
    CHECK(wrap_dist(a.u - b.u) < 1e-12);
    CHECK(wrap_dist(a.v - b.v) < 1e-12);
  }
}

TEST_CASE("projection is constant along orbits, across the band boundary") {
  const auto ret = demo_retard(1);
  const double R2 = demo().spec.log_R2;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ul(R2 - 3.0, R2 + 3.0), ua(0, 2 * M_PI);
  for (int k = 0; k < 300; ++k) {
    const ScaledPoint p = ScaledPoint::polar(ul(rng), ua(rng));
    const TorusPoint a = project_to_torus(*ret, p);
    const TorusPoint b = project_to_torus(*ret, ret->return_map(p));
    CHECK(wrap_dist(a.u - b.u) < 1e-9);
    CHECK(wrap_dist(a.v - b.v) < 1e-9);
  }
}

TEST_CASE("round circles project to parallels, spirals to (1,1)") {
  const LinearDynamics h(LinearCocycle({Mat2::scalar(0.5)}));
  const double ll = std::log(0.5);
  Polyline circle;
  for (int k = 0; k < 400; ++k) circle.push_back(ScaledPoint::polar(0.4 * ll, 2 * M_PI * k / 400));
  const TorusCurve par = project_curve(h, circle, true);
  CHECK(par.wraps_u == 0);
  CHECK(std::abs(par.wraps_v) == 1);
  for (const TorusPoint& p : par.pts) CHECK(p.u == doctest::Approx(0.4).epsilon(1e-12));

  Polyline spiral;
  for (int k = 0; k <= 400; ++k) {
    const double s = k / 400.0;
    spiral.push_back(ScaledPoint::polar(s * ll, 2 * M_PI * s));
  }
  const TorusCurve sp = project_curve(h, spiral, false);
  CHECK(sp.wraps_u == 1);
  CHECK(sp.wraps_v == 1);
}

TEST_CASE("meridian branch of the realized cocycle has class (1,0)") {
  const auto ret = demo_retard(0);
  const auto ha = ret->homothetic_annulus();
  const Spectrum sp = return_spectrum(ret->germ_at_origin());
  const WssTrace t = trace_wss(*ret, ret->linear_core_log_radius() + sp.log_small - 1.0,
                               ha->log_outer + 2 * ha->log_lambda, ha->log_outer);
  for (int b = 0; b < 2; ++b) {
    const TorusCurve c = project_curve(*ret, meridian_piece(t, b, ha->log_outer), false);
    CHECK(c.wraps_u == 1);
    CHECK(c.wraps_v == 0);
  }
}

TEST_CASE("hausdorff distance on the flat torus") {
  TorusCurve a, b;
  a.wraps_v = b.wraps_v = 1;
  for (int k = 0; k < 20; ++k) {
    a.pts.push_back({0.0, k / 20.0});
    b.pts.push_back({0.25, k / 20.0});
  }
  CHECK(curve_hausdorff(a, a) == 0.0);
  CHECK(curve_hausdorff(a, b) == doctest::Approx(0.25));

  // A wiggly (1,0) curve against its refinement.
  TorusCurve w;
  w.wraps_u = 1;
  const int n = 64;
  for (int k = 0; k < n; ++k) {
    const double u = static_cast<double>(k) / n;
    w.pts.push_back({u, 0.3 + 0.1 * std::sin(2 * M_PI * u) + 0.02 * std::cos(10 * M_PI * u)});
  }
  double spacing = 0.0;
  for (int k = 0; k + 1 < n; ++k)
    spacing = std::max(spacing, std::hypot(w.pts[k + 1].u - w.pts[k].u, w.pts[k + 1].v - w.pts[k].v));
  const TorusCurve fine = resample(w, spacing / 2);
  CHECK(fine.pts.size() > w.pts.size());
  CHECK(curve_hausdorff(w, fine) < spacing);
  CHECK(curve_hausdorff(w, fine) < 1e-12);
}

TEST_CASE("a local perturbation only moves projections of orbits through it") {
  const auto ret = demo_retard(1);
  const double R2 = demo().spec.log_R2, ll = demo().spec.log_lambda();
  // Disc beyond R2 that the return map of outer points can land in.
  const double scale = R2 + 0.5;
  const Vec2 c{0.6, 0.1};
  const double rho = 0.15;
  const DiscTwist g(ret, scale, c, rho, 0.5);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ul(R2 + 0.2, R2 - 2.0 * ll), ua(0, 2 * M_PI);
  int hit = 0, miss = 0, moved = 0;
  for (int k = 0; k < 400; ++k) {
    const ScaledPoint p = ScaledPoint::polar(ul(rng), ua(rng));
    bool through = false;
    ScaledPoint y = p;
    while (y.ls >= R2) {
      y = ret->return_map(y);
      through = through || g.inside(y);
    }
    const TorusPoint a = project_to_torus(*ret, p), b = project_to_torus(g, p);
    const double d = std::hypot(wrap_dist(a.u - b.u), wrap_dist(a.v - b.v));
    if (through) {
      ++hit;
      if (d > 1e-6) ++moved;
    } else {
      ++miss;
      CHECK(d == 0.0);
    }
  }
  CHECK(miss > 50);
  CHECK(hit > 5);
  CHECK(moved > 0);
}
