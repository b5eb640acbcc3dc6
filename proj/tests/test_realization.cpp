#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "flexlab/realization.hpp"
#include "support.hpp"

using namespace flexlab;

namespace {

CocyclePath straight_path(const Mat2& a, const Mat2& b) {
  return CocyclePath({0.0, 1.0}, {LinearCocycle({a}), LinearCocycle({b})});
}

// Entrywise interpolation written out independently of CocyclePath.
Mat2 interpolate(const CocyclePath& p, std::size_t i, double t) {
  const auto& n = p.nodes();
  std::size_t j = 0;
  while (j + 2 < n.size() && t > n[j + 1]) ++j;
  const double w = (t - n[j]) / (n[j + 1] - n[j]);
  const Mat2& a = p.cocycles()[j][i];
  const Mat2& b = p.cocycles()[j + 1][i];
  return (1.0 - w) * a + w * b;
}

// Contracting rotation path: 0.5 R(0) to 0.5 R(3) over two fibers.
CocyclePath rotating_path() {
  return CocyclePath({0.0, 0.5, 1.0},
                     {LinearCocycle({Mat2::scalar(0.5), Mat2::diag(0.6, 0.4)}),
                      LinearCocycle({0.5 * Mat2::rotation(1.5), Mat2{0.6, 0.1, 0.0, 0.4}}),
                      LinearCocycle({0.5 * Mat2::rotation(3.0), Mat2::diag(0.5, 0.45)})});
}

}  // namespace

TEST_CASE("constant path gives a single plateau") {
  const CocyclePath p = straight_path(Mat2::scalar(0.5), Mat2::scalar(0.5));
  const ReparamBuild b = build_reparam(p, 0.1, 0.3, 1.0);
  CHECK(b.length == 0.0);
  CHECK(b.theta.theta_min() == b.theta.theta_max());
  CHECK_FALSE(b.inner_shrunk);
}

TEST_CASE("unit arc length at delta 0.1 forces ten log units") {
  const CocyclePath p = straight_path(Mat2::scalar(0.5), Mat2{0.5, 1.0, 0.0, 0.5});
  const ReparamBuild b = build_reparam(p, 0.1, 0.5, 1.0);
  CHECK(b.length == doctest::Approx(1.0));
  CHECK(b.inner_shrunk);
  CHECK(b.log_outer - b.log_inner >= 10.0 - 1e-12);
  CHECK(b.speed <= 0.1 + 1e-15);
  // Speed bound ||d(A o theta)/d log r|| <= delta between breakpoints.
  const RadialCocycle rc(p, b.theta, 0.1);
  for (int k = 1; k < 1000; ++k) {
    const double ls = b.log_inner + (b.log_outer - b.log_inner) * (k + 0.5) / 1000.0;
    CHECK(op_norm(rc.dmatrix(0, ls)) <= 0.1 * (1.0 + 1e-9));
  }
}

TEST_CASE("slack delta keeps the inner radius and theta is affine in log r") {
  const CocyclePath p = straight_path(Mat2::scalar(0.5), Mat2::diag(0.5, 0.3));
  const ReparamBuild b = build_reparam(p, 1e3, 0.25, 1.0);
  CHECK_FALSE(b.inner_shrunk);
  CHECK(b.log_inner == doctest::Approx(std::log(0.25)));
  for (double w : {0.1, 0.25, 0.5, 0.9}) {
    const double ls = std::log(0.25) + w * (std::log(1.0) - std::log(0.25));
    CHECK(b.theta(ls) == doctest::Approx(w).epsilon(1e-9));
  }
  CHECK(b.theta(std::log(0.01)) == 0.0);
  CHECK(b.theta(std::log(5.0)) == 1.0);
}

TEST_CASE("fiber map fixes the origin and is linear on the plateaus") {
  const CocyclePath p = rotating_path();
  const ReparamBuild b = build_reparam_log(p, 0.05, -3.0, 0.0);
  const RadialCocycle rc(p, b.theta, 0.1);
  for (std::size_t i = 0; i < 2; ++i) {
    const Vec2 zero = eval_fiber_map(rc, i, {0.0, 0.0});
    CHECK(zero.x == 0.0);
    CHECK(zero.y == 0.0);
    const Mat2 outer = p.at(i, p.t_hi());
    const Mat2 inner = p.at(i, p.t_lo());
    for (double r : {1.0, 2.0, 100.0}) {
      const Vec2 x{0.6 * r, -0.8 * r};
      const Vec2 y = eval_fiber_map(rc, i, x);
      CHECK(y.x == doctest::Approx((outer * x).x).epsilon(1e-14));
      CHECK(y.y == doctest::Approx((outer * x).y).epsilon(1e-14));
    }
    const Vec2 x{std::exp(b.log_inner - 5.0), 0.0};
    CHECK(eval_fiber_derivative(rc, i, x) == inner);
  }
}

TEST_CASE("fiber map matches independent interpolation and finite differences") {
  const CocyclePath p = rotating_path();
  const ReparamBuild b = build_reparam_log(p, 0.05, -3.0, 0.0);
  const RadialCocycle rc(p, b.theta, 0.1);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ul(b.log_inner, b.log_outer), ua(0, 2 * M_PI);
  for (int k = 0; k < 200; ++k) {
    const double ls = ul(rng), ang = ua(rng);
    const Vec2 x{std::exp(ls) * std::cos(ang), std::exp(ls) * std::sin(ang)};
    for (std::size_t i = 0; i < 2; ++i) {
      const Vec2 want = interpolate(p, i, b.theta(std::log(norm(x)))) * x;
      const Vec2 got = eval_fiber_map(rc, i, x);
      CHECK(norm(got - want) <= 1e-13 * norm(x));

      const double h = 1e-6 * norm(x);
      const Vec2 dx = (1.0 / (2 * h)) * (eval_fiber_map(rc, i, {x.x + h, x.y}) -
                                          eval_fiber_map(rc, i, {x.x - h, x.y}));
      const Vec2 dy = (1.0 / (2 * h)) * (eval_fiber_map(rc, i, {x.x, x.y + h}) -
                                          eval_fiber_map(rc, i, {x.x, x.y - h}));
      const Mat2 fd{dx.x, dy.x, dx.y, dy.y};
      const Mat2 an = eval_fiber_derivative(rc, i, x);
      CHECK(op_norm(fd - an) <= 1e-5 * op_norm(an));
    }
  }
  const FiniteDifferenceReport fd = finite_difference_check(rc, 500, 3);
  CHECK(fd.max_rel_error < 1e-5);
}

TEST_CASE("constant path realizes to a linear cocycle") {
  const Mat2 A = Mat2{0.5, 0.2, -0.1, 0.4};
  const CocyclePath p = straight_path(A, A);
  const ReparamBuild b = build_reparam_log(p, 0.1, -2.0, 0.0);
  const RadialCocycle rc(p, b.theta, 0.05);
  for (double ls : {-5.0, -1.0, -0.3, 2.0}) {
    const Vec2 x{std::exp(ls), 0.0};
    CHECK(eval_fiber_derivative(rc, 0, x) == A);
  }
  const RealizationCertificate c = certify_realization(rc);
  CHECK(c.one_step_max == 0.0);
  CHECK(c.jstep_max == 0.0);
  CHECK(c.contraction_max < 0.5);
  CHECK(c.pass);
  // k is the contraction horizon: ||A^k|| < 1/2.
  Mat2 pk = Mat2::identity();
  for (int j = 0; j < rc.k_contract(); ++j) pk = A * pk;
  CHECK(op_norm(pk) < 0.5);
}

TEST_CASE("inflated parameter speed is caught with a witness") {
  const CocyclePath p = rotating_path();
  // Traversal squeezed into half a log unit.
  const Reparam theta({-0.5, 0.0}, {p.t_lo(), p.t_hi()});
  const RadialCocycle rc(p, theta, 0.05);
  const RealizationCertificate c = certify_realization(rc);
  CHECK_FALSE(c.pass);
  CHECK(c.one_step_max > 0.05);
  CHECK(c.one_step_witness.value == c.one_step_max);
  CHECK(c.one_step_witness.x.ls >= -0.5 - 1e-9);
  CHECK(c.one_step_witness.x.ls <= 0.0 + 1e-9);
}

TEST_CASE("factory witness realizes with a twofold margin") {
  const auto& d = flexlab::testing::demo_pipeline();
  const RealizationCertificate& c = d.realization.certificate;
  CHECK(c.pass);
  CHECK(c.one_step_max * 2.0 <= c.epsilon1);
  CHECK(c.jstep_max < c.epsilon1);
  CHECK(c.contraction_max < 1.0);
  const FiniteDifferenceReport fd = finite_difference_check(*d.realization.cocycle, 2000, 1);
  CHECK(fd.max_rel_error < 1e-5);
}

TEST_CASE("realized fibers are bijections and orbits stay in the radius sandwich") {
  const auto& d = flexlab::testing::demo_pipeline();
  const RadialCocycle& rc = *d.realization.cocycle;
  const double lo = rc.theta().inner_log_radius(), hi = rc.theta().outer_log_radius();
  const int k = rc.k_contract();
  const double logK = std::log(rc.K_bound());
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ul(lo - 1, hi + 1), ua(0, 2 * M_PI);
  for (int s = 0; s < 300; ++s) {
    const ScaledPoint x = ScaledPoint::polar(ul(rng), ua(rng));
    const std::size_t i0 = rng() % rc.period();
    ScaledPoint y = x;
    for (int l = 0; l < k; ++l) {
      CHECK(std::abs(y.ls - x.ls) <= k * logK + 1e-12);
      const std::size_t i = (i0 + l) % rc.period();
      const ScaledPoint z = rc.apply(i, y);
      const ScaledPoint back = rc.invert(i, z);
      CHECK(distance_at_scale(back, y, y.ls) < 1e-10);
      y = z;
    }
  }
}

TEST_CASE("nearby radii see nearby matrices") {
  // For s within a factor K^k of t the path matrices differ by at most the
  // speed times the log-radius gap.
  const auto& d = flexlab::testing::demo_pipeline();
  const RadialCocycle& rc = *d.realization.cocycle;
  const double gap = rc.k_contract() * std::log(rc.K_bound());
  const double speed = d.realization.speed;
  const double lo = rc.theta().inner_log_radius(), hi = rc.theta().outer_log_radius();
  for (int a = 0; a < 200; ++a) {
    const double t = lo + (hi - lo) * (a + 0.5) / 200.0;
    for (double s : {t - gap, t - gap / 2, t + gap / 2, t + gap}) {
      for (std::size_t i = 0; i < rc.period(); ++i) {
        const double diff = op_norm(rc.matrix_at(i, t) - rc.matrix_at(i, s));
        CHECK(diff <= speed * std::abs(t - s) * (1.0 + 1e-9) + 1e-12);
      }
    }
  }
}
