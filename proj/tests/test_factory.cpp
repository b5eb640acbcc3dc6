#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "flexlab/factory.hpp"
#include "support.hpp"

using namespace flexlab;

namespace {

double rel_diff(const Mat2& a, const Mat2& b) { return op_norm(a - b) / std::max(op_norm(b), 1e-300); }

Mat2 fold(const std::vector<Mat2>& seq) {
  // Accumulate in long double, entry by entry.
  long double p[2][2] = {{1, 0}, {0, 1}};
  for (const Mat2& a : seq) {
    const long double g[2][2] = {{a.a11, a.a12}, {a.a21, a.a22}};
    long double h[2][2] = {};
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        for (int k = 0; k < 2; ++k) h[r][c] += g[r][k] * p[k][c];
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) p[r][c] = h[r][c];
  }
  return {static_cast<double>(p[0][0]), static_cast<double>(p[0][1]),
          static_cast<double>(p[1][0]), static_cast<double>(p[1][1])};
}

// Norm of the unimodular eigenbasis at index i, from the return product at i.
double basis_norm_at(const LinearCocycle& c, std::size_t i) {
  const std::size_t n = c.period();
  Mat2 p = Mat2::identity();
  for (std::size_t k = 0; k < n; ++k) p = c[(i + k) % n] * p;
  const EigPair e = eig2(p);
  const Vec2 weak = eigenvector(p, e.first.real());
  const Mat2 pi = inverse(p);
  const EigPair ei = eig2(pi);
  const Vec2 strong = eigenvector(pi, ei.first.real());
  Mat2 b{weak.x, strong.x, weak.y, strong.y};
  b = (1.0 / std::sqrt(std::abs(det(b)))) * b;
  return op_norm(b);
}

}  // namespace

TEST_CASE("M(t) endpoints") {
  const double l1 = 0.9, l2 = 0.4;
  CHECK(rel_diff(homoper_path(l1, l2, 0.0), Mat2::diag(l1 * l1, l2 * l2)) < 1e-15);
  const Mat2 h = homoper_path(l1, l2, M_PI / 2);
  CHECK(homothety_residual(h) < 1e-9);
  CHECK(trace(h) / 2 == doctest::Approx(0.36).epsilon(1e-12));
  const EigPair e = eig2(homoper_path(l1, l2, M_PI / 4));
  CHECK(e.kind == EigKind::RealDistinct);
  CHECK(e.first.real() < 1.0);
  CHECK(e.second.real() > 0.0);
}

TEST_CASE("M(t) trace decreases and determinant is constant") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.99);
  for (int trial = 0; trial < 10; ++trial) {
    double a = u(rng), b = u(rng);
    if (a < b) std::swap(a, b);
    if (a - b < 1e-3) continue;
    double prev = INFINITY;
    for (int k = 0; k <= 1000; ++k) {
      const Mat2 m = homoper_path(a, b, M_PI / 2 * k / 1000.0);
      CHECK(trace(m) < prev);
      prev = trace(m);
      CHECK(std::abs(det(m) - a * a * b * b) < 1e-14);
    }
  }
}

TEST_CASE("annihilation of the identity is a run of Q") {
  const Mat2 Q = Mat2::scalar(0.5);
  const Annihilation a = annihilation_path(Mat2::identity(), Q, 0.01, Side::Right);
  CHECK(a.h == 1);
  for (const Mat2& s : a.steps) CHECK(s == Q);
  CHECK(a.telescoping_residual < 1e-15);
}

TEST_CASE("quarter rotation needs the smallest h with a small enough rotation step") {
  const Mat2 Q = Mat2::scalar(0.5);
  int oracle = 0;
  for (int h = 1; h < 100 && oracle == 0; ++h)
    if (op_norm((Mat2::rotation(M_PI / (2.0 * h)) - Mat2::identity()) * Q) < 0.1) oracle = h;
  CHECK(oracle == 8);
  CHECK(2 * std::sin(M_PI / 32) * 0.5 < 0.1);
  for (Side side : {Side::Right, Side::Left}) {
    const Annihilation a = annihilation_path(Mat2::rotation(M_PI / 2), Q, 0.1, side);
    CHECK(a.h == oracle);
    CHECK(a.max_step_deviation < 0.1);
  }
}

TEST_CASE("annihilation telescopes for random transitions") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ua(0, 2 * M_PI), us(std::log(1 / 3.0), std::log(3.0));
  const Mat2 Q = Mat2::scalar(0.7);
  for (int trial = 0; trial < 30; ++trial) {
    const Mat2 T = Mat2::rotation(ua(rng)) * Mat2::diag(std::exp(us(rng)), std::exp(us(rng))) *
                   Mat2::rotation(ua(rng));
    REQUIRE(singular_values(T).max / singular_values(T).min < 10.0);
    for (Side side : {Side::Right, Side::Left}) {
      const Annihilation a = annihilation_path(T, Q, 0.05, side);
      std::vector<Mat2> seq;
      if (side == Side::Right) seq.push_back(T);
      seq.insert(seq.end(), a.steps.begin(), a.steps.end());
      if (side == Side::Left) seq.push_back(T);
      const Mat2 Qh = Mat2::scalar(std::pow(0.7, a.h));
      CHECK(rel_diff(fold(seq), Qh) < 1e-12);
      for (const Mat2& s : a.steps) CHECK(op_norm(s - Q) < 0.05);
    }
  }
}

TEST_CASE("signed reduction") {
  const TransitionKit demo = demo_transition_kit();
  CHECK_FALSE(signed_reduction(demo).changed());
  CHECK_FALSE(signed_reduction(demo).even_l);

  TransitionKit neg = demo;
  neg.T1 = demo.T1 * Mat2::diag(1.0, -1.0);
  const SignedReduction s = signed_reduction(neg);
  CHECK(s.substitute1);
  CHECK_FALSE(s.substitute2);
  // T1 P T2 Q T1, applied right to left.
  CHECK(rel_diff(s.target1, neg.T1 * neg.P * neg.T2 * neg.Q * neg.T1) < 1e-15);
  CHECK(det(s.target1) > 0);

  TransitionKit both = demo;
  both.T1 = demo.T1 * Mat2::diag(1.0, -1.0);
  both.T2 = Mat2::diag(1.0, -1.0) * demo.T2;
  const SignedReduction b = signed_reduction(both);
  CHECK(b.conjugate_by_flip);
  CHECK(det(b.target1) > 0);
  CHECK(det(b.target2) > 0);

  TransitionKit signed_p = demo;
  signed_p.P = Mat2::diag(0.97, -0.93);
  CHECK(signed_reduction(signed_p).even_l);
}

TEST_CASE("rational rotation angle needs no nudges") {
  const Mat2 B = 0.9 * Mat2::rotation(2 * M_PI / 7);
  const HomothetyFromComplex h = homothety_from_complex(B, Mat2::identity(), 0.01);
  CHECK(h.N == 7);
  for (double n : h.nudges) CHECK(std::abs(n) < 1e-12);
  const Mat2 p = std::exp(h.product.log_scale) * h.product.m;
  CHECK(rel_diff(p, Mat2::scalar(std::pow(0.9, 7))) < 1e-12);
}

TEST_CASE("irrational rotation angle is rounded to a homothety") {
  const Mat2 B = 0.9 * Mat2::rotation(1.0);
  const HomothetyFromComplex h = homothety_from_complex(B, Mat2::identity(), 0.01);
  const double total = h.N * (h.alpha + h.nudges.front());
  CHECK(std::abs(total / (2 * M_PI) - std::round(total / (2 * M_PI))) < 1e-12);
  CHECK(h.max_step_deviation < 0.01);
  CHECK(std::abs(h.product.m.a12) < 1e-12);
  CHECK(std::abs(h.product.m.a21) < 1e-12);
  CHECK(h.homothety_residual < 1e-12);
}

TEST_CASE("non-normal complex matrix with a transition") {
  const Mat2 S{1.0, 2.0, 0.0, 1.0};
  const Mat2 B = S * (0.85 * Mat2::rotation(0.8)) * inverse(S);
  const Mat2 T = Mat2::rotation(0.3) * Mat2::diag(1.2, 0.9);
  const HomothetyFromComplex h = homothety_from_complex(B, T, 0.05);
  // The recorded conjugacy brings B to rho R(alpha).
  const Mat2 nf = inverse(h.conjugacy) * B * h.conjugacy;
  CHECK(rel_diff(nf, h.rho * Mat2::rotation(h.alpha)) < 1e-12);
  CHECK(h.max_step_deviation < 0.05);
  CHECK(rel_diff(fold(h.steps), Mat2::scalar(trace(fold(h.steps)) / 2)) < 1e-10);
  CHECK(h.homothety_residual < 1e-10);
}

TEST_CASE("diagonalizing index of an orthogonal diagonal cocycle") {
  const DiagonalizingIndex d = diagonalizing_index(LinearCocycle({Mat2::diag(0.99, 0.1)}), 2.0);
  CHECK(d.index == 0);
  CHECK(d.norm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.within_alpha);
}

TEST_CASE("diagonalizing index avoids the sheared fiber") {
  const Mat2 S{1.0, 5.0, 0.0, 1.0};
  const Mat2 D = Mat2::diag(0.9, 0.3);
  // Index 1 sees the basis S, index 0 the standard basis.
  const LinearCocycle c({S * D, D * inverse(S)});
  const DiagonalizingIndex d = diagonalizing_index(c, 10.0);
  CHECK(d.index == 0);
  CHECK(d.norms[0] == doctest::Approx(basis_norm_at(c, 0)).epsilon(1e-9));
  CHECK(d.norms[1] == doctest::Approx(basis_norm_at(c, 1)).epsilon(1e-9));
  CHECK(basis_norm_at(c, 0) < basis_norm_at(c, 1));
}

TEST_CASE("diagonalizing index equals the exhaustive minimum") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(0, 2 * M_PI);
  int done = 0;
  while (done < 20) {
    std::vector<Mat2> m;
    for (int i = 0; i < 8; ++i)
      m.push_back(Mat2::rotation(ua(rng)) * Mat2::diag(std::exp(-0.1), std::exp(-2.0)) *
                  Mat2::rotation(ua(rng)));
    const LinearCocycle c(m);
    if (eig2(return_product(c)).kind != EigKind::RealDistinct) continue;
    ++done;
    const DiagonalizingIndex d = diagonalizing_index(c, 100.0);
    double best = INFINITY;
    for (std::size_t i = 0; i < c.period(); ++i) best = std::min(best, basis_norm_at(c, i));
    CHECK(d.norm == doctest::Approx(best).epsilon(1e-9));
    CHECK(basis_norm_at(c, d.index) == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("angle distortion") {
  CHECK(angle_distortion_check(2.0, 1.5, 0.0, 1000).worst_ratio == 1.0);
  // The norm bound alone gives ratio < C1^2.
  for (double tau : {0.1, 0.7, 1.5}) CHECK(angle_distortion_check(1.5, 2.25, tau, 5000).ok);

  const double C1 = 1.8, tau = 0.05;
  const Mat2 d = Mat2::diag(C1, 1 / C1);
  double dense = 1.0;
  for (int k = 0; k < 100000; ++k) {
    const double th = 2 * M_PI * k / 100000.0;
    const double q = norm(d * Vec2{std::cos(th), std::sin(th)}) /
                     norm(d * Vec2{std::cos(th + tau), std::sin(th + tau)});
    dense = std::max({dense, q, 1 / q});
  }
  const DistortionVerdict v = angle_distortion_check(C1, 10.0, tau, 2000);
  CHECK(std::abs(v.worst_ratio - dense) <= 0.01 * dense);
}

TEST_CASE("assembly with trivial transitions is exactly the block product") {
  TransitionKit kit;
  kit.P = Mat2::diag(0.9, 0.5);
  kit.Q = Mat2::scalar(0.8);
  ScheduleL s;
  s.l1 = s.l3 = 2;
  s.l2 = 2;
  s.l4 = 3;
  s.i1 = s.i2 = 0;
  s.i3 = 1;
  const FlexAssembly a = assemble_flex_cocycle(kit, s);
  const Mat2 want = Mat2::diag(std::pow(0.8, 5) * std::pow(0.9, 4), std::pow(0.8, 5) * std::pow(0.5, 4));
  CHECK(rel_diff(return_product(a.cocycle), want) < 1e-15);
  CHECK(a.product_residual < 1e-15);
}

TEST_CASE("demo assembly matches an independent fold") {
  const TransitionKit kit = demo_transition_kit();
  const ScheduleL s = plan_schedule(kit, 0.4);
  const FlexAssembly a = assemble_flex_cocycle(kit, s);
  const int lp = s.l1 + s.l3;
  const double r = std::pow(kit.r(), s.l2 + s.l4);
  const Mat2 want = Mat2::diag(r * std::pow(kit.lambda1(), lp), r * std::pow(kit.lambda2(), lp));
  CHECK(rel_diff(fold(a.cocycle.mats()), want) < 1e-12);
  CHECK(a.product_residual < 1e-12);
  CHECK(s.l1 == s.l3);
  CHECK(s.l2 > s.i1 + s.i2 + s.i3);
  CHECK(s.l4 > s.i1 + s.i2 + s.i3);
  CHECK(s.l2 != s.l4);
}

TEST_CASE("witness path endpoints and budget") {
  const TransitionKit kit = demo_transition_kit();
  const double eps = 0.4;
  const ScheduleL s = plan_schedule(kit, eps);
  const FlexWitness w = build_flex_witness_full(kit, s, eps);
  CHECK(cocycle_distance(w.path.at(0.0), w.assembly.cocycle) == 0.0);

  const ScaledMat2 pm = return_product_scaled(w.path.at(-1.0));
  CHECK(homothety_residual(pm.m) < 1e-9);
  CHECK(trace(pm.m) > 0);

  const Spectrum sp = return_spectrum(w.path.at(1.0));
  CHECK(std::abs(sp.big() - 1.0) < 1e-9);
  CHECK(sp.small() < 1.0);

  CHECK(path_diameter(w.path) < eps);
  CHECK(w.scaling_cost < eps / 2);
  CHECK(w.rotation_cost < eps / 2);
  for (int k = 1; k < 400; ++k) {
    const Spectrum t = return_spectrum(w.path.at(-1.0 + 2.0 * k / 400));
    CHECK(t.kind == EigKind::RealDistinct);
    CHECK(t.sign_big > 0);
    CHECK(t.sign_small > 0);
    CHECK(t.log_big < 0);
  }
}

TEST_CASE("infeasible budgets are reported") {
  const TransitionKit kit = demo_transition_kit();
  CHECK_THROWS_AS(plan_schedule(kit, 1e-4), InvalidArgument);
  TransitionKit stiff;
  stiff.P = Mat2::diag(0.99, 0.3);
  stiff.Q = Mat2::scalar(0.7);
  CHECK_THROWS_WITH_AS(plan_schedule(stiff, 0.4), doctest::Contains("condition"), InvalidArgument);
  TransitionKit bad = kit;
  bad.Q = Mat2::diag(0.9, 0.8);
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
