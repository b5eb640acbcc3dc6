#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "flexlab/cocycle.hpp"
#include "flexlab/factory.hpp"
#include "support.hpp"

using namespace flexlab;
using flexlab::testing::random_invertible;
using flexlab::testing::random_mat;

namespace {

double max_abs_diff(const Mat2& a, const Mat2& b) {
  return std::max({std::abs(a.a11 - b.a11), std::abs(a.a12 - b.a12), std::abs(a.a21 - b.a21),
                   std::abs(a.a22 - b.a22)});
}

// Largest |(a - b) x| over 10^4 unit vectors.
double sampled_norm(const Mat2& m) {
  double best = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double t = 2.0 * M_PI * k / 10000.0;
    best = std::max(best, norm(m * Vec2{std::cos(t), std::sin(t)}));
  }
  return best;
}

CocyclePath constant_path(const Mat2& m) {
  const LinearCocycle c({m});
  return CocyclePath({-1.0, 0.0, 1.0}, {c, c, c});
}

}  // namespace

TEST_CASE("return product of a single factor is that factor") {
  const Mat2 d = Mat2::diag(0.9, 0.4);
  CHECK(return_product(LinearCocycle({d})) == d);
}

TEST_CASE("two quarter rotations compose to minus the identity") {
  const Mat2 r = Mat2::rotation(M_PI / 2);
  const Mat2 p = return_product(LinearCocycle({r, r}));
  CHECK(max_abs_diff(p, Mat2::scalar(-1.0)) < 1e-15);
}

TEST_CASE("return product matches an independent left fold") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Mat2> m{random_invertible(rng), random_invertible(rng), random_invertible(rng)};
    double f[2][2] = {{1, 0}, {0, 1}};
    for (const Mat2& a : m) {
      const double g[2][2] = {{a.a11, a.a12}, {a.a21, a.a22}};
      double h[2][2] = {};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          for (int k = 0; k < 2; ++k) h[r][c] += g[r][k] * f[k][c];
      std::copy(&h[0][0], &h[0][0] + 4, &f[0][0]);
    }
    const Mat2 p = return_product(LinearCocycle(m));
    CHECK(max_abs_diff(p, {f[0][0], f[0][1], f[1][0], f[1][1]}) < 1e-14);
  }
}

TEST_CASE("scaled return product survives long contracting products") {
  const LinearCocycle c(std::vector<Mat2>(2000, Mat2::diag(0.5, 0.25)));
  const Spectrum s = return_spectrum(c);
  CHECK(s.log_big == doctest::Approx(2000 * std::log(0.5)).epsilon(1e-12));
  CHECK(s.log_small == doctest::Approx(2000 * std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("cocycle distance of homotheties") {
  CHECK(cocycle_distance(LinearCocycle({Mat2::identity()}), LinearCocycle({Mat2::scalar(2.0)})) ==
        doctest::Approx(1.0));
  const LinearCocycle a({Mat2::diag(0.3, 0.7), Mat2::rotation(0.2)});
  CHECK(cocycle_distance(a, a) == 0.0);
}

TEST_CASE("cocycle distance is the largest singular value of the difference") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat2 e = 0.01 * random_mat(rng);
    const Mat2 d = Mat2::diag(1.0, 0.5);
    const double dist = cocycle_distance(LinearCocycle({d}), LinearCocycle({d + e}));
    const double sampled = sampled_norm(e);
    CHECK(dist >= sampled - 1e-15);
    CHECK(dist - sampled < 1e-6 * dist);
  }
}

TEST_CASE("cocycle distance rejects period mismatch") {
  CHECK_THROWS_AS(cocycle_distance(LinearCocycle({Mat2::identity()}),
                                   LinearCocycle({Mat2::identity(), Mat2::identity()})),
                  InvalidArgument);
}

TEST_CASE("cocycle distance is a metric on random triples") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Mat2> x, y, z;
    for (int i = 0; i < 4; ++i) {
      x.push_back(random_invertible(rng));
      y.push_back(random_invertible(rng));
      z.push_back(random_invertible(rng));
    }
    const LinearCocycle a(x), b(y), c(z);
    CHECK(cocycle_distance(a, b) == doctest::Approx(cocycle_distance(b, a)).epsilon(1e-15));
    CHECK(cocycle_distance(a, c) <= cocycle_distance(a, b) + cocycle_distance(b, c) + 1e-14);
    CHECK(cocycle_distance(a, b) > 0.0);
  }
}

TEST_CASE("path diameter of constant and two-node paths") {
  CHECK(path_diameter(constant_path(Mat2::diag(0.5, 0.9))) == 0.0);
  const CocyclePath p({0.0, 1.0}, {LinearCocycle({Mat2::identity()}),
                                   LinearCocycle({Mat2::scalar(2.0)})});
  CHECK(path_diameter(p) == doctest::Approx(1.0));
}

TEST_CASE("path diameter agrees with a dense refinement grid") {
  const CocyclePath p({0.0, 0.4, 1.0}, {LinearCocycle({Mat2{1.0, 0.2, 0.0, 0.5}}),
                                        LinearCocycle({Mat2{1.6, -0.3, 0.4, 0.5}}),
                                        LinearCocycle({Mat2{0.8, 0.1, -0.2, 0.9}})});
  std::vector<LinearCocycle> grid;
  for (int k = 0; k <= 1000; ++k) grid.push_back(p.at(k / 1000.0));
  double brute = 0.0;
  for (std::size_t a = 0; a < grid.size(); ++a)
    for (std::size_t b = a + 1; b < grid.size(); ++b)
      brute = std::max(brute, cocycle_distance(grid[a], grid[b]));
  CHECK(std::abs(path_diameter(p) - brute) < 1e-12);
}

TEST_CASE("eig2 classifies the spectrum") {
  const EigPair d = eig2(Mat2::diag(0.9, 0.4));
  CHECK(d.kind == EigKind::RealDistinct);
  CHECK(d.first.real() == doctest::Approx(0.9));
  CHECK(d.second.real() == doctest::Approx(0.4));

  const EigPair h = eig2(Mat2::scalar(0.36));
  CHECK(h.kind == EigKind::RealDouble);
  CHECK(h.first.real() == doctest::Approx(0.36));
  CHECK(h.second.real() == doctest::Approx(0.36));

  const EigPair r = eig2(Mat2::rotation(M_PI / 3));
  CHECK(r.kind == EigKind::Complex);
  CHECK(std::abs(r.first) == doctest::Approx(1.0));
  CHECK(std::abs(r.second) == doctest::Approx(1.0));
}

TEST_CASE("eig2 satisfies the trace and determinant identities") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const Mat2 m = random_mat(rng);
    const EigPair e = eig2(m);
    CHECK(std::abs((e.first + e.second).real() - trace(m)) < 1e-12);
    CHECK(std::abs((e.first * e.second).real() - det(m)) < 1e-12);
  }
}

TEST_CASE("cyclic re-indexing conjugates the return product") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Mat2> m;
    for (int i = 0; i < 5; ++i) m.push_back(random_invertible(rng));
    std::vector<Mat2> shifted(m.begin() + 1, m.end());
    shifted.push_back(m.front());
    const Mat2 p = return_product(LinearCocycle(m));
    const Mat2 q = return_product(LinearCocycle(shifted));
    const Mat2 conj = m.front() * p * inverse(m.front());
    CHECK(max_abs_diff(q, conj) < 1e-12 * std::max(1.0, op_norm(q)));
    CHECK(std::abs(trace(p) - trace(q)) < 1e-12);
    CHECK(std::abs(det(p) - det(q)) < 1e-12);
  }
}

TEST_CASE("constant saddle path fails the endpoint bullets") {
  const FlexReport r = verify_flexible(constant_path(Mat2::diag(0.5, 0.9)), 0.1);
  CHECK(r.diameter_ok);
  CHECK_FALSE(r.homothety_ok);
  CHECK_FALSE(r.eigen_one_ok);
  CHECK_FALSE(r.all());
}

TEST_CASE("exact eigenvalue one at the far endpoint has zero residual") {
  const CocyclePath p({-1.0, 0.0, 1.0}, {LinearCocycle({Mat2::scalar(0.5)}),
                                         LinearCocycle({Mat2::diag(0.75, 0.5)}),
                                         LinearCocycle({Mat2::diag(1.0, 0.5)})});
  const FlexReport r = verify_flexible(p, 1.0);
  CHECK(r.eigen_one_ok);
  CHECK(r.eigen_one_residual_at_plus1 == 0.0);
  CHECK(r.homothety_ok);
  CHECK(r.interior_spectrum_ok);
}

TEST_CASE("verify_flexible rejects a path off [-1,1]") {
  const LinearCocycle c({Mat2::identity()});
  CHECK_THROWS_AS(verify_flexible(CocyclePath({0.0, 1.0}, {c, c}), 0.1), InvalidArgument);
  CHECK_THROWS_AS(verify_flexible(CocyclePath({-1.0, 1.0}, {c, c}), 0.1), InvalidArgument);
}

TEST_CASE("factory witness is flexible and stays so under a rotation conjugacy") {
  const TransitionKit kit = demo_transition_kit();
  const double eps = 0.4;
  const CocyclePath w = build_flex_witness(kit, plan_schedule(kit, eps), eps);
  const FlexReport r = verify_flexible(w, eps);
  CHECK(r.all());

  const Mat2 R = Mat2::rotation(0.7), Ri = Mat2::rotation(-0.7);
  std::vector<LinearCocycle> conj;
  for (const LinearCocycle& c : w.cocycles()) {
    std::vector<Mat2> m;
    for (const Mat2& a : c.mats()) m.push_back(R * a * Ri);
    conj.push_back(LinearCocycle(m));
  }
  const FlexReport s = verify_flexible(CocyclePath(w.nodes(), conj), eps);
  CHECK(s.all());
  CHECK(s.diameter == doctest::Approx(r.diameter).epsilon(1e-12));
  CHECK(s.lambda_max == doctest::Approx(r.lambda_max).epsilon(1e-10));
}
