#include "flexlab/factory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace flexlab {

namespace {

const Mat2 kFlip = Mat2::diag(1.0, -1.0);

bool is_diagonal(const Mat2& m) { return m.a12 == 0.0 && m.a21 == 0.0; }

// Relative distance between exp(a.log_scale) a.m and exp(log_b) b.
double scaled_rel_residual(const ScaledMat2& a, const Mat2& b, double log_b) {
  const Mat2 x = std::exp(a.log_scale - log_b) * a.m;
  return op_norm(x - b) / op_norm(b);
}

}  // namespace

void TransitionKit::validate() const {
  if (!is_diagonal(P)) throw InvalidArgument("P must be diagonal");
  if (!(std::abs(P.a11) < 1.0 && std::abs(P.a11) > std::abs(P.a22) && P.a22 != 0.0))
    throw InvalidArgument("P needs 1 > |lambda1| > |lambda2| > 0");
  if (!(is_diagonal(Q) && Q.a11 == Q.a22 && Q.a11 > 0.0 && Q.a11 < 1.0))
    throw InvalidArgument("Q must be r Id with 0 < r < 1");
  if (!is_invertible(T1) || !is_invertible(T2)) throw InvalidArgument("transitions must be invertible");
}

void ScheduleL::validate(bool even_l) const {
  if (l1 < 1 || l2 < 1 || l3 < 1 || l4 < 1 || i1 < 0 || i2 < 0 || i3 < 1)
    throw InvalidArgument("schedule entries out of range");
  if (l1 != l3) throw InvalidArgument("schedule needs l1 = l3");
  if (l1 == l3 && l2 == l4) throw InvalidArgument("schedule needs (l1,l2) != (l3,l4)");
  if (l2 <= i1 + i2 + i3 || l4 <= i1 + i2 + i3)
    throw InvalidArgument("schedule needs l2, l4 > i1 + i2 + i3");
  if (even_l && (l1 % 2 != 0)) throw InvalidArgument("signed P needs even l1 and l3");
}

Mat2 homoper_path(double lambda1, double lambda2, double t) {
  const Mat2 d = Mat2::diag(lambda1, lambda2);
  return Mat2::rotation(-t) * d * Mat2::rotation(t) * d;
}

Mat2 polar_interp(const Mat2& T, double s) {
  if (!(det(T) > 0)) throw InvalidArgument("polar path needs det > 0");
  const double phi = std::atan2(T.a21 - T.a12, T.a11 + T.a22);
  const Mat2 S = Mat2::rotation(-phi) * T;
  const double a = S.a11, b = 0.5 * (S.a12 + S.a21), c = S.a22;
  const double psi = 0.5 * std::atan2(2.0 * b, a - c);
  const double cs = std::cos(psi), sn = std::sin(psi);
  const double s1 = a * cs * cs + 2.0 * b * sn * cs + c * sn * sn;
  const double s2 = a + c - s1;
  const Mat2 U = Mat2::rotation(psi);
  const double e = 1.0 - s;
  return Mat2::rotation(e * phi) * U * Mat2::diag(std::pow(s1, e), std::pow(s2, e)) * transpose(U);
}

Annihilation annihilation_steps(const Mat2& T, const Mat2& Q, int h, Side side) {
  if (!(det(T) > 0)) throw InvalidArgument("annihilation needs det(T) > 0");
  if (h < 1) throw InvalidArgument("annihilation needs h >= 1");
  Annihilation a;
  a.side = side;
  a.h = h;
  std::vector<Mat2> I(h + 1), Iinv(h + 1);
  for (int k = 0; k <= h; ++k) {
    I[k] = k == h ? Mat2::identity() : polar_interp(T, static_cast<double>(k) / h);
    Iinv[k] = inverse(I[k]);
  }
  // Q is scalar, so both sides need steps multiplying to T^-1 Q^h.
  for (int k = 0; k < h; ++k) {
    const Mat2 s = I[k + 1] * Iinv[k] * Q;
    a.steps.push_back(s);
    a.max_step_deviation = std::max(a.max_step_deviation, op_norm(s - Q));
  }
  std::vector<Mat2> seq;
  if (side == Side::Right) seq.push_back(T);
  seq.insert(seq.end(), a.steps.begin(), a.steps.end());
  if (side == Side::Left) seq.push_back(T);
  a.telescoping_residual =
      scaled_rel_residual(scaled_product(seq), Mat2::identity(), h * std::log(Q.a11));
  return a;
}

Annihilation annihilation_path(const Mat2& T, const Mat2& Q, double epsilon, Side side,
                               int h_max) {
  if (!(epsilon > 0)) throw InvalidArgument("epsilon must be positive");
  if (!(det(T) > 0)) throw InvalidArgument("annihilation needs det(T) > 0");
  const double r = op_norm(Q);
  for (int h = 1; h <= h_max; ++h) {
    // Both sides share the same set of increments, so one scan decides h.
    bool ok = true;
    Mat2 prev = T;
    for (int k = 1; k <= h && ok; ++k) {
      const Mat2 cur = k == h ? Mat2::identity() : polar_interp(T, static_cast<double>(k) / h);
      ok = r * op_norm(cur * inverse(prev) - Mat2::identity()) < epsilon;
      prev = cur;
    }
    if (ok) {
      Annihilation a = annihilation_steps(T, Q, h, side);
      if (a.max_step_deviation < epsilon) return a;
    }
  }
  throw InvalidArgument("annihilation needs more than h_max steps");
}

SignedReduction signed_reduction(const TransitionKit& kit) {
  SignedReduction s;
  s.even_l = kit.P.a11 < 0 || kit.P.a22 < 0;
  const int pi = det(kit.P) < 0 ? 2 : 1;
  const bool n1 = det(kit.T1) < 0, n2 = det(kit.T2) < 0;
  s.block1 = {kit.T1};
  s.block2 = {kit.T2};
  if (n1 && n2) {
    s.conjugate_by_flip = true;
  } else if (n1) {
    s.substitute1 = true;
    s.block1 = {kit.T1, kit.Q, kit.T2};
    for (int k = 0; k < pi; ++k) s.block1.push_back(kit.P);
    s.block1.push_back(kit.T1);
  } else if (n2) {
    s.substitute2 = true;
    s.block2 = {kit.T2};
    for (int k = 0; k < pi; ++k) s.block2.push_back(kit.P);
    s.block2.push_back(kit.T1);
    s.block2.push_back(kit.Q);
    s.block2.push_back(kit.T2);
  }
  auto prod = [](const std::vector<Mat2>& seq) {
    Mat2 p = Mat2::identity();
    for (const Mat2& a : seq) p = a * p;
    return p;
  };
  s.target1 = prod(s.block1);
  s.target2 = prod(s.block2);
  if (s.conjugate_by_flip) {
    s.target1 = kFlip * s.target1;
    s.target2 = s.target2 * kFlip;
  }
  return s;
}

HomothetyFromComplex homothety_from_complex(const Mat2& B, const Mat2& T, double epsilon,
                                            int n_max) {
  const EigPair e = eig2(B);
  if (e.kind != EigKind::Complex) throw InvalidArgument("B must have non-real spectrum");
  HomothetyFromComplex out;
  out.rho = std::abs(e.first);
  if (!(out.rho < 1.0)) throw InvalidArgument("B must be contracting");
  out.alpha = std::abs(std::arg(e.first));
  // Real and imaginary parts of an eigenvector span the normal-form basis.
  const std::complex<double> mu = std::conj(e.first.imag() > 0 ? e.first : e.second);
  std::complex<double> vx, vy;
  if (std::abs(B.a12) >= std::abs(B.a21)) {
    vx = B.a12;
    vy = mu - B.a11;
  } else {
    vx = mu - B.a22;
    vy = B.a21;
  }
  Mat2 C{vx.real(), vx.imag(), vy.real(), vy.imag()};
  if (det(C) < 0) C = C * kFlip;
  C = (1.0 / std::sqrt(std::abs(det(C)))) * C;
  // Fix the rotation sign from the actual normal form.
  const Mat2 nf = inverse(C) * B * C;
  out.alpha = std::atan2(nf.a21, nf.a11);
  out.conjugacy = C;
  const Mat2 Ci = inverse(C);
  const double half = epsilon / 2.0;

  int N = 0;
  double beta = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    const double k = std::round(n * out.alpha / (2.0 * M_PI));
    const double b = (2.0 * M_PI * k - n * out.alpha) / n;
    const Mat2 nudged = C * (out.rho * Mat2::rotation(out.alpha + b)) * Ci;
    if (op_norm(nudged - B) < half) {
      N = n;
      beta = b;
      break;
    }
  }
  if (N == 0) throw InvalidArgument("no power found within n_max");
  out.N = N;
  out.nudges.assign(N, beta);
  const Mat2 Bn = C * (out.rho * Mat2::rotation(out.alpha + beta)) * Ci;
  const double dev_b = op_norm(Bn - B);

  // Annihilate T against the block homothety rho^N, absorbing each increment
  // into the last factor of a block.
  const bool trivial_T = op_norm(T - Mat2::identity()) == 0.0;
  int h = 0;
  std::vector<Mat2> incs;
  if (!trivial_T) {
    if (!(det(T) > 0)) throw InvalidArgument("T must preserve orientation");
    const double budget = (epsilon - dev_b) / op_norm(Bn);
    for (h = 1; h <= n_max; ++h) {
      incs.clear();
      bool ok = true;
      Mat2 prev = T;
      for (int k = 1; k <= h && ok; ++k) {
        const Mat2 cur = k == h ? Mat2::identity() : polar_interp(T, static_cast<double>(k) / h);
        const Mat2 s = cur * inverse(prev);
        ok = op_norm(s - Mat2::identity()) < budget;
        incs.push_back(s);
        prev = cur;
      }
      if (ok) break;
    }
    if (h > n_max) throw InvalidArgument("annihilation of T needs too many blocks");
    out.steps.push_back(T);
    out.reference.push_back(T);
  }
  out.h = trivial_T ? 1 : h;
  for (int blk = 0; blk < out.h; ++blk) {
    for (int j = 0; j < N; ++j) {
      Mat2 s = Bn;
      if (!trivial_T && j == N - 1) s = incs[blk] * Bn;
      out.steps.push_back(s);
      out.reference.push_back(B);
      out.max_step_deviation = std::max(out.max_step_deviation, op_norm(s - B));
    }
  }
  out.product = scaled_product(out.steps);
  out.homothety_residual = homothety_residual(out.product.m);
  return out;
}

DiagonalizingIndex diagonalizing_index(const LinearCocycle& c, double alpha) {
  const std::size_t n = c.period();
  const ScaledMat2 p = return_product_scaled(c);
  const EigPair e = eig2(p.m);
  if (e.kind != EigKind::RealDistinct) throw InvalidArgument("return product not diagonalizable");
  // Weak direction pushed forward, strong direction pulled back from index n.
  std::vector<Vec2> U(n), W(n);
  U[0] = eigenvector(p.m, e.first.real());
  for (std::size_t i = 1; i < n; ++i) {
    const Vec2 v = c[i - 1] * U[i - 1];
    U[i] = (1.0 / norm(v)) * v;
  }
  Vec2 w = eigenvector(p.m, e.second.real());
  for (std::size_t i = n; i-- > 0;) {
    // W at index i is A_i^{-1} applied to W at index i+1 (W_n = W_0).
    const Vec2 v = inverse(c[i]) * w;
    w = (1.0 / norm(v)) * v;
    W[i] = w;
  }
  W[0] = eigenvector(p.m, e.second.real());
  DiagonalizingIndex out;
  out.norm = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    Mat2 b{U[i].x, W[i].x, U[i].y, W[i].y};
    b = (1.0 / std::sqrt(std::abs(det(b)))) * b;
    const double nb = op_norm(b);
    out.norms.push_back(nb);
    if (nb < out.norm) {
      out.norm = nb;
      out.index = i;
      out.basis = b;
    }
  }
  out.within_alpha = out.norm <= alpha;
  return out;
}

DistortionVerdict angle_distortion_check(double C1, double kappa, double tau, int samples,
                                         std::uint64_t seed) {
  if (!(C1 > 1) || !(kappa > 1)) throw InvalidArgument("need C1 > 1 and kappa > 1");
  DistortionVerdict v;
  auto ratio = [](const Mat2& a, double th, double dth) {
    const Vec2 u{std::cos(th), std::sin(th)};
    const Vec2 w{std::cos(th + dth), std::sin(th + dth)};
    const double q = norm(a * u) / norm(a * w);
    return std::max(q, 1.0 / q);
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ua(0.0, 2.0 * M_PI), us(-1.0, 1.0);
  const double lc = std::log(C1);
  for (int k = 0; k < samples; ++k) {
    const Mat2 a = Mat2::rotation(ua(rng)) *
                   Mat2::diag(std::exp(lc * us(rng)), std::exp(lc * us(rng))) *
                   Mat2::rotation(ua(rng));
    v.worst_ratio = std::max(v.worst_ratio, ratio(a, ua(rng), tau * (0.5 * us(rng) + 0.5)));
  }
  // Boundary family: extreme anisotropy, full angle tau.
  const Mat2 d = Mat2::diag(C1, 1.0 / C1);
  for (int k = 0; k < 4096; ++k)
    v.worst_ratio = std::max(v.worst_ratio, ratio(d, 2.0 * M_PI * k / 4096.0, tau));
  v.ok = v.worst_ratio < kappa;
  return v;
}

namespace {

struct Layout {
  std::vector<Mat2> mats;
  std::vector<std::size_t> rot_plus, rot_minus;
};

Layout layout(const TransitionKit& kit, const ScheduleL& s, const SignedReduction& red) {
  const Mat2& Q = kit.Q;
  std::vector<Mat2> J, L;
  if (s.i1 > 0) J = annihilation_steps(red.target1, Q, s.i1, Side::Right).steps;
  if (s.i2 > 0) L = annihilation_steps(red.target2, Q, s.i2, Side::Left).steps;
  if (red.conjugate_by_flip) {
    for (auto& m : J) m = kFlip * m * kFlip;
    for (auto& m : L) m = kFlip * m * kFlip;
  }
  // Without annihilation steps the targets must already be positive homotheties.
  Layout out;
  auto push = [&](const Mat2& m) { out.mats.push_back(m); };
  auto q_block = [&](int len, std::vector<std::size_t>& slots) {
    for (const Mat2& m : red.block1) push(m);
    for (const Mat2& m : J) push(m);
    const int plain = len - s.i1 - s.i2;
    for (int k = 0; k < plain; ++k) {
      if (k < s.i3) slots.push_back(out.mats.size());
      push(Q);
    }
    for (const Mat2& m : L) push(m);
    for (const Mat2& m : red.block2) push(m);
  };
  for (int k = 0; k < s.l1; ++k) push(kit.P);
  q_block(s.l2, out.rot_plus);
  for (int k = 0; k < s.l3; ++k) push(kit.P);
  q_block(s.l4, out.rot_minus);
  return out;
}

double max_norm(const std::vector<Mat2>& v) {
  double m = 0.0;
  for (const Mat2& a : v) m = std::max(m, op_norm(a));
  return m;
}

}  // namespace

FlexAssembly assemble_flex_cocycle(const TransitionKit& kit, const ScheduleL& sched) {
  kit.validate();
  FlexAssembly out;
  out.reduction = signed_reduction(kit);
  sched.validate(out.reduction.even_l);
  Layout lay = layout(kit, sched, out.reduction);
  out.cocycle = LinearCocycle(lay.mats);
  out.rot_plus = std::move(lay.rot_plus);
  out.rot_minus = std::move(lay.rot_minus);

  const double lr = std::log(kit.r());
  const int lp = sched.l1 + sched.l3;
  const double l1 = std::abs(kit.lambda1()), l2 = std::abs(kit.lambda2());
  const double log_b = (sched.l2 + sched.l4) * lr + lp * std::log(l1);
  const Mat2 expected = Mat2::diag(std::pow(kit.lambda1() / l1, lp),
                                   std::pow(kit.lambda2() / l2, lp) * std::pow(l2 / l1, lp));
  out.product_residual = scaled_rel_residual(return_product_scaled(out.cocycle), expected, log_b);
  const Spectrum sp = return_spectrum(out.cocycle);
  out.mu_L = std::exp(sp.log_big / static_cast<double>(out.cocycle.period()));
  return out;
}

ScheduleL plan_schedule(const TransitionKit& kit, double epsilon, double nu,
                        double annihilation_epsilon) {
  kit.validate();
  if (!(epsilon > 0)) throw InvalidArgument("epsilon must be positive");
  const double ae = annihilation_epsilon > 0 ? annihilation_epsilon : epsilon / 2.0;
  const SignedReduction red = signed_reduction(kit);
  ScheduleL s;
  const auto homothety_target = [](const Mat2& t) {
    return homothety_residual(t) <= 1e-12 && trace(t) > 0 &&
           std::abs(trace(t) / 2.0 - 1.0) <= 1e-12;
  };
  s.i1 = homothety_target(red.target1) ? 0 : annihilation_path(red.target1, kit.Q, ae, Side::Right).h;
  s.i2 = homothety_target(red.target2) ? 0 : annihilation_path(red.target2, kit.Q, ae, Side::Left).h;
  s.i3 = 1;
  while (op_norm((Mat2::rotation(M_PI / (2.0 * s.i3)) - Mat2::identity()) * kit.Q) >= epsilon / 2.0)
    ++s.i3;
  s.l2 = s.i1 + s.i2 + s.i3 + 1;
  s.l4 = s.l2 + 1;
  s.c1 = std::pow(kit.r(), s.i1);
  s.c2 = std::pow(kit.r(), s.i2);
  const int step = red.even_l ? 2 : 1;
  double best = std::numeric_limits<double>::infinity(), best_mu = 0.0;
  for (int l = step; l <= 400; l += step) {
    s.l1 = s.l3 = l;
    const FlexAssembly a = assemble_flex_cocycle(kit, s);
    const double cost = (1.0 / a.mu_L - 1.0) * max_norm(a.cocycle.mats());
    best = std::min(best, cost);
    best_mu = std::max(best_mu, a.mu_L);
    if (cost < epsilon / 2.0 && a.mu_L > 1.0 - nu) {
      // Rounding in the factors is amplified by (lambda1/lambda2)^l at t = -1.
      const double log_cond = l * std::log(std::abs(kit.lambda1() / kit.lambda2()));
      if (log_cond > std::log(kMaxEndpointCondition))
        throw InvalidArgument("schedule needs l1 = " + std::to_string(l) +
                              "; endpoint condition number " + std::to_string(std::exp(log_cond)) +
                              " is beyond double precision");
      s.mu_L = a.mu_L;
      return s;
    }
  }
  if (best_mu <= 1.0 - nu)
    throw InvalidArgument("nu budget infeasible; largest mu_L is " + std::to_string(best_mu));
  throw InvalidArgument("epsilon budget infeasible; smallest achievable epsilon is " +
                        std::to_string(2.0 * best));
}

FlexWitness build_flex_witness_full(const TransitionKit& kit, const ScheduleL& sched,
                                    double epsilon) {
  FlexWitness w;
  w.assembly = assemble_flex_cocycle(kit, sched);
  const auto& base = w.assembly.cocycle.mats();
  const double mu = w.assembly.mu_L;
  w.scaling_cost = (1.0 / mu - 1.0) * max_norm(base);
  w.rotation_cost =
      op_norm((Mat2::rotation(M_PI / (2.0 * sched.i3)) - Mat2::identity()) * kit.Q);
  if (!(w.scaling_cost < epsilon / 2.0) || !(w.rotation_cost < epsilon / 2.0))
    throw InvalidArgument("budget infeasible for epsilon; smallest achievable epsilon is " +
                          std::to_string(2.0 * std::max(w.scaling_cost, w.rotation_cost)));

  const bool flip = w.assembly.reduction.conjugate_by_flip;
  std::vector<double> nodes;
  std::vector<LinearCocycle> cocycles;
  constexpr int kNeg = 64, kPos = 32;
  for (int k = 0; k <= kNeg; ++k) {
    const double t = -1.0 + static_cast<double>(k) / kNeg;
    const double a = M_PI * t / (2.0 * sched.i3);
    std::vector<Mat2> m = base;
    for (std::size_t i : w.assembly.rot_plus) m[i] = Mat2::rotation(flip ? -a : a) * kit.Q;
    for (std::size_t i : w.assembly.rot_minus) m[i] = Mat2::rotation(flip ? a : -a) * kit.Q;
    nodes.push_back(t);
    cocycles.emplace_back(std::move(m));
  }
  for (int k = 1; k <= kPos; ++k) {
    const double t = static_cast<double>(k) / kPos;
    const double s = std::pow(mu, -t);
    std::vector<Mat2> m = base;
    for (auto& x : m) x = s * x;
    nodes.push_back(t);
    cocycles.emplace_back(std::move(m));
  }
  w.path = CocyclePath(std::move(nodes), std::move(cocycles));
  return w;
}

CocyclePath build_flex_witness(const TransitionKit& kit, const ScheduleL& sched, double epsilon) {
  return build_flex_witness_full(kit, sched, epsilon).path;
}

TransitionKit demo_transition_kit() {
  TransitionKit k;
  k.P = Mat2::diag(0.97, 0.93);
  k.Q = Mat2::scalar(0.96);
  k.T1 = Mat2::rotation(0.6) * Mat2::diag(1.1, 0.95);
  k.T2 = Mat2::rotation(-0.4) * Mat2::diag(0.9, 1.05);
  return k;
}

}  // namespace flexlab
