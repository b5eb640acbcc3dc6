#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexlab/cocycle.hpp"

namespace flexlab {

// P = diag(lambda1, lambda2) with |lambda1| > |lambda2|, Q = r Id, and two
// transition matrices T1 (from the P-point to the Q-point) and T2 (back).
struct TransitionKit {
  Mat2 P = Mat2::diag(0.95, 0.9);
  Mat2 Q = Mat2::scalar(0.9);
  Mat2 T1 = Mat2::identity();
  Mat2 T2 = Mat2::identity();

  double lambda1() const { return P.a11; }
  double lambda2() const { return P.a22; }
  double r() const { return Q.a11; }
  int det_sign_T1() const { return det(T1) > 0 ? 1 : -1; }
  int det_sign_T2() const { return det(T2) > 0 ? 1 : -1; }
  void validate() const;  // throws InvalidArgument
};

struct ScheduleL {
  int l1 = 1, l2 = 1, l3 = 1, l4 = 2;
  int i1 = 0, i2 = 0, i3 = 1;
  double c1 = 1.0, c2 = 1.0;  // homothety ratios r^{i1}, r^{i2}
  double mu_L = 1.0;
  void validate(bool even_l) const;
};

// M(t) = R(-t) diag(l1,l2) R(t) diag(l1,l2).
Mat2 homoper_path(double lambda1, double lambda2, double t);

// Orientation-preserving path from T (s = 0) to Id (s = 1): rotation angle
// linear and symmetric factor log-linear in s.
Mat2 polar_interp(const Mat2& T, double s);

// Right: T is applied first, then the steps; J_{h-1}...J_0 T = Q^h.
// Left: the steps are applied first, then T; T L_{h-1}...L_0 = Q^h.
enum class Side { Left, Right };

struct Annihilation {
  Side side = Side::Right;
  int h = 0;
  std::vector<Mat2> steps;  // application order
  double max_step_deviation = 0.0;    // max ||step - Q||
  double telescoping_residual = 0.0;  // relative ||T-product - Q^h|| / ||Q^h||
};

Annihilation annihilation_steps(const Mat2& T, const Mat2& Q, int h, Side side);
// Smallest h whose steps are all epsilon-close to Q.
Annihilation annihilation_path(const Mat2& T, const Mat2& Q, double epsilon, Side side,
                               int h_max = 200000);

// Transitions with negative determinant, rewritten so annihilation applies.
struct SignedReduction {
  std::vector<Mat2> block1, block2;  // factor sequences replacing T1 and T2
  Mat2 target1, target2;             // matrices handed to annihilation (det > 0)
  bool conjugate_by_flip = false;    // both det < 0: steps conjugated by diag(1,-1)
  bool substitute1 = false, substitute2 = false;
  bool even_l = false;               // P has a negative entry
  bool changed() const { return conjugate_by_flip || substitute1 || substitute2; }
};
SignedReduction signed_reduction(const TransitionKit& kit);

struct HomothetyFromComplex {
  int N = 0;
  double rho = 0.0, alpha = 0.0;
  Mat2 conjugacy;            // B = C (rho R(alpha)) C^{-1}
  std::vector<double> nudges;  // per-step angle changes in normal form
  int h = 0;                 // annihilation blocks for T
  std::vector<Mat2> steps;   // application order: T, then the perturbed B's
  std::vector<Mat2> reference;  // unperturbed counterpart of each step
  double max_step_deviation = 0.0;
  ScaledMat2 product;
  double homothety_residual = 0.0;
};
HomothetyFromComplex homothety_from_complex(const Mat2& B, const Mat2& T, double epsilon,
                                            int n_max = 100000);

struct DiagonalizingIndex {
  std::size_t index = 0;
  Mat2 basis;  // unimodular, columns along the weak and strong eigendirections
  double norm = 0.0;
  std::vector<double> norms;
  bool within_alpha = false;
};
DiagonalizingIndex diagonalizing_index(const LinearCocycle& c, double alpha);

struct DistortionVerdict {
  double worst_ratio = 1.0;
  bool ok = true;
};
DistortionVerdict angle_distortion_check(double C1, double kappa, double tau, int samples,
                                         std::uint64_t seed = 1);

struct FlexAssembly {
  LinearCocycle cocycle;
  SignedReduction reduction;
  std::vector<std::size_t> rot_plus, rot_minus;  // rotation slots of the two Q-blocks
  double product_residual = 0.0;  // relative, against r^{l2+l4} P^{l1+l3}
  double mu_L = 1.0;
};

// Largest (lambda1/lambda2)^l1 for which the t = -1 homothety survives rounding
// of the factors at about 1e-10.
inline constexpr double kMaxEndpointCondition = 1e6;

// Minimal feasible schedule for the witness budget epsilon.
ScheduleL plan_schedule(const TransitionKit& kit, double epsilon, double nu = 0.05,
                        double annihilation_epsilon = -1.0);
FlexAssembly assemble_flex_cocycle(const TransitionKit& kit, const ScheduleL& sched);

struct FlexWitness {
  CocyclePath path;
  FlexAssembly assembly;
  double scaling_cost = 0.0;   // max ||(mu_L^{-1} - 1) A_i||
  double rotation_cost = 0.0;  // max ||(R(pi/2 i3) - Id) Q||
};
FlexWitness build_flex_witness_full(const TransitionKit& kit, const ScheduleL& sched,
                                    double epsilon);
CocyclePath build_flex_witness(const TransitionKit& kit, const ScheduleL& sched, double epsilon);

// Small kit with rotation transitions used by the demo pipeline.
TransitionKit demo_transition_kit();

}  // namespace flexlab
