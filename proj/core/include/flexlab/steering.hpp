#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "flexlab/manifold.hpp"
#include "flexlab/retard.hpp"

namespace flexlab {

// Vector field on the flat torus in (u, v) coordinates, both of period 1.
class TorusField {
 public:
  virtual ~TorusField() = default;
  virtual Vec2 value(double u, double v) const = 0;
  // Rows: (W_u, W_v); columns: d/du, d/dv.
  virtual Mat2 jacobian(double u, double v) const = 0;
};

// C-infinity step: 0 for x <= 0, 1 for x >= 1.
double smooth_step(double x);
double smooth_step_slope(double x);
// Bump supported on (lo, hi) with maximum 1 at the midpoint.
double smooth_bump(double x, double lo, double hi);
double smooth_bump_slope(double x, double lo, double hi);

// W = (0, b(u)) with b given by a function and its derivative.
class VerticalProfileField final : public TorusField {
 public:
  VerticalProfileField(std::vector<double> samples);  // uniform periodic samples, linear in between
  Vec2 value(double u, double v) const override;
  Mat2 jacobian(double u, double v) const override;
  double max_abs() const;

 private:
  std::vector<double> s_;
};

// W = (0, amplitude * bump_u(u) * bump_v(v - centre(u))) etc: explicit
// compactly supported vertical fields used for target families and tests.
class VerticalBumpField final : public TorusField {
 public:
  // u-support (u_lo, u_hi) inside (0, 1) unwrapped from u_lo; v-support of
  // half width v_half around v_centre, or the whole circle if v_half >= 0.5.
  VerticalBumpField(double amplitude, double u_lo, double u_hi, double v_centre, double v_half);
  Vec2 value(double u, double v) const override;
  Mat2 jacobian(double u, double v) const override;

 private:
  double amp_, u_lo_, u_hi_, v_c_, v_h_;
};

// Moves two disjoint graphs over u in opposite vertical directions:
// W_v = e(u) (beta(v - m1(u)) - beta(v - m2(u))), beta a plateau bump of
// half width a(u) = sqrt(e^2/4 + delta^2) and ramp width delta.
class PlateauPairField final : public TorusField {
 public:
  PlateauPairField(std::vector<double> e, std::vector<double> m1, std::vector<double> m2,
                   double delta);
  Vec2 value(double u, double v) const override;
  Mat2 jacobian(double u, double v) const override;

 private:
  std::vector<double> e_, m1_, m2_;
  double delta_;
};

// chi(u) * W for a cutoff chi of the partition of unity below.
class BandField final : public TorusField {
 public:
  BandField(std::shared_ptr<const TorusField> base, int band, int bands, double offset);
  Vec2 value(double u, double v) const override;
  Mat2 jacobian(double u, double v) const override;
  double chi(double u) const;
  double chi_slope(double u) const;
  // Centre of the parallel strip outside the support of chi.
  double cut() const;

 private:
  std::shared_ptr<const TorusField> base_;
  int band_, bands_;
  double offset_;
};

// Time-t flow of a torus field by fixed-step RK4 with the variational equation.
struct TorusFlowResult {
  TorusPoint p;
  Mat2 D;
};
TorusFlowResult flow_torus(const TorusField& W, double time, TorusPoint p, int steps = 16);

struct TorusFactor {
  std::shared_ptr<const TorusField> field;
  double time = 0.0;
  double cut = 0.0;       // a round parallel u = cut outside the support
  double distance = 0.0;  // certified torus C1 distance to the identity
  int stage = 0;
  int prototype = 0;      // factors with equal prototype are the same map

  TorusPoint apply(TorusPoint p) const;
  TorusPoint apply_inverse(TorusPoint p) const;
  Mat2 jacobian(TorusPoint p) const;
};

// Torus C1 distance to the identity: max over a grid of the flat displacement
// plus the derivative deviation.
double torus_c1_distance(const TorusFactor& f, int grid = 48);

// Target flow psi: applied stage by stage, each stage the time-1 flow of a field.
struct TorusFlow {
  std::vector<std::shared_ptr<const TorusField>> stages;
  TorusPoint apply(TorusPoint p, int steps = 64) const;
};

struct TorusDiffeoFactorization {
  // Ordered so that psi = phi_k^{-1} o ... o phi_1^{-1}: factors[0] is phi_1.
  std::vector<TorusFactor> factors;
  std::vector<int> steps_per_stage;
  std::vector<int> bands_per_stage;
  double mu = 0.0;
  double max_distance = 0.0;
  // The composition phi_k^{-1} o ... o phi_1^{-1}.
  TorusPoint transport(TorusPoint p) const;
  TorusCurve transport(const TorusCurve& c) const;
};

TorusDiffeoFactorization fragment(const TorusFlow& psi, double mu);

// Compactly supported planar diffeomorphism of the round annulus
// [lambda r0, r0]; the lift of a torus factor with respect to the
// fundamental annulus coordinates of a homothetic region.
class AnnulusDiffeo {
 public:
  AnnulusDiffeo() = default;
  // u-origin log_origin (u = 0 on |x| = exp(log_origin)), period log_lambda < 0.
  // The support is [depth + cut, depth + cut + 1] in unwrapped u.
  // steps <= 0 picks the RK4 step count from the field size.
  AnnulusDiffeo(TorusFactor factor, double log_origin, double log_lambda, int depth,
                int steps = 0);

  double log_outer() const { return log_r0_; }
  double log_inner() const { return log_r0_ + log_lambda_; }
  int depth() const { return depth_; }
  int steps() const { return steps_; }
  bool contains(const ScaledPoint& x) const;

  ScaledPoint apply(const ScaledPoint& x) const;
  ScaledPoint apply_inverse(const ScaledPoint& y) const;
  Mat2 jacobian(const ScaledPoint& x) const;
  // Planar field at x (normalised to the scale of the outer radius).
  Vec2 field(Vec2 p) const;
  Mat2 field_jacobian(Vec2 p) const;

  // Conjugate by the homothety of ratio lambda^k.
  AnnulusDiffeo conjugated(int k) const;

  struct Certificate {
    double c1 = 0.0;         // max ||D phi - I||
    double c0 = 0.0;         // max |phi(x) - x| / |x|
    double min_det = 1.0;
    double round_trip = 0.0; // max |phi^{-1}(phi(x)) - x| / |x|
    bool ok() const { return min_det > 0.0 && round_trip < 1e-10; }
  };
  Certificate certify(int radial = 32, int angular = 96) const;

  const TorusFactor& factor() const { return factor_; }
  double log_origin() const { return log_origin_; }
  double log_lambda() const { return log_lambda_; }

 private:
  TorusPoint torus_of(Vec2 p) const;
  void flow(Vec2& p, Mat2* D, double time) const;

  TorusFactor factor_;
  double log_origin_ = 0.0, log_lambda_ = -1.0, log_r0_ = 0.0;
  int depth_ = 0;
  int steps_ = 16;
};

// Lift into the fundamental annulus at the given depth of ret's homothetic region.
AnnulusDiffeo lift_factor(const TorusFactor& factor, const RetardedCocycle& ret, int depth);

// ret with the last fiber post-composed with the lift supported at the image point.
class PerturbedCocycle final : public CocycleDynamics {
 public:
  PerturbedCocycle(std::shared_ptr<const RetardedCocycle> base, std::vector<AnnulusDiffeo> lifts);

  std::size_t period() const override { return base_->period(); }
  ScaledPoint apply(std::size_t i, const ScaledPoint& x) const override;
  ScaledPoint invert(std::size_t i, const ScaledPoint& y) const override;
  Mat2 jacobian(std::size_t i, const ScaledPoint& x) const override;
  ScaledPoint return_map(const ScaledPoint& x) const override;
  ScaledPoint return_inverse(const ScaledPoint& y) const override;
  LinearCocycle germ_at_origin() const override { return base_->germ_at_origin(); }
  double linear_core_log_radius() const override { return base_->linear_core_log_radius(); }
  std::optional<HomotheticAnnulus> homothetic_annulus() const override;

  const RetardedCocycle& base() const { return *base_; }
  const std::vector<AnnulusDiffeo>& lifts() const { return lifts_; }
  // Lift whose open annulus contains y, or nullptr.
  const AnnulusDiffeo* lift_at(const ScaledPoint& y) const;

 private:
  std::shared_ptr<const RetardedCocycle> base_;
  std::vector<AnnulusDiffeo> lifts_;  // sorted by radius, innermost first
};

struct CompositionCertificate {
  double C = 0.0;        // ||A_{n-1}|| on the band
  double max_eta = 0.0;  // max lift C1 distance
  double bound = 0.0;    // C * max_eta
  double measured = 0.0; // sampled max ||D(Phi o f) - Df||
};

// Checks the separation chain and containment; throws InvalidArgument.
std::shared_ptr<const PerturbedCocycle> compose_perturbation(
    std::shared_ptr<const RetardedCocycle> ret, std::vector<AnnulusDiffeo> lifts,
    CompositionCertificate* cert = nullptr);

// max ||Dg_{n-1}(x) - ref[n-1]|| over points mapped into the lift annuli,
// one lift per prototype. The other fibers equal those of g.base().
double sample_lift_deviation(const PerturbedCocycle& g, const LinearCocycle& ref, int radial = 8,
                             int angular = 32);

enum class TargetFamily { Identity, Shift, Finger, Twist };
TargetFamily parse_target_family(const std::string& name);
const char* to_string(TargetFamily f);
// Targets obtained by deforming the given meridians.
std::array<TorusCurve, 2> family_targets(const std::array<TorusCurve, 2>& current,
                                         TargetFamily family);

// Graph v = g(u) sampled on n uniform nodes; throws if c is not a (1,0) graph over u.
std::vector<double> graph_samples(const TorusCurve& c, int n);

struct SteerOptions {
  double epsilon0 = 0.02;
  double mu_start = 0.2;
  int bisections = 4;
  int samples = 1024;  // u-nodes of the displacement profiles
  TraceOptions trace;
};

struct SteerReport {
  double C = 0.0;
  double eta = 0.0;
  double mu = 0.0;
  int factors = 0;
  int m_before = 0, m_after = 0;
  double max_lift_c1 = 0.0;
  double max_factor_distance = 0.0;
  double perturbation_bound = 0.0;
  double measured_perturbation = 0.0;
  double hausdorff = 0.0;
  std::array<TorusCurve, 2> before, after, targets;
  std::vector<std::string> log;
};

struct SteerResult {
  std::shared_ptr<const PerturbedCocycle> cocycle;
  SteerReport report;
};

// psi carrying the current meridians onto the targets.
TorusFlow steering_flow(const std::array<TorusCurve, 2>& current,
                        const std::array<TorusCurve, 2>& targets, int samples = 1024);

SteerResult steer_meridians(std::shared_ptr<const RetardedCocycle> ret,
                            const std::array<TorusCurve, 2>& targets, const SteerOptions& opt);

}  // namespace flexlab
