#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexlab/cocycle.hpp"
#include "flexlab/dynamics.hpp"
#include "flexlab/retard.hpp"

namespace flexlab {

// Piecewise-linear map log r -> path parameter, constant outside the table.
class Reparam {
 public:
  Reparam() = default;
  Reparam(std::vector<double> log_r, std::vector<double> theta);

  double operator()(double log_r) const;
  // d theta / d log r; at a breakpoint the segment below is used.
  double slope(double log_r) const;
  // Direction of the parameter change just below log_r (+1, -1 or 0).
  int direction_below(double log_r) const;
  // theta and its slope from one table lookup.
  void value_slope(double log_r, double& theta, double& slope) const;

  double inner_log_radius() const { return log_r_.front(); }
  double outer_log_radius() const { return log_r_.back(); }
  double theta_inner() const { return theta_.front(); }
  double theta_outer() const { return theta_.back(); }
  double theta_min() const;
  double theta_max() const;
  const std::vector<double>& log_r() const { return log_r_; }
  const std::vector<double>& values() const { return theta_; }

 private:
  std::size_t segment(double log_r) const;
  std::vector<double> log_r_;
  std::vector<double> theta_;
};

struct ReparamBuild {
  Reparam theta;
  double log_inner = 0.0;  // chosen inner radius (log)
  double log_outer = 0.0;
  double length = 0.0;     // arc length L
  double speed = 0.0;      // V = L / ln(outer/inner)
  bool inner_shrunk = false;
};

// Single traversal: theta = t_lo below inner_radius, t_hi above outer_radius,
// constant arc-length speed in log r between.
ReparamBuild build_reparam(const CocyclePath& path, double delta, double inner_radius,
                           double outer_radius);
ReparamBuild build_reparam_log(const CocyclePath& path, double delta, double log_inner,
                               double log_outer);

// Pieces of a composite reparametrisation, listed from the outer plateau inward.
struct ReparamSegment {
  enum class Kind { Hold, Traverse } kind = Kind::Hold;
  double t_from = 0.0;
  double t_to = 0.0;
  double log_width = 0.0;  // Hold only
  static ReparamSegment hold(double t, double w) { return {Kind::Hold, t, t, w}; }
  static ReparamSegment traverse(double a, double b) { return {Kind::Traverse, a, b, 0.0}; }
};

Reparam compose_reparam(const CocyclePath& path, double log_outer,
                        const std::vector<ReparamSegment>& segments, double speed,
                        int min_breakpoints = 256);

class RadialCocycle final : public CocycleDynamics {
 public:
  RadialCocycle(CocyclePath path, Reparam theta, double epsilon1);

  std::size_t period() const override { return path_.period(); }
  ScaledPoint apply(std::size_t i, const ScaledPoint& x) const override;
  ScaledPoint invert(std::size_t i, const ScaledPoint& y) const override;
  Mat2 jacobian(std::size_t i, const ScaledPoint& x) const override;
  LinearCocycle germ_at_origin() const override;
  double linear_core_log_radius() const override { return theta_.inner_log_radius(); }

  Mat2 matrix_at(std::size_t i, double log_r) const;
  // d(A_i o theta)/d log r, one-sided from below at breakpoints.
  Mat2 dmatrix(std::size_t i, double log_r) const;
  // Both of the above with shared lookups.
  void local(std::size_t i, double log_r, Mat2& a, Mat2& da) const;

  const CocyclePath& path() const { return path_; }
  const Reparam& theta() const { return theta_; }
  double epsilon1() const { return epsilon1_; }
  int k_contract() const { return k_; }
  double K_bound() const { return K_; }

 private:
  CocyclePath path_;
  Reparam theta_;
  double epsilon1_;
  int k_ = 0;
  double K_ = 1.0;
};

Vec2 eval_fiber_map(const RadialCocycle& rc, std::size_t i, Vec2 x);
Mat2 eval_fiber_derivative(const RadialCocycle& rc, std::size_t i, Vec2 x);

struct GridSpec {
  int decades = 12;
  int per_decade = 16;
  int angles = 64;
  int jstep_angles = 32;
  int orbits = 1000;
  std::uint64_t seed = 1;
};

struct RealizationCertificate {
  GridSpec grid;
  double log_lo = 0.0, log_hi = 0.0;  // sampled log-radius window
  double one_step_max = 0.0;
  double jstep_max = 0.0;
  double contraction_max = 0.0;  // max ||DF^k|| along sampled orbits
  int k = 0;
  double epsilon1 = 0.0;
  double seconds = 0.0;  // wall time of the evaluation
  SampleWitness one_step_witness, jstep_witness, contraction_witness;
  bool pass = false;
  std::string to_text() const;
};

RealizationCertificate certify_realization(const RadialCocycle& rc, const GridSpec& grid = {});

struct FiniteDifferenceReport {
  double max_rel_error = 0.0;
  std::size_t samples = 0;
  SampleWitness worst;
};
FiniteDifferenceReport finite_difference_check(const RadialCocycle& rc, std::size_t samples,
                                               std::uint64_t seed, double step = 1e-6);

struct RealizeOptions {
  double epsilon1 = 0.05;
  double eta = 0.5;          // inner plateau at t = 1 - eta
  double band_margin = 0.5;  // log margin around the confinement window
  double log_outer = 0.0;
  GridSpec grid;
};

struct RetardableRealization {
  std::shared_ptr<const RadialCocycle> cocycle;
  RetardableSpec spec;
  RealizationCertificate certificate;
  double speed = 0.0;
  double path_length = 0.0;
};

// Radial realisation of a flexibility witness on [-1, 1]: theta = 0 outside
// the unit circle, a plateau at t = -1 forming the homothetic band, and an
// inner plateau at t = 1 - eta.
RetardableRealization realize_flexible(const CocyclePath& witness, const RealizeOptions& opt);

}  // namespace flexlab
