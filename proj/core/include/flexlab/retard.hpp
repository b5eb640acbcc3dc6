#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flexlab/dynamics.hpp"

namespace flexlab {

// Radii stored as logarithms so that deep retards stay representable.
struct RetardableSpec {
  double log_R1 = 0.0;
  double log_R2 = 0.0;
  double log_R3 = 0.0;
  double lambda = 0.5;
  std::vector<Mat2> homothety_factors;  // A_i on the band

  double log_lambda() const { return std::log(lambda); }
  static RetardableSpec from_radii(double R1, double R2, double R3, double lambda,
                                   std::vector<Mat2> factors);
};

struct SampleWitness {
  std::size_t fiber = 0;
  ScaledPoint x;
  double value = 0.0;
};

struct RetardableVerdict {
  bool linear_ok = false;       // f_i = A_i on the band and prod A_i = lambda Id
  bool confinement_ok = false;  // partial orbits from the homothetic region stay in the band
  bool covering_ok = false;     // lambda R2 > R1
  double linear_residual = 0.0;
  double homothety_residual = 0.0;
  std::optional<SampleWitness> witness;
  std::string failed;
  bool ok() const { return linear_ok && confinement_ok && covering_ok; }
};

RetardableVerdict check_retardable(const CocycleDynamics& f, const RetardableSpec& spec,
                                   int per_decade = 16, int angles = 64);

class RetardedCocycle final : public CocycleDynamics {
 public:
  RetardedCocycle(std::shared_ptr<const CocycleDynamics> base, RetardableSpec spec, int m);

  std::size_t period() const override { return base_->period(); }
  ScaledPoint apply(std::size_t i, const ScaledPoint& x) const override;
  ScaledPoint invert(std::size_t i, const ScaledPoint& y) const override;
  Mat2 jacobian(std::size_t i, const ScaledPoint& x) const override;
  ScaledPoint return_map(const ScaledPoint& x) const override;
  ScaledPoint return_inverse(const ScaledPoint& y) const override;
  LinearCocycle germ_at_origin() const override { return base_->germ_at_origin(); }
  double linear_core_log_radius() const override;
  std::optional<HomotheticAnnulus> homothetic_annulus() const override;

  int m() const { return m_; }
  const RetardableSpec& spec() const { return spec_; }
  const std::shared_ptr<const CocycleDynamics>& base() const { return base_; }
  const Mat2& band_return_product() const { return band_product_; }
  // Log radii [lambda^{m+1} R2, R2] of the region where the return map is the homothety.
  double homothetic_log_inner() const;
  double homothetic_log_outer() const { return spec_.log_R2; }

  enum class Region { Outer, Band, Inner };
  Region region(const ScaledPoint& x) const;

 private:
  std::shared_ptr<const CocycleDynamics> base_;
  RetardableSpec spec_;
  int m_ = 0;
  double shift_ = 0.0;  // m * log(lambda)
  std::vector<Mat2> inv_factors_;
  Mat2 band_product_;
  Mat2 band_product_inv_;
};

std::shared_ptr<const RetardedCocycle> retard(std::shared_ptr<const CocycleDynamics> base,
                                              const RetardableSpec& spec, int m);

struct LogAnnulus {
  double log_inner = 0.0;
  double log_outer = 0.0;
};

LogAnnulus homothetic_region(const RetardedCocycle& ret);

struct PerturbationVerdict {
  bool ok = false;
  double max_deviation = 0.0;
  std::optional<SampleWitness> witness;
};

// Samples max ||Df_{i,m}(x) - A_i|| over 16 radii per decade x 64 angles x all
// fibers, on the log-radius window [log_lo, log_hi].
PerturbationVerdict check_retard_perturbation_bound(const CocycleDynamics& ret,
                                                    const LinearCocycle& reference,
                                                    double epsilon, double log_lo, double log_hi,
                                                    int per_decade = 16, int angles = 64);

}  // namespace flexlab
