#pragma once

#include <cstddef>
#include <optional>

#include "flexlab/cocycle.hpp"

namespace flexlab {

// Round annulus [lambda * r_hat, r_hat] on which the return map is the
// homothety of ratio lambda, stored in log form.
struct HomotheticAnnulus {
  double log_outer = 0.0;
  double log_lambda = 0.0;
  double log_inner() const { return log_outer + log_lambda; }
};

// A diffeomorphism cocycle over Z/nZ acting on the plane, fixing the origin.
class CocycleDynamics {
 public:
  virtual ~CocycleDynamics() = default;

  virtual std::size_t period() const = 0;
  virtual ScaledPoint apply(std::size_t i, const ScaledPoint& x) const = 0;
  virtual ScaledPoint invert(std::size_t i, const ScaledPoint& y) const = 0;
  virtual Mat2 jacobian(std::size_t i, const ScaledPoint& x) const = 0;

  virtual ScaledPoint return_map(const ScaledPoint& x) const;
  virtual ScaledPoint return_inverse(const ScaledPoint& y) const;

  // Linear cocycle that every fiber map equals on B(exp(linear_core_log_radius())).
  virtual LinearCocycle germ_at_origin() const = 0;
  virtual double linear_core_log_radius() const = 0;

  virtual std::optional<HomotheticAnnulus> homothetic_annulus() const { return std::nullopt; }
};

// Globally linear cocycle.
class LinearDynamics final : public CocycleDynamics {
 public:
  explicit LinearDynamics(LinearCocycle c);
  std::size_t period() const override { return c_.period(); }
  ScaledPoint apply(std::size_t i, const ScaledPoint& x) const override;
  ScaledPoint invert(std::size_t i, const ScaledPoint& y) const override;
  Mat2 jacobian(std::size_t i, const ScaledPoint&) const override { return c_[i]; }
  LinearCocycle germ_at_origin() const override { return c_; }
  double linear_core_log_radius() const override;
  // Only offered when the return product is a contracting homothety.
  std::optional<HomotheticAnnulus> homothetic_annulus() const override;

 private:
  LinearCocycle c_;
  std::vector<Mat2> inv_;
};

}  // namespace flexlab
