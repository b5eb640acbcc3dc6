#include "flexlab/dynamics.hpp"

#include <limits>

namespace flexlab {

ScaledPoint CocycleDynamics::return_map(const ScaledPoint& x) const {
  ScaledPoint p = x;
  for (std::size_t i = 0; i < period(); ++i) p = apply(i, p);
  return p;
}

ScaledPoint CocycleDynamics::return_inverse(const ScaledPoint& y) const {
  ScaledPoint p = y;
  for (std::size_t i = period(); i-- > 0;) p = invert(i, p);
  return p;
}

LinearDynamics::LinearDynamics(LinearCocycle c) : c_(std::move(c)) {
  for (const Mat2& a : c_.mats()) inv_.push_back(inverse(a));
}

ScaledPoint LinearDynamics::apply(std::size_t i, const ScaledPoint& x) const {
  return flexlab::apply(c_[i], x);
}

ScaledPoint LinearDynamics::invert(std::size_t i, const ScaledPoint& y) const {
  return flexlab::apply(inv_[i % inv_.size()], y);
}

double LinearDynamics::linear_core_log_radius() const {
  return std::numeric_limits<double>::infinity();
}

std::optional<HomotheticAnnulus> LinearDynamics::homothetic_annulus() const {
  const ScaledMat2 p = return_product_scaled(c_);
  const double c = trace(p.m) / 2.0;
  if (homothety_residual(p.m) > 1e-9 || c <= 0.0) return std::nullopt;
  const double log_lambda = p.log_scale + std::log(c);
  if (log_lambda >= 0.0) return std::nullopt;
  return HomotheticAnnulus{0.0, log_lambda};
}

}  // namespace flexlab
