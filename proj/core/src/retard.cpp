#include "flexlab/retard.hpp"

#include <cmath>

namespace flexlab {

namespace {
constexpr double kLn10 = 2.302585092994046;

std::vector<double> log_grid(double lo, double hi, int per_decade) {
  const int count = std::max(2, static_cast<int>(std::ceil((hi - lo) / kLn10 * per_decade)));
  std::vector<double> g;
  for (int k = 0; k < count; ++k) g.push_back(lo + (hi - lo) * (k + 0.5) / count);
  return g;
}
}  // namespace

RetardableSpec RetardableSpec::from_radii(double R1, double R2, double R3, double lambda,
                                          std::vector<Mat2> factors) {
  if (!(R1 > 0 && R1 < R2 && R2 < R3)) throw InvalidArgument("need 0 < R1 < R2 < R3");
  return {std::log(R1), std::log(R2), std::log(R3), lambda, std::move(factors)};
}

RetardableVerdict check_retardable(const CocycleDynamics& f, const RetardableSpec& spec,
                                   int per_decade, int angles) {
  RetardableVerdict v;
  const std::size_t n = f.period();
  if (!(spec.log_R1 < spec.log_R2 && spec.log_R2 < spec.log_R3)) {
    v.failed = "radii not ordered";
    return v;
  }
  if (!(spec.lambda > 0 && spec.lambda < 1)) {
    v.failed = "lambda outside (0,1)";
    return v;
  }
  if (spec.homothety_factors.size() != n) {
    v.failed = "factor count differs from the period";
    return v;
  }
  const ScaledMat2 sp = scaled_product(spec.homothety_factors);
  const Mat2 lam = Mat2::scalar(spec.lambda);
  v.homothety_residual = op_norm(std::exp(sp.log_scale) * sp.m - lam) / spec.lambda;

  const double ll = spec.log_lambda();
  for (double ls : log_grid(spec.log_R1, spec.log_R3, per_decade)) {
    for (int b = 0; b < angles; ++b) {
      const ScaledPoint x = ScaledPoint::polar(ls, 2.0 * M_PI * (b + 0.5) / angles);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = distance_at_scale(f.apply(i, x), apply(spec.homothety_factors[i], x), ls);
        if (r > v.linear_residual) {
          v.linear_residual = r;
          if (r > 1e-12) v.witness = SampleWitness{i, x, r};
        }
      }
    }
  }
  v.linear_ok = v.linear_residual <= 1e-12 && v.homothety_residual <= 1e-9;
  if (!v.linear_ok) {
    v.failed = v.homothety_residual > 1e-9 ? "band product is not lambda Id"
                                           : "fiber maps differ from the band factors";
  }

  v.confinement_ok = true;
  for (double ls : log_grid(spec.log_R2 + ll, spec.log_R2, per_decade)) {
    for (int b = 0; b < angles && v.confinement_ok; ++b) {
      ScaledPoint x = ScaledPoint::polar(ls, 2.0 * M_PI * (b + 0.5) / angles);
      for (std::size_t j = 0; j < n; ++j) {
        if (!(x.ls > spec.log_R1 && x.ls < spec.log_R3)) {
          v.confinement_ok = false;
          if (v.failed.empty()) {
            v.failed = "partial orbit leaves the band";
            v.witness = SampleWitness{j, x, x.ls};
          }
          break;
        }
        x = f.apply(j, x);
      }
    }
  }
  v.covering_ok = spec.log_R2 + ll > spec.log_R1;
  if (!v.covering_ok && v.failed.empty()) v.failed = "lambda R2 does not exceed R1";
  return v;
}

RetardedCocycle::RetardedCocycle(std::shared_ptr<const CocycleDynamics> base, RetardableSpec spec,
                                 int m)
    : base_(std::move(base)), spec_(std::move(spec)), m_(m) {
  if (m < 0) throw InvalidArgument("retard depth must be non-negative");
  if (!base_) throw InvalidArgument("null base cocycle");
  if (spec_.homothety_factors.size() != base_->period())
    throw InvalidArgument("factor count differs from the period");
  shift_ = m * spec_.log_lambda();
  for (const Mat2& a : spec_.homothety_factors) inv_factors_.push_back(inverse(a));
  band_product_ = Mat2::identity();
  for (const Mat2& a : spec_.homothety_factors) band_product_ = a * band_product_;
  band_product_inv_ = inverse(band_product_);
}

RetardedCocycle::Region RetardedCocycle::region(const ScaledPoint& x) const {
  if (x.ls >= spec_.log_R3) return Region::Outer;
  if (x.ls > spec_.log_R3 + shift_) return Region::Band;
  return Region::Inner;
}

ScaledPoint RetardedCocycle::apply(std::size_t i, const ScaledPoint& x) const {
  if (x.is_origin()) return x;
  switch (region(x)) {
    case Region::Outer:
      return base_->apply(i, x);
    case Region::Band:
      return flexlab::apply(spec_.homothety_factors[i % period()], x);
    case Region::Inner:
      break;
  }
  if (m_ == 0) return base_->apply(i, x);
  return base_->apply(i, x.shifted(-shift_)).shifted(shift_);
}

ScaledPoint RetardedCocycle::invert(std::size_t i, const ScaledPoint& y) const {
  if (y.is_origin()) return y;
  const ScaledPoint xb = flexlab::apply(inv_factors_[i % period()], y);
  if (region(xb) == Region::Band) return xb;
  auto outer = [&] { return base_->invert(i, y); };
  auto inner = [&] {
    return m_ == 0 ? base_->invert(i, y) : base_->invert(i, y.shifted(-shift_)).shifted(shift_);
  };
  // Try the branch on the same side of the band as y first.
  if (y.ls < spec_.log_R3 + shift_) {
    const ScaledPoint xi = inner();
    if (region(xi) == Region::Inner) return xi;
    return outer();
  }
  const ScaledPoint xo = outer();
  if (region(xo) == Region::Outer) return xo;
  return inner();
}

Mat2 RetardedCocycle::jacobian(std::size_t i, const ScaledPoint& x) const {
  if (x.is_origin()) return base_->jacobian(i, x);
  switch (region(x)) {
    case Region::Outer:
      return base_->jacobian(i, x);
    case Region::Band:
      return spec_.homothety_factors[i % period()];
    case Region::Inner:
      break;
  }
  return base_->jacobian(i, x.shifted(-shift_));
}

ScaledPoint RetardedCocycle::return_map(const ScaledPoint& x) const {
  if (!x.is_origin() && x.ls >= homothetic_log_inner() && x.ls <= spec_.log_R2)
    return flexlab::apply(band_product_, x);
  return CocycleDynamics::return_map(x);
}

ScaledPoint RetardedCocycle::return_inverse(const ScaledPoint& y) const {
  const double ll = spec_.log_lambda();
  if (!y.is_origin() && y.ls >= homothetic_log_inner() + ll && y.ls <= spec_.log_R2 + ll)
    return flexlab::apply(band_product_inv_, y);
  return CocycleDynamics::return_inverse(y);
}

double RetardedCocycle::linear_core_log_radius() const {
  return base_->linear_core_log_radius() + shift_;
}

double RetardedCocycle::homothetic_log_inner() const {
  return spec_.log_R2 + (m_ + 1) * spec_.log_lambda();
}

std::optional<HomotheticAnnulus> RetardedCocycle::homothetic_annulus() const {
  return HomotheticAnnulus{spec_.log_R2, spec_.log_lambda()};
}

std::shared_ptr<const RetardedCocycle> retard(std::shared_ptr<const CocycleDynamics> base,
                                              const RetardableSpec& spec, int m) {
  if (m < 0) throw InvalidArgument("retard depth must be non-negative");
  return std::make_shared<const RetardedCocycle>(std::move(base), spec, m);
}

LogAnnulus homothetic_region(const RetardedCocycle& ret) {
  return {ret.homothetic_log_inner(), ret.homothetic_log_outer()};
}

PerturbationVerdict check_retard_perturbation_bound(const CocycleDynamics& ret,
                                                    const LinearCocycle& reference,
                                                    double epsilon, double log_lo, double log_hi,
                                                    int per_decade, int angles) {
  PerturbationVerdict v;
  for (double ls : log_grid(log_lo, log_hi, per_decade)) {
    for (int b = 0; b < angles; ++b) {
      const ScaledPoint x = ScaledPoint::polar(ls, 2.0 * M_PI * (b + 0.5) / angles);
      for (std::size_t i = 0; i < ret.period(); ++i) {
        const double d = op_norm(ret.jacobian(i, x) - reference[i]);
        if (d > v.max_deviation) {
          v.max_deviation = d;
          v.witness = SampleWitness{i, x, d};
        }
      }
    }
  }
  v.ok = v.max_deviation < epsilon;
  return v;
}

}  // namespace flexlab
