#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexlab/linalg.hpp"

namespace flexlab {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// |det| > 1e-12 * ||M||^2.
bool is_invertible(const Mat2& m);

class LinearCocycle {
 public:
  LinearCocycle() = default;
  explicit LinearCocycle(std::vector<Mat2> mats);

  std::size_t period() const { return mats_.size(); }
  const Mat2& operator[](std::size_t i) const { return mats_[i % mats_.size()]; }
  const std::vector<Mat2>& mats() const { return mats_; }

 private:
  std::vector<Mat2> mats_;
};

Mat2 return_product(const LinearCocycle& c);

// exp(log_scale) * m, with ||m|| = 1; avoids underflow on long products.
struct ScaledMat2 {
  Mat2 m;
  double log_scale = 0.0;
};
ScaledMat2 scaled_product(const std::vector<Mat2>& mats_in_application_order);
ScaledMat2 return_product_scaled(const LinearCocycle& c);

// Spectrum of the return product computed in log space: trace from the
// normalised product, determinant from the sum of log|det A_i|.
struct Spectrum {
  EigKind kind = EigKind::RealDistinct;
  double log_big = 0.0;    // log modulus of the larger eigenvalue
  double log_small = 0.0;  // log modulus of the smaller eigenvalue
  int sign_big = 1;
  int sign_small = 1;
  double rel_disc = 0.0;   // (tr^2 - 4 det) / tr^2
  double big() const { return sign_big * std::exp(log_big); }
  double small() const { return sign_small * std::exp(log_small); }
};
Spectrum return_spectrum(const LinearCocycle& c);

double cocycle_distance(const LinearCocycle& a, const LinearCocycle& b);

// Relative homothety residual ||M - (tr/2) Id|| / ||M||.
double homothety_residual(const Mat2& m);

class CocyclePath {
 public:
  CocyclePath() = default;
  CocyclePath(std::vector<double> nodes, std::vector<LinearCocycle> cocycles);

  double t_lo() const { return nodes_.front(); }
  double t_hi() const { return nodes_.back(); }
  std::size_t period() const { return cocycles_.front().period(); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<LinearCocycle>& cocycles() const { return cocycles_; }

  // Index j of the node interval [nodes[j], nodes[j+1]] containing t. With
  // from_above the interval whose interior lies above t is preferred.
  std::size_t interval(double t, bool from_above = true) const;
  Mat2 at(std::size_t i, double t) const;
  LinearCocycle at(double t) const;
  // Entrywise derivative dA_i/dt on the interval selected as in interval().
  Mat2 slope(std::size_t i, double t, bool from_above = true) const;
  // Value and slope from a single interval lookup.
  void at_with_slope(std::size_t i, double t, bool from_above, Mat2& value, Mat2& slope) const;
  // Arc length of one node interval: max_i ||A_i(t_{j+1}) - A_i(t_j)||.
  double interval_length(std::size_t j) const;
  // Arc length between two parameters (order irrelevant).
  double arc_length(double ta, double tb) const;

 private:
  std::vector<double> nodes_;
  std::vector<LinearCocycle> cocycles_;
  std::vector<double> lengths_;
};

double path_diameter(const CocyclePath& p);

struct FlexSample {
  double t = 0.0;
  Spectrum spec;
  bool distinct_positive_contracting = false;
};

struct FlexReport {
  double epsilon = 0.0;
  double diameter = 0.0;
  std::vector<FlexSample> eig_path;
  double lambda_max = 0.0;
  double homothety_residual_at_minus1 = 0.0;
  double homothety_ratio_at_minus1 = 0.0;
  double eigen_one_residual_at_plus1 = 0.0;
  bool diameter_ok = false;        // bullet (i)
  bool base_ok = false;            // bullet (ii)
  bool homothety_ok = false;       // bullet (iii)
  bool interior_spectrum_ok = false;  // bullet (iv)
  bool lambda_max_ok = false;      // bullet (v)
  bool eigen_one_ok = false;       // bullet (vi)
  std::optional<double> first_bad_t;  // first failing sample of bullet (iv)
  bool all() const {
    return diameter_ok && base_ok && homothety_ok && interior_spectrum_ok && lambda_max_ok &&
           eigen_one_ok;
  }
};

FlexReport verify_flexible(const CocyclePath& p, double epsilon,
                           const LinearCocycle* base = nullptr);

}  // namespace flexlab
