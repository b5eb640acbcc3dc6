#include "flexlab/cocycle.hpp"

#include <algorithm>
#include <cmath>

namespace flexlab {

bool is_invertible(const Mat2& m) {
  const double n = op_norm(m);
  return std::isfinite(n) && std::abs(det(m)) > 1e-12 * n * n;
}

static bool finite(const Mat2& m) {
  return std::isfinite(m.a11) && std::isfinite(m.a12) && std::isfinite(m.a21) &&
         std::isfinite(m.a22);
}

LinearCocycle::LinearCocycle(std::vector<Mat2> mats) : mats_(std::move(mats)) {
  if (mats_.empty()) throw InvalidArgument("cocycle period must be positive");
  for (std::size_t i = 0; i < mats_.size(); ++i) {
    if (!finite(mats_[i])) throw InvalidArgument("non-finite matrix at index " + std::to_string(i));
    if (!is_invertible(mats_[i]))
      throw InvalidArgument("singular matrix at index " + std::to_string(i));
  }
}

Mat2 return_product(const LinearCocycle& c) {
  Mat2 p = Mat2::identity();
  for (const Mat2& a : c.mats()) p = a * p;
  return p;
}

ScaledMat2 scaled_product(const std::vector<Mat2>& mats) {
  ScaledMat2 out{Mat2::identity(), 0.0};
  for (const Mat2& a : mats) {
    out.m = a * out.m;
    const double n = op_norm(out.m);
    out.m = (1.0 / n) * out.m;
    out.log_scale += std::log(n);
  }
  return out;
}

ScaledMat2 return_product_scaled(const LinearCocycle& c) { return scaled_product(c.mats()); }

Spectrum return_spectrum(const LinearCocycle& c) {
  const ScaledMat2 p = return_product_scaled(c);
  double logdet = 0.0;
  int sgn = 1;
  for (const Mat2& a : c.mats()) {
    const double d = det(a);
    logdet += std::log(std::abs(d));
    if (d < 0) sgn = -sgn;
  }
  const double tr = trace(p.m);
  const double dt = sgn * std::exp(logdet - 2.0 * p.log_scale);
  Spectrum s;
  const EigPair e = eig2(tr, dt);
  s.kind = e.kind;
  s.rel_disc = tr != 0.0 ? (tr * tr - 4.0 * dt) / (tr * tr) : -1.0;
  if (e.kind == EigKind::Complex) {
    s.log_big = s.log_small = 0.5 * logdet;
    s.sign_big = s.sign_small = 1;
    return s;
  }
  const double big = e.first.real();
  s.log_big = p.log_scale + std::log(std::abs(big));
  s.sign_big = big >= 0 ? 1 : -1;
  s.log_small = logdet - s.log_big;
  const int sign_small = (big >= 0 ? 1 : -1) * sgn;
  s.sign_small = sign_small;
  return s;
}

double cocycle_distance(const LinearCocycle& a, const LinearCocycle& b) {
  if (a.period() != b.period()) throw InvalidArgument("period mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.period(); ++i) d = std::max(d, op_norm(a[i] - b[i]));
  return d;
}

double homothety_residual(const Mat2& m) {
  const double n = op_norm(m);
  if (n == 0.0) return 0.0;
  const double c = trace(m) / 2.0;
  return op_norm(m - Mat2::scalar(c)) / n;
}

CocyclePath::CocyclePath(std::vector<double> nodes, std::vector<LinearCocycle> cocycles)
    : nodes_(std::move(nodes)), cocycles_(std::move(cocycles)) {
  if (nodes_.empty() || nodes_.size() != cocycles_.size())
    throw InvalidArgument("path needs one cocycle per node");
  for (std::size_t j = 1; j < nodes_.size(); ++j)
    if (!(nodes_[j] > nodes_[j - 1])) throw InvalidArgument("path nodes must increase strictly");
  for (double t : nodes_)
    if (!std::isfinite(t)) throw InvalidArgument("non-finite path node");
  for (const auto& c : cocycles_)
    if (c.period() != cocycles_.front().period()) throw InvalidArgument("period mismatch in path");
  const std::size_t n = period();
  for (std::size_t j = 0; j + 1 < nodes_.size(); ++j) {
    double len = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      len = std::max(len, op_norm(cocycles_[j + 1][i] - cocycles_[j][i]));
    lengths_.push_back(len);
    for (int s = 1; s < 16; ++s) {
      const double w = s / 16.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!is_invertible(lerp(cocycles_[j][i], cocycles_[j + 1][i], w)))
          throw InvalidArgument("interpolated cocycle singular between nodes " +
                                std::to_string(j) + " and " + std::to_string(j + 1));
    }
  }
}

std::size_t CocyclePath::interval(double t, bool from_above) const {
  if (nodes_.size() < 2) return 0;
  if (t <= nodes_.front()) return 0;
  if (t >= nodes_.back()) return nodes_.size() - 2;
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  std::size_t j = static_cast<std::size_t>(it - nodes_.begin()) - 1;
  if (!from_above && t == nodes_[j] && j > 0) --j;
  return j;
}

Mat2 CocyclePath::at(std::size_t i, double t) const {
  if (nodes_.size() == 1) return cocycles_[0][i];
  const std::size_t j = interval(t);
  const double w = std::clamp((t - nodes_[j]) / (nodes_[j + 1] - nodes_[j]), 0.0, 1.0);
  if (w == 0.0) return cocycles_[j][i];
  if (w == 1.0) return cocycles_[j + 1][i];
  return lerp(cocycles_[j][i], cocycles_[j + 1][i], w);
}

LinearCocycle CocyclePath::at(double t) const {
  std::vector<Mat2> m(period());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = at(i, t);
  return LinearCocycle(std::move(m));
}

Mat2 CocyclePath::slope(std::size_t i, double t, bool from_above) const {
  if (nodes_.size() == 1) return Mat2{};
  const std::size_t j = interval(t, from_above);
  return (1.0 / (nodes_[j + 1] - nodes_[j])) * (cocycles_[j + 1][i] - cocycles_[j][i]);
}

void CocyclePath::at_with_slope(std::size_t i, double t, bool from_above, Mat2& value,
                                Mat2& slope) const {
  if (nodes_.size() == 1) {
    value = cocycles_[0][i];
    slope = Mat2{};
    return;
  }
  const std::size_t j = interval(t, from_above);
  const double len = nodes_[j + 1] - nodes_[j];
  const double w = std::clamp((t - nodes_[j]) / len, 0.0, 1.0);
  const Mat2& a = cocycles_[j][i];
  const Mat2& b = cocycles_[j + 1][i];
  value = w == 0.0 ? a : (w == 1.0 ? b : lerp(a, b, w));
  slope = (1.0 / len) * (b - a);
}

double CocyclePath::interval_length(std::size_t j) const {
  return j < lengths_.size() ? lengths_[j] : 0.0;
}

double CocyclePath::arc_length(double ta, double tb) const {
  if (nodes_.size() < 2) return 0.0;
  double a = std::clamp(std::min(ta, tb), t_lo(), t_hi());
  double b = std::clamp(std::max(ta, tb), t_lo(), t_hi());
  double len = 0.0;
  for (std::size_t j = 0; j + 1 < nodes_.size(); ++j) {
    const double lo = std::max(a, nodes_[j]), hi = std::min(b, nodes_[j + 1]);
    if (hi > lo) len += lengths_[j] * (hi - lo) / (nodes_[j + 1] - nodes_[j]);
  }
  return len;
}

double path_diameter(const CocyclePath& p) {
  const auto& cs = p.cocycles();
  double d = 0.0;
  for (std::size_t a = 0; a < cs.size(); ++a)
    for (std::size_t b = a + 1; b < cs.size(); ++b) d = std::max(d, cocycle_distance(cs[a], cs[b]));
  return d;
}

FlexReport verify_flexible(const CocyclePath& p, double epsilon, const LinearCocycle* base) {
  if (p.t_lo() != -1.0 || p.t_hi() != 1.0) throw InvalidArgument("path domain must be [-1,1]");
  const auto& nodes = p.nodes();
  const auto zero = std::find(nodes.begin(), nodes.end(), 0.0);
  if (zero == nodes.end()) throw InvalidArgument("path has no node at t=0");

  FlexReport r;
  r.epsilon = epsilon;
  r.diameter = path_diameter(p);
  r.diameter_ok = r.diameter < epsilon;

  const LinearCocycle& at0 = p.cocycles()[static_cast<std::size_t>(zero - nodes.begin())];
  r.base_ok = base == nullptr || (base->period() == at0.period() && cocycle_distance(*base, at0) == 0.0);

  {
    const ScaledMat2 m = return_product_scaled(p.cocycles().front());
    r.homothety_residual_at_minus1 = homothety_residual(m.m);
    const double c = trace(m.m) / 2.0;
    r.homothety_ratio_at_minus1 = c > 0 ? std::exp(m.log_scale + std::log(c)) : c;
    r.homothety_ok = r.homothety_residual_at_minus1 <= 1e-9 && c > 0 &&
                     m.log_scale + std::log(c) < 0.0;
  }

  std::vector<double> ts;
  for (std::size_t j = 0; j + 1 < nodes.size(); ++j) {
    ts.push_back(nodes[j]);
    for (int s = 1; s <= 16; ++s) ts.push_back(nodes[j] + (nodes[j + 1] - nodes[j]) * s / 17.0);
  }
  ts.push_back(nodes.back());

  r.interior_spectrum_ok = true;
  r.lambda_max = -std::numeric_limits<double>::infinity();
  for (double t : ts) {
    FlexSample s;
    s.t = t;
    s.spec = return_spectrum(p.at(t));
    const Spectrum& sp = s.spec;
    s.distinct_positive_contracting = sp.kind == EigKind::RealDistinct && sp.rel_disc > 1e-12 &&
                                      sp.sign_big > 0 && sp.sign_small > 0 && sp.log_big < 0.0;
    if (t > -1.0 && t < 1.0 && !s.distinct_positive_contracting) {
      if (r.interior_spectrum_ok) r.first_bad_t = t;
      r.interior_spectrum_ok = false;
    }
    const double smaller = std::exp(sp.log_small);
    r.lambda_max = std::max(r.lambda_max, smaller);
    r.eig_path.push_back(s);
  }
  r.lambda_max_ok = r.lambda_max < 1.0;

  {
    const Spectrum sp = r.eig_path.back().spec;
    double res = std::numeric_limits<double>::infinity();
    if (sp.kind != EigKind::Complex) {
      res = std::min(std::abs(sp.big() - 1.0), std::abs(sp.small() - 1.0));
    }
    r.eigen_one_residual_at_plus1 = res;
    r.eigen_one_ok = res <= 1e-8;
  }
  return r;
}

}  // namespace flexlab
