#include "flexlab/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flexlab {

ScaledPoint eval_fiber_inverse(const CocycleDynamics& f, std::size_t i, const ScaledPoint& y) {
  return f.invert(i, y);
}

namespace {

ScaledPoint midpoint(const ScaledPoint& a, const ScaledPoint& b) {
  const double ref = std::max(a.ls, b.ls);
  return ScaledPoint::make(ref, 0.5 * (a.at_scale(ref) + b.at_scale(ref)));
}

// Spacing relative to the smaller of the two radii.
double rel_gap(const ScaledPoint& a, const ScaledPoint& b) {
  return distance_at_scale(a, b, std::min(a.ls, b.ls));
}

struct Refiner {
  const CocycleDynamics& f;
  double h;
  std::size_t budget;
  Polyline out;

  void fill(const ScaledPoint& pa, const ScaledPoint& pb, const ScaledPoint& qa,
            const ScaledPoint& qb, int depth) {
    if (rel_gap(qa, qb) <= h || depth > 40) {
      out.push_back(qb);
      return;
    }
    if (out.size() > budget) throw InvalidArgument("strong stable trace exceeds vertex budget");
    const ScaledPoint pm = midpoint(pa, pb);
    const ScaledPoint qm = f.return_inverse(pm);
    fill(pa, pm, qa, qm, depth + 1);
    fill(pm, pb, qm, qb, depth + 1);
  }
};

Polyline decimate(const Polyline& in, double h) {
  if (in.size() < 3) return in;
  Polyline out{in.front()};
  for (std::size_t k = 1; k + 1 < in.size(); ++k) {
    if (rel_gap(out.back(), in[k + 1]) < 0.5 * h) continue;
    out.push_back(in[k]);
  }
  out.push_back(in.back());
  return out;
}

Polyline next_piece(const CocycleDynamics& f, const Polyline& prev, const TraceOptions& opt) {
  Refiner r{f, opt.max_spacing, opt.max_vertices, {}};
  ScaledPoint qa = f.return_inverse(prev.front());
  r.out.push_back(qa);
  for (std::size_t k = 0; k + 1 < prev.size(); ++k) {
    const ScaledPoint qb = f.return_inverse(prev[k + 1]);
    r.fill(prev[k], prev[k + 1], qa, qb, 0);
    qa = qb;
  }
  return decimate(r.out, opt.max_spacing);
}

double min_ls(const Polyline& p) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& x : p) m = std::min(m, x.ls);
  return m;
}
double max_ls(const Polyline& p) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& x : p) m = std::max(m, x.ls);
  return m;
}

}  // namespace

WssTrace trace_wss(const CocycleDynamics& f, double seed_log_radius, double log_lo,
                   double log_hi, const TraceOptions& opt) {
  const LinearCocycle germ = f.germ_at_origin();
  const Spectrum sp = return_spectrum(germ);
  if (sp.kind != EigKind::RealDistinct)
    throw InvalidArgument("return derivative at the origin has no unique strong direction");
  if (sp.sign_small < 0 || sp.sign_big < 0)
    throw InvalidArgument("negative eigenvalues at the origin are not supported");
  const ScaledMat2 m = return_product_scaled(germ);
  const EigPair e = eig2(m.m);
  const Vec2 w = eigenvector(m.m, e.second.real());
  if (!(seed_log_radius - sp.log_small < f.linear_core_log_radius()))
    throw InvalidArgument("seed piece leaves the linear core");

  WssTrace t;
  t.seed_log_radius = seed_log_radius;
  t.strong_direction = w;
  for (int b = 0; b < 2; ++b) {
    const Vec2 dir = b == 0 ? w : -1.0 * w;
    const ScaledPoint p{seed_log_radius, dir};
    const ScaledPoint q = f.return_inverse(p);
    const double expect = seed_log_radius - sp.log_small;
    if (std::abs(q.ls - expect) > 1e-9 * (1.0 + std::abs(expect)) || norm(q.d - dir) > 1e-9)
      throw InvalidArgument("seed preimage disagrees with the linear germ");
    Polyline piece;
    const int steps =
        std::max(2, static_cast<int>(std::ceil((q.ls - p.ls) / opt.max_spacing)));
    for (int k = 0; k <= steps; ++k) piece.push_back({p.ls + (q.ls - p.ls) * k / steps, dir});
    piece.back() = q;
    std::size_t idx = 0;
    bool started = false;
    for (int j = 0; j < opt.max_pieces; ++j) {
      const double lo = min_ls(piece), hi = max_ls(piece);
      if (lo > log_hi) break;
      if (hi >= log_lo) {
        if (!started) t.first_index[b] = idx;
        started = true;
        t.pieces[b].push_back(piece);
      }
      piece = next_piece(f, piece, opt);
      ++idx;
      t.iterations = std::max(t.iterations, static_cast<int>(idx));
    }
  }
  return t;
}

const Polyline& meridian_piece(const WssTrace& t, int branch, double log_r) {
  const auto& ps = t.pieces[branch];
  for (std::size_t j = ps.size(); j-- > 0;)
    if (max_ls(ps[j]) < log_r) return ps[j];
  throw InvalidArgument("no traced piece below the requested radius");
}

TorusPoint project_to_torus(const CocycleDynamics& f, const ScaledPoint& p, long max_iterations) {
  const auto ha = f.homothetic_annulus();
  if (!ha) throw InvalidArgument("cocycle has no certified homothetic annulus");
  if (p.is_origin()) throw InvalidArgument("cannot project the origin");
  const double lo = ha->log_inner(), hi = ha->log_outer;
  ScaledPoint x = p;
  long count = 0;
  while (x.ls >= hi || x.ls < lo) {
    x = x.ls >= hi ? f.return_map(x) : f.return_inverse(x);
    if (++count > max_iterations) throw InvalidArgument("orbit does not reach the fundamental annulus");
  }
  TorusPoint tp;
  tp.u = (hi - x.ls) / (-ha->log_lambda);
  if (tp.u >= 1.0) tp.u -= 1.0;
  if (tp.u < 0.0) tp.u += 1.0;
  tp.v = std::atan2(x.d.y, x.d.x) / (2.0 * M_PI);
  if (tp.v < 0.0) tp.v += 1.0;
  if (tp.v >= 1.0) tp.v -= 1.0;
  return tp;
}

TorusPoint project_to_torus(const CocycleDynamics& f, Vec2 p) {
  return project_to_torus(f, ScaledPoint::from(p));
}

namespace {

double wrap_half(double d) { return d - std::round(d); }

}  // namespace

TorusCurve project_curve(const CocycleDynamics& f, const Polyline& c, bool closed) {
  if (c.size() < 2) throw InvalidArgument("curve needs at least two vertices");
  TorusCurve out;
  TorusPoint prev = project_to_torus(f, c.front());
  out.pts.push_back(prev);
  for (std::size_t k = 1; k < c.size(); ++k) {
    const TorusPoint raw = project_to_torus(f, c[k]);
    const TorusPoint& last = out.pts.back();
    out.pts.push_back({last.u + wrap_half(raw.u - last.u), last.v + wrap_half(raw.v - last.v)});
  }
  TorusPoint end = out.pts.back();
  if (closed) {
    const TorusPoint& first = out.pts.front();
    end = {end.u + wrap_half(first.u - end.u), end.v + wrap_half(first.v - end.v)};
  } else {
    const TorusPoint& first = out.pts.front();
    const double du = wrap_half(end.u - first.u), dv = wrap_half(end.v - first.v);
    if (std::hypot(du, dv) < 1e-7) out.pts.pop_back();
  }
  out.wraps_u = static_cast<int>(std::lround(end.u - out.pts.front().u));
  out.wraps_v = static_cast<int>(std::lround(end.v - out.pts.front().v));
  if (out.wraps_u < 0 || (out.wraps_u == 0 && out.wraps_v < 0)) {
    std::reverse(out.pts.begin(), out.pts.end());
    out.wraps_u = -out.wraps_u;
    out.wraps_v = -out.wraps_v;
  }
  return out;
}

std::array<TorusCurve, 2> project_meridians(const CocycleDynamics& f, const WssTrace& t) {
  const auto ha = f.homothetic_annulus();
  if (!ha) throw InvalidArgument("cocycle has no certified homothetic annulus");
  return {project_curve(f, meridian_piece(t, 0, ha->log_outer), false),
          project_curve(f, meridian_piece(t, 1, ha->log_outer), false)};
}

std::array<TorusCurve, 2> meridians(const CocycleDynamics& f, const TraceOptions& opt) {
  const auto ha = f.homothetic_annulus();
  if (!ha) throw InvalidArgument("cocycle has no certified homothetic annulus");
  const Spectrum sp = return_spectrum(f.germ_at_origin());
  const double core = std::min(f.linear_core_log_radius(), ha->log_inner());
  const double seed = core + sp.log_small - 1.0;
  const WssTrace t =
      trace_wss(f, seed, ha->log_outer + 3.0 * ha->log_lambda, ha->log_outer, opt);
  return project_meridians(f, t);
}

namespace {

struct Seg {
  TorusPoint a, b;  // a reduced to [0,1)^2, b = a + (b - a)
};

double point_seg(double qx, double qy, const Seg& s) {
  // Nearest translate of q relative to the segment start.
  double best = std::numeric_limits<double>::infinity();
  const double bx = qx - s.a.u, by = qy - s.a.v;
  const double rx = bx - std::round(bx), ry = by - std::round(by);
  const double dx = s.b.u - s.a.u, dy = s.b.v - s.a.v;
  const double len2 = dx * dx + dy * dy;
  const bool long_seg = len2 > 0.0625;
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      if (!long_seg && (i != 0 || j != 0)) continue;
      const double px = rx + i, py = ry + j;
      double w = len2 > 0 ? (px * dx + py * dy) / len2 : 0.0;
      w = std::clamp(w, 0.0, 1.0);
      best = std::min(best, std::hypot(px - w * dx, py - w * dy));
    }
  }
  return best;
}

class SegmentGrid {
 public:
  explicit SegmentGrid(const TorusCurve& c) {
    const std::size_t n = c.pts.size();
    for (std::size_t k = 0; k < n; ++k) {
      TorusPoint a = c.pts[k];
      TorusPoint b = k + 1 < n ? c.pts[k + 1]
                               : TorusPoint{c.pts.front().u + c.wraps_u, c.pts.front().v + c.wraps_v};
      const double fu = std::floor(a.u), fv = std::floor(a.v);
      a.u -= fu, a.v -= fv, b.u -= fu, b.v -= fv;
      segs_.push_back({a, b});
    }
    g_ = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(segs_.size()))), 1, 256);
    cells_.assign(static_cast<std::size_t>(g_) * g_, {});
    for (std::size_t k = 0; k < segs_.size(); ++k) {
      const Seg& s = segs_[k];
      const int u0 = cell(std::min(s.a.u, s.b.u)), u1 = cell(std::max(s.a.u, s.b.u));
      const int v0 = cell(std::min(s.a.v, s.b.v)), v1 = cell(std::max(s.a.v, s.b.v));
      for (int i = u0; i <= std::min(u1, u0 + g_ - 1); ++i)
        for (int j = v0; j <= std::min(v1, v0 + g_ - 1); ++j) at(i, j).push_back(k);
    }
    stamp_.assign(segs_.size(), 0);
  }

  double distance(TorusPoint q) {
    const double qu = q.u - std::floor(q.u), qv = q.v - std::floor(q.v);
    const int ci = cell(qu), cj = cell(qv);
    ++tick_;
    double best = std::numeric_limits<double>::infinity();
    const double h = 1.0 / g_;
    for (int k = 0; k <= g_ / 2 + 1; ++k) {
      for (int i = -k; i <= k; ++i) {
        for (int j = -k; j <= k; ++j) {
          if (std::max(std::abs(i), std::abs(j)) != k) continue;
          for (std::size_t s : at(ci + i, cj + j)) {
            if (stamp_[s] == tick_) continue;
            stamp_[s] = tick_;
            best = std::min(best, point_seg(qu, qv, segs_[s]));
          }
        }
      }
      if (best <= k * h) break;
    }
    return best;
  }

 private:
  int cell(double x) const { return static_cast<int>(std::floor(x * g_)); }
  std::vector<std::size_t>& at(int i, int j) {
    i = ((i % g_) + g_) % g_;
    j = ((j % g_) + g_) % g_;
    return cells_[static_cast<std::size_t>(i) * g_ + j];
  }
  std::vector<Seg> segs_;
  int g_ = 1;
  std::vector<std::vector<std::size_t>> cells_;
  std::vector<unsigned> stamp_;
  unsigned tick_ = 0;
};

}  // namespace

double curve_deviation(const TorusCurve& a, const TorusCurve& b) {
  if (a.pts.empty() || b.pts.empty()) throw InvalidArgument("empty curve");
  SegmentGrid g(b);
  double d = 0.0;
  for (const TorusPoint& p : a.pts) d = std::max(d, g.distance(p));
  return d;
}

double curve_hausdorff(const TorusCurve& a, const TorusCurve& b) {
  return std::max(curve_deviation(a, b), curve_deviation(b, a));
}

int parallel_crossings(const TorusCurve& c, double u0) {
  int count = 0;
  const std::size_t n = c.pts.size();
  for (std::size_t k = 0; k < n; ++k) {
    const TorusPoint& a = c.pts[k];
    const TorusPoint b = k + 1 < n ? c.pts[k + 1]
                                   : TorusPoint{c.pts.front().u + c.wraps_u, c.pts.front().v + c.wraps_v};
    count += static_cast<int>(std::abs(std::floor(b.u - u0) - std::floor(a.u - u0)));
  }
  return count;
}

TorusCurve resample(const TorusCurve& c, double h) {
  TorusCurve out;
  out.wraps_u = c.wraps_u;
  out.wraps_v = c.wraps_v;
  const std::size_t n = c.pts.size();
  for (std::size_t k = 0; k < n; ++k) {
    const TorusPoint& a = c.pts[k];
    const TorusPoint b = k + 1 < n ? c.pts[k + 1]
                                   : TorusPoint{c.pts.front().u + c.wraps_u, c.pts.front().v + c.wraps_v};
    const int q = std::max(1, static_cast<int>(std::ceil(std::hypot(b.u - a.u, b.v - a.v) / h)));
    for (int s = 0; s < q; ++s)
      out.pts.push_back({a.u + (b.u - a.u) * s / q, a.v + (b.v - a.v) * s / q});
  }
  return out;
}

}  // namespace flexlab
