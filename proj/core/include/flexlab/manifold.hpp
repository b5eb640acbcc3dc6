#pragma once

#include <array>
#include <vector>

#include "flexlab/dynamics.hpp"

namespace flexlab {

struct TorusPoint {
  double u = 0.0;  // log-radius position in the fundamental annulus
  double v = 0.0;  // angle / 2pi
};

// Closed polyline on the flat torus. Points are stored unwrapped, so the
// closing jump pts.back() -> pts.front() equals (-wraps_u, -wraps_v) up to
// the final segment.
struct TorusCurve {
  std::vector<TorusPoint> pts;
  int wraps_u = 0;
  int wraps_v = 0;
};

using Polyline = std::vector<ScaledPoint>;

struct WssTrace {
  // pieces[b][j]: j-th stored fundamental piece of branch b; piece j+1 is the
  // preimage of piece j under the return map.
  std::array<std::vector<Polyline>, 2> pieces;
  std::array<std::size_t, 2> first_index{0, 0};  // index of pieces[b][0] in the full sequence
  double seed_log_radius = 0.0;
  int iterations = 0;
  Vec2 strong_direction;
};

struct TraceOptions {
  double max_spacing = 1e-3;  // relative to the local radius
  int max_pieces = 100000;
  std::size_t max_vertices = 2000000;
};

// Inverse of fiber i; convenience wrapper over CocycleDynamics::invert.
ScaledPoint eval_fiber_inverse(const CocycleDynamics& f, std::size_t i, const ScaledPoint& y);

// Both branches of the strong stable manifold of the origin, from a seed on
// the strong eigenline (log radius seed_log_radius, inside the linear core)
// out to the annulus [log_lo, log_hi]. Only pieces meeting the annulus are kept.
WssTrace trace_wss(const CocycleDynamics& f, double seed_log_radius, double log_lo,
                   double log_hi, const TraceOptions& opt = {});

// The outermost complete piece of a branch whose radius stays below exp(log_r).
const Polyline& meridian_piece(const WssTrace& t, int branch, double log_r);

TorusPoint project_to_torus(const CocycleDynamics& f, const ScaledPoint& p,
                            long max_iterations = 1000000);
TorusPoint project_to_torus(const CocycleDynamics& f, Vec2 p);

// closed: add the closing segment when counting wraps (true for loops in the
// plane); for a fundamental piece of W^ss pass false.
TorusCurve project_curve(const CocycleDynamics& f, const Polyline& c, bool closed);

// Projected meridians, one per branch, in branch order.
std::array<TorusCurve, 2> project_meridians(const CocycleDynamics& f, const WssTrace& t);

// Convenience: trace and project with default seeding below the linear core.
std::array<TorusCurve, 2> meridians(const CocycleDynamics& f, const TraceOptions& opt = {});

// Symmetric Hausdorff distance in the flat torus metric (vertex to segment).
double curve_hausdorff(const TorusCurve& a, const TorusCurve& b);
// One-sided: max over vertices of a of the distance to b.
double curve_deviation(const TorusCurve& a, const TorusCurve& b);

// Number of times the curve crosses the parallel u = u0.
int parallel_crossings(const TorusCurve& c, double u0);

// Resample to points spaced at most h apart (flat metric), keeping vertices.
TorusCurve resample(const TorusCurve& c, double h);

}  // namespace flexlab
