#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexlab/factory.hpp"
#include "flexlab/manifold.hpp"
#include "flexlab/realization.hpp"

namespace flexlab {

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line(line) {}
  int line;
};

// Line-oriented text format, header "flexlab 1", '#' comments:
//   cocycle n=<int>          then n lines "a11 a12 a21 a22"
//   path t=<t0>,<t1>,...     then one cocycle block per node
//   theta n=<int>            then n lines "log_r theta"
//   kit                      then lines "P|Q|T1|T2 a11 a12 a21 a22",
//                            optional "schedule l1 l2 l3 l4 i1 i2 i3", then "end"
//   retard m=<int> lambda=<x> log_R1=<x> log_R2=<x> log_R3=<x>
struct RetardBlock {
  int m = 0;
  double lambda = 0.0, log_R1 = 0.0, log_R2 = 0.0, log_R3 = 0.0;
};

struct Document {
  std::optional<LinearCocycle> cocycle;
  std::optional<CocyclePath> path;
  std::optional<Reparam> theta;
  std::optional<TransitionKit> kit;
  std::optional<ScheduleL> schedule;
  std::optional<RetardBlock> retard;
};

Document parse_document(std::istream& in);
Document read_document(const std::string& file);

std::string format_cocycle(const LinearCocycle& c);
std::string format_path(const CocyclePath& p, const Reparam* theta = nullptr);
std::string format_kit(const TransitionKit& kit, const ScheduleL* sched = nullptr);
std::string format_retard(const RetardBlock& r);
// Header line plus the given blocks.
std::string format_document(const std::vector<std::string>& blocks);

// CSV "curve,u,v" with one row per vertex (unwrapped coordinates).
struct NamedCurve {
  std::string name;
  TorusCurve curve;
};
void write_curves_csv(std::ostream& out, const std::vector<NamedCurve>& curves);
// Accepts "curve,u,v" or "u,v" (a single curve named "0"); curves are closed
// and the winding numbers are recovered from the unwrapped coordinates.
std::vector<NamedCurve> read_curves_csv(std::istream& in);
std::vector<NamedCurve> read_curves_csv(const std::string& file);

// Flat torus [0,1]^2 with curves drawn modulo 1.
struct SvgStyle {
  std::string colour = "black";
  double width = 1.5;
  bool dashed = false;
};
void write_torus_svg(std::ostream& out, const std::vector<NamedCurve>& curves,
                     const std::vector<SvgStyle>& styles, const std::string& title, int size = 480);

}  // namespace flexlab
