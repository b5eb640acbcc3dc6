#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "flexlab/factory.hpp"
#include "flexlab/io.hpp"
#include "flexlab/manifold.hpp"
#include "flexlab/realization.hpp"
#include "flexlab/retard.hpp"
#include "flexlab/steering.hpp"

namespace flexlab::cli {

namespace {

namespace fs = std::filesystem;

// Shortest text that reads back to the same double.
std::string shortest(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

struct Config {
  std::string subcommand;
  std::string input;
  std::string targets;
  std::string family;
  std::string out = "flexlab_out";
  double epsilon = 0.4;
  double epsilon0 = -1.0;  // default epsilon / 8
  double epsilon1 = -1.0;  // default epsilon / 4
  double mu = 0.05;
  double tolerance = 1e-3;
  double log_radius = std::nan("");
  int grid_radial = 16;
  int grid_angular = 64;
  int m = 1;
  std::uint64_t seed = 1;

  double eps0() const { return epsilon0 > 0.0 ? epsilon0 : epsilon / 8.0; }
  double eps1() const { return epsilon1 > 0.0 ? epsilon1 : epsilon / 4.0; }

  std::string text() const {
    std::ostringstream o;
    const auto d = [](double x) { return shortest(x); };
    o << "config\n";
    o << "  subcommand " << subcommand << "\n";
    if (!input.empty()) o << "  input " << input << "\n";
    if (!targets.empty()) o << "  targets " << targets << "\n";
    if (!family.empty()) o << "  family " << family << "\n";
    o << "  out " << out << "\n";
    o << "  epsilon " << d(epsilon) << "\n  epsilon0 " << d(eps0()) << "\n  epsilon1 " << d(eps1())
      << "\n";
    o << "  mu " << d(mu) << "\n  tolerance " << d(tolerance) << "\n";
    o << "  grid_radial " << grid_radial << "\n  grid_angular " << grid_angular << "\n";
    o << "  m " << m << "\n  seed " << seed << "\n";
    if (!std::isnan(log_radius)) o << "  log_radius " << d(log_radius) << "\n";
    return o.str();
  }
};

// Failure inside a named pipeline stage.
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what) {}
};

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
}

fs::path out_dir(const Config& c) {
  fs::path d(c.out);
  fs::create_directories(d);
  return d;
}

std::string fmt(double x) {
  std::ostringstream o;
  o << std::setprecision(12) << x;
  return o.str();
}

std::string flex_text(const FlexReport& r) {
  std::ostringstream o;
  o << std::setprecision(12);
  const auto b = [](bool x) { return x ? "pass" : "fail"; };
  o << "flexibility-report\n";
  o << "epsilon " << r.epsilon << "\n";
  o << "diameter " << r.diameter << " " << b(r.diameter_ok) << "\n";
  o << "base " << b(r.base_ok) << "\n";
  o << "homothety_at_minus1 residual " << r.homothety_residual_at_minus1 << " ratio "
    << r.homothety_ratio_at_minus1 << " " << b(r.homothety_ok) << "\n";
  o << "interior_spectrum samples " << r.eig_path.size() << " " << b(r.interior_spectrum_ok);
  if (r.first_bad_t) o << " first_bad_t " << *r.first_bad_t;
  o << "\n";
  o << "lambda_max " << r.lambda_max << " " << b(r.lambda_max_ok) << "\n";
  o << "eigen_one_at_plus1 residual " << r.eigen_one_residual_at_plus1 << " " << b(r.eigen_one_ok)
    << "\n";
  o << "verdict " << b(r.all()) << "\n";
  return o.str();
}

CocyclePath load_path(const std::string& file) {
  Document d = read_document(file);
  if (!d.path) throw ParseError("file has no path block", 0);
  return *d.path;
}

RealizeOptions realize_options(const Config& c) {
  RealizeOptions o;
  o.epsilon1 = c.eps1();
  o.grid.per_decade = c.grid_radial;
  o.grid.angles = c.grid_angular;
  o.grid.seed = c.seed;
  return o;
}

std::string class_text(const TorusCurve& c) {
  return "(" + std::to_string(c.wraps_u) + "," + std::to_string(c.wraps_v) + ")";
}

bool meridian_class(const TorusCurve& c) { return c.wraps_u == 1 && c.wraps_v == 0; }

void write_meridians(const fs::path& csv, const std::array<TorusCurve, 2>& m,
                     const std::string& prefix) {
  std::ofstream f(csv);
  write_curves_csv(f, {{prefix + "0", m[0]}, {prefix + "1", m[1]}});
}

// ---------------------------------------------------------------- commands

int cmd_verify_flex(const Config& c, std::ostream& out) {
  const CocyclePath p = load_path(c.input);
  const FlexReport r = stage("verify", [&] { return verify_flexible(p, c.epsilon); });
  const std::string text = c.text() + flex_text(r);
  write_file(out_dir(c) / "flex_report.txt", text);
  out << text;
  return r.all() ? kPass : kFail;
}

struct Assembled {
  TransitionKit kit;
  ScheduleL schedule;
  FlexWitness witness;
  FlexReport report;
};

Assembled assemble(const Config& c) {
  Document d = read_document(c.input);
  if (!d.kit) throw ParseError("file has no kit block", 0);
  Assembled a;
  a.kit = *d.kit;
  a.schedule = d.schedule ? *d.schedule
                          : stage("schedule", [&] { return plan_schedule(a.kit, c.epsilon); });
  a.witness = stage("factory", [&] { return build_flex_witness_full(a.kit, a.schedule, c.epsilon); });
  a.report = stage("verify", [&] { return verify_flexible(a.witness.path, c.epsilon); });
  return a;
}

std::string schedule_text(const ScheduleL& s, const FlexWitness& w) {
  std::ostringstream o;
  o << "schedule l=" << s.l1 << "," << s.l2 << "," << s.l3 << "," << s.l4 << " i=" << s.i1 << ","
    << s.i2 << "," << s.i3 << "\n";
  o << "period " << w.assembly.cocycle.period() << "\nmu_L " << fmt(w.assembly.mu_L) << "\n";
  o << "product_residual " << fmt(w.assembly.product_residual) << "\n";
  o << "scaling_cost " << fmt(w.scaling_cost) << "\nrotation_cost " << fmt(w.rotation_cost) << "\n";
  return o.str();
}

int cmd_assemble(const Config& c, std::ostream& out) {
  const Assembled a = assemble(c);
  const fs::path dir = out_dir(c);
  write_file(dir / "witness.txt",
             format_document({format_kit(a.kit, &a.schedule), format_path(a.witness.path)}));
  const std::string text = c.text() + schedule_text(a.schedule, a.witness) + flex_text(a.report);
  write_file(dir / "assemble_report.txt", text);
  out << text;
  return a.report.all() ? kPass : kFail;
}

RetardableRealization realize(const Config& c, const CocyclePath& p) {
  return stage("realization", [&] { return realize_flexible(p, realize_options(c)); });
}

int cmd_retard(const Config& c, std::ostream& out) {
  const CocyclePath p = load_path(c.input);
  const RetardableRealization rr = realize(c, p);
  const RetardableVerdict v = stage("retardable", [&] { return check_retardable(*rr.cocycle, rr.spec); });
  const auto ret = stage("retard", [&] { return retard(rr.cocycle, rr.spec, c.m); });
  const RetardBlock block{c.m, rr.spec.lambda, rr.spec.log_R1, rr.spec.log_R2, rr.spec.log_R3};
  const fs::path dir = out_dir(c);
  write_file(dir / "retard.txt",
             format_document({format_path(rr.cocycle->path(), &rr.cocycle->theta()),
                              format_retard(block)}));
  std::ostringstream o;
  o << c.text() << rr.certificate.to_text();
  o << "retardable linear " << v.linear_ok << " confinement " << v.confinement_ok << " covering "
    << v.covering_ok << (v.failed.empty() ? "" : " failed: " + v.failed) << "\n";
  const LogAnnulus h = homothetic_region(*ret);
  o << "homothetic_region log_r=[" << fmt(h.log_inner) << "," << fmt(h.log_outer) << "]\n";
  o << "lambda " << fmt(rr.spec.lambda) << "\n";
  const bool ok = rr.certificate.pass && v.ok();
  o << "verdict " << (ok ? "pass" : "fail") << "\n";
  write_file(dir / "retard_report.txt", o.str());
  out << o.str();
  return ok ? kPass : kFail;
}

int cmd_trace_wss(const Config& c, std::ostream& out) {
  const CocyclePath p = load_path(c.input);
  const RetardableRealization rr = realize(c, p);
  const auto ret = stage("retard", [&] { return retard(rr.cocycle, rr.spec, c.m); });
  const auto mer = stage("trace", [&] { return meridians(*ret); });
  const fs::path dir = out_dir(c);
  write_meridians(dir / "meridians.csv", mer, "meridian");
  {
    std::ofstream f(dir / "meridians.svg");
    write_torus_svg(f, {{"meridian0", mer[0]}, {"meridian1", mer[1]}},
                    {{"#c0392b", 1.5, false}, {"#2471a3", 1.5, false}}, "meridians");
  }
  std::ostringstream o;
  o << c.text();
  for (int b = 0; b < 2; ++b)
    o << "meridian" << b << " points " << mer[b].pts.size() << " class " << class_text(mer[b])
      << "\n";
  o << "separation " << fmt(curve_hausdorff(mer[0], mer[1])) << "\n";
  const bool ok = meridian_class(mer[0]) && meridian_class(mer[1]);
  o << "verdict " << (ok ? "pass" : "fail") << "\n";
  write_file(dir / "trace_report.txt", o.str());
  out << o.str();
  return ok ? kPass : kFail;
}

int cmd_project(const Config& c, std::ostream& out) {
  const CocyclePath p = load_path(c.input);
  const RetardableRealization rr = realize(c, p);
  const auto ret = stage("retard", [&] { return retard(rr.cocycle, rr.spec, c.m); });
  const LogAnnulus h = homothetic_region(*ret);
  const double lr = std::isnan(c.log_radius) ? 0.5 * (h.log_inner + h.log_outer) : c.log_radius;
  // Round circle of log radius lr.
  Polyline circle;
  const int n = 2048;
  for (int k = 0; k < n; ++k)
    circle.push_back(ScaledPoint::polar(lr, 2.0 * std::numbers::pi * k / n));
  const TorusCurve par = stage("project", [&] { return project_curve(*ret, circle, true); });
  const auto mer = stage("trace", [&] { return meridians(*ret); });
  const fs::path dir = out_dir(c);
  {
    std::ofstream f(dir / "parallel.csv");
    write_curves_csv(f, {{"parallel", par}});
  }
  {
    std::ofstream f(dir / "projection.svg");
    write_torus_svg(f, {{"parallel", par}, {"meridian0", mer[0]}, {"meridian1", mer[1]}},
                    {{"#117a65", 1.5, false}, {"#c0392b", 1.0, false}, {"#2471a3", 1.0, false}},
                    "parallel and meridians");
  }
  std::ostringstream o;
  o << c.text() << "log_radius " << fmt(lr) << "\n";
  o << "parallel class " << class_text(par) << "\n";
  int crossings[2];
  for (int b = 0; b < 2; ++b) {
    crossings[b] = parallel_crossings(mer[b], par.pts.front().u);
    o << "meridian" << b << " crossings " << crossings[b] << "\n";
  }
  const bool ok = par.wraps_u == 0 && std::abs(par.wraps_v) == 1 && crossings[0] == 1 &&
                  crossings[1] == 1;
  o << "verdict " << (ok ? "pass" : "fail") << "\n";
  write_file(dir / "project_report.txt", o.str());
  out << o.str();
  return ok ? kPass : kFail;
}

std::shared_ptr<const TorusField> family_field(const std::string& fam) {
  if (fam == "twist") return std::make_shared<VerticalBumpField>(1.0, 0.2, 0.8, 0.0, 0.5);
  if (fam == "shift") return std::make_shared<VerticalProfileField>(std::vector<double>(64, 0.1));
  if (fam == "finger") return std::make_shared<VerticalBumpField>(0.12, 0.35, 0.65, 0.25, 0.2);
  if (fam == "identity") return std::make_shared<VerticalProfileField>(std::vector<double>(64, 0.0));
  throw ParseError("unknown family '" + fam + "'", 0);
}

int cmd_fragment(const Config& c, std::ostream& out) {
  const std::string fam = c.family.empty() ? "twist" : c.family;
  TorusFlow psi;
  psi.stages.push_back(family_field(fam));
  const TorusDiffeoFactorization fac = stage("fragment", [&] { return fragment(psi, c.mu); });
  // Reference meridian v = 1/4 carried by the factors and by the flow itself.
  TorusCurve line;
  for (int k = 0; k < 512; ++k) line.pts.push_back({k / 512.0, 0.25});
  line.wraps_u = 1;
  const TorusCurve moved = fac.transport(line);
  double err = 0.0;
  TorusCurve direct = line;
  for (std::size_t k = 0; k < line.pts.size(); ++k) {
    direct.pts[k] = psi.apply(line.pts[k], 4096);
    err = std::max(err, std::hypot(direct.pts[k].u - moved.pts[k].u, direct.pts[k].v - moved.pts[k].v));
  }
  const fs::path dir = out_dir(c);
  {
    std::ofstream f(dir / "fragment.csv");
    write_curves_csv(f, {{"initial", line}, {"transported", moved}, {"direct", direct}});
  }
  std::ostringstream o;
  o << c.text() << "family " << fam << "\nfactors " << fac.factors.size() << "\n";
  for (std::size_t s = 0; s < fac.steps_per_stage.size(); ++s)
    o << "stage " << s << " steps " << fac.steps_per_stage[s] << " pieces "
      << fac.bands_per_stage[s] << "\n";
  o << "max_factor_distance " << fmt(fac.max_distance) << "\n";
  o << "transport_error " << fmt(err) << "\n";
  const bool ok = fac.max_distance < c.mu && err < 1e-8;
  o << "verdict " << (ok ? "pass" : "fail") << "\n";
  write_file(dir / "fragment_report.txt", o.str());
  out << o.str();
  return ok ? kPass : kFail;
}

int cmd_demo_theorem1(const Config& c, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  if (!c.targets.empty() && !c.family.empty())
    throw ParseError("give either --targets or --family, not both", 0);
  std::vector<NamedCurve> target_file;
  if (!c.targets.empty()) {
    target_file = read_curves_csv(c.targets);
    if (target_file.size() != 2) throw ParseError("target file must hold exactly two curves", 0);
  }
  const Assembled a = assemble(c);
  if (!a.report.all()) throw StageError("verify", "factory witness is not flexible at epsilon");
  const RetardableRealization rr = realize(c, a.witness.path);
  if (!rr.certificate.pass) throw StageError("realization", "certificate failed");
  const auto ret = stage("retard", [&] { return retard(rr.cocycle, rr.spec, c.m); });

  std::array<TorusCurve, 2> targets;
  if (!target_file.empty()) {
    targets = {target_file[0].curve, target_file[1].curve};
  } else {
    const auto before = stage("trace", [&] { return meridians(*ret); });
    targets = family_targets(before, parse_target_family(c.family.empty() ? "identity" : c.family));
  }
  SteerOptions so;
  so.epsilon0 = c.eps0();
  const SteerResult res = stage("steer", [&] { return steer_meridians(ret, targets, so); });
  const SteerReport& r = res.report;

  // Size of g - A: the realized part is sampled on the radial cocycle, the
  // steering part on the lift annuli.
  const LinearCocycle A = a.witness.path.at(0.0);
  const double lo = rr.cocycle->theta().inner_log_radius() - 1.0;
  const double hi = rr.cocycle->theta().outer_log_radius() + 1.0;
  const PerturbationVerdict radial = stage("certificate", [&] {
    return check_retard_perturbation_bound(*rr.cocycle, A, c.epsilon, lo, hi, c.grid_radial,
                                           c.grid_angular);
  });
  const double lifted = sample_lift_deviation(*res.cocycle, A);
  const double total = std::max(radial.max_deviation, lifted);
  const LogAnnulus h = homothetic_region(res.cocycle->base());
  bool contained = true;
  for (const auto& L : res.cocycle->lifts())
    contained = contained && L.log_inner() >= h.log_inner - 1e-9 && L.log_outer() <= h.log_outer;

  const fs::path dir = out_dir(c);
  write_file(dir / "witness.txt",
             format_document({format_kit(a.kit, &a.schedule), format_path(a.witness.path)}));
  write_meridians(dir / "before.csv", r.before, "before");
  write_meridians(dir / "after.csv", r.after, "after");
  write_meridians(dir / "targets.csv", r.targets, "target");
  {
    std::ofstream f(dir / "torus.svg");
    write_torus_svg(f,
                    {{"before0", r.before[0]}, {"before1", r.before[1]}, {"target0", r.targets[0]},
                     {"target1", r.targets[1]}, {"after0", r.after[0]}, {"after1", r.after[1]}},
                    {{"#999999", 1.0, true}, {"#999999", 1.0, true}, {"#2471a3", 3.0, false},
                     {"#2471a3", 3.0, false}, {"#c0392b", 1.2, false}, {"#c0392b", 1.2, false}},
                    "meridians: before (dashed), targets (blue), after (red)");
  }
  const bool ok = r.hausdorff < c.tolerance && total < c.epsilon && contained;
  std::ostringstream o;
  o << std::setprecision(12);
  o << c.text() << schedule_text(a.schedule, a.witness);
  o << "witness_diameter " << a.report.diameter << "\n";
  o << "realization one_step_max " << rr.certificate.one_step_max << " epsilon1 "
    << rr.certificate.epsilon1 << "\n";
  o << "steering C " << r.C << " eta " << r.eta << " mu " << r.mu << " factors " << r.factors
    << " m " << r.m_before << " -> " << r.m_after << "\n";
  o << "steering max_lift_c1 " << r.max_lift_c1 << " bound " << r.perturbation_bound
    << " measured " << r.measured_perturbation << " epsilon0 " << c.eps0() << "\n";
  for (const auto& l : r.log) o << "log " << l << "\n";
  o << "perturbation_certificate radial " << radial.max_deviation << " lifts " << lifted
    << " total " << total << " epsilon " << c.epsilon << " " << (total < c.epsilon ? "pass" : "fail")
    << "\n";
  o << "support_in_homothetic_region " << (contained ? "yes" : "no") << "\n";
  o << "hausdorff_to_targets " << r.hausdorff << " tolerance " << c.tolerance << "\n";
  o << "runtime_s " << std::chrono::duration<double>(clock::now() - t0).count() << "\n";
  o << "verdict " << (ok ? "pass" : "fail") << "\n";
  write_file(dir / "report.txt", o.str());
  out << o.str();
  return ok ? kPass : kFail;
}

void common_options(CLI::App* sub, Config& c) {
  sub->add_option("--epsilon", c.epsilon, "perturbation budget")->check(CLI::PositiveNumber);
  sub->add_option("--epsilon0", c.epsilon0, "steering budget (default epsilon/8)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--epsilon1", c.epsilon1, "realization budget (default epsilon/4)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--grid-radial", c.grid_radial, "radii per decade")->check(CLI::PositiveNumber);
  sub->add_option("--grid-angular", c.grid_angular, "angles per circle")->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "seed for sampled grids");
  sub->add_option("--out", c.out, "output directory");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Config c;
  CLI::App app{"flexlab: contracting cocycle laboratory"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify-flex", "check a cocycle path for flexibility");
  verify->add_option("path", c.input, "path file")->required();
  common_options(verify, c);

  auto* assemble_cmd = app.add_subcommand("assemble", "build a flexibility witness from a kit");
  assemble_cmd->add_option("kit", c.input, "kit file")->required();
  common_options(assemble_cmd, c);

  auto* retard_cmd = app.add_subcommand("retard", "realize a witness and retard it");
  retard_cmd->add_option("path", c.input, "path file")->required();
  retard_cmd->add_option("--m", c.m, "number of inserted fundamental domains")
      ->check(CLI::NonNegativeNumber);
  common_options(retard_cmd, c);

  auto* trace = app.add_subcommand("trace-wss", "trace and project the strong stable manifold");
  trace->add_option("path", c.input, "path file")->required();
  trace->add_option("--m", c.m, "retard depth")->check(CLI::NonNegativeNumber);
  common_options(trace, c);

  auto* project = app.add_subcommand("project", "project a round circle to the orbit torus");
  project->add_option("path", c.input, "path file")->required();
  project->add_option("--m", c.m, "retard depth")->check(CLI::NonNegativeNumber);
  project->add_option("--log-radius", c.log_radius, "log radius of the circle");
  common_options(project, c);

  auto* frag = app.add_subcommand("fragment", "fragment a torus flow into small factors");
  frag->add_option("--family", c.family, "twist, shift, finger or identity");
  frag->add_option("--mu", c.mu, "factor size bound")->check(CLI::PositiveNumber);
  common_options(frag, c);

  auto* demo = app.add_subcommand("demo-theorem1", "steer the meridians of a realized witness");
  demo->add_option("kit", c.input, "kit file")->required();
  demo->add_option("--targets", c.targets, "CSV with two target curves");
  demo->add_option("--family", c.family, "target family: identity, shift, finger, twist");
  demo->add_option("--tolerance", c.tolerance, "Hausdorff tolerance")->check(CLI::PositiveNumber);
  demo->add_option("--m", c.m, "initial retard depth")->check(CLI::NonNegativeNumber);
  common_options(demo, c);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kPass;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kParse;
  }
  for (auto* s : app.get_subcommands()) c.subcommand = s->get_name();

  try {
    if (c.subcommand == "verify-flex") return cmd_verify_flex(c, out);
    if (c.subcommand == "assemble") return cmd_assemble(c, out);
    if (c.subcommand == "retard") return cmd_retard(c, out);
    if (c.subcommand == "trace-wss") return cmd_trace_wss(c, out);
    if (c.subcommand == "project") return cmd_project(c, out);
    if (c.subcommand == "fragment") return cmd_fragment(c, out);
    if (c.subcommand == "demo-theorem1") return cmd_demo_theorem1(c, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kFail;
  }
  return kParse;
}

}  // namespace flexlab::cli
