#include "flexlab/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace flexlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

double to_double(const std::string& s, int line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e || !std::isfinite(v))
    throw ParseError("expected a real number, got '" + s + "'", line);
  return v;
}

int to_int(const std::string& s, int line) {
  int v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw ParseError("expected an integer, got '" + s + "'", line);
  return v;
}

// key=value fields after the block keyword.
std::map<std::string, std::string> fields(const std::vector<std::string>& w, int line) {
  std::map<std::string, std::string> f;
  for (std::size_t k = 1; k < w.size(); ++k) {
    const auto eq = w[k].find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + w[k] + "'", line);
    f[w[k].substr(0, eq)] = w[k].substr(eq + 1);
  }
  return f;
}

const std::string& need(const std::map<std::string, std::string>& f, const std::string& key,
                        int line) {
  auto it = f.find(key);
  if (it == f.end()) throw ParseError("missing field " + key, line);
  return it->second;
}

class Lines {
 public:
  explicit Lines(std::istream& in) : in_(in) {}
  // Next non-blank, non-comment line; false at end of input.
  bool next(std::string& out) {
    std::string s;
    while (std::getline(in_, s)) {
      ++line_;
      const auto h = s.find('#');
      if (h != std::string::npos) s = s.substr(0, h);
      s = trim(s);
      if (!s.empty()) {
        out = s;
        return true;
      }
    }
    return false;
  }
  int line() const { return line_; }

 private:
  std::istream& in_;
  int line_ = 0;
};

Mat2 parse_mat(const std::vector<std::string>& w, std::size_t from, int line) {
  if (w.size() != from + 4) throw ParseError("expected four matrix entries", line);
  return {to_double(w[from], line), to_double(w[from + 1], line), to_double(w[from + 2], line),
          to_double(w[from + 3], line)};
}

LinearCocycle parse_cocycle_block(Lines& L, const std::vector<std::string>& head) {
  const int line = L.line();
  const int n = to_int(need(fields(head, line), "n", line), line);
  if (n < 1) throw ParseError("cocycle period must be positive", line);
  std::vector<Mat2> mats;
  std::string s;
  for (int k = 0; k < n; ++k) {
    if (!L.next(s)) throw ParseError("unexpected end of input in cocycle block", L.line());
    const Mat2 m = parse_mat(words(s), 0, L.line());
    if (!is_invertible(m)) throw ParseError("singular matrix", L.line());
    mats.push_back(m);
  }
  return LinearCocycle(std::move(mats));
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::string fmt_mat(const Mat2& m) {
  return fmt(m.a11) + " " + fmt(m.a12) + " " + fmt(m.a21) + " " + fmt(m.a22);
}

}  // namespace

Document parse_document(std::istream& in) {
  Lines L(in);
  Document doc;
  std::string s;
  if (!L.next(s)) throw ParseError("empty input", 0);
  {
    const auto w = words(s);
    if (w.size() != 2 || w[0] != "flexlab") throw ParseError("missing header 'flexlab 1'", L.line());
    if (w[1] != "1") throw ParseError("unsupported format version " + w[1], L.line());
  }
  while (L.next(s)) {
    const auto w = words(s);
    const int line = L.line();
    try {
      if (w[0] == "cocycle") {
        if (doc.cocycle) throw ParseError("duplicate cocycle block", line);
        doc.cocycle = parse_cocycle_block(L, w);
      } else if (w[0] == "path") {
        if (doc.path) throw ParseError("duplicate path block", line);
        const auto f = fields(w, line);
        std::vector<double> t;
        for (const auto& x : split(need(f, "t", line), ',')) t.push_back(to_double(x, line));
        if (t.size() < 2) throw ParseError("path needs at least two nodes", line);
        for (std::size_t k = 1; k < t.size(); ++k)
          if (!(t[k] > t[k - 1])) throw ParseError("path nodes must increase", line);
        std::vector<LinearCocycle> cs;
        for (std::size_t k = 0; k < t.size(); ++k) {
          if (!L.next(s)) throw ParseError("path ended before all nodes", L.line());
          const auto h = words(s);
          if (h[0] != "cocycle") throw ParseError("expected a cocycle block", L.line());
          cs.push_back(parse_cocycle_block(L, h));
          if (cs.back().period() != cs.front().period())
            throw ParseError("path cocycles differ in period", L.line());
        }
        doc.path = CocyclePath(std::move(t), std::move(cs));
      } else if (w[0] == "theta") {
        const int n = to_int(need(fields(w, line), "n", line), line);
        if (n < 2) throw ParseError("theta needs at least two rows", line);
        std::vector<double> lr, th;
        for (int k = 0; k < n; ++k) {
          if (!L.next(s)) throw ParseError("unexpected end of input in theta block", L.line());
          const auto r = words(s);
          if (r.size() != 2) throw ParseError("theta rows are 'log_r theta'", L.line());
          lr.push_back(to_double(r[0], L.line()));
          th.push_back(to_double(r[1], L.line()));
        }
        try {
          doc.theta = Reparam(std::move(lr), std::move(th));
        } catch (const InvalidArgument& e) {
          throw ParseError(e.what(), line);
        }
      } else if (w[0] == "kit") {
        TransitionKit kit;
        bool seen[4] = {false, false, false, false};
        for (;;) {
          if (!L.next(s)) throw ParseError("kit block without 'end'", L.line());
          const auto r = words(s);
          if (r[0] == "end") break;
          if (r[0] == "schedule") {
            if (r.size() != 8) throw ParseError("schedule needs l1 l2 l3 l4 i1 i2 i3", L.line());
            ScheduleL sc;
            sc.l1 = to_int(r[1], L.line());
            sc.l2 = to_int(r[2], L.line());
            sc.l3 = to_int(r[3], L.line());
            sc.l4 = to_int(r[4], L.line());
            sc.i1 = to_int(r[5], L.line());
            sc.i2 = to_int(r[6], L.line());
            sc.i3 = to_int(r[7], L.line());
            doc.schedule = sc;
            continue;
          }
          const Mat2 m = parse_mat(r, 1, L.line());
          int slot = -1;
          if (r[0] == "P") kit.P = m, slot = 0;
          else if (r[0] == "Q") kit.Q = m, slot = 1;
          else if (r[0] == "T1") kit.T1 = m, slot = 2;
          else if (r[0] == "T2") kit.T2 = m, slot = 3;
          else throw ParseError("unknown kit entry '" + r[0] + "'", L.line());
          seen[slot] = true;
        }
        if (!(seen[0] && seen[1] && seen[2] && seen[3]))
          throw ParseError("kit needs P, Q, T1 and T2", line);
        try {
          kit.validate();
        } catch (const InvalidArgument& e) {
          throw ParseError(e.what(), line);
        }
        if (doc.schedule) {
          doc.schedule->c1 = std::pow(kit.r(), doc.schedule->i1);
          doc.schedule->c2 = std::pow(kit.r(), doc.schedule->i2);
        }
        doc.kit = kit;
      } else if (w[0] == "retard") {
        const auto f = fields(w, line);
        RetardBlock r;
        r.m = to_int(need(f, "m", line), line);
        r.lambda = to_double(need(f, "lambda", line), line);
        r.log_R1 = to_double(need(f, "log_R1", line), line);
        r.log_R2 = to_double(need(f, "log_R2", line), line);
        r.log_R3 = to_double(need(f, "log_R3", line), line);
        if (r.m < 0 || !(r.lambda > 0.0 && r.lambda < 1.0))
          throw ParseError("retard needs m >= 0 and 0 < lambda < 1", line);
        doc.retard = r;
      } else {
        throw ParseError("unknown block '" + w[0] + "'", line);
      }
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line);
    }
  }
  return doc;
}

Document read_document(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file, 0);
  return parse_document(in);
}

std::string format_cocycle(const LinearCocycle& c) {
  std::string s = "cocycle n=" + std::to_string(c.period()) + "\n";
  for (const auto& m : c.mats()) s += fmt_mat(m) + "\n";
  return s;
}

std::string format_path(const CocyclePath& p, const Reparam* theta) {
  std::string s = "path t=";
  for (std::size_t k = 0; k < p.nodes().size(); ++k) s += (k ? "," : "") + fmt(p.nodes()[k]);
  s += "\n";
  for (const auto& c : p.cocycles()) s += format_cocycle(c);
  if (theta) {
    s += "theta n=" + std::to_string(theta->log_r().size()) + "\n";
    for (std::size_t k = 0; k < theta->log_r().size(); ++k)
      s += fmt(theta->log_r()[k]) + " " + fmt(theta->values()[k]) + "\n";
  }
  return s;
}

std::string format_kit(const TransitionKit& kit, const ScheduleL* sched) {
  std::string s = "kit\n";
  s += "P " + fmt_mat(kit.P) + "\n";
  s += "Q " + fmt_mat(kit.Q) + "\n";
  s += "T1 " + fmt_mat(kit.T1) + "\n";
  s += "T2 " + fmt_mat(kit.T2) + "\n";
  if (sched) {
    s += "schedule " + std::to_string(sched->l1) + " " + std::to_string(sched->l2) + " " +
         std::to_string(sched->l3) + " " + std::to_string(sched->l4) + " " +
         std::to_string(sched->i1) + " " + std::to_string(sched->i2) + " " +
         std::to_string(sched->i3) + "\n";
  }
  return s + "end\n";
}

std::string format_retard(const RetardBlock& r) {
  return "retard m=" + std::to_string(r.m) + " lambda=" + fmt(r.lambda) + " log_R1=" +
         fmt(r.log_R1) + " log_R2=" + fmt(r.log_R2) + " log_R3=" + fmt(r.log_R3) + "\n";
}

std::string format_document(const std::vector<std::string>& blocks) {
  std::string s = "flexlab 1\n";
  for (const auto& b : blocks) s += b;
  return s;
}

void write_curves_csv(std::ostream& out, const std::vector<NamedCurve>& curves) {
  out << "curve,u,v\n";
  out << std::setprecision(17);
  for (const auto& c : curves)
    for (const auto& p : c.curve.pts) out << c.name << ',' << p.u << ',' << p.v << '\n';
}

std::vector<NamedCurve> read_curves_csv(std::istream& in) {
  std::string s;
  int line = 0;
  bool named = true;
  std::vector<NamedCurve> out;
  bool header = false;
  while (std::getline(in, s)) {
    ++line;
    s = trim(s);
    if (s.empty() || s[0] == '#') continue;
    const auto cols = split(s, ',');
    if (!header) {
      header = true;
      if (cols == std::vector<std::string>{"curve", "u", "v"}) continue;
      if (cols == std::vector<std::string>{"u", "v"}) {
        named = false;
        continue;
      }
      throw ParseError("CSV header must be 'curve,u,v' or 'u,v'", line);
    }
    if (cols.size() != (named ? 3u : 2u)) throw ParseError("wrong number of CSV columns", line);
    const std::string name = named ? cols[0] : "0";
    const TorusPoint p{to_double(cols[named ? 1 : 0], line), to_double(cols[named ? 2 : 1], line)};
    if (out.empty() || out.back().name != name) {
      for (const auto& c : out)
        if (c.name == name) throw ParseError("rows of curve " + name + " are not contiguous", line);
      out.push_back({name, {}});
    }
    auto& pts = out.back().curve.pts;
    if (!pts.empty()) {
      // Unwrap jumps across the fundamental square.
      const TorusPoint& q = pts.back();
      pts.push_back({p.u - std::round(p.u - q.u), p.v - std::round(p.v - q.v)});
    } else {
      pts.push_back(p);
    }
  }
  if (!header) throw ParseError("empty CSV", line);
  for (auto& c : out) {
    if (c.curve.pts.size() < 3) throw ParseError("curve " + c.name + " has fewer than 3 points", line);
    c.curve.wraps_u = static_cast<int>(std::lround(c.curve.pts.back().u - c.curve.pts.front().u));
    c.curve.wraps_v = static_cast<int>(std::lround(c.curve.pts.back().v - c.curve.pts.front().v));
  }
  return out;
}

std::vector<NamedCurve> read_curves_csv(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file, 0);
  return read_curves_csv(in);
}

void write_torus_svg(std::ostream& out, const std::vector<NamedCurve>& curves,
                     const std::vector<SvgStyle>& styles, const std::string& title, int size) {
  const int pad = 30;
  const int W = size + 2 * pad;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << W + 20
      << "\" viewBox=\"0 0 " << W << ' ' << W + 20 << "\">\n";
  out << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size << "\" height=\"" << size
      << "\" fill=\"white\" stroke=\"#888\"/>\n";
  out << "<text x=\"" << pad << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<text x=\"" << pad + size / 2 << "\" y=\"" << pad + size + 18
      << "\" font-family=\"sans-serif\" font-size=\"12\">u</text>\n";
  out << "<text x=\"8\" y=\"" << pad + size / 2
      << "\" font-family=\"sans-serif\" font-size=\"12\">v</text>\n";
  out << "<clipPath id=\"square\"><rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size
      << "\" height=\"" << size << "\"/></clipPath>\n<g clip-path=\"url(#square)\">\n";
  out << std::fixed << std::setprecision(2);
  const auto X = [&](double u) { return pad + size * u; };
  const auto Y = [&](double v) { return pad + size * (1.0 - v); };
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const SvgStyle st = c < styles.size() ? styles[c] : SvgStyle{};
    const auto& pts = curves[c].curve.pts;
    // Split the unwrapped polyline where it leaves the fundamental square.
    std::vector<std::vector<TorusPoint>> runs;
    long cu = 0, cv = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const long fu = static_cast<long>(std::floor(pts[k].u));
      const long fv = static_cast<long>(std::floor(pts[k].v));
      if (k == 0 || fu != cu || fv != cv) {
        runs.emplace_back();
        cu = fu, cv = fv;
        if (k > 0) runs.back().push_back({pts[k - 1].u - fu, pts[k - 1].v - fv});
      }
      runs.back().push_back({pts[k].u - fu, pts[k].v - fv});
    }
    for (const auto& r : runs) {
      out << "<polyline fill=\"none\" stroke=\"" << st.colour << "\" stroke-width=\"" << st.width
          << '"' << (st.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      for (const auto& p : r) out << X(p.u) << ',' << Y(p.v) << ' ';
      out << "\"/>\n";
    }
  }
  out << "</g>\n</svg>\n";
}

}  // namespace flexlab
