#include "noisesteer/harness/plots.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "noisesteer/errors.hpp"

namespace noisesteer {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string file_stem(const std::string& label) {
  std::string s;
  for (char c : label) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return s.empty() ? "run" : s;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void open_svg(std::ostream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
}

void axes(std::ostream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel,
          const std::vector<double>& yticks, const std::vector<double>& xticks) {
  os << "<line x1=\"" << f.px(f.x0) << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.px(f.x1) << "\" y2=\"" << f.py(f.y0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << f.px(f.x0) << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.px(f.x0) << "\" y2=\"" << f.py(f.y1)
     << "\" stroke=\"black\"/>\n";
  for (double y : yticks) {
    os << "<text x=\"" << f.px(f.x0) - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << fmt("%g", y)
       << "</text>\n";
  }
  for (double x : xticks) {
    os << "<text x=\"" << f.px(x) << "\" y=\"" << f.py(f.y0) + 16 << "\" text-anchor=\"middle\">" << fmt("%g", x)
       << "</text>\n";
  }
  os << "<text x=\"" << (f.px(f.x0) + f.px(f.x1)) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
     << escape(xlabel) << "</text>\n";
  os << "<text x=\"16\" y=\"" << (f.py(f.y0) + f.py(f.y1)) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (f.py(f.y0) + f.py(f.y1)) / 2 << ")\">" << escape(ylabel) << "</text>\n";
}

void legend(std::ostream& os, std::size_t i, const std::string& color, const std::string& label) {
  const double x = kWidth - kRight + 16, y = kTop + 10 + 20 * static_cast<double>(i);
  os << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
  os << "<text x=\"" << x + 18 << "\" y=\"" << y + 2 << "\">" << escape(label) << "</text>\n";
}

std::vector<double> ticks(double hi, int n) {
  std::vector<double> t;
  for (int i = 0; i <= n; ++i) t.push_back(hi * i / n);
  return t;
}

}  // namespace

std::string composition_svg(const LabeledLedger& run) {
  const auto rounds = run.ledger.of_kind("round");
  double max_eps = 1.0;
  for (const auto& r : rounds) max_eps = std::max(max_eps, r["episodes"].get<double>());
  const Frame f{0.5, static_cast<double>(rounds.size()) + 0.5, 0.0, max_eps};
  std::ostringstream os;
  open_svg(os, "Trajectory composition: " + run.label);
  std::vector<double> xt;
  for (std::size_t i = 1; i <= rounds.size(); ++i) xt.push_back(static_cast<double>(i));
  axes(os, f, "round", "episodes", ticks(max_eps, 5), xt);
  const char* keys[] = {"model_only", "mixed", "human_only"};
  const char* colors[] = {"#2ca02c", "#ff7f0e", "#d62728"};
  const double bar = 0.6 * (f.px(1.5) - f.px(0.5));
  for (const auto& r : rounds) {
    const double x = r["round"].get<double>();
    double base = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double h = r["composition"][keys[k]].get<double>();
      if (h <= 0) continue;
      os << "<rect x=\"" << f.px(x) - bar / 2 << "\" y=\"" << f.py(base + h) << "\" width=\"" << bar << "\" height=\""
         << f.py(base) - f.py(base + h) << "\" fill=\"" << colors[k] << "\"/>\n";
      base += h;
    }
  }
  for (int k = 0; k < 3; ++k) legend(os, static_cast<std::size_t>(k), colors[k], keys[k]);
  os << "</svg>\n";
  return os.str();
}

std::string success_curve_svg(std::span<const LabeledLedger> runs) {
  double max_steps = 1.0;
  for (const auto& run : runs) {
    for (const auto& r : run.ledger.records()) {
      if (r.contains("eval")) max_steps = std::max(max_steps, r["env_steps"].get<double>());
    }
  }
  const Frame f{0.0, max_steps, 0.0, 1.0};
  std::ostringstream os;
  open_svg(os, "Success vs env steps");
  axes(os, f, "env steps", "overall success", ticks(1.0, 5), ticks(max_steps, 4));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : runs[i].ledger.records()) {
      if (!r.contains("eval")) continue;
      os << f.px(r["env_steps"].get<double>()) << ',' << f.py(r["eval"]["overall"].get<double>()) << ' ';
    }
    os << "\"/>\n";
    legend(os, i, color, runs[i].label);
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::string> emit_plots(std::span<const LabeledLedger> runs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  const auto write = [&](const std::string& name, const std::string& body) {
    const auto path = (fs::path(out_dir) / name).string();
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os << body;
    written.push_back(path);
  };
  for (const auto& run : runs) write("composition_" + file_stem(run.label) + ".svg", composition_svg(run));
  if (!runs.empty()) write("success_vs_env_steps.svg", success_curve_svg(runs));
  return written;
}

}  // namespace noisesteer
