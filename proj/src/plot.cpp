#include "advms/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>
#include <vector>

#include "advms/file_util.hpp"
#include "advms/ini.hpp"

namespace advms {
namespace {

constexpr double kWidth = 640, kHeight = 440, kLeft = 60, kRight = 180, kTop = 30, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                   "#7f7f7f", "#bcbd22", "#17becf"};

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string render(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                   const std::string& ylabel) {
  double xmin = 0, xmax = 1e-9;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) xmin = xmax = x, first = false;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - y) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kLeft << "\" y=\"18\" font-size=\"14\">" << title << "</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0, x = xmin + (xmax - xmin) * i / 4.0;
    o << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
    o << "<text x=\"" << num(px(x)) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
      << format_double(std::round(x * 1e4) / 1e4) << "</text>\n";
  }
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">" << xlabel
    << "</text>\n";
  o << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
    << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kColors[i % std::size(kColors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : s.points) o << num(px(x)) << ',' << num(py(y)) << ' ';
    o << "\"/>\n";
    for (const auto& [x, y] : s.points) {
      o << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << kWidth - kRight + 12 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 32
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kWidth - kRight + 38 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

struct Mean {
  double sum = 0;
  int n = 0;
  void add(double v) { sum += v, ++n; }
  double value() const { return sum / n; }
};

}  // namespace

std::string asr_vs_epsilon_svg(const EvalReport& report) {
  using Key = std::tuple<std::size_t, double, int, int, std::size_t>;
  std::map<Key, std::map<double, Mean>> curves;
  for (const auto& r : report.rows) {
    if (!r.asr) continue;
    curves[{r.m, r.epsilon_train, static_cast<int>(r.attack), static_cast<int>(r.threat), r.eot_samples}]
          [r.epsilon_attack]
              .add(*r.asr);
  }
  std::vector<Series> series;
  for (const auto& [k, pts] : curves) {
    const auto& [m, et, kind, threat, n] = k;
    Series s;
    s.label = "M=" + std::to_string(m) + " eps_tr=" + format_double(et) + " " +
              std::string(to_string(static_cast<AttackKind>(kind))) +
              (threat == static_cast<int>(Threat::eot) ? " eot" + std::to_string(n) : "");
    for (const auto& [x, mean] : pts) s.points.emplace_back(x, mean.value());
    series.push_back(std::move(s));
  }
  return render(series, "Attack success rate", "epsilon_attack", "ASR");
}

std::string tradeoff_svg(const EvalReport& report) {
  std::map<std::size_t, std::map<double, std::pair<Mean, Mean>>> curves;
  for (const auto& r : report.rows) {
    if (!r.asr) continue;
    auto& [acc, asr] = curves[r.m][r.epsilon_train];
    acc.add(r.clean_accuracy);
    asr.add(*r.asr);
  }
  std::vector<Series> series;
  for (const auto& [m, pts] : curves) {
    Series s;
    s.label = "M=" + std::to_string(m);
    for (const auto& [et, v] : pts) s.points.emplace_back(v.first.value(), v.second.value());
    std::sort(s.points.begin(), s.points.end());
    series.push_back(std::move(s));
  }
  return render(series, "Robustness vs clean accuracy", "clean accuracy", "ASR");
}

void write_plots(const EvalReport& report, const std::filesystem::path& dir) {
  write_text(dir / "asr_vs_epsilon.svg", asr_vs_epsilon_svg(report));
  write_text(dir / "tradeoff.svg", tradeoff_svg(report));
}

}  // namespace advms
