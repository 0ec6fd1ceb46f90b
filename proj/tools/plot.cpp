#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fam/config.hpp"
#include "fam/errors.hpp"
#include "fam/eval.hpp"
#include "fam/text.hpp"

namespace fam::plot {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::string group_of(const std::filesystem::path& log) {
  const auto cfg = log.parent_path() / "config.cfg";
  if (std::filesystem::exists(cfg)) {
    std::ifstream in(cfg);
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : text::parse_key_values(ss.str())) {
      if (k == "algo.algorithm") return v;
    }
  }
  const auto dir = std::filesystem::absolute(log).parent_path().filename().string();
  return dir.empty() ? log.stem().string() : dir;
}

std::vector<Series> aggregate(const std::vector<std::filesystem::path>& logs, const std::string& key) {
  if (logs.empty()) throw InputError("no metric logs given");
  std::vector<std::string> order;
  std::map<std::string, std::vector<Table>> groups;
  std::vector<std::string> columns;
  for (const auto& path : logs) {
    Table t = read_table(path);
    if (columns.empty()) {
      columns = t.columns;
    } else if (t.columns != columns) {
      throw InputError(path.string() + ": columns differ from " + logs.front().string());
    }
    t.column(key);
    t.column("step");
    const std::string g = group_of(path);
    if (!groups.count(g)) order.push_back(g);
    groups[g].push_back(std::move(t));
  }

  std::vector<Series> out;
  for (const auto& g : order) {
    const auto& runs = groups[g];
    const std::size_t kc = runs.front().column(key);
    const std::size_t sc = runs.front().column("step");
    std::size_t n = runs.front().rows.size();
    for (const auto& r : runs) n = std::min(n, r.rows.size());
    Series s;
    s.label = g;
    s.runs = runs.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double step = runs.front().rows[i][sc];
      std::vector<double> vals;
      for (const auto& r : runs) {
        if (r.rows[i][sc] != step) throw InputError("runs of '" + g + "' disagree on step values");
        if (std::isfinite(r.rows[i][kc])) vals.push_back(r.rows[i][kc]);
      }
      if (vals.empty()) continue;
      double sum = 0.0;
      for (double v : vals) sum += v;
      s.steps.push_back(step);
      s.mean.push_back(sum / static_cast<double>(vals.size()));
      s.q25.push_back(quantile(vals, 0.25));
      s.q75.push_back(quantile(vals, 0.75));
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, const std::string& key) {
  const double width = 800, height = 500;
  const double left = 80, right = 170, top = 30, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      xmin = std::min(xmin, s.steps[i]);
      xmax = std::max(xmax, s.steps[i]);
      ymin = std::min({ymin, s.q25[i], s.mean[i]});
      ymax = std::max({ymax, s.q75[i], s.mean[i]});
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + ph + 18)
       << "\" text-anchor=\"middle\">" << label(xv) << "</text>\n";
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4)
       << "\" text-anchor=\"end\">" << label(yv) << "</text>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 15)
     << "\" text-anchor=\"middle\">step</text>\n";
  os << "<text x=\"15\" y=\"" << num(top + ph / 2) << "\" transform=\"rotate(-90 15 "
     << num(top + ph / 2) << ")\" text-anchor=\"middle\">" << escape(key) << "</text>\n";

  for (std::size_t g = 0; g < series.size(); ++g) {
    const auto& s = series[g];
    const char* color = kPalette[g % std::size(kPalette)];
    if (s.steps.empty()) continue;
    os << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.steps.size(); ++i) os << num(px(s.steps[i])) << ',' << num(py(s.q75[i])) << ' ';
    for (std::size_t i = s.steps.size(); i-- > 0;) os << num(px(s.steps[i])) << ',' << num(py(s.q25[i])) << ' ';
    os << "\"/>\n";
    os << "<polyline class=\"mean\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.steps.size(); ++i) os << num(px(s.steps[i])) << ',' << num(py(s.mean[i])) << ' ';
    os << "\"/>\n";
    const double ly = top + 15 + 18.0 * static_cast<double>(g);
    os << "<line x1=\"" << num(left + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 30)
       << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    os << "<text x=\"" << num(left + pw + 35) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label)
       << " (n=" << s.runs << ")</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string band_csv(const std::vector<Series>& series) {
  std::string out = "group,step,mean,q25,q75,runs\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      out += s.label + ',' + text::format_double(s.steps[i]) + ',' + text::format_double(s.mean[i]) +
             ',' + text::format_double(s.q25[i]) + ',' + text::format_double(s.q75[i]) + ',' +
             std::to_string(s.runs) + '\n';
    }
  }
  return out;
}

}  // namespace fam::plot
