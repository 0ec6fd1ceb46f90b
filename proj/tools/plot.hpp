#pragma once

// Learning-curve aggregation across seeds: mean line with a 25-75%
// quantile band per algorithm, rendered as SVG and dumped as CSV.

#include <filesystem>
#include <string>
#include <vector>

namespace fam::plot {

/// Quantile with linear interpolation between order statistics
/// (position q * (n - 1) in the sorted sample). Throws InputError when empty.
double quantile(std::vector<double> values, double q);

struct Series {
  std::string label;
  std::size_t runs = 0;
  std::vector<double> steps;
  std::vector<double> mean;
  std::vector<double> q25;
  std::vector<double> q75;
};

/// Group label of a metric log: the algorithm in the sibling config.cfg,
/// otherwise the name of the containing directory.
std::string group_of(const std::filesystem::path& log);

/// Aggregates `key` over the logs of each group. All logs must share the
/// same columns; runs of a group are truncated to their common length and
/// must agree on the step column. Throws InputError otherwise.
std::vector<Series> aggregate(const std::vector<std::filesystem::path>& logs, const std::string& key);

std::string render_svg(const std::vector<Series>& series, const std::string& key);
/// "group,step,mean,q25,q75,runs" rows.
std::string band_csv(const std::vector<Series>& series);

}  // namespace fam::plot
