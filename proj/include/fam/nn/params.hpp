#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fam::nn {

struct ParamArray {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

class Gradients;

/// Named parameter arrays of one network. Arrays are registered while the
/// network is built; afterwards only values change. The version counter is
/// bumped by every optimizer or soft update.
class ParamSet {
 public:
  ParamSet() = default;

  /// Registers a zero-initialized array and returns its index.
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);

  std::size_t count() const { return arrays_.size(); }
  std::size_t total_size() const;
  std::size_t index_of(std::string_view name) const;  // throws InputError
  bool contains(std::string_view name) const;

  const ParamArray& array(std::size_t i) const { return arrays_[i]; }
  std::span<double> values(std::size_t i) { return arrays_[i].values; }
  std::span<const double> values(std::size_t i) const { return arrays_[i].values; }
  const std::vector<ParamArray>& arrays() const { return arrays_; }

  std::uint64_t version() const { return version_; }
  void set_version(std::uint64_t v) { version_ = v; }
  void bump_version() { ++version_; }

  bool all_finite() const;
  bool same_shape(const ParamSet& other) const;
  Gradients zeros_like() const;

  /// Flat view of coordinate `k` across all arrays (for gradient checks).
  double& coordinate(std::size_t k);
  double coordinate(std::size_t k) const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<ParamArray> arrays_;
  std::uint64_t version_ = 0;
};

/// Gradient arrays shape-matched to a ParamSet.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamSet& like);

  std::size_t count() const { return arrays_.size(); }
  std::span<double> values(std::size_t i) { return arrays_[i]; }
  std::span<const double> values(std::size_t i) const { return arrays_[i]; }

  void zero();
  double global_norm() const;
  bool all_finite() const;
  void scale(double alpha);
  /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
  double clip_global_norm(double max_norm);
  bool matches(const ParamSet& params) const;

  double coordinate(std::size_t k) const;

 private:
  std::vector<std::vector<double>> arrays_;
};

}  // namespace fam::nn
