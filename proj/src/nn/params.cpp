#include "fam/nn/params.hpp"

#include <cmath>

#include "fam/errors.hpp"
#include "fam/nn/matrix.hpp"
#include "fam/simd/kernels.hpp"

namespace fam::nn {

std::size_t ParamSet::add(std::string name, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw InputError("parameter '" + name + "' has an empty shape");
  if (contains(name)) throw InputError("duplicate parameter '" + name + "'");
  arrays_.push_back({std::move(name), rows, cols, std::vector<double>(rows * cols, 0.0)});
  return arrays_.size() - 1;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += a.size();
  return n;
}

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    if (arrays_[i].name == name) return i;
  }
  throw InputError("no parameter named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return true;
  }
  return false;
}

bool ParamSet::all_finite() const {
  for (const auto& a : arrays_) {
    if (!nn::all_finite(a.values)) return false;
  }
  return true;
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (arrays_.size() != other.arrays_.size()) return false;
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    const auto& a = arrays_[i];
    const auto& b = other.arrays_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

Gradients ParamSet::zeros_like() const { return Gradients(*this); }

double& ParamSet::coordinate(std::size_t k) {
  for (auto& a : arrays_) {
    if (k < a.size()) return a.values[k];
    k -= a.size();
  }
  throw InputError("parameter coordinate out of range");
}

double ParamSet::coordinate(std::size_t k) const {
  return const_cast<ParamSet*>(this)->coordinate(k);
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.arrays_.size(); ++i) {
    if (a.arrays_[i].values != b.arrays_[i].values) return false;
  }
  return true;
}

Gradients::Gradients(const ParamSet& like) {
  arrays_.reserve(like.count());
  for (const auto& a : like.arrays()) arrays_.emplace_back(a.size(), 0.0);
}

void Gradients::zero() {
  for (auto& a : arrays_) std::fill(a.begin(), a.end(), 0.0);
}

double Gradients::global_norm() const {
  const auto& k = simd::active();
  double sq = 0.0;
  for (const auto& a : arrays_) sq += k.sum_squares(a.data(), a.size());
  return std::sqrt(sq);
}

bool Gradients::all_finite() const {
  for (const auto& a : arrays_) {
    if (!nn::all_finite(a)) return false;
  }
  return true;
}

void Gradients::scale(double alpha) {
  const auto& k = simd::active();
  for (auto& a : arrays_) k.scale(alpha, a.data(), a.size());
}

double Gradients::clip_global_norm(double max_norm) {
  const double norm = global_norm();
  if (max_norm > 0.0 && norm > max_norm) scale(max_norm / norm);
  return norm;
}

bool Gradients::matches(const ParamSet& params) const {
  if (arrays_.size() != params.count()) return false;
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    if (arrays_[i].size() != params.array(i).size()) return false;
  }
  return true;
}

double Gradients::coordinate(std::size_t k) const {
  for (const auto& a : arrays_) {
    if (k < a.size()) return a[k];
    k -= a.size();
  }
  throw InputError("gradient coordinate out of range");
}

}  // namespace fam::nn
