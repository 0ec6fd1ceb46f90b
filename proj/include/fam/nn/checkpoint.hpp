#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fam/nn/optim.hpp"
#include "fam/nn/params.hpp"

namespace fam::nn {

struct NamedArray {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

/// Named-array container. Values are stored as hex floats so a
/// save/load cycle is bit-exact.
struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedArray> arrays;

  void set_meta(const std::string& key, std::string value);
  std::optional<std::string> get_meta(const std::string& key) const;
  const NamedArray* find(const std::string& name) const;

  /// Stores every array of `params` under "<prefix>/<name>" and its version counter.
  void add_params(const std::string& prefix, const ParamSet& params);
  /// Loads values and version back; throws IoError on missing arrays or shape mismatch.
  void load_params(const std::string& prefix, ParamSet& params) const;

  void add_optimizer(const std::string& prefix, const Adam& opt);
  void load_optimizer(const std::string& prefix, Adam& opt) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace fam::nn
