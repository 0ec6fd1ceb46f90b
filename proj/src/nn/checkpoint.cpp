#include "fam/nn/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fam/errors.hpp"

namespace fam::nn {

namespace {

constexpr const char* kMagic = "fam-checkpoint 1";

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

void Checkpoint::set_meta(const std::string& key, std::string value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  meta.emplace_back(key, std::move(value));
}

std::optional<std::string> Checkpoint::get_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void Checkpoint::add_params(const std::string& prefix, const ParamSet& params) {
  for (const auto& a : params.arrays()) {
    arrays.push_back({prefix + "/" + a.name, a.rows, a.cols, a.values});
  }
  set_meta("version:" + prefix, std::to_string(params.version()));
}

void Checkpoint::load_params(const std::string& prefix, ParamSet& params) const {
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& dst = params.array(i);
    const NamedArray* src = find(prefix + "/" + dst.name);
    if (!src) throw IoError("checkpoint is missing array '" + prefix + "/" + dst.name + "'");
    if (src->rows != dst.rows || src->cols != dst.cols) {
      throw IoError("checkpoint array '" + src->name + "' has shape " + std::to_string(src->rows) +
                    "x" + std::to_string(src->cols) + ", expected " + std::to_string(dst.rows) + "x" +
                    std::to_string(dst.cols));
    }
    auto values = params.values(i);
    std::copy(src->values.begin(), src->values.end(), values.begin());
  }
  if (auto v = get_meta("version:" + prefix)) params.set_version(std::stoull(*v));
}

void Checkpoint::add_optimizer(const std::string& prefix, const Adam& opt) {
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    const auto& m = opt.first_moments()[i];
    const auto& v = opt.second_moments()[i];
    arrays.push_back({prefix + "/m" + std::to_string(i), m.size(), 1, m});
    arrays.push_back({prefix + "/v" + std::to_string(i), v.size(), 1, v});
  }
  set_meta("steps:" + prefix, std::to_string(opt.steps()));
}

void Checkpoint::load_optimizer(const std::string& prefix, Adam& opt) const {
  auto& ms = opt.first_moments();
  auto& vs = opt.second_moments();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const NamedArray* m = find(prefix + "/m" + std::to_string(i));
    const NamedArray* v = find(prefix + "/v" + std::to_string(i));
    if (!m || !v || m->values.size() != ms[i].size() || v->values.size() != vs[i].size()) {
      throw IoError("checkpoint optimizer state '" + prefix + "' missing or mismatched");
    }
    ms[i] = m->values;
    vs[i] = v->values;
  }
  if (auto s = get_meta("steps:" + prefix)) opt.set_steps(std::stoull(*s));
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open checkpoint for writing: " + tmp.string());
    out << kMagic << '\n';
    std::size_t config_lines = 0;
    for (char c : ckpt.config_text) config_lines += c == '\n';
    if (!ckpt.config_text.empty() && ckpt.config_text.back() != '\n') ++config_lines;
    out << "config " << config_lines << '\n' << ckpt.config_text;
    if (!ckpt.config_text.empty() && ckpt.config_text.back() != '\n') out << '\n';
    for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ' ' << v << '\n';
    for (const auto& a : ckpt.arrays) {
      out << "array " << a.name << ' ' << a.rows << ' ' << a.cols << '\n';
      for (std::size_t i = 0; i < a.values.size(); ++i) {
        out << (i ? " " : "") << hex(a.values[i]);
      }
      out << '\n';
    }
    out << "end\n";
    if (!out) throw IoError("failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw IoError("not a checkpoint file: " + path.string());

  Checkpoint ckpt;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream head(line);
    std::string tag;
    head >> tag;
    if (tag == "config") {
      std::size_t n = 0;
      head >> n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw IoError("truncated checkpoint config");
        ckpt.config_text += line + "\n";
      }
    } else if (tag == "meta") {
      std::string key;
      head >> key;
      std::string value;
      std::getline(head >> std::ws, value);
      ckpt.meta.emplace_back(key, value);
    } else if (tag == "array") {
      NamedArray a;
      head >> a.name >> a.rows >> a.cols;
      if (!head) throw IoError("malformed array header in checkpoint");
      if (!std::getline(in, line)) throw IoError("truncated checkpoint array " + a.name);
      a.values.reserve(a.rows * a.cols);
      const char* p = line.c_str();
      char* end = nullptr;
      for (std::size_t i = 0; i < a.rows * a.cols; ++i) {
        const double v = std::strtod(p, &end);
        if (end == p) throw IoError("malformed values for array " + a.name);
        a.values.push_back(v);
        p = end;
      }
      ckpt.arrays.push_back(std::move(a));
    } else {
      throw IoError("unknown checkpoint record '" + tag + "'");
    }
  }
  if (!ended) throw IoError("truncated checkpoint: " + path.string());
  return ckpt;
}

}  // namespace fam::nn
