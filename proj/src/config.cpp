#include "iolab/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace iolab {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "order",     "tau",      "eos_penalty", "mode",      "steps",     "batch_size", "lr",
      "warmup",    "seed",     "d_model",     "n_layers",  "n_heads",   "d_ffn",      "dropout",
      "max_len",   "train_src", "train_tgt",  "dev_src",   "dev_tgt",   "vocab",      "checkpoint",
      "eval_interval",
  };
  return keys;
}

Settings Settings::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

Settings Settings::parse(std::string_view text, std::string_view origin) {
  Settings s;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(std::string_view(t).substr(0, eq));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw UsageError(std::string(origin) + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    s.values_[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return s;
}

void Settings::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

std::optional<std::string> Settings::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  return std::nullopt;
}

std::string Settings::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::string Settings::require(const std::string& key) const {
  if (auto v = get(key)) return *v;
  throw UsageError("missing required setting '" + key + "'");
}

double Settings::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return d;
  } catch (const std::exception&) {
    throw UsageError("setting '" + key + "' expects a number, got '" + *v + "'");
  }
}

long long Settings::get_int(const std::string& key, long long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long i = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return i;
  } catch (const std::exception&) {
    throw UsageError("setting '" + key + "' expects an integer, got '" + *v + "'");
  }
}

unsigned long long Settings::get_uint(const std::string& key, unsigned long long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    if (!v->empty() && (*v)[0] == '-') throw std::invalid_argument(key);
    const unsigned long long i = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return i;
  } catch (const std::exception&) {
    throw UsageError("setting '" + key + "' expects a non-negative integer, got '" + *v + "'");
  }
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    const auto t = trim(item);
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw UsageError("expected a comma-separated list of numbers, got '" + std::string(text) + "'");
    }
  }
  return out;
}

}  // namespace iolab
