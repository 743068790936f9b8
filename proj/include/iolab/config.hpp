#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iolab {

/// Bad command line or configuration (CLI exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The recognised configuration keys.
const std::vector<std::string>& config_keys();

/// String settings from a `key = value` file, overridable per key.
///
/// Blank lines and lines starting with '#' are ignored. Unknown keys are a
/// UsageError.
class Settings {
 public:
  static Settings from_file(const std::filesystem::path& path);
  static Settings parse(std::string_view text, std::string_view origin = "<config>");

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  unsigned long long get_uint(const std::string& key, unsigned long long fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<double> parse_double_list(std::string_view text);

}  // namespace iolab
