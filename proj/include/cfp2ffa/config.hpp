#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace cfp2ffa {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Keys are kept sorted so serialization is canonical.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, std::string_view source = "<stream>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path, std::string_view header_comment = {}) const;
  void write(std::ostream& out) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, const char* value) { values_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  template <typename T>
  void read_into(const std::string& key, T& target) const;

  /// Copies every entry of `other` over this one.
  void merge(const KeyValueConfig& other);
  /// Keys not present in `known`.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

template <typename T>
void KeyValueConfig::read_into(const std::string& key, T& target) const {
  if (!has(key)) return;
  if constexpr (std::is_same_v<T, bool>) {
    target = get_bool(key);
  } else if constexpr (std::is_integral_v<T>) {
    target = static_cast<T>(get_int(key));
  } else if constexpr (std::is_floating_point_v<T>) {
    target = static_cast<T>(get_double(key));
  } else {
    target = get_string(key);
  }
}

/// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace cfp2ffa
