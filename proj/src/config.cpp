#include "cfp2ffa/config.hpp"

#include <algorithm>
#include <charconv>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfp2ffa {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

KeyValueConfig KeyValueConfig::parse(std::istream& in, std::string_view source) {
  KeyValueConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(std::string(source) + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
    }
    auto key = trim(std::string_view(text).substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error(std::string(source) + ":" + std::to_string(lineno) + ": empty key");
    }
    config.values_[key] = trim(std::string_view(text).substr(eq + 1));
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse(in, path.string());
}

void KeyValueConfig::write(std::ostream& out) const {
  for (const auto& [key, value] : values_) out << key << " = " << value << '\n';
}

void KeyValueConfig::save(const std::filesystem::path& path, std::string_view header_comment) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!header_comment.empty()) {
    std::istringstream lines{std::string(header_comment)};
    std::string l;
    while (std::getline(lines, l)) out << "# " << l << '\n';
  }
  write(out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void KeyValueConfig::set(const std::string& key, double value) { values_[key] = format_double(value); }

void KeyValueConfig::set(const std::string& key, std::int64_t value) {
  values_[key] = std::to_string(value);
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("missing config key '" + key + "'");
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const auto text = get_string(key);
  char* end = nullptr;
  errno = 0;
  const double value = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0' || errno == ERANGE) {
    throw std::invalid_argument("config key '" + key + "': '" + text + "' is not a number");
  }
  return value;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  const auto text = get_string(key);
  char* end = nullptr;
  errno = 0;
  const long long value = std::strtoll(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0' || errno == ERANGE) {
    throw std::invalid_argument("config key '" + key + "': '" + text + "' is not an integer");
  }
  return value;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const auto text = get_string(key);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("config key '" + key + "': '" + text + "' is not a boolean");
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::vector<std::string> KeyValueConfig::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  }
  return out;
}

}  // namespace cfp2ffa
