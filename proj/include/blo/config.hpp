#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace blo {

// Flat "key = value" settings. Lines starting with '#' are comments; list
// values are comma separated, optionally wrapped in [ ]. Every lookup records
// the value it resolved to (default included) so a run can write out exactly
// what it used.
class Config {
 public:
  static Config parse(std::string_view text);               // ParseError
  static Config load(const std::filesystem::path& path);    // IoError, ParseError

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  // InvalidConfig naming the first key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // key = value lines for everything looked up so far, sorted by key.
  std::string resolved_text() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
};

std::vector<std::string> split_list(std::string_view text);
std::string join_doubles(const std::vector<double>& xs);

}  // namespace blo
