#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace decoysl {

// Flat `key = value` configuration shared by scenarios, model specs and
// experiment configs. Values are numbers, `[a, b, ...]` numeric arrays, or
// bare/quoted strings. `#` starts a comment. Numbers are written with
// %.17g so a write/read round trip is exact.
class KvConfig {
 public:
  using Value = std::variant<std::vector<double>, std::string>;

  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::string& path);
  std::string dump() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  const std::vector<double>& array(const std::string& key) const;
  std::vector<double> array_or(const std::string& key, std::vector<double> fallback) const;
  const std::string& text(const std::string& key) const;
  std::string text_or(const std::string& key, const std::string& fallback) const;

  void set(const std::string& key, double v);
  void set(const std::string& key, std::vector<double> v);
  void set(const std::string& key, std::string v);
  void merge(const KvConfig& other);

  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::map<std::string, Value> entries_;
  std::map<std::string, bool> scalar_;
  std::vector<std::string> order_;
  void put(const std::string& key, Value v, bool scalar);
};

std::string format_double(double v);

}  // namespace decoysl
