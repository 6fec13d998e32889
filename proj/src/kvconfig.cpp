#include "decoysl/kvconfig.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "decoysl/errors.hpp"

namespace decoysl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& tok, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size()) throw ConfigError("line " + std::to_string(line) + ": bad number '" + tok + "'");
  return v;
}

bool looks_numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    bool in_quote = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') in_quote = !in_quote;
      if (s[i] == '#' && !in_quote) {
        s.resize(i);
        break;
      }
    }
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
    if (!val.empty() && val.front() == '[') {
      if (val.back() != ']') throw ConfigError("line " + std::to_string(line) + ": unterminated array");
      std::vector<double> items;
      std::stringstream body(val.substr(1, val.size() - 2));
      std::string tok;
      while (std::getline(body, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        items.push_back(parse_number(tok, line));
      }
      cfg.put(key, std::move(items), false);
    } else if (val.size() >= 2 && val.front() == '"' && val.back() == '"') {
      cfg.put(key, val.substr(1, val.size() - 2), true);
    } else if (looks_numeric(val)) {
      cfg.put(key, std::vector<double>{parse_number(val, line)}, true);
    } else {
      cfg.put(key, val, true);
    }
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string KvConfig::dump() const {
  std::string out;
  for (const auto& key : order_) {
    const Value& v = entries_.at(key);
    out += key + " = ";
    if (const auto* arr = std::get_if<std::vector<double>>(&v)) {
      if (scalar_.at(key)) {
        out += format_double(arr->front());
      } else {
        out += "[";
        for (std::size_t i = 0; i < arr->size(); ++i) {
          if (i) out += ", ";
          out += format_double((*arr)[i]);
        }
        out += "]";
      }
    } else {
      out += "\"" + std::get<std::string>(v) + "\"";
    }
    out += "\n";
  }
  return out;
}

void KvConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << dump();
}

double KvConfig::number(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing key '" + key + "'");
  const auto* arr = std::get_if<std::vector<double>>(&it->second);
  if (!arr || arr->size() != 1 || !scalar_.at(key)) throw ConfigError("key '" + key + "' is not a number");
  return arr->front();
}

double KvConfig::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

const std::vector<double>& KvConfig::array(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing key '" + key + "'");
  const auto* arr = std::get_if<std::vector<double>>(&it->second);
  if (!arr) throw ConfigError("key '" + key + "' is not numeric");
  return *arr;
}

std::vector<double> KvConfig::array_or(const std::string& key, std::vector<double> fallback) const {
  return has(key) ? array(key) : fallback;
}

const std::string& KvConfig::text(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing key '" + key + "'");
  const auto* s = std::get_if<std::string>(&it->second);
  if (!s) throw ConfigError("key '" + key + "' is not a string");
  return *s;
}

std::string KvConfig::text_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? text(key) : fallback;
}

void KvConfig::put(const std::string& key, Value v, bool scalar) {
  if (!entries_.count(key)) order_.push_back(key);
  entries_[key] = std::move(v);
  scalar_[key] = scalar;
}

void KvConfig::set(const std::string& key, double v) { put(key, std::vector<double>{v}, true); }
void KvConfig::set(const std::string& key, std::vector<double> v) { put(key, std::move(v), false); }
void KvConfig::set(const std::string& key, std::string v) { put(key, std::move(v), true); }

void KvConfig::merge(const KvConfig& other) {
  for (const auto& key : other.order_) put(key, other.entries_.at(key), other.scalar_.at(key));
}

}  // namespace decoysl
