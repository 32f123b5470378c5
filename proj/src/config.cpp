#include "mmslab/config.hpp"

#include <cctype>
#include <cstdlib>
#include <istream>
#include <sstream>

namespace mms {
namespace {

class Cursor {
 public:
  Cursor(const std::string& s, int line) : s_(s), line_(line) {}
  void skip_ws() {
    while (p_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[p_]))) ++p_;
  }
  bool done() {
    skip_ws();
    return p_ >= s_.size();
  }
  char peek() {
    skip_ws();
    return p_ < s_.size() ? s_[p_] : '\0';
  }
  bool eat(char c) {
    if (peek() != c) return false;
    ++p_;
    return true;
  }
  void need(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }
  std::string key() {
    skip_ws();
    const std::size_t b = p_;
    while (p_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[p_])) || s_[p_] == '_' || s_[p_] == '-')) ++p_;
    if (b == p_ || std::isdigit(static_cast<unsigned char>(s_[b]))) fail("expected a key");
    return s_.substr(b, p_ - b);
  }
  std::string atom() {
    skip_ws();
    if (p_ < s_.size() && s_[p_] == '"') {
      const std::size_t b = ++p_;
      while (p_ < s_.size() && s_[p_] != '"') ++p_;
      if (p_ >= s_.size()) fail("unterminated string");
      return s_.substr(b, p_++ - b);
    }
    const std::size_t b = p_;
    while (p_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[p_])) && s_[p_] != ',' && s_[p_] != ']' &&
           s_[p_] != '}')
      ++p_;
    if (b == p_) fail("expected a value");
    return s_.substr(b, p_ - b);
  }
  ConfigValue value() {
    ConfigValue v;
    v.line = line_;
    if (eat('[')) {
      v.list = true;
      if (!eat(']')) {
        do v.items.push_back(atom());
        while (eat(','));
        need(']');
      }
    } else {
      v.items.push_back(atom());
    }
    return v;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(line_, what); }

 private:
  const std::string& s_;
  std::size_t p_ = 0;
  int line_;
};

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

void insert(ConfigTable& t, const std::string& k, ConfigValue v, int line) {
  if (!t.emplace(k, std::move(v)).second) throw ConfigError(line, "duplicate key '" + k + "'");
}

}  // namespace

const std::string& ConfigValue::text(const std::string& key) const {
  if (list || items.size() != 1) throw ConfigError(line, "'" + key + "' must be a single value");
  return items[0];
}

double ConfigValue::number(const std::string& key) const {
  const auto& s = text(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end) throw ConfigError(line, "'" + key + "' must be a number, got '" + s + "'");
  return v;
}

long ConfigValue::integer(const std::string& key) const {
  const auto& s = text(key);
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end) throw ConfigError(line, "'" + key + "' must be an integer, got '" + s + "'");
  return v;
}

std::vector<double> ConfigValue::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : items) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end) throw ConfigError(line, "'" + key + "' must hold numbers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

ParsedConfig parse_config(std::istream& in) {
  ParsedConfig cfg;
  std::string raw;
  int line = 0;
  ConfigTable* section = nullptr;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = strip_comment(raw);
    Cursor c(text, line);
    if (c.done()) continue;
    if (c.eat('[')) {
      const std::string name = c.key();
      c.need(']');
      if (!c.done()) c.fail("trailing characters after section header");
      if (cfg.tables.count(name) || cfg.top.count(name)) c.fail("duplicate section '" + name + "'");
      section = &cfg.tables[name];
      cfg.table_lines[name] = line;
      continue;
    }
    const std::string key = c.key();
    c.need('=');
    if (c.eat('{')) {
      if (section) c.fail("inline tables are only allowed at top level");
      if (cfg.tables.count(key) || cfg.top.count(key)) c.fail("duplicate section '" + key + "'");
      ConfigTable& t = cfg.tables[key];
      cfg.table_lines[key] = line;
      if (!c.eat('}')) {
        do {
          const std::string k = c.key();
          c.need('=');
          if (c.peek() == '{') c.fail("tables nest only one level");
          insert(t, k, c.value(), line);
        } while (c.eat(','));
        c.need('}');
      }
    } else {
      ConfigValue v = c.value();
      insert(section ? *section : cfg.top, key, std::move(v), line);
    }
    if (!c.done()) c.fail("trailing characters after value");
  }
  return cfg;
}

ParsedConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace mms
