#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mms {

/// Config syntax or semantic problem, tagged with the offending line (0 when unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ConfigValue {
  std::vector<std::string> items;  ///< one item for scalars
  bool list = false;
  int line = 0;

  const std::string& text(const std::string& key) const;
  double number(const std::string& key) const;
  long integer(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
};

using ConfigTable = std::map<std::string, ConfigValue>;

/// key = value lines with one nesting level: `[section]` headers or inline `{ k = v, ... }` tables.
/// Values are numbers, bare words, "quoted strings" or [lists]; `#` starts a comment.
struct ParsedConfig {
  ConfigTable top;
  std::map<std::string, ConfigTable> tables;
  std::map<std::string, int> table_lines;
};

ParsedConfig parse_config(std::istream& in);
ParsedConfig parse_config_string(const std::string& text);

}  // namespace mms
