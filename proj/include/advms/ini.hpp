#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace advms {

/// Line-oriented `key = value` text with `[section]` headers and `#`
/// comments. Sections may repeat; order is preserved.
struct IniEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct IniSection {
  std::string name;
  std::vector<IniEntry> entries;
  int line = 0;

  const IniEntry* find(std::string_view key) const;
  void set(std::string key, std::string value);
};

class IniDocument {
 public:
  /// Throws ConfigError on malformed lines, naming `source` and the line.
  static IniDocument parse(std::string_view text, std::string_view source = "<config>");

  IniSection& add(std::string name);
  const std::vector<IniSection>& sections() const { return sections_; }
  std::vector<IniSection>& sections() { return sections_; }
  const IniSection* find(std::string_view name) const;
  std::vector<const IniSection*> find_all(std::string_view name) const;

  std::string to_string() const;

 private:
  std::vector<IniSection> sections_;
};

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);
/// Decimal or rational ("8/255") real; throws ConfigError naming `what`.
double parse_real(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
std::vector<std::string> split_list(std::string_view text);
std::string trim(std::string_view text);

}  // namespace advms
