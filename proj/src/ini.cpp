#include "advms/ini.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "advms/error.hpp"

namespace advms {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

const IniEntry* IniSection::find(std::string_view key) const {
  const IniEntry* found = nullptr;
  for (const auto& e : entries)
    if (e.key == key) found = &e;
  return found;
}

void IniSection::set(std::string key, std::string value) {
  for (auto& e : entries) {
    if (e.key == key) {
      e.value = std::move(value);
      return;
    }
  }
  entries.push_back({std::move(key), std::move(value), 0});
}

IniDocument IniDocument::parse(std::string_view text, std::string_view source) {
  IniDocument doc;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError(where + ": malformed section header");
      doc.add(trim(std::string_view(line).substr(1, line.size() - 2))).line = line_no;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    if (doc.sections_.empty()) throw ConfigError(where + ": key outside of any [section]");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    doc.sections_.back().entries.push_back({std::move(key), trim(std::string_view(line).substr(eq + 1)), line_no});
  }
  return doc;
}

IniSection& IniDocument::add(std::string name) {
  sections_.push_back({std::move(name), {}, 0});
  return sections_.back();
}

const IniSection* IniDocument::find(std::string_view name) const {
  for (const auto& s : sections_)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<const IniSection*> IniDocument::find_all(std::string_view name) const {
  std::vector<const IniSection*> out;
  for (const auto& s : sections_)
    if (s.name == name) out.push_back(&s);
  return out;
}

std::string IniDocument::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    if (i) out += "\n";
    out += "[" + sections_[i].name + "]\n";
    for (const auto& e : sections_[i].entries) out += e.key + " = " + e.value + "\n";
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

namespace {

double parse_plain(std::string_view text, std::string_view what) {
  const std::string s = trim(text);
  if (s.empty()) throw ConfigError("empty value for " + std::string(what));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ConfigError("invalid number '" + s + "' for " + std::string(what));
  }
  return v;
}

}  // namespace

double parse_real(std::string_view text, std::string_view what) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_plain(text, what);
  const double num = parse_plain(text.substr(0, slash), what);
  const double den = parse_plain(text.substr(slash + 1), what);
  if (den == 0.0) throw ConfigError("zero denominator in '" + std::string(text) + "' for " + std::string(what));
  return num / den;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("invalid non-negative integer '" + s + "' for " + std::string(what));
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("invalid boolean '" + s + "' for " + std::string(what));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace advms
