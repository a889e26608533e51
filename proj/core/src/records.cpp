#include "cdgmae/records.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cdgmae/errors.hpp"
#include "cdgmae/tensor_io.hpp"

namespace cdgmae {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_number(double value) {
  if (value == 0.0) return "0";  // also folds -0
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string format_record(const Record& record) {
  std::string line;
  for (std::size_t i = 0; i < record.size(); ++i) {
    if (i) line += '\t';
    line += record[i].first;
    line += '=';
    line += record[i].second;
  }
  return line;
}

Record parse_record(const std::string& line) {
  Record record;
  std::istringstream is(line);
  std::string field;
  while (std::getline(is, field, '\t')) {
    if (field.empty()) continue;
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ContractError("malformed record field '" + field + "'");
    record.emplace_back(field.substr(0, eq), field.substr(eq + 1));
  }
  return record;
}

const std::string& record_field(const Record& record, const std::string& key) {
  for (const auto& [k, v] : record) {
    if (k == key) return v;
  }
  throw ContractError("record has no field '" + key + "'");
}

std::vector<Record> read_records(const std::filesystem::path& path) {
  std::istringstream is(read_text(path));
  std::vector<Record> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!trim(line).empty()) out.push_back(parse_record(line));
  }
  return out;
}

std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& origin) {
  std::vector<ConfigEntry> entries;
  std::istringstream is(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractError(origin + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    ConfigEntry entry{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (entry.key.empty()) throw ContractError(origin + ":" + std::to_string(line_no) + ": empty key");
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ConfigEntry> read_config_file(const std::filesystem::path& path) {
  return parse_config_text(read_text(path), path.string());
}

std::size_t parse_size_value(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ContractError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_double_value(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ContractError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

bool parse_bool_value(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ContractError("config key '" + key + "': expected true/false, got '" + value + "'");
}

}  // namespace cdgmae
