#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cdgmae {

/// One line-delimited record: ordered key=value fields separated by tabs.
using Record = std::vector<std::pair<std::string, std::string>>;

/// Fixed six-significant-digit rendering used for every numeric output.
std::string format_number(double value);

std::string format_record(const Record& record);
Record parse_record(const std::string& line);
/// Field lookup; throws ContractError when absent.
const std::string& record_field(const Record& record, const std::string& key);

std::vector<Record> read_records(const std::filesystem::path& path);

/// One `key = value` assignment from a config file.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Malformed lines raise ContractError naming `origin` and the line number.
std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& origin);
std::vector<ConfigEntry> read_config_file(const std::filesystem::path& path);

/// Strict value parsers for config entries; ContractError names the key.
std::size_t parse_size_value(const std::string& key, const std::string& value);
double parse_double_value(const std::string& key, const std::string& value);
bool parse_bool_value(const std::string& key, const std::string& value);

}  // namespace cdgmae
