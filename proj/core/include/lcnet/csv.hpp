#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lcnet::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Shortest representation that parses back to the same double.
std::string format_double(double v);

// Fields containing a comma, quote or newline are quoted. Lines end with '\n'.
std::string to_string(const Table& table);
void write(const std::filesystem::path& file, const Table& table);

// Every row must have as many fields as the header.
Table parse(const std::string& text);
Table read(const std::filesystem::path& file);

double parse_double(const std::string& field);
std::int64_t parse_int(const std::string& field);
std::uint64_t parse_uint(const std::string& field);

}  // namespace lcnet::csv
