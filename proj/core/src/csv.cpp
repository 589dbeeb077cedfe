#include "lcnet/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "lcnet/error.hpp"

namespace lcnet::csv {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

namespace {

bool needs_quotes(const std::string& f) {
  return f.find_first_of(",\"\n\r") != std::string::npos;
}

void append_field(std::string& out, const std::string& f) {
  if (!needs_quotes(f)) {
    out += f;
    return;
  }
  out += '"';
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void append_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    append_field(out, row[i]);
  }
  out += '\n';
}

template <typename V>
V parse_number(const std::string& field, const char* what) {
  V v{};
  const char* end = field.data() + field.size();
  const auto r = std::from_chars(field.data(), end, v);
  if (field.empty() || r.ec != std::errc() || r.ptr != end) {
    throw DataError("CSV field '" + field + "' is not a valid " + what);
  }
  return v;
}

}  // namespace

std::string to_string(const Table& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) append_row(out, row);
  return out;
}

void write(const std::filesystem::path& file, const Table& table) {
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + file.string() + " for writing");
  f << to_string(table);
  if (!f) throw DataError("failed writing " + file.string());
}

Table parse(const std::string& text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw DataError("CSV text ends inside a quoted field");
  if (any) {
    row.push_back(std::move(field));
    lines.push_back(std::move(row));
  }
  if (lines.empty()) throw DataError("CSV text has no header");
  Table t;
  t.header = std::move(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() != t.header.size()) {
      throw DataError("CSV row " + std::to_string(i) + " has " + std::to_string(lines[i].size()) +
                      " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(lines[i]));
  }
  return t;
}

Table read(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw DataError("cannot open " + file.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

double parse_double(const std::string& field) { return parse_number<double>(field, "number"); }
std::int64_t parse_int(const std::string& field) {
  return parse_number<std::int64_t>(field, "integer");
}
std::uint64_t parse_uint(const std::string& field) {
  return parse_number<std::uint64_t>(field, "unsigned integer");
}

}  // namespace lcnet::csv
