#pragma once

// RFC 4180 reader/writer. Quoted fields may contain commas, doubled
// quotes and embedded line breaks; CRLF and LF records are both accepted.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "trialrisk/common.hpp"

namespace trialrisk {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // data records, header excluded
};

inline std::vector<std::vector<std::string>> parse_csv_text(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool record_has_content = false;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    record_has_content = false;
  };
  while (i < n) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field.push_back(c);
        ++i;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw ParseError("csv: stray quote inside unquoted field at record " +
                           std::to_string(records.size() + 1));
        }
        in_quotes = true;
        field_was_quoted = true;
        record_has_content = true;
        ++i;
        break;
      case ',':
        end_field();
        record_has_content = true;
        ++i;
        break;
      case '\r':
        if (i + 1 < n && text[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        // blank lines carry no record
        if (record_has_content || !record.empty()) end_record();
        ++i;
        break;
      default:
        field.push_back(c);
        record_has_content = true;
        ++i;
        break;
    }
  }
  if (in_quotes) {
    throw ParseError("csv: unterminated quoted field at record " +
                     std::to_string(records.size() + 1));
  }
  if (record_has_content || !record.empty()) end_record();
  return records;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("csv: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  auto records = parse_csv_text(buf.str());
  if (records.empty()) throw ParseError("csv: " + path + " has no header row");
  CsvTable table;
  table.header = std::move(records.front());
  table.rows.assign(std::make_move_iterator(records.begin() + 1),
                    std::make_move_iterator(records.end()));
  return table;
}

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.put(',');
    out << csv_quote(fields[i]);
  }
  out.put('\n');
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("csv: cannot write " + path);
  write_csv_row(out, header);
  for (const auto& row : rows) write_csv_row(out, row);
  if (!out) throw IoError("csv: write failed for " + path);
}

}  // namespace trialrisk
