#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "trialrisk/csv.hpp"

using namespace trialrisk;

TEST_CASE("rfc 4180 parsing") {
  const auto records = parse_csv_text("a,b,c\n1,\"x,y\",\"he said \"\"hi\"\"\"\n2,\"line\nbreak\",z\n");
  REQUIRE(records.size() == 3);
  CHECK(records[0] == std::vector<std::string>{"a", "b", "c"});
  CHECK(records[1][1] == "x,y");
  CHECK(records[1][2] == "he said \"hi\"");
  CHECK(records[2][1] == "line\nbreak");
}

TEST_CASE("crlf and missing trailing newline") {
  const auto records = parse_csv_text("a,b\r\n1,2\r\n3,4");
  REQUIRE(records.size() == 3);
  CHECK(records[2] == std::vector<std::string>{"3", "4"});
}

TEST_CASE("quote errors") {
  CHECK_THROWS_AS(parse_csv_text("a,b\n1,\"unterminated\n"), ParseError);
  CHECK_THROWS_AS(parse_csv_text("a,b\n1,mid\"quote\n"), ParseError);
}

TEST_CASE("quoting round trip") {
  const std::vector<std::string> fields = {"plain", "comma,inside", "quote\"inside", "line\nbreak", ""};
  const std::string path = "csv_roundtrip_test.csv";
  write_csv(path, fields, {fields});
  const CsvTable table = read_csv(path);
  CHECK(table.header == fields);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0] == fields);
  std::remove(path.c_str());
}
