#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "amc/io.hpp"

#include <sstream>

using namespace amc;

TEST_CASE("load_observed parses the coordinate format") {
  std::istringstream in("3 3 2\n1 1 5.0\n2 3 -1.5\n");
  ObservedMatrix obs = load_observed(in);
  CHECK(obs.n_rows() == 3);
  CHECK(obs.n_cols() == 3);
  CHECK(obs.size() == 2);
  CHECK(obs.at(0, 0) == 5.0);
  CHECK(obs.at(1, 2) == -1.5);
}

TEST_CASE("load_observed rejects malformed input with line numbers") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return load_observed(in, "test");
  };
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("3 3\n"), ParseError);               // short header
  CHECK_THROWS_AS(parse("2 2 1\n1 1 1.0 9\n"), ParseError);  // trailing token
  CHECK_THROWS_AS(parse("2 2 1\n1 x 1.0\n"), ParseError);    // bad number
  CHECK_THROWS_AS(parse("2 2 1\n3 1 1.0\n"), ParseError);    // out of bounds
  CHECK_THROWS_AS(parse("2 2 2\n1 1 1.0\n1 1 2.0\n"), ParseError);  // dup
  CHECK_THROWS_AS(parse("2 2 3\n1 1 1.0\n"), ParseError);  // count mismatch

  // The error message names the offending line.
  try {
    parse("2 2 1\n1 1 1.0\n2 2 4.0\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("test:") != std::string::npos);
  }
}

TEST_CASE("save_observed then load_observed is the identity") {
  ObservedMatrix obs(4, 5);
  obs.set(0, 0, 1.0 / 3.0);
  obs.set(3, 4, -2.718281828459045);
  obs.set(1, 2, 1e-300);
  std::ostringstream out;
  save_observed(out, obs);
  std::istringstream in(out.str());
  ObservedMatrix back = load_observed(in);
  CHECK(back.n_rows() == 4);
  CHECK(back.size() == 3);
  for (const auto& [pos, value] : obs.values())
    CHECK(back.at(pos.row, pos.col) == value);
}

TEST_CASE("save_dense formats a small matrix") {
  Matrix m = Matrix::Identity(2, 2);
  std::ostringstream out;
  save_dense(out, m);
  CHECK(out.str() == "1,0\n0,1\n");
}

TEST_CASE("dense round trip is bit-identical") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(5, 7);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) m(i, j) = gauss(rng);
  std::ostringstream out;
  save_dense(out, m);
  std::istringstream in(out.str());
  Matrix back = load_dense(in);
  CHECK(back == m);
}

TEST_CASE("load_dense rejects ragged and malformed rows") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return load_dense(in, "test");
  };
  CHECK_THROWS_AS(parse("1,2\n3\n"), ParseError);      // ragged
  CHECK_THROWS_AS(parse("1,zebra\n"), ParseError);     // malformed value
  CHECK_THROWS_AS(parse("1,2,\n"), ParseError);        // empty trailing cell
  CHECK_THROWS_AS(parse(""), ParseError);              // empty file
}

TEST_CASE("save_query_log layout") {
  std::vector<QueryRecord> log{{0, 1, 2.5}, {3, 0, -1.0}};
  std::ostringstream out;
  save_query_log(out, log);
  CHECK(out.str() ==
        "i,j,value,sequence_number\n"
        "1,2,2.5,1\n"
        "4,1,-1,2\n");
}
