#include <sstream>

#include <gtest/gtest.h>

#include "fdnet/io.hpp"

using namespace fdnet;

TEST(EdgeList, BinaryThreeCycle) {
  std::istringstream in("# triangle\n1\t2\n2\t3\n1\t3\n");
  const Graph g = io::read_edgelist(in, false);
  EXPECT_EQ(g.size(), 3u);
  const Eigen::MatrixXd a = g.adjacency_matrix();
  EXPECT_EQ(a.sum(), 6.0);
  EXPECT_EQ(a.trace(), 0.0);
}

TEST(EdgeList, MalformedLineReportsLineNumber) {
  std::istringstream in("1\t2\n2\tx\n");
  try {
    io::read_edgelist(in, false);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream short_line("1\t2\n\n3\n");
  EXPECT_THROW(io::read_edgelist(short_line, false), ParseError);
}

TEST(EdgeList, DuplicateAndNegativeAreDataErrors) {
  std::istringstream dup("1\t2\n2\t1\n");
  EXPECT_THROW(io::read_edgelist(dup, false), DataError);
  std::istringstream neg("1\t2\t-0.5\n");
  EXPECT_THROW(io::read_edgelist(neg, true), DataError);
}

TEST(EdgeList, WeightedRoundTripIsBitExact) {
  const Graph g(4, {{0, 1, 0.1}, {1, 3, 1.0 / 3.0}, {0, 2, 2.5e-17}});
  std::ostringstream out;
  io::write_edgelist(out, g, true, {"generated"});
  std::istringstream in(out.str());
  const Graph back = io::read_edgelist(in, true, 4);
  EXPECT_EQ(back.edges(), g.edges());
  std::ostringstream again;
  io::write_edgelist(again, back, true, {"generated"});
  EXPECT_EQ(again.str(), out.str());
}

TEST(Fcap, SingleFundEqualValue) {
  // fund, stock, shares, price, shares outstanding
  std::istringstream in("f1\t1\t10\t2\t100\nf1\t2\t20\t1\t200\n");
  const Graph g = io::read_fcap_holdings(in);
  ASSERT_EQ(g.edges().size(), 1u);
  // (10*2 + 20*1)/(100*2 + 200*1) = 0.1
  EXPECT_DOUBLE_EQ(g.edges()[0].weight, 40.0 / 400.0);
}

TEST(Fcap, FullOwnershipGivesOnePerFund) {
  // Holding all outstanding shares makes each term (S_i P_i + S_j P_j)/(S_i P_i + S_j P_j) = 1.
  std::istringstream one("f\t1\t100\t3\t100\nf\t2\t50\t4\t50\n");
  EXPECT_DOUBLE_EQ(io::read_fcap_holdings(one).edges()[0].weight, 1.0);
  std::istringstream two("f\t1\t50\t3\t100\nf\t2\t25\t4\t50\ng\t1\t50\t3\t100\ng\t2\t25\t4\t50\n");
  const double direct = 2.0 * (50.0 * 3 + 25.0 * 4) / (100.0 * 3 + 50.0 * 4);
  EXPECT_DOUBLE_EQ(io::read_fcap_holdings(two).edges()[0].weight, direct);
}

TEST(Fcap, TwoFundsFullyOverlapping) {
  std::istringstream in("a\t1\t100\t1\t100\na\t2\t100\t1\t100\nb\t1\t100\t1\t100\nb\t2\t100\t1\t100\n");
  EXPECT_DOUBLE_EQ(io::read_fcap_holdings(in).edges()[0].weight, 2.0);
}

TEST(Fcap, InconsistentStockDataRejected) {
  std::istringstream in("a\t1\t1\t1\t100\nb\t1\t1\t2\t100\n");
  EXPECT_THROW(io::read_fcap_holdings(in), DataError);
  std::istringstream fields("a\t1\t1\t1\n");
  EXPECT_THROW(io::read_fcap_holdings(fields), ParseError);
}

TEST(DenseCsv, RoundTrip) {
  Eigen::MatrixXd m(2, 3);
  m << 0.1, 1.0 / 3.0, -2e-300, 1e300, 0.0, 7.0;
  std::ostringstream out;
  io::write_dense_csv(out, m, {"x"});
  std::istringstream in(out.str());
  EXPECT_EQ(io::read_dense_csv(in), m);
}

TEST(Format, SeventeenDigits) {
  EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(io::format_double(2.0), "2");
  EXPECT_EQ(io::parse_double(io::format_double(1.0 / 3.0), 1), 1.0 / 3.0);
}

TEST(Schema, Names) {
  EXPECT_EQ(io::parse_schema("fcap"), io::EdgeSchema::fcap);
  EXPECT_THROW(io::parse_schema("nope"), ParameterError);
}
