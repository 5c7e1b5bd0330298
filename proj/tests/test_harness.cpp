#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spx/harness.hpp"

using namespace spx;
using namespace spx::harness;

namespace {

std::map<std::string, std::string> kv(const std::string& text) {
  std::istringstream in(text);
  return parse_kv(in);
}

TEST(Harness, ParseKeyValues) {
  auto m = kv("# topology\nprotocol = noixe\n\n  pattern=NK   # trailing\nclients = 2\r\n");
  EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(m["protocol"], "noixe");
  EXPECT_EQ(m["pattern"], "NK");
  EXPECT_EQ(m["clients"], "2");
  EXPECT_THROW(kv("no equals sign here\n"), Error);
}

TEST(Harness, SummarizeUsesSampleDeviation) {
  auto s = summarize({2, 4, 4, 4, 5, 5, 7, 9});
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_NEAR(s.stddev, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(s.n, 8u);
}

TEST(Harness, TablesCarrySchemaHeader) {
  Table t{"demo", {"a", "b"}, {{"1", "2"}}};
  std::ostringstream csv, md;
  t.write_csv(csv);
  t.write_markdown(md);
  EXPECT_EQ(csv.str(), "# spx-bench schema=1 kind=demo\na,b\n1,2\n");
  EXPECT_EQ(md.str(), "<!-- spx-bench schema=1 kind=demo -->\n| a | b |\n|---|---|\n| 1 | 2 |\n");
}

TEST(Harness, HandshakeBenchNeedsTwoRuns) {
  BenchOptions o;
  o.runs = 1;
  o.wall_clock = false;
  try {
    bench_handshake(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
}

TEST(Harness, SimulatedHandshakeBench) {
  BenchOptions o;
  o.runs = 2;
  o.wall_clock = false;
  auto t = bench_handshake(o);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[2][2], "SPX");
  EXPECT_EQ(t.rows[2][8], "1");
  EXPECT_EQ(t.rows[2][9], std::to_string(2 * 512 + 48));
  EXPECT_EQ(t.rows[0][9], "0");
}

TEST(Harness, OverheadTableAtConfiguredGrants) {
  auto t = overhead_table(128, 66);
  ASSERT_EQ(t.rows.size(), 6u);
  EXPECT_EQ(t.rows[0][0], "TLX");
  EXPECT_EQ(t.rows[0][3], "1152");
  for (std::size_t i = 1; i < 6; ++i) EXPECT_EQ(t.rows[i][3], "1090");
}

TEST(Harness, TopologyHonestSplitAndPassive) {
  for (auto router : {"honest", "split", "passive"}) {
    auto rep = run_topology(kv(std::string("protocol = noixe\npattern = IK\nrouter = ") + router + "\nbytes = 3000\n"));
    EXPECT_TRUE(rep.ok) << router << "\n" << rep.summary;
    EXPECT_NE(rep.summary.find("ok=yes"), std::string::npos);
  }
  auto passive = run_topology(kv("router = passive\n"));
  EXPECT_NE(passive.summary.find("session-key bytes: no"), std::string::npos);
}

TEST(Harness, TopologyAttacksAndTrace) {
  auto path = std::filesystem::temp_directory_path() / "spx_topology_trace.jsonl";
  std::filesystem::remove(path);
  auto spx = run_topology(kv("router = cuckoo\ntrace = " + path.string() + "\n"));
  EXPECT_TRUE(spx.ok);
  EXPECT_NE(spx.summary.find("outcome=AttackDefeated"), std::string::npos) << spx.summary;
  ASSERT_TRUE(std::filesystem::exists(path));
  std::ifstream f(path);
  std::string first;
  std::getline(f, first);
  EXPECT_EQ(first.rfind("{\"seq\":0", 0), 0u);
  std::filesystem::remove(path);

  auto straw = run_topology(kv("router = tocttou\nstrawman = true\n"));
  EXPECT_TRUE(straw.ok);
  EXPECT_NE(straw.summary.find("outcome=AttackSucceeded"), std::string::npos) << straw.summary;
}

TEST(Harness, TopologyRejectsUnknownKeys) {
  EXPECT_THROW(run_topology(kv("colour = blue\n")), Error);
  EXPECT_THROW(run_topology(kv("router = sideways\n")), Error);
  EXPECT_THROW(run_topology(kv("pattern = KK\n")), Error);
}

TEST(Harness, AttackTableCounts) {
  auto t = attack_table(net::AttackKind::Tocttou, false, 6, 1);
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& r : t.rows) {
    EXPECT_EQ(r[3], "6");
    EXPECT_EQ(r[4], "6");
    EXPECT_EQ(r[5], "0");
  }
}

}  // namespace
