#include <gtest/gtest.h>

#include <cstdlib>

#include "spamdam/report.hpp"
#include "support.hpp"

using namespace spamdam::report;
using testing_support::read_file;
using testing_support::TempDir;

TEST(Table, CsvQuotingAndNulls) {
  Table t{{"name", "value"}, {}};
  t.add({"plain", 1});
  t.add({"has,comma", 0.5});
  t.add({"say \"hi\"", nullptr});
  EXPECT_EQ(to_csv(t), "name,value\nplain,1\n\"has,comma\",0.5\n\"say \"\"hi\"\"\",\n");
  EXPECT_THROW(t.add({"short"}), ReportError);
}

TEST(Table, Json) {
  Table t{{"a", "b"}, {}};
  t.add({1, "x"});
  EXPECT_EQ(to_json(t).dump(), R"({"columns":["a","b"],"rows":[{"a":1,"b":"x"}]})");
}

TEST(Write, LayoutAndAtomicity) {
  TempDir tmp("report");
  Table t{{"k"}, {}};
  t.add({42});
  const auto dir = write_report(tmp.path(), "exp", "run1", {{"seed", 3}}, t);
  EXPECT_EQ(dir, tmp.path() / "exp" / "run1");
  EXPECT_EQ(read_file((dir / "table.csv").string()), "k\n42\n");
  EXPECT_EQ(read_file((dir / "config.json").string()), "{\n  \"seed\": 3\n}\n");
  EXPECT_FALSE(std::filesystem::exists(dir / "table.csv.tmp"));
  // rewriting replaces the file
  t.rows[0][0] = 7;
  write_report(tmp.path(), "exp", "run1", {{"seed", 3}}, t);
  EXPECT_EQ(read_file((dir / "table.csv").string()), "k\n7\n");
  EXPECT_THROW(write_report(tmp.path(), "exp", "a/b", {}, t), ReportError);
  EXPECT_THROW(write_report(tmp.path(), "", "r", {}, t), ReportError);
}

TEST(Root, FlagThenEnvironmentThenDefault) {
  ::setenv("SPAMDAM_REPORT_DIR", "/tmp/from-env", 1);
  EXPECT_EQ(report_root("flag"), "flag");
  EXPECT_EQ(report_root(), "/tmp/from-env");
  ::unsetenv("SPAMDAM_REPORT_DIR");
  EXPECT_EQ(report_root(), "reports");
}

TEST(RunId, Format) {
  const auto id = utc_run_id();
  ASSERT_EQ(id.size(), 16u);
  EXPECT_EQ(id[8], 'T');
  EXPECT_EQ(id.back(), 'Z');
}
