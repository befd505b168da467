#include <gtest/gtest.h>

#include <filesystem>

#include <unistd.h>

#include "hdet/bench.hpp"
#include "hdet/io.hpp"

using namespace hdet;
using namespace hdet::bench;

namespace {

BenchConfig small_config() {
  BenchConfig c;
  c.num_samples = 16;
  c.scene.canvas = 32;
  c.scene.min_radius = 4;
  c.scene.max_radius = 6;
  c.detector.input_size = 32;
  c.detector.stem = {{8, 2}, {8, 2}, {8, 2}};
  c.hybrid.layers = {{{4, 3, 1}, {4, 3, 1}, {4, 3, 1}}};
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.seed = 31;
  return c;
}

BenchRow fixture_row() {
  BenchRow r;
  r.model = "hybrid";
  r.precision = 0.887;
  r.recall = 0.9;
  r.map50 = 0.932;
  r.train_s = 101 * 60.0;
  r.test_ms = 11.9;
  r.flops = 123456;
  r.params = 789;
  return r;
}

}  // namespace

TEST(Report, CsvFixtureRow) {
  BenchReport rep;
  rep.rows = {fixture_row()};
  EXPECT_EQ(render_report(rep, ReportFormat::csv),
            "model,precision,recall,map50,train_s,test_ms,flops,params\n"
            "hybrid,0.887,0.900,0.932,6060.000,11.900,123456,789\n");
}

TEST(Report, MarkdownFixtureRow) {
  BenchReport rep;
  rep.rows = {fixture_row()};
  rep.map50_delta = 0.026;
  const std::string md = render_report(rep, ReportFormat::markdown);
  EXPECT_NE(md.find("| hybrid | 0.887 | 0.900 | 0.932 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| hybrid | 101.0 | 11.9 | 123456 | 789 |"), std::string::npos) << md;
  EXPECT_NE(md.find("observed mAP@50 delta (hybrid - plain): +0.026"), std::string::npos);
}

TEST(Report, UndefinedRendersAsDash) {
  BenchReport rep;
  BenchRow r = fixture_row();
  r.precision.reset();
  rep.rows = {r};
  EXPECT_NE(render_report(rep, ReportFormat::csv).find("hybrid,—,0.900"), std::string::npos);
  EXPECT_NE(render_report(rep, ReportFormat::markdown).find("| hybrid | — |"), std::string::npos);
}

TEST(Report, ZeroRowsIsHeaderOnly) {
  EXPECT_EQ(render_report(BenchReport{}, ReportFormat::csv),
            "model,precision,recall,map50,train_s,test_ms,flops,params\n");
}

TEST(Report, CsvRoundTrip) {
  BenchReport rep;
  BenchRow a = fixture_row(), b = fixture_row();
  b.model = "plain";
  b.recall.reset();
  rep.rows = {a, b};
  auto rows = parse_report_csv(render_report(rep, ReportFormat::csv));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], a);
  EXPECT_EQ(rows[1], b);
  EXPECT_THROW(parse_report_csv("bad header\n"), std::invalid_argument);
  EXPECT_THROW(parse_report_csv("model,precision,recall,map50,train_s,test_ms,flops,params\nx,1,2\n"),
               std::invalid_argument);
}

TEST(Fingerprint, IgnoresOutputsButNotSeed) {
  BenchConfig a = small_config(), b = small_config();
  b.out_dir = "/somewhere";
  b.parallel_legs = true;
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  b.seed += 1;
  EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(Benchmark, StructureAndDeterminism) {
  const BenchConfig c = small_config();
  const BenchReport a = run_benchmark(c);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.rows[0].model, "hybrid");
  EXPECT_EQ(a.rows[1].model, "plain");
  EXPECT_GT(a.rows[0].flops, a.rows[1].flops);
  EXPECT_GT(a.rows[0].params, a.rows[1].params);

  const BenchReport b = run_benchmark(c);
  BenchConfig par = c;
  par.parallel_legs = true;
  const BenchReport p = run_benchmark(par);
  const auto csv = [](const BenchReport& r) { return render_report(without_timing(r), ReportFormat::csv); };
  const auto md = [](const BenchReport& r) { return render_report(without_timing(r), ReportFormat::markdown); };
  EXPECT_EQ(csv(a), csv(b));
  EXPECT_EQ(md(a), md(b));
  EXPECT_EQ(csv(a), csv(p));
}

TEST(Benchmark, WritesReportFiles) {
  BenchConfig c = small_config();
  c.out_dir = std::filesystem::temp_directory_path() / ("hdet-bench-" + std::to_string(::getpid()));
  std::filesystem::remove_all(c.out_dir);
  const BenchReport rep = run_benchmark(c);
  for (const char* f : {"report.csv", "report.md", "checkpoint-hybrid.bin", "checkpoint-plain.bin",
                        "trainlog-hybrid.csv", "trainlog-plain.csv"})
    EXPECT_TRUE(std::filesystem::exists(c.out_dir / f)) << f;
  EXPECT_EQ(parse_report_csv(io::read_text(c.out_dir / "report.csv")).size(), 2u);
  std::filesystem::remove_all(c.out_dir);
}

TEST(Benchmark, RejectsBadConfigs) {
  BenchConfig c = small_config();
  c.train_fraction = 1.0;
  EXPECT_THROW(run_benchmark(c), std::invalid_argument);
  c = small_config();
  c.num_samples = 1;
  EXPECT_THROW(run_benchmark(c), ConfigError);
  c = small_config();
  c.detector.num_classes = 1;  // generator emits class 1
  EXPECT_THROW(run_benchmark(c), ConfigError);
}
