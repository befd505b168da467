#pragma once

// Hybrid vs plain A/B harness.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hdet/data.hpp"
#include "hdet/detector.hpp"
#include "hdet/training.hpp"

namespace hdet::bench {

struct BenchConfig {
  /// Dataset directory; the synthetic generator is used when empty.
  std::filesystem::path data_dir;
  data::SceneSpec scene;
  std::size_t num_samples = 200;
  double train_fraction = 0.8;

  DetectorConfig detector = default_detector();  // with_hybrid is set per leg
  HybridBlockConfig hybrid;
  TrainConfig train;
  /// Drives data generation, the split, model initialization and training.
  std::uint64_t seed = 2024;

  /// Nothing is written when empty.
  std::filesystem::path out_dir;
  bool write_csv = true;
  bool write_markdown = true;
  /// Train the two legs concurrently; results match the sequential run.
  bool parallel_legs = false;

  static DetectorConfig default_detector();
  void validate() const;
};

struct BenchRow {
  std::string model;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> map50;
  double train_s = 0.0;
  double test_ms = 0.0;
  std::uint64_t flops = 0;
  std::size_t params = 0;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct BenchReport {
  std::vector<BenchRow> rows;  // hybrid first, then plain
  std::string fingerprint;     // hash of every result-affecting config field
  std::uint64_t seed = 0;
  /// hybrid minus plain mAP@50, observed only.
  std::optional<double> map50_delta;
};

/// Copy with training and testing times zeroed.
BenchReport without_timing(BenchReport report);

/// Hex digest of the canonical JSON of the result-affecting fields.
std::string fingerprint(const BenchConfig& config);

using ProgressFn = std::function<void(std::string_view leg, std::size_t epoch, double loss)>;

/// Builds both models from the same seed, trains them on the same split,
/// evaluates on the same held-out samples and writes the report files into
/// out_dir when it is set.
BenchReport run_benchmark(const BenchConfig& config, const ProgressFn& progress = {});

enum class ReportFormat { csv, markdown };

std::string render_report(const BenchReport& report, ReportFormat format);

/// Reads the rows back from render_report's CSV.
std::vector<BenchRow> parse_report_csv(std::string_view text);

}  // namespace hdet::bench
