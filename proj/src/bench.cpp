#include "hdet/bench.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include "hdet/checkpoint.hpp"
#include "hdet/config_io.hpp"
#include "hdet/io.hpp"
#include "hdet/rng.hpp"

namespace hdet::bench {

namespace {

constexpr std::string_view kCsvHeader = "model,precision,recall,map50,train_s,test_ms,flops,params";
constexpr std::string_view kUndefined = "—";

struct Leg {
  std::string name;
  DetectorConfig detector;
  std::optional<HybridBlockConfig> hybrid;
  TrainConfig train;
  std::uint64_t init_seed = 0;
};

struct LegResult {
  BenchRow row;
  Model model;
  TrainLog log;
};

// The two legs may differ in with_hybrid (and the hybrid block it implies) only.
void check_legs(const Leg& hybrid, const Leg& plain) {
  DetectorConfig a = hybrid.detector, b = plain.detector;
  if (!a.with_hybrid || b.with_hybrid || !hybrid.hybrid || plain.hybrid)
    throw ConfigError("benchmark legs must be one hybrid and one plain model");
  a.with_hybrid = b.with_hybrid = false;
  if (!(a == b)) throw ConfigError("benchmark legs differ in detector configuration");
  if (!(hybrid.train == plain.train)) throw ConfigError("benchmark legs differ in training configuration");
  if (hybrid.init_seed != plain.init_seed) throw ConfigError("benchmark legs differ in initialization seed");
}

std::string format_fixed(std::optional<double> v, int decimals) {
  if (!v) return std::string(kUndefined);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
  return buf;
}

std::string format_signed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.3f", v);
  return buf;
}

std::string trainlog_csv(const TrainLog& log) {
  std::string out = "epoch,mean_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, log.epoch_loss[e]);
    out += buf;
  }
  return out;
}

LegResult run_leg(const Leg& leg, std::span<const data::Sample> train_set, std::span<const data::Sample> test_set,
                  const ProgressFn& progress) {
  Model model = build_model(leg.detector, leg.hybrid, leg.init_seed);
  TrainLog log = train(model, train_set, leg.train, [&](std::size_t epoch, double loss) {
    if (progress) progress(leg.name, epoch, loss);
  });
  const Evaluation eval = evaluate(model, test_set, leg.train.conf_threshold);
  log.test_ms_per_image = eval.ms_per_image;

  BenchRow row;
  row.model = leg.name;
  row.precision = eval.report.precision;
  row.recall = eval.report.recall;
  row.map50 = eval.report.map50;
  row.train_s = log.train_seconds;
  row.test_ms = eval.ms_per_image;
  row.flops = model.flops();
  row.params = model.parameter_count();
  return LegResult{row, std::move(model), std::move(log)};
}

std::optional<double> parse_optional(std::string_view field, std::size_t line) {
  if (field == kUndefined) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw std::invalid_argument("report line " + std::to_string(line) + ": bad number \"" + std::string(field) + "\"");
  return v;
}

}  // namespace

DetectorConfig BenchConfig::default_detector() {
  DetectorConfig d;
  d.num_classes = 2;  // circles and triangles
  return d;
}

void BenchConfig::validate() const {
  if (data_dir.empty()) {
    scene.validate();
    if (num_samples < 2) throw ConfigError("benchmark needs at least 2 samples");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  detector.validate();
  hybrid.validate();
  train.validate();
}

BenchReport without_timing(BenchReport report) {
  for (auto& r : report.rows) r.train_s = r.test_ms = 0.0;
  return report;
}

std::string fingerprint(const BenchConfig& c) {
  DetectorConfig detector = c.detector;
  detector.with_hybrid = false;
  const Json j{{"data_dir", c.data_dir.string()}, {"scene", c.scene},     {"num_samples", c.num_samples},
               {"train_fraction", c.train_fraction}, {"detector", detector}, {"hybrid", c.hybrid},
               {"train", c.train},                   {"seed", c.seed}};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

BenchReport run_benchmark(const BenchConfig& config, const ProgressFn& progress) {
  config.validate();

  std::vector<data::Sample> samples = config.data_dir.empty()
                                          ? data::generate_synthetic(derive_seed(config.seed, 1), config.num_samples,
                                                                     config.scene)
                                          : data::load_dataset_dir(config.data_dir);
  for (const auto& s : samples)
    for (const auto& g : s.labels)
      if (g.class_id >= config.detector.num_classes)
        throw ConfigError("dataset " + s.source_id + " has class " + std::to_string(g.class_id) +
                          " but the detector has " + std::to_string(config.detector.num_classes) + " classes");
  auto [train_set, test_set] = data::split_dataset(std::move(samples), config.train_fraction,
                                                   derive_seed(config.seed, 2));

  TrainConfig train = config.train;
  train.seed = derive_seed(config.seed, 4);
  Leg hybrid{"hybrid", config.detector, config.hybrid, train, derive_seed(config.seed, 3)};
  hybrid.detector.with_hybrid = true;
  Leg plain{"plain", config.detector, std::nullopt, train, derive_seed(config.seed, 3)};
  plain.detector.with_hybrid = false;
  check_legs(hybrid, plain);

  std::optional<LegResult> h, p;
  if (config.parallel_legs) {
    auto future = std::async(std::launch::async, [&] { return run_leg(plain, train_set, test_set, progress); });
    h.emplace(run_leg(hybrid, train_set, test_set, progress));
    p.emplace(future.get());
  } else {
    h.emplace(run_leg(hybrid, train_set, test_set, progress));
    p.emplace(run_leg(plain, train_set, test_set, progress));
  }
  if (!(h->row.flops > p->row.flops && h->row.params > p->row.params))
    throw std::logic_error("hybrid model is not strictly more expensive than the plain model");

  BenchReport report;
  report.rows = {h->row, p->row};
  report.fingerprint = fingerprint(config);
  report.seed = config.seed;
  if (h->row.map50 && p->row.map50) report.map50_delta = *h->row.map50 - *p->row.map50;

  if (!config.out_dir.empty()) {
    for (const LegResult* leg : {&*h, &*p}) {
      save_checkpoint(config.out_dir / ("checkpoint-" + leg->row.model + ".bin"), leg->model);
      io::write_atomic(config.out_dir / ("trainlog-" + leg->row.model + ".csv"), trainlog_csv(leg->log));
    }
    if (config.write_csv) io::write_atomic(config.out_dir / "report.csv", render_report(report, ReportFormat::csv));
    if (config.write_markdown)
      io::write_atomic(config.out_dir / "report.md", render_report(report, ReportFormat::markdown));
  }
  return report;
}

std::string render_report(const BenchReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << kCsvHeader << '\n';
    for (const auto& r : report.rows)
      out << r.model << ',' << format_fixed(r.precision, 3) << ',' << format_fixed(r.recall, 3) << ','
          << format_fixed(r.map50, 3) << ',' << format_fixed(r.train_s, 3) << ',' << format_fixed(r.test_ms, 3) << ','
          << r.flops << ',' << r.params << '\n';
    return out.str();
  }

  out << "# Hybrid vs plain detector\n\n";
  out << "One detector stand-in is benchmarked with and without the hybrid pre-block; "
         "comparing detector generations is out of scope.\n\n";
  out << "- seed: " << report.seed << "\n";
  out << "- config fingerprint: `" << report.fingerprint << "`\n";
  out << "- observed mAP@50 delta (hybrid - plain): "
      << (report.map50_delta ? format_signed(*report.map50_delta) : std::string(kUndefined))
      << " (recorded, not asserted: score ordering depends on the dataset; only the FLOP and "
         "parameter ordering is checked)\n\n";

  out << "## Scores\n\n| Model | Precision | Recall | mAP@50 |\n|---|---|---|---|\n";
  for (const auto& r : report.rows)
    out << "| " << r.model << " | " << format_fixed(r.precision, 3) << " | " << format_fixed(r.recall, 3) << " | "
        << format_fixed(r.map50, 3) << " |\n";
  out << "\n## Times and cost\n\n"
         "| Model | Training time (min) | Testing time (ms) | FLOPs/image | Parameters |\n|---|---|---|---|---|\n";
  for (const auto& r : report.rows)
    out << "| " << r.model << " | " << format_fixed(r.train_s / 60.0, 1) << " | " << format_fixed(r.test_ms, 1)
        << " | " << r.flops << " | " << r.params << " |\n";
  return out.str();
}

std::vector<BenchRow> parse_report_csv(std::string_view text) {
  std::vector<BenchRow> rows;
  std::size_t pos = 0, line = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view row_text = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    if (line == 1) {
      if (row_text != kCsvHeader) throw std::invalid_argument("report CSV has an unexpected header");
      continue;
    }
    if (row_text.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t s = 0;
    for (;;) {
      const std::size_t c = row_text.find(',', s);
      f.push_back(row_text.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
      if (c == std::string_view::npos) break;
      s = c + 1;
    }
    if (f.size() != 8) throw std::invalid_argument("report line " + std::to_string(line) + ": expected 8 fields");
    BenchRow r;
    r.model = std::string(f[0]);
    r.precision = parse_optional(f[1], line);
    r.recall = parse_optional(f[2], line);
    r.map50 = parse_optional(f[3], line);
    r.train_s = parse_optional(f[4], line).value_or(0.0);
    r.test_ms = parse_optional(f[5], line).value_or(0.0);
    auto parse_int = [&](std::string_view v, auto& out) {
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size())
        throw std::invalid_argument("report line " + std::to_string(line) + ": bad integer");
    };
    parse_int(f[6], r.flops);
    parse_int(f[7], r.params);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace hdet::bench
