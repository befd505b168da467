#include "hdet/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hdet/bench.hpp"
#include "hdet/checkpoint.hpp"
#include "hdet/config_io.hpp"
#include "hdet/gradcheck.hpp"
#include "hdet/io.hpp"
#include "hdet/rng.hpp"

namespace hdet {

namespace {

// Training allocates and frees the same large activation buffers every step;
// keeping them in the heap avoids a page-fault storm from mmap/munmap.
void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

bench::BenchConfig read_config(const std::string& path) {
  bench::BenchConfig c;
  if (path.empty()) return c;
  Json j;
  try {
    j = Json::parse(io::read_text(path));
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigKeyError(path + ": config must be a JSON object");
  static const std::set<std::string> keys{"seed",     "num_samples", "train_fraction", "scene",
                                          "detector", "hybrid",      "train"};
  for (const auto& item : j.items())
    if (!keys.count(item.key())) throw ConfigKeyError(path + ": unknown key \"" + item.key() + "\"");
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("num_samples")) c.num_samples = j["num_samples"].get<std::size_t>();
    if (j.contains("train_fraction")) c.train_fraction = j["train_fraction"].get<double>();
    if (j.contains("scene")) j["scene"].get_to(c.scene);
    if (j.contains("detector")) j["detector"].get_to(c.detector);
    if (j.contains("hybrid")) j["hybrid"].get_to(c.hybrid);
    if (j.contains("train")) j["train"].get_to(c.train);
  } catch (const Json::exception& e) {
    throw ConfigKeyError(path + ": " + e.what());
  }
  return c;
}

Json metrics_json(const metrics::MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json per_class = Json::array();
  for (const auto& c : r.per_class)
    per_class.push_back({{"class_id", c.class_id},
                         {"num_gt", c.num_gt},
                         {"num_detections", c.num_detections},
                         {"ap50", opt(c.ap)},
                         {"tp", c.operating.tp},
                         {"fp", c.operating.fp},
                         {"fn", c.operating.fn}});
  return Json{{"map50", r.map50},
              {"precision", opt(r.precision)},
              {"recall", opt(r.recall)},
              {"f1", opt(r.f1)},
              {"tp", r.operating.tp},
              {"fp", r.operating.fp},
              {"fn", r.operating.fn},
              {"per_class", per_class}};
}

std::vector<data::Sample> load_or_generate(const std::string& data_dir, const bench::BenchConfig& c) {
  if (!data_dir.empty()) return data::load_dataset_dir(data_dir);
  return data::generate_synthetic(derive_seed(c.seed, 1), c.num_samples, c.scene);
}

int run_gen_data(const bench::BenchConfig& c, const std::string& out) {
  const auto samples = data::generate_synthetic(derive_seed(c.seed, 1), c.num_samples, c.scene);
  data::save_dataset_dir(out, samples);
  spdlog::info("wrote {} samples to {}", samples.size(), out);
  return kExitOk;
}

int run_train(const bench::BenchConfig& c, const std::string& data_dir, const std::string& out, bool hybrid) {
  auto [train_set, test_set] = data::split_dataset(load_or_generate(data_dir, c), c.train_fraction,
                                                   derive_seed(c.seed, 2));
  DetectorConfig detector = c.detector;
  detector.with_hybrid = hybrid;
  const auto hybrid_cfg = hybrid ? std::optional<HybridBlockConfig>(c.hybrid) : std::nullopt;
  Model model = build_model(detector, hybrid_cfg, derive_seed(c.seed, 3));
  TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, 4);
  TrainLog log = train(model, train_set, tc, [](std::size_t epoch, double loss) {
    if (epoch % 10 == 0) spdlog::info("epoch {}: loss {:.5f}", epoch, loss);
  });
  const Evaluation eval = evaluate(model, test_set, tc.conf_threshold);
  save_checkpoint(std::filesystem::path(out) / "checkpoint.bin", model);
  std::string csv = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) csv += fmt::format("{},{:.17g}\n", e + 1, log.epoch_loss[e]);
  io::write_atomic(std::filesystem::path(out) / "trainlog.csv", csv);
  Json result = metrics_json(eval.report);
  result["train_s"] = log.train_seconds;
  result["test_ms"] = eval.ms_per_image;
  result["flops"] = model.flops();
  result["params"] = model.parameter_count();
  std::cout << result.dump(2) << '\n';
  return kExitOk;
}

int run_eval(const bench::BenchConfig& c, const std::string& data_dir, const std::string& checkpoint,
             const std::string& out, double conf) {
  const Model model = load_checkpoint(checkpoint);
  const auto samples = load_or_generate(data_dir, c);
  const Evaluation eval = evaluate(model, samples, conf);
  Json result = metrics_json(eval.report);
  result["test_ms"] = eval.ms_per_image;
  if (!out.empty()) io::write_atomic(std::filesystem::path(out) / "metrics.json", result.dump(2) + "\n");
  std::cout << result.dump(2) << '\n';
  return kExitOk;
}

int run_bench(bench::BenchConfig c, const std::string& data_dir, const std::string& out, bool parallel) {
  c.data_dir = data_dir;
  c.out_dir = out;
  c.parallel_legs = parallel;
  const auto report = bench::run_benchmark(c, [](std::string_view leg, std::size_t epoch, double loss) {
    if (epoch % 10 == 0) spdlog::info("{} epoch {}: loss {:.5f}", leg, epoch, loss);
  });
  std::cout << bench::render_report(report, bench::ReportFormat::markdown);
  return kExitOk;
}

int run_gradcheck(std::size_t trials, std::uint64_t seed) {
  gradcheck::SuiteOptions opts;
  opts.trials = trials;
  opts.seed = seed;
  bool ok = true;
  for (const auto& e : gradcheck::run_suite(opts)) {
    std::cout << fmt::format("{:<32} {} trials={} checked={} skipped={} max_rel_err={:.3e}\n", e.name,
                             e.pass ? "PASS" : "FAIL", e.trials, e.checked, e.skipped, e.max_rel_err);
    ok = ok && e.pass;
  }
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  tune_allocator();
  if (!spdlog::get("hdet")) spdlog::set_default_logger(spdlog::stderr_color_st("hdet"));

  CLI::App app{"Hybrid pre-block detector workbench", "hdet"};
  app.require_subcommand(1);

  std::string config_path, out, data_dir, checkpoint;
  std::optional<std::uint64_t> seed;
  bool hybrid = false, parallel = false;
  double conf = 0.25;
  std::size_t count = 200, trials = 100;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed override");
  };

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (images/*.ppm, labels/*.txt)");
  add_common(gen);
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--count", count, "Number of samples");

  auto* tr = app.add_subcommand("train", "Train one model; writes checkpoint.bin and trainlog.csv");
  add_common(tr);
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--data", data_dir, "Dataset directory (synthetic when omitted)");
  tr->add_flag("--hybrid", hybrid, "Prepend the hybrid block");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "Dataset directory (synthetic when omitted)");
  ev->add_option("--out", out, "Directory for metrics.json");
  ev->add_option("--conf", conf, "Operating confidence threshold")->check(CLI::Range(0.0, 1.0));

  auto* be = app.add_subcommand("bench", "Train and compare hybrid and plain models");
  add_common(be);
  be->add_option("--out", out, "Output directory")->required();
  be->add_option("--data", data_dir, "Dataset directory (synthetic when omitted)");
  be->add_flag("--parallel", parallel, "Train both legs concurrently");

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--trials", trials, "Trials per check")->check(CLI::PositiveNumber);
  gc->add_option("--seed", seed, "Seed override");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (args.empty()) std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (gc->parsed()) return run_gradcheck(trials, seed.value_or(gradcheck::SuiteOptions{}.seed));
    bench::BenchConfig c = read_config(config_path);
    if (seed) c.seed = *seed;
    if (gen->parsed()) {
      if (gen->count("--count")) c.num_samples = count;
      return run_gen_data(c, out);
    }
    if (tr->parsed()) return run_train(c, data_dir, out, hybrid);
    if (ev->parsed()) return run_eval(c, data_dir, checkpoint, out, conf);
    if (be->parsed()) return run_bench(c, data_dir, out, parallel);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hdet
