// sisr3d: phantom -> degrade -> train -> eval -> compare.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "sisr3d/bench.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> scale;
  std::optional<std::string> upsample;
  std::optional<std::string> arch;
  std::optional<std::string> out;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::optional<std::string> resume;
  std::optional<std::string> baseline;
  std::vector<std::string> candidates;
  std::optional<int> count;
  std::optional<int> threads;
  std::optional<std::int64_t> steps;
  std::optional<std::string> source;
  bool force = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment config file (key = value lines)");
  cmd->add_option("--set", f.sets, "override a config key, key=value (repeatable)");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--force", f.force, "write into a non-empty output directory");
  cmd->add_option("--threads", f.threads, "worker threads for per-volume work")->check(CLI::PositiveNumber);
}

sisr3d::ExperimentConfig resolve(const Flags& f) {
  sisr3d::ExperimentConfig cfg;
  if (!f.config.empty()) cfg.load_file(f.config);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw sisr3d::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.apply("seed", std::to_string(*f.seed));
  if (f.scale) cfg.apply("scale", std::to_string(*f.scale));
  if (f.upsample) cfg.apply("upsample", *f.upsample);
  if (f.arch) cfg.apply("arch", *f.arch);
  if (f.out) cfg.out = *f.out;
  if (f.data) cfg.data = *f.data;
  if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
  if (f.resume) cfg.resume = *f.resume;
  if (f.baseline) cfg.baseline = *f.baseline;
  if (!f.candidates.empty()) cfg.candidates.assign(f.candidates.begin(), f.candidates.end());
  if (f.count) cfg.phantom.count = *f.count;
  if (f.threads) cfg.threads = *f.threads;
  if (f.steps) cfg.apply("steps", std::to_string(*f.steps));
  if (f.source) cfg.apply("eval_source", *f.source);
  if (f.force) cfg.force = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D CT slice super-resolution benchmark"};
  app.require_subcommand(1);
  Flags f;

  auto* phantom = app.add_subcommand("phantom", "write seeded synthetic CT volumes");
  add_common(phantom, f);
  phantom->add_option("-n,--count", f.count, "number of volumes");

  auto* degrade = app.add_subcommand("degrade", "make LR/HR pairs by axial decimation");
  add_common(degrade, f);
  degrade->add_option("--data", f.data, "phantom dataset directory");
  degrade->add_option("--scale", f.scale, "axial scale factor (2, 4 or 8)");
  degrade->add_option("--upsample", f.upsample, "trilinear | insert")
      ->check(CLI::IsMember({"trilinear", "insert"}));

  auto* train = app.add_subcommand("train", "train one architecture on a paired dataset");
  add_common(train, f);
  train->add_option("--data", f.data, "paired dataset directory");
  train->add_option("--arch", f.arch, "plain | ae-maxpool | ae-conv | unet")
      ->check(CLI::IsMember({"plain", "ae-maxpool", "ae-conv", "unet"}));
  train->add_option("--steps", f.steps, "optimizer steps");
  train->add_option("--resume", f.resume, "checkpoint base path to start from");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  add_common(eval, f);
  eval->add_option("--data", f.data, "paired dataset directory");
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint base path (without extension)");
  eval->add_option("--arch", f.arch, "expected architecture")
      ->check(CLI::IsMember({"plain", "ae-maxpool", "ae-conv", "unet"}));
  eval->add_option("--source", f.source, "model | lr | hr")->check(CLI::IsMember({"model", "lr", "hr"}));

  auto* compare = app.add_subcommand("compare", "significance tests and Markdown tables");
  add_common(compare, f);
  compare->add_option("--baseline", f.baseline, "baseline eval directory");
  compare->add_option("--candidate", f.candidates, "candidate eval directory (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const sisr3d::ExperimentConfig cfg = resolve(f);
    if (phantom->parsed()) {
      const auto m = sisr3d::cmd_phantom(cfg);
      std::cout << "wrote " << m.volumes.size() << " volumes to " << cfg.out.string() << "\n";
    } else if (degrade->parsed()) {
      const auto s = sisr3d::cmd_degrade(cfg);
      std::cout << "wrote " << s.manifest.volumes.size() << " LR/HR pairs to " << cfg.out.string() << "\n";
    } else if (train->parsed()) {
      const auto s = sisr3d::cmd_train(cfg);
      std::cout << "parameters " << s.parameters << "\n";
      if (!s.losses.empty())
        std::cout << "initial training loss " << s.losses.front() << "\nfinal training loss " << s.losses.back()
                  << "\n";
      std::cout << "checkpoint " << s.checkpoint.string() << "\n";
    } else if (eval->parsed()) {
      const auto r = sisr3d::cmd_eval(cfg);
      std::cout << "PSNR " << sisr3d::detail::fmt_cell(r.psnr(), 2) << "  SSIM "
                << sisr3d::detail::fmt_cell(r.ssim(), 4) << "  RMSE " << sisr3d::detail::fmt_cell(r.rmse(), 2)
                << "\n";
    } else if (compare->parsed()) {
      std::cout << sisr3d::cmd_compare(cfg).markdown;
    }
  } catch (const sisr3d::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sisr3d::ArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sisr3d::IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sisr3d::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sisr3d::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
