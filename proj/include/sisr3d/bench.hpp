#pragma once

// Experiment configuration and the pipeline commands behind the CLI:
// phantom -> degrade -> train -> eval -> compare.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sisr3d/degrade.hpp"
#include "sisr3d/metrics.hpp"
#include "sisr3d/stats.hpp"
#include "sisr3d/train.hpp"
#include "sisr3d/voxio.hpp"
#include "sisr3d/zoo.hpp"

namespace sisr3d {

namespace fs = std::filesystem;

struct PhantomSpec {
  int count = 6;
  Dims3 dims{64, 64, 64};
  PhantomKind complexity = PhantomKind::spheres;
};

inline PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "flat") return PhantomKind::flat;
  if (s == "spheres") return PhantomKind::spheres;
  if (s == "shepp_like") return PhantomKind::shepp_like;
  throw ConfigError("unknown phantom complexity '" + s + "' (expected flat|spheres|shepp_like)");
}

inline std::string to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::flat: return "flat";
    case PhantomKind::spheres: return "spheres";
    case PhantomKind::shepp_like: return "shepp_like";
  }
  return "flat";
}

inline UpsampleMode parse_upsample(const std::string& s) {
  if (s == "trilinear") return UpsampleMode::trilinear;
  if (s == "insert" || s == "same_insertion") return UpsampleMode::same_insertion;
  throw ConfigError("unknown upsample mode '" + s + "' (expected trilinear|insert)");
}

// What cmd_eval scores against the ground truth: the network output, the
// degraded input itself, or the ground truth (a sanity check).
enum class EvalSource { model, lr, hr };

// Declarative experiment description. Text form: one `key = value` per line,
// `#` starts a comment. Keys are listed in apply() and in the README.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  ArchConfig arch;
  bool arch_set = false;
  DegradeSpec degrade;
  bool pre_downsample = false;
  TrainConfig train;
  PhantomSpec phantom;
  int test_count = 6;
  EvalSource eval_source = EvalSource::model;
  fs::path data;
  fs::path out;
  fs::path checkpoint;
  fs::path resume;
  fs::path baseline;
  std::vector<fs::path> candidates;
  bool force = false;
  int threads = 1;
  int timing_repeats = 5;

  void apply(const std::string& key_in, const std::string& value_in) {
    const std::string key = detail::trim(key_in), value = detail::trim(value_in);
    try {
      if (key == "seed") {
        seed = std::stoull(value);
        train.seed = seed;
      } else if (key == "arch") {
        arch.arch = parse_arch(value);
        arch_set = true;
      } else if (key == "plain_width") {
        arch.plain_width = std::stoi(value);
      } else if (key == "ae_widths") {
        arch.ae_widths.clear();
        for (const auto& t : detail::split(value, ',')) arch.ae_widths.push_back(std::stoi(t));
      } else if (key == "unet_base") {
        arch.unet_base = std::stoi(value);
      } else if (key == "unet_levels") {
        arch.unet_levels = std::stoi(value);
      } else if (key == "scale") {
        degrade.scale = std::stoi(value);
      } else if (key == "upsample") {
        degrade.upsample_mode = parse_upsample(value);
      } else if (key == "pre_downsample") {
        pre_downsample = parse_bool(value);
      } else if (key == "patch") {
        train.patch_dims = parse_dims(value);
      } else if (key == "steps") {
        train.steps = std::stoll(value);
      } else if (key == "batch_size") {
        train.batch_size = std::stoi(value);
      } else if (key == "learning_rate") {
        train.learning_rate = std::stod(value);
      } else if (key == "beta1") {
        train.beta1 = std::stod(value);
      } else if (key == "beta2") {
        train.beta2 = std::stod(value);
      } else if (key == "epsilon") {
        train.epsilon = std::stod(value);
      } else if (key == "phantom_count") {
        phantom.count = std::stoi(value);
      } else if (key == "phantom_dims") {
        phantom.dims = parse_dims(value);
      } else if (key == "phantom_complexity") {
        phantom.complexity = parse_phantom_kind(value);
      } else if (key == "test_count") {
        test_count = std::stoi(value);
      } else if (key == "eval_source") {
        if (value == "model") eval_source = EvalSource::model;
        else if (value == "lr") eval_source = EvalSource::lr;
        else if (value == "hr") eval_source = EvalSource::hr;
        else throw ConfigError("eval_source must be model|lr|hr");
      } else if (key == "data") {
        data = value;
      } else if (key == "out") {
        out = value;
      } else if (key == "checkpoint") {
        checkpoint = value;
      } else if (key == "resume") {
        resume = value;
      } else if (key == "baseline") {
        baseline = value;
      } else if (key == "candidates") {
        candidates.clear();
        for (const auto& t : detail::split(value, ','))
          if (!detail::trim(t).empty()) candidates.emplace_back(detail::trim(t));
      } else if (key == "force") {
        force = parse_bool(value);
      } else if (key == "threads") {
        threads = std::stoi(value);
      } else if (key == "timing_repeats") {
        timing_repeats = std::stoi(value);
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    } catch (const std::logic_error&) {
      throw ConfigError("invalid value '" + value + "' for config key '" + key + "'");
    }
  }

  void load_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      apply(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  // Static checks that need no data on disk.
  void validate() const {
    try {
      degrade.validate();
      train.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (test_count < 1) throw ConfigError("test_count must be at least 1");
  }

  static Dims3 parse_dims(const std::string& v) {
    const auto p = detail::split(v, ',');
    if (p.size() == 1) {
      const auto s = std::stoll(p[0]);
      return {s, s, s};
    }
    if (p.size() != 3) throw ConfigError("dims need one or three comma-separated values");
    return {std::stoll(p[0]), std::stoll(p[1]), std::stoll(p[2])};
  }

  static bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
  }
};

// ---------------------------------------------------------------------------
// Dataset manifests: key=value header lines plus ordered `volume=<id>` lines.

struct DatasetManifest {
  std::map<std::string, std::string> fields;
  std::vector<std::string> volumes;

  void write(const fs::path& dir) const {
    std::ofstream os(dir / "manifest.txt", std::ios::trunc);
    if (!os) throw IoError("cannot write manifest in " + dir.string());
    for (const auto& [k, v] : fields) os << k << "=" << v << "\n";
    for (const auto& v : volumes) os << "volume=" << v << "\n";
  }

  static DatasetManifest read(const fs::path& dir) {
    std::ifstream is(dir / "manifest.txt");
    if (!is) throw IoError("no dataset manifest in " + dir.string());
    DatasetManifest m;
    std::string line;
    while (std::getline(is, line)) {
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("malformed manifest line: " + line);
      const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
      if (k == "volume") m.volumes.push_back(v);
      else m.fields[k] = v;
    }
    return m;
  }

  std::string get(const std::string& key) const {
    const auto it = fields.find(key);
    if (it == fields.end()) throw FormatError("manifest lacks field '" + key + "'");
    return it->second;
  }
};

namespace detail {

inline void prepare_out_dir(const fs::path& out, bool force) {
  if (out.empty()) throw ConfigError("no output directory given (--out)");
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw ConfigError(out.string() + " exists and is not a directory");
    if (!fs::is_empty(out) && !force)
      throw ConfigError("output directory " + out.string() + " is not empty (use --force)");
  }
  fs::create_directories(out);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots so output does not depend on scheduling.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline Split split_volumes(const DatasetManifest& m, int test_count) {
  const auto n = static_cast<int>(m.volumes.size());
  if (n <= test_count)
    throw ConfigError("dataset has " + std::to_string(n) + " volumes; test_count " + std::to_string(test_count) +
                      " leaves nothing to train on");
  Split s;
  s.train.assign(m.volumes.begin(), m.volumes.end() - test_count);
  s.test.assign(m.volumes.end() - test_count, m.volumes.end());
  return s;
}

inline LrHrPair load_pair(const fs::path& dir, const std::string& id) {
  return {load_volume(dir / ("lr_" + id)), load_volume(dir / ("hr_" + id))};
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline DatasetManifest cmd_phantom(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.phantom.count < 1) throw ConfigError("phantom_count must be at least 1");
  const Dims3 d = cfg.phantom.dims;
  if (d.d < 8 || d.h < 8 || d.w < 8) throw ConfigError("phantom_dims must be at least 8 per axis");
  detail::prepare_out_dir(cfg.out, cfg.force);
  DatasetManifest m;
  m.fields = {{"kind", "phantom"},
              {"seed", std::to_string(cfg.seed)},
              {"count", std::to_string(cfg.phantom.count)},
              {"dims", to_string(d)},
              {"complexity", to_string(cfg.phantom.complexity)}};
  for (int i = 0; i < cfg.phantom.count; ++i) {
    std::ostringstream id;
    id << "vol_" << std::setw(4) << std::setfill('0') << i;
    m.volumes.push_back(id.str());
  }
  detail::parallel_for(m.volumes.size(), cfg.threads, [&](std::size_t i) {
    save_volume(generate_phantom(detail::mix_seed(cfg.seed, i), d, cfg.phantom.complexity), cfg.out / m.volumes[i]);
  });
  m.write(cfg.out);
  return m;
}

struct DegradeSummary {
  DatasetManifest manifest;
  std::vector<std::string> failures;
};

inline DegradeSummary cmd_degrade(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.data.empty()) throw ConfigError("no input dataset given (data)");
  const DatasetManifest src = DatasetManifest::read(cfg.data);
  detail::prepare_out_dir(cfg.out, cfg.force);
  const Dims3 patch = cfg.train.patch_dims;
  DegradeSpec spec = cfg.degrade;
  spec.patch_multiple = patch.d;

  std::vector<std::string> errors(src.volumes.size());
  detail::parallel_for(src.volumes.size(), cfg.threads, [&](std::size_t i) {
    const std::string& id = src.volumes[i];
    try {
      Volume v = load_volume(cfg.data / id);
      if (cfg.pre_downsample) v = pre_downsample_inplane(v);
      if (v.dims().h % patch.h != 0 || v.dims().w % patch.w != 0)
        throw ArgumentError("in-plane dims " + std::to_string(v.dims().h) + "x" + std::to_string(v.dims().w) +
                            " not divisible by patch " + to_string(patch));
      const LrHrPair pair = make_lr_hr_pair(v, spec);
      save_volume(pair.lr, cfg.out / ("lr_" + id));
      save_volume(pair.hr, cfg.out / ("hr_" + id));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  DegradeSummary s;
  s.manifest.fields = {{"kind", "paired"},
                       {"source", cfg.data.string()},
                       {"scale", std::to_string(spec.scale)},
                       {"upsample", to_string(spec.upsample_mode)},
                       {"patch_multiple", std::to_string(std::lcm<std::int64_t>(spec.scale, spec.patch_multiple))},
                       {"pre_downsample", cfg.pre_downsample ? "true" : "false"}};
  for (std::size_t i = 0; i < src.volumes.size(); ++i) {
    if (errors[i].empty()) s.manifest.volumes.push_back(src.volumes[i]);
    else s.failures.push_back(src.volumes[i] + ": " + errors[i]);
  }
  s.manifest.write(cfg.out);
  if (!s.failures.empty()) {
    std::string msg = "degradation failed for " + std::to_string(s.failures.size()) + " volume(s):";
    for (const auto& f : s.failures) msg += "\n  " + f;
    throw DataError(msg);
  }
  return s;
}

struct TrainSummary {
  std::vector<double> losses;
  std::int64_t parameters = 0;
  fs::path checkpoint;
};

inline TrainSummary cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  ModelGraph model;
  try {
    model = build_model(cfg.arch, cfg.seed);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  const Dims3 p = cfg.train.patch_dims;
  const std::int64_t k = model.divisor();
  if (p.d % k || p.h % k || p.w % k)
    throw ConfigError("patch " + to_string(p) + " is not divisible by " + std::to_string(k) + " as " +
                      to_string(model.arch()) + " requires");
  if (cfg.data.empty()) throw ConfigError("no paired dataset given (data)");
  const DatasetManifest m = DatasetManifest::read(cfg.data);
  if (m.fields.count("kind") && m.get("kind") != "paired")
    throw DataError(cfg.data.string() + " is not a paired (degraded) dataset");
  const auto split = detail::split_volumes(m, cfg.test_count);
  detail::prepare_out_dir(cfg.out, cfg.force);

  std::vector<LrHrPair> pairs(split.train.size());
  detail::parallel_for(pairs.size(), cfg.threads,
                       [&](std::size_t i) { pairs[i] = detail::load_pair(cfg.data, split.train[i]); });
  std::vector<PatchPair> dataset;
  try {
    dataset = make_patch_dataset(pairs, p);
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
  if (!cfg.resume.empty()) checkpoint_load_into(model, cfg.resume);

  AdamState state;
  TrainSummary s;
  s.losses = train_epoch(model, dataset, cfg.train, state);
  s.parameters = param_count(model);
  s.checkpoint = cfg.out / "model";
  checkpoint_save(model, s.checkpoint);
  write_loss_csv(s.losses, cfg.out / "loss.csv");
  return s;
}

struct EvalMeta {
  std::string arch = "none";
  std::string source = "model";
  fs::path checkpoint;
  fs::path data;
  int scale = 0;
  std::string upsample;
  Dims3 patch{};

  void write(const fs::path& dir) const {
    std::ofstream os(dir / "eval.meta", std::ios::trunc);
    if (!os) throw IoError("cannot write eval.meta in " + dir.string());
    os << "arch=" << arch << "\nsource=" << source << "\ncheckpoint=" << checkpoint.string()
       << "\ndata=" << data.string() << "\nscale=" << scale << "\nupsample=" << upsample
       << "\npatch=" << to_string(patch) << "\n";
  }

  static EvalMeta read(const fs::path& dir) {
    std::ifstream is(dir / "eval.meta");
    if (!is) throw IoError("no eval.meta in " + dir.string());
    EvalMeta m;
    std::string line;
    try {
      while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "arch") m.arch = v;
        else if (k == "source") m.source = v;
        else if (k == "checkpoint") m.checkpoint = v;
        else if (k == "data") m.data = v;
        else if (k == "scale") m.scale = std::stoi(v);
        else if (k == "upsample") m.upsample = v;
        else if (k == "patch") m.patch = ExperimentConfig::parse_dims(v);
      }
    } catch (const std::exception&) {
      throw FormatError("corrupt eval.meta line: " + line);
    }
    return m;
  }
};

inline MetricReport cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.data.empty()) throw ConfigError("no paired dataset given (data)");
  std::optional<ModelGraph> model;
  if (cfg.eval_source == EvalSource::model) {
    if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint given");
    model = checkpoint_load(cfg.checkpoint);
    if (cfg.arch_set && model->arch() != cfg.arch.arch)
      throw FormatError("checkpoint holds " + to_string(model->arch()) + " but " + to_string(cfg.arch.arch) +
                        " was requested");
    const std::int64_t k = model->divisor();
    const Dims3 p = cfg.train.patch_dims;
    if (p.d % k || p.h % k || p.w % k)
      throw ConfigError("patch " + to_string(p) + " is not divisible by " + std::to_string(k));
  }
  const DatasetManifest m = DatasetManifest::read(cfg.data);
  const auto split = detail::split_volumes(m, cfg.test_count);
  detail::prepare_out_dir(cfg.out, cfg.force);

  MetricReport report;
  report.volumes.resize(split.test.size());
  detail::parallel_for(split.test.size(), cfg.threads, [&](std::size_t i) {
    const LrHrPair pair = detail::load_pair(cfg.data, split.test[i]);
    Volume prediction;
    switch (cfg.eval_source) {
      case EvalSource::model: prediction = infer_volume(*model, pair.lr, cfg.train.patch_dims); break;
      case EvalSource::lr: prediction = pair.lr; break;
      case EvalSource::hr: prediction = pair.hr; break;
    }
    report.volumes[i] = score_volume(split.test[i], prediction, pair.hr);
  });
  write_report_csv(report, cfg.out / "metrics.csv");

  EvalMeta meta;
  meta.arch = model ? to_string(model->arch()) : "none";
  meta.source = cfg.eval_source == EvalSource::model ? "model" : cfg.eval_source == EvalSource::lr ? "lr" : "hr";
  meta.checkpoint = cfg.eval_source == EvalSource::model ? cfg.checkpoint : fs::path{};
  meta.data = cfg.data;
  meta.scale = m.fields.count("scale") ? std::stoi(m.get("scale")) : cfg.degrade.scale;
  meta.upsample = m.fields.count("upsample") ? m.get("upsample") : to_string(cfg.degrade.upsample_mode);
  meta.patch = cfg.train.patch_dims;
  meta.write(cfg.out);
  return report;
}

// ---------------------------------------------------------------------------

struct ComparedModel {
  std::string label;
  fs::path dir;
  EvalMeta meta;
  MetricReport report;
  std::optional<std::int64_t> parameters;
  std::optional<TimingReport> timing;
  // Verdicts against the baseline, in PSNR/SSIM/RMSE order; empty for the baseline.
  std::vector<stats::ComparisonVerdict> verdicts;
};

struct CompareResult {
  std::vector<ComparedModel> rows;  // candidates first, baseline last
  std::string markdown;
};

namespace detail {

inline std::string row_label(const EvalMeta& m) {
  if (m.source == "lr") return "Degraded input";
  if (m.source == "hr") return "Ground truth";
  try {
    return display_name(parse_arch(m.arch));
  } catch (const ArgumentError&) {
    return m.arch;
  }
}

inline std::vector<double> aligned_column(const MetricReport& r, const std::vector<std::string>& ids,
                                          double VolumeScore::*field, const std::string& who) {
  std::map<std::string, double> by_id;
  for (const auto& v : r.volumes) by_id[v.volume_id] = v.*field;
  if (by_id.size() != ids.size()) throw DataError("volume ids of " + who + " do not match the baseline report");
  std::vector<double> out;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("volume '" + id + "' missing from " + who);
    out.push_back(it->second);
  }
  return out;
}

inline std::string fmt_p(double p) {
  if (!(p > 0.0) || p >= 1e-4) return fmt_num(p, 4);
  std::ostringstream os;
  os << std::scientific << std::setprecision(1) << p;
  return os.str();
}

inline std::string render_markdown(const std::vector<ComparedModel>& rows, bool with_timing) {
  struct Col {
    const char* name;
    double VolumeScore::*field;
    bool higher_better;
    int precision;
  };
  const Col cols[] = {{"PSNR", &VolumeScore::psnr, true, 2},
                      {"SSIM", &VolumeScore::ssim, true, 4},
                      {"RMSE", &VolumeScore::rmse, false, 2}};
  std::ostringstream os;
  os << "## Quantitative comparison\n\n"
     << "Mean (STD) over test volumes. Best per column in **bold**; `*` marks a statistically significant "
        "difference from the baseline (alpha = 0.05).\n\n"
     << "| Scale | Methods | PSNR | SSIM | RMSE |\n|---|---|---|---|---|\n";
  std::vector<std::size_t> best(3, 0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double v = mean_std(rows[r].report.column(cols[c].field)).mean;
      const double b = mean_std(rows[best[c]].report.column(cols[c].field)).mean;
      if (cols[c].higher_better ? v > b : v < b) best[c] = r;
    }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    os << "| x" << row.meta.scale << " | " << row.label;
    for (std::size_t c = 0; c < 3; ++c) {
      const std::string cell = fmt_cell(mean_std(row.report.column(cols[c].field)), cols[c].precision);
      const bool star = !row.verdicts.empty() && row.verdicts[c].significant;
      os << " | " << (best[c] == r ? "**" + cell + "**" : cell) << (star ? "*" : "");
    }
    os << " |\n";
  }

  os << "\n## Significance tests\n\n| Methods | Metric | n | Shapiro W | Shapiro p | Test | Statistic | p | "
        "Significant |\n|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : rows)
    for (const auto& v : row.verdicts) {
      os << "| " << row.label << " | " << v.metric << " | " << v.n << " | " << fmt_num(v.shapiro_w, 4) << " | "
         << fmt_p(v.shapiro_p) << " | " << stats::to_string(v.test_used) << " | " << fmt_num(v.statistic, 4)
         << " | " << fmt_p(v.p_value) << " | " << (v.significant ? "yes" : "no")
         << (v.note.empty() ? "" : " (" + v.note + ")") << " |\n";
    }

  os << "\n## Computational comparison\n\n| Methods | #Parameter (M) | Inference Time (s) |\n|---|---|---|\n";
  for (const auto& row : rows) {
    if (!row.parameters) continue;
    os << "| " << row.label << " | " << fmt_num(static_cast<double>(*row.parameters) / 1e6, 2) << " M | "
       << (with_timing && row.timing ? fmt_num(row.timing->mean, 4) : std::string("-")) << " |\n";
  }
  return os.str();
}

}  // namespace detail

inline CompareResult cmd_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.baseline.empty()) throw ConfigError("no baseline evaluation directory given");
  if (cfg.candidates.empty()) throw ConfigError("no candidate evaluation directories given");
  if (cfg.timing_repeats != 0 && cfg.timing_repeats < 3)
    throw ConfigError("timing_repeats must be 0 (disabled) or at least 3");

  const auto load = [](const fs::path& dir) {
    ComparedModel m;
    m.dir = dir;
    m.meta = EvalMeta::read(dir);
    m.report = read_report_csv(dir / "metrics.csv");
    m.label = detail::row_label(m.meta);
    return m;
  };
  ComparedModel base = load(cfg.baseline);
  std::vector<std::string> ids;
  for (const auto& v : base.report.volumes) ids.push_back(v.volume_id);

  CompareResult result;
  for (const auto& dir : cfg.candidates) {
    ComparedModel c = load(dir);
    const std::pair<const char*, double VolumeScore::*> metrics[] = {
        {"PSNR", &VolumeScore::psnr}, {"SSIM", &VolumeScore::ssim}, {"RMSE", &VolumeScore::rmse}};
    for (const auto& [name, field] : metrics) {
      const auto a = detail::aligned_column(c.report, ids, field, dir.string());
      const auto b = detail::aligned_column(base.report, ids, field, cfg.baseline.string());
      c.verdicts.push_back(stats::compare_models(a, b, name));
    }
    result.rows.push_back(std::move(c));
  }
  result.rows.push_back(std::move(base));

  for (auto& row : result.rows) {
    if (row.meta.source != "model" || row.meta.checkpoint.empty()) continue;
    const ModelGraph model = checkpoint_load(row.meta.checkpoint);
    row.parameters = param_count(model);
    if (cfg.timing_repeats >= 3) {
      const DatasetManifest m = DatasetManifest::read(row.meta.data);
      const auto split = detail::split_volumes(m, cfg.test_count);
      const Volume lr = load_volume(row.meta.data / ("lr_" + split.test.front()));
      row.timing = time_inference(model, lr, row.meta.patch, cfg.timing_repeats);
    }
  }
  result.markdown = detail::render_markdown(result.rows, cfg.timing_repeats >= 3);

  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    std::ofstream md(cfg.out / "comparison.md", std::ios::trunc);
    md << result.markdown;
    std::ofstream csv(cfg.out / "verdicts.csv", std::ios::trunc);
    csv << "methods,metric,n,shapiro_w,shapiro_p,test,statistic,p_value,significant,note\n";
    for (const auto& row : result.rows)
      for (const auto& v : row.verdicts)
        csv << row.label << "," << v.metric << "," << v.n << "," << detail::fmt_num(v.shapiro_w, 8) << ","
            << detail::fmt_num(v.shapiro_p, 8) << "," << stats::to_string(v.test_used) << "," << detail::fmt_num(v.statistic, 8)
            << "," << detail::fmt_num(v.p_value, 8) << "," << (v.significant ? 1 : 0) << "," << detail::csv_safe(v.note) << "\n";
    if (!md || !csv) throw IoError("cannot write comparison outputs in " + cfg.out.string());
  }
  return result;
}

}  // namespace sisr3d
