#pragma once

// Adam optimisation over LR/HR patch pairs, patch-wise volume inference,
// inference timing and checkpoints.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sisr3d/autograd.hpp"
#include "sisr3d/degrade.hpp"
#include "sisr3d/voxio.hpp"
#include "sisr3d/zoo.hpp"

namespace sisr3d {

struct TrainConfig {
  std::int64_t steps = 1000;
  int batch_size = 4;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  Dims3 patch_dims{32, 32, 32};

  void validate() const {
    detail::require(steps >= 0, "steps must be non-negative");
    detail::require(batch_size > 0, "batch_size must be positive");
    detail::require(learning_rate > 0, "learning_rate must be positive");
    detail::require(0 < beta1 && beta1 < beta2 && beta2 < 1, "adam betas must satisfy 0 < beta1 < beta2 < 1");
    detail::require(epsilon > 0, "epsilon must be positive");
    detail::require(patch_dims.d > 0 && patch_dims.h > 0 && patch_dims.w > 0, "patch dims must be positive");
  }
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update. Parameters without a gradient buffer are
// treated as having zero gradient.
inline void adam_step(std::vector<ag::NamedArray>& params, AdamState& state, const TrainConfig& cfg) {
  if (state.m.empty() && state.t == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
      state.v.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    }
  }
  detail::require(state.m.size() == params.size() && state.v.size() == params.size(),
                  "adam_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::require(static_cast<std::int64_t>(state.m[i].size()) == params[i].tensor.numel() &&
                        static_cast<std::int64_t>(state.v[i].size()) == params[i].tensor.numel(),
                    "adam_step: moment shape mismatch for " + params[i].name);

  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    auto vals = tensor.mutable_values();
    const bool has = tensor.has_grad();
    const auto grad = tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double g = has ? grad[j] : 0.0;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      vals[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

struct PatchPair {
  ag::Tensor lr;
  ag::Tensor hr;
};

inline ag::Tensor volume_to_tensor(const Volume& v) {
  const Dims3 d = v.dims();
  return ag::Tensor::from({1, 1, d.d, d.h, d.w}, std::vector<double>(v.voxels().begin(), v.voxels().end()));
}

inline std::vector<PatchPair> make_patch_dataset(const std::vector<LrHrPair>& pairs, Dims3 patch) {
  std::vector<PatchPair> out;
  for (const auto& p : pairs) {
    auto [grid_lr, lr] = extract_patches(p.lr, patch);
    auto [grid_hr, hr] = extract_patches(p.hr, patch);
    for (std::size_t i = 0; i < lr.size(); ++i) out.push_back({volume_to_tensor(lr[i]), volume_to_tensor(hr[i])});
  }
  return out;
}

namespace detail {
inline ag::Tensor stack(const std::vector<PatchPair>& data, const std::vector<std::size_t>& idx,
                        ag::Tensor PatchPair::*field) {
  const ag::Shape5 s = (data[idx.front()].*field).shape();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(s.numel()) * idx.size());
  for (auto i : idx) {
    const auto& t = data[i].*field;
    require(t.shape() == s, "training patches must share one shape");
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return ag::Tensor::from({static_cast<std::int64_t>(idx.size()), s.c(), s.d(), s.h(), s.w()}, std::move(values));
}
}  // namespace detail

// Runs cfg.steps optimisation steps. Batches are drawn without replacement
// from a seeded shuffle that is regenerated whenever it runs out. Returns the
// loss recorded at every step.
inline std::vector<double> train_epoch(ModelGraph& model, const std::vector<PatchPair>& dataset,
                                       const TrainConfig& cfg, AdamState& state) {
  cfg.validate();
  detail::require(!dataset.empty(), "train_epoch: dataset is empty");
  const ag::Shape5 s = dataset.front().lr.shape();
  const std::int64_t k = model.divisor();
  detail::require(s.d() % k == 0 && s.h() % k == 0 && s.w() % k == 0,
                  "train_epoch: patch dims incompatible with " + to_string(model.arch()));
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.steps));
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), dataset.size());
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> idx;
    while (idx.size() < batch) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const ag::Tensor x = detail::stack(dataset, idx, &PatchPair::lr);
    const ag::Tensor y = detail::stack(dataset, idx, &PatchPair::hr);
    model.zero_grad();
    const ag::Tensor loss = ag::mse_loss(model.forward(x), y);
    ag::backward(loss);
    adam_step(model.params(), state, cfg);
    losses.push_back(loss.item());
  }
  return losses;
}

// Patch-wise forward pass without recording a graph. Output is clamped to the
// normalized range.
inline Volume infer_volume(const ModelGraph& model, const Volume& lr, Dims3 patch) {
  detail::require(lr.domain() == IntensityDomain::Normalized, "infer_volume: input must be normalized");
  auto [grid, patches] = extract_patches(lr, patch);
  ag::NoGradGuard no_grad;
  for (auto& p : patches) {
    const ag::Tensor y = model.forward(volume_to_tensor(p));
    auto& vox = p.voxels();
    for (std::size_t i = 0; i < vox.size(); ++i) vox[i] = static_cast<float>(std::clamp(y.values()[i], 0.0, 1.0));
  }
  return reassemble_patches(grid, patches);
}

struct TimingReport {
  std::vector<double> samples;
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Wall-clock seconds per volume over `repeats` runs after one untimed warm-up.
inline TimingReport time_inference(const ModelGraph& model, const Volume& volume, Dims3 patch, int repeats) {
  detail::require(repeats >= 3, "time_inference: repeats must be at least 3");
  (void)infer_volume(model, volume, patch);
  TimingReport r;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)infer_volume(model, volume, patch);
    r.samples.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::vector<double> sorted = r.samples;
  std::sort(sorted.begin(), sorted.end());
  r.min = sorted.front();
  r.max = sorted.back();
  r.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  const std::size_t mid = sorted.size() / 2;
  r.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: <base>.bin + <base>.manifest (see ag::write_archive).

namespace detail {
inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline ArchConfig parse_arch_header(const std::vector<std::string>& header) {
  ArchConfig cfg;
  bool have_arch = false;
  for (const auto& line : header) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "arch") {
        cfg.arch = parse_arch(val);
        have_arch = true;
      } else if (key == "plain_width") {
        cfg.plain_width = std::stoi(val);
      } else if (key == "ae_widths") {
        cfg.ae_widths.clear();
        for (const auto& t : split(val, ',')) cfg.ae_widths.push_back(std::stoi(t));
      } else if (key == "unet_base") {
        cfg.unet_base = std::stoi(val);
      } else if (key == "unet_levels") {
        cfg.unet_levels = std::stoi(val);
      }
    } catch (const std::logic_error&) {
      throw FormatError("corrupt checkpoint header line: " + line);
    }
  }
  if (!have_arch) throw FormatError("checkpoint manifest lacks an arch tag");
  return cfg;
}
}  // namespace detail

inline void checkpoint_save(const ModelGraph& model, const std::filesystem::path& base) {
  const ArchConfig& c = model.config();
  const std::vector<std::string> header{
      "format=sisr3d-checkpoint-1",
      "arch=" + to_string(c.arch),
      "plain_width=" + std::to_string(c.plain_width),
      "ae_widths=" + detail::join_ints(c.ae_widths),
      "unet_base=" + std::to_string(c.unet_base),
      "unet_levels=" + std::to_string(c.unet_levels),
  };
  ag::write_archive(base, header, model.params());
}

// Loads parameters into an existing graph; the architecture tag and every
// parameter name/shape must match.
inline void checkpoint_load_into(ModelGraph& model, const std::filesystem::path& base) {
  const ag::Archive ar = ag::read_archive(base);
  const ArchConfig cfg = detail::parse_arch_header(ar.header);
  if (cfg.arch != model.arch())
    throw FormatError("checkpoint holds " + to_string(cfg.arch) + ", model is " + to_string(model.arch()));
  auto& params = model.params();
  if (ar.arrays.size() != params.size()) throw FormatError("checkpoint parameter count does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ar.arrays[i].name != params[i].name || ar.arrays[i].tensor.shape() != params[i].tensor.shape())
      throw FormatError("checkpoint parameter " + ar.arrays[i].name + " does not match model layout");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_values();
    const auto src = ar.arrays[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

inline ArchConfig checkpoint_arch(const std::filesystem::path& base) {
  return detail::parse_arch_header(ag::read_archive(base).header);
}

inline ModelGraph checkpoint_load(const std::filesystem::path& base) {
  ModelGraph model;
  try {
    model = build_model(checkpoint_arch(base));
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint describes an invalid architecture: ") + e.what());
  }
  checkpoint_load_into(model, base);
  return model;
}

inline void write_loss_csv(const std::vector<double>& losses, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "step,loss\n";
  os.precision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << "," << losses[i] << "\n";
}

}  // namespace sisr3d
