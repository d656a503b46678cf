#pragma once

// The four compared architectures as ordered layer lists: a bottleneck-free
// plain CNN, two autoencoders that differ only in their downsampling layer,
// and a 4-level 3D U-Net with interpolation-based upsampling.

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sisr3d/autograd.hpp"
#include "sisr3d/error.hpp"

namespace sisr3d {

inline constexpr double kLeakySlope = 0.1;

enum class Arch { plain_cnn, ae_maxpool, ae_conv, unet3d };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::plain_cnn: return "plain_cnn";
    case Arch::ae_maxpool: return "ae_maxpool";
    case Arch::ae_conv: return "ae_conv";
    case Arch::unet3d: return "unet3d";
  }
  return "unknown";
}

// Accepts both the tag spelling and the CLI spelling.
inline Arch parse_arch(const std::string& s) {
  if (s == "plain" || s == "plain_cnn") return Arch::plain_cnn;
  if (s == "ae-maxpool" || s == "ae_maxpool") return Arch::ae_maxpool;
  if (s == "ae-conv" || s == "ae_conv") return Arch::ae_conv;
  if (s == "unet" || s == "unet3d") return Arch::unet3d;
  throw ArgumentError("unknown architecture '" + s + "' (expected plain|ae-maxpool|ae-conv|unet)");
}

inline std::string cli_name(Arch a) {
  switch (a) {
    case Arch::plain_cnn: return "plain";
    case Arch::ae_maxpool: return "ae-maxpool";
    case Arch::ae_conv: return "ae-conv";
    case Arch::unet3d: return "unet";
  }
  return "unknown";
}

inline std::string display_name(Arch a) {
  switch (a) {
    case Arch::plain_cnn: return "Plain CNN";
    case Arch::ae_maxpool: return "AE-Maxpool";
    case Arch::ae_conv: return "AE-Conv";
    case Arch::unet3d: return "U-Net";
  }
  return "unknown";
}

enum class LayerKind {
  conv,
  lrelu,
  maxpool,
  downconv,
  upsample_conv,
  concat_skip,
  global_residual_in,
  global_residual_out,
};

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int channels_in = 0;
  int channels_out = 0;
  int stride = 1;
  int padding = 1;
  // concat_skip / global_residual_out: index of the layer whose output is reused.
  int skip_from = -1;
  // Index of the weight in the parameter list (bias follows); -1 if none.
  int param_index = -1;

  bool has_params() const {
    return kind == LayerKind::conv || kind == LayerKind::downconv || kind == LayerKind::upsample_conv;
  }
};

struct ArchConfig {
  Arch arch = Arch::plain_cnn;
  int plain_width = 64;
  std::vector<int> ae_widths{64, 128, 256};
  int unet_base = 32;
  int unet_levels = 4;
};

class ModelGraph {
 public:
  ModelGraph() = default;
  explicit ModelGraph(ArchConfig config) : config_(std::move(config)) {}

  // Copies own their parameters; tensors are never shared between graphs.
  ModelGraph(const ModelGraph& other)
      : config_(other.config_), layers_(other.layers_), skip_sources_(other.skip_sources_) {
    params_.reserve(other.params_.size());
    for (const auto& p : other.params_) {
      params_.push_back({p.name, ag::Tensor::from(p.tensor.shape(),
                                                  std::vector<double>(p.tensor.values().begin(), p.tensor.values().end()),
                                                  true)});
    }
  }
  ModelGraph& operator=(const ModelGraph& other) {
    if (this != &other) *this = ModelGraph(other);
    return *this;
  }
  ModelGraph(ModelGraph&&) noexcept = default;
  ModelGraph& operator=(ModelGraph&&) noexcept = default;
  ~ModelGraph() = default;

  Arch arch() const { return config_.arch; }
  const ArchConfig& config() const { return config_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<ag::NamedArray>& params() { return params_; }
  const std::vector<ag::NamedArray>& params() const { return params_; }

  // Input spatial dims must be multiples of this.
  std::int64_t divisor() const {
    std::int64_t d = 1;
    for (const auto& l : layers_)
      if (l.kind == LayerKind::maxpool || l.kind == LayerKind::downconv) d *= 2;
    return d;
  }

  int add_layer(LayerSpec spec) {
    if (spec.has_params()) {
      const std::string tag = "L" + std::to_string(layers_.size());
      spec.param_index = static_cast<int>(params_.size());
      params_.push_back({tag + ".weight", ag::Tensor::zeros({spec.channels_out, spec.channels_in, 3, 3, 3}, true)});
      params_.push_back({tag + ".bias", ag::Tensor::zeros({spec.channels_out, 1, 1, 1, 1}, true)});
    }
    if (spec.skip_from >= 0) skip_sources_.insert(spec.skip_from);
    layers_.push_back(spec);
    return static_cast<int>(layers_.size()) - 1;
  }

  // Kaiming-normal weights with the leaky-ReLU gain; zero biases.
  void init_parameters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      auto vals = p.tensor.mutable_values();
      if (p.name.ends_with(".bias")) {
        std::fill(vals.begin(), vals.end(), 0.0);
        continue;
      }
      const double fan_in = static_cast<double>(p.tensor.shape().c() * 27);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in)));
      for (auto& v : vals) v = dist(rng);
    }
  }

  void zero_parameters() {
    for (auto& p : params_) {
      auto vals = p.tensor.mutable_values();
      std::fill(vals.begin(), vals.end(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  ag::Tensor forward(const ag::Tensor& x) const {
    require_input(x.shape());
    std::vector<ag::Tensor> saved(layers_.size());
    ag::Tensor cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::downconv:
          cur = ag::conv3d(cur, weight(l), bias(l), l.stride, l.padding);
          break;
        case LayerKind::upsample_conv:
          cur = ag::conv3d(ag::trilinear_resize(cur, ag::ResizeFactor::twice), weight(l), bias(l), 1, 1);
          break;
        case LayerKind::lrelu:
          cur = ag::leaky_relu(cur, kLeakySlope);
          break;
        case LayerKind::maxpool:
          cur = ag::maxpool3d(cur);
          break;
        case LayerKind::concat_skip:
          cur = ag::concat_channels(saved[static_cast<std::size_t>(l.skip_from)], cur);
          break;
        case LayerKind::global_residual_in:
          break;
        case LayerKind::global_residual_out:
          cur = ag::add(cur, saved[static_cast<std::size_t>(l.skip_from)]);
          break;
      }
      if (skip_sources_.count(static_cast<int>(i))) saved[i] = cur;
    }
    return cur;
  }

 private:
  void require_input(const ag::Shape5& s) const {
    detail::require(s.c() == 1, "forward: model expects a single input channel");
    const std::int64_t k = divisor();
    detail::require(s.d() % k == 0 && s.h() % k == 0 && s.w() % k == 0,
                    "forward: " + to_string(config_.arch) + " needs spatial dims divisible by " + std::to_string(k) +
                        ", got " + ag::to_string(s));
  }
  const ag::Tensor& weight(const LayerSpec& l) const { return params_[static_cast<std::size_t>(l.param_index)].tensor; }
  const ag::Tensor& bias(const LayerSpec& l) const { return params_[static_cast<std::size_t>(l.param_index) + 1].tensor; }

  ArchConfig config_;
  std::vector<LayerSpec> layers_;
  std::set<int> skip_sources_;
  std::vector<ag::NamedArray> params_;
};

inline std::int64_t param_count(const ModelGraph& m) {
  std::int64_t n = 0;
  for (const auto& p : m.params()) n += p.tensor.numel();
  return n;
}

namespace detail {
inline void add_block(ModelGraph& g, int cin, int cout) {
  g.add_layer({LayerKind::conv, cin, cout});
  g.add_layer({LayerKind::lrelu, cout, cout});
}
}  // namespace detail

// 12 conv + leaky-ReLU blocks at constant resolution around a global residual.
inline ModelGraph build_plain_cnn(int width = 64, std::uint64_t seed = 0) {
  detail::require(width > 0, "plain_cnn width must be positive");
  ModelGraph g({Arch::plain_cnn, width, {}, 0, 0});
  const int in = g.add_layer({LayerKind::global_residual_in, 1, 1});
  detail::add_block(g, 1, width);
  for (int i = 0; i < 10; ++i) detail::add_block(g, width, width);
  detail::add_block(g, width, 1);
  g.add_layer({LayerKind::global_residual_out, 1, 1, 1, 1, in});
  g.init_parameters(seed);
  return g;
}

enum class DownKind { maxpool, strided_conv };

// Symmetric autoencoder on the 12-block budget. With widths {w0, ..., wk}:
// each encoder level runs two blocks at w_l then a channel-preserving
// downsampling layer; the bottleneck runs 12 - 4k blocks at wk; each decoder
// level runs trilinear x2 + conv (w_{l+1} -> w_l) + leaky ReLU and one more
// block, the last one projecting to a single channel. Global residual as in
// the plain CNN.
inline ModelGraph build_ae(DownKind down, std::vector<int> widths = {64, 128, 256}, std::uint64_t seed = 0) {
  const int k = static_cast<int>(widths.size()) - 1;
  detail::require(k >= 1, "ae width schedule needs at least two levels");
  detail::require(12 - 4 * k >= 1, "ae width schedule with " + std::to_string(k) +
                                        " resizing steps does not fit the 12-block budget");
  for (int w : widths) detail::require(w > 0, "ae widths must be positive");
  const Arch arch = down == DownKind::maxpool ? Arch::ae_maxpool : Arch::ae_conv;
  ModelGraph g({arch, 0, widths, 0, 0});
  const int in = g.add_layer({LayerKind::global_residual_in, 1, 1});
  int c = 1;
  for (int l = 0; l < k; ++l) {
    detail::add_block(g, c, widths[l]);
    detail::add_block(g, widths[l], widths[l]);
    c = widths[l];
    if (down == DownKind::maxpool)
      g.add_layer({LayerKind::maxpool, c, c});
    else
      g.add_layer({LayerKind::downconv, c, c, 2, 1});
  }
  for (int b = 0; b < 12 - 4 * k; ++b) {
    detail::add_block(g, c, widths[k]);
    c = widths[k];
  }
  for (int l = k - 1; l >= 0; --l) {
    g.add_layer({LayerKind::upsample_conv, c, widths[l]});
    g.add_layer({LayerKind::lrelu, widths[l], widths[l]});
    c = widths[l];
    detail::add_block(g, c, l == 0 ? 1 : c);
  }
  g.add_layer({LayerKind::global_residual_out, 1, 1, 1, 1, in});
  g.init_parameters(seed);
  return g;
}

// 3D U-Net: two conv + leaky-ReLU per level with widths base * 2^l, max-pool
// between encoder levels, trilinear x2 + conv in the decoder followed by skip
// concatenation, and a final 3^3 projection to one channel.
inline ModelGraph build_unet3d(int base = 32, int levels = 4, std::uint64_t seed = 0) {
  detail::require(base > 0 && levels >= 2, "unet3d needs positive base width and at least two levels");
  ModelGraph g({Arch::unet3d, 0, {}, base, levels});
  std::vector<int> skip(static_cast<std::size_t>(levels));
  int c = 1;
  for (int l = 0; l < levels; ++l) {
    const int w = base << l;
    detail::add_block(g, c, w);
    g.add_layer({LayerKind::conv, w, w});
    skip[static_cast<std::size_t>(l)] = g.add_layer({LayerKind::lrelu, w, w});
    c = w;
    if (l < levels - 1) g.add_layer({LayerKind::maxpool, w, w});
  }
  for (int l = levels - 2; l >= 0; --l) {
    const int w = base << l;
    g.add_layer({LayerKind::upsample_conv, c, w});
    g.add_layer({LayerKind::concat_skip, 2 * w, 2 * w, 1, 1, skip[static_cast<std::size_t>(l)]});
    detail::add_block(g, 2 * w, w);
    detail::add_block(g, w, w);
    c = w;
  }
  g.add_layer({LayerKind::conv, c, 1});
  g.init_parameters(seed);
  return g;
}

inline ModelGraph build_model(const ArchConfig& cfg, std::uint64_t seed = 0) {
  switch (cfg.arch) {
    case Arch::plain_cnn: return build_plain_cnn(cfg.plain_width, seed);
    case Arch::ae_maxpool: return build_ae(DownKind::maxpool, cfg.ae_widths, seed);
    case Arch::ae_conv: return build_ae(DownKind::strided_conv, cfg.ae_widths, seed);
    case Arch::unet3d: return build_unet3d(cfg.unet_base, cfg.unet_levels, seed);
  }
  throw ArgumentError("unknown architecture");
}

}  // namespace sisr3d
