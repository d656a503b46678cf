// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   sisr3d_acceptance [--workdir DIR] [--only 1,2,...]

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "sisr3d/sisr3d.hpp"
#include "ssim_oracle.hpp"
#include "wilcoxon_oracle.hpp"

using namespace sisr3d;
using ag::Shape5;
using ag::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// ---------------------------------------------------------------------------
// 1, 2

Outcome param_anchor() {
  const auto n = param_count(build_plain_cnn());
  return {n == 1110081, "plain_cnn " + std::to_string(n) + " (" + fmt(static_cast<double>(n) / 1e6, 3) + " M)"};
}

Outcome param_gap() {
  const auto mp = build_ae(DownKind::maxpool);
  const auto cv = build_ae(DownKind::strided_conv);
  std::int64_t down = 0;
  for (const auto& l : cv.layers())
    if (l.kind == LayerKind::downconv)
      down += cv.params()[static_cast<std::size_t>(l.param_index)].tensor.numel() +
              cv.params()[static_cast<std::size_t>(l.param_index) + 1].tensor.numel();
  const auto gap = param_count(cv) - param_count(mp);
  std::ostringstream os;
  os << "ae_maxpool " << param_count(mp) << ", ae_conv " << param_count(cv) << ", gap " << gap
     << " = strided-conv params " << down << " (" << fmt(static_cast<double>(gap) / 1e6, 3)
     << " M; published 7.44 - 6.88 = 0.56 M)";
  return {gap == down, os.str()};
}

// ---------------------------------------------------------------------------
// 3

std::vector<double> normal_values(std::int64_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

Tensor normal_tensor(const Shape5& s, std::mt19937_64& rng) { return Tensor::from(s, normal_values(s.numel(), rng)); }

// Values bounded away from zero, for the leaky ReLU kink.
Tensor off_kink_tensor(const Shape5& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.01, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(static_cast<std::size_t>(s.numel()));
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::from(s, v);
}

// Distinct values at least ~0.008 apart, so no pooling window has a near tie.
Tensor distinct_tensor(const Shape5& s, std::mt19937_64& rng) {
  std::vector<double> v(static_cast<std::size_t>(s.numel()));
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  std::uniform_real_distribution<double> jitter(0.0, 0.001);
  for (auto& x : v) x = 0.01 * x + jitter(rng);
  return Tensor::from(s, v);
}

Tensor dot_with(const Tensor& x, std::vector<double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += x.values()[i] * y[i];
  return ag::make_op(Shape5(1, 1, 1, 1, 1), {s}, {x}, [x, y](std::span<const double> g) {
    auto gx = ag::grad_sink(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * y[i];
  });
}

double adjoint_gap(const std::function<Tensor(const Tensor&)>& A, const Tensor& x0, std::mt19937_64& rng) {
  Tensor x = Tensor::from(x0.shape(), std::vector<double>(x0.values().begin(), x0.values().end()), true);
  Tensor ax = A(x);
  Tensor loss = dot_with(ax, normal_values(ax.numel(), rng));
  ag::backward(loss);
  double rhs = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x.values()[i] * x.grad()[i];
  return std::abs(loss.item() - rhs) / std::max({std::abs(loss.item()), std::abs(rhs), 1.0});
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  constexpr int kCases = 20;
  constexpr double h = 1e-5, tol = 1e-4;
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> small(1, 2), side(3, 5), even(1, 3);

  std::map<std::string, double> worst_fd, worst_adj;
  std::map<std::string, int> fd_fail, adj_fail;
  const auto fd = [&](const std::string& op, const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    const auto r = ag::grad_check(f, x, h, tol);
    worst_fd[op] = std::max(worst_fd[op], r.max_rel_error);
    if (!r.passed) ++fd_fail[op];
  };
  const auto adj = [&](const std::string& op, const std::function<Tensor(const Tensor&)>& A, const Tensor& x) {
    const double g = adjoint_gap(A, x, rng);
    worst_adj[op] = std::max(worst_adj[op], g);
    if (!(g <= 1e-9)) ++adj_fail[op];
  };

  for (int c = 0; c < kCases; ++c) {
    const std::int64_t N = small(rng), Ci = small(rng), Co = small(rng);
    const Shape5 xs(N, Ci, side(rng), side(rng), side(rng));
    const Shape5 es(N, Ci, 2 * even(rng), 2 * even(rng), 2 * even(rng));
    const int stride = c % 2 ? 2 : 1, pad = c % 3 ? 1 : 0;
    const auto x = normal_tensor(xs, rng);
    const auto w = normal_tensor({Co, Ci, 3, 3, 3}, rng);
    const auto b = normal_tensor({Co, 1, 1, 1, 1}, rng);
    const auto zero_b = Tensor::zeros({Co, 1, 1, 1, 1});
    const auto conv_target = normal_tensor(ag::conv3d(x, w, b, stride, pad).shape(), rng);

    fd("conv3d/input", [&](const Tensor& t) { return ag::mse_loss(ag::conv3d(t, w, b, stride, pad), conv_target); }, x);
    fd("conv3d/weight", [&](const Tensor& t) { return ag::mse_loss(ag::conv3d(x, t, b, stride, pad), conv_target); }, w);
    fd("conv3d/bias", [&](const Tensor& t) { return ag::mse_loss(ag::conv3d(x, w, t, stride, pad), conv_target); }, b);
    adj("conv3d/input", [&](const Tensor& t) { return ag::conv3d(t, w, zero_b, stride, pad); }, x);
    adj("conv3d/weight", [&](const Tensor& t) { return ag::conv3d(x, t, zero_b, stride, pad); }, w);

    const auto e = distinct_tensor(es, rng);
    const auto pool_target = normal_tensor(ag::maxpool3d(e).shape(), rng);
    fd("maxpool3d", [&](const Tensor& t) { return ag::mse_loss(ag::maxpool3d(t), pool_target); }, e);

    const auto up_target = normal_tensor(ag::trilinear_resize(x, ag::ResizeFactor::twice).shape(), rng);
    const auto down_target = normal_tensor(ag::trilinear_resize(e, ag::ResizeFactor::half).shape(), rng);
    fd("trilinear/twice", [&](const Tensor& t) { return ag::mse_loss(ag::trilinear_resize(t, ag::ResizeFactor::twice), up_target); }, x);
    fd("trilinear/half", [&](const Tensor& t) { return ag::mse_loss(ag::trilinear_resize(t, ag::ResizeFactor::half), down_target); }, e);
    adj("trilinear/twice", [](const Tensor& t) { return ag::trilinear_resize(t, ag::ResizeFactor::twice); }, x);
    adj("trilinear/half", [](const Tensor& t) { return ag::trilinear_resize(t, ag::ResizeFactor::half); }, e);

    const auto k = off_kink_tensor(xs, rng);
    const auto target = normal_tensor(xs, rng);
    fd("leaky_relu", [&](const Tensor& t) { return ag::mse_loss(ag::leaky_relu(t, kLeakySlope), target); }, k);

    const auto other = normal_tensor(xs, rng);
    fd("add", [&](const Tensor& t) { return ag::mse_loss(ag::add(t, other), target); }, x);
    adj("add", [&](const Tensor& t) { return ag::add(t, t); }, x);

    const Shape5 os(N, small(rng), xs.d(), xs.h(), xs.w());
    const auto side_input = normal_tensor(os, rng);
    const auto cat_target = normal_tensor(ag::concat_channels(side_input, x).shape(), rng);
    fd("concat_channels", [&](const Tensor& t) { return ag::mse_loss(ag::concat_channels(side_input, t), cat_target); }, x);
    fd("concat_channels", [&](const Tensor& t) { return ag::mse_loss(ag::concat_channels(t, side_input), cat_target); }, x);
    adj("concat_channels", [&](const Tensor& t) { return ag::concat_channels(t, t); }, x);

    const std::int64_t begin = Ci > 1 ? c % 2 : 0, count = Ci - begin;
    const auto slice_target = normal_tensor(ag::slice_channels(x, begin, count).shape(), rng);
    fd("slice_channels", [&](const Tensor& t) { return ag::mse_loss(ag::slice_channels(t, begin, count), slice_target); }, x);
    adj("slice_channels", [&](const Tensor& t) { return ag::slice_channels(t, begin, count); }, x);

    fd("sum", [&](const Tensor& t) { return ag::sum(ag::leaky_relu(t, kLeakySlope)); }, k);
    adj("sum", [](const Tensor& t) { return ag::sum(t); }, x);

    fd("mse_loss/pred", [&](const Tensor& t) { return ag::mse_loss(t, target); }, x);
    fd("mse_loss/target", [&](const Tensor& t) { return ag::mse_loss(target, t); }, x);
  }

  int failures = 0;
  std::ostringstream os;
  double fd_max = 0.0, adj_max = 0.0;
  for (const auto& [op, v] : worst_fd) fd_max = std::max(fd_max, v);
  for (const auto& [op, v] : worst_adj) adj_max = std::max(adj_max, v);
  for (const auto& [op, n] : fd_fail) {
    failures += n;
    os << " fd-fail " << op << " x" << n << " (worst " << fmt(worst_fd[op]) << ");";
  }
  for (const auto& [op, n] : adj_fail) {
    failures += n;
    os << " adjoint-fail " << op << " x" << n << ";";
  }
  const double secs = seconds_since(t0);
  std::ostringstream detail;
  detail << worst_fd.size() << " op/argument pairs x " << kCases << " cases, worst FD rel err " << fmt(fd_max, 3)
         << ", " << worst_adj.size() << " linear ops, worst adjoint gap " << fmt(adj_max, 3) << ", " << fmt(secs, 3)
         << " s" << os.str();
  return {failures == 0 && secs < 120.0, detail.str()};
}

// ---------------------------------------------------------------------------
// 4

Outcome metric_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::uniform_int_distribution<int> dim(11, 40);
  double psnr_gap = 0.0, self_gap = 0.0, ssim_gap = 0.0;
  for (int i = 0; i < 10; ++i) {
    auto a = Volume::filled({4, dim(rng), dim(rng)}, 0.0f, IntensityDomain::Normalized);
    auto b = a;
    for (std::size_t k = 0; k < a.voxels().size(); ++k) {
      a.voxels()[k] = u(rng);
      b.voxels()[k] = std::clamp(a.voxels()[k] + 0.2f * (u(rng) - 0.5f), 0.0f, 1.0f);
    }
    const auto s = score_volume("v", b, a);
    psnr_gap = std::max(psnr_gap, std::abs(s.psnr - 20.0 * std::log10(255.0 / s.rmse)));
    self_gap = std::max(self_gap, std::abs(ssim(a, a) - 1.0));
  }
  for (int i = 0; i < 50; ++i) {
    const int H = dim(rng), W = dim(rng);
    std::vector<double> x(static_cast<std::size_t>(H * W)), y(x.size());
    const double noise = 5.0 + 60.0 * u(rng);
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = 255.0 * u(rng);
      y[k] = std::clamp(x[k] + noise * (u(rng) - 0.5), 0.0, 255.0);
    }
    ssim_gap = std::max(ssim_gap, std::abs(ssim_plane(x.data(), y.data(), H, W) - ssim_brute_force(x, y, H, W)));
  }
  const double secs = seconds_since(t0);
  return {psnr_gap <= 1e-9 && self_gap <= 1e-9 && ssim_gap <= 1e-9 && secs < 60.0,
          "psnr identity gap " + fmt(psnr_gap, 3) + ", |ssim(x,x)-1| " + fmt(self_gap, 3) +
              ", fast vs direct SSIM over 50 slices " + fmt(ssim_gap, 3) + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 5

Outcome stats_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5150);
  std::normal_distribution<double> g;
  int samples = 0, mismatches = 0;
  for (int n = 1; n <= stats::kWilcoxonExactMax; ++n)
    for (int rep = 0; rep < 17; ++rep) {
      std::vector<double> d(static_cast<std::size_t>(n));
      const bool ties = rep % 2 == 1;
      for (auto& v : d) v = ties ? std::round(2.0 * g(rng)) : g(rng) + 0.3;
      if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) d[0] = 1.0;
      double w = 0.0;
      const double expected = wilcoxon_enumerated_p(d, &w);
      const auto r = stats::wilcoxon_signed_rank(d, std::vector<double>(d.size(), 0.0));
      ++samples;
      if (std::abs(r.p - expected) > 1e-12 || r.w != w) ++mismatches;
    }

  const auto t = stats::paired_t_test({1, 2, 3, 4, 5}, {0, 0, 0, 0, 0});
  const bool t_ok = std::abs(t.t - 4.2426) < 1e-4 && std::abs(t.p - 0.0132) <= 0.0005;

  // Reference W from scipy.stats.shapiro.
  const std::vector<std::pair<std::vector<double>, double>> sw_cases{
      {{148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236}, 0.7888146948631716},
      {{-1, 0, 1}, 1.0},
      {{2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 3.0}, 0.9713906031045022},
      {{0.5, 1.2, -0.3, 0.8, 2.5, -1.1, 0.1, 0.9, 1.7, -0.6, 0.4, 1.3, 0.0, 2.2, -0.9}, 0.9770603102335836},
      {{1, 2, 4, 8, 16}, 0.876108811751035},
  };
  double sw_gap = 0.0;
  for (const auto& [x, w] : sw_cases) sw_gap = std::max(sw_gap, std::abs(stats::shapiro_wilk(x).w - w));
  const auto skewed = stats::shapiro_wilk(sw_cases[0].first);

  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "wilcoxon exact vs enumeration " << samples - mismatches << "/" << samples << " (n<=12); t=" << fmt(t.t, 6)
     << " p=" << fmt(t.p, 4) << "; shapiro max |dW| " << fmt(sw_gap, 3) << " over " << sw_cases.size()
     << " samples (skewed sample W=" << fmt(skewed.w, 4) << " p=" << fmt(skewed.p, 3) << "); " << fmt(secs, 3)
     << " s";
  return {mismatches == 0 && samples >= 200 && t_ok && sw_gap <= 0.01 && skewed.p < 0.05 && secs < 60.0, os.str()};
}

// ---------------------------------------------------------------------------
// 6

Outcome degradation_suite() {
  const auto t0 = Clock::now();
  std::vector<std::string> failed;
  const auto lr = clip_normalize(generate_phantom(6, {8, 24, 24}, PhantomKind::shepp_like));
  for (int s : {2, 4, 8})
    if (!(axial_decimate(upsample_same_insertion(lr, s), s) == lr)) failed.push_back("decimate-insert x" + std::to_string(s));

  auto ends = Volume::filled({1, 1, 2}, 0.0f);
  ends.voxels() = {-1024.0f, 1476.0f};
  const auto n = clip_normalize(ends);
  if (n.voxels()[0] != 0.0f || n.voxels()[1] != 1.0f) failed.push_back("endpoints");

  const auto tall = generate_phantom(1, {37, 8, 8}, PhantomKind::spheres);
  for (int s : {2, 4, 8})
    for (int p : {1, 8, 16, 32}) {
      const auto m = std::lcm(s, p);
      if (m > 37) continue;
      if (truncate_slices(tall, m).dims().d % m != 0 || truncate_slices(tall, m).dims().d != m * (37 / m))
        failed.push_back("truncate " + std::to_string(m));
    }

  for (float hu : {-1024.0f, -500.0f, 0.0f, 40.0f, 1476.0f, 3000.0f}) {
    const auto c = Volume::filled({32, 8, 8}, hu);
    for (int s : {2, 4, 8})
      for (auto mode : {UpsampleMode::same_insertion, UpsampleMode::trilinear}) {
        const auto pair = make_lr_hr_pair(c, {s, mode, 16});
        const float expected = pair.hr.voxels().front();
        bool constant = pair.lr == pair.hr;
        for (float v : pair.lr.voxels()) constant = constant && v == expected;
        if (!constant) failed.push_back("constant " + fmt(hu) + " x" + std::to_string(s) + " " + to_string(mode));
      }
  }
  const double secs = seconds_since(t0);
  std::string detail = "identity x2/x4/x8, endpoints -1024->0 and 1476->1, truncation, 36 constant pipelines; " +
                       fmt(secs, 3) + " s";
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {failed.empty() && secs < 60.0, detail};
}

// ---------------------------------------------------------------------------
// 7

struct OverfitRun {
  std::vector<double> losses;
  double seconds = 0.0;
};

void mark_done(const fs::path& dir) { std::ofstream(dir / "DONE") << "done\n"; }

OverfitRun run_overfit(const fs::path& dir) {
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto hr = generate_phantom(7, {32, 32, 32}, PhantomKind::spheres);
  const auto pair = make_lr_hr_pair(hr, {2, UpsampleMode::same_insertion, 32});
  const auto data = make_patch_dataset({pair}, {32, 32, 32});
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e-3;
  cfg.seed = 7;
  cfg.patch_dims = {32, 32, 32};
  auto model = build_plain_cnn(8, 7);
  AdamState state;
  OverfitRun r;
  r.losses = train_epoch(model, data, cfg, state);
  checkpoint_save(model, dir / "model");
  write_loss_csv(r.losses, dir / "loss.csv");
  r.seconds = seconds_since(t0);
  mark_done(dir);
  return r;
}

Outcome overfit(const fs::path& work) {
  const auto r = run_overfit(work / "run1" / "overfit");
  const double first = r.losses.front(), last = r.losses.back();
  const double ratio = first / last;
  return {ratio >= 100.0 && r.seconds < 600.0,
          "plain width 8, 32^3 pair, 500 Adam steps at lr 1e-3: MSE " + fmt(first, 4) + " -> " + fmt(last, 4) +
              " (x" + fmt(ratio, 4) + " reduction), " + fmt(r.seconds, 4) + " s"};
}

// ---------------------------------------------------------------------------
// 8

struct StudyRun {
  std::map<Arch, double> mean_psnr;
  CompareResult comparison;
  double seconds = 0.0;
};

StudyRun run_mini_study(const fs::path& dir, const fs::path& config) {
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  ExperimentConfig base;
  base.load_file(config);
  base.force = true;
  base.validate();

  auto c = base;
  c.out = dir / "phantoms";
  cmd_phantom(c);
  c.data = c.out;
  c.out = dir / "pairs";
  cmd_degrade(c);
  const fs::path pairs = c.out;

  StudyRun run;
  const std::vector<Arch> archs{Arch::plain_cnn, Arch::ae_maxpool, Arch::ae_conv, Arch::unet3d};
  for (Arch a : archs) {
    auto t = base;
    t.apply("arch", cli_name(a));
    t.data = pairs;
    t.out = dir / ("train_" + cli_name(a));
    const auto trained = cmd_train(t);
    auto e = t;
    e.checkpoint = trained.checkpoint;
    e.out = dir / ("eval_" + cli_name(a));
    run.mean_psnr[a] = cmd_eval(e).psnr().mean;
  }
  auto cmp = base;
  cmp.baseline = dir / "eval_plain";
  cmp.candidates = {dir / "eval_ae-maxpool", dir / "eval_ae-conv", dir / "eval_unet"};
  cmp.out = dir / "compare";
  run.comparison = cmd_compare(cmp);
  run.seconds = seconds_since(t0);
  mark_done(dir);
  return run;
}

Outcome mini_study(const fs::path& work, const fs::path& config) {
  const auto r = run_mini_study(work / "run1" / "study", config);
  const double plain = r.mean_psnr.at(Arch::plain_cnn);
  const bool ordered = plain >= r.mean_psnr.at(Arch::ae_maxpool) && plain >= r.mean_psnr.at(Arch::ae_conv);
  std::size_t verdicts = 0;
  for (const auto& row : r.comparison.rows) verdicts += row.verdicts.size();
  const bool pipeline = verdicts == 9 && fs::exists(work / "run1/study/compare/comparison.md") &&
                        fs::exists(work / "run1/study/compare/verdicts.csv");
  std::ostringstream os;
  os << "mean test PSNR plain " << fmt(plain, 5) << ", ae-maxpool " << fmt(r.mean_psnr.at(Arch::ae_maxpool), 5)
     << ", ae-conv " << fmt(r.mean_psnr.at(Arch::ae_conv), 5) << ", unet " << fmt(r.mean_psnr.at(Arch::unet3d), 5)
     << "; significant vs plain:";
  for (const auto& row : r.comparison.rows)
    for (const auto& v : row.verdicts)
      if (v.metric == "PSNR") os << " " << row.label << (v.significant ? "*" : "") << " (" << stats::to_string(v.test_used)
                                 << " p=" << fmt(v.p_value, 3) << ")";
  os << "; " << verdicts << " verdicts; " << fmt(r.seconds, 4) << " s";
  return {ordered && pipeline && r.seconds < 7200.0, os.str()};
}

// ---------------------------------------------------------------------------
// 9

Outcome timing_order() {
  const auto lr = clip_normalize(generate_phantom(9, {32, 32, 32}, PhantomKind::spheres));
  const Dims3 patch{32, 32, 32};
  const auto t0 = Clock::now();
  const auto plain = time_inference(build_plain_cnn(64, 1), lr, patch, 5);
  const auto ae = time_inference(build_ae(DownKind::maxpool, {64, 128, 256}, 1), lr, patch, 5);
  const double secs = seconds_since(t0);
  return {ae.median < plain.median && secs < 600.0,
          "full-width, 32^3 volume, single thread, median of 5: ae-maxpool " + fmt(ae.median, 4) + " s < plain " +
              fmt(plain.median, 4) + " s (" + fmt(secs, 4) + " s total)"};
}

// ---------------------------------------------------------------------------
// 10

// Artifacts compared byte for byte. Dataset manifests and eval.meta carry
// output paths and comparison.md carries timings, so they are skipped.
bool comparable(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".raw" || ext == ".bin" || ext == ".csv" || (ext == ".meta" && p.filename() != "eval.meta") ||
         ext == ".manifest";
}

Outcome determinism(const fs::path& work, const fs::path& config) {
  const auto t0 = Clock::now();
  if (!fs::exists(work / "run1/overfit/DONE")) run_overfit(work / "run1" / "overfit");
  if (!fs::exists(work / "run1/study/DONE")) run_mini_study(work / "run1" / "study", config);
  run_overfit(work / "run2" / "overfit");
  run_mini_study(work / "run2" / "study", config);
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(work / "run1")) {
    if (!entry.is_regular_file() || !comparable(entry.path())) continue;
    const auto rel = fs::relative(entry.path(), work / "run1");
    ++compared;
    if (!fs::exists(work / "run2" / rel) || slurp(entry.path()) != slurp(work / "run2" / rel))
      differing.push_back(rel.string());
  }
  std::string detail = std::to_string(compared) + " checkpoint/CSV/volume files identical across reruns; " +
                       fmt(seconds_since(t0), 4) + " s";
  for (const auto& d : differing) detail += "; DIFFERS " + d;
  return {differing.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "sisr3d_acceptance").string();
  std::string config = std::string(SISR3D_CONFIG_DIR) + "/mini_study.conf";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory; finished runs from 7 and 8 are reused by 10");
  app.add_option("--config", config, "mini-study config");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path work = workdir;
  fs::create_directories(work);
  const std::set<int> selected(only.begin(), only.end());
  const auto wanted = [&](int i) { return selected.empty() || selected.count(i) > 0; };

  const std::vector<std::pair<int, std::string>> names{
      {1, "parameter-count anchor"}, {2, "parameter-gap anchor"}, {3, "gradient suite"},
      {4, "metric oracle suite"},    {5, "statistics oracle suite"}, {6, "degradation suite"},
      {7, "overfit smoke test"},     {8, "directional mini-study"}, {9, "timing ordering"},
      {10, "determinism"}};
  int failures = 0;
  for (const auto& [id, name] : names) {
    if (!wanted(id)) continue;
    Outcome o;
    try {
      switch (id) {
        case 1: o = param_anchor(); break;
        case 2: o = param_gap(); break;
        case 3: o = gradient_suite(); break;
        case 4: o = metric_suite(); break;
        case 5: o = stats_suite(); break;
        case 6: o = degradation_suite(); break;
        case 7: o = overfit(work); break;
        case 8: o = mini_study(work, config); break;
        case 9: o = timing_order(); break;
        case 10: o = determinism(work, config); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
