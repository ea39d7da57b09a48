#pragma once

// Randomized comparisons of the tensor kernels against the oracles. Shared by
// the unit tests and the acceptance binary.

#include <random>
#include <string>

#include "oracles.hpp"
#include "picar/tensor.hpp"

namespace checks {

struct Outcome {
  std::size_t instances = 0;
  std::size_t mismatches = 0;
  double worst_rel_err = 0.0;
  std::string first_failure;
};

inline std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

inline std::vector<double> random_doubles(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

struct ConvShape {
  std::size_t h, w, c, kh, kw, out, sr, sc;
};

inline ConvShape random_conv_shape(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ConvShape s{};
  s.kh = pick(1, 5);
  s.kw = pick(1, 5);
  s.h = s.kh + pick(0, 7);
  s.w = s.kw + pick(0, 7);
  s.c = pick(1, 6);
  s.out = pick(1, 9);
  s.sr = pick(1, 3);
  s.sc = pick(1, 3);
  return s;
}

// Forward conv and fc versus naive loops, bit-for-bit, in float.
inline Outcome forward_vs_oracle(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Outcome o;
  for (std::size_t n = 0; n < instances; ++n) {
    const ConvShape s = random_conv_shape(rng);
    auto x = random_floats(rng, s.h * s.w * s.c);
    auto k = random_floats(rng, s.kh * s.kw * s.c * s.out);
    auto b = random_floats(rng, s.out);
    picar::ConvParams p{picar::Tensor({s.kh, s.kw, s.c, s.out}, k), b, {s.sr, s.sc}};
    const auto y = picar::conv2d_forward(picar::Tensor({s.h, s.w, s.c}, x), p);
    const auto want = oracle::conv(x, s.h, s.w, s.c, k, s.kh, s.kw, s.out, b, s.sr, s.sc);
    ++o.instances;
    if (std::vector<float>(y.data().begin(), y.data().end()) != want) {
      ++o.mismatches;
      if (o.first_failure.empty()) o.first_failure = "conv instance " + std::to_string(n);
    }

    std::uniform_int_distribution<std::size_t> dim(1, 40);
    const std::size_t in = dim(rng), out = dim(rng);
    auto fx = random_floats(rng, in);
    auto fw = random_floats(rng, in * out);
    auto fb = random_floats(rng, out);
    picar::FcParams fp{picar::Tensor({out, in}, fw), fb};
    const auto fy = picar::fc_forward<float>(fx, fp);
    ++o.instances;
    if (fy != oracle::fc(fx, fw, out, fb)) {
      ++o.mismatches;
      if (o.first_failure.empty()) o.first_failure = "fc instance " + std::to_string(n);
    }
  }
  return o;
}

// Loss L = sum(g .* y) for a fixed random g; its gradient w.r.t. every input
// is what backward returns when handed g.
inline Outcome backward_vs_finite_differences(std::size_t instances, std::uint64_t seed) {
  constexpr double h = 1e-5;
  std::mt19937_64 rng(seed);
  Outcome o;
  auto track = [&](double analytic, double numeric, const std::string& what) {
    const double e = oracle::rel_err(analytic, numeric);
    o.worst_rel_err = std::max(o.worst_rel_err, e);
    if (e >= 1e-4) {
      ++o.mismatches;
      if (o.first_failure.empty()) o.first_failure = what;
    }
  };

  for (std::size_t n = 0; n < instances; ++n) {
    ConvShape s = random_conv_shape(rng);
    s.out = std::min<std::size_t>(s.out, 4);
    s.c = std::min<std::size_t>(s.c, 3);
    auto x = random_doubles(rng, s.h * s.w * s.c);
    auto k = random_doubles(rng, s.kh * s.kw * s.c * s.out);
    auto b = random_doubles(rng, s.out);
    const std::size_t oh = oracle::out_extent(s.h, s.kh, s.sr);
    const std::size_t ow = oracle::out_extent(s.w, s.kw, s.sc);
    auto g = random_doubles(rng, oh * ow * s.out);
    auto loss = [&](const std::vector<double>& xx, const std::vector<double>& kk,
                    const std::vector<double>& bb) {
      const auto y = oracle::conv(xx, s.h, s.w, s.c, kk, s.kh, s.kw, s.out, bb, s.sr, s.sc);
      double l = 0;
      for (std::size_t i = 0; i < y.size(); ++i) l += g[i] * y[i];
      return l;
    };
    picar::BasicConvParams<double> p{picar::Tensor64({s.kh, s.kw, s.c, s.out}, k), b,
                                     {s.sr, s.sc}};
    const auto grads = picar::conv2d_backward(picar::Tensor64({s.h, s.w, s.c}, x), p,
                                              picar::Tensor64({oh, ow, s.out}, g));
    auto central = [&](std::vector<double>& v, std::size_t i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss(x, k, b);
      v[i] = keep - h;
      const double down = loss(x, k, b);
      v[i] = keep;
      return (up - down) / (2 * h);
    };
    const std::string tag = "conv instance " + std::to_string(n);
    for (std::size_t i = 0; i < x.size(); ++i) track(grads.input[i], central(x, i), tag + " input");
    for (std::size_t i = 0; i < k.size(); ++i) track(grads.kernels[i], central(k, i), tag + " kernel");
    for (std::size_t i = 0; i < b.size(); ++i) track(grads.bias[i], central(b, i), tag + " bias");
    ++o.instances;

    std::uniform_int_distribution<std::size_t> dim(1, 12);
    const std::size_t in = dim(rng), out = dim(rng);
    auto fx = random_doubles(rng, in);
    auto fw = random_doubles(rng, in * out);
    auto fb = random_doubles(rng, out);
    auto fg = random_doubles(rng, out);
    auto floss = [&] {
      const auto y = oracle::fc(fx, fw, out, fb);
      double l = 0;
      for (std::size_t i = 0; i < out; ++i) l += fg[i] * y[i];
      return l;
    };
    picar::BasicFcParams<double> fp{picar::Tensor64({out, in}, fw), fb};
    const auto fgr = picar::fc_backward<double>(fx, fp, fg);
    auto fcentral = [&](std::vector<double>& v, std::size_t i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = floss();
      v[i] = keep - h;
      const double down = floss();
      v[i] = keep;
      return (up - down) / (2 * h);
    };
    const std::string ftag = "fc instance " + std::to_string(n);
    for (std::size_t i = 0; i < in; ++i) track(fgr.input[i], fcentral(fx, i), ftag + " input");
    for (std::size_t i = 0; i < fw.size(); ++i) track(fgr.weights[i], fcentral(fw, i), ftag + " weight");
    for (std::size_t i = 0; i < out; ++i) track(fgr.bias[i], fcentral(fb, i), ftag + " bias");
    ++o.instances;

    // ReLU away from the kink: the mask must pass or zero exactly.
    auto pre = random_doubles(rng, 16);
    for (double& v : pre) v += v >= 0 ? 0.1 : -0.1;
    auto rg = random_doubles(rng, 16);
    auto masked = rg;
    picar::relu_backward_inplace<double>(pre, masked);
    for (std::size_t i = 0; i < pre.size(); ++i) {
      auto f = [&](double v) { return v > 0 ? v : 0.0; };
      track(masked[i], rg[i] * (f(pre[i] + h) - f(pre[i] - h)) / (2 * h), "relu");
    }
    ++o.instances;
  }
  return o;
}

}  // namespace checks
