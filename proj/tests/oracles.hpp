#pragma once
// Independent oracles shared by the unit tests and the acceptance binary.
// Each returns a verdict plus a human-readable detail line.

#include <chrono>
#include <sstream>

#include "quantart/fusion.hpp"
#include "quantart/metrics.hpp"
#include "support.hpp"

namespace qt_test {

struct Verdict {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Vector quantization against an exhaustive long-double search.

inline std::int32_t exhaustive_nearest(const double* z, const std::vector<double>& codes, std::size_t n,
                                       std::size_t d) {
  std::int32_t best = 0;
  long double best_d = 0;
  for (std::size_t k = 0; k < n; ++k) {
    long double acc = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const long double diff = static_cast<long double>(z[c]) - codes[k * d + c];
      acc += diff * diff;
    }
    if (k == 0 || acc < best_d) best_d = acc, best = static_cast<std::int32_t>(k);
  }
  return best;
}

struct VqOracleStats {
  std::size_t cases = 0, vectors = 0, mismatches = 0, tie_cases = 0;
  std::size_t max_n = 0, max_d = 0;
  double seconds = 0;
};

// Random (N, d) up to (1024, 256), always including the largest shape. A
// third of the cases duplicate codebook rows and plant queries on them so the
// lowest-index rule is exercised.
inline VqOracleStats vq_oracle(std::size_t cases = 1000, std::uint64_t seed = 11) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed);
  VqOracleStats st;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = c == 0 ? 1024 : pick(rng, 1, 1024);
    const std::size_t d = c == 0 ? 256 : std::size_t(1) << pick(rng, 0, 8);
    const std::size_t dd = c == 0 ? 256 : std::max<std::size_t>(1, d - pick(rng, 0, d / 2));
    const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4), B = pick(rng, 1, 2);
    auto entries = TensorD::randn({n, dd}, rng);
    auto z = TensorD::randn({B, dd, h, w}, rng);
    std::vector<double> ev = entries.values();
    std::vector<double> zv = z.values();
    const bool ties = n >= 2 && c % 3 == 1;
    if (ties) {
      ++st.tie_cases;
      // row j duplicates row i < j; every query at (b, :, 0, 0) sits on it
      const std::size_t i = pick(rng, 0, n - 2), j = pick(rng, i + 1, n - 1);
      std::copy(ev.begin() + i * dd, ev.begin() + (i + 1) * dd, ev.begin() + j * dd);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t ch = 0; ch < dd; ++ch) zv[((b * dd + ch) * h) * w] = ev[j * dd + ch];
      entries = TensorD::from({n, dd}, ev);
      z = TensorD::from({B, dd, h, w}, zv);
    }
    const auto q = quantize(z, Codebook<double>::from_entries(entries, Domain::photo));
    std::vector<double> query(dd);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < h * w; ++p) {
        for (std::size_t ch = 0; ch < dd; ++ch) query[ch] = zv[(b * dd + ch) * h * w + p];
        const auto expect = exhaustive_nearest(query.data(), ev, n, dd);
        if (q.indices[b * h * w + p] != expect) ++st.mismatches;
        ++st.vectors;
      }
    ++st.cases;
    st.max_n = std::max(st.max_n, n);
    st.max_d = std::max(st.max_d, dd);
  }
  st.seconds = seconds_since(t0);
  return st;
}

// ---------------------------------------------------------------------------
// Straight-through estimator and stop-gradient routing.

inline Verdict straight_through_contract(std::uint64_t seed = 5) {
  Verdict v;
  Rng rng(seed);
  nn::StackConfig sc;
  sc.base_channels = 4;
  sc.channel_mult = {1};
  sc.res_blocks = 1;
  sc.latent_dim = 4;
  sc.groups = 2;
  nn::Decoder<double> dec(sc, rng);
  auto cb = Codebook<double>::from_entries(TensorD::randn({6, 4}, rng, 1.0, true), Domain::art);
  auto z = TensorD::randn({2, 4, 3, 3}, rng, 1.0, true);
  const auto r = TensorD::randn({2, 3, 6, 6}, rng);

  // 1. ST gradient with respect to z equals the decoder-input gradient at
  //    the frozen quantized value, and that one matches central differences.
  const auto q = quantize(z, cb);
  const auto g_st = backward(sum(mul(dec.forward(q.straight_through), r))).of(z);
  auto u = q.quantized.detach(true);
  auto frozen = [&] { return sum(mul(dec.forward(u), r)); };
  const auto g_frozen = backward(frozen()).of(u);
  if (g_st != g_frozen) v.fail("straight-through gradient differs from the frozen-index gradient");
  const auto fd = gradcheck(frozen, {&u}, rng, 72);
  if (!(fd.rel_error < 1e-4)) v.fail("frozen-index gradient fails finite differences: " + std::to_string(fd.rel_error));
  if (backward(sum(mul(dec.forward(q.straight_through), r))).of(cb.entries) != std::vector<double>(cb.entries.numel(), 0.0))
    v.fail("reconstruction gradient reached the codebook through the straight-through path");

  // 2. sg routing of the two VQ terms, asserted exactly.
  const auto losses = vq_losses(z, q);
  const auto gc = backward(losses.codebook_term);
  const auto gm = backward(losses.commitment_term);
  const std::vector<double> zeros_z(z.numel(), 0.0), zeros_e(cb.entries.numel(), 0.0);
  if (gc.of(z) != zeros_z) v.fail("codebook term sent gradient to the encoder path");
  if (gc.of(cb.entries) == zeros_e) v.fail("codebook term sent no gradient to the entries");
  if (gm.of(cb.entries) != zeros_e) v.fail("commitment term sent gradient to the entries");
  if (gm.of(z) == zeros_z) v.fail("commitment term sent no gradient to the encoder path");

  // 3. Same routing inside the full objective: the entries receive exactly
  //    w.codebook times the codebook-term gradient.
  nn::PatchDiscriminator<double> disc(nn::DiscriminatorKind::image, 3, 2, rng);
  const LossWeights w;
  const auto x = TensorD::randn({2, 3, 6, 6}, rng);
  const auto q2 = quantize(z, cb);
  const auto x_rec = dec.forward(q2.straight_through);
  const auto total = vq_ae_loss(x, x_rec, z, q2, disc, w, 0.8).total;
  const auto g_total = backward(total).of(cb.entries);
  auto g_expect = backward(vq_losses(z, q2).codebook_term).of(cb.entries);
  for (auto& e : g_expect) e *= w.codebook;
  if (g_total != g_expect) v.fail("entries' gradient in the full objective is not the codebook term's alone");

  // 4. Each term matches central differences on its own leaves.
  auto ct = [&] { return vq_losses(z, quantize(z, cb)).codebook_term; };
  auto mt = [&] { return vq_losses(z, quantize(z, cb)).commitment_term; };
  const auto fc = gradcheck(ct, {&cb.entries}, rng, 24), fm = gradcheck(mt, {&z}, rng, 72);
  if (!(fc.rel_error < 1e-4 && fm.rel_error < 1e-4))
    v.fail("VQ term gradients fail finite differences: " + std::to_string(fc.rel_error) + ", " +
           std::to_string(fm.rel_error));
  if (v.pass) {
    std::ostringstream os;
    os << "ST == frozen-index grad (exact), FD rel " << fd.rel_error << "; sg routing exact";
    v.detail = os.str();
  }
  return v;
}

// ---------------------------------------------------------------------------
// alpha/beta fusion identities on a randomly initialized bundle.

inline ModelBundle<float> fusion_bundle(std::uint64_t seed = 3) {
  auto cfg = tiny_model_config();
  return ModelBundle<float>(cfg, seed);
}

inline std::size_t count_nonmember_rows(const TensorF& z_test, const TensorF& entries) {
  const auto tokens = to_tokens(z_test);
  const std::size_t d = entries.dim(1), n = entries.dim(0), m = tokens.numel() / d;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < m; ++i) {
    bool found = false;
    for (std::size_t k = 0; k < n && !found; ++k)
      found = std::memcmp(&tokens.data()[i * d], &entries.data()[k * d], d * sizeof(float)) == 0;
    bad += !found;
  }
  return bad;
}

inline Verdict fusion_identities(std::uint64_t seed = 3) {
  Verdict v;
  auto bundle = fusion_bundle(seed);
  Rng rng(seed + 1);
  const auto s = bundle.config.image_size;
  const auto content = TensorF::uniform({2, 3, s, s}, rng, -1, 1);
  const auto style_a = TensorF::uniform({2, 3, s, s}, rng, -1, 1);
  const auto style_b = TensorF::uniform({2, 3, s, s}, rng, -1, 1);

  for (auto mode : {DecoderFusion::parameters, DecoderFusion::outputs})
    for (double alpha : {0.0, 0.3, 1.0}) {
      const auto ya = stylize(content, style_a, {alpha, 0.0}, bundle, mode);
      const auto yb = stylize(content, style_b, {alpha, 0.0}, bundle, mode);
      if (!bit_equal(ya, yb)) v.fail("beta = 0 output depends on the style at alpha = " + std::to_string(alpha));
    }

  {
    NoGradGuard ng;
    const auto expect = bundle.art.decoder.forward(bundle.photo.encode(content));
    for (auto mode : {DecoderFusion::parameters, DecoderFusion::outputs})
      if (!bit_equal(stylize(content, style_a, {0.0, 0.0}, bundle, mode), expect))
        v.fail("(0, 0) output is not D_S(z_c)");
  }

  const auto t11 = stylize_trace(content, style_a, {1.0, 1.0}, bundle);
  if (const auto bad = count_nonmember_rows(t11.z_test, bundle.art_hat.codebook.entries))
    v.fail(std::to_string(bad) + " decoder input rows at (1, 1) are not art codebook entries");

  double worst = 0;
  for (int i = 0; i <= 4; ++i)
    for (int j = 0; j <= 4; ++j) {
      const double a = i / 4.0, b = j / 4.0;
      const auto t = stylize_trace(content, style_a, {a, b}, bundle);
      for (std::size_t k = 0; k < t.z_test.numel(); ++k) {
        const double expect = a * b * t.zhat_y[k] + a * (1 - b) * t.zhat_c[k] + (1 - a) * b * t.z_y[k] +
                              (1 - a) * (1 - b) * t.z_c[k];
        worst = std::max(worst, std::abs(expect - t.z_test[k]));
      }
    }
  if (!(worst <= 1e-5)) v.fail("bilinearity error " + std::to_string(worst) + " over the 5x5 grid");
  if (v.pass) {
    std::ostringstream os;
    os << "beta=0 style-free, (0,0) == D_S(z_c), (1,1) rows in codebook, bilinear max err " << worst;
    v.detail = os.str();
  }
  return v;
}

inline Verdict fused_decoder_endpoints(std::uint64_t seed = 3) {
  Verdict v;
  auto bundle = fusion_bundle(seed);
  auto check = [&](double alpha, nn::Decoder<float>& expect, const char* name) {
    auto fused = build_fused_decoder(bundle.art_hat.decoder, bundle.art.decoder, alpha);
    auto fp = nn::parameters(fused);
    auto ep = nn::parameters(expect);
    if (fp.size() != ep.size()) return v.fail(std::string("parameter count differs from ") + name);
    for (std::size_t i = 0; i < fp.size(); ++i)
      if (!bit_equal(*fp[i].tensor, *ep[i].tensor)) return v.fail(std::string("parameter ") + fp[i].name + " differs from " + name);
  };
  check(0.0, bundle.art.decoder, "D_S");
  check(1.0, bundle.art_hat.decoder, "D^_S");
  if (v.pass) v.detail = "alpha=0 -> D_S, alpha=1 -> D^_S, all parameters bit-identical";
  return v;
}

// ---------------------------------------------------------------------------
// Frechet distance against the diagonal closed form.

struct FrechetOracleStats {
  std::size_t cases = 0;
  double max_error = 0;
  double identical = 0;  // largest |distance| between identical moments
};

inline FrechetOracleStats frechet_oracle(std::size_t cases = 100, std::uint64_t seed = 17) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> var(0.05, 4.0);
  FrechetOracleStats st;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t d = pick(rng, 1, 48);
    GaussianMoments a, b;
    a.mean.resize(d), b.mean.resize(d), a.cov.assign(d * d, 0.0), b.cov.assign(d * d, 0.0);
    double expect = 0;
    for (std::size_t i = 0; i < d; ++i) {
      a.mean[i] = 3 * nd(rng), b.mean[i] = 3 * nd(rng);
      const double va = var(rng), vb = var(rng);
      a.cov[i * d + i] = va, b.cov[i * d + i] = vb;
      expect += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]) +
                (std::sqrt(va) - std::sqrt(vb)) * (std::sqrt(va) - std::sqrt(vb));
    }
    st.max_error = std::max(st.max_error, std::abs(frechet_distance(a, b) - expect));
    st.identical = std::max({st.identical, std::abs(frechet_distance(a, a)), std::abs(frechet_distance(b, b))});
    ++st.cases;
  }
  // Identical full (non-diagonal) moments as well.
  for (int c = 0; c < 10; ++c) {
    const std::size_t d = pick(rng, 2, 16), n = 4 * d;
    std::vector<double> x(n * d);
    for (auto& e : x) e = nd(rng);
    const auto m = gaussian_moments(x, n, d);
    st.identical = std::max(st.identical, std::abs(frechet_distance(m, m)));
  }
  return st;
}

}  // namespace qt_test
