#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "csa/attention.hpp"
#include "csa/errors.hpp"
#include "csa/gradcheck.hpp"
#include "csa/ops.hpp"

using namespace csa;

namespace {

constexpr std::size_t kCin = 4, kCout = 3, kT = 7;

Grid random_grid(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  Grid g(r, c);
  for (double& v : g.values()) v = d(rng);
  return g;
}

void zero(DenseLayer& l, double bias = 0.0) {
  l.weight.value.fill(0.0);
  l.bias.value.fill(bias);
}

CsaConfig temporal_only() {
  CsaConfig c;
  c.use_channel = false;
  return c;
}

CsaConfig channel_only() {
  CsaConfig c;
  c.use_temporal = false;
  return c;
}

void perturb(const NamedParams& params, const std::string& needle, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 0.3);
  for (const auto& [name, p] : params)
    if (name.find(needle) != std::string::npos)
      for (double& v : p->value.values()) v += d(rng);
}

}  // namespace

TEST(CsaConfig, Validation) {
  CsaConfig c;
  EXPECT_NO_THROW(c.validate());
  c.kernel_size = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CsaConfig{};
  c.conv_blocks = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.conv_blocks = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CsaConfig{};
  c.use_temporal = c.use_channel = false;
  EXPECT_THROW(c.validate(), ConfigError);
  c.variant = Variant::SE_BASELINE;
  EXPECT_NO_THROW(c.validate());
}

TEST(TemporalAttention, ZeroedFcGivesHalf) {
  std::mt19937_64 rng(1);
  CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
  zero(m.fc_temporal());
  EXPECT_EQ(temporal_attention(m, random_grid(kCin, kT, rng)), Vec1(kT, 0.5));
}

TEST(TemporalAttention, SaturatedBiasGivesOnes) {
  std::mt19937_64 rng(2);
  CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
  zero(m.fc_temporal(), 100.0);
  for (double a : temporal_attention(m, random_grid(kCin, kT, rng))) EXPECT_NEAR(a, 1.0, 1e-12);
}

TEST(TemporalAttention, RangeAndShape) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
    const Vec1 a = temporal_attention(m, random_grid(kCin, kT, rng));
    ASSERT_EQ(a.size(), kT);
    for (double v : a) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(TemporalAttention, ShapeMismatch) {
  std::mt19937_64 rng(3);
  CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
  EXPECT_THROW(temporal_attention(m, Grid(kCin + 1, kT)), ShapeError);
  EXPECT_THROW(temporal_attention(m, Grid(kCin, kT + 1)), ShapeError);
}

TEST(ChannelAttention, ZeroedFcGivesHalf) {
  std::mt19937_64 rng(4);
  CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
  zero(m.fc_channel());
  EXPECT_EQ(channel_attention(m, random_grid(kCin, kT, rng)), Vec1(kCout, 0.5));
}

TEST(ChannelAttention, LengthIsCoutForAnyShape) {
  std::mt19937_64 rng(5);
  for (std::size_t cin : {1, 3, 8}) {
    for (std::size_t t : {1, 2, 11}) {
      CsaModule m(cin, 5, t, CsaConfig{}, rng);
      EXPECT_EQ(channel_attention(m, random_grid(cin, t, rng)).size(), 5u);
    }
  }
}

TEST(ChannelAttention, DegenerateSingleTimepoint) {
  std::mt19937_64 rng(6);
  CsaModule m(kCin, kCout, 1, CsaConfig{}, rng);
  const Vec1 a = channel_attention(m, random_grid(kCin, 1, rng));
  EXPECT_EQ(a.size(), kCout);
}

TEST(ApplyCsa, IdentityGatingTemporalOnly) {
  std::mt19937_64 rng(7);
  const CsaConfig cfg = temporal_only();
  CsaModule m(kCin, kCout, kT, cfg, rng);
  zero(m.fc_temporal(), 100.0);
  const Grid f = random_grid(kCout, kT, rng);
  const Grid out = apply_csa(m, cfg, random_grid(kCin, kT, rng), f);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out[i], f[i], 1e-9);
}

TEST(ApplyCsa, ZeroTemporalGateZeroesOutput) {
  std::mt19937_64 rng(8);
  const CsaConfig cfg = temporal_only();
  CsaModule m(kCin, kCout, kT, cfg, rng);
  zero(m.fc_temporal(), -1000.0);
  const Grid out = apply_csa(m, cfg, random_grid(kCin, kT, rng), random_grid(kCout, kT, rng));
  for (double v : out.values()) EXPECT_NEAR(v, 0.0, 1e-300);
}

TEST(ApplyCsa, GatedFeaturesMatchElementwiseLoop) {
  std::mt19937_64 rng(9);
  const CsaConfig cfg;
  CsaModule m(kCin, kCout, kT, cfg, rng);
  const Grid r = random_grid(kCin, kT, rng), f = random_grid(kCout, kT, rng);
  const Vec1 at = temporal_attention(m, r), ac = channel_attention(m, r);

  Tape tape;
  const Var rv = tape.input(r), fv = tape.input(f);
  const Var f_t = tape.broadcast_mul_row(m.temporal_attention(tape, rv), fv);
  const Var f_c = tape.broadcast_mul_col(m.channel_attention(tape, rv), fv);
  for (std::size_t c = 0; c < kCout; ++c) {
    for (std::size_t t = 0; t < kT; ++t) {
      EXPECT_EQ(tape.value(f_t)(c, t), at[t] * f(c, t));
      EXPECT_EQ(tape.value(f_c)(c, t), ac[c] * f(c, t));
    }
  }

  // Fused output: ReLU(1x1 conv over [F_AT; F_AC]) computed by hand.
  const Grid fused = apply_csa(m, cfg, r, f);
  ASSERT_EQ(fused.rows(), kCout);
  ASSERT_EQ(fused.cols(), kT);
  const Conv1dLayer& proj = m.fusion_projection();
  for (std::size_t o = 0; o < kCout; ++o) {
    for (std::size_t t = 0; t < kT; ++t) {
      double acc = proj.bias.value[o];
      for (std::size_t c = 0; c < kCout; ++c) {
        acc += proj.w(o, c, 0) * at[t] * f(c, t);
        acc += proj.w(o, kCout + c, 0) * ac[c] * f(c, t);
      }
      EXPECT_NEAR(fused(o, t), std::max(0.0, acc), 1e-12);
    }
  }
}

TEST(ApplyCsa, AddFusionIsSumOfBranches) {
  std::mt19937_64 rng(10);
  CsaConfig cfg;
  cfg.fusion = Fusion::Add;
  CsaModule m(kCin, kCout, kT, cfg, rng);
  const Grid r = random_grid(kCin, kT, rng), f = random_grid(kCout, kT, rng);
  const Vec1 at = temporal_attention(m, r), ac = channel_attention(m, r);
  const Grid out = apply_csa(m, cfg, r, f);
  for (std::size_t c = 0; c < kCout; ++c)
    for (std::size_t t = 0; t < kT; ++t) EXPECT_NEAR(out(c, t), at[t] * f(c, t) + ac[c] * f(c, t), 1e-15);
}

TEST(ApplyCsa, AlignmentError) {
  std::mt19937_64 rng(11);
  CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
  EXPECT_THROW(apply_csa(m, CsaConfig{}, Grid(kCin, kT), Grid(kCout, kT + 1)), AlignmentError);
}

TEST(ApplyCsa, ConfigCannotRequestUnbuiltBranch) {
  std::mt19937_64 rng(12);
  CsaModule m(kCin, kCout, kT, temporal_only(), rng);
  EXPECT_THROW(apply_csa(m, CsaConfig{}, Grid(kCin, kT), Grid(kCout, kT)), ConfigError);
}

TEST(FfCsa, ZeroBottleneckGivesHalfF) {
  std::mt19937_64 rng(13);
  FfCsaModule m(kCin, kCout, 4, rng);
  zero(m.excite());
  const Grid f = random_grid(kCout, kT, rng);
  const Grid out = apply_ff_csa(m, random_grid(kCin, kT, rng), f);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out[i], 0.5 * f[i]);
}

TEST(FfCsa, ShapeLaw) {
  std::mt19937_64 rng(14);
  for (std::size_t cin : {2, 5, 16}) {
    for (std::size_t cout : {1, 3, 8}) {
      FfCsaModule m(cin, cout, 4, rng);
      const Grid out = apply_ff_csa(m, random_grid(cin, 6, rng), random_grid(cout, 6, rng));
      EXPECT_EQ(out.rows(), cout);
      EXPECT_EQ(out.cols(), 6u);
    }
  }
}

TEST(FfCsa, FewerParametersThanOneConvCsa) {
  // Counted by hand from the layer shapes (C_in=400, T=100, C_out=256, r=4):
  //   FF-CSA: 400*100 + 100 + 100*256 + 256                       = 65956
  //   CSA 1-conv: 2 * (400*400*3 + 400)  two branch convs
  //             + 100*100 + 100          fc_T
  //             + 400*256 + 256          channel fc
  //             + 512*256 + 256          fusion projection        = 1204884
  const std::size_t ff_expected = 400 * 100 + 100 + 100 * 256 + 256;
  const std::size_t csa_expected = 2 * (400 * 400 * 3 + 400) + (100 * 100 + 100) +
                                   (400 * 256 + 256) + (512 * 256 + 256);
  EXPECT_EQ(ff_expected, 65956u);
  EXPECT_EQ(csa_expected, 1204884u);

  std::mt19937_64 rng(15);
  CsaConfig cfg;
  cfg.conv_blocks = 1;
  FfCsaModule ff(400, 256, 4, rng);
  CsaModule csa(400, 256, 100, cfg, rng);
  EXPECT_EQ(ff.parameter_count(), ff_expected);
  EXPECT_EQ(csa.parameter_count(), csa_expected);
  EXPECT_LT(ff.parameter_count(), csa.parameter_count());
}

TEST(Se, ZeroedDenseGivesHalfF) {
  std::mt19937_64 rng(16);
  SeModule m(8, 4, rng);
  zero(m.squeeze());
  zero(m.excite());
  const Grid f = random_grid(8, kT, rng);
  const Grid out = apply_se(m, f);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out[i], 0.5 * f[i]);
}

TEST(Se, ZeroInputStaysZero) {
  std::mt19937_64 rng(17);
  SeModule m(8, 4, rng);
  EXPECT_EQ(apply_se(m, Grid(8, kT)), Grid(8, kT));
}

TEST(Se, MatchesLoopOracle) {
  std::mt19937_64 rng(18);
  SeModule m(8, 4, rng);
  const Grid f = random_grid(8, kT, rng);
  Vec1 mean(8, 0.0);
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t t = 0; t < kT; ++t) mean[c] += f(c, t);
    mean[c] /= kT;
  }
  Vec1 hidden(2);
  for (std::size_t h = 0; h < 2; ++h) {
    double acc = m.squeeze().bias.value[h];
    for (std::size_t c = 0; c < 8; ++c) acc += m.squeeze().weight.value(h, c) * mean[c];
    hidden[h] = std::max(0.0, acc);
  }
  const Grid out = apply_se(m, f);
  for (std::size_t c = 0; c < 8; ++c) {
    double acc = m.excite().bias.value[c];
    for (std::size_t h = 0; h < 2; ++h) acc += m.excite().weight.value(c, h) * hidden[h];
    const double g = 1.0 / (1.0 + std::exp(-acc));
    for (std::size_t t = 0; t < kT; ++t) EXPECT_NEAR(out(c, t), g * f(c, t), 1e-14);
  }
}

TEST(Se, ReductionMustDivide) {
  std::mt19937_64 rng(19);
  EXPECT_THROW(SeModule(6, 4, rng), ConfigError);
}

// ---------------------------------------------------------------------------
// Properties

TEST(AttentionProperties, GatesStrictlyInsideUnitInterval) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
    SeModule se(8, 4, rng);
    std::normal_distribution<double> big(0, 10);
    Grid r(kCin, kT);
    for (double& v : r.values()) v = big(rng);
    for (double a : temporal_attention(m, r)) EXPECT_TRUE(a > 0 && a < 1);
    for (double a : channel_attention(m, r)) EXPECT_TRUE(a > 0 && a < 1);
    Tape tape;
    Grid f(8, kT);
    for (double& v : f.values()) v = big(rng);
    for (double g : tape.value(se.gate(tape, tape.input(f))).values()) EXPECT_TRUE(g > 0 && g < 1);
  }
}

TEST(AttentionProperties, SingleBranchAttenuates) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    for (const CsaConfig& cfg : {temporal_only(), channel_only()}) {
      CsaModule m(kCin, kCout, kT, cfg, rng);
      const Grid f = random_grid(kCout, kT, rng);
      const Grid out = apply_csa(m, cfg, random_grid(kCin, kT, rng), f);
      for (std::size_t i = 0; i < f.size(); ++i) EXPECT_LE(std::abs(out[i]), std::abs(f[i]));
    }
  }
}

TEST(AttentionProperties, ShapePreservedForEveryVariant) {
  std::mt19937_64 rng(20);
  for (Variant v : {Variant::CSA, Variant::FF_CSA, Variant::SE_BASELINE, Variant::NONE}) {
    for (std::size_t k : {1, 3, 5}) {
      for (std::size_t blocks : {1, 2, 3}) {
        CsaConfig cfg;
        cfg.variant = v;
        cfg.kernel_size = k;
        cfg.conv_blocks = blocks;
        AttentionBlock block(cfg, kCin, 8, kT, rng);
        Tape tape;
        const Grid out =
            tape.value(block.apply(tape, tape.input(random_grid(kCin, kT, rng)),
                                   tape.input(random_grid(8, kT, rng))));
        EXPECT_EQ(out.rows(), 8u);
        EXPECT_EQ(out.cols(), kT);
      }
    }
  }
}

TEST(AttentionProperties, BranchIndependence) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
    const Grid r = random_grid(kCin, kT, rng), f = random_grid(kCout, kT, rng);
    const Grid t_before = apply_csa(m, temporal_only(), r, f);
    const Grid c_before = apply_csa(m, channel_only(), r, f);
    perturb(m.named_parameters("m"), ".channel.", rng);
    EXPECT_EQ(apply_csa(m, temporal_only(), r, f), t_before);
    EXPECT_NE(apply_csa(m, channel_only(), r, f), c_before);
    perturb(m.named_parameters("m"), ".temporal.", rng);
    EXPECT_NE(apply_csa(m, temporal_only(), r, f), t_before);
  }
}

TEST(AttentionProperties, TemporalBranchIgnoresOtherBranchParameters) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    CsaModule m(kCin, kCout, kT, CsaConfig{}, rng);
    const Grid r = random_grid(kCin, kT, rng), f = random_grid(kCout, kT, rng);
    const Grid c_before = apply_csa(m, channel_only(), r, f);
    perturb(m.named_parameters("m"), ".temporal.", rng);
    perturb(m.named_parameters("m"), ".fuse.", rng);
    EXPECT_EQ(apply_csa(m, channel_only(), r, f), c_before);
  }
}

TEST(AttentionProperties, SourceDependence) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    CsaConfig csa_cfg;
    CsaConfig se_cfg;
    se_cfg.variant = Variant::SE_BASELINE;
    AttentionBlock csa(csa_cfg, kCin, 8, kT, rng);
    AttentionBlock se(se_cfg, kCin, 8, kT, rng);
    const Grid r = random_grid(kCin, kT, rng), f = random_grid(8, kT, rng);
    Grid r2 = r;
    for (double& v : r2.values()) v += 0.25;
    auto run = [&](const AttentionBlock& b, const Grid& src) {
      Tape tape;
      return tape.value(b.apply(tape, tape.input(src), tape.input(f)));
    };
    EXPECT_NE(run(csa, r), run(csa, r2));
    EXPECT_EQ(run(se, r), run(se, r2));
  }
}

TEST(AttentionProperties, ChannelPermutationCommutesWithTemporalGating) {
  std::mt19937_64 rng(21);
  const CsaConfig cfg = temporal_only();
  CsaModule m(kCin, kCout, kT, cfg, rng);
  const Grid r = random_grid(kCin, kT, rng), f = random_grid(kCout, kT, rng);
  const std::vector<std::size_t> perm{2, 0, 1};
  Grid fp(kCout, kT);
  for (std::size_t c = 0; c < kCout; ++c)
    for (std::size_t t = 0; t < kT; ++t) fp(c, t) = f(perm[c], t);
  const Grid out = apply_csa(m, cfg, r, f);
  const Grid out_p = apply_csa(m, cfg, r, fp);
  for (std::size_t c = 0; c < kCout; ++c)
    for (std::size_t t = 0; t < kT; ++t) EXPECT_EQ(out_p(c, t), out(perm[c], t));
}

TEST(AttentionProperties, GradientsForAllVariants) {
  for (const auto& r : run_gradcheck_suite(77, 20)) {
    const bool attention = r.name.rfind("CSA", 0) == 0 || r.name == "SE" || r.name == "FF-CSA";
    if (!attention) continue;
    EXPECT_TRUE(r.passed) << r.name << " max rel err " << r.max_rel_error << " kinks "
                          << r.kink_skipped << "/" << r.entries;
  }
}
