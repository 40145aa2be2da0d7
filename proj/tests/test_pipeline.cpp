#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "csa/errors.hpp"
#include "csa/metrics.hpp"
#include "csa/pipeline.hpp"
#include "csa/synthdata.hpp"

using namespace csa;

namespace {

ModelShape small_shape() {
  ModelShape s;
  s.c_in = 8;
  s.length = 20;
  s.hidden = 8;
  s.c_out = 8;
  return s;
}

GenSpec small_spec(std::uint64_t seed = 3) {
  GenSpec g;
  g.num_videos = 12;
  g.length = 20;
  g.channels = 8;
  g.min_segments = 1;
  g.max_segments = 2;
  g.min_segment_length = 3;
  g.max_segment_length = 6;
  g.seed = seed;
  return g;
}

CsaConfig variant(Variant v) {
  CsaConfig c;
  c.variant = v;
  return c;
}

Grid random_grid(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 1);
  Grid g(r, c);
  for (double& v : g.values()) v = d(rng);
  return g;
}

std::vector<Grid> snapshot(Model& m) {
  std::vector<Grid> out;
  for (const auto& [name, p] : m.named_parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST(Model, PredictShapeAndRange) {
  std::mt19937_64 rng(1);
  for (Variant v : {Variant::NONE, Variant::CSA, Variant::FF_CSA, Variant::SE_BASELINE}) {
    for (Location loc : {Location::Start, Location::Middle, Location::End}) {
      CsaConfig cfg = variant(v);
      cfg.location = loc;
      const Model m(small_shape(), cfg, 5);
      const auto [ps, pe] = m.predict(random_grid(8, 20, rng));
      ASSERT_EQ(ps.size(), 20u);
      ASSERT_EQ(pe.size(), 20u);
      for (double p : ps) EXPECT_TRUE(p > 0 && p < 1);
      for (double p : pe) EXPECT_TRUE(p > 0 && p < 1);
    }
  }
}

TEST(Model, WrongInputShapeRejected) {
  const Model m(small_shape(), CsaConfig{}, 5);
  EXPECT_THROW(m.predict(Grid(7, 20)), ShapeError);
  EXPECT_THROW(m.predict(Grid(8, 19)), Error);
}

TEST(Model, ZeroInputIsDeterministic) {
  const Model m(small_shape(), CsaConfig{}, 5);
  const Grid zero(8, 20);
  EXPECT_EQ(m.predict(zero), m.predict(zero));
  const Model twin(small_shape(), CsaConfig{}, 5);
  EXPECT_EQ(m.predict(zero), twin.predict(zero));
}

TEST(Model, SaturatedTemporalGateMatchesNoAttention) {
  CsaConfig cfg;
  cfg.use_channel = false;
  Model with(small_shape(), cfg, 11);
  const Model without(small_shape(), variant(Variant::NONE), 11);
  DenseLayer& fc = with.attention().csa()->fc_temporal();
  fc.weight.value.fill(0.0);
  fc.bias.value.fill(100.0);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Grid r = random_grid(8, 20, rng);
    const auto [a_s, a_e] = with.predict(r);
    const auto [b_s, b_e] = without.predict(r);
    for (std::size_t t = 0; t < 20; ++t) {
      EXPECT_NEAR(a_s[t], b_s[t], 1e-9);
      EXPECT_NEAR(a_e[t], b_e[t], 1e-9);
    }
  }
}

TEST(Model, NoneVariantHasNoAttentionParameters) {
  Model m(small_shape(), variant(Variant::NONE), 1);
  EXPECT_EQ(m.attention_parameter_count(), 0u);
  for (const auto& [name, p] : m.named_parameters())
    EXPECT_EQ(name.find("attention"), std::string::npos) << name;
  std::size_t total = 0;
  for (const auto& [name, p] : m.named_parameters()) total += p->value.size();
  EXPECT_EQ(total, m.parameter_count());
}

TEST(Model, AttentionWidthFollowsLocation) {
  ModelShape s = small_shape();
  s.c_in = 6;
  s.hidden = 10;
  s.c_out = 4;
  CsaConfig cfg;
  cfg.use_temporal = false;
  cfg.location = Location::Start;
  EXPECT_EQ(Model(s, cfg, 1).attention_parameter_count(), 2 * (6 * 6 * 3 + 6) + 6 * 6 + 6);
  cfg.location = Location::Middle;
  EXPECT_EQ(Model(s, cfg, 1).attention_parameter_count(), 2 * (6 * 6 * 3 + 6) + 6 * 10 + 10);
  cfg.location = Location::End;
  EXPECT_EQ(Model(s, cfg, 1).attention_parameter_count(), 2 * (6 * 6 * 3 + 6) + 6 * 4 + 4);
}

TEST(BoundaryTargets, WindowAroundBoundaries) {
  const std::vector<Segment> segs{{0, 4, 1}, {10, 19, 2}};
  const auto [ts, te] = boundary_targets(segs, 20);
  const Vec1 want_s{1, 1, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  const Vec1 want_e{0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  EXPECT_EQ(ts, want_s);
  EXPECT_EQ(te, want_e);
}

TEST(BoundaryLoss, PerfectPredictionIsNearZero) {
  const std::vector<Segment> segs{{3, 9, 1}};
  const auto [ts, te] = boundary_targets(segs, 20);
  EXPECT_LT(boundary_loss(ts, te, segs), 1e-5);
}

TEST(BoundaryLoss, HalfEverywhereIsTwoLnTwo) {
  const Vec1 half(20, 0.5);
  EXPECT_NEAR(boundary_loss(half, half, std::vector<Segment>{{3, 9, 1}}), 2 * std::log(2.0),
              1e-12);
  EXPECT_NEAR(boundary_loss(half, half, std::vector<Segment>{}), 2 * std::log(2.0), 1e-12);
}

TEST(BoundaryLoss, NoPositivesFallsBackToPlainMean) {
  Vec1 p(10, 0.1);
  p[4] = 0.3;
  double want = 0.0;
  for (double v : p) want -= std::log(1 - v);
  want /= 10;
  EXPECT_NEAR(boundary_loss(p, p, std::vector<Segment>{}), 2 * want, 1e-12);
}

TEST(BoundaryLoss, ClassBalancedWeighting) {
  // One positive among four: positive and negative halves weigh 0.5 each.
  Tape tape;
  const Var p = tape.input(Grid::row(Vec1{0.8, 0.4, 0.2, 0.1}));
  const Var l = tape.balanced_bce(p, Vec1{1, 0, 0, 0});
  const double neg = -(std::log(0.6) + std::log(0.8) + std::log(0.9)) / 3;
  EXPECT_NEAR(tape.scalar(l), 0.5 * -std::log(0.8) + 0.5 * neg, 1e-12);
}

TEST(BoundaryLoss, InvariantToSegmentOrder) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  Vec1 ps(30), pe(30);
  for (double& v : ps) v = u(rng);
  for (double& v : pe) v = u(rng);
  std::vector<Segment> segs{{2, 6, 1}, {9, 15, 2}, {20, 28, 3}};
  const double base = boundary_loss(ps, pe, segs);
  std::sort(segs.begin(), segs.end(), [](auto& a, auto& b) { return a.start > b.start; });
  EXPECT_EQ(boundary_loss(ps, pe, segs), base);
  std::swap(segs[0], segs[1]);
  EXPECT_EQ(boundary_loss(ps, pe, segs), base);
}

TEST(BoundaryLoss, InvariantToJointTimePermutation) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 20; ++trial) {
    Vec1 p(15), y(15, 0.0);
    for (double& v : p) v = u(rng);
    for (std::size_t i = 0; i < 15; i += 4) y[i] = 1.0;
    std::vector<std::size_t> perm(15);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vec1 pp(15), yp(15);
    for (std::size_t i = 0; i < 15; ++i) {
      pp[i] = p[perm[i]];
      yp[i] = y[perm[i]];
    }
    Tape a, b;
    const double la = a.scalar(a.balanced_bce(a.input(Grid::row(p)), y));
    const double lb = b.scalar(b.balanced_bce(b.input(Grid::row(pp)), yp));
    EXPECT_NEAR(la, lb, 1e-12);
  }
}

TEST(Decode, OneHotBoundaries) {
  Vec1 ps(24, 0.0), pe(24, 0.0);
  ps[3] = 0.9;
  pe[10] = 0.7;
  const auto props = decode_proposals(ps, pe, 100, 12);
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0], (Proposal{3, 10, 0.9 * 0.7}));
}

TEST(Decode, UniformProbabilitiesEnumerateAllPairs) {
  const Vec1 half(5, 0.5);
  const auto props = decode_proposals(half, half, 100, 4);
  ASSERT_EQ(props.size(), 10u);
  std::size_t i = 0;
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t e = s + 1; e < 5; ++e, ++i) {
      EXPECT_EQ(props[i].start, s);
      EXPECT_EQ(props[i].end, e);
      EXPECT_EQ(props[i].score, 0.25);
    }
  }
}

TEST(Decode, EndBeforeStartYieldsNothing) {
  Vec1 ps(10, 0.0), pe(10, 0.0);
  ps[7] = 1.0;
  pe[2] = 1.0;
  EXPECT_TRUE(decode_proposals(ps, pe, 100, 9).empty());
}

TEST(Decode, ContractHoldsOnRandomInputs) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 2 + rng() % 40;
    const std::size_t d_max = 1 + rng() % t;
    const std::size_t max_props = 1 + rng() % 60;
    Vec1 ps(t), pe(t);
    for (double& v : ps) v = u(rng);
    for (double& v : pe) v = u(rng);
    const auto props = decode_proposals(ps, pe, max_props, d_max);
    EXPECT_LE(props.size(), max_props);
    for (std::size_t i = 0; i < props.size(); ++i) {
      const Proposal& p = props[i];
      EXPECT_LT(p.start, p.end);
      EXPECT_LE(p.end - p.start, d_max);
      EXPECT_LT(p.end, t);
      EXPECT_EQ(p.score, ps[p.start] * pe[p.end]);
      if (i > 0) EXPECT_GE(props[i - 1].score, p.score);
      for (std::size_t j = 0; j < i; ++j) {
        EXPECT_LE(metrics::tiou({double(p.start), double(p.end)},
                                {double(props[j].start), double(props[j].end)}),
                  0.9);
      }
    }
  }
}

TEST(Train, ZeroLearningRateChangesNothing) {
  const auto videos = generate(small_spec());
  const auto [tr, va] = split(videos, 0.75, 1);
  Model m(small_shape(), CsaConfig{}, 9);
  const auto before = snapshot(m);
  TrainOptions opts;
  opts.epochs = 3;
  opts.lr = 0.0;
  const auto hist = train(m, tr, va, opts);
  EXPECT_EQ(snapshot(m), before);
  ASSERT_EQ(hist.size(), 3u);
  for (const auto& rec : hist) {
    EXPECT_EQ(rec.train_loss, hist[0].train_loss);
    EXPECT_EQ(rec.val_loss, hist[0].val_loss);
  }
}

TEST(Train, SameSeedIsBitwiseReproducible) {
  const auto videos = generate(small_spec());
  const auto [tr, va] = split(videos, 0.75, 1);
  TrainOptions opts;
  opts.epochs = 3;
  opts.seed = 17;
  auto run = [&] {
    Model m(small_shape(), CsaConfig{}, 9);
    auto hist = train(m, tr, va, opts);
    return std::make_pair(hist, snapshot(m));
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.first.size(), b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) {
    EXPECT_EQ(a.first[i].train_loss, b.first[i].train_loss);
    EXPECT_EQ(a.first[i].val_loss, b.first[i].val_loss);
    EXPECT_EQ(a.first[i].val_map_avg, b.first[i].val_map_avg);
  }
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, LossDecreases) {
  const auto videos = generate(small_spec());
  const auto [tr, va] = split(videos, 0.75, 1);
  Model m(small_shape(), CsaConfig{}, 9);
  TrainOptions opts;
  opts.epochs = 6;
  opts.lr = 5e-3;
  std::vector<std::size_t> seen;
  const auto hist = train(m, tr, va, opts, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  ASSERT_EQ(hist.size(), 6u);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3, 4, 5, 6}));
  EXPECT_LT(hist.back().train_loss, hist.front().train_loss);
  for (const auto& r : hist) {
    EXPECT_GE(r.val_map_avg, 0.0);
    EXPECT_LE(r.val_map_avg, 1.0);
  }
}

TEST(Train, DivergenceIsReported) {
  const auto videos = generate(small_spec());
  const auto [tr, va] = split(videos, 0.75, 1);
  Model m(small_shape(), variant(Variant::NONE), 9);
  for (const auto& [name, p] : m.named_parameters())
    if (name.rfind("head.start", 0) == 0) p->value.fill(std::nan(""));
  TrainOptions opts;
  opts.epochs = 1;
  EXPECT_THROW(train(m, tr, va, opts), DivergenceError);
}

TEST(Evaluate, ClassAgnosticAndBounded) {
  const auto videos = generate(small_spec());
  const Model m(small_shape(), CsaConfig{}, 9);
  const Evaluation ev = evaluate(m, videos, TrainOptions{});
  EXPECT_TRUE(std::isfinite(ev.loss));
  for (const auto& g : ev.ground_truth) EXPECT_EQ(g.class_id, 0);
  for (const auto& d : ev.detections) EXPECT_EQ(d.class_id, 0);
  EXPECT_EQ(ev.map.classes, std::vector<int>{0});
  for (double v : ev.map.map) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
