#include "csa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "csa/adam.hpp"
#include "csa/errors.hpp"

namespace csa {

namespace {

constexpr std::size_t kEncoderKernel = 3;
constexpr std::size_t kHeadKernel = 3;
constexpr double kNmsThreshold = 0.9;

std::size_t attention_width(const ModelShape& s, Location loc) {
  switch (loc) {
    case Location::Start: return s.c_in;
    case Location::Middle: return s.hidden;
    case Location::End: return s.c_out;
  }
  return s.c_out;
}

void append_layer(NamedParams& out, const std::string& path, Conv1dLayer& l) {
  out.emplace_back(path + ".weight", &l.weight);
  out.emplace_back(path + ".bias", &l.bias);
}

}  // namespace

Model::Model(const ModelShape& shape, const CsaConfig& cfg, std::uint64_t seed)
    : shape_(shape),
      attention_(cfg, shape.c_in, attention_width(shape, cfg.location), shape.length,
                 derive_seed(seed, 2)) {
  if (shape.c_in == 0 || shape.length == 0 || shape.hidden == 0 || shape.c_out == 0) {
    throw ConfigError("model: all dimensions must be positive");
  }
  // Encoder and heads draw from their own stream so that every attention
  // variant starts from the same backbone for a given seed.
  std::mt19937_64 rng(derive_seed(seed, 1));
  encoder_.emplace_back(shape.c_in, shape.hidden, kEncoderKernel);
  encoder_.emplace_back(shape.hidden, shape.hidden, kEncoderKernel);
  encoder_.emplace_back(shape.hidden, shape.c_out, kEncoderKernel);
  for (auto& l : encoder_) kaiming_init(l, rng);
  start_head_ = Conv1dLayer(shape.c_out, 1, kHeadKernel);
  end_head_ = Conv1dLayer(shape.c_out, 1, kHeadKernel);
  kaiming_init(start_head_, rng);
  kaiming_init(end_head_, rng);
}

Model::Output Model::forward(Tape& tape, Var r) const {
  const Grid& rv = tape.value(r);
  if (rv.rows() != shape_.c_in || rv.cols() != shape_.length) {
    throw ShapeError("model expects R of shape " + std::to_string(shape_.c_in) + "x" +
                     std::to_string(shape_.length) + ", got " + std::to_string(rv.rows()) + "x" +
                     std::to_string(rv.cols()));
  }
  const Location loc = config().location;
  Var h = r;
  if (loc == Location::Start) h = attention_.apply(tape, r, h);
  h = tape.relu(tape.conv1d(encoder_[0], h));
  h = tape.relu(tape.conv1d(encoder_[1], h));
  if (loc == Location::Middle) h = attention_.apply(tape, r, h);
  h = tape.relu(tape.conv1d(encoder_[2], h));
  if (loc == Location::End) h = attention_.apply(tape, r, h);
  return Output{tape.sigmoid(tape.conv1d(start_head_, h)), tape.sigmoid(tape.conv1d(end_head_, h))};
}

std::pair<Vec1, Vec1> Model::predict(const Grid& r) const {
  Tape tape;
  const Output out = forward(tape, tape.input(r));
  const auto s = tape.value(out.p_start).values();
  const auto e = tape.value(out.p_end).values();
  return {Vec1(s.begin(), s.end()), Vec1(e.begin(), e.end())};
}

NamedParams Model::named_parameters() {
  NamedParams out;
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    append_layer(out, "encoder.stage" + std::to_string(i), encoder_[i]);
  append_layer(out, "head.start", start_head_);
  append_layer(out, "head.end", end_head_);
  for (auto& entry : attention_.named_parameters("attention")) out.push_back(std::move(entry));
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = start_head_.parameter_count() + end_head_.parameter_count();
  for (const auto& l : encoder_) n += l.parameter_count();
  return n + attention_.parameter_count();
}

// ---------------------------------------------------------------------------
// Loss

std::pair<Vec1, Vec1> boundary_targets(std::span<const Segment> segments, std::size_t length) {
  Vec1 start(length, 0.0);
  Vec1 end(length, 0.0);
  auto mark = [length](Vec1& v, std::size_t centre) {
    const std::size_t lo = centre == 0 ? 0 : centre - 1;
    const std::size_t hi = std::min(length - 1, centre + 1);
    for (std::size_t t = lo; t <= hi; ++t) v[t] = 1.0;
  };
  for (const auto& s : segments) {
    if (s.start < length) mark(start, s.start);
    if (s.end < length) mark(end, s.end);
  }
  return {start, end};
}

Var boundary_loss(Tape& tape, Var p_start, Var p_end, std::span<const Segment> segments) {
  const std::size_t length = tape.value(p_start).size();
  if (tape.value(p_end).size() != length) throw ShapeError("start/end heads differ in length");
  const auto [ts, te] = boundary_targets(segments, length);
  return tape.add(tape.balanced_bce(p_start, ts), tape.balanced_bce(p_end, te));
}

double boundary_loss(std::span<const double> p_start, std::span<const double> p_end,
                     std::span<const Segment> segments) {
  Tape tape;
  const Var s = tape.input(Grid::row(p_start));
  const Var e = tape.input(Grid::row(p_end));
  return tape.scalar(boundary_loss(tape, s, e, segments));
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

std::vector<std::size_t> boundary_candidates(std::span<const double> p) {
  std::vector<std::size_t> out;
  if (p.empty()) return out;
  const double peak = *std::max_element(p.begin(), p.end());
  for (std::size_t t = 0; t < p.size(); ++t) {
    const bool left = t == 0 || p[t] > p[t - 1];
    const bool right = t + 1 == p.size() || p[t] > p[t + 1];
    const bool local_max = p.size() > 1 && left && right;
    if (local_max || p[t] > 0.5 * peak) out.push_back(t);
  }
  return out;
}

}  // namespace

std::vector<Proposal> decode_proposals(std::span<const double> p_start,
                                       std::span<const double> p_end, std::size_t max_proposals,
                                       std::size_t d_max) {
  if (p_start.size() != p_end.size()) throw ShapeError("start/end heads differ in length");
  std::vector<Proposal> cands;
  for (std::size_t s : boundary_candidates(p_start)) {
    for (std::size_t e : boundary_candidates(p_end)) {
      if (e <= s || e - s > d_max) continue;
      cands.push_back(Proposal{s, e, p_start[s] * p_end[e]});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  std::vector<Proposal> kept;
  for (const auto& c : cands) {
    if (kept.size() >= max_proposals) break;
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const Proposal& k) {
      return metrics::tiou({double(c.start), double(c.end)}, {double(k.start), double(k.end)}) >
             kNmsThreshold;
    });
    if (!dup) kept.push_back(c);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Training

Evaluation evaluate(const Model& model, std::span<const SyntheticVideo> videos,
                    const TrainOptions& opts) {
  Evaluation ev;
  const std::size_t d_max = opts.d_max == 0 ? model.shape().length / 2 : opts.d_max;
  double loss_sum = 0.0;
  for (const auto& v : videos) {
    const auto [ps, pe] = model.predict(v.features);
    loss_sum += boundary_loss(ps, pe, v.segments);
    for (const auto& p : decode_proposals(ps, pe, opts.max_proposals, d_max)) {
      ev.detections.push_back(
          metrics::Detection{v.id, double(p.start), double(p.end), p.score, 0});
    }
    for (const auto& s : v.segments) {
      ev.ground_truth.push_back(metrics::GtSegment{v.id, double(s.start), double(s.end), 0});
    }
  }
  ev.loss = videos.empty() ? 0.0 : loss_sum / static_cast<double>(videos.size());
  ev.map = metrics::map_at_tious(ev.detections, ev.ground_truth, opts.tiou_thresholds);
  return ev;
}

std::vector<EpochRecord> train(Model& model, std::span<const SyntheticVideo> train_set,
                               std::span<const SyntheticVideo> val_set, const TrainOptions& opts,
                               const EpochCallback& on_epoch) {
  if (train_set.empty()) throw ConfigError("training.train_set: empty");
  if (opts.batch_size < 1) throw ConfigError("training.batch_size: must be positive");

  const NamedParams named = model.named_parameters();
  std::vector<Param*> params;
  for (const auto& [_, p] : named) params.push_back(p);
  AdamState state;
  std::mt19937_64 rng(derive_seed(opts.seed, 3));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochRecord> history;
  double lr = opts.lr;
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    if (opts.step_epoch > 0 && epoch == opts.step_epoch + 1) lr *= opts.lr_gamma;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    }

    double epoch_loss = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += opts.batch_size, ++batch_id) {
      const std::size_t b1 = std::min(order.size(), b0 + opts.batch_size);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      std::vector<Grid> grads;
      for (const Param* p : params) grads.emplace_back(p->value.rows(), p->value.cols());
      double batch_loss = 0.0;
      for (std::size_t k = b0; k < b1; ++k) {
        const SyntheticVideo& v = train_set[order[k]];
        Tape tape;
        const auto out = model.forward(tape, tape.input(v.features));
        const Var loss = boundary_loss(tape, out.p_start, out.p_end, v.segments);
        batch_loss += tape.scalar(loss);
        tape.backward(loss, inv);
        for (std::size_t j = 0; j < params.size(); ++j) {
          const Grid g = tape.param_grad(*params[j]);
          for (std::size_t e = 0; e < g.size(); ++e) grads[j][e] += g[e];
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_id),
                              static_cast<int>(epoch), static_cast<int>(batch_id));
      }
      epoch_loss += batch_loss;
      adam_step(params, grads, state, lr, opts.weight_decay);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      const Evaluation ev = evaluate(model, val_set, opts);
      rec.val_loss = ev.loss;
      rec.val_map_avg = ev.map.average;
    }
    if (!std::isfinite(rec.val_loss)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch), 
                            static_cast<int>(epoch), -1);
    }
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

}  // namespace csa
