#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "csa/attention.hpp"
#include "csa/checkpoint.hpp"
#include "csa/grid.hpp"
#include "csa/layers.hpp"
#include "csa/metrics.hpp"
#include "csa/synthdata.hpp"
#include "csa/tape.hpp"

namespace csa {

struct ModelShape {
  std::size_t c_in = 32;
  std::size_t length = 50;  // T
  std::size_t hidden = 64;
  std::size_t c_out = 32;
  bool operator==(const ModelShape&) const = default;
};

// Three conv-ReLU stages (C_in -> H -> H -> C_out, kernel 3), an attention
// block at the configured location, and two conv-sigmoid boundary heads.
class Model {
 public:
  Model(const ModelShape& shape, const CsaConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  struct Output {
    Var p_start;  // 1 x T
    Var p_end;    // 1 x T
  };
  Output forward(Tape& tape, Var r) const;
  std::pair<Vec1, Vec1> predict(const Grid& r) const;

  const ModelShape& shape() const { return shape_; }
  const CsaConfig& config() const { return attention_.config(); }
  AttentionBlock& attention() { return attention_; }
  std::vector<Conv1dLayer>& encoder() { return encoder_; }

  // Stable order: encoder, heads, attention.
  NamedParams named_parameters();
  std::size_t parameter_count() const;
  std::size_t attention_parameter_count() const { return attention_.parameter_count(); }

 private:
  ModelShape shape_;
  std::vector<Conv1dLayer> encoder_;
  Conv1dLayer start_head_;
  Conv1dLayer end_head_;
  AttentionBlock attention_;
};

// 1 where t lies within +-1 index of a segment start (resp. end).
std::pair<Vec1, Vec1> boundary_targets(std::span<const Segment> segments, std::size_t length);

// Class-balanced BCE of the start head plus that of the end head.
Var boundary_loss(Tape& tape, Var p_start, Var p_end, std::span<const Segment> segments);
double boundary_loss(std::span<const double> p_start, std::span<const double> p_end,
                     std::span<const Segment> segments);

struct Proposal {
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;
  bool operator==(const Proposal&) const = default;
};

// Pairs boundary candidates (local maxima, or above half the peak) into
// proposals with 0 < end - start <= d_max, scored p_start[s] * p_end[e],
// ranked by score then (start, end), de-duplicated by NMS at tIoU 0.9.
std::vector<Proposal> decode_proposals(std::span<const double> p_start,
                                       std::span<const double> p_end, std::size_t max_proposals,
                                       std::size_t d_max);

struct TrainOptions {
  std::size_t epochs = 10;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t step_epoch = 7;
  double lr_gamma = 0.1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t max_proposals = 100;
  std::size_t d_max = 0;  // 0 means T / 2
  std::vector<double> tiou_thresholds = metrics::thumos_thresholds();
  bool operator==(const TrainOptions&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_map_avg = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  std::vector<metrics::Detection> detections;
  std::vector<metrics::GtSegment> ground_truth;
  metrics::MapTable map;
};

// Mean boundary loss plus class-agnostic detection metrics over a video set.
Evaluation evaluate(const Model& model, std::span<const SyntheticVideo> videos,
                    const TrainOptions& opts);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam on the boundary loss. Throws DivergenceError on a
// non-finite batch loss.
std::vector<EpochRecord> train(Model& model, std::span<const SyntheticVideo> train_set,
                               std::span<const SyntheticVideo> val_set, const TrainOptions& opts,
                               const EpochCallback& on_epoch = {});

}  // namespace csa
