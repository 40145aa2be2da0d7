#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace csa::metrics {

struct Interval {
  double start = 0.0;
  double end = 0.0;
};

// |a ∩ b| / |a ∪ b|. Throws DomainError for zero-length or reversed intervals.
double tiou(Interval a, Interval b);

struct GtSegment {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  int class_id = 0;
};

struct Detection {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
  int class_id = 0;
};

// AP of one class at one tIoU threshold. Detections are ranked by score
// (ties: earlier start first) and each greedily claims the unmatched
// ground truth of its video with the highest tIoU >= threshold. The value is
// the exact area under the stepwise precision/recall curve. nullopt when
// there is no ground truth. Class ids are not inspected.
std::optional<double> average_precision(std::span<const Detection> dets,
                                        std::span<const GtSegment> gts, double threshold);

struct MapTable {
  std::vector<double> thresholds;
  std::vector<double> map;  // one entry per threshold
  double average = 0.0;     // "Avg mAP"
  std::vector<int> classes;  // classes that had ground truth and entered the mean
};

// mAP per threshold: mean of per-class AP over classes with ground truth.
MapTable map_at_tious(std::span<const Detection> dets, std::span<const GtSegment> gts,
                      std::span<const double> thresholds);

struct ArCurve {
  std::vector<std::size_t> an;
  std::vector<double> ar;
  double auc = 0.0;  // percent
};

// AR@AN: per video keep the top-AN proposals, recall at each tIoU of the set
// is the share of ground truths hit by at least one kept proposal, AR is the
// mean over the set. AUC is the trapezoidal area under AR(AN) divided by the
// AN span, times 100. Class ids are ignored.
ArCurve ar_at_an(std::span<const Detection> proposals, std::span<const GtSegment> gts,
                 std::span<const std::size_t> an_values, std::span<const double> tiou_set);

std::vector<double> thumos_thresholds();        // 0.3, 0.4, ..., 0.7
std::vector<double> activitynet_thresholds();   // 0.5, 0.55, ..., 0.95
std::vector<std::size_t> default_an_values();   // 1..100

std::vector<Detection> detections_from_json(const nlohmann::json& j);
std::vector<GtSegment> ground_truth_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MapTable& t);
nlohmann::json to_json(const ArCurve& c);

}  // namespace csa::metrics
