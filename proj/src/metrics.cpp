#include "csa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "csa/errors.hpp"

namespace csa::metrics {

namespace {

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

std::vector<std::size_t> ranking(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ranks_before(dets[a], dets[b]); });
  return order;
}

std::vector<double> linspace_thresholds(double lo, double step, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(std::round((lo + step * i) * 100.0) / 100.0);
  return out;
}

}  // namespace

double tiou(Interval a, Interval b) {
  if (!(a.end > a.start) || !(b.end > b.start)) {
    throw DomainError("tIoU needs intervals with start < end");
  }
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni;
}

std::optional<double> average_precision(std::span<const Detection> dets,
                                        std::span<const GtSegment> gts, double threshold) {
  if (gts.empty()) return std::nullopt;
  std::unordered_map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < gts.size(); ++i) by_video[gts[i].video_id].push_back(i);
  std::vector<bool> matched(gts.size(), false);

  const double n_gt = static_cast<double>(gts.size());
  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t rank = 0;
  for (std::size_t di : ranking(dets)) {
    ++rank;
    const Detection& d = dets[di];
    auto it = by_video.find(d.video_id);
    if (it == by_video.end()) continue;
    double best = -1.0;
    std::size_t best_gt = 0;
    for (std::size_t gi : it->second) {
      if (matched[gi]) continue;
      const double iou = tiou({d.start, d.end}, {gts[gi].start, gts[gi].end});
      if (iou >= threshold && iou > best) {
        best = iou;
        best_gt = gi;
      }
    }
    if (best < 0.0) continue;
    matched[best_gt] = true;
    ++tp;
    ap += (static_cast<double>(tp) / static_cast<double>(rank)) / n_gt;
  }
  return ap;
}

MapTable map_at_tious(std::span<const Detection> dets, std::span<const GtSegment> gts,
                      std::span<const double> thresholds) {
  MapTable table;
  table.thresholds.assign(thresholds.begin(), thresholds.end());
  std::map<int, std::vector<GtSegment>> gt_by_class;
  for (const auto& g : gts) gt_by_class[g.class_id].push_back(g);
  std::map<int, std::vector<Detection>> det_by_class;
  for (const auto& d : dets) det_by_class[d.class_id].push_back(d);
  for (const auto& [cls, _] : gt_by_class) table.classes.push_back(cls);

  for (double thr : thresholds) {
    double acc = 0.0;
    for (const auto& [cls, class_gts] : gt_by_class) {
      auto it = det_by_class.find(cls);
      if (it == det_by_class.end()) continue;
      acc += average_precision(it->second, class_gts, thr).value_or(0.0);
    }
    table.map.push_back(gt_by_class.empty() ? 0.0 : acc / static_cast<double>(gt_by_class.size()));
  }
  if (!table.map.empty()) {
    table.average = std::accumulate(table.map.begin(), table.map.end(), 0.0) /
                    static_cast<double>(table.map.size());
  }
  return table;
}

ArCurve ar_at_an(std::span<const Detection> proposals, std::span<const GtSegment> gts,
                 std::span<const std::size_t> an_values, std::span<const double> tiou_set) {
  for (std::size_t an : an_values) {
    if (an < 1) throw DomainError("AN values must be at least 1");
  }
  if (tiou_set.empty()) throw DomainError("AR needs a non-empty tIoU set");

  // Per video: proposal indices in rank order and the ground-truth indices.
  std::map<std::string, std::vector<std::size_t>> props_by_video;
  for (std::size_t i : ranking(proposals)) props_by_video[proposals[i].video_id].push_back(i);
  std::map<std::string, std::vector<std::size_t>> gts_by_video;
  for (std::size_t i = 0; i < gts.size(); ++i) gts_by_video[gts[i].video_id].push_back(i);

  // For every ground truth and threshold, the best rank (1-based) of a
  // proposal that hits it; AR@AN then counts hits with rank <= AN.
  constexpr std::size_t kNever = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> first_hit(gts.size(),
                                                  std::vector<std::size_t>(tiou_set.size(), kNever));
  for (const auto& [vid, gidx] : gts_by_video) {
    auto it = props_by_video.find(vid);
    if (it == props_by_video.end()) continue;
    for (std::size_t gi : gidx) {
      for (std::size_t r = 0; r < it->second.size(); ++r) {
        const Detection& p = proposals[it->second[r]];
        const double iou = tiou({p.start, p.end}, {gts[gi].start, gts[gi].end});
        for (std::size_t k = 0; k < tiou_set.size(); ++k) {
          if (first_hit[gi][k] == kNever && iou >= tiou_set[k]) first_hit[gi][k] = r + 1;
        }
      }
    }
  }

  ArCurve curve;
  curve.an.assign(an_values.begin(), an_values.end());
  for (std::size_t an : curve.an) {
    double recall_sum = 0.0;
    for (std::size_t k = 0; k < tiou_set.size(); ++k) {
      std::size_t hits = 0;
      for (const auto& row : first_hit) hits += row[k] <= an ? 1 : 0;
      recall_sum += gts.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(gts.size());
    }
    curve.ar.push_back(recall_sum / static_cast<double>(tiou_set.size()));
  }

  if (curve.an.size() == 1) {
    curve.auc = 100.0 * curve.ar[0];
  } else if (curve.an.size() > 1) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.an.size(); ++i) {
      const double w = static_cast<double>(curve.an[i]) - static_cast<double>(curve.an[i - 1]);
      area += 0.5 * w * (curve.ar[i] + curve.ar[i - 1]);
    }
    const double span = static_cast<double>(curve.an.back()) - static_cast<double>(curve.an.front());
    curve.auc = span > 0 ? 100.0 * area / span : 100.0 * curve.ar.front();
  }
  return curve;
}

std::vector<double> thumos_thresholds() { return linspace_thresholds(0.3, 0.1, 5); }
std::vector<double> activitynet_thresholds() { return linspace_thresholds(0.5, 0.05, 10); }

std::vector<std::size_t> default_an_values() {
  std::vector<std::size_t> v(100);
  std::iota(v.begin(), v.end(), 1);
  return v;
}

std::vector<Detection> detections_from_json(const nlohmann::json& j) {
  std::vector<Detection> out;
  for (const auto& r : j) {
    Detection d{r.at("video_id").get<std::string>(), r.at("start").get<double>(),
                r.at("end").get<double>(), r.at("score").get<double>(), r.value("class_id", 0)};
    if (!(d.start < d.end) || !std::isfinite(d.score)) {
      throw DomainError("detection in " + d.video_id + " violates start < end or has a non-finite score");
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<GtSegment> ground_truth_from_json(const nlohmann::json& j) {
  std::vector<GtSegment> out;
  for (const auto& r : j) {
    GtSegment g{r.at("video_id").get<std::string>(), r.at("start").get<double>(),
                r.at("end").get<double>(), r.value("class_id", 0)};
    if (!(g.start < g.end)) throw DomainError("ground truth in " + g.video_id + " has start >= end");
    out.push_back(std::move(g));
  }
  return out;
}

nlohmann::json to_json(const MapTable& t) {
  return {{"thresholds", t.thresholds},
          {"mAP", t.map},
          {"avg_mAP", t.average},
          {"classes", t.classes}};
}

nlohmann::json to_json(const ArCurve& c) {
  return {{"AN", c.an}, {"AR", c.ar}, {"AUC", c.auc}};
}

}  // namespace csa::metrics
