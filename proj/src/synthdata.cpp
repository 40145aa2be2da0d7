#include "csa/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <type_traits>

#include "csa/errors.hpp"

namespace csa {

namespace {

constexpr int kMaxPackingDraws = 100;
constexpr std::uint64_t kPrototypeStream = ~std::uint64_t{0};

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Places the segments left to right, distributing the spare timepoints
// uniformly over the n + 1 gaps. Returns false when the lengths cannot fit.
bool pack(const GenSpec& spec, std::mt19937_64& rng, std::vector<Segment>& out) {
  const std::size_t n = uniform_index(rng, spec.min_segments, spec.max_segments);
  std::vector<std::size_t> lengths(n);
  std::size_t occupied = 0;
  for (auto& len : lengths) {
    len = uniform_index(rng, spec.min_segment_length, spec.max_segment_length);
    occupied += len + 1;
  }
  if (occupied > spec.length) return false;
  std::vector<std::size_t> gaps(n + 1, 0);
  for (std::size_t i = 0; i < spec.length - occupied; ++i) ++gaps[uniform_index(rng, 0, n)];
  out.clear();
  std::size_t cursor = gaps[0];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = uniform_index(rng, 1, spec.num_classes);
    out.push_back(Segment{cursor, cursor + lengths[i], cls});
    cursor += lengths[i] + 1 + gaps[i + 1];
  }
  return true;
}

}  // namespace

void GenSpec::validate() const {
  if (num_videos < 1) throw ConfigError("gen_spec.num_videos: must be positive");
  if (length < 2) throw ConfigError("gen_spec.T: must be at least 2");
  if (channels < 1) throw ConfigError("gen_spec.C_in: must be positive");
  if (num_classes < 1) throw ConfigError("gen_spec.num_classes: must be positive");
  if (min_segments < 1 || min_segments > max_segments) {
    throw ConfigError("gen_spec.segments_per_video: need 1 <= min <= max");
  }
  if (min_segment_length < 1 || min_segment_length > max_segment_length) {
    throw ConfigError("gen_spec.segment_length: need 1 <= min <= max");
  }
  if (max_segment_length >= length) {
    throw ConfigError("gen_spec.segment_length: max must be below T");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("gen_spec.noise_sigma: must be finite and non-negative");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Grid class_prototypes(const GenSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, kPrototypeStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  Grid protos(spec.num_classes + 1, spec.channels);
  for (std::size_t c = 0; c <= spec.num_classes; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t i = 0; i < spec.channels; ++i) {
        protos(c, i) = normal(rng);
        norm += protos(c, i) * protos(c, i);
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < spec.channels; ++i) protos(c, i) /= norm;
  }
  return protos;
}

std::vector<SyntheticVideo> generate(const GenSpec& spec) {
  spec.validate();
  const Grid protos = class_prototypes(spec);
  std::vector<SyntheticVideo> videos;
  videos.reserve(spec.num_videos);
  for (std::size_t v = 0; v < spec.num_videos; ++v) {
    std::mt19937_64 rng(derive_seed(spec.seed, v));
    SyntheticVideo video;
    char id[32];
    std::snprintf(id, sizeof id, "v%04zu", v);
    video.id = id;

    bool packed = false;
    for (int attempt = 0; attempt < kMaxPackingDraws && !packed; ++attempt) {
      packed = pack(spec, rng, video.segments);
    }
    if (!packed) {
      throw GenerationError("could not pack disjoint segments into T=" +
                            std::to_string(spec.length) + " after " +
                            std::to_string(kMaxPackingDraws) + " draws");
    }

    std::vector<std::size_t> label(spec.length, 0);
    for (const auto& s : video.segments)
      for (std::size_t t = s.start; t <= s.end; ++t) label[t] = s.class_id;

    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
    video.features = Grid(spec.channels, spec.length);
    for (std::size_t t = 0; t < spec.length; ++t) {
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double eps = spec.noise_sigma > 0 ? noise(rng) : 0.0;
        video.features(c, t) = protos(label[t], c) + eps;
      }
    }
    videos.push_back(std::move(video));
  }
  return videos;
}

std::pair<std::vector<SyntheticVideo>, std::vector<SyntheticVideo>> split(
    const std::vector<SyntheticVideo>& videos, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ConfigError("split.train_frac: must be in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * videos.size()));
  if (n_train == 0 || n_train >= videos.size()) {
    throw ConfigError("split.train_frac: leaves one side empty for " +
                      std::to_string(videos.size()) + " videos");
  }
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws; std::shuffle's algorithm is unspecified.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, 0, i - 1)]);
  }
  std::pair<std::vector<SyntheticVideo>, std::vector<SyntheticVideo>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(videos[order[i]]);
  }
  return out;
}

nlohmann::json to_json(const GenSpec& s) {
  return {{"num_videos", s.num_videos},
          {"T", s.length},
          {"C_in", s.channels},
          {"num_classes", s.num_classes},
          {"segments_per_video", {s.min_segments, s.max_segments}},
          {"segment_length", {s.min_segment_length, s.max_segment_length}},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed}};
}

namespace {

bool non_negative_int(const nlohmann::json& v) {
  return v.is_number_integer() && v.get<std::int64_t>() >= 0;
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& dst, const std::string& scope) {
  if (!j.contains(key)) return;
  if constexpr (std::is_integral_v<T>) {
    if (!non_negative_int(j.at(key)))
      throw ConfigError(scope + "." + key + ": expected a non-negative integer");
  }
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(scope + "." + key + ": " + e.what());
  }
}

void read_range(const nlohmann::json& j, const char* key, std::size_t& lo, std::size_t& hi) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2 || !non_negative_int(r[0]) || !non_negative_int(r[1])) {
    throw ConfigError(std::string("gen_spec.") + key + ": expected [min, max]");
  }
  lo = r[0].get<std::size_t>();
  hi = r[1].get<std::size_t>();
}

}  // namespace

GenSpec gen_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("gen_spec: expected an object");
  GenSpec s;
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"num_videos",  "T",           "C_in", "num_classes",
                                  "segments_per_video", "segment_length", "noise_sigma", "seed"};
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; })) {
      throw ConfigError("gen_spec." + key + ": unknown field");
    }
  }
  read_field(j, "num_videos", s.num_videos, "gen_spec");
  read_field(j, "T", s.length, "gen_spec");
  read_field(j, "C_in", s.channels, "gen_spec");
  read_field(j, "num_classes", s.num_classes, "gen_spec");
  read_range(j, "segments_per_video", s.min_segments, s.max_segments);
  read_range(j, "segment_length", s.min_segment_length, s.max_segment_length);
  read_field(j, "noise_sigma", s.noise_sigma, "gen_spec");
  read_field(j, "seed", s.seed, "gen_spec");
  s.validate();
  return s;
}

nlohmann::json dataset_to_json(const GenSpec& spec, const std::vector<SyntheticVideo>& videos) {
  nlohmann::json vids = nlohmann::json::array();
  for (const auto& v : videos) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : v.segments) {
      segs.push_back({{"start", s.start}, {"end", s.end}, {"class_id", s.class_id}});
    }
    vids.push_back(
        {{"id", v.id},
         {"R",
          {{"shape", {v.features.rows(), v.features.cols()}},
           {"values", std::vector<double>(v.features.values().begin(), v.features.values().end())}}},
         {"segments", segs}});
  }
  return {{"spec", to_json(spec)}, {"videos", vids}};
}

std::pair<GenSpec, std::vector<SyntheticVideo>> dataset_from_json(const nlohmann::json& j) {
  std::pair<GenSpec, std::vector<SyntheticVideo>> out;
  out.first = gen_spec_from_json(j.at("spec"));
  for (const auto& jv : j.at("videos")) {
    SyntheticVideo v;
    v.id = jv.at("id").get<std::string>();
    const auto shape = jv.at("R").at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw ShapeError("dataset: R shape must have two entries");
    v.features = Grid(shape[0], shape[1], jv.at("R").at("values").get<std::vector<double>>());
    for (const auto& js : jv.at("segments")) {
      v.segments.push_back(Segment{js.at("start").get<std::size_t>(), js.at("end").get<std::size_t>(),
                                   js.at("class_id").get<std::size_t>()});
    }
    out.second.push_back(std::move(v));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const GenSpec& spec,
                  const std::vector<SyntheticVideo>& videos) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset " + path.string());
  out << dataset_to_json(spec, videos).dump() << '\n';
}

std::pair<GenSpec, std::vector<SyntheticVideo>> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read dataset " + path.string());
  return dataset_from_json(nlohmann::json::parse(in));
}

}  // namespace csa
