#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "csa/grid.hpp"

namespace csa {

struct GenSpec {
  std::size_t num_videos = 100;
  std::size_t length = 50;  // T
  std::size_t channels = 32;  // C_in
  std::size_t num_classes = 3;
  std::size_t min_segments = 1;
  std::size_t max_segments = 4;
  std::size_t min_segment_length = 4;
  std::size_t max_segment_length = 15;
  double noise_sigma = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const GenSpec&) const = default;
};

// A ground-truth action occupying timepoints start..end inclusive, in index
// units; end - start is the segment length. Class ids start at 1 (0 is
// background).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t class_id = 1;
  bool operator==(const Segment&) const = default;
};

struct SyntheticVideo {
  std::string id;
  Grid features;  // R, C_in x T
  std::vector<Segment> segments;  // sorted by start, pairwise disjoint
  bool operator==(const SyntheticVideo&) const = default;
};

// Unit-norm class prototypes; row 0 is background, row c is class c.
Grid class_prototypes(const GenSpec& spec);

// R[:, t] = P_{class(t)} + N(0, sigma^2). Video i draws from its own stream
// derived from (seed, i), so the output does not depend on generation order.
std::vector<SyntheticVideo> generate(const GenSpec& spec);

std::pair<std::vector<SyntheticVideo>, std::vector<SyntheticVideo>> split(
    const std::vector<SyntheticVideo>& videos, double train_frac, std::uint64_t seed);

// Independent stream for (seed, index); splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

nlohmann::json to_json(const GenSpec& spec);
GenSpec gen_spec_from_json(const nlohmann::json& j);

nlohmann::json dataset_to_json(const GenSpec& spec, const std::vector<SyntheticVideo>& videos);
std::pair<GenSpec, std::vector<SyntheticVideo>> dataset_from_json(const nlohmann::json& j);
void save_dataset(const std::filesystem::path& path, const GenSpec& spec,
                  const std::vector<SyntheticVideo>& videos);
std::pair<GenSpec, std::vector<SyntheticVideo>> load_dataset(const std::filesystem::path& path);

}  // namespace csa
