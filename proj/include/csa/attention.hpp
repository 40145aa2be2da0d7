#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "csa/checkpoint.hpp"
#include "csa/grid.hpp"
#include "csa/layers.hpp"
#include "csa/tape.hpp"

namespace csa {

enum class Variant { CSA, FF_CSA, SE_BASELINE, NONE };
enum class Fusion { ConcatProject, Add };
enum class Location { Start, Middle, End };

std::string to_string(Variant v);
std::string to_string(Fusion f);
std::string to_string(Location l);
Variant parse_variant(const std::string& s);
Fusion parse_fusion(const std::string& s);
Location parse_location(const std::string& s);

struct CsaConfig {
  std::size_t kernel_size = 3;
  std::size_t conv_blocks = 2;
  bool use_temporal = true;
  bool use_channel = true;
  Fusion fusion = Fusion::ConcatProject;
  Variant variant = Variant::CSA;
  Location location = Location::End;
  // Width of the attention conv stacks; 0 means "same as the source channels".
  std::size_t c_mid = 0;
  // Bottleneck ratio for SE and FF-CSA.
  std::size_t reduction = 4;

  // Throws ConfigError describing the first offending field.
  void validate() const;
  bool operator==(const CsaConfig&) const = default;
};

// Class-semantics attention: a temporal gate over T and a channel gate over
// C_out, both computed from the source features R and applied to F.
class CsaModule {
 public:
  CsaModule(std::size_t c_in, std::size_t c_out, std::size_t t, const CsaConfig& cfg,
            std::mt19937_64& rng);
  CsaModule(const CsaModule&) = delete;
  CsaModule& operator=(const CsaModule&) = delete;

  std::size_t c_in() const { return c_in_; }
  std::size_t c_out() const { return c_out_; }
  std::size_t length() const { return t_; }
  bool has_temporal() const { return !temporal_convs_.empty(); }
  bool has_channel() const { return !channel_convs_.empty(); }
  bool has_fusion() const { return has_temporal() && has_channel(); }

  // A_T, 1 x T.
  Var temporal_attention(Tape& tape, Var r) const;
  // A_C, 1 x C_out.
  Var channel_attention(Tape& tape, Var r) const;
  // F_A, C_out x T. The config selects branches and fusion; it may request
  // fewer branches than were built, never more.
  Var apply(Tape& tape, const CsaConfig& cfg, Var r, Var f) const;

  NamedParams named_parameters(const std::string& prefix);
  std::size_t parameter_count() const;

  std::vector<Conv1dLayer>& temporal_convs() { return temporal_convs_; }
  std::vector<Conv1dLayer>& channel_convs() { return channel_convs_; }
  DenseLayer& fc_temporal() { return fc_t_; }
  DenseLayer& fc_channel() { return fc_c_; }
  Conv1dLayer& fusion_projection() { return fuse_; }

 private:
  Var conv_stack(Tape& tape, const std::vector<Conv1dLayer>& stack, Var r) const;
  void check_source(const Grid& r) const;

  std::size_t c_in_, c_out_, t_;
  std::vector<Conv1dLayer> temporal_convs_;
  DenseLayer fc_t_;
  std::vector<Conv1dLayer> channel_convs_;
  DenseLayer fc_c_;
  Conv1dLayer fuse_;
};

// FF-CSA: an SE-style bottleneck driven by the time-mean of R, producing a
// channel gate for F. No convolutions.
class FfCsaModule {
 public:
  FfCsaModule(std::size_t c_in, std::size_t c_out, std::size_t reduction, std::mt19937_64& rng);
  FfCsaModule(const FfCsaModule&) = delete;
  FfCsaModule& operator=(const FfCsaModule&) = delete;

  Var gate(Tape& tape, Var r) const;
  Var apply(Tape& tape, Var r, Var f) const;

  NamedParams named_parameters(const std::string& prefix);
  std::size_t parameter_count() const;
  DenseLayer& squeeze() { return dense1_; }
  DenseLayer& excite() { return dense2_; }

 private:
  std::size_t c_in_, c_out_;
  DenseLayer dense1_;
  DenseLayer dense2_;
};

// Squeeze-and-excitation on F itself.
class SeModule {
 public:
  SeModule(std::size_t c_out, std::size_t reduction, std::mt19937_64& rng);
  SeModule(const SeModule&) = delete;
  SeModule& operator=(const SeModule&) = delete;

  Var gate(Tape& tape, Var f) const;
  Var apply(Tape& tape, Var f) const;

  NamedParams named_parameters(const std::string& prefix);
  std::size_t parameter_count() const;
  DenseLayer& squeeze() { return dense1_; }
  DenseLayer& excite() { return dense2_; }

 private:
  std::size_t c_out_;
  DenseLayer dense1_;
  DenseLayer dense2_;
};

// Value-level entry points (each records on a private tape).
Vec1 temporal_attention(const CsaModule& m, const Grid& r);
Vec1 channel_attention(const CsaModule& m, const Grid& r);
Grid apply_csa(const CsaModule& m, const CsaConfig& cfg, const Grid& r, const Grid& f);
Grid apply_ff_csa(const FfCsaModule& m, const Grid& r, const Grid& f);
Grid apply_se(const SeModule& m, const Grid& f);

// Attention inserted into the encoder. Holds whichever module the variant
// asks for; NONE holds nothing and passes F through.
class AttentionBlock {
 public:
  // c_in: channels of R; c_out: channels of the gated feature; t: length.
  AttentionBlock(const CsaConfig& cfg, std::size_t c_in, std::size_t c_out, std::size_t t,
                 std::mt19937_64& rng);
  AttentionBlock(const CsaConfig& cfg, std::size_t c_in, std::size_t c_out, std::size_t t,
                 std::uint64_t seed);

  Var apply(Tape& tape, Var r, Var f) const;
  const CsaConfig& config() const { return cfg_; }
  NamedParams named_parameters(const std::string& prefix);
  std::size_t parameter_count() const;

  CsaModule* csa();
  FfCsaModule* ff_csa();
  SeModule* se();

 private:
  CsaConfig cfg_;
  // unique_ptr keeps parameter addresses stable when the block moves.
  std::variant<std::monostate, std::unique_ptr<CsaModule>, std::unique_ptr<FfCsaModule>,
               std::unique_ptr<SeModule>>
      module_;
};

}  // namespace csa
