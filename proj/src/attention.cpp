#include "csa/attention.hpp"

#include <algorithm>
#include <string>

#include "csa/errors.hpp"

namespace csa {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::CSA: return "CSA";
    case Variant::FF_CSA: return "FF_CSA";
    case Variant::SE_BASELINE: return "SE_BASELINE";
    case Variant::NONE: return "NONE";
  }
  return "?";
}

std::string to_string(Fusion f) { return f == Fusion::Add ? "add" : "concat_project"; }

std::string to_string(Location l) {
  switch (l) {
    case Location::Start: return "start";
    case Location::Middle: return "middle";
    case Location::End: return "end";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "CSA") return Variant::CSA;
  if (s == "FF_CSA") return Variant::FF_CSA;
  if (s == "SE_BASELINE") return Variant::SE_BASELINE;
  if (s == "NONE") return Variant::NONE;
  throw ConfigError("csa.variant: unknown value '" + s + "'");
}

Fusion parse_fusion(const std::string& s) {
  if (s == "concat_project") return Fusion::ConcatProject;
  if (s == "add") return Fusion::Add;
  throw ConfigError("csa.fusion: unknown value '" + s + "'");
}

Location parse_location(const std::string& s) {
  if (s == "start") return Location::Start;
  if (s == "middle") return Location::Middle;
  if (s == "end") return Location::End;
  throw ConfigError("csa.location: unknown value '" + s + "'");
}

void CsaConfig::validate() const {
  if (kernel_size % 2 == 0) {
    throw ConfigError("csa.kernel_size: must be odd, got " + std::to_string(kernel_size));
  }
  if (conv_blocks < 1 || conv_blocks > 3) {
    throw ConfigError("csa.conv_blocks: must be 1, 2 or 3, got " + std::to_string(conv_blocks));
  }
  if (variant == Variant::CSA && !use_temporal && !use_channel) {
    throw ConfigError("csa.use_temporal/use_channel: CSA needs at least one branch");
  }
  if (reduction < 1) throw ConfigError("csa.reduction: must be positive");
}

// ---------------------------------------------------------------------------
// CSA

namespace {

std::vector<Conv1dLayer> make_stack(std::size_t c_in, std::size_t width, const CsaConfig& cfg,
                                    std::mt19937_64& rng) {
  std::vector<Conv1dLayer> stack;
  stack.reserve(cfg.conv_blocks);
  for (std::size_t b = 0; b < cfg.conv_blocks; ++b) {
    stack.emplace_back(b == 0 ? c_in : width, width, cfg.kernel_size);
    kaiming_init(stack.back(), rng);
  }
  return stack;
}

void append_layer(NamedParams& out, const std::string& path, Conv1dLayer& l) {
  out.emplace_back(path + ".weight", &l.weight);
  out.emplace_back(path + ".bias", &l.bias);
}

void append_layer(NamedParams& out, const std::string& path, DenseLayer& l) {
  out.emplace_back(path + ".weight", &l.weight);
  out.emplace_back(path + ".bias", &l.bias);
}

}  // namespace

CsaModule::CsaModule(std::size_t c_in, std::size_t c_out, std::size_t t, const CsaConfig& cfg,
                     std::mt19937_64& rng)
    : c_in_(c_in), c_out_(c_out), t_(t) {
  cfg.validate();
  const std::size_t width = cfg.c_mid == 0 ? c_in : cfg.c_mid;
  if (cfg.use_temporal) {
    temporal_convs_ = make_stack(c_in, width, cfg, rng);
    fc_t_ = DenseLayer(t, t);
    kaiming_init(fc_t_, rng);
  }
  if (cfg.use_channel) {
    channel_convs_ = make_stack(c_in, width, cfg, rng);
    fc_c_ = DenseLayer(width, c_out);
    kaiming_init(fc_c_, rng);
  }
  if (cfg.use_temporal && cfg.use_channel && cfg.fusion == Fusion::ConcatProject) {
    fuse_ = Conv1dLayer(2 * c_out, c_out, 1);
    kaiming_init(fuse_, rng);
  }
}

void CsaModule::check_source(const Grid& r) const {
  if (r.rows() != c_in_ || r.cols() != t_) {
    throw ShapeError("CSA source must be " + std::to_string(c_in_) + "x" + std::to_string(t_) +
                     ", got " + std::to_string(r.rows()) + "x" + std::to_string(r.cols()));
  }
}

Var CsaModule::conv_stack(Tape& tape, const std::vector<Conv1dLayer>& stack, Var r) const {
  Var h = r;
  for (const auto& conv : stack) h = tape.relu(tape.conv1d(conv, h));
  return h;
}

Var CsaModule::temporal_attention(Tape& tape, Var r) const {
  if (!has_temporal()) throw ConfigError("temporal branch was not built for this module");
  check_source(tape.value(r));
  // The stack keeps the temporal axis, so averaging over channels yields y_T.
  const Var y = tape.mean_over_rows(conv_stack(tape, temporal_convs_, r));
  return tape.sigmoid(tape.dense(fc_t_, y));
}

Var CsaModule::channel_attention(Tape& tape, Var r) const {
  if (!has_channel()) throw ConfigError("channel branch was not built for this module");
  check_source(tape.value(r));
  const Var y = tape.mean_over_cols(conv_stack(tape, channel_convs_, r));
  return tape.sigmoid(tape.dense(fc_c_, y));
}

Var CsaModule::apply(Tape& tape, const CsaConfig& cfg, Var r, Var f) const {
  const Grid& rv = tape.value(r);
  const Grid& fv = tape.value(f);
  if (rv.cols() != fv.cols()) {
    throw AlignmentError("R has " + std::to_string(rv.cols()) + " timepoints but F has " +
                         std::to_string(fv.cols()));
  }
  if (fv.rows() != c_out_) {
    throw ShapeError("F must have " + std::to_string(c_out_) + " channels, got " +
                     std::to_string(fv.rows()));
  }
  if (cfg.use_temporal && !cfg.use_channel) {
    return tape.broadcast_mul_row(temporal_attention(tape, r), f);
  }
  if (cfg.use_channel && !cfg.use_temporal) {
    return tape.broadcast_mul_col(channel_attention(tape, r), f);
  }
  if (!cfg.use_channel && !cfg.use_temporal) {
    throw ConfigError("csa.use_temporal/use_channel: CSA needs at least one branch");
  }
  const Var f_t = tape.broadcast_mul_row(temporal_attention(tape, r), f);
  const Var f_c = tape.broadcast_mul_col(channel_attention(tape, r), f);
  if (cfg.fusion == Fusion::Add) return tape.add(f_t, f_c);
  if (fuse_.out_channels == 0) throw ConfigError("fusion projection was not built for this module");
  return tape.relu(tape.conv1d(fuse_, tape.concat_rows(f_t, f_c)));
}

NamedParams CsaModule::named_parameters(const std::string& prefix) {
  NamedParams out;
  for (std::size_t i = 0; i < temporal_convs_.size(); ++i)
    append_layer(out, prefix + ".temporal.conv" + std::to_string(i), temporal_convs_[i]);
  if (has_temporal()) append_layer(out, prefix + ".temporal.fc", fc_t_);
  for (std::size_t i = 0; i < channel_convs_.size(); ++i)
    append_layer(out, prefix + ".channel.conv" + std::to_string(i), channel_convs_[i]);
  if (has_channel()) append_layer(out, prefix + ".channel.fc", fc_c_);
  if (fuse_.out_channels > 0) append_layer(out, prefix + ".fuse", fuse_);
  return out;
}

std::size_t CsaModule::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : temporal_convs_) n += c.parameter_count();
  for (const auto& c : channel_convs_) n += c.parameter_count();
  if (has_temporal()) n += fc_t_.parameter_count();
  if (has_channel()) n += fc_c_.parameter_count();
  if (fuse_.out_channels > 0) n += fuse_.parameter_count();
  return n;
}

// ---------------------------------------------------------------------------
// FF-CSA and SE

FfCsaModule::FfCsaModule(std::size_t c_in, std::size_t c_out, std::size_t reduction,
                         std::mt19937_64& rng)
    : c_in_(c_in), c_out_(c_out) {
  if (reduction < 1) throw ConfigError("csa.reduction: must be positive");
  const std::size_t hidden = std::max<std::size_t>(1, c_in / reduction);
  dense1_ = DenseLayer(c_in, hidden);
  dense2_ = DenseLayer(hidden, c_out);
  kaiming_init(dense1_, rng);
  kaiming_init(dense2_, rng);
}

Var FfCsaModule::gate(Tape& tape, Var r) const {
  if (tape.value(r).rows() != c_in_) {
    throw ShapeError("FF-CSA source must have " + std::to_string(c_in_) + " channels");
  }
  const Var squeezed = tape.mean_over_cols(r);
  return tape.sigmoid(tape.dense(dense2_, tape.relu(tape.dense(dense1_, squeezed))));
}

Var FfCsaModule::apply(Tape& tape, Var r, Var f) const {
  const Grid& fv = tape.value(f);
  if (tape.value(r).cols() != fv.cols()) throw AlignmentError("R and F differ in length");
  if (fv.rows() != c_out_) throw ShapeError("F must have " + std::to_string(c_out_) + " channels");
  return tape.broadcast_mul_col(gate(tape, r), f);
}

NamedParams FfCsaModule::named_parameters(const std::string& prefix) {
  NamedParams out;
  append_layer(out, prefix + ".squeeze", dense1_);
  append_layer(out, prefix + ".excite", dense2_);
  return out;
}

std::size_t FfCsaModule::parameter_count() const {
  return dense1_.parameter_count() + dense2_.parameter_count();
}

SeModule::SeModule(std::size_t c_out, std::size_t reduction, std::mt19937_64& rng)
    : c_out_(c_out) {
  if (reduction < 1 || c_out % reduction != 0) {
    throw ConfigError("csa.reduction: SE needs C_out (" + std::to_string(c_out) +
                      ") divisible by r (" + std::to_string(reduction) + ")");
  }
  dense1_ = DenseLayer(c_out, c_out / reduction);
  dense2_ = DenseLayer(c_out / reduction, c_out);
  kaiming_init(dense1_, rng);
  kaiming_init(dense2_, rng);
}

Var SeModule::gate(Tape& tape, Var f) const {
  if (tape.value(f).rows() != c_out_) {
    throw ShapeError("SE input must have " + std::to_string(c_out_) + " channels");
  }
  const Var squeezed = tape.mean_over_cols(f);
  return tape.sigmoid(tape.dense(dense2_, tape.relu(tape.dense(dense1_, squeezed))));
}

Var SeModule::apply(Tape& tape, Var f) const { return tape.broadcast_mul_col(gate(tape, f), f); }

NamedParams SeModule::named_parameters(const std::string& prefix) {
  NamedParams out;
  append_layer(out, prefix + ".squeeze", dense1_);
  append_layer(out, prefix + ".excite", dense2_);
  return out;
}

std::size_t SeModule::parameter_count() const {
  return dense1_.parameter_count() + dense2_.parameter_count();
}

// ---------------------------------------------------------------------------
// Value-level wrappers

Vec1 temporal_attention(const CsaModule& m, const Grid& r) {
  Tape tape;
  const Var a = m.temporal_attention(tape, tape.input(r));
  const auto v = tape.value(a).values();
  return Vec1(v.begin(), v.end());
}

Vec1 channel_attention(const CsaModule& m, const Grid& r) {
  Tape tape;
  const Var a = m.channel_attention(tape, tape.input(r));
  const auto v = tape.value(a).values();
  return Vec1(v.begin(), v.end());
}

Grid apply_csa(const CsaModule& m, const CsaConfig& cfg, const Grid& r, const Grid& f) {
  Tape tape;
  return tape.value(m.apply(tape, cfg, tape.input(r), tape.input(f)));
}

Grid apply_ff_csa(const FfCsaModule& m, const Grid& r, const Grid& f) {
  Tape tape;
  return tape.value(m.apply(tape, tape.input(r), tape.input(f)));
}

Grid apply_se(const SeModule& m, const Grid& f) {
  Tape tape;
  return tape.value(m.apply(tape, tape.input(f)));
}

// ---------------------------------------------------------------------------
// AttentionBlock

AttentionBlock::AttentionBlock(const CsaConfig& cfg, std::size_t c_in, std::size_t c_out,
                               std::size_t t, std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  switch (cfg_.variant) {
    case Variant::CSA:
      module_ = std::make_unique<CsaModule>(c_in, c_out, t, cfg_, rng);
      break;
    case Variant::FF_CSA:
      module_ = std::make_unique<FfCsaModule>(c_in, c_out, cfg_.reduction, rng);
      break;
    case Variant::SE_BASELINE:
      module_ = std::make_unique<SeModule>(c_out, cfg_.reduction, rng);
      break;
    case Variant::NONE:
      break;
  }
}

AttentionBlock::AttentionBlock(const CsaConfig& cfg, std::size_t c_in, std::size_t c_out,
                               std::size_t t, std::uint64_t seed)
    : cfg_(cfg) {
  std::mt19937_64 rng(seed);
  *this = AttentionBlock(cfg, c_in, c_out, t, rng);
}

Var AttentionBlock::apply(Tape& tape, Var r, Var f) const {
  if (tape.value(r).cols() != tape.value(f).cols()) {
    throw AlignmentError("R and F differ in length");
  }
  if (auto* p = std::get_if<std::unique_ptr<CsaModule>>(&module_)) return (*p)->apply(tape, cfg_, r, f);
  if (auto* p = std::get_if<std::unique_ptr<FfCsaModule>>(&module_)) return (*p)->apply(tape, r, f);
  if (auto* p = std::get_if<std::unique_ptr<SeModule>>(&module_)) return (*p)->apply(tape, f);
  return f;
}

NamedParams AttentionBlock::named_parameters(const std::string& prefix) {
  if (auto* p = std::get_if<std::unique_ptr<CsaModule>>(&module_)) return (*p)->named_parameters(prefix);
  if (auto* p = std::get_if<std::unique_ptr<FfCsaModule>>(&module_)) return (*p)->named_parameters(prefix);
  if (auto* p = std::get_if<std::unique_ptr<SeModule>>(&module_)) return (*p)->named_parameters(prefix);
  return {};
}

std::size_t AttentionBlock::parameter_count() const {
  if (auto* p = std::get_if<std::unique_ptr<CsaModule>>(&module_)) return (*p)->parameter_count();
  if (auto* p = std::get_if<std::unique_ptr<FfCsaModule>>(&module_)) return (*p)->parameter_count();
  if (auto* p = std::get_if<std::unique_ptr<SeModule>>(&module_)) return (*p)->parameter_count();
  return 0;
}

CsaModule* AttentionBlock::csa() {
  auto* p = std::get_if<std::unique_ptr<CsaModule>>(&module_);
  return p ? p->get() : nullptr;
}

FfCsaModule* AttentionBlock::ff_csa() {
  auto* p = std::get_if<std::unique_ptr<FfCsaModule>>(&module_);
  return p ? p->get() : nullptr;
}

SeModule* AttentionBlock::se() {
  auto* p = std::get_if<std::unique_ptr<SeModule>>(&module_);
  return p ? p->get() : nullptr;
}

}  // namespace csa
