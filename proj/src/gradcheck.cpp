#include "csa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "csa/attention.hpp"
#include "csa/pipeline.hpp"
#include "csa/synthdata.hpp"

namespace csa {

namespace {

struct Evaluated {
  double loss;
  std::vector<bool> pattern;
};

Evaluated evaluate_loss(const LossBuilder& build, const std::vector<Grid>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& g : inputs) vars.push_back(tape.input(g));
  const double loss = tape.scalar(build(tape, vars));
  return {loss, tape.relu_pattern()};
}

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

Grid random_grid(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                 double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Grid g(rows, cols);
  for (double& v : g.values()) v = dist(rng);
  return g;
}

// Values bounded away from zero, so ReLU kinks are never straddled.
Grid away_from_zero(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Grid g(rows, cols);
  for (double& v : g.values()) v = sign(rng) ? mag(rng) : -mag(rng);
  return g;
}

void randomize(Param& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (double& v : p.value.values()) v = dist(rng);
}

std::vector<Param*> params_of(const NamedParams& named) {
  std::vector<Param*> out;
  for (const auto& [_, p] : named) out.push_back(p);
  return out;
}

// Projects an output onto fixed random weights so every element matters.
Var project(Tape& tape, Var out, const Grid& weights) { return tape.weighted_sum(out, weights); }

void merge(GradCheckResult& into, const GradCheckResult& r) {
  into.max_rel_error = std::max(into.max_rel_error, r.max_rel_error);
  into.entries += r.entries;
  into.kink_skipped += r.kink_skipped;
}

bool verdict(const GradCheckResult& r, const GradCheckOptions& opts) {
  return r.max_rel_error < opts.tolerance &&
         static_cast<double>(r.kink_skipped) <=
             opts.max_kink_fraction * static_cast<double>(r.entries);
}

constexpr std::size_t kCin = 4;
constexpr std::size_t kCout = 3;
constexpr std::size_t kT = 7;

using CaseFn = std::function<GradCheckResult(std::mt19937_64&, const GradCheckOptions&)>;

struct Case {
  std::string name;
  CaseFn run;
};

Case conv_case(std::size_t k) {
  return {"conv1d_same k=" + std::to_string(k), [k](std::mt19937_64& rng, const GradCheckOptions& o) {
            Conv1dLayer layer(kCin, kCout, k);
            randomize(layer.weight, rng);
            randomize(layer.bias, rng);
            std::vector<Grid> in{random_grid(kCin, kT, rng)};
            const Grid w = random_grid(kCout, kT, rng);
            return check_gradients(
                "conv1d",
                [&](Tape& t, const std::vector<Var>& v) { return project(t, t.conv1d(layer, v[0]), w); },
                in, {&layer.weight, &layer.bias}, o);
          }};
}

Case unary_case(const std::string& name, bool kink_safe, std::function<Var(Tape&, Var)> op,
                std::size_t out_rows, std::size_t out_cols) {
  return {name, [=](std::mt19937_64& rng, const GradCheckOptions& o) {
            std::vector<Grid> in{kink_safe ? away_from_zero(kCin, kT, rng) : random_grid(kCin, kT, rng)};
            const Grid w = random_grid(out_rows, out_cols, rng);
            return check_gradients(
                name, [&](Tape& t, const std::vector<Var>& v) { return project(t, op(t, v[0]), w); },
                in, {}, o);
          }};
}

// CSA variants at the acceptance shapes.
Case csa_case(const std::string& name, CsaConfig cfg) {
  return {name, [=](std::mt19937_64& rng, const GradCheckOptions& o) {
            CsaModule m(kCin, kCout, kT, cfg, rng);
            std::vector<Grid> in{random_grid(kCin, kT, rng), random_grid(kCout, kT, rng)};
            const Grid w = random_grid(kCout, kT, rng);
            return check_gradients(
                name,
                [&](Tape& t, const std::vector<Var>& v) { return project(t, m.apply(t, cfg, v[0], v[1]), w); },
                in, params_of(m.named_parameters("csa")), o);
          }};
}

std::vector<Case> suite() {
  std::vector<Case> cases;
  for (std::size_t k : {1, 3, 5}) cases.push_back(conv_case(k));

  cases.push_back({"dense", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     DenseLayer layer(kCin, kCout);
                     randomize(layer.weight, rng);
                     randomize(layer.bias, rng);
                     std::vector<Grid> in{random_grid(1, kCin, rng)};
                     const Grid w = random_grid(1, kCout, rng);
                     return check_gradients(
                         "dense",
                         [&](Tape& t, const std::vector<Var>& v) { return project(t, t.dense(layer, v[0]), w); },
                         in, {&layer.weight, &layer.bias}, o);
                   }});
  cases.push_back(unary_case("relu", true, [](Tape& t, Var x) { return t.relu(x); }, kCin, kT));
  cases.push_back(unary_case("sigmoid", false, [](Tape& t, Var x) { return t.sigmoid(x); }, kCin, kT));
  cases.push_back(unary_case("mean_over_rows", false, [](Tape& t, Var x) { return t.mean_over_rows(x); }, 1, kT));
  cases.push_back(unary_case("mean_over_cols", false, [](Tape& t, Var x) { return t.mean_over_cols(x); }, 1, kCin));
  cases.push_back(unary_case("scale", false, [](Tape& t, Var x) { return t.scale(x, -1.75); }, kCin, kT));
  cases.push_back(unary_case("sum", false, [](Tape& t, Var x) { return t.sum(x); }, 1, 1));

  cases.push_back({"broadcast_mul_row", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     std::vector<Grid> in{random_grid(1, kT, rng), random_grid(kCout, kT, rng)};
                     const Grid w = random_grid(kCout, kT, rng);
                     return check_gradients(
                         "broadcast_mul_row",
                         [&](Tape& t, const std::vector<Var>& v) { return project(t, t.broadcast_mul_row(v[0], v[1]), w); },
                         in, {}, o);
                   }});
  cases.push_back({"broadcast_mul_col", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     std::vector<Grid> in{random_grid(1, kCout, rng), random_grid(kCout, kT, rng)};
                     const Grid w = random_grid(kCout, kT, rng);
                     return check_gradients(
                         "broadcast_mul_col",
                         [&](Tape& t, const std::vector<Var>& v) { return project(t, t.broadcast_mul_col(v[0], v[1]), w); },
                         in, {}, o);
                   }});
  cases.push_back({"concat_rows", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     std::vector<Grid> in{random_grid(2, kT, rng), random_grid(kCout, kT, rng)};
                     const Grid w = random_grid(2 + kCout, kT, rng);
                     return check_gradients(
                         "concat_rows",
                         [&](Tape& t, const std::vector<Var>& v) { return project(t, t.concat_rows(v[0], v[1]), w); },
                         in, {}, o);
                   }});
  cases.push_back({"add", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     std::vector<Grid> in{random_grid(kCout, kT, rng), random_grid(kCout, kT, rng)};
                     const Grid w = random_grid(kCout, kT, rng);
                     return check_gradients(
                         "add", [&](Tape& t, const std::vector<Var>& v) { return project(t, t.add(v[0], v[1]), w); },
                         in, {}, o);
                   }});
  cases.push_back({"balanced_bce", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     std::vector<Grid> in{random_grid(1, kT, rng, 0.05, 0.95)};
                     std::bernoulli_distribution coin(0.4);
                     Vec1 targets(kT);
                     for (double& y : targets) y = coin(rng) ? 1.0 : 0.0;
                     return check_gradients(
                         "balanced_bce",
                         [&](Tape& t, const std::vector<Var>& v) { return t.balanced_bce(v[0], targets); },
                         in, {}, o);
                   }});

  CsaConfig both;
  for (std::size_t blocks : {1, 2, 3}) {
    CsaConfig c = both;
    c.conv_blocks = blocks;
    cases.push_back(csa_case("CSA " + std::to_string(blocks) + "-conv", c));
  }
  for (std::size_t k : {1, 3, 5}) {
    CsaConfig c = both;
    c.kernel_size = k;
    cases.push_back(csa_case("CSA k=" + std::to_string(k), c));
  }
  {
    CsaConfig c = both;
    c.use_temporal = false;
    cases.push_back(csa_case("CSA channel-only", c));
    c = both;
    c.use_channel = false;
    cases.push_back(csa_case("CSA temporal-only", c));
    c = both;
    c.fusion = Fusion::Add;
    cases.push_back(csa_case("CSA add-fusion", c));
  }

  cases.push_back({"FF-CSA", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     FfCsaModule m(kCin, kCout, 4, rng);
                     randomize(m.squeeze().bias, rng);
                     randomize(m.excite().bias, rng);
                     std::vector<Grid> in{random_grid(kCin, kT, rng), random_grid(kCout, kT, rng)};
                     const Grid w = random_grid(kCout, kT, rng);
                     return check_gradients(
                         "FF-CSA",
                         [&](Tape& t, const std::vector<Var>& v) { return project(t, m.apply(t, v[0], v[1]), w); },
                         in, params_of(m.named_parameters("ff")), o);
                   }});
  cases.push_back({"SE", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     constexpr std::size_t c_out = 8;
                     SeModule m(c_out, 4, rng);
                     randomize(m.squeeze().bias, rng);
                     randomize(m.excite().bias, rng);
                     std::vector<Grid> in{random_grid(c_out, kT, rng)};
                     const Grid w = random_grid(c_out, kT, rng);
                     return check_gradients(
                         "SE", [&](Tape& t, const std::vector<Var>& v) { return project(t, m.apply(t, v[0]), w); },
                         in, params_of(m.named_parameters("se")), o);
                   }});

  for (Location loc : {Location::Start, Location::Middle, Location::End}) {
    const std::string name = "pipeline CSA@" + to_string(loc);
    cases.push_back({name, [loc, name](std::mt19937_64& rng, const GradCheckOptions& o) {
                       CsaConfig cfg;
                       cfg.location = loc;
                       const ModelShape shape{kCin, kT, 5, kCout};
                       Model model(shape, cfg, rng());
                       std::vector<Grid> in{random_grid(kCin, kT, rng)};
                       const std::vector<Segment> segs{{1, 4, 1}};
                       return check_gradients(
                           name,
                           [&](Tape& t, const std::vector<Var>& v) {
                             const auto out = model.forward(t, v[0]);
                             return boundary_loss(t, out.p_start, out.p_end, segs);
                           },
                           in, params_of(model.named_parameters()), o);
                     }});
  }
  return cases;
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const LossBuilder& build,
                                std::vector<Grid>& inputs, const std::vector<Param*>& params,
                                const GradCheckOptions& opts) {
  GradCheckResult result;
  result.name = name;

  Tape tape;
  std::vector<Var> vars;
  for (const auto& g : inputs) vars.push_back(tape.input(g));
  tape.backward(build(tape, vars));
  const std::vector<bool> base_pattern = tape.relu_pattern();

  auto probe = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + opts.step;
    const Evaluated up = evaluate_loss(build, inputs);
    slot = saved - opts.step;
    const Evaluated down = evaluate_loss(build, inputs);
    slot = saved;
    ++result.entries;
    if (up.pattern != base_pattern || down.pattern != base_pattern) {
      ++result.kink_skipped;
      return;
    }
    const double numeric = (up.loss - down.loss) / (2.0 * opts.step);
    result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic, numeric, opts.floor));
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Grid analytic = tape.grad(vars[i]);
    for (std::size_t e = 0; e < inputs[i].size(); ++e) probe(inputs[i][e], analytic[e]);
  }
  for (Param* p : params) {
    const Grid analytic = tape.param_grad(*p);
    for (std::size_t e = 0; e < p->value.size(); ++e) probe(p->value[e], analytic[e]);
  }
  result.passed = verdict(result, opts);
  return result;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t num_seeds,
                                                 const GradCheckOptions& opts) {
  std::vector<GradCheckResult> results;
  std::size_t index = 0;
  for (const Case& c : suite()) {
    GradCheckResult agg;
    agg.name = c.name;
    for (std::size_t s = 0; s < num_seeds; ++s) {
      std::mt19937_64 rng(derive_seed(seed + s, index));
      merge(agg, c.run(rng, opts));
    }
    agg.passed = verdict(agg, opts);
    results.push_back(agg);
    ++index;
  }
  return results;
}

}  // namespace csa
