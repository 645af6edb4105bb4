#pragma once

// Subcommand implementations behind the specuniv executable. Each command
// writes its files under ctx.out_dir and returns the checks it evaluated.

#include "specuniv/bounds.hpp"
#include "specuniv/cumulants.hpp"
#include "specuniv/experiments.hpp"
#include "specuniv/freeprob.hpp"
#include "specuniv/harness.hpp"
#include "specuniv/io.hpp"
#include "specuniv/params.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace specuniv {

enum ExitCode : int { kExitOk = 0, kExitSchema = 2, kExitConvergence = 3, kExitAcceptance = 4 };

namespace detail {

inline const ModelRecipe& require_model(const RunConfig& c) {
  if (!c.model) throw SchemaError("$.model", "this command needs a model block");
  return *c.model;
}

/// Recipe validation failures are configuration errors.
inline MatrixModel build_checked(const ModelRecipe& r) {
  try {
    MatrixModel m = build_model(r);
    validate(m);
    return m;
  } catch (const std::invalid_argument& e) {
    throw SchemaError("$.model", e.what());
  }
}

}  // namespace detail

inline RunOutcome cmd_params(const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  const MatrixModel m = detail::build_checked(detail::require_model(ctx.config));
  const ParamsBlock pb = ctx.config.params.value_or(ParamsBlock{});
  const ParameterSet ps = compute_parameters(m, pb.options(ctx.config.seed, ctx.threads));
  RunOutcome out;
  ordered_json body;
  body["model"] = m.label;
  body["warnings"] = m.warnings;
  body["parameters"] = parameters_to_json(ps);
  write_json_report(ctx.path("params.json"), ctx.header(), ctx.config, body);
  out.files.push_back("params.json");
  return out;
}

inline FreeModel free_model_of(const RunConfig& c) {
  if (c.free && c.free->mean) {
    try {
      return free_model(*c.free->mean, c.free->kraus);
    } catch (const std::invalid_argument& e) {
      throw SchemaError("$.free", e.what());
    }
  }
  const FreeModel f = free_counterpart(detail::build_checked(detail::require_model(c)));
  if (auto r = reduce_isotropic(f)) return *r;
  return f;
}

inline RunOutcome cmd_free(const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  const FreeBlock fb = ctx.config.free.value_or(FreeBlock{});
  const FreeModel f = free_model_of(ctx.config);
  const auto window = support_window(f);
  const double lo = fb.lo.value_or(window.first), hi = fb.hi.value_or(window.second);
  if (!(hi > lo)) throw SchemaError("$.free.hi", "need lo < hi");

  const LehnerResult edge = lehner_edge(f);
  SupportOptions so;
  so.threshold = fb.threshold;
  const SupportEdges se = support_edges(f, so);
  const DensityCurve curve = free_density_extrapolated(f, lo, hi, fb.points, fb.eta1, fb.eta2, {}, ctx.threads);

  RunOutcome out;
  detail::write_density(ctx, "free_density.csv", curve, out);
  ordered_json body;
  body["dim"] = f.dim;
  body["edge"] = {{"value", edge.value},
                  {"fixed_point", edge.fixed_point},
                  {"descent", edge.descent},
                  {"agree", edge.agree},
                  {"method", edge.method}};
  body["simple_norm_bound"] = simple_norm_bound(f);
  ordered_json per = ordered_json::array();
  for (const auto& e : se.per_eta) per.push_back({{"eta", e.eta}, {"lo", e.lo}, {"hi", e.hi}});
  body["support"] = {{"lo", se.lo}, {"hi", se.hi}, {"per_eta", per}};
  body["density"] = {{"lo", lo}, {"hi", hi}, {"points", fb.points}, {"mass", curve.mass()}};
  detail::write_report(ctx, "free.json", body, out);
  return out;
}

inline RunOutcome cmd_simulate(const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  const MatrixModel m = detail::build_checked(detail::require_model(ctx.config));
  const SimulateBlock sb = ctx.config.simulate.value_or(SimulateBlock{});
  const auto s = simulate_spectra(m, sb.trials, ctx.config.seed, ctx.threads);

  RunOutcome out;
  std::vector<TrialRow> rows;
  for (std::size_t j = 0; j < s.trials; ++j) {
    const auto& e = s.eigs[j];
    const std::uint64_t seed = derive_seed(ctx.config.seed, j);
    rows.push_back({j, seed, "lambda_min", e(0)});
    rows.push_back({j, seed, "lambda_max", e(e.size() - 1)});
    for (int p : sb.moment_p) rows.push_back({j, seed, "tr_X^" + std::to_string(2 * p), e.array().pow(2.0 * p).mean()});
  }
  detail::write_trials(ctx, "simulate_trials.csv", rows, out);
  double lo = kInf, hi = -kInf;
  for (const auto& e : s.eigs) {
    lo = std::min(lo, e(0));
    hi = std::max(hi, e(e.size() - 1));
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  detail::write_histogram(ctx, "simulate_histogram.csv", esd_histogram(s, sb.histogram_bins, lo, hi), out);

  ordered_json body;
  const Estimate edge = edge_statistic(s);
  body["model"] = m.label;
  body["trials"] = s.trials;
  body["edge"] = {{"value", edge.value}, {"stderr", edge.stderr_}};
  ordered_json tm = ordered_json::object();
  for (int p : sb.moment_p) {
    const Estimate e = trace_moment_statistic(s, p);
    tm[std::to_string(p)] = {{"value", e.value}, {"stderr", e.stderr_}};
  }
  body["trace_moment_root"] = tm;
  ordered_json st = ordered_json::array();
  for (cplx z : sb.stieltjes_z) {
    const auto e = stieltjes_statistic(s, z);
    st.push_back({{"z", {z.real(), z.imag()}}, {"value", {e.value.real(), e.value.imag()}}, {"stderr", e.stderr_}});
  }
  body["stieltjes"] = st;
  detail::write_report(ctx, "simulate.json", body, out);
  return out;
}

inline RunOutcome cmd_verify(const RunContext& ctx) {
  const MatrixModel m = detail::build_checked(detail::require_model(ctx.config));
  return run_verify(m, ctx.config.verify.value_or(VerifyBlock{}), ctx.config.params.value_or(ParamsBlock{}), ctx);
}

/// Long-format sweep: one row per (d, bound, t, p, im_z).
inline RunOutcome cmd_bounds(const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  const ModelRecipe& recipe = detail::require_model(ctx.config);
  const BoundsBlock bb = ctx.config.bounds.value_or(BoundsBlock{});
  std::vector<ModelRecipe> recipes;
  if (bb.d.empty()) {
    recipes.push_back(recipe);
  } else {
    if (!recipe_dim(recipe)) throw SchemaError("$.bounds.d", "model kind has no dimension parameter");
    for (int d : bb.d) recipes.push_back(with_dim(recipe, d));
  }
  std::vector<std::vector<std::string>> rows;
  auto row = [&](int d, const std::string& name, std::optional<double> t, std::optional<int> p,
                 std::optional<double> y, double v) {
    rows.push_back({std::to_string(d), name, t ? fmt(*t) : "", p ? std::to_string(*p) : "", y ? fmt(*y) : "", fmt(v)});
  };
  for (const auto& r : recipes) {
    const MatrixModel m = detail::build_checked(r);
    ParamsBlock pb = ctx.config.params.value_or(ParamsBlock{});
    for (int p : bb.p) pb.q_values.push_back(2.0 * p);
    const ParameterSet ps = compute_parameters(m, pb.options(ctx.config.seed, ctx.threads));
    const BoundInputs in = BoundInputs::from(ps, bb.C);
    const int d = m.dim;
    for (double t : bb.t) {
      row(d, "eps_universality", t, {}, {}, eps_universality(in, t));
      row(d, "sharp_concentration", t, {}, {}, sharp_concentration_bound(in, t));
    }
    row(d, "edge_expectation", {}, {}, {}, edge_expectation_bound(in));
    const auto cb = classical_bounds(in);
    row(d, "khintchine", {}, {}, {}, cb.khintchine);
    row(d, "bernstein", {}, {}, {}, cb.bernstein);
    for (int p : bb.p) {
      const double q = 2.0 * p;
      const MomentParams mp{ps.sigma_q.at(q).value, ps.r_q.at(q).value};
      row(d, "moment_universality", {}, p, {}, moment_universality_bound(mp, p, q, bb.C));
      row(d, "moment_universality_montsm", {}, p, {}, variant_montsm(mp, p, q, bb.C));
      row(d, "ssconc_moment", {}, p, {}, ssconc_moment_bound(in, p));
      for (double y : bb.im_z) {
        row(d, "resolvent", {}, p, y, resolvent_bound(in, p, y));
        row(d, "ssconc_resolvent", {}, p, y, ssconc_resolvent_bound(in, p, y));
      }
    }
    if (ps.third_moment_sum.provenance != Provenance::unavailable)
      for (double y : bb.im_z) row(d, "stieltjes", {}, {}, y, stieltjes_bound(in, y));
  }
  RunOutcome out;
  write_csv(ctx.path("bounds.csv"), ctx.header(), {"d", "bound", "t", "p", "im_z", "value"}, rows);
  out.files.push_back("bounds.csv");
  return out;
}

inline RunOutcome cmd_experiment(const std::string& name, const RunContext& ctx) {
  const json overrides = ctx.config.experiment ? ctx.config.experiment->overrides : json::object();
  return run_experiment(name, overrides, ctx);
}

inline RunOutcome cmd_cumulant_check(const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  const MatrixModel m = detail::build_checked(detail::require_model(ctx.config));
  const CumulantBlock cb = ctx.config.cumulant_check.value_or(CumulantBlock{});
  const MatrixModel g = gaussian_counterpart(m);
  RunOutcome out;
  ordered_json reports = ordered_json::array();
  for (std::size_t i = 0; i < cb.m.size(); ++i) {
    const auto r = interpolation_derivative_check(m, g, cb.m[i], cb.t, cb.trials, derive_seed(ctx.config.seed, i),
                                                  ctx.threads);
    reports.push_back({{"m", r.power},
                       {"t", r.t},
                       {"trials", r.trials},
                       {"lhs", r.lhs},
                       {"lhs_stderr", r.lhs_stderr},
                       {"rhs", r.rhs},
                       {"rhs_stderr", r.rhs_stderr},
                       {"stderr", r.stderr_},
                       {"zscore", r.zscore}});
    out.checks.push_back(Check::at_most("zscore_m" + std::to_string(r.power), std::abs(r.zscore), cb.z_max));
  }
  ordered_json body;
  body["reports"] = reports;
  detail::write_report(ctx, "cumulant_check.json", body, out);
  return out;
}

}  // namespace specuniv
