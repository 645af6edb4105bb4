#pragma once

// Named experiments and the verify report. Each run writes <name>.json plus
// per-trial CSV rows (trial, seed, statistic, value).

#include "specuniv/bounds.hpp"
#include "specuniv/freeprob.hpp"
#include "specuniv/harness.hpp"
#include "specuniv/io.hpp"

#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace specuniv {

struct Check {
  std::string name;
  double observed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  /// "abs_le": |observed - expected| <= tolerance; "le": observed <= expected;
  /// "ge": observed >= expected.
  std::string kind = "abs_le";
  bool pass = false;

  static Check near(std::string n, double obs, double exp, double tol) {
    return {std::move(n), obs, exp, tol, "abs_le", std::abs(obs - exp) <= tol};
  }
  static Check at_most(std::string n, double obs, double limit) {
    return {std::move(n), obs, limit, 0.0, "le", obs <= limit};
  }
  static Check at_least(std::string n, double obs, double limit) {
    return {std::move(n), obs, limit, 0.0, "ge", obs >= limit};
  }
  ordered_json to_json() const {
    return {{"name", name},     {"observed", number_to_json(observed)}, {"expected", number_to_json(expected)},
            {"tolerance", tolerance}, {"kind", kind},                     {"pass", pass}};
  }
  std::string describe() const {
    auto g = [](double x) {
      std::ostringstream os;
      os << std::setprecision(6) << x;
      return os.str();
    };
    const std::string rel = kind == "abs_le" ? " within " + g(tolerance) + " of " : (kind == "le" ? " <= " : " >= ");
    return name + ": observed " + g(observed) + ", expected" + rel + g(expected);
  }
};

struct RunContext {
  RunConfig config;
  std::string out_dir = ".";
  int threads = 1;

  OutputHeader header() const { return OutputHeader::of(config); }
  std::string path(const std::string& file) const { return (std::filesystem::path(out_dir) / file).string(); }
};

struct RunOutcome {
  std::vector<Check> checks;
  std::vector<std::string> files;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct TrialRow {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string statistic;
  double value = 0.0;
};

namespace detail {

inline ordered_json checks_json(const std::vector<Check>& checks) {
  ordered_json a = ordered_json::array();
  for (const auto& c : checks) a.push_back(c.to_json());
  return a;
}

inline void write_trials(const RunContext& ctx, const std::string& file, const std::vector<TrialRow>& rows,
                         RunOutcome& out) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) cells.push_back({std::to_string(r.trial), std::to_string(r.seed), r.statistic, fmt(r.value)});
  write_csv(ctx.path(file), ctx.header(), {"trial", "seed", "statistic", "value"}, cells);
  out.files.push_back(file);
}

inline void write_histogram(const RunContext& ctx, const std::string& file, const Histogram& h, RunOutcome& out) {
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < h.mass.size(); ++i) cells.push_back({fmt(h.edges[i]), fmt(h.edges[i + 1]), fmt(h.mass[i])});
  write_csv(ctx.path(file), ctx.header(), {"bin_lo", "bin_hi", "mass"}, cells);
  out.files.push_back(file);
}

inline void write_density(const RunContext& ctx, const std::string& file, const DensityCurve& c, RunOutcome& out) {
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < c.x.size(); ++i) cells.push_back({fmt(c.x[i]), fmt(c.rho[i])});
  write_csv(ctx.path(file), ctx.header(), {"x", "rho"}, cells);
  out.files.push_back(file);
}

inline void write_report(const RunContext& ctx, const std::string& file, ordered_json body, RunOutcome& out) {
  body["checks"] = checks_json(out.checks);
  body["passed"] = out.passed();
  write_json_report(ctx.path(file), ctx.header(), ctx.config, body);
  out.files.insert(out.files.begin(), file);
}

/// The free counterpart, reduced to 1x1 when isotropic.
inline FreeModel reduced_free(const MatrixModel& m) {
  FreeModel f = free_counterpart(m);
  if (auto r = reduce_isotropic(f)) return *r;
  return f;
}

/// sum_ij A_ij B_ji / d for real symmetric inputs.
inline double normalized_trace_product(const RMatrix& a, const RMatrix& b) {
  return a.cwiseProduct(b.transpose()).sum() / static_cast<double>(a.rows());
}

inline RMatrix real_part(const CMatrix& m) { return m.real(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiments

/// Experiment names in a stable order.
inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"wigner-semicircle",           "sparse-wigner-freeness",
                                              "free-word-traces",            "sample-covariance-baiyin",
                                              "sample-covariance-universality", "heavy-tail-lower-bound",
                                              "bernstein-vs-sharp"};
  return names;
}

inline RunOutcome experiment_wigner_semicircle(const RunContext& ctx, ObjectReader& o) {
  IidEntryRecipe r;
  r.d = o.get_or<int>("d", 1000);
  if (o.has("law")) r.law = read_law(o.raw("law"), o.child("law"));
  const auto trials = o.get_or<std::size_t>("trials", 1);
  const int bins = o.get_or<int>("bins", 50);
  const double ks_tol = o.get_or<double>("ks_tol", 0.03);
  o.finish();
  if (r.d < 2 || trials < 1 || bins < 1) throw SchemaError(o.path(), "need d >= 2, trials >= 1, bins >= 1");

  const MatrixModel m = build_model(r);
  const auto s = simulate_spectra(m, trials, ctx.config.seed, ctx.threads);
  const FreeModel f = detail::reduced_free(m);
  const auto [lo, hi] = support_window(f);
  const DensityCurve curve = free_density_extrapolated(f, lo, hi, 801);
  const Estimate ks = ks_statistic(s, curve);
  const auto lmax = lambda_max_per_trial(s);
  const Estimate edge = mean_estimate(lmax);
  const double free_edge = lehner_edge(f).value;

  RunOutcome out;
  out.checks.push_back(Check::at_most("ks_distance", ks.value, ks_tol));
  out.checks.push_back(Check::near("lambda_max", edge.value, 2.0, 0.1));
  std::vector<TrialRow> rows;
  for (std::size_t j = 0; j < trials; ++j) rows.push_back({j, derive_seed(ctx.config.seed, j), "lambda_max", lmax[j]});
  const std::string base = "wigner-semicircle";
  detail::write_trials(ctx, base + "_trials.csv", rows, out);
  detail::write_histogram(ctx, base + "_histogram.csv", esd_histogram(s, bins, lo, hi), out);
  detail::write_density(ctx, base + "_density.csv", curve, out);
  ordered_json body;
  body["experiment"] = base;
  body["d"] = r.d;
  body["trials"] = trials;
  body["ks_distance"] = {{"value", ks.value}, {"stderr", ks.stderr_}};
  body["lambda_max"] = {{"value", edge.value}, {"stderr", edge.stderr_}};
  body["free_edge"] = free_edge;
  detail::write_report(ctx, base + ".json", body, out);
  return out;
}

namespace detail {

/// tr H1 H2 H1 H2, tr H1^2 H2^2 and ||H1|| over trials for two independent
/// copies of a model; compared with free word traces and the free edge.
inline RunOutcome word_trace_experiment(const RunContext& ctx, const std::string& base, const MatrixModel& m,
                                        std::size_t trials, double tol, double norm_tol, ordered_json body) {
  const FreeModel f = reduced_free(m);
  const std::vector<FreeModel> family{f, f};
  const double pred_alt = free_word_trace(family, {0, 1, 0, 1});
  const double pred_sq = free_word_trace(family, {0, 0, 1, 1});
  const double pred_norm = lehner_edge(f).value;

  std::vector<double> alt(trials), sq(trials), norm(trials);
  parallel_for(trials, ctx.threads, [&](std::size_t j) {
    const RMatrix h1 = real_part(sample(m, derive_seed(ctx.config.seed, 2 * j)));
    const RMatrix h2 = real_part(sample(m, derive_seed(ctx.config.seed, 2 * j + 1)));
    const RMatrix p = h1 * h2;
    alt[j] = normalized_trace_product(p, p);
    const RMatrix a = h1 * h1, b = h2 * h2;
    sq[j] = normalized_trace_product(a, b);
    Eigen::SelfAdjointEigenSolver<RMatrix> es(h1, Eigen::EigenvaluesOnly);
    norm[j] = es.eigenvalues().cwiseAbs().maxCoeff();
  });
  const Estimate e_alt = mean_estimate(alt), e_sq = mean_estimate(sq), e_norm = mean_estimate(norm);

  RunOutcome out;
  out.checks.push_back(Check::near("tr_H1H2H1H2", e_alt.value, pred_alt, tol));
  out.checks.push_back(Check::near("tr_H1H1H2H2", e_sq.value, pred_sq, tol));
  out.checks.push_back(Check::near("norm_H1", e_norm.value, pred_norm, norm_tol));
  std::vector<TrialRow> rows;
  for (std::size_t j = 0; j < trials; ++j) {
    const std::uint64_t seed = derive_seed(ctx.config.seed, 2 * j);
    rows.push_back({j, seed, "tr_H1H2H1H2", alt[j]});
    rows.push_back({j, seed, "tr_H1H1H2H2", sq[j]});
    rows.push_back({j, seed, "norm_H1", norm[j]});
  }
  write_trials(ctx, base + "_trials.csv", rows, out);
  body["experiment"] = base;
  body["trials"] = trials;
  body["tr_H1H2H1H2"] = {{"value", e_alt.value}, {"stderr", e_alt.stderr_}, {"free_prediction", pred_alt}};
  body["tr_H1H1H2H2"] = {{"value", e_sq.value}, {"stderr", e_sq.stderr_}, {"free_prediction", pred_sq}};
  body["norm_H1"] = {{"value", e_norm.value}, {"stderr", e_norm.stderr_}, {"free_prediction", pred_norm}};
  write_report(ctx, base + ".json", body, out);
  return out;
}

}  // namespace detail

inline RunOutcome experiment_free_word_traces(const RunContext& ctx, ObjectReader& o) {
  IidEntryRecipe r;
  r.d = o.get_or<int>("d", 1000);
  if (o.has("law")) r.law = read_law(o.raw("law"), o.child("law"));
  const auto trials = o.get_or<std::size_t>("trials", 1);
  const double tol = o.get_or<double>("tol", 0.05);
  const double norm_tol = o.get_or<double>("norm_tol", 0.1);
  o.finish();
  if (r.d < 2 || trials < 1) throw SchemaError(o.path(), "need d >= 2 and trials >= 1");
  ordered_json body;
  body["d"] = r.d;
  body["law"] = law_to_json(r.law);
  return detail::word_trace_experiment(ctx, "free-word-traces", build_model(r), trials, tol, norm_tol, body);
}

inline RunOutcome experiment_sparse_wigner_freeness(const RunContext& ctx, ObjectReader& o) {
  SparseWignerRecipe r;
  r.d = o.get_or<int>("d", 1000);
  r.k = o.get_or<int>("k", 100);
  if (o.has("law")) r.law = read_law(o.raw("law"), o.child("law"));
  const auto trials = o.get_or<std::size_t>("trials", 1);
  const double tol = o.get_or<double>("tol", 0.05);
  const double norm_tol = o.get_or<double>("norm_tol", 0.15);
  o.finish();
  if (r.d < 2 || r.k < 1 || r.k > r.d || trials < 1) throw SchemaError(o.path(), "need 1 <= k <= d and trials >= 1");
  ordered_json body;
  body["d"] = r.d;
  body["k"] = r.k;
  body["law"] = law_to_json(r.law);
  // reference scales from the sparse Wigner corollaries
  const double dd = r.d;
  body["thresholds"] = {{"subgauss_beta_0", sparse_thresholds(dd, SparseRegime::subgauss_beta, 0.0)},
                        {"rate_p_inf", sparse_thresholds(dd, SparseRegime::rate_p, kInf)}};
  return detail::word_trace_experiment(ctx, "sparse-wigner-freeness", build_model(r), trials, tol, norm_tol, body);
}

inline RunOutcome experiment_sample_covariance_baiyin(const RunContext& ctx, ObjectReader& o) {
  SampleCovarianceRecipe r;
  r.d = o.get_or<int>("d", 400);
  r.n = o.get_or<int>("n", 800);
  if (o.has("law")) r.law = read_law(o.raw("law"), o.child("law"));
  const auto trials = o.get_or<std::size_t>("trials", 20);
  const double rel_tol = o.get_or<double>("rel_tol", 0.05);
  o.finish();
  if (r.d < 1 || r.n < 1 || trials < 1) throw SchemaError(o.path(), "need d, n, trials >= 1");

  const double gamma = static_cast<double>(r.d) / r.n;
  const double target = 2.0 * std::sqrt(gamma) + gamma;
  const MatrixModel m = build_model(r);
  const auto s = simulate_spectra(m, trials, ctx.config.seed, ctx.threads);
  std::vector<double> norms;
  for (const auto& e : s.eigs) norms.push_back(std::max(-e(0), e(e.size() - 1)));
  const Estimate mean = mean_estimate(norms);

  RunOutcome out;
  out.checks.push_back(Check::near("mean_norm_S_minus_ES", mean.value, target, rel_tol * target));
  std::vector<TrialRow> rows;
  for (std::size_t j = 0; j < trials; ++j) rows.push_back({j, derive_seed(ctx.config.seed, j), "norm_S_minus_ES", norms[j]});
  detail::write_trials(ctx, "sample-covariance-baiyin_trials.csv", rows, out);
  ordered_json body;
  body["experiment"] = "sample-covariance-baiyin";
  body["d"] = r.d;
  body["n"] = r.n;
  body["gamma"] = gamma;
  body["target"] = target;
  body["trials"] = trials;
  body["mean_norm"] = {{"value", mean.value}, {"stderr", mean.stderr_}};
  detail::write_report(ctx, "sample-covariance-baiyin.json", body, out);
  return out;
}

inline RunOutcome experiment_sample_covariance_universality(const RunContext& ctx, ObjectReader& o) {
  SampleCovarianceRecipe r;
  r.d = o.get_or<int>("d", 200);
  r.n = o.get_or<int>("n", 400);
  if (o.has("law")) r.law = read_law(o.raw("law"), o.child("law"));
  const auto trials = o.get_or<std::size_t>("trials", 20);
  const double max_c_fit = o.get_or<double>("max_c_fit", 10.0);
  o.finish();
  if (r.d < 1 || r.n < 1 || trials < 2) throw SchemaError(o.path(), "need d, n >= 1 and trials >= 2");

  SampleCovarianceRecipe g = r;
  g.law = ScalarLaw::gaussian();
  const auto norms = [&](const MatrixModel& m, std::uint64_t seed) {
    const auto s = simulate_spectra(m, trials, seed, ctx.threads);
    std::vector<double> v;
    for (const auto& e : s.eigs) v.push_back(std::max(-e(0), e(e.size() - 1)));
    return v;
  };
  const auto nx = norms(build_model(r), derive_seed(ctx.config.seed, 0));
  const auto ng = norms(build_model(g), derive_seed(ctx.config.seed, 1));
  const Estimate ex = mean_estimate(nx), eg = mean_estimate(ng);

  // Y = [y_1 .. y_n] / sqrt(n), its Gaussian model H
  const double sn = 1.0 / std::sqrt(static_cast<double>(r.n));
  const RectangularModel y = build_rectangular_iid(r.d, r.n, r.law, sn);
  const RectParameters yp = rectangular_parameters(y);
  const auto hn = simulate_rect_norms(build_rectangular_iid(r.d, r.n, ScalarLaw::gaussian(), sn), trials,
                                      derive_seed(ctx.config.seed, 2), ctx.threads);
  const Estimate e_h = mean_estimate(hn);
  const double delta = wishart_delta(yp, r.d, r.n);
  const double bound = wishart_gap_bound(yp, r.d, r.n, e_h.value);
  const double gap = std::abs(ex.value - eg.value);
  const double c_fit = fit_ratio(gap, bound);
  const double regime = std::pow(r.n, 2.0 / 3.0) * std::pow(std::log(static_cast<double>(r.n)), 4.0 / 3.0);

  RunOutcome out;
  out.checks.push_back(Check::at_most("c_fit", c_fit, max_c_fit));
  std::vector<TrialRow> rows;
  for (std::size_t j = 0; j < trials; ++j) {
    rows.push_back({j, derive_seed(derive_seed(ctx.config.seed, 0), j), "norm_X", nx[j]});
    rows.push_back({j, derive_seed(derive_seed(ctx.config.seed, 1), j), "norm_G", ng[j]});
    rows.push_back({j, derive_seed(derive_seed(ctx.config.seed, 2), j), "norm_H", hn[j]});
  }
  detail::write_trials(ctx, "sample-covariance-universality_trials.csv", rows, out);
  ordered_json body;
  body["experiment"] = "sample-covariance-universality";
  body["d"] = r.d;
  body["n"] = r.n;
  body["trials"] = trials;
  body["mean_norm_X"] = {{"value", ex.value}, {"stderr", ex.stderr_}};
  body["mean_norm_G"] = {{"value", eg.value}, {"stderr", eg.stderr_}};
  body["gap"] = {{"value", gap}, {"stderr", std::hypot(ex.stderr_, eg.stderr_)}};
  body["mean_norm_H"] = {{"value", e_h.value}, {"stderr", e_h.stderr_}};
  body["Y_parameters"] = {{"sigma", yp.sigma}, {"sigma_star", yp.sigma_star}, {"v", yp.v}, {"R", number_to_json(yp.r)}};
  body["delta"] = delta;
  body["bound"] = bound;
  body["c_fit"] = number_to_json(c_fit);
  body["regime"] = {{"d", r.d}, {"n_pow_2_3_log_pow_4_3", regime}, {"d_over_scale", r.d / regime}};
  detail::write_report(ctx, "sample-covariance-universality.json", body, out);
  return out;
}

inline RunOutcome experiment_heavy_tail_lower_bound(const RunContext& ctx, ObjectReader& o) {
  const int d = o.get_or<int>("d", 500);
  const double p = o.get_or<double>("p", 4.0);
  const auto trials = o.get_or<std::size_t>("trials", 20);
  const double min_frequency = o.get_or<double>("min_frequency", 0.5);
  o.finish();
  if (d < 2 || !(p > 2.0) || trials < 1) throw SchemaError(o.path(), "need d >= 2, p > 2, trials >= 1");

  // k = d: every pair is an edge, so H_1 is a dense Wigner matrix
  IidEntryRecipe r;
  r.d = d;
  r.law = ScalarLaw::pareto_tail(p);
  const MatrixModel m = build_model(r);
  const double threshold = heavy_tail_threshold(d, d, p);
  const auto s = simulate_spectra(m, trials, ctx.config.seed, ctx.threads);
  std::vector<double> norms;
  std::size_t exceed = 0;
  for (const auto& e : s.eigs) {
    norms.push_back(std::max(-e(0), e(e.size() - 1)));
    if (norms.back() > threshold) ++exceed;
  }
  const double freq = static_cast<double>(exceed) / trials;

  RunOutcome out;
  out.checks.push_back(Check::at_least("exceed_frequency", freq, min_frequency));
  std::vector<TrialRow> rows;
  for (std::size_t j = 0; j < trials; ++j) rows.push_back({j, derive_seed(ctx.config.seed, j), "norm_H1", norms[j]});
  detail::write_trials(ctx, "heavy-tail-lower-bound_trials.csv", rows, out);
  ordered_json body;
  body["experiment"] = "heavy-tail-lower-bound";
  body["d"] = d;
  body["k"] = d;
  body["p"] = p;
  body["trials"] = trials;
  body["threshold"] = threshold;
  body["exceed_frequency"] = freq;
  body["predicted_probability_at_least"] = 1.0 - std::exp(-1.0);
  body["mean_norm"] = mean_estimate(norms).value;
  detail::write_report(ctx, "heavy-tail-lower-bound.json", body, out);
  return out;
}

inline RunOutcome experiment_bernstein_vs_sharp(const RunContext& ctx, ObjectReader& o) {
  std::vector<int> dims{32, 64, 128};
  if (o.has("d")) dims = read_array<int>(o.raw("d"), o.child("d"));
  const auto trials = o.get_or<std::size_t>("trials", 20);
  const double C = o.get_or<double>("C", 1.0);
  o.finish();
  if (dims.empty() || trials < 1 || !(C > 0.0)) throw SchemaError(o.path(), "need dimensions, trials >= 1, C > 0");
  for (int d : dims)
    if (d < 2) throw SchemaError(o.child("d"), "dimensions must be >= 2");

  RunOutcome out;
  ordered_json table = ordered_json::array();
  std::vector<TrialRow> rows;
  std::vector<std::vector<std::string>> csv;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    IidEntryRecipe r;
    r.d = dims[i];
    const MatrixModel m = build_model(r);
    const std::uint64_t seed = derive_seed(ctx.config.seed, i);
    const auto s = simulate_spectra(m, trials, seed, ctx.threads);
    std::vector<double> norms;
    for (const auto& e : s.eigs) norms.push_back(std::max(-e(0), e(e.size() - 1)));
    const Estimate obs = mean_estimate(norms);
    const ParameterSet ps = compute_parameters(m);
    const BoundInputs in = BoundInputs::from(ps, C);
    const double free_edge = lehner_edge(detail::reduced_free(m)).value;
    const auto cb = classical_bounds(in, free_edge);
    const double sharp = free_edge + edge_expectation_bound(in);
    table.push_back({{"d", dims[i]},
                     {"observed_mean_norm", obs.value},
                     {"stderr", obs.stderr_},
                     {"free_edge", free_edge},
                     {"khintchine", cb.khintchine},
                     {"bernstein", cb.bernstein},
                     {"bbv", cb.bbv},
                     {"sharp", sharp}});
    csv.push_back({std::to_string(dims[i]), fmt(obs.value), fmt(obs.stderr_), fmt(free_edge), fmt(cb.khintchine),
                   fmt(cb.bernstein), fmt(cb.bbv), fmt(sharp)});
    for (std::size_t j = 0; j < trials; ++j)
      rows.push_back({j, derive_seed(seed, j), "norm_d" + std::to_string(dims[i]), norms[j]});
    if (i + 1 == dims.size()) out.checks.push_back(Check::near("free_edge_vs_observed", obs.value, free_edge, 0.15));
  }
  detail::write_trials(ctx, "bernstein-vs-sharp_trials.csv", rows, out);
  write_csv(ctx.path("bernstein-vs-sharp_table.csv"), ctx.header(),
            {"d", "observed_mean_norm", "stderr", "free_edge", "khintchine", "bernstein", "bbv", "sharp"}, csv);
  out.files.push_back("bernstein-vs-sharp_table.csv");
  ordered_json body;
  body["experiment"] = "bernstein-vs-sharp";
  body["trials"] = trials;
  body["C"] = C;
  body["table"] = table;
  detail::write_report(ctx, "bernstein-vs-sharp.json", body, out);
  return out;
}

/// Runs a named experiment with overrides validated against its own keys.
inline RunOutcome run_experiment(const std::string& name, const json& overrides, const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  ObjectReader o(overrides, "$.experiment.overrides");
  if (name == "wigner-semicircle") return experiment_wigner_semicircle(ctx, o);
  if (name == "sparse-wigner-freeness") return experiment_sparse_wigner_freeness(ctx, o);
  if (name == "free-word-traces") return experiment_free_word_traces(ctx, o);
  if (name == "sample-covariance-baiyin") return experiment_sample_covariance_baiyin(ctx, o);
  if (name == "sample-covariance-universality") return experiment_sample_covariance_universality(ctx, o);
  if (name == "heavy-tail-lower-bound") return experiment_heavy_tail_lower_bound(ctx, o);
  if (name == "bernstein-vs-sharp") return experiment_bernstein_vs_sharp(ctx, o);
  throw SchemaError("$.experiment.name", "unknown experiment '" + name + "'");
}

// ---------------------------------------------------------------------------
// verify

inline ordered_json comparison_to_json(const ComparisonReport& r) {
  auto gap = [](const GapEstimate& g) {
    return ordered_json{{"x", g.x},           {"g", g.g},         {"gap", g.gap},
                        {"stderr", g.stderr_}, {"bound", number_to_json(g.bound)}, {"c_fit", number_to_json(g.c_fit)}};
  };
  ordered_json j;
  j["label"] = r.label;
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["sampling"] = "X and G drawn independently";
  j["parameters"] = parameters_to_json(r.params);
  j["eps_log_d"] = number_to_json(r.eps_log_d);
  j["hausdorff"] = {{"median", r.median_hausdorff},
                    {"mean", mean_estimate(r.hausdorff).value},
                    {"stderr", mean_estimate(r.hausdorff).stderr_},
                    {"c_fit", number_to_json(r.c_fit_hausdorff)}};
  j["edge"] = gap(r.edge);
  ordered_json mg = ordered_json::object();
  for (const auto& [p, g] : r.moments) mg[std::to_string(p)] = gap(g);
  j["moment_gaps"] = mg;
  ordered_json sg = ordered_json::array();
  for (const auto& s : r.stieltjes)
    sg.push_back({{"z", {s.z.real(), s.z.imag()}},
                  {"x", {s.x.real(), s.x.imag()}},
                  {"g", {s.g.real(), s.g.imag()}},
                  {"gap", s.gap},
                  {"stderr", s.stderr_},
                  {"bound", number_to_json(s.bound)},
                  {"c_fit", number_to_json(s.c_fit)}});
  j["stieltjes_gaps"] = sg;
  return j;
}

/// Fitted constants against the configured ceiling. A gap within 4 stderr
/// of 0 passes even when its bound is 0.
inline std::vector<Check> verify_checks(const ComparisonReport& r, double max_c_fit) {
  std::vector<Check> out;
  auto add = [&](const std::string& name, double gap, double stderr_, double c_fit) {
    if (gap <= 4.0 * stderr_) {
      out.push_back(Check::near(name + "_gap_vs_noise", gap, 0.0, 4.0 * stderr_));
    } else {
      out.push_back(Check::at_most(name + "_c_fit", c_fit, max_c_fit));
    }
  };
  out.push_back(Check::at_most("hausdorff_median_c_fit", fit_ratio(r.median_hausdorff, r.eps_log_d), max_c_fit));
  add("edge", r.edge.gap, r.edge.stderr_, r.edge.c_fit);
  for (const auto& [p, g] : r.moments) add("moment_p" + std::to_string(p), g.gap, g.stderr_, g.c_fit);
  for (std::size_t i = 0; i < r.stieltjes.size(); ++i)
    add("stieltjes_" + std::to_string(i), r.stieltjes[i].gap, r.stieltjes[i].stderr_, r.stieltjes[i].c_fit);
  return out;
}

inline RunOutcome run_verify(const MatrixModel& model, const VerifyBlock& vb, const ParamsBlock& pb,
                             const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  CompareConfig cfg;
  cfg.seed = ctx.config.seed;
  cfg.threads = ctx.threads;
  cfg.moment_p = vb.moment_p;
  cfg.stieltjes_z = vb.stieltjes_z;
  cfg.C = vb.C;
  cfg.params = pb.options(ctx.config.seed, ctx.threads);
  const ComparisonReport rep = compare_models(model, vb.trials, cfg);

  RunOutcome out;
  if (vb.max_c_fit) out.checks = verify_checks(rep, *vb.max_c_fit);
  std::vector<TrialRow> rows;
  const std::uint64_t sx = derive_seed(cfg.seed, 0);
  for (std::size_t j = 0; j < rep.trials; ++j) {
    const std::uint64_t s = derive_seed(sx, j);
    rows.push_back({j, s, "hausdorff", rep.hausdorff[j]});
    rows.push_back({j, s, "edge_gap", rep.edge_gap[j]});
    rows.push_back({j, s, "lambda_max_X", rep.lambda_max_x[j]});
    rows.push_back({j, derive_seed(derive_seed(cfg.seed, 1), j), "lambda_max_G", rep.lambda_max_g[j]});
  }
  detail::write_trials(ctx, "verify_trials.csv", rows, out);
  detail::write_report(ctx, "verify.json", comparison_to_json(rep), out);
  return out;
}

}  // namespace specuniv
