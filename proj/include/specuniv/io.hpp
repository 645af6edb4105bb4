#pragma once

// JSON configuration schema, recipe (de)serialization and output headers.
// Matrices are arrays of rows; each entry is a number or an [re, im] pair.

#include "specuniv/core.hpp"
#include "specuniv/freeprob.hpp"
#include "specuniv/laws.hpp"
#include "specuniv/model.hpp"
#include "specuniv/params.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace specuniv {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Schema reader

/// Reads one JSON object, remembering consumed keys so that finish() can
/// reject the rest. Every error names the JSON path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_, "expected an object");
  }

  const std::string& path() const noexcept { return path_; }
  std::string child(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    if (!has(key)) throw SchemaError(child(key), "required key is missing");
    used_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    return convert<T>(raw(key), child(key));
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return get<T>(key);
  }

  template <class T>
  std::optional<T> maybe(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw SchemaError(child(it.key()), "unknown key");
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw SchemaError(path, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw SchemaError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          throw SchemaError(path, "expected a nonnegative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw SchemaError(path, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw SchemaError(path, "expected a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(path, e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class T>
std::vector<T> read_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(ObjectReader::convert<T>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// ---------------------------------------------------------------------------
// Numbers and matrices

inline cplx read_complex(const json& v, const std::string& path) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  throw SchemaError(path, "expected a number or an [re, im] pair");
}

inline json complex_to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline CMatrix read_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw SchemaError(path, "expected a nonempty array of rows");
  const std::size_t rows = v.size();
  std::size_t cols = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!v[i].is_array() || v[i].empty()) throw SchemaError(path + "[" + std::to_string(i) + "]", "expected a row");
    if (i == 0) cols = v[i].size();
    if (v[i].size() != cols) throw SchemaError(path + "[" + std::to_string(i) + "]", "ragged row");
  }
  CMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m(i, j) = read_complex(v[i][j], path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  return m;
}

inline json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(complex_to_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline CMatrix read_hermitian(const json& v, const std::string& path) {
  CMatrix m = read_matrix(v, path);
  if (m.rows() != m.cols()) throw SchemaError(path, "matrix must be square");
  if (hermitian_defect(m) > 1e-12) throw SchemaError(path, "matrix is not Hermitian");
  return m;
}

// ---------------------------------------------------------------------------
// Laws

/// "rademacher" | "gaussian" | "uniform" | {"kind": "two_point", "q": ..} |
/// {"kind": "pareto_tail", "p": ..} | {"kind": "finite", "atoms": [[prob, value], ..]}
inline ScalarLaw read_law(const json& v, const std::string& path) {
  std::string kind;
  if (v.is_string()) {
    kind = v.get<std::string>();
    if (kind == "rademacher") return ScalarLaw::rademacher();
    if (kind == "gaussian") return ScalarLaw::gaussian();
    if (kind == "uniform") return ScalarLaw::uniform();
    throw SchemaError(path, "unknown law '" + kind + "'");
  }
  ObjectReader r(v, path);
  kind = r.get<std::string>("kind");
  try {
    ScalarLaw law = ScalarLaw::rademacher();
    if (kind == "rademacher") {
    } else if (kind == "gaussian") {
      law = ScalarLaw::gaussian();
    } else if (kind == "uniform") {
      law = ScalarLaw::uniform();
    } else if (kind == "two_point") {
      law = ScalarLaw::two_point(r.get<double>("q"));
    } else if (kind == "pareto_tail") {
      law = ScalarLaw::pareto_tail(r.get<double>("p"));
    } else if (kind == "finite") {
      const json& a = r.raw("atoms");
      if (!a.is_array() || a.empty()) throw SchemaError(r.child("atoms"), "expected a nonempty array");
      std::vector<Atom> atoms;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const auto pv = read_array<double>(a[i], r.child("atoms") + "[" + std::to_string(i) + "]");
        if (pv.size() != 2) throw SchemaError(r.child("atoms") + "[" + std::to_string(i) + "]", "expected [prob, value]");
        atoms.push_back({pv[0], pv[1]});
      }
      law = ScalarLaw::finite(std::move(atoms));
    } else {
      throw SchemaError(r.child("kind"), "unknown law '" + kind + "'");
    }
    r.finish();
    return law;
  } catch (const std::invalid_argument& e) {
    throw SchemaError(path, e.what());
  }
}

inline json law_to_json(const ScalarLaw& law) {
  switch (law.kind()) {
    case LawKind::rademacher:
    case LawKind::gaussian:
    case LawKind::uniform: return to_string(law.kind());
    case LawKind::two_point: return {{"kind", "two_point"}, {"q", law.parameter()}};
    case LawKind::pareto_tail: return {{"kind", "pareto_tail"}, {"p", law.parameter()}};
    case LawKind::finite: {
      json atoms = json::array();
      for (const auto& a : law.atoms_list()) atoms.push_back({a.prob, a.value});
      return {{"kind", "finite"}, {"atoms", atoms}};
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Recipes

inline ModelRecipe read_recipe(const json& v, const std::string& path) {
  ObjectReader r(v, path);
  const std::string kind = r.get<std::string>("kind");
  auto law_or = [&](const char* key) {
    return r.has(key) ? read_law(r.raw(key), r.child(key)) : ScalarLaw::rademacher();
  };
  ModelRecipe out;
  if (kind == "matrix_series") {
    MatrixSeriesRecipe m;
    if (r.has("mean")) m.mean = read_hermitian(r.raw("mean"), r.child("mean"));
    const json& f = r.raw("factors");
    if (!f.is_array()) throw SchemaError(r.child("factors"), "expected an array of matrices");
    for (std::size_t i = 0; i < f.size(); ++i)
      m.factors.push_back(read_hermitian(f[i], r.child("factors") + "[" + std::to_string(i) + "]"));
    m.law = law_or("law");
    out = m;
  } else if (kind == "iid_entry") {
    IidEntryRecipe m;
    m.d = r.get<int>("d");
    m.law = law_or("law");
    m.scale = r.maybe<double>("scale");
    m.diagonal = r.get_or<bool>("diagonal", true);
    out = m;
  } else if (kind == "sparse_wigner") {
    SparseWignerRecipe m;
    m.d = r.get<int>("d");
    m.k = r.get<int>("k");
    m.law = law_or("law");
    if (r.has("offsets")) m.offsets = read_array<int>(r.raw("offsets"), r.child("offsets"));
    if (r.has("edges")) {
      const json& e = r.raw("edges");
      if (!e.is_array()) throw SchemaError(r.child("edges"), "expected an array of [i, j]");
      std::vector<std::pair<int, int>> edges;
      for (std::size_t i = 0; i < e.size(); ++i) {
        const auto ij = read_array<int>(e[i], r.child("edges") + "[" + std::to_string(i) + "]");
        if (ij.size() != 2) throw SchemaError(r.child("edges") + "[" + std::to_string(i) + "]", "expected [i, j]");
        edges.emplace_back(ij[0], ij[1]);
      }
      m.edges = std::move(edges);
    }
    out = m;
  } else if (kind == "sample_covariance") {
    SampleCovarianceRecipe m;
    m.d = r.get<int>("d");
    m.n = r.get<int>("n");
    m.law = law_or("law");
    out = m;
  } else if (kind == "finite_support") {
    FiniteSupportRecipe m;
    m.mean = read_hermitian(r.raw("mean"), r.child("mean"));
    const json& s = r.raw("supports");
    if (!s.is_array()) throw SchemaError(r.child("supports"), "expected an array of summand supports");
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::string sp = r.child("supports") + "[" + std::to_string(i) + "]";
      if (!s[i].is_array() || s[i].empty()) throw SchemaError(sp, "expected a nonempty array of atoms");
      std::vector<std::pair<double, CMatrix>> atoms;
      for (std::size_t a = 0; a < s[i].size(); ++a) {
        ObjectReader ar(s[i][a], sp + "[" + std::to_string(a) + "]");
        const double prob = ar.get<double>("prob");
        atoms.emplace_back(prob, read_hermitian(ar.raw("matrix"), ar.child("matrix")));
        ar.finish();
      }
      m.supports.push_back(std::move(atoms));
    }
    out = m;
  } else if (kind == "diagonal_bernoulli") {
    DiagonalBernoulliRecipe m;
    m.d = r.get<int>("d");
    m.n = r.get<int>("n");
    m.q = r.get<double>("q");
    out = m;
  } else {
    throw SchemaError(r.child("kind"), "unknown model kind '" + kind + "'");
  }
  r.finish();
  return out;
}

inline json recipe_to_json(const ModelRecipe& recipe) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        json j;
        if constexpr (std::is_same_v<T, MatrixSeriesRecipe>) {
          j["kind"] = "matrix_series";
          if (m.mean.size()) j["mean"] = matrix_to_json(m.mean);
          j["factors"] = json::array();
          for (const auto& f : m.factors) j["factors"].push_back(matrix_to_json(f));
          j["law"] = law_to_json(m.law);
        } else if constexpr (std::is_same_v<T, IidEntryRecipe>) {
          j = {{"kind", "iid_entry"}, {"d", m.d}, {"law", law_to_json(m.law)}, {"diagonal", m.diagonal}};
          if (m.scale) j["scale"] = *m.scale;
        } else if constexpr (std::is_same_v<T, SparseWignerRecipe>) {
          j = {{"kind", "sparse_wigner"}, {"d", m.d}, {"k", m.k}, {"law", law_to_json(m.law)}};
          if (m.offsets) j["offsets"] = *m.offsets;
          if (m.edges) {
            j["edges"] = json::array();
            for (const auto& [a, b] : *m.edges) j["edges"].push_back({a, b});
          }
        } else if constexpr (std::is_same_v<T, SampleCovarianceRecipe>) {
          j = {{"kind", "sample_covariance"}, {"d", m.d}, {"n", m.n}, {"law", law_to_json(m.law)}};
        } else if constexpr (std::is_same_v<T, FiniteSupportRecipe>) {
          j["kind"] = "finite_support";
          j["mean"] = matrix_to_json(m.mean);
          j["supports"] = json::array();
          for (const auto& s : m.supports) {
            json atoms = json::array();
            for (const auto& [p, mat] : s) atoms.push_back({{"prob", p}, {"matrix", matrix_to_json(mat)}});
            j["supports"].push_back(std::move(atoms));
          }
        } else {
          j = {{"kind", "diagonal_bernoulli"}, {"d", m.d}, {"n", m.n}, {"q", m.q}};
        }
        return j;
      },
      recipe);
}

/// The recipe's dimension field, when it has one.
inline std::optional<int> recipe_dim(const ModelRecipe& recipe) {
  return std::visit(
      [](const auto& r) -> std::optional<int> {
        using T = std::decay_t<decltype(r)>;
        if constexpr (requires { r.d; }) return r.d;
        else return std::nullopt;
      },
      recipe);
}

inline ModelRecipe with_dim(ModelRecipe recipe, int d) {
  std::visit(
      [d](auto& r) {
        if constexpr (requires { r.d; }) r.d = d;
        else throw std::invalid_argument("model kind has no dimension parameter");
      },
      recipe);
  return recipe;
}

// ---------------------------------------------------------------------------
// Parameter sets

inline json number_to_json(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  return x;
}

inline ordered_json param_value_to_json(const ParamValue& p) {
  ordered_json j;
  j["value"] = number_to_json(p.value);
  j["provenance"] = to_string(p.provenance);
  if (p.provenance == Provenance::empirical) j["stderr"] = p.stderr_;
  if (p.lower_estimate) j["lower_estimate"] = true;
  if (!p.note.empty()) j["note"] = p.note;
  return j;
}

inline std::string format_q(double q) {
  std::ostringstream os;
  os << q;
  return os.str();
}

inline ordered_json parameters_to_json(const ParameterSet& p) {
  ordered_json j;
  j["d"] = p.d;
  j["sigma"] = param_value_to_json(p.sigma);
  j["sigma_squared"] = number_to_json(p.sigma.value * p.sigma.value);
  j["sigma_star"] = param_value_to_json(p.sigma_star);
  j["v"] = param_value_to_json(p.v);
  j["R"] = param_value_to_json(p.r);
  j["third_moment_sum"] = param_value_to_json(p.third_moment_sum);
  ordered_json sq = ordered_json::object(), rq = ordered_json::object();
  for (const auto& [q, v] : p.sigma_q) sq[format_q(q)] = param_value_to_json(v);
  for (const auto& [q, v] : p.r_q) rq[format_q(q)] = param_value_to_json(v);
  j["sigma_q"] = sq;
  j["R_q"] = rq;
  return j;
}

// ---------------------------------------------------------------------------
// Run configuration

struct ParamsBlock {
  std::vector<double> q_values;
  std::size_t empirical_samples = 0;
  int sigma_star_restarts = 16;

  static ParamsBlock read(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    ParamsBlock b;
    if (r.has("q_values")) b.q_values = read_array<double>(r.raw("q_values"), r.child("q_values"));
    b.empirical_samples = r.get_or<std::size_t>("empirical_samples", 0);
    b.sigma_star_restarts = r.get_or<int>("sigma_star_restarts", 16);
    r.finish();
    return b;
  }
  json to_json() const {
    return {{"q_values", q_values}, {"empirical_samples", empirical_samples}, {"sigma_star_restarts", sigma_star_restarts}};
  }
  ParamOptions options(std::uint64_t seed, int threads) const {
    ParamOptions o;
    o.q_values = q_values;
    o.empirical_samples = empirical_samples;
    o.seed = seed;
    o.threads = threads;
    o.sigma_star.restarts = sigma_star_restarts;
    return o;
  }
};

struct FreeBlock {
  int points = 801;
  double eta1 = 1e-3;
  double eta2 = 1e-4;
  double threshold = 1e-4;
  std::optional<double> lo, hi;
  /// Explicit free model; replaces the model block.
  std::optional<CMatrix> mean;
  std::vector<CMatrix> kraus;

  static FreeBlock read(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    FreeBlock b;
    b.points = r.get_or<int>("points", 801);
    b.eta1 = r.get_or<double>("eta1", 1e-3);
    b.eta2 = r.get_or<double>("eta2", 1e-4);
    b.threshold = r.get_or<double>("threshold", 1e-4);
    b.lo = r.maybe<double>("lo");
    b.hi = r.maybe<double>("hi");
    if (r.has("mean")) b.mean = read_hermitian(r.raw("mean"), r.child("mean"));
    if (r.has("kraus")) {
      const json& k = r.raw("kraus");
      if (!k.is_array()) throw SchemaError(r.child("kraus"), "expected an array of matrices");
      for (std::size_t i = 0; i < k.size(); ++i)
        b.kraus.push_back(read_hermitian(k[i], r.child("kraus") + "[" + std::to_string(i) + "]"));
    }
    if (!b.kraus.empty() && !b.mean) throw SchemaError(r.child("mean"), "required when kraus is given");
    if (b.points < 3) throw SchemaError(r.child("points"), "need at least 3 points");
    if (!(b.eta1 > b.eta2 && b.eta2 > 0.0)) throw SchemaError(r.child("eta2"), "need eta1 > eta2 > 0");
    r.finish();
    return b;
  }
  json to_json() const {
    json j = {{"points", points}, {"eta1", eta1}, {"eta2", eta2}, {"threshold", threshold}};
    if (lo) j["lo"] = *lo;
    if (hi) j["hi"] = *hi;
    if (mean) {
      j["mean"] = matrix_to_json(*mean);
      j["kraus"] = json::array();
      for (const auto& k : kraus) j["kraus"].push_back(matrix_to_json(k));
    }
    return j;
  }
};

struct SimulateBlock {
  std::size_t trials = 20;
  int histogram_bins = 50;
  std::vector<int> moment_p{1, 2};
  std::vector<cplx> stieltjes_z{cplx(0.0, 1.0)};

  static std::vector<cplx> read_points(const json& v, const std::string& path) {
    if (!v.is_array()) throw SchemaError(path, "expected an array of [re, im] pairs");
    std::vector<cplx> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const cplx z = read_complex(v[i], path + "[" + std::to_string(i) + "]");
      if (!(z.imag() > 0.0)) throw SchemaError(path + "[" + std::to_string(i) + "]", "need Im z > 0");
      out.push_back(z);
    }
    return out;
  }
  static json points_to_json(const std::vector<cplx>& zs) {
    json j = json::array();
    for (cplx z : zs) j.push_back(complex_to_json(z));
    return j;
  }
  static std::vector<int> read_p(const json& v, const std::string& path) {
    auto ps = read_array<int>(v, path);
    for (int p : ps)
      if (p < 1) throw SchemaError(path, "moment orders must be >= 1");
    return ps;
  }

  static SimulateBlock read(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    SimulateBlock b;
    b.trials = r.get_or<std::size_t>("trials", 20);
    b.histogram_bins = r.get_or<int>("histogram_bins", 50);
    if (r.has("moment_p")) b.moment_p = read_p(r.raw("moment_p"), r.child("moment_p"));
    if (r.has("stieltjes_z")) b.stieltjes_z = read_points(r.raw("stieltjes_z"), r.child("stieltjes_z"));
    if (b.trials < 1) throw SchemaError(r.child("trials"), "need at least one trial");
    if (b.histogram_bins < 1) throw SchemaError(r.child("histogram_bins"), "need at least one bin");
    r.finish();
    return b;
  }
  json to_json() const {
    return {{"trials", trials},
            {"histogram_bins", histogram_bins},
            {"moment_p", moment_p},
            {"stieltjes_z", points_to_json(stieltjes_z)}};
  }
};

struct VerifyBlock {
  std::size_t trials = 50;
  std::vector<int> moment_p{1, 2};
  std::vector<cplx> stieltjes_z{cplx(0.0, 1.0)};
  double C = 1.0;
  /// Every fitted constant must stay at or below this; absent disables.
  std::optional<double> max_c_fit = 10.0;

  static VerifyBlock read(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    VerifyBlock b;
    b.trials = r.get_or<std::size_t>("trials", 50);
    if (r.has("moment_p")) b.moment_p = SimulateBlock::read_p(r.raw("moment_p"), r.child("moment_p"));
    if (r.has("stieltjes_z")) b.stieltjes_z = SimulateBlock::read_points(r.raw("stieltjes_z"), r.child("stieltjes_z"));
    b.C = r.get_or<double>("C", 1.0);
    if (r.has("max_c_fit")) {
      const json& m = r.raw("max_c_fit");
      b.max_c_fit = m.is_null() ? std::nullopt : std::optional<double>(ObjectReader::convert<double>(m, r.child("max_c_fit")));
    }
    if (b.trials < 2) throw SchemaError(r.child("trials"), "need at least two trials");
    if (!(b.C > 0.0)) throw SchemaError(r.child("C"), "must be positive");
    r.finish();
    return b;
  }
  json to_json() const {
    return {{"trials", trials},
            {"moment_p", moment_p},
            {"stieltjes_z", SimulateBlock::points_to_json(stieltjes_z)},
            {"C", C},
            {"max_c_fit", max_c_fit ? json(*max_c_fit) : json(nullptr)}};
  }
};

struct BoundsBlock {
  std::vector<double> t{0.0, 1.0, 4.0};
  std::vector<int> p{1, 2};
  std::vector<double> im_z{1.0};
  /// Dimension sweep; empty keeps the model's own dimension.
  std::vector<int> d;
  double C = 1.0;

  static BoundsBlock read(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    BoundsBlock b;
    if (r.has("t")) b.t = read_array<double>(r.raw("t"), r.child("t"));
    if (r.has("p")) b.p = SimulateBlock::read_p(r.raw("p"), r.child("p"));
    if (r.has("im_z")) b.im_z = read_array<double>(r.raw("im_z"), r.child("im_z"));
    if (r.has("d")) b.d = read_array<int>(r.raw("d"), r.child("d"));
    b.C = r.get_or<double>("C", 1.0);
    for (double t : b.t)
      if (!(t >= 0.0)) throw SchemaError(r.child("t"), "t must be nonnegative");
    for (double y : b.im_z)
      if (!(y > 0.0)) throw SchemaError(r.child("im_z"), "Im z must be positive");
    for (int d : b.d)
      if (d < 2) throw SchemaError(r.child("d"), "dimensions must be >= 2");
    if (!(b.C > 0.0)) throw SchemaError(r.child("C"), "must be positive");
    r.finish();
    return b;
  }
  json to_json() const { return {{"t", t}, {"p", p}, {"im_z", im_z}, {"d", d}, {"C", C}}; }
};

struct CumulantBlock {
  std::vector<int> m{2, 3};
  double t = 0.5;
  std::size_t trials = 100000;
  double z_max = 3.0;

  static CumulantBlock read(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    CumulantBlock b;
    if (r.has("m")) b.m = read_array<int>(r.raw("m"), r.child("m"));
    b.t = r.get_or<double>("t", 0.5);
    b.trials = r.get_or<std::size_t>("trials", 100000);
    b.z_max = r.get_or<double>("z_max", 3.0);
    for (int m : b.m)
      if (m < 1) throw SchemaError(r.child("m"), "powers must be >= 1");
    if (!(b.t >= 0.0 && b.t <= 1.0)) throw SchemaError(r.child("t"), "t must lie in [0, 1]");
    if (b.trials < 2) throw SchemaError(r.child("trials"), "need at least two trials");
    r.finish();
    return b;
  }
  json to_json() const { return {{"m", m}, {"t", t}, {"trials", trials}, {"z_max", z_max}}; }
};

struct ExperimentBlock {
  std::string name;
  /// Experiment-specific overrides; validated by the experiment runner.
  json overrides = json::object();

  static ExperimentBlock read(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    ExperimentBlock b;
    b.name = r.get<std::string>("name");
    if (r.has("overrides")) {
      b.overrides = r.raw("overrides");
      if (!b.overrides.is_object()) throw SchemaError(r.child("overrides"), "expected an object");
    }
    r.finish();
    return b;
  }
  json to_json() const { return {{"name", name}, {"overrides", overrides}}; }
};

struct RunConfig {
  std::string version{kVersion};
  std::uint64_t seed = 0;
  std::optional<ModelRecipe> model;
  std::optional<ParamsBlock> params;
  std::optional<FreeBlock> free;
  std::optional<SimulateBlock> simulate;
  std::optional<VerifyBlock> verify;
  std::optional<BoundsBlock> bounds;
  std::optional<ExperimentBlock> experiment;
  std::optional<CumulantBlock> cumulant_check;
};

inline RunConfig parse_config(const json& j) {
  ObjectReader r(j, "$");
  RunConfig c;
  c.version = r.get_or<std::string>("version", std::string(kVersion));
  c.seed = r.get_or<std::uint64_t>("seed", 0);
  if (r.has("model")) c.model = read_recipe(r.raw("model"), r.child("model"));
  if (r.has("params")) c.params = ParamsBlock::read(r.raw("params"), r.child("params"));
  if (r.has("free")) c.free = FreeBlock::read(r.raw("free"), r.child("free"));
  if (r.has("simulate")) c.simulate = SimulateBlock::read(r.raw("simulate"), r.child("simulate"));
  if (r.has("verify")) c.verify = VerifyBlock::read(r.raw("verify"), r.child("verify"));
  if (r.has("bounds")) c.bounds = BoundsBlock::read(r.raw("bounds"), r.child("bounds"));
  if (r.has("experiment")) c.experiment = ExperimentBlock::read(r.raw("experiment"), r.child("experiment"));
  if (r.has("cumulant_check")) c.cumulant_check = CumulantBlock::read(r.raw("cumulant_check"), r.child("cumulant_check"));
  r.finish();
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("$", "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Normalized form: every default made explicit, keys sorted.
inline json config_to_json(const RunConfig& c) {
  json j = {{"version", c.version}, {"seed", c.seed}};
  if (c.model) j["model"] = recipe_to_json(*c.model);
  if (c.params) j["params"] = c.params->to_json();
  if (c.free) j["free"] = c.free->to_json();
  if (c.simulate) j["simulate"] = c.simulate->to_json();
  if (c.verify) j["verify"] = c.verify->to_json();
  if (c.bounds) j["bounds"] = c.bounds->to_json();
  if (c.experiment) j["experiment"] = c.experiment->to_json();
  if (c.cumulant_check) j["cumulant_check"] = c.cumulant_check->to_json();
  return j;
}

// ---------------------------------------------------------------------------
// Output headers

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_to_json(c).dump())));
  return buf;
}

struct OutputHeader {
  std::string version{kVersion};
  std::string hash;
  std::uint64_t seed = 0;

  static OutputHeader of(const RunConfig& c) { return {std::string(kVersion), config_hash(c), c.seed}; }
  ordered_json to_json() const { return {{"version", version}, {"config_hash", hash}, {"seed", seed}}; }
  std::string csv_line() const {
    return "# version=" + version + " config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
  }
};

/// Shortest round-trip decimal form.
inline std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

/// {"header": .., "config": .., <body keys>..}
inline void write_json_report(const std::string& path, const OutputHeader& h, const RunConfig& c,
                              const ordered_json& body) {
  ordered_json j;
  j["header"] = h.to_json();
  j["config"] = ordered_json::parse(config_to_json(c).dump());
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  write_text(path, j.dump(2) + "\n");
}

/// Header line, column line, then rows.
inline void write_csv(const std::string& path, const OutputHeader& h, const std::vector<std::string>& columns,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string s = h.csv_line();
  for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i];
  s += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
    s += "\n";
  }
  write_text(path, s);
}

}  // namespace specuniv
