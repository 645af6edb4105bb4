#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace specuniv;
using namespace testutil;

namespace {

std::string schema_path(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<accepted>";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, RoundTripIsNormalized) {
  const char* texts[] = {
      R"({"seed": 3, "model": {"kind": "sample_covariance", "d": 10, "n": 40}, "params": {"q_values": [4]}})",
      R"({"model": {"kind": "matrix_series", "mean": [[1, [0, 1]], [[0, -1], 2]], "factors": [[[1, 0], [0, -1]]],
          "law": "gaussian"}, "free": {"points": 101}})",
      R"({"model": {"kind": "sparse_wigner", "d": 12, "k": 4, "law": {"kind": "uniform"}},
          "bounds": {"t": [0, 2], "d": [12, 24]}, "verify": {"trials": 5, "max_c_fit": null}})",
      R"({"model": {"kind": "iid_entry", "d": 8, "scale": 0.5, "diagonal": false},
          "simulate": {"stieltjes_z": [[0.5, 1]]}, "cumulant_check": {"m": [3], "trials": 10}})",
      R"({"model": {"kind": "diagonal_bernoulli", "d": 3, "n": 5, "q": 0.2},
          "experiment": {"name": "wigner-semicircle", "overrides": {"d": 50}}})",
      R"({"model": {"kind": "finite_support", "mean": [[0]], "supports": [[{"prob": 0.5, "matrix": [[1]]},
          {"prob": 0.5, "matrix": [[-1]]}]]}})",
  };
  for (const char* t : texts) {
    const RunConfig c = parse_config_text(t);
    const json norm = config_to_json(c);
    const RunConfig again = parse_config(norm);
    EXPECT_EQ(config_to_json(again), norm) << t;
    EXPECT_EQ(config_hash(again), config_hash(c));
    EXPECT_EQ(norm.at("version"), std::string(kVersion));
  }
}

TEST(Config, UnknownKeysNameTheirPath) {
  EXPECT_EQ(schema_path(R"({"model": {"kind": "iid_entry", "d": 4, "bogus": 1}})"), "$.model.bogus");
  EXPECT_EQ(schema_path(R"({"extra": true})"), "$.extra");
  EXPECT_EQ(schema_path(R"({"verify": {"trials": 5, "typo": 0}})"), "$.verify.typo");
  EXPECT_EQ(schema_path(R"({"model": {"kind": "nope"}})"), "$.model.kind");
  EXPECT_EQ(schema_path(R"({"model": {"kind": "iid_entry"}})"), "$.model.d");
  EXPECT_EQ(schema_path(R"({"model": {"kind": "iid_entry", "d": "four"}})"), "$.model.d");
  EXPECT_EQ(schema_path(R"({"bounds": {"t": [-1]}})"), "$.bounds.t");
  EXPECT_EQ(schema_path(R"({"simulate": {"stieltjes_z": [[0, -1]]}})"), "$.simulate.stieltjes_z[0]");
  EXPECT_EQ(schema_path(R"({"model": {"kind": "matrix_series", "factors": [[[0, 1], [2, 0]]]}})"),
            "$.model.factors[0]");
  EXPECT_EQ(schema_path("{not json"), "$");
  EXPECT_EQ(schema_path(R"({"seed": -4})"), "$.seed");
}

TEST(Config, DefaultsAreExplicitInNormalForm) {
  const json n = config_to_json(parse_config_text(R"({"verify": {}})"));
  EXPECT_EQ(n.at("verify").at("trials"), 50);
  EXPECT_EQ(n.at("verify").at("C"), 1.0);
  EXPECT_EQ(n.at("seed"), 0);
}

TEST(Config, HashIsStableAndSensitive) {
  const auto a = parse_config_text(R"({"seed": 1, "model": {"kind": "iid_entry", "d": 4}})");
  const auto b = parse_config_text(R"({"model": {"d": 4, "kind": "iid_entry"}, "seed": 1})");
  const auto c = parse_config_text(R"({"seed": 2, "model": {"kind": "iid_entry", "d": 4}})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
  // FNV-1a reference values
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, LawsRoundTrip) {
  for (const char* law : {R"("rademacher")", R"("gaussian")", R"({"kind": "uniform"})", R"({"kind": "two_point", "q": 0.2})",
                          R"({"kind": "pareto_tail", "p": 3})", R"({"kind": "finite", "atoms": [[0.25, 3], [0.75, -1]]})"}) {
    const std::string text = std::string(R"({"model": {"kind": "iid_entry", "d": 3, "law": )") + law + "}}";
    const RunConfig c = parse_config_text(text);
    EXPECT_EQ(config_to_json(parse_config(config_to_json(c))), config_to_json(c)) << law;
  }
}

TEST(Config, MatricesParseAsRows) {
  const CMatrix m = read_matrix(json::parse(R"([[1, 2], [[3, 4], 5]])"), "$.m");
  EXPECT_EQ(m(0, 1), cplx(2, 0));
  EXPECT_EQ(m(1, 0), cplx(3, 4));
  EXPECT_EQ(read_matrix(matrix_to_json(m), "$"), m);
  EXPECT_THROW(read_matrix(json::parse(R"([[1, 2], [3]])"), "$.m"), SchemaError);
}

TEST(Output, HeadersCarryVersionHashSeed) {
  const auto c = parse_config_text(R"({"seed": 77, "model": {"kind": "iid_entry", "d": 4}})");
  const auto h = OutputHeader::of(c);
  EXPECT_EQ(h.csv_line(), "# version=" + std::string(kVersion) + " config_hash=" + config_hash(c) + " seed=77\n");
  const auto dir = std::filesystem::temp_directory_path() / "specuniv_io_test";
  std::filesystem::create_directories(dir);
  const std::string csv = (dir / "t.csv").string(), js = (dir / "t.json").string();
  write_csv(csv, h, {"a", "b"}, {{"1", "2"}});
  EXPECT_EQ(read_file(csv), h.csv_line() + "a,b\n1,2\n");
  ordered_json body;
  body["x"] = 1.5;
  write_json_report(js, h, c, body);
  const json j = json::parse(read_file(js));
  EXPECT_EQ(j.at("header").at("config_hash"), config_hash(c));
  EXPECT_EQ(j.at("header").at("seed"), 77);
  EXPECT_EQ(j.at("x"), 1.5);
  EXPECT_EQ(config_hash(parse_config(j.at("config"))), config_hash(c));
  std::filesystem::remove_all(dir);
}

TEST(Output, NumberFormatting) {
  EXPECT_EQ(fmt(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(fmt(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(fmt(kInf), "inf");
  EXPECT_EQ(fmt(-kInf), "-inf");
}

TEST(Output, ParametersJsonHasProvenance) {
  const auto ps = compute_parameters(build_model(SampleCovarianceRecipe{5, 20, ScalarLaw::rademacher()}));
  const auto j = parameters_to_json(ps);
  EXPECT_EQ(j.at("d"), 5);
  EXPECT_EQ(j.at("sigma").at("provenance"), "exact");
  EXPECT_EQ(j.at("R").at("provenance"), "declared");
  EXPECT_NEAR(j.at("sigma_squared").get<double>(), 4.0 / 20.0, 1e-12);
  EXPECT_NEAR(j.at("sigma").at("value").get<double>(), std::sqrt(4.0 / 20.0), 1e-12);
}
