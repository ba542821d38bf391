#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthoate/dataio.hpp"
#include "orthoate/estimators.hpp"
#include "orthoate/score.hpp"

namespace orthoate::support {

/// Exact E[A(t, pi)] under t ~ Bernoulli(pi).
inline double bernoulli_mean_correction(double pi, const OrthoCoefficients& c, const Moments& m) {
  return pi * correction_weight(1, pi, c, m) + (1.0 - pi) * correction_weight(0, pi, c, m);
}

inline std::string data_path(const std::string& name) { return std::string(ORTHOATE_DATA_DIR) + "/" + name; }

struct ToyFixture {
  Dataset ds;
  nlohmann::json expected;
};

inline ToyFixture load_toy_fixture() {
  ToyFixture f;
  f.ds = load_csv_dataset(data_path("toy6.csv"), CsvSchema{.n_treatments = 2});
  std::ifstream in(data_path("toy6_expected.json"));
  f.expected = nlohmann::json::parse(in);
  return f;
}

/// Estimation-fold predictions of the toy fixture: every row is in the fold,
/// g_i is the overall mean of y and pi_i the share of arm i.
inline FoldPredictions toy_predictions(const Dataset& ds) {
  FoldPredictions fp;
  fp.n_treatments = ds.n_treatments;
  fp.rows.resize(ds.size());
  for (std::size_t m = 0; m < ds.size(); ++m) fp.rows[m] = m;
  fp.y = ds.y;
  fp.d = ds.d;
  const double g = mean(ds.y);
  fp.g_hat = FeatureMatrix(ds.size(), 2, g);
  fp.pi_hat = ProbabilityMatrix(ds.size(), 2);
  const double share1 = static_cast<double>(std::count(ds.d.begin(), ds.d.end(), 1)) / static_cast<double>(ds.size());
  for (std::size_t m = 0; m < ds.size(); ++m) {
    fp.pi_hat(m, 0) = 1.0 - share1;
    fp.pi_hat(m, 1) = share1;
  }
  return fp;
}

/// Residual draw replaying the fixture's pinned pool indices.
inline ResidualDraw toy_pinned_draw(const nlohmann::json& expected) {
  return [draws = expected.at("draws")](int treatment, std::size_t row, int, std::span<const double> pool) {
    const std::size_t idx = draws.at(std::to_string(treatment)).at(std::to_string(row)).get<std::size_t>();
    return pool[idx];
  };
}

}  // namespace orthoate::support
