// Shared fixtures and brute-force oracles for the test binaries.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xpm/dataset.hpp"
#include "xpm/rng.hpp"

namespace testing {

struct Columns {
  std::vector<double> y;
  std::vector<int> arm;
  std::vector<std::vector<double>> x;  // one vector per feature
  std::vector<double> w;
  std::vector<std::int64_t> cluster;
  std::vector<std::int64_t> period;
};

inline xpm::Dataset make_dataset(const Columns& c, std::vector<std::string> arms = {}) {
  xpm::Schema s;
  s.outcome_column = "y";
  s.treatment_column = "arm";
  for (std::size_t j = 0; j < c.x.size(); ++j) s.feature_columns.push_back("x" + std::to_string(j + 1));
  if (!c.w.empty()) s.weight_column = "w";
  if (!c.cluster.empty()) s.cluster_column = "g";
  if (!c.period.empty()) s.time_column = "t";
  if (arms.empty()) {
    int top = 0;
    for (int a : c.arm) top = std::max(top, a);
    for (int a = 0; a <= top; ++a) arms.push_back(a == 0 ? "control" : "t" + std::to_string(a));
  }
  const std::size_t n = c.y.size();
  xpm::DatasetColumns d;
  d.outcome = c.y;
  d.arm = c.arm;
  d.weight = c.w.empty() ? std::vector<double>(n, 1.0) : c.w;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& col : c.x) d.features.push_back(col[i]);
  d.cluster = c.cluster;
  d.period = c.period;
  return xpm::Dataset(s, arms, d);
}

/// Random cross-sectional data. `levels` > 0 rounds x and y to that many
/// distinct values per unit so rows repeat; 0 keeps everything distinct.
inline Columns random_columns(std::uint64_t seed, std::size_t n, int arms, int features, int levels, bool weighted,
                              int clusters = 0) {
  xpm::CounterRng rng(seed, 0);
  Columns c;
  c.x.resize(static_cast<std::size_t>(features));
  for (std::size_t i = 0; i < n; ++i) {
    const int a = i < static_cast<std::size_t>(arms) ? static_cast<int>(i)
                                                     : static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(arms)));
    c.arm.push_back(a);
    double signal = 0.3 * a;
    for (int j = 0; j < features; ++j) {
      double v = rng.normal();
      if (levels > 0) v = std::round(v * levels) / levels;
      c.x[static_cast<std::size_t>(j)].push_back(v);
      signal += 0.5 * v;
    }
    double y = signal + rng.normal();
    if (levels > 0) y = std::round(y * levels) / levels;
    c.y.push_back(y);
    if (weighted) c.w.push_back(1.0 + static_cast<double>(rng.uniform_index(5)));
    if (clusters > 0) c.cluster.push_back(static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(clusters))));
  }
  return c;
}

/// Dense raw-row design: intercept, arm dummies, features.
inline Eigen::MatrixXd dense_design(const Columns& c, int arms) {
  const auto n = static_cast<Eigen::Index>(c.y.size());
  const auto p = static_cast<Eigen::Index>(1 + (arms - 1) + static_cast<int>(c.x.size()));
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    const int a = c.arm[static_cast<std::size_t>(i)];
    if (a > 0) X(i, a) = 1.0;
    for (std::size_t j = 0; j < c.x.size(); ++j) X(i, arms + static_cast<Eigen::Index>(j)) = c.x[j][static_cast<std::size_t>(i)];
  }
  return X;
}

struct DenseFit {
  Eigen::VectorXd beta, resid;
  Eigen::MatrixXd bread;
  Eigen::MatrixXd hc0, hc1, iid;
};

/// Textbook WLS on raw rows via QR of sqrt(W)X; sandwiches built row by row.
inline DenseFit dense_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  DenseFit f;
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  f.beta = Xw.colPivHouseholderQr().solve(sw.asDiagonal() * y);
  f.resid = y - X * f.beta;
  f.bread = (X.transpose() * w.asDiagonal() * X).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double s = w(i) * f.resid(i);
    meat += s * s * X.row(i).transpose() * X.row(i);
  }
  const double n = static_cast<double>(X.rows());
  const double p = static_cast<double>(X.cols());
  f.hc0 = f.bread * meat * f.bread;
  f.hc1 = f.hc0 * n / (n - p);
  const double s2 = (w.array() * f.resid.array().square()).sum() / (n - p);
  f.iid = s2 * f.bread;
  return f;
}

inline Eigen::MatrixXd dense_cluster(const Eigen::MatrixXd& X, const Eigen::VectorXd& w, const DenseFit& f,
                                     const std::vector<std::int64_t>& g, bool cr1) {
  std::map<std::int64_t, Eigen::VectorXd> score;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    auto& s = score.try_emplace(g[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(X.cols())).first->second;
    s += w(i) * f.resid(i) * X.row(i).transpose();
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (const auto& [k, s] : score) meat += s * s.transpose();
  Eigen::MatrixXd v = f.bread * meat * f.bread;
  if (cr1) {
    const double G = static_cast<double>(score.size());
    const double n = static_cast<double>(X.rows());
    const double p = static_cast<double>(X.cols());
    v *= G / (G - 1.0) * (n - 1.0) / (n - p);
  }
  return v;
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd square(const std::vector<double>& v) {
  const auto k = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  Eigen::MatrixXd m(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = v[static_cast<std::size_t>(i * k + j)];
  return m;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("xpm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// The 12-row fixture whose reference fits were computed with statsmodels.
inline Columns reference_columns() {
  Columns c;
  c.arm = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 1};
  c.x = {{0.5, -1.0, 2.0, 1.5, 0.0, -0.5, 3.0, 1.0, -2.0, 0.25, 0.75, -1.25}};
  c.w = {1, 2, 3, 1, 2, 3, 4, 1, 2, 5, 1, 2};
  c.cluster = {0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5};
  c.y = {1.2, 2.5, 0.3, 2.2, 1.9, -0.4, 3.1, 3.3, -1.5, 0.9, 2.8, 1.1};
  return c;
}

}  // namespace testing
