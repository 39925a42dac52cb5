#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wrapup/predictors.hpp"
#include "wrapup/util.hpp"

namespace wrapup {

struct LinearModel {
  Eigen::VectorXd coefficients;  // intercept first
  double noise_variance = 0;     // sigma^2, MLE (RSS / n), floored at 1e-12
  std::vector<std::string> feature_names;
  Eigen::VectorXd feature_mean;  // standardization parameters from training data
  Eigen::VectorXd feature_std;
};

inline constexpr double kMinNoiseVariance = 1e-12;

// Least squares via column-pivoted Householder QR. X carries no intercept
// column; one is added internally. sigma^2 is the maximum-likelihood RSS/n.
inline LinearModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           std::vector<std::string> feature_names = {}) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw validation_error("fit_ols: X and y row counts differ");
  if (n < p + 2) throw computation_error("fit_ols: need more rows than coefficients");
  if (feature_names.empty())
    for (Eigen::Index j = 0; j < p; ++j) feature_names.push_back("x" + std::to_string(j));

  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) {
    // Pivots beyond the numerical rank identify the dependent columns.
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < p + 1; ++i) {
      Eigen::Index col = perm[i];
      if (!cols.empty()) cols += ", ";
      cols += col == 0 ? std::string("intercept") : feature_names[col - 1];
    }
    throw computation_error("fit_ols: rank-deficient design, collinear column(s): " + cols);
  }

  LinearModel model;
  model.coefficients = qr.solve(y);
  model.feature_names = std::move(feature_names);
  double rss = (y - A * model.coefficients).squaredNorm();
  model.noise_variance = std::max(rss / static_cast<double>(n), kMinNoiseVariance);
  return model;
}

inline Eigen::VectorXd predict(const LinearModel& model, const Eigen::MatrixXd& X) {
  return (X * model.coefficients.tail(X.cols())).array() + model.coefficients[0];
}

// Per-point Gaussian log-likelihood, nats.
inline Eigen::VectorXd loglik(const LinearModel& model, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y) {
  Eigen::VectorXd r = y - predict(model, X);
  double s2 = model.noise_variance;
  double norm = -0.5 * std::log(2.0 * M_PI * s2);
  return (norm - (r.array().square() / (2.0 * s2))).matrix();
}

// Column-wise standardization with training statistics. Constant columns get
// std 1 so they surface as rank deficiency rather than division by zero.
struct Standardizer {
  Eigen::VectorXd mean, std;

  static Standardizer fit(const Eigen::MatrixXd& X) {
    Standardizer s;
    s.mean = X.colwise().mean();
    s.std.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      double ss = (X.col(j).array() - s.mean[j]).square().sum();
      double sd = X.rows() > 1 ? std::sqrt(ss / static_cast<double>(X.rows() - 1)) : 0.0;
      s.std[j] = sd > 0 ? sd : 1.0;
    }
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
  }
};

struct DeltaLogLikResult {
  double k = 0;
  double mean_delta = 0;           // nats per held-out data point
  std::vector<double> fold_means;  // one per fold
  double std_error = 0;            // std(fold_means) / sqrt(folds)
  size_t n_points = 0;
};

struct CvOptions {
  int folds = 10;
  uint64_t seed = 0;
};

namespace detail {

inline int fold_of(uint64_t sentence_key, uint64_t seed, int folds) {
  return static_cast<int>(mix64(sentence_key ^ mix64(seed ^ 0x9d2c5680u)) %
                          static_cast<uint64_t>(folds));
}

struct CvData {
  Eigen::MatrixXd X;    // baseline predictors
  Eigen::VectorXd y;
  Eigen::VectorXd ctx_placeholder;  // unused
  std::vector<int> fold;
  std::vector<std::string> names;
};

inline CvData cv_data(const std::vector<FeatureRow>& rows, const CvOptions& opt) {
  if (rows.empty()) throw computation_error("cross-validation: no rows");
  const size_t p = rows[0].baseline.size();
  CvData d;
  d.X.resize(rows.size(), p);
  d.y.resize(rows.size());
  d.fold.resize(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].baseline.size() != p)
      throw validation_error("cross-validation: inconsistent baseline widths");
    for (size_t j = 0; j < p; ++j) d.X(i, j) = rows[i].baseline[j];
    d.y[i] = rows[i].response;
    d.fold[i] = fold_of(rows[i].sentence_key, opt.seed, opt.folds);
  }
  if (rows.size() < static_cast<size_t>(opt.folds) * (p + 2))
    throw computation_error("cross-validation: need at least folds*(p+2) = " +
                            std::to_string(opt.folds * (p + 2)) + " rows, have " +
                            std::to_string(rows.size()));
  return d;
}

struct FoldBaseline {
  std::vector<Eigen::Index> train_idx, test_idx;
  Standardizer scaler;        // over baseline columns, training rows
  Eigen::MatrixXd train_X, test_X;  // standardized baseline
  Eigen::VectorXd train_y, test_y;
  Eigen::VectorXd base_test_ll;
};

inline std::vector<FoldBaseline> fit_baselines(const CvData& d, const CvOptions& opt) {
  std::vector<FoldBaseline> out(opt.folds);
  for (int f = 0; f < opt.folds; ++f) {
    FoldBaseline& fb = out[f];
    for (Eigen::Index i = 0; i < d.X.rows(); ++i)
      (d.fold[i] == f ? fb.test_idx : fb.train_idx).push_back(i);
    if (fb.test_idx.empty() ||
        fb.train_idx.size() < static_cast<size_t>(d.X.cols()) + 3)
      throw computation_error("cross-validation: fold " + std::to_string(f) +
                              " is too small; too few distinct sentences");
    auto gather = [&](const std::vector<Eigen::Index>& idx, Eigen::MatrixXd& X,
                      Eigen::VectorXd& y) {
      X.resize(idx.size(), d.X.cols());
      y.resize(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) {
        X.row(i) = d.X.row(idx[i]);
        y[i] = d.y[idx[i]];
      }
    };
    Eigen::MatrixXd train_raw, test_raw;
    gather(fb.train_idx, train_raw, fb.train_y);
    gather(fb.test_idx, test_raw, fb.test_y);
    fb.scaler = Standardizer::fit(train_raw);
    fb.train_X = fb.scaler.apply(train_raw);
    fb.test_X = fb.scaler.apply(test_raw);
    LinearModel base;
    try {
      base = fit_ols(fb.train_X, fb.train_y, d.names);
    } catch (const computation_error& e) {
      throw computation_error("fold " + std::to_string(f) + ": " + e.what());
    }
    fb.base_test_ll = loglik(base, fb.test_X, fb.test_y);
  }
  return out;
}

inline DeltaLogLikResult delta_for_k(const std::vector<FeatureRow>& rows,
                                     const std::vector<FoldBaseline>& folds, double k,
                                     const std::vector<std::string>& names) {
  Eigen::VectorXd inf(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) inf[i] = inf_k(rows[i].context, k);

  DeltaLogLikResult res;
  res.k = k;
  for (size_t f = 0; f < folds.size(); ++f) {
    const FoldBaseline& fb = folds[f];
    Eigen::VectorXd train_inf(fb.train_idx.size()), test_inf(fb.test_idx.size());
    for (size_t i = 0; i < fb.train_idx.size(); ++i) train_inf[i] = inf[fb.train_idx[i]];
    for (size_t i = 0; i < fb.test_idx.size(); ++i) test_inf[i] = inf[fb.test_idx[i]];

    double mu = train_inf.mean();
    double ss = (train_inf.array() - mu).square().sum();
    double sd = train_inf.size() > 1
                    ? std::sqrt(ss / static_cast<double>(train_inf.size() - 1))
                    : 0.0;

    Eigen::VectorXd aug_test_ll;
    if (sd == 0) {
      // The INF column is constant on this training fold: augmented model
      // degenerates to the baseline, so the difference is exactly zero.
      aug_test_ll = fb.base_test_ll;
    } else {
      Eigen::MatrixXd train_X(fb.train_X.rows(), fb.train_X.cols() + 1);
      train_X.leftCols(fb.train_X.cols()) = fb.train_X;
      train_X.col(fb.train_X.cols()) = (train_inf.array() - mu) / sd;
      Eigen::MatrixXd test_X(fb.test_X.rows(), fb.test_X.cols() + 1);
      test_X.leftCols(fb.test_X.cols()) = fb.test_X;
      test_X.col(fb.test_X.cols()) = (test_inf.array() - mu) / sd;
      std::vector<std::string> aug_names = names;
      aug_names.push_back("inf_k");
      LinearModel aug;
      try {
        aug = fit_ols(train_X, fb.train_y, aug_names);
      } catch (const computation_error& e) {
        throw computation_error("fold " + std::to_string(f) + ", k=" +
                                std::to_string(k) + ": " + e.what());
      }
      aug_test_ll = loglik(aug, test_X, fb.test_y);
    }
    res.fold_means.push_back((aug_test_ll - fb.base_test_ll).mean());
    res.n_points += fb.test_idx.size();
  }
  double m = std::accumulate(res.fold_means.begin(), res.fold_means.end(), 0.0) /
             static_cast<double>(res.fold_means.size());
  res.mean_delta = m;
  double ss = 0;
  for (double v : res.fold_means) ss += (v - m) * (v - m);
  size_t nf = res.fold_means.size();
  res.std_error = nf > 1 ? std::sqrt(ss / static_cast<double>(nf - 1)) /
                               std::sqrt(static_cast<double>(nf))
                         : 0.0;
  return res;
}

}  // namespace detail

// 10-fold (by default) cross-validated mean held-out log-likelihood
// difference between the baseline and the INF^(k)-augmented model. Folds are
// assigned by sentence hash, so no sentence spans folds and row order is
// irrelevant.
inline DeltaLogLikResult delta_loglik_cv(const std::vector<FeatureRow>& rows, double k,
                                         const CvOptions& opt = {},
                                         std::vector<std::string> names = {}) {
  detail::CvData d = detail::cv_data(rows, opt);
  d.names = std::move(names);
  auto folds = detail::fit_baselines(d, opt);
  return detail::delta_for_k(rows, folds, k, d.names);
}

// Paired sweep over the k grid: one fold assignment and one baseline fit per
// fold shared by every k, so baseline held-out log-likelihoods are identical
// across the grid.
inline std::vector<DeltaLogLikResult> sweep_k(const std::vector<FeatureRow>& rows,
                                              const KGrid& grid,
                                              const CvOptions& opt = {},
                                              std::vector<std::string> names = {}) {
  grid.validate();
  detail::CvData d = detail::cv_data(rows, opt);
  d.names = std::move(names);
  auto folds = detail::fit_baselines(d, opt);
  std::vector<std::future<DeltaLogLikResult>> jobs;
  for (double k : grid.values)
    jobs.push_back(std::async(std::launch::async, [&, k] {
      return detail::delta_for_k(rows, folds, k, d.names);
    }));
  std::vector<DeltaLogLikResult> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

struct ResidualSummary {
  double mean = 0;
  double skewness = 0;  // standardized third moment
};

inline ResidualSummary summarize_residuals(const std::vector<double>& r) {
  ResidualSummary s;
  if (r.empty()) return s;
  double n = static_cast<double>(r.size());
  for (double v : r) s.mean += v;
  s.mean /= n;
  double m2 = 0, m3 = 0;
  for (double v : r) {
    double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  s.skewness = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return s;
}

struct ResidualDiagnostic {
  std::vector<double> medial_residuals;  // training residuals of the medial fit
  std::vector<double> final_residuals;   // medial-fit residuals on clause-final rows
  ResidualSummary medial;
  ResidualSummary final;
};

// Fit the baseline on sentence-medial rows, then evaluate residuals on both
// classes with that single fit.
inline ResidualDiagnostic residual_diagnostic(const std::vector<FeatureRow>& medial_rows,
                                              const std::vector<FeatureRow>& final_rows,
                                              std::vector<std::string> names = {}) {
  if (medial_rows.empty() || final_rows.empty())
    throw computation_error("residual diagnostic requires rows of both position classes");
  const size_t p = medial_rows[0].baseline.size();
  auto to_matrix = [&](const std::vector<FeatureRow>& rows, Eigen::MatrixXd& X,
                       Eigen::VectorXd& y) {
    X.resize(rows.size(), p);
    y.resize(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].baseline.size() != p)
        throw validation_error("residual diagnostic: inconsistent baseline widths");
      for (size_t j = 0; j < p; ++j) X(i, j) = rows[i].baseline[j];
      y[i] = rows[i].response;
    }
  };
  Eigen::MatrixXd Xm, Xf;
  Eigen::VectorXd ym, yf;
  to_matrix(medial_rows, Xm, ym);
  to_matrix(final_rows, Xf, yf);
  Standardizer scaler = Standardizer::fit(Xm);
  LinearModel model = fit_ols(scaler.apply(Xm), ym, std::move(names));
  Eigen::VectorXd rm = ym - predict(model, scaler.apply(Xm));
  Eigen::VectorXd rf = yf - predict(model, scaler.apply(Xf));
  ResidualDiagnostic diag;
  diag.medial_residuals.assign(rm.data(), rm.data() + rm.size());
  diag.final_residuals.assign(rf.data(), rf.data() + rf.size());
  diag.medial = summarize_residuals(diag.medial_residuals);
  diag.final = summarize_residuals(diag.final_residuals);
  return diag;
}

}  // namespace wrapup
