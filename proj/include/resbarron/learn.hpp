#pragma once

#include <Eigen/Dense>

#include "resbarron/barron.hpp"
#include "resbarron/common.hpp"
#include "resbarron/elm.hpp"
#include "resbarron/esn.hpp"
#include "resbarron/seq.hpp"

namespace resbarron::learn {

struct TrainConfig {
  int reservoir_N = 32;
  int d = 1;
  int feature_count = 0;  // 0 -> reservoir_N
  esn::Dist esn_dist = esn::Dist::gaussian;
  double esn_target_norm = 0.9;
  esn::RescaleMode esn_mode = esn::RescaleMode::operator_norm;
  elm::NuSpec nu;
  double R = 10.0;
  SigmaKind sigma2 = SigmaKind::relu;
  std::uint64_t esn_seed = 1;
  std::uint64_t feature_seed = 2;
  // The earliest suffixes are shorter than the reservoir's mixing time, so
  // their zero-padded states are off by up to washout_tol relative to the
  // stationary ones; dropping those rows is optional.
  bool drop_washout = false;
  double washout_tol = 1e-9;
};

struct TrainedModel {
  elm::EsnElmModel model;
  std::vector<elm::RowFit> row_fits;
  int rows_used = 0;
  int rows_dropped = 0;
  double train_risk = 0.0;  // mean squared loss over the fitted rows
};

// Number of leading steps after which this system's state forgets a
// zero-padded past to within tol (certified, not estimated). Nilpotent
// systems have exact finite memory k0.
inline int system_washout(const sys::StateSpaceSystem& s, double tol) {
  require(tol > 0.0 && tol < 1.0, "system_washout: tol must be in (0,1)");
  const auto& c = s.certificate();
  if (c.norm_Ak0 == 0.0) return c.k0;
  if (c.kind == sys::UspCertificate::Kind::operator_norm)
    return seq::washout_length(c.norm_A, tol);
  int K = 0;
  while (s.series_tail(K) > tol) ++K;
  return K;
}

// Single-trajectory training. Feature row i is the feature map of the suffix
// window ending i steps before the newest observation; all rows come from
// one rolling state pass (bitwise identical to evaluating each suffix from
// scratch, since the per-step update is the same op sequence), so assembly
// is O(n) state updates.
inline TrainedModel train(const TrainConfig& cfg,
                          const seq::TrajectoryDataset& ds) {
  ds.validate();
  require(ds.d() == cfg.d, "train: dataset dimension mismatch");
  require(cfg.R > 0.0, "train: R must be > 0");
  const int count = cfg.feature_count > 0 ? cfg.feature_count : cfg.reservoir_N;

  auto reservoir =
      esn::sample(cfg.reservoir_N, cfg.d, cfg.esn_target_norm, cfg.esn_dist,
                  cfg.esn_seed, cfg.esn_mode);
  auto bank = elm::make_feature_bank(cfg.nu, count, cfg.reservoir_N, cfg.d,
                                     cfg.sigma2, cfg.feature_seed);

  const int n = ds.n();
  Eigen::MatrixXd Phi(n, count);  // row i <-> suffix ending at time -i
  Eigen::VectorXd x = Eigen::VectorXd::Zero(cfg.reservoir_N);
  for (int j = 0; j < n; ++j) {
    Phi.row(n - 1 - j) = bank.feature_map(x, ds.Z.col(j)).transpose();
    x = reservoir.system.A() * x + reservoir.system.C() * ds.Z.col(j) +
        reservoir.system.B();
    sys::apply_activation(reservoir.system.activation(), x);
  }
  Eigen::MatrixXd Yfit(ds.m(), n);
  for (int i = 0; i < n; ++i) Yfit.col(i) = ds.Y.col(n - 1 - i);

  int keep = n;
  if (cfg.drop_washout) {
    const int W = system_washout(reservoir.system, cfg.washout_tol);
    require(n > W, "train: trajectory shorter than the washout length");
    keep = n - W;  // drop suffixes of length <= W (rows i >= n - W)
  }

  auto fitres = elm::fit(Phi.topRows(keep), Yfit.leftCols(keep), cfg.R);
  TrainedModel tm;
  tm.train_risk = (Phi.topRows(keep) * fitres.W.transpose() -
                   Yfit.leftCols(keep).transpose())
                      .squaredNorm() /
                  keep;
  tm.model = elm::EsnElmModel{std::move(reservoir), std::move(bank),
                              std::move(fitres.W)};
  tm.row_fits = std::move(fitres.rows);
  tm.rows_used = keep;
  tm.rows_dropped = n - keep;
  return tm;
}

// Mean squared loss of the model over every suffix of the trajectory,
// assembled with the same rolling pass as training.
inline double empirical_risk(const elm::EsnElmModel& model,
                             const seq::TrajectoryDataset& ds) {
  ds.validate();
  require(ds.d() == model.reservoir.d(), "empirical_risk: dimension mismatch");
  const int n = ds.n();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(model.reservoir.N());
  double loss = 0.0;
  for (int j = 0; j < n; ++j) {
    loss += (model.W * model.bank.feature_map(x, ds.Z.col(j)) - ds.Y.col(j))
                .squaredNorm();
    x = model.reservoir.system.A() * x +
        model.reservoir.system.C() * ds.Z.col(j) + model.reservoir.system.B();
    sys::apply_activation(model.reservoir.system.activation(), x);
  }
  return loss / n;
}

struct GenError {
  double mean = 0.0;
  double std_error = 0.0;
  int window_len = 0;
};

// Squared prediction error on fresh windows drawn from the generator, each
// from its own input substream (tags 1, 2, ...; training uses tag 0).
template <class Target>
GenError generalization_error_with(const elm::EsnElmModel& model,
                                   Target&& target,
                                   const seq::ProcessGenerator& gen,
                                   int num_windows, int window_len) {
  require(num_windows >= 2, "generalization_error: need >= 2 windows");
  require(window_len >= 1, "generalization_error: window_len must be >= 1");
  double sum = 0.0, sumsq = 0.0;
  for (int s = 0; s < num_windows; ++s) {
    const seq::Window w(gen.inputs(window_len, static_cast<std::uint64_t>(s) + 1));
    const Eigen::VectorXd y = target(w);
    const double e = (elm::predict(model, w) - y).squaredNorm();
    sum += e;
    sumsq += e * e;
  }
  const double mean = sum / num_windows;
  const double var = std::max(0.0, sumsq / num_windows - mean * mean);
  return {mean, std::sqrt(var / num_windows), window_len};
}

// Window length is chosen so both the model reservoir and the target system
// have washed out their zero padding to within tol.
inline GenError generalization_error(const elm::EsnElmModel& model,
                                     const barron::BarronFunctional& target,
                                     const seq::ProcessGenerator& gen,
                                     int num_windows, double tol = 1e-9) {
  require(model.output_dim() == 1,
          "generalization_error: scalar target needs a scalar model");
  const int L = std::max(system_washout(model.reservoir.system, tol),
                         system_washout(target.system, tol)) +
                1;
  return generalization_error_with(
      model,
      [&](const seq::Window& w) {
        return Eigen::VectorXd::Constant(1, target.eval(w));
      },
      gen, num_windows, L);
}

}  // namespace resbarron::learn
