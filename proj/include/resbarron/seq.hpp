#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resbarron/common.hpp"

namespace resbarron::seq {

// Finite suffix of a semi-infinite input sequence. Column j holds the input
// at time j - (L-1), so the newest entry z_0 is the last column. Entries
// before the window are zero by convention; all evaluation code in this
// library treats the missing past as exactly zero.
struct Window {
  Eigen::MatrixXd z;  // d rows, L columns, oldest first

  Window() = default;
  explicit Window(Eigen::MatrixXd m) : z(std::move(m)) {}

  int dim() const { return static_cast<int>(z.rows()); }
  int len() const { return static_cast<int>(z.cols()); }

  // t in [-(L-1), 0]
  Eigen::VectorXd at_time(int t) const {
    require(t <= 0 && t > -len(), "Window::at_time: index outside window");
    return z.col(len() - 1 + t);
  }
  Eigen::VectorXd newest() const {
    require(len() >= 1, "Window::newest: empty window");
    return z.col(len() - 1);
  }
};

// Flattened p-norm over all window entries; p = inf gives the sup norm.
inline double window_norm(const Window& w, double p) {
  require(p >= 1.0, "window_norm: p must be >= 1");
  if (std::isinf(p)) return w.z.size() == 0 ? 0.0 : w.z.cwiseAbs().maxCoeff();
  double s = 0.0;
  for (int j = 0; j < w.z.cols(); ++j)
    for (int i = 0; i < w.z.rows(); ++i) s += std::pow(std::abs(w.z(i, j)), p);
  return std::pow(s, 1.0 / p);
}

// p-norm of a plain vector, shared by the measure functionals and bounds.
inline double vec_pnorm(const Eigen::VectorXd& v, double p) {
  require(p >= 1.0, "vec_pnorm: p must be >= 1");
  if (std::isinf(p)) return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
  if (p == 1.0) return v.lpNorm<1>();
  if (p == 2.0) return v.norm();
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), p);
  return std::pow(s, 1.0 / p);
}

// Observed trajectory: column j of Z (and Y) is time j - (n-1), oldest first.
struct TrajectoryDataset {
  Eigen::MatrixXd Z;  // d x n inputs
  Eigen::MatrixXd Y;  // m x n outputs

  int n() const { return static_cast<int>(Z.cols()); }
  int d() const { return static_cast<int>(Z.rows()); }
  int m() const { return static_cast<int>(Y.rows()); }

  void validate() const {
    require(Z.cols() >= 1, "TrajectoryDataset: empty");
    require(Z.cols() == Y.cols(), "TrajectoryDataset: input/output length mismatch");
  }
};

// Window (Z_{-n+1}, ..., Z_{-i}): the suffix of the trajectory ending i steps
// before the newest observation. Length n - i.
inline Window suffix_window(const TrajectoryDataset& ds, int i) {
  require(i >= 0 && i < ds.n(), "suffix_window: index out of range");
  return Window(ds.Z.leftCols(ds.n() - i));
}

// Steps after which a geometric contraction with the given rate has decayed
// below tol; used to size zero-padding so the missing past is negligible.
inline int washout_length(double rate, double tol) {
  require(rate > 0.0 && rate < 1.0, "washout_length: rate must be in (0,1)");
  require(tol > 0.0 && tol < 1.0, "washout_length: tol must be in (0,1)");
  return static_cast<int>(std::ceil(std::log(tol) / std::log(rate)));
}

enum class NoiseKind { gaussian, uniform };

// Stationary input generators with known weak-dependence behaviour.
//
// iid_uniform: Z_t IID uniform on [-M, M]^d.
// bernoulli_shift_ma: Z_t = clip(sum_{k=0}^{K} lambda_dep^k xi_{t-k}, +-M)
// with xi_t IID uniform on [-1,1]^d and K chosen so the discarded tail of the
// moving average is below 1e-12 in sup norm. The coupling coefficient
// theta(tau) = E||Z_0 - Z~_0|| (innovations at times <= -tau resampled)
// satisfies theta(tau) <= theta_constant() * lambda_dep^tau: before clipping
// the coupled difference is sum_{k>=tau} lambda^k (xi_{-k} - xi~_{-k}), whose
// L2 norm is exactly lambda^tau * sqrt(d * (2/3) / (1 - lambda^2)) for the
// full series, and clipping is 1-Lipschitz.
struct ProcessGenerator {
  enum class Kind { iid_uniform, bernoulli_shift_ma };

  Kind kind = Kind::iid_uniform;
  int d = 1;
  double M = 1.0;
  double lambda_dep = 0.5;  // bernoulli-shift only
  std::uint64_t seed = 0;

  void validate() const {
    require(d >= 1, "ProcessGenerator: d must be >= 1");
    require(M > 0.0, "ProcessGenerator: M must be > 0");
    if (kind == Kind::bernoulli_shift_ma)
      require(lambda_dep > 0.0 && lambda_dep < 1.0,
              "ProcessGenerator: lambda_dep must be in (0,1)");
  }

  ProcessGenerator with_seed(std::uint64_t s) const {
    ProcessGenerator g = *this;
    g.seed = s;
    return g;
  }

  // Internal MA truncation order: discarded sup-norm tail <= 1e-12.
  int ma_order() const {
    const double lam = lambda_dep;
    const double kreal = std::log(1e-12 * (1.0 - lam)) / std::log(lam) - 1.0;
    return std::max(0, static_cast<int>(std::ceil(kreal)));
  }

  // C_dep with theta(tau) <= C_dep * lambda_dep^tau (valid for the clipped,
  // truncated process since both steps only shrink the coupled difference).
  double theta_constant() const {
    if (kind == Kind::iid_uniform) return 0.0;
    return std::sqrt(d * (2.0 / 3.0) / (1.0 - lambda_dep * lambda_dep));
  }

  // Draws n consecutive inputs (columns oldest first). stream_tag selects an
  // independent substream of the generator's seed.
  Eigen::MatrixXd inputs(int n, std::uint64_t stream_tag) const {
    validate();
    require(n >= 1, "ProcessGenerator::inputs: n must be >= 1");
    Rng rng(mix_seed(seed, stream_tag));
    if (kind == Kind::iid_uniform) return rng.uniform_mat(d, n, -M, M);
    const int K = ma_order();
    const Eigen::MatrixXd xi = rng.uniform_mat(d, n + K, -1.0, 1.0);
    Eigen::MatrixXd Z(d, n);
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
      double lk = 1.0;
      for (int k = 0; k <= K; ++k) {
        s += lk * xi.col(j + K - k);
        lk *= lambda_dep;
      }
      Z.col(j) = s.cwiseMax(-M).cwiseMin(M);
    }
    return Z;
  }
};

struct ThetaEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long long samples = 0;
};

// Monte Carlo coupling estimate of theta(tau): draw the innovation history,
// resample every innovation at times <= -tau, compare the two outputs at
// time 0. For the iid generator this is exactly zero for tau >= 1.
inline ThetaEstimate estimate_theta(const ProcessGenerator& gen, int tau,
                                    long long samples, std::uint64_t seed) {
  gen.validate();
  require(tau >= 1, "estimate_theta: tau must be >= 1");
  require(samples >= 2, "estimate_theta: need at least 2 samples");
  if (gen.kind == ProcessGenerator::Kind::iid_uniform)
    return {0.0, 0.0, samples};

  const int K = gen.ma_order();
  const double lam = gen.lambda_dep;
  Rng rng(mix_seed(seed, 0x7e7a));
  double sum = 0.0, sumsq = 0.0;
  Eigen::VectorXd u(gen.d), ut(gen.d);
  for (long long s = 0; s < samples; ++s) {
    u.setZero();
    ut.setZero();
    double lk = 1.0;
    for (int k = 0; k <= K; ++k) {
      for (int i = 0; i < gen.d; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        const double xt = k >= tau ? rng.uniform(-1.0, 1.0) : x;
        u[i] += lk * x;
        ut[i] += lk * xt;
      }
      lk *= lam;
    }
    const double diff =
        (u.cwiseMax(-gen.M).cwiseMin(gen.M) - ut.cwiseMax(-gen.M).cwiseMin(gen.M))
            .norm();
    sum += diff;
    sumsq += diff * diff;
  }
  const double mean = sum / static_cast<double>(samples);
  const double var =
      std::max(0.0, sumsq / static_cast<double>(samples) - mean * mean);
  return {mean, std::sqrt(var / static_cast<double>(samples)), samples};
}

// Draws a trajectory and labels it with a target functional plus observation
// noise. The target is any callable Window -> VectorXd of dimension m. The
// noise stream is independent of the input stream. Uniform noise (matched
// std) exists so bound-verification runs can keep Y bounded.
template <class TargetFn>
TrajectoryDataset generate_with(const ProcessGenerator& gen, int n, int m,
                                TargetFn&& target, double noise_std,
                                NoiseKind noise = NoiseKind::gaussian) {
  require(n >= 1, "generate: n must be >= 1");
  require(m >= 1, "generate: m must be >= 1");
  require(noise_std >= 0.0, "generate: noise std must be >= 0");
  TrajectoryDataset ds;
  ds.Z = gen.inputs(n, 0);
  ds.Y.resize(m, n);
  for (int j = 0; j < n; ++j) {
    const Window w(ds.Z.leftCols(j + 1));
    Eigen::VectorXd y = target(w);
    require(y.size() == m, "generate: target output dimension mismatch");
    ds.Y.col(j) = y;
  }
  if (noise_std > 0.0) {
    Rng nrng(mix_seed(gen.seed, 0xa015e));
    const double hw = std::sqrt(3.0) * noise_std;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        ds.Y(i, j) += noise == NoiseKind::gaussian ? noise_std * nrng.normal()
                                                   : nrng.uniform(-hw, hw);
  }
  return ds;
}

namespace detail {
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
}  // namespace detail

inline void write_csv(const TrajectoryDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  require(out.good(), "write_csv: cannot open " + path);
  out << "t";
  for (int i = 1; i <= ds.d(); ++i) out << ",z_" << i;
  for (int i = 1; i <= ds.m(); ++i) out << ",y_" << i;
  out << "\n";
  for (int j = 0; j < ds.n(); ++j) {
    out << (j - (ds.n() - 1));
    for (int i = 0; i < ds.d(); ++i) out << "," << detail::fmt17(ds.Z(i, j));
    for (int i = 0; i < ds.m(); ++i) out << "," << detail::fmt17(ds.Y(i, j));
    out << "\n";
  }
}

inline TrajectoryDataset read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_csv: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "read_csv: empty file");
  int d = 0, m = 0;
  {
    std::stringstream hs(line);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        require(col == "t", "read_csv: first column must be t");
        first = false;
      } else if (col.rfind("z_", 0) == 0) {
        ++d;
      } else if (col.rfind("y_", 0) == 0) {
        ++m;
      } else {
        throw std::invalid_argument("read_csv: unknown column " + col);
      }
    }
  }
  require(d >= 1 && m >= 1, "read_csv: need z_* and y_* columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    require(static_cast<int>(row.size()) == 1 + d + m,
            "read_csv: wrong column count in data row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "read_csv: no data rows");
  TrajectoryDataset ds;
  const int n = static_cast<int>(rows.size());
  ds.Z.resize(d, n);
  ds.Y.resize(m, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) ds.Z(i, j) = rows[j][1 + i];
    for (int i = 0; i < m; ++i) ds.Y(i, j) = rows[j][1 + d + i];
  }
  return ds;
}

}  // namespace resbarron::seq
