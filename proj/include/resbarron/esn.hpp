#pragma once

#include <Eigen/Dense>

#include "json.hpp"
#include "resbarron/common.hpp"
#include "resbarron/system.hpp"

namespace resbarron::esn {

enum class Dist { gaussian, uniform };
enum class RescaleMode { operator_norm, spectral_radius };

inline std::string dist_name(Dist d) {
  return d == Dist::gaussian ? "gaussian" : "uniform";
}
inline Dist dist_from_name(const std::string& s) {
  if (s == "gaussian") return Dist::gaussian;
  if (s == "uniform") return Dist::uniform;
  throw std::invalid_argument("unknown distribution: " + s);
}

struct EsnSpec {
  Dist dist = Dist::gaussian;
  double target_norm = 0.9;
  RescaleMode mode = RescaleMode::operator_norm;
};

// Randomly generated reservoir. The recurrence matrix is rescaled so that
// ||A||_op (default) or rho(A) (behind the flag) equals target_norm exactly;
// C has unit operator norm and B unit Euclidean norm, so reservoir scale is
// fully described by target_norm.
struct EsnParams {
  sys::StateSpaceSystem system;
  std::uint64_t seed = 0;
  EsnSpec spec;

  int N() const { return system.state_dim(); }
  int d() const { return system.input_dim(); }
  double norm_A() const { return system.certificate().norm_A; }
  int T() const { return (N() + d() - 1) / d(); }  // ceil(N/d)
};

inline EsnParams sample(int N, int d, double target_norm, Dist dist,
                        std::uint64_t seed,
                        RescaleMode mode = RescaleMode::operator_norm,
                        sys::Activation act = sys::Activation::identity) {
  require(N >= 1 && d >= 1, "esn::sample: N and d must be >= 1");
  require(target_norm > 0.0 && target_norm < 1.0,
          "esn::sample: target_norm must be in (0,1)");
  Rng rng(mix_seed(seed, 0xe51));
  Eigen::MatrixXd A, C;
  Eigen::VectorXd B;
  if (dist == Dist::gaussian) {
    A = rng.normal_mat(N, N);
    B = rng.normal_vec(N);
    C = rng.normal_mat(N, d);
  } else {
    A = rng.uniform_mat(N, N, -1.0, 1.0);
    B = rng.uniform_vec(N, -1.0, 1.0);
    C = rng.uniform_mat(N, d, -1.0, 1.0);
  }
  const double scale = mode == RescaleMode::operator_norm
                           ? sys::operator_norm(A)
                           : sys::spectral_radius(A);
  require(scale > 0.0, "esn::sample: degenerate draw, cannot rescale A");
  A *= target_norm / scale;
  const double cn = sys::operator_norm(C);
  require(cn > 0.0, "esn::sample: degenerate draw, cannot rescale C");
  C /= cn;
  const double bn = B.norm();
  require(bn > 0.0, "esn::sample: degenerate draw, cannot rescale B");
  B /= bn;
  // Spectral-radius rescaling may leave ||A|| >= 1; k0 search below covers it.
  auto system = sys::StateSpaceSystem::certify(std::move(A), std::move(B),
                                               std::move(C), act, 256);
  return EsnParams{std::move(system), seed, EsnSpec{dist, target_norm, mode}};
}

struct ControllabilityResult {
  Eigen::MatrixXd K;  // N x N
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  int T = 0;
};

// K = [C | AC | ... | A^{T-1}C] with the last d*T - N columns removed, so K
// is square. Invertible K lets history-coordinate readouts be transported to
// reservoir-state coordinates.
inline ControllabilityResult controllability(const EsnParams& esn) {
  require(esn.system.activation() == sys::Activation::identity,
          "controllability: requires identity activation");
  const int N = esn.N(), d = esn.d(), T = esn.T();
  Eigen::MatrixXd K(N, N);
  Eigen::MatrixXd block = esn.system.C();
  for (int k = 0; k < T; ++k) {
    const int col = k * d;
    const int take = std::min(d, N - col);
    K.middleCols(col, take) = block.leftCols(take);
    if (k + 1 < T) block = esn.system.A() * block;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(K);
  const auto& sv = svd.singularValues();
  return {std::move(K), sv(sv.size() - 1), sv(0), T};
}

inline Eigen::MatrixXd rollout(const EsnParams& esn, const seq::Window& w) {
  return esn.system.run(w);
}

// Upper bound on || x_t - x_t^{(T)} || where x_t^{(T)} keeps only the first
// T terms of the state series sum_k A^k (C z_{t-k} + B), for inputs with
// ||z||_2 <= M. Equals (||C|| M + ||B||) * ||A||^T / (1 - ||A||) under the
// operator-norm certificate and uses the k0-block geometric tail otherwise.
inline double tail_bound(const EsnParams& esn, double M, int T) {
  require(M >= 0.0, "tail_bound: M must be >= 0");
  require(T >= 0, "tail_bound: T must be >= 0");
  const double cn = sys::operator_norm(esn.system.C());
  const double bn = esn.system.B().norm();
  return (cn * M + bn) * esn.system.series_tail(T);
}

inline nlohmann::json esn_to_json(const EsnParams& e) {
  nlohmann::json j = sys::system_to_json(e.system);
  j["seed"] = e.seed;
  j["spec"] = {{"dist", dist_name(e.spec.dist)},
               {"target_norm", e.spec.target_norm},
               {"mode", e.spec.mode == RescaleMode::operator_norm
                            ? "operator-norm"
                            : "spectral-radius"}};
  return j;
}

inline EsnParams esn_from_json(const nlohmann::json& j) {
  EsnParams e{sys::system_from_json(j, 256), j.at("seed").get<std::uint64_t>(),
              EsnSpec{}};
  const auto& s = j.at("spec");
  e.spec.dist = dist_from_name(s.at("dist"));
  e.spec.target_norm = s.at("target_norm").get<double>();
  e.spec.mode = s.at("mode") == "operator-norm" ? RescaleMode::operator_norm
                                                : RescaleMode::spectral_radius;
  return e;
}

}  // namespace resbarron::esn
