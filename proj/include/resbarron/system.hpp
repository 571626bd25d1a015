#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <optional>
#include <utility>

#include "json.hpp"
#include "resbarron/common.hpp"
#include "resbarron/seq.hpp"

namespace resbarron::sys {

enum class Activation { identity, relu };

inline std::string activation_name(Activation a) {
  return a == Activation::identity ? "identity" : "relu";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation: " + s);
}

inline void apply_activation(Activation a, Eigen::VectorXd& x) {
  if (a == Activation::relu) x = x.cwiseMax(0.0);
}

inline double operator_norm(const Eigen::MatrixXd& A) {
  require(A.allFinite(), "operator_norm: non-finite entries");
  if (A.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  return svd.singularValues()(0);
}

inline double spectral_radius(const Eigen::MatrixXd& A) {
  require(A.rows() == A.cols(), "spectral_radius: matrix must be square");
  require(A.allFinite(), "spectral_radius: non-finite entries");
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Certificate that the recurrence x_t = sigma1(A x_{t-1} + C z_t + B) has a
// unique bounded solution for every bounded input:
//  - operator_norm: L_sigma1 * ||A||_op < 1 (valid for any 1-Lipschitz sigma1),
//  - spectral_radius: identity sigma1 with rho(A) < 1, witnessed by the
//    smallest k0 with ||A^{k0}||_op < 1.
struct UspCertificate {
  enum class Kind { operator_norm, spectral_radius };
  Kind kind = Kind::operator_norm;
  double value = 0.0;      // certified quantity (L*||A|| or rho(A)), < 1
  int k0 = 1;              // smallest power with ||A^{k0}|| < 1
  double norm_A = 0.0;     // ||A||_op
  double norm_Ak0 = 0.0;   // ||A^{k0}||_op
  double prefix_max = 1.0; // max_{0<=i<k0} ||A^i||_op
};

class StateSpaceSystem {
 public:
  // Trivial certified placeholder (1-dim zero system), so aggregates holding
  // a system by value stay default-constructible.
  StateSpaceSystem()
      : A_(Eigen::MatrixXd::Zero(1, 1)), B_(Eigen::VectorXd::Zero(1)),
        C_(Eigen::MatrixXd::Zero(1, 1)), act_(Activation::identity) {
    cert_.kind = UspCertificate::Kind::operator_norm;
    cert_.value = 0.0;
    cert_.k0 = 1;
    cert_.norm_A = 0.0;
    cert_.norm_Ak0 = 0.0;
    cert_.prefix_max = 1.0;
  }

  // Builds and certifies; throws if no certificate applies. k0_cap bounds the
  // power search in the spectral-radius case.
  static StateSpaceSystem certify(Eigen::MatrixXd A, Eigen::VectorXd B,
                                  Eigen::MatrixXd C, Activation act,
                                  int k0_cap = 64) {
    require(A.rows() == A.cols(), "StateSpaceSystem: A must be square");
    require(B.size() == A.rows(), "StateSpaceSystem: B size mismatch");
    require(C.rows() == A.rows(), "StateSpaceSystem: C row mismatch");
    require(A.allFinite() && B.allFinite() && C.allFinite(),
            "StateSpaceSystem: non-finite entries");
    require(k0_cap >= 1, "StateSpaceSystem: k0 cap must be >= 1");

    UspCertificate cert;
    cert.norm_A = operator_norm(A);
    if (cert.norm_A < 1.0) {
      cert.kind = UspCertificate::Kind::operator_norm;
      cert.value = cert.norm_A;
      cert.k0 = 1;
      cert.norm_Ak0 = cert.norm_A;
      cert.prefix_max = 1.0;
      return StateSpaceSystem(std::move(A), std::move(B), std::move(C), act, cert);
    }
    if (act != Activation::identity)
      throw std::invalid_argument(
          "StateSpaceSystem: ||A|| >= 1 and non-identity activation; no "
          "contraction certificate");
    const double rho = spectral_radius(A);
    if (!(rho < 1.0))
      throw std::invalid_argument(
          "StateSpaceSystem: spectral radius >= 1; system not certifiable");
    Eigen::MatrixXd P = A;
    double prefix = 1.0;  // max ||A^i|| over i < current power
    for (int k = 1; k <= k0_cap; ++k) {
      const double nk = operator_norm(P);
      if (nk < 1.0) {
        cert.kind = UspCertificate::Kind::spectral_radius;
        cert.value = rho;
        cert.k0 = k;
        cert.norm_Ak0 = nk;
        cert.prefix_max = prefix;
        return StateSpaceSystem(std::move(A), std::move(B), std::move(C), act,
                                cert);
      }
      prefix = std::max(prefix, nk);
      P = P * A;
    }
    throw std::invalid_argument(
        "StateSpaceSystem: no k <= cap with ||A^k|| < 1; raise the cap or "
        "rescale");
  }

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& B() const { return B_; }
  const Eigen::MatrixXd& C() const { return C_; }
  Activation activation() const { return act_; }
  const UspCertificate& certificate() const { return cert_; }
  int state_dim() const { return static_cast<int>(A_.rows()); }
  int input_dim() const { return static_cast<int>(C_.cols()); }

  // Upper bound on sum_{k>=K} ||A^k||_op. Writing k = j*k0 + i, each power
  // has ||A^k|| <= prefix_max * ||A^{k0}||^{floor(k/k0)} and each floor value
  // >= floor(K/k0) occurs at most k0 times.
  double series_tail(int K) const {
    require(K >= 0, "series_tail: K must be >= 0");
    const double r = cert_.norm_Ak0;
    if (r == 0.0) return 0.0;  // nilpotent within k0
    return cert_.k0 * cert_.prefix_max * std::pow(r, K / cert_.k0) / (1.0 - r);
  }

  // Iterates from the given initial state over the whole window; column j of
  // the result is the state at time j - (L-1).
  Eigen::MatrixXd run_from(const Eigen::VectorXd& x_init,
                           const seq::Window& w) const {
    require(w.dim() == input_dim(), "run: window dimension mismatch");
    require(x_init.size() == state_dim(), "run: initial state dimension");
    const int L = w.len();
    Eigen::MatrixXd X(state_dim(), L);
    Eigen::VectorXd x = x_init;
    for (int j = 0; j < L; ++j) {
      x = A_ * x + C_ * w.z.col(j) + B_;
      apply_activation(act_, x);
      X.col(j) = x;
    }
    return X;
  }

  Eigen::MatrixXd run(const seq::Window& w) const {
    return run_from(Eigen::VectorXd::Zero(state_dim()), w);
  }

  // State at the last window time only; avoids storing the whole rollout.
  Eigen::VectorXd run_last(const seq::Window& w) const {
    require(w.dim() == input_dim(), "run: window dimension mismatch");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(state_dim());
    for (int j = 0; j < w.len(); ++j) {
      x = A_ * x + C_ * w.z.col(j) + B_;
      apply_activation(act_, x);
    }
    return x;
  }

  // Series solution x_t = sum_k A^k (C z_{t-k} + B) evaluated by explicit
  // matrix powers (deliberately not the recurrence, so it can serve as an
  // independent oracle for run). Inputs before the window are zero; the
  // infinite B-tail is cut off once its certified bound drops below tol.
  Eigen::VectorXd closed_form(const seq::Window& w, int t,
                              double tol = 1e-12) const {
    require(act_ == Activation::identity,
            "closed_form: requires identity activation");
    require(tol > 0.0, "closed_form: tol must be > 0");
    require(w.dim() == input_dim(), "closed_form: window dimension mismatch");
    require(t <= 0 && t > -w.len(), "closed_form: time index outside window");
    const int L = w.len();
    const int z_terms = t + L;  // z_{t-k} inside the window for k < z_terms
    const double normB = B_.norm();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(state_dim());
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(state_dim(), state_dim());
    int k = 0;
    while (true) {
      if (k < z_terms) {
        x += P * (C_ * w.z.col(L - 1 + t - k) + B_);
      } else {
        if (normB == 0.0 || series_tail(k) * normB <= tol) break;
        x += P * B_;
      }
      ++k;
      if (k >= z_terms && normB > 0.0 && series_tail(k) * normB <= tol) break;
      P = P * A_;
    }
    return x;
  }

 private:
  StateSpaceSystem(Eigen::MatrixXd A, Eigen::VectorXd B, Eigen::MatrixXd C,
                   Activation act, UspCertificate cert)
      : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), act_(act),
        cert_(cert) {}

  Eigen::MatrixXd A_;
  Eigen::VectorXd B_;
  Eigen::MatrixXd C_;
  Activation act_;
  UspCertificate cert_;
};

// Block shift register: state stacks the last T inputs, newest block first.
// Running it yields x_t = (z_t^T, ..., z_{t-T+1}^T)^T.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> shift_register(int d, int T) {
  require(d >= 1 && T >= 1, "shift_register: d and T must be >= 1");
  const int N = d * T;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i + d < N; ++i) A(i + d, i) = 1.0;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(N, d);
  C.topRows(d).setIdentity();
  return {A, C};
}

// Scaled shift: (A x)_i = lambda * x_{i-d} for i > d (1-based), C injects the
// input into the first d coordinates. Running it yields
// x_{t,(k-1)d+j} = lambda^{k-1} * z_{t-k+1,j} for all coordinates <= N.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> lambda_shift(int d, int N,
                                                                double lambda) {
  require(d >= 1, "lambda_shift: d must be >= 1");
  require(N >= d, "lambda_shift: N must be >= d");
  require(lambda > 0.0 && lambda <= 1.0, "lambda_shift: lambda must be in (0,1]");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (int i = d; i < N; ++i) A(i, i - d) = lambda;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(N, d);
  for (int i = 0; i < d; ++i) C(i, i) = 1.0;
  return {A, C};
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  require(j.is_array() && !j.empty(), "matrix_from_json: expected row array");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    require(static_cast<int>(j[i].size()) == cols,
            "matrix_from_json: ragged rows");
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

inline nlohmann::json system_to_json(const StateSpaceSystem& s) {
  return {{"n", s.state_dim()},
          {"d", s.input_dim()},
          {"activation", activation_name(s.activation())},
          {"A", matrix_to_json(s.A())},
          {"B", vector_to_json(s.B())},
          {"C", matrix_to_json(s.C())}};
}

inline StateSpaceSystem system_from_json(const nlohmann::json& j,
                                         int k0_cap = 64) {
  StateSpaceSystem s = StateSpaceSystem::certify(
      matrix_from_json(j.at("A")), vector_from_json(j.at("B")),
      matrix_from_json(j.at("C")), activation_from_name(j.at("activation")),
      k0_cap);
  require(s.state_dim() == j.at("n").get<int>(), "system_from_json: n mismatch");
  require(s.input_dim() == j.at("d").get<int>(), "system_from_json: d mismatch");
  return s;
}

}  // namespace resbarron::sys
