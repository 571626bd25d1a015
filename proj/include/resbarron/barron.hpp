#pragma once

#include <Eigen/Dense>
#include <optional>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "resbarron/common.hpp"
#include "resbarron/esn.hpp"
#include "resbarron/seq.hpp"
#include "resbarron/system.hpp"

namespace resbarron::barron {

// One atom of the readout measure: contributes p * w * sigma2(a.x + c.z0 + b).
struct Atom {
  double p = 1.0;       // probability weight
  double w = 0.0;       // signed outer weight
  Eigen::VectorXd a;    // state readin, dim N
  Eigen::VectorXd c;    // newest-input readin, dim d
  double b = 0.0;       // bias
};

struct AtomicMeasure {
  std::vector<Atom> atoms;
  int N = 0;
  int d = 0;

  void validate() const {
    require(!atoms.empty(), "AtomicMeasure: needs at least one atom");
    double psum = 0.0;
    for (const auto& at : atoms) {
      require(at.p > 0.0, "AtomicMeasure: atom probabilities must be > 0");
      require(at.a.size() == N, "AtomicMeasure: atom a dimension mismatch");
      require(at.c.size() == d, "AtomicMeasure: atom c dimension mismatch");
      require(std::isfinite(at.p) && std::isfinite(at.w) && at.a.allFinite() &&
                  at.c.allFinite() && std::isfinite(at.b),
              "AtomicMeasure: non-finite atom");
      psum += at.p;
    }
    require(std::abs(psum - 1.0) <= 1e-12,
            "AtomicMeasure: probabilities must sum to 1");
  }

  // sum_k p_k |w_k| (||a_k||_p + ||c_k||_2 + |b_k|)
  double I_mu(double p = 2.0) const {
    double s = 0.0;
    for (const auto& at : atoms)
      s += at.p * std::abs(at.w) *
           (seq::vec_pnorm(at.a, p) + at.c.norm() + std::abs(at.b));
    return s;
  }

  // (sum_k p_k w_k^2 (||a_k||_p^2 + ||c_k||_2^2 + b_k^2 + 1))^{1/2}
  double I_mu2(double p = 2.0) const {
    double s = 0.0;
    for (const auto& at : atoms) {
      const double ap = seq::vec_pnorm(at.a, p);
      s += at.p * at.w * at.w *
           (ap * ap + at.c.squaredNorm() + at.b * at.b + 1.0);
    }
    return std::sqrt(s);
  }
};

// Recurrent functional H(z) = sum_k p_k w_k sigma2(a_k.x_{-1} + c_k.z_0 + b_k)
// where x_{-1} is the system state driven by all inputs strictly before the
// newest one. shift_lambda is set when the system is a lambda-shift in
// standard coordinate order; the truncation and reservoir-transport
// transforms require it.
struct BarronFunctional {
  sys::StateSpaceSystem system;
  AtomicMeasure mu;
  SigmaKind sigma2 = SigmaKind::identity;
  std::optional<double> shift_lambda;

  int N() const { return system.state_dim(); }
  int d() const { return system.input_dim(); }

  void validate() const {
    require(mu.N == system.state_dim(), "BarronFunctional: measure/state dim");
    require(mu.d == system.input_dim(), "BarronFunctional: measure/input dim");
    mu.validate();
  }

  double readout(const Eigen::VectorXd& x, const Eigen::VectorXd& z0) const {
    double y = 0.0;
    for (const auto& at : mu.atoms)
      y += at.p * at.w *
           apply_sigma(sigma2, at.a.dot(x) + at.c.dot(z0) + at.b);
    return y;
  }

  // The state is driven by all window entries except the newest, starting
  // from zero; a length-1 window reads out from the zero state.
  double eval(const seq::Window& w) const {
    require(w.len() >= 1, "BarronFunctional::eval: empty window");
    require(w.dim() == d(), "BarronFunctional::eval: window dimension");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(N());
    if (w.len() > 1) x = system.run_last(seq::Window(w.z.leftCols(w.len() - 1)));
    return readout(x, w.newest());
  }
};

inline nlohmann::json measure_to_json(const AtomicMeasure& mu) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& at : mu.atoms)
    arr.push_back({{"p", at.p},
                   {"w", at.w},
                   {"a", sys::vector_to_json(at.a)},
                   {"c", sys::vector_to_json(at.c)},
                   {"b", at.b}});
  return {{"N", mu.N}, {"d", mu.d}, {"atoms", std::move(arr)}};
}

inline AtomicMeasure measure_from_json(const nlohmann::json& j) {
  AtomicMeasure mu;
  mu.N = j.at("N").get<int>();
  mu.d = j.at("d").get<int>();
  for (const auto& ja : j.at("atoms")) {
    Atom at;
    at.p = ja.at("p").get<double>();
    at.w = ja.at("w").get<double>();
    at.a = sys::vector_from_json(ja.at("a"));
    at.c = sys::vector_from_json(ja.at("c"));
    at.b = ja.at("b").get<double>();
    mu.atoms.push_back(std::move(at));
  }
  mu.validate();
  return mu;
}

inline nlohmann::json functional_to_json(const BarronFunctional& h) {
  nlohmann::json j = {{"system", sys::system_to_json(h.system)},
                      {"sigma2", sigma_name(h.sigma2)},
                      {"mu", measure_to_json(h.mu)}};
  if (h.shift_lambda)
    j["shift_lambda"] = *h.shift_lambda;
  else
    j["shift_lambda"] = nullptr;
  return j;
}

inline BarronFunctional functional_from_json(const nlohmann::json& j,
                                             int k0_cap = 64) {
  BarronFunctional h{sys::system_from_json(j.at("system"), k0_cap),
                     measure_from_json(j.at("mu")),
                     sigma_from_name(j.at("sigma2")), std::nullopt};
  if (j.contains("shift_lambda") && !j.at("shift_lambda").is_null())
    h.shift_lambda = j.at("shift_lambda").get<double>();
  h.validate();
  return h;
}

// Exact realization of the convolutional target
//   H(z) = sum_{k=0}^{K-1} h_k . z_{-k}        (column k of h is the lag-k tap)
// over the lambda-shift system of dimension N_state. The state stores
// lambda^{k-1} z_{-k}, so the lag-k tap is planted as a_{(k-1)d+j} =
// lambda^{-(k-1)} h_{k,j}; the lag-0 tap rides on c. sigma2 = identity uses a
// single pass-through atom; relu uses the mirrored pair
// relu(u) - relu(-u) = u. Other sigma2 have no exact realization.
inline BarronFunctional make_convolutional(const Eigen::MatrixXd& h,
                                           double lambda, int N_state,
                                           SigmaKind sigma2 = SigmaKind::identity) {
  const int d = static_cast<int>(h.rows());
  const int K = static_cast<int>(h.cols());
  require(d >= 1 && K >= 1, "make_convolutional: empty filter");
  require(h.allFinite(), "make_convolutional: non-finite filter");
  require(lambda > 0.0 && lambda < 1.0,
          "make_convolutional: lambda must be in (0,1)");
  require(N_state >= std::max(d, d * (K - 1)),
          "make_convolutional: N must cover d*(K-1) lag coordinates");
  require(sigma2 != SigmaKind::tanh,
          "make_convolutional: tanh admits no exact realization");

  Eigen::VectorXd a = Eigen::VectorXd::Zero(N_state);
  double lpow = 1.0;  // lambda^{-(k-1)}
  for (int k = 1; k < K; ++k) {
    for (int j = 0; j < d; ++j) a[(k - 1) * d + j] = lpow * h(j, k);
    lpow /= lambda;
  }
  require(a.allFinite(),
          "make_convolutional: lambda-compensated taps overflow; raise lambda");
  Eigen::VectorXd c = h.col(0);

  AtomicMeasure mu;
  mu.N = N_state;
  mu.d = d;
  if (sigma2 == SigmaKind::identity) {
    mu.atoms.push_back({1.0, 1.0, a, c, 0.0});
  } else {
    mu.atoms.push_back({0.5, 2.0, a, c, 0.0});
    mu.atoms.push_back({0.5, -2.0, -a, -c, 0.0});
  }

  auto [A, C] = sys::lambda_shift(d, N_state, lambda);
  BarronFunctional H{
      sys::StateSpaceSystem::certify(std::move(A),
                                     Eigen::VectorXd::Zero(N_state),
                                     std::move(C), sys::Activation::identity),
      std::move(mu), sigma2, lambda};
  H.validate();
  return H;
}

// One unit of a shallow network on the last T inputs:
// w * sigma2(v . (z_0, z_{-1}, ..., z_{-T+1}, 1)), v in R^{Td+1}.
struct NetAtom {
  double w = 0.0;
  Eigen::VectorXd v;
};

// Realizes a finite-memory shallow network over the block shift register of
// depth T. The register state is (z_{-1}, ..., z_{-T}); v splits into the
// z_0 part (-> c), the T-1 lagged parts (-> a, padded with d zeros on the
// unused oldest block), and the bias. Outer weights become a normalized
// measure: p_i = |w_i| / W, w_i' = sign(w_i) * W with W = sum |w_i|.
inline BarronFunctional make_finite_memory(const std::vector<NetAtom>& net,
                                           int T, int d,
                                           SigmaKind sigma2 = SigmaKind::relu) {
  require(T >= 1 && d >= 1, "make_finite_memory: T and d must be >= 1");
  require(!net.empty(), "make_finite_memory: no atoms");
  const int N = d * T;
  double W = 0.0;
  for (const auto& u : net) {
    require(u.v.size() == T * d + 1,
            "make_finite_memory: v must have T*d+1 entries");
    require(std::isfinite(u.w) && u.v.allFinite(),
            "make_finite_memory: non-finite atom");
    W += std::abs(u.w);
  }

  AtomicMeasure mu;
  mu.N = N;
  mu.d = d;
  if (W == 0.0) {
    mu.atoms.push_back({1.0, 0.0, Eigen::VectorXd::Zero(N),
                        Eigen::VectorXd::Zero(d), 0.0});
  } else {
    for (const auto& u : net) {
      if (u.w == 0.0) continue;
      Atom at;
      at.p = std::abs(u.w) / W;
      at.w = u.w > 0.0 ? W : -W;
      at.a = Eigen::VectorXd::Zero(N);
      at.a.head((T - 1) * d) = u.v.segment(d, (T - 1) * d);
      at.c = u.v.head(d);
      at.b = u.v[T * d];
      mu.atoms.push_back(std::move(at));
    }
  }

  auto [A, C] = sys::shift_register(d, T);
  BarronFunctional H{
      sys::StateSpaceSystem::certify(std::move(A), Eigen::VectorXd::Zero(N),
                                     std::move(C), sys::Activation::identity,
                                     std::max(64, T)),
      std::move(mu), sigma2, std::nullopt};
  H.validate();
  return H;
}

namespace detail {
// Interleaving embedding for the combined state: coordinate i of system 1
// lands at 2i and of system 2 at 2i+1 while both have coordinates left, after
// which the longer system continues contiguously (m + i with m = min(N1,N2)).
inline std::vector<int> interleave_index(int n_self, int n_other, int offset) {
  const int m = std::min(n_self, n_other);
  std::vector<int> idx(n_self);
  for (int i = 0; i < n_self; ++i) idx[i] = i < m ? 2 * i + offset : m + i;
  return idx;
}
}  // namespace detail

// lambda1 * H1 + lambda2 * H2 as a single functional. States are interleaved
// into dimension N1 + N2; each atom keeps its own state/input readins and its
// weight picks up the scalar: with s = |lambda1| + |lambda2|, an atom (p, w)
// of H_i becomes (p * |lambda_i| / s, sign(lambda_i) * w * s), which leaves
// p * w scaled by exactly lambda_i and the probabilities summing to 1.
inline BarronFunctional combine(const BarronFunctional& h1,
                                const BarronFunctional& h2, double lambda1,
                                double lambda2) {
  require(h1.d() == h2.d(), "combine: input dimensions differ");
  require(h1.system.activation() == h2.system.activation(),
          "combine: state activations differ");
  require(h1.sigma2 == h2.sigma2, "combine: readout activations differ");
  require(std::isfinite(lambda1) && std::isfinite(lambda2),
          "combine: non-finite coefficients");
  const int N1 = h1.N(), N2 = h2.N(), N = N1 + N2, d = h1.d();
  const auto idx1 = detail::interleave_index(N1, N2, 0);
  const auto idx2 = detail::interleave_index(N2, N1, 1);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd B = Eigen::VectorXd::Zero(N);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(N, d);
  for (int i = 0; i < N1; ++i) {
    for (int j = 0; j < N1; ++j) A(idx1[i], idx1[j]) = h1.system.A()(i, j);
    B[idx1[i]] = h1.system.B()[i];
    C.row(idx1[i]) = h1.system.C().row(i);
  }
  for (int i = 0; i < N2; ++i) {
    for (int j = 0; j < N2; ++j) A(idx2[i], idx2[j]) = h2.system.A()(i, j);
    B[idx2[i]] = h2.system.B()[i];
    C.row(idx2[i]) = h2.system.C().row(i);
  }

  const double s = std::abs(lambda1) + std::abs(lambda2);
  AtomicMeasure mu;
  mu.N = N;
  mu.d = d;
  if (s == 0.0) {
    mu.atoms.push_back({1.0, 0.0, Eigen::VectorXd::Zero(N),
                        Eigen::VectorXd::Zero(d), 0.0});
  } else {
    auto push = [&](const AtomicMeasure& src, const std::vector<int>& idx,
                    double lam) {
      if (lam == 0.0) return;
      for (const auto& at : src.atoms) {
        Atom nu;
        nu.p = at.p * std::abs(lam) / s;
        nu.w = (lam > 0.0 ? 1.0 : -1.0) * at.w * s;
        nu.a = Eigen::VectorXd::Zero(N);
        for (int i = 0; i < static_cast<int>(idx.size()); ++i)
          nu.a[idx[i]] = at.a[i];
        nu.c = at.c;
        nu.b = at.b;
        mu.atoms.push_back(std::move(nu));
      }
    };
    push(h1.mu, idx1, lambda1);
    push(h2.mu, idx2, lambda2);
  }

  const int cap =
      std::max(64, h1.system.certificate().k0 * h2.system.certificate().k0);
  BarronFunctional H{sys::StateSpaceSystem::certify(std::move(A), std::move(B),
                                                    std::move(C),
                                                    h1.system.activation(), cap),
                     std::move(mu), h1.sigma2, std::nullopt};
  H.validate();
  return H;
}

struct TruncationResult {
  BarronFunctional functional;
  double bound = 0.0;  // sup over ||z_t||_2 <= M of |H(z) - H_trunc(z)|
};

// Cuts a lambda-shift functional down to N_new state coordinates (memory
// floor(N_new/d) lags). The discarded taps a_{(k-1)d+j} multiply
// lambda^{k-1} z_{-k}; Hoelder on each block against the conjugate exponent q
// and the geometric lag decay give, for inputs with sup_t ||z_t||_2 <= M,
//   |H - H^{N}| <= L_sigma2 * (sum_k p|w| ||a||_p) * max(d^{1/q-1/2}, 1)
//                  * M * lambda^{floor(N/d)} / ((1-lambda)(1-lambda^q)^{1/q})
// with the q = inf factors read as their limits (both 1).
inline TruncationResult truncate(const BarronFunctional& h, int N_new, double M,
                                 double p = 2.0) {
  require(h.shift_lambda.has_value(),
          "truncate: functional is not a lambda-shift realization");
  const double lambda = *h.shift_lambda;
  require(lambda < 1.0, "truncate: requires lambda < 1");
  require(M >= 0.0, "truncate: M must be >= 0");
  require(p >= 1.0, "truncate: p must be >= 1");
  const int d = h.d();
  require(N_new >= d, "truncate: N must be >= d");

  const double q = holder_conjugate(p);
  double amass = 0.0;
  for (const auto& at : h.mu.atoms)
    amass += at.p * std::abs(at.w) * seq::vec_pnorm(at.a, p);
  const double dfac =
      std::isinf(q) ? 1.0 : std::max(std::pow(double(d), 1.0 / q - 0.5), 1.0);
  const double qfac =
      std::isinf(q) ? 1.0 : std::pow(1.0 - std::pow(lambda, q), 1.0 / q);
  const double bound = sigma_lipschitz(h.sigma2) * amass * dfac * M *
                       std::pow(lambda, double(N_new / d)) /
                       ((1.0 - lambda) * qfac);

  AtomicMeasure mu;
  mu.N = N_new;
  mu.d = d;
  const int keep = std::min(N_new, h.N());
  for (const auto& at : h.mu.atoms) {
    Atom nu = at;
    nu.a = Eigen::VectorXd::Zero(N_new);
    nu.a.head(keep) = at.a.head(keep);
    mu.atoms.push_back(std::move(nu));
  }

  auto [A, C] = sys::lambda_shift(d, N_new, lambda);
  BarronFunctional ht{
      sys::StateSpaceSystem::certify(std::move(A), Eigen::VectorXd::Zero(N_new),
                                     std::move(C), sys::Activation::identity),
      std::move(mu), h.sigma2, lambda};
  ht.validate();
  return {std::move(ht), bound};
}

// Rewrites an identity-activation functional over an arbitrary certified
// system as a lambda-shift realization. Writing the semi-infinite state as
// x_{-1} = sum_{k>=1} A^{k-1}(C z_{-k} + B), each atom becomes
//   a.x_{-1} = sum_k ((A/lambda)^{k-1} C)^T a . (lambda^{k-1} z_{-k}) + a.B0
// with B0 = (I - A)^{-1} B, i.e. lambda-shift taps G_k a with
// G_k = C^T (A^T/lambda)^{k-1} and bias shift a.B0. The lag cutoff K_max is
// the smallest K whose certified tail satisfies ||C||_op * tail(K) <= tol,
// where the tail is taken for A/lambda (dominating the lambda-compensated
// coefficient mass). Requires lambda^{k0} > ||A^{k0}|| so A/lambda stays
// certifiable. Exact on semi-infinite inputs; on zero-padded windows of
// length L the two sides differ by O(||A||^{L-1}) because the original
// truncates the bias series at the window edge while B0 sums it fully.
inline BarronFunctional normalize_realization(const BarronFunctional& h,
                                              double lambda,
                                              double series_tol = 1e-10) {
  require(h.system.activation() == sys::Activation::identity,
          "normalize_realization: requires identity activation");
  require(lambda > 0.0 && lambda < 1.0,
          "normalize_realization: lambda must be in (0,1)");
  require(series_tol > 0.0, "normalize_realization: tol must be > 0");
  const auto& cert = h.system.certificate();
  require(std::pow(lambda, double(cert.k0)) > cert.norm_Ak0,
          "normalize_realization: lambda^k0 must exceed ||A^k0||");

  const int N = h.N(), d = h.d();
  const Eigen::MatrixXd At = h.system.A() / lambda;
  auto tilde = sys::StateSpaceSystem::certify(
      At, Eigen::VectorXd::Zero(N), h.system.C(), sys::Activation::identity,
      std::max(64, cert.k0));
  const double cn = sys::operator_norm(h.system.C());

  int K_max = 1;
  while (cn * tilde.series_tail(K_max) > series_tol) ++K_max;

  const Eigen::VectorXd B0 = (Eigen::MatrixXd::Identity(N, N) - h.system.A())
                                 .colPivHouseholderQr()
                                 .solve(h.system.B());

  const int N_new = d * K_max;
  AtomicMeasure mu;
  mu.N = N_new;
  mu.d = d;
  Eigen::MatrixXd Gk;  // d x N, = C^T (At^T)^{k-1}
  for (const auto& at : h.mu.atoms) {
    Atom nu;
    nu.p = at.p;
    nu.w = at.w;
    nu.a.resize(N_new);
    Gk = h.system.C().transpose();
    for (int k = 1; k <= K_max; ++k) {
      nu.a.segment((k - 1) * d, d) = Gk * at.a;
      if (k < K_max) Gk = Gk * At.transpose();
    }
    nu.c = at.c;
    nu.b = at.b + at.a.dot(B0);
    mu.atoms.push_back(std::move(nu));
  }

  auto [A, C] = sys::lambda_shift(d, N_new, lambda);
  BarronFunctional hn{
      sys::StateSpaceSystem::certify(std::move(A), Eigen::VectorXd::Zero(N_new),
                                     std::move(C), sys::Activation::identity),
      std::move(mu), h.sigma2, lambda};
  hn.validate();
  return hn;
}

struct ToEsnResult {
  AtomicMeasure mu;             // readout measure in reservoir coordinates
  double bound = 0.0;           // sup_{||z_t||_2 <= M} |H_norm(z) - H_esn(z)|
  double norm_KtLambda = 0.0;   // ||K^{-T} Lambda||_op
};

// Transports a lambda-shift functional onto reservoir-state coordinates.
// Matching the lag taps through the controllability matrix K means solving
// K^T a' = Lambda a_pre (Lambda = diag of lambda^{k-1} per lag block, a_pre
// the taps zero-padded to the reservoir dimension); the bias absorbs the
// reservoir's deterministic drift Btilde = sum_{k=1}^{T} A^{k-1} B. What the
// transported atom cannot see is the reservoir state's lag tail beyond T
// steps, giving for inputs with sup_t ||z_t||_2 <= M
//   |H_norm - H_esn| <= L_sigma2 * tail_bound(esn, M, T)
//                       * ||K^{-T} Lambda|| * sum_k p|w| ||a_pre,k||_2.
// The bound is exact when d divides the reservoir dimension; otherwise the
// trimmed partial lag block contributes a further term of the same order.
inline ToEsnResult to_esn_coordinates(const BarronFunctional& h,
                                      const esn::EsnParams& reservoir,
                                      double M) {
  require(h.shift_lambda.has_value(),
          "to_esn_coordinates: functional is not a lambda-shift realization");
  require(reservoir.system.activation() == sys::Activation::identity,
          "to_esn_coordinates: reservoir must have identity activation");
  require(h.d() == reservoir.d(), "to_esn_coordinates: input dimensions differ");
  require(M >= 0.0, "to_esn_coordinates: M must be >= 0");
  require(h.N() <= reservoir.N(),
          "to_esn_coordinates: functional memory exceeds reservoir dimension; "
          "truncate first");
  const double lambda = *h.shift_lambda;
  const int N = reservoir.N(), d = reservoir.d(), T = reservoir.T();

  const auto ctrl = esn::controllability(reservoir);
  if (ctrl.sigma_min < 1e-10 * ctrl.sigma_max) {
    std::ostringstream os;
    os << "to_esn_coordinates: controllability matrix numerically singular "
          "(smallest singular value "
       << ctrl.sigma_min << ")";
    throw std::invalid_argument(os.str());
  }

  Eigen::VectorXd lam_diag(N);
  for (int i = 0; i < N; ++i) lam_diag[i] = std::pow(lambda, double(i / d));

  Eigen::VectorXd Btilde = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd Ak_B = reservoir.system.B();
  for (int k = 1; k <= T; ++k) {
    Btilde += Ak_B;
    if (k < T) Ak_B = reservoir.system.A() * Ak_B;
  }

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ctrl.K.transpose());
  const double norm_KtLambda =
      sys::operator_norm(qr.solve(lam_diag.asDiagonal().toDenseMatrix()));
  const double tail = esn::tail_bound(reservoir, M, T);

  AtomicMeasure mu;
  mu.N = N;
  mu.d = d;
  double bound = 0.0;
  for (const auto& at : h.mu.atoms) {
    Eigen::VectorXd a_pre = Eigen::VectorXd::Zero(N);
    a_pre.head(h.N()) = at.a;
    Atom nu;
    nu.p = at.p;
    nu.w = at.w;
    nu.a = qr.solve((lam_diag.array() * a_pre.array()).matrix());
    nu.c = at.c;
    nu.b = at.b - nu.a.dot(Btilde);
    bound += at.p * std::abs(at.w) * a_pre.norm();
    mu.atoms.push_back(std::move(nu));
  }
  bound *= sigma_lipschitz(h.sigma2) * tail * norm_KtLambda;
  return {std::move(mu), bound, norm_KtLambda};
}

// Labels a trajectory with a scalar functional by rolling the state forward
// once (bitwise identical to evaluating every suffix from scratch, since the
// per-step update is the same floating-point op sequence).
inline seq::TrajectoryDataset generate(const seq::ProcessGenerator& gen, int n,
                                       const BarronFunctional& H,
                                       double noise_std,
                                       seq::NoiseKind noise = seq::NoiseKind::gaussian) {
  require(n >= 1, "generate: n must be >= 1");
  require(noise_std >= 0.0, "generate: noise std must be >= 0");
  require(gen.d == H.d(), "generate: input dimension mismatch");
  seq::TrajectoryDataset ds;
  ds.Z = gen.inputs(n, 0);
  ds.Y.resize(1, n);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(H.N());
  for (int j = 0; j < n; ++j) {
    ds.Y(0, j) = H.readout(x, ds.Z.col(j));
    x = H.system.A() * x + H.system.C() * ds.Z.col(j) + H.system.B();
    sys::apply_activation(H.system.activation(), x);
  }
  if (noise_std > 0.0) {
    Rng nrng(mix_seed(gen.seed, 0xa015e));
    const double hw = std::sqrt(3.0) * noise_std;
    for (int j = 0; j < n; ++j)
      ds.Y(0, j) += noise == seq::NoiseKind::gaussian
                        ? noise_std * nrng.normal()
                        : nrng.uniform(-hw, hw);
  }
  return ds;
}

}  // namespace resbarron::barron
