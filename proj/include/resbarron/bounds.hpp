#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "json.hpp"
#include "resbarron/common.hpp"
#include "resbarron/seq.hpp"

namespace resbarron::bounds {

// Every calculator takes the one struct; each reads only the fields it needs
// and reports any missing one by name. All quantities are plain numbers so
// the calculators stay decoupled from how a model was built.
//
// Norm conventions: M and M_tilde are Euclidean bounds (inputs / outputs),
// normA/normC are operator norms of the target realization, normB_q its
// bias q-norm (q conjugate to p), normAE/normBE/normCE the reservoir norms.
struct BoundInputs {
  std::optional<double> d;             // input dimension
  std::optional<double> p;             // Hoelder exponent on state readins
  std::optional<double> L_sigma2;      // Lipschitz constant of sigma2
  std::optional<double> sigma2_zero;   // |sigma2(0)|
  std::optional<double> M;             // sup_t ||z_t||_2
  std::optional<double> M_tilde;       // sup |y|
  std::optional<double> lambda;        // shift decay of the realization
  std::optional<double> normA;         // ||A||_op of the target system
  std::optional<double> normC;         // ||C||_op of the target system
  std::optional<double> normB_q;       // ||B||_q of the target system
  std::optional<double> I_mu;          // variation norm of the measure
  std::optional<double> I_mu2;         // second-moment norm of the measure
  std::optional<double> kappa;         // importance-ratio cap 1/delta_tilde
  std::optional<double> normAE;        // ||A||_op of the reservoir
  std::optional<double> normBE;        // ||B||_2 of the reservoir
  std::optional<double> normCE;        // ||C||_op of the reservoir
  std::optional<double> norm_KtLambda; // ||K^{-T} Lambda||_op
  std::optional<double> N;             // feature count
  std::optional<double> T;             // reservoir memory ceil(N_res/d)
  std::optional<double> n;             // training samples
  std::optional<double> R;             // readout-norm budget
  std::optional<double> r;             // norm gap parameter, in (normAE, 1)
  std::optional<double> lambda_dep;    // input dependence decay
  std::optional<double> C_dep;         // input dependence constant
  std::optional<double> lambda_max;    // max(r, lambda_dep) unless overridden
  std::optional<double> Ea2;           // E_nu ||a||^2
  std::optional<double> Ec2;           // E_nu ||c||^2
  std::optional<double> Eb2;           // E_nu b^2
  std::optional<double> w_sup;         // sup |w| on supp(nu), may be inf
  std::optional<double> kappa0;        // static importance-ratio cap
  std::optional<double> v_sup;         // static sup ||(c, b)||_2 on supp(nu)
};

namespace detail {
inline double req(const std::optional<double>& v, const char* name,
                  const char* fn) {
  if (!v)
    throw std::invalid_argument(std::string(fn) + ": missing input '" + name +
                                "'");
  require(!std::isnan(*v),
          std::string(fn) + ": input '" + name + "' is NaN");
  return *v;
}

inline double max3(double a, double b, double c) {
  return std::max(a, std::max(b, c));
}

// d^e with the p->inf limits taken first (exponents built from 1/p, 1/q).
inline double dpow(double d, double e) { return std::pow(d, e); }
}  // namespace detail

// Base constant of the approximation bounds: with q conjugate to p,
//   c1 = sqrt(8) max(L, |sigma2(0)|, 1)
//        * max(1, d^{1/2 - 1/p}) * d^{1/(2p)} * max(1, d^{1/q - 1/2})
//        * (1-lambda)^{-1} (1-lambda^q)^{-1/q} * lambda^{-1} * max(M, 1)^2,
// understanding the q = inf factors as their limits (both 1).
inline double c1_tilde(const BoundInputs& in) {
  using detail::req;
  const double d = req(in.d, "d", "c1_tilde");
  const double p = req(in.p, "p", "c1_tilde");
  const double L = req(in.L_sigma2, "L_sigma2", "c1_tilde");
  const double s0 = req(in.sigma2_zero, "sigma2_zero", "c1_tilde");
  const double M = req(in.M, "M", "c1_tilde");
  const double lam = req(in.lambda, "lambda", "c1_tilde");
  require(d >= 1.0, "c1_tilde: d must be >= 1");
  require(p >= 1.0, "c1_tilde: p must be >= 1");
  require(lam > 0.0 && lam < 1.0, "c1_tilde: lambda must be in (0,1)");
  require(M >= 0.0 && L >= 0.0, "c1_tilde: M and L_sigma2 must be >= 0");
  const double q = holder_conjugate(p);
  const double inv_p = std::isinf(p) ? 0.0 : 1.0 / p;
  const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;
  const double f_dim = std::max(1.0, detail::dpow(d, 0.5 - inv_p)) *
                       detail::dpow(d, 0.5 * inv_p) *
                       std::max(1.0, detail::dpow(d, inv_q - 0.5));
  const double f_lam = std::isinf(q)
                           ? 1.0
                           : std::pow(1.0 - std::pow(lam, q), -inv_q);
  return std::sqrt(8.0) * detail::max3(L, std::abs(s0), 1.0) * f_dim /
         (1.0 - lam) * f_lam / lam * std::pow(std::max(M, 1.0), 2.0);
}

namespace detail {
// Shared norm factors of the approximation constants.
inline double realization_factor(const BoundInputs& in, const char* fn) {
  const double p = req(in.p, "p", fn);
  const double lam = req(in.lambda, "lambda", fn);
  const double nA = req(in.normA, "normA", fn);
  const double nC = req(in.normC, "normC", fn);
  const double nBq = req(in.normB_q, "normB_q", fn);
  require(nA >= 0.0 && nA < 1.0, std::string(fn) + ": normA must be in [0,1)");
  const double ratio = nA / lam;
  require(ratio < 1.0, std::string(fn) + ": requires normA < lambda");
  const double g1 =
      std::isinf(p) ? nC : nC / std::pow(1.0 - std::pow(ratio, p), 1.0 / p);
  const double g2 = nBq / (1.0 - nA);
  return max3(g1, g2, 1.0);
}

inline double reservoir_factor(const BoundInputs& in, const char* fn) {
  const double nAE = req(in.normAE, "normAE", fn);
  const double nBE = req(in.normBE, "normBE", fn);
  const double nCE = req(in.normCE, "normCE", fn);
  const double nKL = req(in.norm_KtLambda, "norm_KtLambda", fn);
  require(nAE >= 0.0 && nAE < 1.0,
          std::string(fn) + ": normAE must be in [0,1)");
  return 1.0 + (nCE + nBE) / (1.0 - nAE) * nKL;
}
}  // namespace detail

// Transport constant: how much a functional can grow when carried from its
// own realization onto the reservoir,
//   C = c1 * max(normC (1-(normA/lambda)^p)^{-1/p}, normB_q/(1-normA), 1)
//        * max(I_mu, I_mu2) * (1 + (normCE+normBE)/(1-normAE) ||K^{-T}L||).
inline double capacity_constant(const BoundInputs& in) {
  using detail::req;
  const char* fn = "capacity_constant";
  const double imax =
      std::max(req(in.I_mu, "I_mu", fn), req(in.I_mu2, "I_mu2", fn));
  return c1_tilde(in) * detail::realization_factor(in, fn) * imax *
         detail::reservoir_factor(in, fn);
}

struct ApproxBound {
  double C = 0.0;           // constant in front of all three terms
  double term_trunc = 0.0;  // lambda^{N/d}: finite shift memory
  double term_tail = 0.0;   // normAE^T: reservoir state tail
  double term_mc = 0.0;     // sqrt(kappa/N): Monte Carlo feature error
  double total = 0.0;

  nlohmann::json to_json() const {
    return {{"C", C},
            {"term_trunc", term_trunc},
            {"term_tail", term_tail},
            {"term_mc", term_mc},
            {"total", total}};
  }
};

// Approximation error of an N-feature reservoir readout against the target:
// truncation of the shift memory + reservoir tail + Monte Carlo term, with
// the common constant C = c1 * max(sqrt(kappa), 1) * (capacity factors).
inline ApproxBound approx_bound(const BoundInputs& in) {
  using detail::req;
  const char* fn = "approx_bound";
  const double N = req(in.N, "N", fn);
  const double d = req(in.d, "d", fn);
  const double T = req(in.T, "T", fn);
  const double kap = req(in.kappa, "kappa", fn);
  const double lam = req(in.lambda, "lambda", fn);
  const double nAE = req(in.normAE, "normAE", fn);
  require(N >= 1.0, "approx_bound: N must be >= 1");
  require(kap >= 1.0, "approx_bound: kappa must be >= 1");
  const double imax =
      std::max(req(in.I_mu, "I_mu", fn), req(in.I_mu2, "I_mu2", fn));
  ApproxBound out;
  out.C = c1_tilde(in) * std::max(std::sqrt(kap), 1.0) *
          detail::realization_factor(in, fn) * imax *
          detail::reservoir_factor(in, fn);
  out.term_trunc = std::pow(lam, N / d);
  out.term_tail = std::pow(nAE, T);
  out.term_mc = std::sqrt(kap / N);
  out.total = out.C * (out.term_trunc + out.term_tail + out.term_mc);
  return out;
}

// Base constant of the estimation bound:
//   c2 = 2^6 sqrt(max(1, C_dep) max(M,1)^5 max(M_tilde,1)^3 max(L,|s0|,1)).
inline double c2_tilde(const BoundInputs& in) {
  using detail::req;
  const char* fn = "c2_tilde";
  const double Cdep = req(in.C_dep, "C_dep", fn);
  const double M = req(in.M, "M", fn);
  const double Mt = req(in.M_tilde, "M_tilde", fn);
  const double L = req(in.L_sigma2, "L_sigma2", fn);
  const double s0 = req(in.sigma2_zero, "sigma2_zero", fn);
  require(Cdep >= 0.0, "c2_tilde: C_dep must be >= 0");
  return 64.0 * std::sqrt(std::max(1.0, Cdep) *
                          std::pow(std::max(M, 1.0), 5.0) *
                          std::pow(std::max(Mt, 1.0), 3.0) *
                          detail::max3(L, std::abs(s0), 1.0));
}

namespace detail {
inline double lambda_max_of(const BoundInputs& in, const char* fn) {
  const double lm = in.lambda_max ? *in.lambda_max
                                  : std::max(req(in.r, "r", fn),
                                             req(in.lambda_dep, "lambda_dep", fn));
  require(lm > 0.0 && lm < 1.0,
          std::string(fn) + ": lambda_max must be in (0,1)");
  return lm;
}
}  // namespace detail

// Constant of the single-trajectory estimation bound. r in (normAE, 1) is
// the free decay-gap parameter; lambda_max = max(r, lambda_dep) unless
// overridden; w_sup may be infinite (its factor then collapses to 1).
inline double estimation_constant(const BoundInputs& in) {
  using detail::req;
  const char* fn = "estimation_constant";
  const double nAE = req(in.normAE, "normAE", fn);
  const double nBE = req(in.normBE, "normBE", fn);
  const double nCE = req(in.normCE, "normCE", fn);
  const double r = req(in.r, "r", fn);
  const double R = req(in.R, "R", fn);
  const double kap = req(in.kappa, "kappa", fn);
  const double ws = req(in.w_sup, "w_sup", fn);
  const double Ea2 = req(in.Ea2, "Ea2", fn);
  const double Ec2 = req(in.Ec2, "Ec2", fn);
  const double Eb2 = req(in.Eb2, "Eb2", fn);
  require(nAE >= 0.0 && nAE < 1.0, "estimation_constant: normAE in [0,1)");
  require(r > nAE && r < 1.0,
          "estimation_constant: r must lie in (normAE, 1)");
  require(kap >= 1.0 && ws > 0.0,
          "estimation_constant: kappa >= 1 and w_sup > 0");
  const double lm = detail::lambda_max_of(in, fn);
  const double loglam = std::log(1.0 / lm);
  const double a3 = std::pow(nCE + nBE + 1.0, 3.0) /
                    (std::pow(1.0 - nAE, 3.0) * std::sqrt(loglam));
  const double fm = std::sqrt(Ea2) + std::sqrt(Ec2) + std::sqrt(Eb2) + 1.0;
  const double fr = 1.0 / std::sqrt(r * r - nAE * nAE);
  const double fk = std::isinf(ws) ? 1.0 : std::max(1.0 / (kap * ws), 1.0);
  const double fsum = r / (1.0 - r) + 1.0 / lm +
                      std::sqrt(nCE * nCE + 1.0) / (lm * loglam);
  return c2_tilde(in) *
         std::sqrt(a3 * std::max(R, 1.0) * fm * fr * fk * fsum);
}

// Estimation term C_est * sqrt(R sqrt(N) sqrt(log n) / sqrt(n)). Refuses
// regimes where a single trajectory cannot average the dependence out.
inline double estimation_bound(const BoundInputs& in) {
  using detail::req;
  const char* fn = "estimation_bound";
  const double n = req(in.n, "n", fn);
  const double N = req(in.N, "N", fn);
  const double R = req(in.R, "R", fn);
  require(n >= 2.0, "estimation_bound: n must be >= 2");
  require(N >= 1.0, "estimation_bound: N must be >= 1");
  const double lm = detail::lambda_max_of(in, fn);
  if (!(std::log(n) < n * std::log(1.0 / lm)))
    throw std::invalid_argument(
        "estimation_bound: dependence too strong for the sample: "
        "log n >= n * log(1/lambda_max)");
  return estimation_constant(in) *
         std::sqrt(R * std::sqrt(N) * std::sqrt(std::log(n)) / std::sqrt(n));
}

// Static (memoryless) capacity constant
//   C_H0 = sqrt(2 max(2 L^2, sigma2(0)^2) max(1, v_sup^2)) * I_mu2
//          * sqrt(kappa0),
// bounding E|H(z) - H_N(z)|^2 <= C_H0^2 / N for the importance readout.
inline double static_capacity(const BoundInputs& in) {
  using detail::req;
  const char* fn = "static_capacity";
  const double L = req(in.L_sigma2, "L_sigma2", fn);
  const double s0 = req(in.sigma2_zero, "sigma2_zero", fn);
  const double vs = req(in.v_sup, "v_sup", fn);
  const double I2 = req(in.I_mu2, "I_mu2", fn);
  const double k0 = req(in.kappa0, "kappa0", fn);
  require(k0 >= 1.0, "static_capacity: kappa0 must be >= 1");
  return std::sqrt(2.0 * std::max(2.0 * L * L, s0 * s0) *
                   std::max(1.0, vs * vs)) *
         I2 * std::sqrt(k0);
}

inline double static_bound(const BoundInputs& in) {
  const double N = detail::req(in.N, "N", "static_bound");
  require(N >= 1.0, "static_bound: N must be >= 1");
  return static_capacity(in) / std::sqrt(N);
}

struct BoundReport {
  double c1 = 0.0;
  double capacity = 0.0;
  ApproxBound approx;
  double c2 = 0.0;
  double C_est = 0.0;
  double est_term = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const {
    return {{"c1_tilde", c1},         {"capacity_constant", capacity},
            {"approx", approx.to_json()}, {"c2_tilde", c2},
            {"C_est", C_est},         {"est_term", est_term},
            {"total", total}};
  }

  std::string format() const {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "  c1_tilde            %.6g\n"
                  "  capacity_constant   %.6g\n"
                  "  approx.C            %.6g\n"
                  "  approx.term_trunc   %.6g\n"
                  "  approx.term_tail    %.6g\n"
                  "  approx.term_mc      %.6g\n"
                  "  approx.total        %.6g\n"
                  "  c2_tilde            %.6g\n"
                  "  C_est               %.6g\n"
                  "  est_term            %.6g\n"
                  "  total               %.6g\n",
                  c1, capacity, approx.C, approx.term_trunc, approx.term_tail,
                  approx.term_mc, approx.total, c2, C_est, est_term, total);
    return buf;
  }
};

// One-stop evaluation: approximation + estimation, total is their sum (an
// upper bound on the generalization error of the constrained fit).
inline BoundReport full_report(const BoundInputs& in) {
  BoundReport rep;
  rep.c1 = c1_tilde(in);
  rep.capacity = capacity_constant(in);
  rep.approx = approx_bound(in);
  rep.c2 = c2_tilde(in);
  rep.C_est = estimation_constant(in);
  rep.est_term = estimation_bound(in);
  rep.total = rep.approx.total + rep.est_term;
  return rep;
}

}  // namespace resbarron::bounds
