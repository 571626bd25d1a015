#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace resbarron {

// Readout nonlinearities. All three are 1-Lipschitz and vanish at 0, but the
// bound calculators still take L and sigma2(0) as explicit inputs so the
// formulas stay valid for other choices.
enum class SigmaKind { identity, relu, tanh };

inline double apply_sigma(SigmaKind k, double x) {
  switch (k) {
    case SigmaKind::identity: return x;
    case SigmaKind::relu: return x > 0.0 ? x : 0.0;
    case SigmaKind::tanh: return std::tanh(x);
  }
  throw std::logic_error("apply_sigma: bad kind");
}

inline double sigma_lipschitz(SigmaKind) { return 1.0; }
inline double sigma_at_zero(SigmaKind) { return 0.0; }

inline std::string sigma_name(SigmaKind k) {
  switch (k) {
    case SigmaKind::identity: return "identity";
    case SigmaKind::relu: return "relu";
    case SigmaKind::tanh: return "tanh";
  }
  throw std::logic_error("sigma_name: bad kind");
}

inline SigmaKind sigma_from_name(const std::string& s) {
  if (s == "identity") return SigmaKind::identity;
  if (s == "relu") return SigmaKind::relu;
  if (s == "tanh") return SigmaKind::tanh;
  throw std::invalid_argument("unknown sigma kind: " + s);
}

// SplitMix64 step, used to derive independent substream seeds from a base
// seed plus a tag. Stable across platforms.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic variate source. std::uniform_real_distribution and
// std::normal_distribution are implementation-defined, so the transforms are
// spelled out here to make streams reproducible from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform on [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; one fresh pair per two calls.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  Eigen::VectorXd uniform_vec(int n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

  Eigen::VectorXd normal_vec(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Eigen::MatrixXd normal_mat(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  Eigen::MatrixXd uniform_mat(int rows, int cols, double lo, double hi) {
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = uniform(lo, hi);
    return m;
  }

  // Index draw from a cumulative probability table (last entry ~ 1).
  int categorical(const std::vector<double>& cum) {
    const double u = uniform01();
    for (std::size_t i = 0; i < cum.size(); ++i)
      if (u < cum[i]) return static_cast<int>(i);
    return static_cast<int>(cum.size()) - 1;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Holder conjugate: 1/p + 1/q = 1, with p=1 -> q=inf and vice versa.
inline double holder_conjugate(double p) {
  require(p >= 1.0, "holder_conjugate: p must be >= 1");
  if (std::isinf(p)) return 1.0;
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  return p / (p - 1.0);
}

}  // namespace resbarron
