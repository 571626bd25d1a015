#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <limits>
#include <vector>

#include "json.hpp"
#include "resbarron/barron.hpp"
#include "resbarron/common.hpp"
#include "resbarron/esn.hpp"

namespace resbarron::elm {

enum class ProductDist { gaussian, uniform };

// Zero-mean product distribution over (w, a, c, b); each block is IID with
// the given per-coordinate standard deviation (uniform uses the matched
// half-width sqrt(3) * std).
struct ProductSpec {
  ProductDist dist = ProductDist::gaussian;
  double std_w = 1.0;
  double std_a = 1.0;
  double std_c = 1.0;
  double std_b = 1.0;

  void validate() const {
    require(std_w >= 0.0 && std_a >= 0.0 && std_c >= 0.0 && std_b >= 0.0,
            "ProductSpec: standard deviations must be >= 0");
  }
};

// Sampling measure for ELM features. atomic draws atoms of a fixed measure;
// product draws from a ProductSpec; mixture draws the atomic part with
// probability delta_tilde and the product base otherwise (this is the only
// absolutely-continuous-looking choice under which an atomic target still
// has a density, with importance ratio capped by kappa = 1/delta_tilde).
struct NuSpec {
  enum class Kind { atomic, product, mixture };
  Kind kind = Kind::product;
  barron::AtomicMeasure atoms;  // atomic / mixture
  ProductSpec base;             // product / mixture
  double delta_tilde = 0.0;     // mixture

  void validate(int N_res, int d) const {
    if (kind != Kind::product) {
      atoms.validate();
      require(atoms.N == N_res && atoms.d == d, "NuSpec: atom dimensions");
    }
    if (kind != Kind::atomic) base.validate();
    if (kind == Kind::mixture)
      require(delta_tilde > 0.0 && delta_tilde <= 1.0,
              "NuSpec: delta_tilde must be in (0,1]");
  }
};

// Second moments of each parameter block under nu, and the sup of |w| on its
// support (infinite for a gaussian w block). These feed the estimation-error
// constants.
struct NuMoments {
  double Ew2 = 0.0;
  double Ea2 = 0.0;  // E ||a||_2^2
  double Ec2 = 0.0;
  double Eb2 = 0.0;
  double w_sup = 0.0;
};

inline NuMoments moments(const NuSpec& nu, int N_res, int d) {
  nu.validate(N_res, d);
  auto atomic_part = [&]() {
    NuMoments m;
    for (const auto& at : nu.atoms.atoms) {
      m.Ew2 += at.p * at.w * at.w;
      m.Ea2 += at.p * at.a.squaredNorm();
      m.Ec2 += at.p * at.c.squaredNorm();
      m.Eb2 += at.p * at.b * at.b;
      m.w_sup = std::max(m.w_sup, std::abs(at.w));
    }
    return m;
  };
  auto product_part = [&]() {
    NuMoments m;
    m.Ew2 = nu.base.std_w * nu.base.std_w;
    m.Ea2 = N_res * nu.base.std_a * nu.base.std_a;
    m.Ec2 = d * nu.base.std_c * nu.base.std_c;
    m.Eb2 = nu.base.std_b * nu.base.std_b;
    m.w_sup = nu.base.dist == ProductDist::gaussian
                  ? std::numeric_limits<double>::infinity()
                  : std::sqrt(3.0) * nu.base.std_w;
    return m;
  };
  if (nu.kind == NuSpec::Kind::atomic) return atomic_part();
  if (nu.kind == NuSpec::Kind::product) return product_part();
  const NuMoments ma = atomic_part(), mp = product_part();
  const double dt = nu.delta_tilde;
  return {dt * ma.Ew2 + (1.0 - dt) * mp.Ew2,
          dt * ma.Ea2 + (1.0 - dt) * mp.Ea2,
          dt * ma.Ec2 + (1.0 - dt) * mp.Ec2,
          dt * ma.Eb2 + (1.0 - dt) * mp.Eb2,
          std::max(ma.w_sup, mp.w_sup)};
}

struct Feature {
  double w = 0.0;
  Eigen::VectorXd a;
  Eigen::VectorXd c;
  double b = 0.0;
};

// Random feature bank: features drawn IID from nu, plus the stacked readin
// matrices so a whole feature vector is one matrix-vector product.
struct FeatureBank {
  std::vector<Feature> features;
  Eigen::MatrixXd Amat;  // count x N_res
  Eigen::MatrixXd Cmat;  // count x d
  Eigen::VectorXd bvec;  // count
  SigmaKind sigma2 = SigmaKind::relu;
  NuSpec nu;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(Amat.rows()); }
  int N_res() const { return static_cast<int>(Amat.cols()); }
  int d() const { return static_cast<int>(Cmat.cols()); }

  // phi_i = sigma2(a_i . x + c_i . z0 + b_i)
  Eigen::VectorXd feature_map(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& z0) const {
    require(x.size() == N_res(), "feature_map: state dimension");
    require(z0.size() == d(), "feature_map: input dimension");
    Eigen::VectorXd phi = Amat * x + Cmat * z0 + bvec;
    for (int i = 0; i < phi.size(); ++i) phi[i] = apply_sigma(sigma2, phi[i]);
    return phi;
  }
};

// Draw order per feature is frozen for reproducibility: mixture branch draw
// (when applicable), then w, a, c, b. Atomic draws consume one categorical
// draw and copy the atom bitwise.
inline std::vector<Feature> sample_features(const NuSpec& nu, int count,
                                            int N_res, int d,
                                            std::uint64_t seed) {
  nu.validate(N_res, d);
  require(count >= 1, "sample_features: count must be >= 1");
  Rng rng(mix_seed(seed, 0xe1f));
  std::vector<double> cum;
  if (nu.kind != NuSpec::Kind::product) {
    double s = 0.0;
    for (const auto& at : nu.atoms.atoms) cum.push_back(s += at.p);
  }
  std::vector<Feature> feats;
  feats.reserve(count);
  for (int i = 0; i < count; ++i) {
    bool from_atoms = nu.kind == NuSpec::Kind::atomic;
    if (nu.kind == NuSpec::Kind::mixture)
      from_atoms = rng.uniform01() < nu.delta_tilde;
    Feature f;
    if (from_atoms) {
      const auto& at = nu.atoms.atoms[static_cast<std::size_t>(
          rng.categorical(cum))];
      f.w = at.w;
      f.a = at.a;
      f.c = at.c;
      f.b = at.b;
    } else {
      const auto& sp = nu.base;
      auto draw = [&](double std) {
        if (sp.dist == ProductDist::gaussian) return std * rng.normal();
        const double hw = std::sqrt(3.0) * std;
        return rng.uniform(-hw, hw);
      };
      f.w = draw(sp.std_w);
      f.a.resize(N_res);
      for (int k = 0; k < N_res; ++k) f.a[k] = draw(sp.std_a);
      f.c.resize(d);
      for (int k = 0; k < d; ++k) f.c[k] = draw(sp.std_c);
      f.b = draw(sp.std_b);
    }
    feats.push_back(std::move(f));
  }
  return feats;
}

inline FeatureBank make_feature_bank(const NuSpec& nu, int count, int N_res,
                                     int d, SigmaKind sigma2,
                                     std::uint64_t seed) {
  FeatureBank bank;
  bank.features = sample_features(nu, count, N_res, d, seed);
  bank.Amat.resize(count, N_res);
  bank.Cmat.resize(count, d);
  bank.bvec.resize(count);
  for (int i = 0; i < count; ++i) {
    bank.Amat.row(i) = bank.features[i].a.transpose();
    bank.Cmat.row(i) = bank.features[i].c.transpose();
    bank.bvec[i] = bank.features[i].b;
  }
  bank.sigma2 = sigma2;
  bank.nu = nu;
  bank.seed = seed;
  return bank;
}

namespace detail {
// Point mass a measure puts on an exact parameter tuple. Features sampled
// from an atomic branch are bitwise copies of atoms, so exact float equality
// is the correct matching rule; duplicated atoms accumulate.
inline double atom_mass(const barron::AtomicMeasure& m, const Feature& f) {
  double s = 0.0;
  for (const auto& at : m.atoms)
    if (at.w == f.w && at.b == f.b && at.a == f.a && at.c == f.c) s += at.p;
  return s;
}
}  // namespace detail

// Radon-Nikodym derivative d mu_tilde / d nu at a sampled feature. Defined
// only when nu has an atomic component; product draws under a mixture have
// ratio zero because mu_tilde is purely atomic.
inline double density_ratio(const barron::AtomicMeasure& mu_tilde,
                            const NuSpec& nu, const Feature& f) {
  if (nu.kind == NuSpec::Kind::product)
    throw std::invalid_argument(
        "density_ratio: atomic target has no density under a pure product "
        "sampling measure; mix in the atoms first");
  const double q = detail::atom_mass(nu.atoms, f);
  if (nu.kind == NuSpec::Kind::atomic) {
    require(q > 0.0, "density_ratio: feature is not an atom of the sampling "
                     "measure");
    return detail::atom_mass(mu_tilde, f) / q;
  }
  if (q == 0.0) return 0.0;  // product-branch draw
  return detail::atom_mass(mu_tilde, f) / (nu.delta_tilde * q);
}

// Monte Carlo readout W_i = w_i / count * (d mu_tilde / d nu)(feature_i):
// E[sum_i W_i sigma2(a_i.x + c_i.z0 + b_i)] recovers the target functional
// exactly, for any nu the ratio is defined under.
inline Eigen::VectorXd importance_readout(const FeatureBank& bank,
                                          const barron::AtomicMeasure& mu_tilde) {
  require(mu_tilde.N == bank.N_res() && mu_tilde.d == bank.d(),
          "importance_readout: measure dimensions");
  Eigen::VectorXd W(bank.count());
  for (int i = 0; i < bank.count(); ++i)
    W[i] = bank.features[i].w / bank.count() *
           density_ratio(mu_tilde, bank.nu, bank.features[i]);
  return W;
}

struct MixResult {
  NuSpec nu;
  double delta_tilde = 0.0;
  double kappa = 0.0;    // 1 / delta_tilde, importance-ratio cap
  double W1_hat = 0.0;   // upper bound on W_1(nu0, mu_tilde)
};

// Mixes the atoms of a target measure into a product base so the target has
// a bounded density. The mixing weight is delta scaled down by an upper
// bound on the Wasserstein-1 distance between base and atoms: under the
// independent coupling W_1 <= E||X|| + E||Y|| <= sqrt(E||X||^2) + sum_k p_k
// ||theta_k||_2 with theta = (w, a, c, b) stacked.
inline MixResult mix_measures(const ProductSpec& nu0,
                              const barron::AtomicMeasure& mu_tilde,
                              double delta) {
  nu0.validate();
  mu_tilde.validate();
  require(delta > 0.0 && delta <= 1.0, "mix_measures: delta must be in (0,1]");
  const double m2 = nu0.std_w * nu0.std_w + mu_tilde.N * nu0.std_a * nu0.std_a +
                    mu_tilde.d * nu0.std_c * nu0.std_c + nu0.std_b * nu0.std_b;
  double amass = 0.0;
  for (const auto& at : mu_tilde.atoms)
    amass += at.p * std::sqrt(at.w * at.w + at.a.squaredNorm() +
                              at.c.squaredNorm() + at.b * at.b);
  const double W1 = std::sqrt(m2) + amass;
  const double dt = delta / std::max(1.0, W1);
  NuSpec nu;
  nu.kind = NuSpec::Kind::mixture;
  nu.atoms = mu_tilde;
  nu.base = nu0;
  nu.delta_tilde = dt;
  return {std::move(nu), dt, 1.0 / dt, W1};
}

struct RowFit {
  double gamma = 0.0;         // ridge multiplier (0 when interior)
  bool boundary = false;      // constraint active
  double kkt_residual = 0.0;  // || Phi^T (Phi w - y) + gamma w ||
  double norm = 0.0;          // || w ||_2
};

struct FitResult {
  Eigen::MatrixXd W;  // m x count, one readout row per output coordinate
  std::vector<RowFit> rows;
};

// Norm-constrained least squares per output row:
//   min || Phi w - y ||^2  s.t.  || w ||_2 <= R.
// One SVD of Phi is shared across rows. If the min-norm solution fits the
// ball it is returned with gamma = 0; otherwise the KKT system is the ridge
// solution w(gamma) with || w(gamma) || = R, found by bisection on the
// strictly decreasing map gamma -> || w(gamma) ||^2.
inline FitResult fit(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& Y,
                     double R) {
  require(R > 0.0, "fit: R must be > 0");
  require(Phi.rows() == Y.cols(), "fit: Phi rows must match Y columns");
  require(Phi.allFinite() && Y.allFinite(), "fit: non-finite inputs");
  const int m = static_cast<int>(Y.rows());
  const int Nf = static_cast<int>(Phi.cols());

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Phi,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = (sv.size() ? sv(0) : 0.0) * 1e-14;

  FitResult out;
  out.W.resize(m, Nf);
  out.rows.resize(m);
  for (int r = 0; r < m; ++r) {
    const Eigen::VectorXd y = Y.row(r).transpose();
    const Eigen::VectorXd beta = svd.matrixU().transpose() * y;

    Eigen::VectorXd coef = Eigen::VectorXd::Zero(sv.size());
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > cutoff) coef(i) = beta(i) / sv(i);
    Eigen::VectorXd w = svd.matrixV() * coef;

    RowFit rf;
    if (w.norm() > R) {
      const auto norm2_at = [&](double g) {
        double s = 0.0;
        for (int i = 0; i < sv.size(); ++i) {
          if (sv(i) == 0.0) continue;
          const double t = sv(i) * beta(i) / (sv(i) * sv(i) + g);
          s += t * t;
        }
        return s;
      };
      double hi = 1.0;
      while (norm2_at(hi) > R * R) hi *= 2.0;
      double lo = 0.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (norm2_at(mid) > R * R ? lo : hi) = mid;
      }
      rf.gamma = hi;
      rf.boundary = true;
      for (int i = 0; i < sv.size(); ++i)
        coef(i) = sv(i) == 0.0
                      ? 0.0
                      : sv(i) * beta(i) / (sv(i) * sv(i) + rf.gamma);
      w = svd.matrixV() * coef;
    }
    rf.kkt_residual =
        (Phi.transpose() * (Phi * w - y) + rf.gamma * w).norm();
    rf.norm = w.norm();
    out.W.row(r) = w.transpose();
    out.rows[r] = rf;
  }
  return out;
}

// Trained reservoir model: features read the reservoir state and the newest
// input, the linear readout W maps features to outputs.
struct EsnElmModel {
  esn::EsnParams reservoir;
  FeatureBank bank;
  Eigen::MatrixXd W;  // m x count

  int output_dim() const { return static_cast<int>(W.rows()); }
};

inline Eigen::VectorXd predict(const EsnElmModel& model, const seq::Window& w) {
  require(w.len() >= 1, "predict: empty window");
  require(w.dim() == model.reservoir.d(), "predict: window dimension");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(model.reservoir.N());
  if (w.len() > 1)
    x = model.reservoir.system.run_last(seq::Window(w.z.leftCols(w.len() - 1)));
  return model.W * model.bank.feature_map(x, w.newest());
}

// Memoryless prediction from the newest input alone; only valid when every
// feature ignores the state.
inline Eigen::VectorXd static_predict(const FeatureBank& bank,
                                      const Eigen::MatrixXd& W,
                                      const Eigen::VectorXd& z0) {
  for (const auto& f : bank.features)
    require(f.a.isZero(0.0), "static_predict: features depend on the state");
  return W * bank.feature_map(Eigen::VectorXd::Zero(bank.N_res()), z0);
}

inline nlohmann::json product_to_json(const ProductSpec& p) {
  return {{"dist", p.dist == ProductDist::gaussian ? "gaussian" : "uniform"},
          {"std_w", p.std_w},
          {"std_a", p.std_a},
          {"std_c", p.std_c},
          {"std_b", p.std_b}};
}

inline ProductSpec product_from_json(const nlohmann::json& j) {
  ProductSpec p;
  const std::string d = j.at("dist");
  require(d == "gaussian" || d == "uniform",
          "product_from_json: unknown dist " + d);
  p.dist = d == "gaussian" ? ProductDist::gaussian : ProductDist::uniform;
  p.std_w = j.at("std_w").get<double>();
  p.std_a = j.at("std_a").get<double>();
  p.std_c = j.at("std_c").get<double>();
  p.std_b = j.at("std_b").get<double>();
  p.validate();
  return p;
}

inline nlohmann::json nu_to_json(const NuSpec& nu) {
  nlohmann::json j;
  switch (nu.kind) {
    case NuSpec::Kind::atomic:
      j["kind"] = "atomic";
      j["atoms"] = barron::measure_to_json(nu.atoms);
      break;
    case NuSpec::Kind::product:
      j["kind"] = "product";
      j["base"] = product_to_json(nu.base);
      break;
    case NuSpec::Kind::mixture:
      j["kind"] = "mixture";
      j["atoms"] = barron::measure_to_json(nu.atoms);
      j["base"] = product_to_json(nu.base);
      j["delta_tilde"] = nu.delta_tilde;
      break;
  }
  return j;
}

inline NuSpec nu_from_json(const nlohmann::json& j) {
  NuSpec nu;
  const std::string kind = j.at("kind");
  if (kind == "atomic") {
    nu.kind = NuSpec::Kind::atomic;
    nu.atoms = barron::measure_from_json(j.at("atoms"));
  } else if (kind == "product") {
    nu.kind = NuSpec::Kind::product;
    nu.base = product_from_json(j.at("base"));
  } else if (kind == "mixture") {
    nu.kind = NuSpec::Kind::mixture;
    nu.atoms = barron::measure_from_json(j.at("atoms"));
    nu.base = product_from_json(j.at("base"));
    nu.delta_tilde = j.at("delta_tilde").get<double>();
  } else {
    throw std::invalid_argument("nu_from_json: unknown kind " + kind);
  }
  return nu;
}

}  // namespace resbarron::elm
