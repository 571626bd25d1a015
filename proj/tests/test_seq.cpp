#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "resbarron/seq.hpp"

using namespace resbarron;

TEST_CASE("window indexing and norms") {
  Eigen::MatrixXd Z(2, 3);
  Z << 1.0, 2.0, 3.0, -4.0, 5.0, -6.0;
  seq::Window w(Z);
  REQUIRE(w.len() == 3);
  REQUIRE(w.dim() == 2);
  REQUIRE(w.newest() == Z.col(2));
  REQUIRE(w.at_time(0) == Z.col(2));
  REQUIRE(w.at_time(-2) == Z.col(0));
  REQUIRE_THROWS_AS(w.at_time(1), std::invalid_argument);
  REQUIRE_THROWS_AS(w.at_time(-3), std::invalid_argument);

  // Flattened p-norms against hand-computed values.
  REQUIRE(seq::window_norm(w, 1.0) == Catch::Approx(21.0).epsilon(1e-14));
  REQUIRE(seq::window_norm(w, 2.0) ==
          Catch::Approx(std::sqrt(1 + 4 + 9 + 16 + 25 + 36)).epsilon(1e-14));
  const double inf = std::numeric_limits<double>::infinity();
  REQUIRE(seq::window_norm(w, inf) == 6.0);
}

TEST_CASE("vector p-norms match closed forms") {
  Eigen::VectorXd v(3);
  v << 3.0, -4.0, 0.0;
  REQUIRE(seq::vec_pnorm(v, 1.0) == 7.0);
  REQUIRE(seq::vec_pnorm(v, 2.0) == 5.0);
  const double inf = std::numeric_limits<double>::infinity();
  REQUIRE(seq::vec_pnorm(v, inf) == 4.0);
  REQUIRE(seq::vec_pnorm(v, 3.0) ==
          Catch::Approx(std::pow(27.0 + 64.0, 1.0 / 3.0)).epsilon(1e-14));
  REQUIRE_THROWS_AS(seq::vec_pnorm(v, 0.5), std::invalid_argument);
}

TEST_CASE("suffix windows walk backward from the newest sample") {
  seq::TrajectoryDataset ds;
  ds.Z = Eigen::MatrixXd::Random(1, 5);
  ds.Y = Eigen::MatrixXd::Random(1, 5);
  REQUIRE(seq::suffix_window(ds, 0).len() == 5);
  REQUIRE(seq::suffix_window(ds, 4).len() == 1);
  REQUIRE(seq::suffix_window(ds, 2).newest() == ds.Z.col(2));
  REQUIRE_THROWS_AS(seq::suffix_window(ds, 5), std::invalid_argument);
}

TEST_CASE("washout length is the minimal decay count") {
  const int L = seq::washout_length(0.5, 1e-9);
  REQUIRE(std::pow(0.5, L) <= 1e-9);
  REQUIRE(std::pow(0.5, L - 1) > 1e-9);
  REQUIRE_THROWS_AS(seq::washout_length(1.0, 1e-9), std::invalid_argument);
}

TEST_CASE("iid generator: bounds, shape, determinism, substreams") {
  seq::ProcessGenerator g;
  g.d = 3;
  g.M = 2.5;
  g.seed = 42;
  const Eigen::MatrixXd Z = g.inputs(100, 7);
  REQUIRE(Z.rows() == 3);
  REQUIRE(Z.cols() == 100);
  REQUIRE(Z.cwiseAbs().maxCoeff() <= 2.5);
  REQUIRE(Z == g.inputs(100, 7));           // bitwise reproducible
  REQUIRE(Z != g.inputs(100, 8));           // independent substream
  REQUIRE(Z != g.with_seed(43).inputs(100, 7));
}

TEST_CASE("bernoulli shift: bounds, truncation tail, dependence constant") {
  seq::ProcessGenerator g;
  g.kind = seq::ProcessGenerator::Kind::bernoulli_shift_ma;
  g.d = 2;
  g.M = 1.0;
  g.lambda_dep = 0.5;
  g.seed = 3;
  const Eigen::MatrixXd Z = g.inputs(500, 1);
  REQUIRE(Z.cwiseAbs().maxCoeff() <= 1.0);
  REQUIRE(Z == g.inputs(500, 1));

  // Discarded MA tail: sum_{k > K} lambda^k = lambda^{K+1}/(1-lambda).
  const int K = g.ma_order();
  REQUIRE(std::pow(0.5, K + 1) / 0.5 <= 1e-12);
  REQUIRE(std::pow(0.5, K) / 0.5 > 1e-12);

  // theta_constant = sqrt(d * (2/3) / (1 - lambda^2)).
  REQUIRE(g.theta_constant() ==
          Catch::Approx(std::sqrt(2.0 * (2.0 / 3.0) / 0.75)).epsilon(1e-14));
  seq::ProcessGenerator iid;
  REQUIRE(iid.theta_constant() == 0.0);
}

namespace {
// Independent quadrature oracle for the coupling coefficient of the
// unclipped scalar MA process: D = sum_{k=tau}^{K} lambda^k (xi_k - xi'_k)
// with xi iid uniform[-1,1] has characteristic function
// prod_k sinc^2(lambda^k t), and for symmetric D
//   E|D| = (2/pi) * integral_0^inf (1 - cf(t)) / t^2 dt.
double theta_quadrature(double lambda, int tau, int K) {
  const auto cf = [&](double t) {
    double c = 1.0;
    double lk = std::pow(lambda, tau);
    for (int k = tau; k <= K; ++k) {
      const double u = lk * t;
      const double s = u == 0.0 ? 1.0 : std::sin(u) / u;
      c *= s * s;
      lk *= lambda;
    }
    return c;
  };
  const double T0 = 200.0;
  const int steps = 200000;  // Simpson panels over [0, T0]
  const double h = T0 / steps;
  const auto f = [&](double t) {
    if (t < 1e-9) {  // integrand limit (2/3) * sum lambda^{2k}
      double s = 0.0, l2 = std::pow(lambda, 2.0 * tau);
      for (int k = tau; k <= K; ++k) {
        s += l2;
        l2 *= lambda * lambda;
      }
      return (2.0 / 3.0) * s;
    }
    return (1.0 - cf(t)) / (t * t);
  };
  double acc = f(0.0) + f(T0);
  for (int i = 1; i < steps; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  const double integral = acc * h / 3.0;
  return (2.0 / M_PI) * (integral + 1.0 / T0);  // tail: 1 - cf ~ 1 beyond T0
}
}  // namespace

TEST_CASE("coupling estimate matches the characteristic-function oracle") {
  seq::ProcessGenerator g;
  g.kind = seq::ProcessGenerator::Kind::bernoulli_shift_ma;
  g.d = 1;
  g.M = 10.0;  // clipping inactive: |sum| <= 1/(1-lambda) = 2
  g.lambda_dep = 0.5;
  const int tau = 2;
  const auto est = seq::estimate_theta(g, tau, 200000, 99);
  const double oracle = theta_quadrature(0.5, tau, g.ma_order());
  REQUIRE(std::abs(est.value - oracle) <= 4.0 * est.std_error + 1e-4);
  // Geometric envelope from the dependence constant.
  REQUIRE(est.value <= g.theta_constant() * std::pow(0.5, tau));
}

TEST_CASE("coupling estimate is zero for iid inputs") {
  seq::ProcessGenerator g;
  const auto est = seq::estimate_theta(g, 3, 10, 1);
  REQUIRE(est.value == 0.0);
  REQUIRE(est.std_error == 0.0);
}

TEST_CASE("labelled generation: target plus bounded noise, reproducible") {
  seq::ProcessGenerator g;
  g.d = 2;
  g.seed = 11;
  const auto target = [](const seq::Window& w) {
    return Eigen::VectorXd::Constant(1, w.newest().sum());
  };
  const auto clean = seq::generate_with(g, 50, 1, target, 0.0);
  for (int j = 0; j < 50; ++j)
    REQUIRE(clean.Y(0, j) == clean.Z.col(j).sum());

  const double s = 0.1;
  const auto noisy =
      seq::generate_with(g, 50, 1, target, s, seq::NoiseKind::uniform);
  REQUIRE(noisy.Z == clean.Z);  // same input stream
  for (int j = 0; j < 50; ++j)
    REQUIRE(std::abs(noisy.Y(0, j) - clean.Y(0, j)) <= std::sqrt(3.0) * s);

  const auto again =
      seq::generate_with(g, 50, 1, target, s, seq::NoiseKind::uniform);
  REQUIRE(again.Y == noisy.Y);
}

TEST_CASE("trajectory CSV round trip is exact") {
  seq::TrajectoryDataset ds;
  ds.Z = Eigen::MatrixXd::Random(3, 17);
  ds.Y = Eigen::MatrixXd::Random(2, 17);
  ds.Z(0, 0) = 1.0 / 3.0;  // not exactly representable in decimal
  const std::string path =
      (std::filesystem::temp_directory_path() / "resbarron_seq_rt.csv").string();
  seq::write_csv(ds, path);
  const auto back = seq::read_csv(path);
  REQUIRE(back.Z == ds.Z);  // %.17g preserves doubles bitwise
  REQUIRE(back.Y == ds.Y);
  std::remove(path.c_str());
}
