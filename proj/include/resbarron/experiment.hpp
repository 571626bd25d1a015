#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "resbarron/barron.hpp"
#include "resbarron/bounds.hpp"
#include "resbarron/common.hpp"
#include "resbarron/elm.hpp"
#include "resbarron/esn.hpp"
#include "resbarron/learn.hpp"
#include "resbarron/seq.hpp"
#include "resbarron/system.hpp"

namespace resbarron::expt {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One CSV row; fields that do not apply to a sweep stay NaN. runtime_ms is
// only recorded when the config opts in, so that default runs are bitwise
// reproducible.
struct ResultRow {
  std::string sweep;
  std::uint64_t seed = 0;
  double N = kNaN;
  double n = kNaN;
  double R = kNaN;
  double emp_risk = kNaN;
  double gen_err = kNaN;
  double gen_err_se = kNaN;
  double bound_total = kNaN;
  double runtime_ms = kNaN;
};

inline std::string csv_header() {
  return "sweep,seed,N,n,R,emp_risk,gen_err,gen_err_se,bound_total,runtime_ms";
}

inline std::string row_to_csv(const ResultRow& r) {
  using seq::detail::fmt17;
  std::ostringstream os;
  os << r.sweep << ',' << r.seed << ',' << fmt17(r.N) << ',' << fmt17(r.n)
     << ',' << fmt17(r.R) << ',' << fmt17(r.emp_risk) << ',' << fmt17(r.gen_err)
     << ',' << fmt17(r.gen_err_se) << ',' << fmt17(r.bound_total) << ','
     << fmt17(r.runtime_ms);
  return os.str();
}

inline void write_rows(const std::vector<ResultRow>& rows,
                       const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_rows: cannot open " + path);
  out << csv_header() << '\n';
  for (const auto& r : rows) out << row_to_csv(r) << '\n';
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;  // standard error of the slope
  int points = 0;
};

inline SlopeFit fit_slope(const std::vector<double>& x,
                          const std::vector<double>& y) {
  require(x.size() == y.size(), "fit_slope: size mismatch");
  const int n = static_cast<int>(x.size());
  require(n >= 3, "fit_slope: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, "fit_slope: x values are all equal");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    rss += e * e;
  }
  f.std_error = n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
  f.points = n;
  return f;
}

// Slope of log y against log x (power-law exponent).
inline SlopeFit fit_loglog(const std::vector<double>& x,
                           const std::vector<double>& y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "fit_loglog: values must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return fit_slope(lx, ly);
}

// Slope of log y against x (log of a geometric decay rate).
inline SlopeFit fit_semilog(const std::vector<double>& x,
                            const std::vector<double>& y) {
  std::vector<double> ly(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(y[i] > 0.0, "fit_semilog: values must be positive");
    ly[i] = std::log(y[i]);
  }
  return fit_slope(x, ly);
}

// Runs fn(0..num_tasks-1) on up to `threads` workers. Each task owns its
// output slot, so results are in task order regardless of scheduling.
inline void parallel_for(int num_tasks, int threads,
                         const std::function<void(int)>& fn) {
  require(num_tasks >= 0, "parallel_for: negative task count");
  if (threads <= 1 || num_tasks <= 1) {
    for (int i = 0; i < num_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  const int workers = std::min(threads, num_tasks);
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < num_tasks;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Random atomic targets for experiments: mild weights, unit-scale readins.
inline barron::AtomicMeasure random_atomic_measure(int count, int N_res, int d,
                                                   std::uint64_t seed) {
  require(count >= 1, "random_atomic_measure: count must be >= 1");
  Rng rng(mix_seed(seed, 0xa70));
  barron::AtomicMeasure mu;
  mu.N = N_res;
  mu.d = d;
  std::vector<double> praw(count);
  double psum = 0.0;
  for (int i = 0; i < count; ++i) psum += praw[i] = rng.uniform(0.5, 1.5);
  for (int i = 0; i < count; ++i) {
    barron::Atom at;
    at.p = praw[i] / psum;
    at.w = rng.uniform(-2.0, 2.0);
    at.a = rng.normal_vec(N_res) / std::sqrt(double(N_res));
    at.c = rng.normal_vec(d) / std::sqrt(double(d));
    at.b = rng.uniform(-0.5, 0.5);
    mu.atoms.push_back(std::move(at));
  }
  mu.validate();
  return mu;
}

// Static atoms: state readin pinned to zero (dummy 1-dim state).
inline barron::AtomicMeasure random_static_measure(int count, int d,
                                                   std::uint64_t seed) {
  barron::AtomicMeasure mu = random_atomic_measure(count, 1, d, seed);
  for (auto& at : mu.atoms) at.a.setZero();
  return mu;
}

// Filter taps h (column k = lag-k tap). Either explicit, or geometric
// tap0 * decay^k times a per-lag direction (deterministic from seed when
// given, uniform 1/sqrt(d) otherwise).
inline Eigen::MatrixXd filter_from_json(const nlohmann::json& j) {
  if (j.contains("taps_explicit")) return sys::matrix_from_json(j.at("taps_explicit"));
  const int d = j.value("d", 1);
  const int taps = j.at("taps").get<int>();
  const double tap0 = j.at("tap0").get<double>();
  const double decay = j.at("decay").get<double>();
  require(d >= 1 && taps >= 1, "filter_from_json: bad dimensions");
  Eigen::MatrixXd h(d, taps);
  std::optional<Rng> rng;
  if (j.contains("seed")) rng.emplace(mix_seed(j.at("seed").get<std::uint64_t>(), 0xf17));
  double mag = tap0;
  for (int k = 0; k < taps; ++k) {
    Eigen::VectorXd u = rng ? rng->normal_vec(d).normalized()
                            : Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(double(d)));
    h.col(k) = mag * u;
    mag *= decay;
  }
  return h;
}

inline seq::ProcessGenerator gen_from_json(const nlohmann::json& j, int d) {
  seq::ProcessGenerator g;
  const std::string kind = j.value("kind", "iid_uniform");
  if (kind == "iid_uniform") {
    g.kind = seq::ProcessGenerator::Kind::iid_uniform;
  } else if (kind == "bernoulli_shift_ma") {
    g.kind = seq::ProcessGenerator::Kind::bernoulli_shift_ma;
    g.lambda_dep = j.at("lambda_dep").get<double>();
  } else {
    throw std::invalid_argument("gen_from_json: unknown kind " + kind);
  }
  g.d = j.value("d", d);
  g.M = j.value("M", 1.0);
  g.seed = j.value("seed", std::uint64_t{0});
  g.validate();
  return g;
}

inline seq::NoiseKind noise_from_json(const nlohmann::json& j) {
  const std::string k = j.value("kind", "gaussian");
  if (k == "gaussian") return seq::NoiseKind::gaussian;
  if (k == "uniform") return seq::NoiseKind::uniform;
  throw std::invalid_argument("noise_from_json: unknown kind " + k);
}

// sup_z |H(z)| over inputs with ||z_t||_2 <= M, via the certified state
// bound sup ||x|| <= (||C|| M + ||B||) sum_k ||A^k||.
inline double sup_output_bound(const barron::BarronFunctional& H, double M) {
  const double cn = sys::operator_norm(H.system.C());
  const double bn = H.system.B().norm();
  const double xs = (cn * M + bn) * H.system.series_tail(0);
  const double L = sigma_lipschitz(H.sigma2);
  const double s0 = std::abs(sigma_at_zero(H.sigma2));
  double s = 0.0;
  for (const auto& at : H.mu.atoms)
    s += at.p * std::abs(at.w) *
         (L * (at.a.norm() * xs + at.c.norm() * M + std::abs(at.b)) + s0);
  return s;
}

struct RunOutput {
  std::vector<ResultRow> rows;
  nlohmann::json summary;
  std::string printed;  // human-readable tables (bound reports)
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

struct EvalPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd z0;
  double target = 0.0;
};

// Shared evaluation set for feature-count sweeps: reservoir state and newest
// input per window, plus the target value there.
inline std::vector<EvalPoint> make_eval_points(
    const barron::BarronFunctional& H, const seq::ProcessGenerator& gen,
    int num_windows, double washout_tol = 1e-9) {
  const int L = learn::system_washout(H.system, washout_tol) + 1;
  std::vector<EvalPoint> pts(num_windows);
  for (int s = 0; s < num_windows; ++s) {
    const Eigen::MatrixXd Z = gen.inputs(L, static_cast<std::uint64_t>(s) + 1);
    EvalPoint p;
    p.x = H.system.run_last(seq::Window(Z.leftCols(L - 1)));
    p.z0 = Z.col(L - 1);
    p.target = H.readout(p.x, p.z0);
    pts[s] = std::move(p);
  }
  return pts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// mc-rate: importance-readout RMS error vs feature count, atomic nu = mu.
// ---------------------------------------------------------------------------
inline RunOutput run_mc_rate(const nlohmann::json& cfg, int threads) {
  const auto& jr = cfg.at("reservoir");
  auto reservoir = esn::sample(
      jr.at("N").get<int>(), jr.at("d").get<int>(),
      jr.at("target_norm").get<double>(), esn::dist_from_name(jr.value("dist", "gaussian")),
      jr.at("seed").get<std::uint64_t>());
  const SigmaKind sigma2 = sigma_from_name(cfg.value("sigma2", "relu"));
  const auto& jt = cfg.at("target");
  const auto mu = random_atomic_measure(jt.at("atoms").get<int>(), reservoir.N(),
                                        reservoir.d(), jt.at("seed").get<std::uint64_t>());
  const barron::BarronFunctional H{reservoir.system, mu, sigma2, std::nullopt};

  const auto& je = cfg.at("eval");
  seq::ProcessGenerator gen;
  gen.d = reservoir.d();
  gen.M = je.value("M", 1.0);
  gen.seed = je.at("window_seed").get<std::uint64_t>();
  const auto pts = detail::make_eval_points(H, gen, je.at("num_windows").get<int>());

  const std::vector<int> counts = cfg.at("feature_counts").get<std::vector<int>>();
  const int num_seeds = cfg.at("feature_seeds").get<int>();
  const std::uint64_t seed_base = cfg.value("feature_seed_base", std::uint64_t{100});
  const bool record_rt = cfg.value("record_runtime", false);

  elm::NuSpec nu;
  nu.kind = elm::NuSpec::Kind::atomic;
  nu.atoms = mu;

  const int tasks = static_cast<int>(counts.size()) * num_seeds;
  std::vector<ResultRow> rows(tasks);
  parallel_for(tasks, threads, [&](int t) {
    const auto t0 = std::chrono::steady_clock::now();
    const int ci = t / num_seeds, si = t % num_seeds;
    const int N = counts[ci];
    const std::uint64_t fseed = seed_base + si;
    const auto bank =
        elm::make_feature_bank(nu, N, reservoir.N(), reservoir.d(), sigma2, fseed);
    const Eigen::VectorXd W = elm::importance_readout(bank, mu);
    double sq = 0.0;
    for (const auto& p : pts) {
      const double e = W.dot(bank.feature_map(p.x, p.z0)) - p.target;
      sq += e * e;
    }
    ResultRow r;
    r.sweep = "mc-rate";
    r.seed = fseed;
    r.N = N;
    r.gen_err = std::sqrt(sq / pts.size());
    if (record_rt) r.runtime_ms = detail::elapsed_ms(t0);
    rows[t] = std::move(r);
  });

  std::vector<double> xs, ys;
  nlohmann::json per_n = nlohmann::json::array();
  for (std::size_t ci = 0; ci < counts.size(); ++ci) {
    double m = 0.0;
    for (int si = 0; si < num_seeds; ++si)
      m += rows[ci * num_seeds + si].gen_err;
    m /= num_seeds;
    xs.push_back(counts[ci]);
    ys.push_back(m);
    per_n.push_back({{"N", counts[ci]}, {"mean_rms", m}});
  }
  const SlopeFit slope = fit_loglog(xs, ys);
  const auto& th = cfg.at("thresholds");
  const bool pass = slope.slope >= th.at("slope_min").get<double>() &&
                    slope.slope <= th.at("slope_max").get<double>();
  RunOutput out;
  out.rows = std::move(rows);
  out.summary = {{"kind", "mc-rate"},
                 {"slope", slope.slope},
                 {"slope_std_error", slope.std_error},
                 {"per_N", per_n},
                 {"thresholds", th},
                 {"pass", pass}};
  return out;
}

// ---------------------------------------------------------------------------
// truncation-decay: |H - H^N| vs truncation bound and per-step decay ratio.
// ---------------------------------------------------------------------------
inline RunOutput run_truncation_decay(const nlohmann::json& cfg, int threads) {
  const Eigen::MatrixXd h = filter_from_json(cfg.at("filter"));
  const double lambda = cfg.at("filter").at("lambda").get<double>();
  const int d = static_cast<int>(h.rows());
  const int N_sys = cfg.at("N_system").get<int>();
  const SigmaKind sigma2 = sigma_from_name(cfg.value("sigma2", "identity"));
  const auto H = barron::make_convolutional(h, lambda, N_sys, sigma2);

  const double M = cfg.at("M").get<double>();
  const double M_euc = std::sqrt(double(d)) * M;
  const double p = cfg.value("p", 2.0);
  const auto& je = cfg.at("eval");
  const int num_windows = je.at("num_windows").get<int>();
  const int L = je.at("window_len").get<int>();
  seq::ProcessGenerator gen;
  gen.d = d;
  gen.M = M;
  gen.seed = je.at("window_seed").get<std::uint64_t>();

  std::vector<seq::Window> windows(num_windows);
  std::vector<double> target(num_windows);
  for (int s = 0; s < num_windows; ++s) {
    windows[s] = seq::Window(gen.inputs(L, static_cast<std::uint64_t>(s) + 1));
    target[s] = H.eval(windows[s]);
  }

  std::vector<int> Ns;
  if (cfg.at("truncate_to").is_array()) {
    Ns = cfg.at("truncate_to").get<std::vector<int>>();
  } else {
    const auto& r = cfg.at("truncate_to");
    for (int N = r.at("from").get<int>(); N <= r.at("to").get<int>(); ++N)
      Ns.push_back(N);
  }
  const double tol = cfg.at("thresholds").value("tolerance", 1e-12);
  const bool record_rt = cfg.value("record_runtime", false);

  std::vector<ResultRow> rows(Ns.size());
  std::vector<double> max_err(Ns.size()), bound(Ns.size());
  parallel_for(static_cast<int>(Ns.size()), threads, [&](int i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto tr = barron::truncate(H, Ns[i], M_euc, p);
    double sq = 0.0, mx = 0.0;
    for (int s = 0; s < num_windows; ++s) {
      const double e = std::abs(tr.functional.eval(windows[s]) - target[s]);
      sq += e * e;
      mx = std::max(mx, e);
    }
    max_err[i] = mx;
    bound[i] = tr.bound;
    ResultRow r;
    r.sweep = "truncation-decay";
    r.N = Ns[i];
    r.gen_err = std::sqrt(sq / num_windows);
    r.bound_total = tr.bound;
    if (record_rt) r.runtime_ms = detail::elapsed_ms(t0);
    rows[i] = std::move(r);
  });

  int violations = 0;
  for (std::size_t i = 0; i < Ns.size(); ++i)
    if (max_err[i] > bound[i] + tol) ++violations;

  // Geometric per-step ratio between consecutive N values (RMS based).
  nlohmann::json ratios = nlohmann::json::array();
  const auto& th = cfg.at("thresholds");
  const double rmin = th.at("ratio_min").get<double>();
  const double rmax = th.at("ratio_max").get<double>();
  bool ratios_ok = true;
  for (std::size_t i = 0; i + 1 < Ns.size(); ++i) {
    const double r0 = rows[i].gen_err, r1 = rows[i + 1].gen_err;
    if (r0 <= 0.0 || r1 <= 0.0) continue;
    const double per_step =
        std::pow(r1 / r0, 1.0 / double(Ns[i + 1] - Ns[i]));
    ratios.push_back({{"from", Ns[i]}, {"to", Ns[i + 1]}, {"per_step", per_step}});
    if (per_step < rmin || per_step > rmax) ratios_ok = false;
  }

  RunOutput out;
  out.rows = std::move(rows);
  out.summary = {{"kind", "truncation-decay"},
                 {"violations", violations},
                 {"ratios", ratios},
                 {"thresholds", th},
                 {"pass", violations == 0 && ratios_ok}};
  return out;
}

// ---------------------------------------------------------------------------
// esn-tail: certified reservoir tail bound vs measured state truncation.
// ---------------------------------------------------------------------------
inline RunOutput run_esn_tail(const nlohmann::json& cfg, int threads) {
  const int trials = cfg.at("trials").get<int>();
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const auto irange = [&](const char* key) {
    const auto& r = cfg.at(key);
    return std::pair<int, int>(r.at(0).get<int>(), r.at(1).get<int>());
  };
  const auto [N_lo, N_hi] = irange("N_range");
  const auto [d_lo, d_hi] = irange("d_range");
  const auto [T_lo, T_hi] = irange("T_range");
  const double norm_lo = cfg.at("norm_range").at(0).get<double>();
  const double norm_hi = cfg.at("norm_range").at(1).get<double>();
  const int extra = cfg.value("extra_len", 60);
  const double M = cfg.value("M", 1.0);
  const double tol = cfg.value("tolerance", 1e-12);
  const auto dist = esn::dist_from_name(cfg.value("dist", "gaussian"));
  const bool record_rt = cfg.value("record_runtime", false);

  std::vector<ResultRow> rows(trials);
  std::vector<double> ratio(trials, 0.0);
  parallel_for(trials, threads, [&](int i) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    auto draw_int = [&](int lo, int hi) {
      return lo + std::min(hi - lo,
                           static_cast<int>(rng.uniform01() * (hi - lo + 1)));
    };
    const int N = draw_int(N_lo, N_hi);
    const int d = draw_int(d_lo, d_hi);
    const double norm = rng.uniform(norm_lo, norm_hi);
    const int T = draw_int(T_lo, T_hi);
    const auto reservoir = esn::sample(
        N, d, norm, dist, mix_seed(seed, 2000 + static_cast<std::uint64_t>(i)));

    seq::ProcessGenerator gen;
    gen.d = d;
    gen.M = M;
    gen.seed = mix_seed(seed, 3000 + static_cast<std::uint64_t>(i));
    const int L = T + extra;
    const Eigen::MatrixXd Z = gen.inputs(L, 0);
    const Eigen::VectorXd x_full = reservoir.system.run_last(seq::Window(Z));
    Eigen::VectorXd x_T = Eigen::VectorXd::Zero(N);
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(N, N);
    for (int k = 0; k < T; ++k) {
      x_T += P * (reservoir.system.C() * Z.col(L - 1 - k) + reservoir.system.B());
      if (k + 1 < T) P = P * reservoir.system.A();
    }
    const double measured = (x_full - x_T).norm();
    const double b = esn::tail_bound(reservoir, std::sqrt(double(d)) * M, T);
    ratio[i] = b > 0.0 ? measured / b : 0.0;
    ResultRow r;
    r.sweep = "esn-tail";
    r.seed = static_cast<std::uint64_t>(i);
    r.N = N;
    r.gen_err = measured;
    r.bound_total = b;
    if (record_rt) r.runtime_ms = detail::elapsed_ms(t0);
    rows[i] = std::move(r);
  });

  int violations = 0;
  double max_ratio = 0.0;
  for (int i = 0; i < trials; ++i) {
    if (rows[i].gen_err > rows[i].bound_total + tol) ++violations;
    max_ratio = std::max(max_ratio, ratio[i]);
  }
  RunOutput out;
  out.rows = std::move(rows);
  out.summary = {{"kind", "esn-tail"},
                 {"violations", violations},
                 {"max_ratio", max_ratio},
                 {"trials", trials},
                 {"pass", violations == 0}};
  return out;
}

// ---------------------------------------------------------------------------
// learn-sweep / bound-dominance: end-to-end pipeline cells.
// ---------------------------------------------------------------------------
namespace detail {

struct CellResult {
  ResultRow row;
  nlohmann::json summary;
  std::string printed;
};

// Merge cell overrides into the base config (shallow: cell keys win).
inline nlohmann::json merge_cell(const nlohmann::json& base,
                                 const nlohmann::json& cell) {
  nlohmann::json merged = base;
  merged.erase("cells");
  for (auto it = cell.begin(); it != cell.end(); ++it)
    merged[it.key()] = it.value();
  return merged;
}

inline CellResult run_learn_cell(const nlohmann::json& cc,
                                 const std::string& sweep_name) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& jt = cc.at("target");
  const Eigen::MatrixXd h = filter_from_json(jt);
  const double lambda0 = jt.at("lambda").get<double>();
  const int d = static_cast<int>(h.rows());
  const int N_sys = jt.contains("N_system")
                        ? jt.at("N_system").get<int>()
                        : std::max(d, d * (static_cast<int>(h.cols()) - 1));
  const SigmaKind tgt_sigma2 = sigma_from_name(jt.value("sigma2", "identity"));
  const auto H = barron::make_convolutional(h, lambda0, N_sys, tgt_sigma2);

  seq::ProcessGenerator gen = gen_from_json(cc.at("gen"), d);
  gen.seed = cc.at("gen_seed").get<std::uint64_t>();
  const double M_euc = std::sqrt(double(d)) * gen.M;

  const auto& jn = cc.at("noise");
  const double noise_std = jn.at("std").get<double>();
  const seq::NoiseKind noise_kind = noise_from_json(jn);

  const auto& jtr = cc.at("train");
  learn::TrainConfig tc;
  tc.reservoir_N = jtr.at("reservoir_N").get<int>();
  tc.d = d;
  tc.feature_count = jtr.value("feature_count", 0);
  tc.esn_dist = esn::dist_from_name(jtr.value("dist", "gaussian"));
  tc.esn_target_norm = jtr.at("target_norm").get<double>();
  tc.R = jtr.at("R").get<double>();
  tc.sigma2 = sigma_from_name(jtr.value("sigma2", "identity"));
  tc.esn_seed = jtr.at("esn_seed").get<std::uint64_t>();
  tc.feature_seed = jtr.at("feature_seed").get<std::uint64_t>();
  tc.drop_washout = jtr.value("drop_washout", false);

  // The reservoir used for measure transport; train() re-derives the same
  // one deterministically from the seeds.
  const auto reservoir = esn::sample(tc.reservoir_N, d, tc.esn_target_norm,
                                     tc.esn_dist, tc.esn_seed);

  nlohmann::json cell_summary;
  double kappa = 1.0;
  std::optional<barron::ToEsnResult> transport;
  std::optional<barron::BarronFunctional> transported_source;
  const auto& jnu = cc.at("nu");
  if (jnu.contains("auto_mixture")) {
    const auto& jm = jnu.at("auto_mixture");
    const double lam_n = jm.at("lambda_norm").get<double>();
    auto Hn = barron::normalize_realization(H, lam_n,
                                            jm.value("series_tol", 1e-8));
    double trunc_extra = 0.0;
    if (Hn.N() > reservoir.N()) {
      auto tr = barron::truncate(Hn, reservoir.N(), M_euc, 2.0);
      trunc_extra = tr.bound;
      Hn = std::move(tr.functional);
    }
    transport = barron::to_esn_coordinates(Hn, reservoir, M_euc);
    auto mix = elm::mix_measures(elm::product_from_json(jm.at("base")),
                                 transport->mu, jm.at("delta").get<double>());
    tc.nu = std::move(mix.nu);
    kappa = mix.kappa;
    transported_source = std::move(Hn);
    cell_summary["mixture"] = {{"delta_tilde", mix.delta_tilde},
                               {"kappa", mix.kappa},
                               {"W1_hat", mix.W1_hat},
                               {"transport_bound", transport->bound},
                               {"truncation_bound", trunc_extra}};
  } else {
    tc.nu = elm::nu_from_json(jnu);
    if (tc.nu.kind == elm::NuSpec::Kind::mixture)
      kappa = 1.0 / tc.nu.delta_tilde;
  }

  const int n = cc.at("n").get<int>();
  const auto ds = barron::generate(gen, n, H, noise_std, noise_kind);
  const auto tm = learn::train(tc, ds);

  const auto& je = cc.at("eval");
  seq::ProcessGenerator eval_gen = gen.with_seed(cc.at("eval_seed").get<std::uint64_t>());
  const auto ge = learn::generalization_error(tm.model, H, eval_gen,
                                              je.at("num_windows").get<int>());

  CellResult res;
  res.row.sweep = sweep_name;
  res.row.seed = gen.seed;
  res.row.N = tm.model.bank.count();
  res.row.n = n;
  res.row.R = tc.R;
  res.row.emp_risk = tm.train_risk;
  res.row.gen_err = ge.mean;
  res.row.gen_err_se = ge.std_error;

  cell_summary["label"] = cc.value("label", "");
  cell_summary["n"] = n;
  cell_summary["gen_err"] = ge.mean;
  cell_summary["gen_err_se"] = ge.std_error;
  cell_summary["emp_risk"] = tm.train_risk;
  cell_summary["window_len"] = ge.window_len;
  cell_summary["noise_variance"] = noise_std * noise_std;

  if (cc.contains("bounds")) {
    require(transport.has_value(),
            "learn cell: bounds need nu.auto_mixture (measure transport)");
    require(noise_kind == seq::NoiseKind::uniform,
            "learn cell: bounds need bounded (uniform) noise");
    const auto& jb = cc.at("bounds");
    const auto mom = elm::moments(tc.nu, tc.reservoir_N, d);
    bounds::BoundInputs bi;
    bi.d = d;
    bi.p = jb.value("p", 2.0);
    bi.L_sigma2 = sigma_lipschitz(tc.sigma2);
    bi.sigma2_zero = sigma_at_zero(tc.sigma2);
    bi.M = M_euc;
    bi.M_tilde = sup_output_bound(H, M_euc) + std::sqrt(3.0) * noise_std;
    bi.lambda = transported_source->shift_lambda;
    bi.normA = sys::operator_norm(H.system.A());
    bi.normC = sys::operator_norm(H.system.C());
    bi.normB_q = seq::vec_pnorm(H.system.B(), holder_conjugate(*bi.p));
    bi.I_mu = transported_source->mu.I_mu(*bi.p);
    bi.I_mu2 = transported_source->mu.I_mu2(*bi.p);
    bi.kappa = kappa;
    bi.normAE = reservoir.norm_A();
    bi.normBE = reservoir.system.B().norm();
    bi.normCE = sys::operator_norm(reservoir.system.C());
    bi.norm_KtLambda = transport->norm_KtLambda;
    bi.N = res.row.N;
    bi.T = reservoir.T();
    bi.n = n;
    bi.R = tc.R;
    bi.r = jb.at("r").get<double>();
    bi.lambda_dep = gen.kind == seq::ProcessGenerator::Kind::bernoulli_shift_ma
                        ? gen.lambda_dep
                        : 0.0;
    bi.C_dep = gen.theta_constant();
    bi.Ea2 = mom.Ea2;
    bi.Ec2 = mom.Ec2;
    bi.Eb2 = mom.Eb2;
    bi.w_sup = mom.w_sup;
    const auto rep = bounds::full_report(bi);
    res.row.bound_total = rep.total;
    cell_summary["bound"] = rep.to_json();
    cell_summary["bound_dominates"] =
        std::sqrt(ge.mean) <= rep.total + 1e-9;
    res.printed = "cell '" + cc.value("label", std::string("?")) + "'\n" +
                  rep.format();
  }

  res.summary = std::move(cell_summary);
  if (cc.value("record_runtime", false))
    res.row.runtime_ms = elapsed_ms(t0);
  return res;
}

}  // namespace detail

inline RunOutput run_learn_sweep(const nlohmann::json& cfg, int threads,
                                 const std::string& kind_name) {
  const auto& cells = cfg.at("cells");
  require(cells.is_array() && !cells.empty(), "learn-sweep: cells must be a "
                                              "non-empty array");
  const int tasks = static_cast<int>(cells.size());
  std::vector<detail::CellResult> results(tasks);
  parallel_for(tasks, threads, [&](int i) {
    results[i] = detail::run_learn_cell(detail::merge_cell(cfg, cells[i]),
                                        kind_name);
  });

  RunOutput out;
  nlohmann::json cell_summaries = nlohmann::json::array();
  bool pass = true;
  int bound_violations = 0;
  for (auto& r : results) {
    out.rows.push_back(std::move(r.row));
    if (r.summary.contains("bound_dominates") &&
        !r.summary.at("bound_dominates").get<bool>()) {
      ++bound_violations;
      pass = false;
    }
    cell_summaries.push_back(std::move(r.summary));
    if (!r.printed.empty()) out.printed += r.printed + "\n";
  }
  if (cfg.contains("thresholds") && cfg.at("thresholds").contains("gen_err_max")) {
    const double gmax = cfg.at("thresholds").at("gen_err_max").get<double>();
    for (const auto& row : out.rows)
      if (!(row.gen_err <= gmax)) pass = false;
  }
  out.summary = {{"kind", kind_name},
                 {"cells", cell_summaries},
                 {"bound_violations", bound_violations},
                 {"pass", pass}};
  if (cfg.contains("thresholds")) out.summary["thresholds"] = cfg.at("thresholds");
  return out;
}

// ---------------------------------------------------------------------------
// static-rate: memoryless importance readout, C_H/sqrt(N) dominance + slope.
// ---------------------------------------------------------------------------
inline RunOutput run_static_rate(const nlohmann::json& cfg, int threads) {
  const int d = cfg.value("d", 1);
  const auto& jt = cfg.at("target");
  const auto mu0 = random_static_measure(jt.at("atoms").get<int>(), d,
                                         jt.at("seed").get<std::uint64_t>());
  const SigmaKind sigma2 = sigma_from_name(cfg.value("sigma2", "tanh"));

  const auto& je = cfg.at("eval");
  const int num_samples = je.at("num_samples").get<int>();
  const double M = je.value("M", 1.0);
  Rng zrng(mix_seed(je.at("seed").get<std::uint64_t>(), 0x57a));
  Eigen::MatrixXd Zs = zrng.uniform_mat(d, num_samples, -M, M);
  Eigen::VectorXd target(num_samples);
  for (int s = 0; s < num_samples; ++s) {
    double y = 0.0;
    for (const auto& at : mu0.atoms)
      y += at.p * at.w * apply_sigma(sigma2, at.c.dot(Zs.col(s)) + at.b);
    target[s] = y;
  }

  // Frozen constants of the static bound (valid for ||z||_2 <= 1 inputs).
  double v_sup = 0.0;
  for (const auto& at : mu0.atoms)
    v_sup = std::max(v_sup, std::sqrt(at.c.squaredNorm() + at.b * at.b));
  bounds::BoundInputs bi;
  bi.L_sigma2 = sigma_lipschitz(sigma2);
  bi.sigma2_zero = sigma_at_zero(sigma2);
  bi.v_sup = v_sup;
  bi.I_mu2 = mu0.I_mu2(2.0);
  bi.kappa0 = 1.0;  // nu = mu
  const double C_H0 = bounds::static_capacity(bi);

  elm::NuSpec nu;
  nu.kind = elm::NuSpec::Kind::atomic;
  nu.atoms = mu0;

  const std::vector<int> counts = cfg.at("feature_counts").get<std::vector<int>>();
  const int num_seeds = cfg.at("feature_seeds").get<int>();
  const std::uint64_t seed_base = cfg.value("feature_seed_base", std::uint64_t{500});
  const bool record_rt = cfg.value("record_runtime", false);

  const int tasks = static_cast<int>(counts.size()) * num_seeds;
  std::vector<ResultRow> rows(tasks);
  parallel_for(tasks, threads, [&](int t) {
    const auto t0 = std::chrono::steady_clock::now();
    const int ci = t / num_seeds, si = t % num_seeds;
    const int N = counts[ci];
    const std::uint64_t fseed = seed_base + si;
    const auto bank = elm::make_feature_bank(nu, N, 1, d, sigma2, fseed);
    const Eigen::VectorXd W = elm::importance_readout(bank, mu0);
    // Vectorized static feature matrix over the shared samples.
    Eigen::MatrixXd Phi = (bank.Cmat * Zs).colwise() + bank.bvec;  // N x samples
    for (int j = 0; j < Phi.size(); ++j)
      Phi.data()[j] = apply_sigma(sigma2, Phi.data()[j]);
    const Eigen::VectorXd err = Phi.transpose() * W - target;
    ResultRow r;
    r.sweep = "static-rate";
    r.seed = fseed;
    r.N = N;
    r.gen_err = std::sqrt(err.squaredNorm() / num_samples);
    r.bound_total = C_H0 / std::sqrt(double(N));
    if (record_rt) r.runtime_ms = detail::elapsed_ms(t0);
    rows[t] = std::move(r);
  });

  // The capacity bound controls the expected squared error, so dominance is
  // checked on the seed-averaged RMS per feature count.
  int violations = 0;
  std::vector<double> xs, ys;
  nlohmann::json per_n = nlohmann::json::array();
  for (std::size_t ci = 0; ci < counts.size(); ++ci) {
    double m = 0.0;
    for (int si = 0; si < num_seeds; ++si) m += rows[ci * num_seeds + si].gen_err;
    m /= num_seeds;
    const double b = C_H0 / std::sqrt(double(counts[ci]));
    if (m > b) ++violations;
    xs.push_back(counts[ci]);
    ys.push_back(m);
    per_n.push_back({{"N", counts[ci]}, {"mean_rms", m}, {"bound", b}});
  }
  const SlopeFit slope = fit_loglog(xs, ys);
  const auto& th = cfg.at("thresholds");
  const bool pass = violations == 0 &&
                    slope.slope >= th.at("slope_min").get<double>() &&
                    slope.slope <= th.at("slope_max").get<double>();
  RunOutput out;
  out.rows = std::move(rows);
  out.summary = {{"kind", "static-rate"}, {"slope", slope.slope},
                 {"slope_std_error", slope.std_error}, {"violations", violations},
                 {"C_H0", C_H0}, {"per_N", per_n},
                 {"thresholds", th}, {"pass", pass}};
  return out;
}

// ---------------------------------------------------------------------------
// universality-probe: learn a target outside the exactly-representable class
// (tanh of a convolution) and check the error actually shrinks with n.
// ---------------------------------------------------------------------------
inline RunOutput run_universality_probe(const nlohmann::json& cfg, int threads) {
  const auto& jt = cfg.at("target");
  const Eigen::MatrixXd h = filter_from_json(jt);
  const int d = static_cast<int>(h.rows());
  const int K = static_cast<int>(h.cols());
  const double scale = jt.value("scale", 1.0);
  const auto target = [&h, K, scale](const seq::Window& w) {
    double u = 0.0;
    const int kmax = std::min(K, w.len());
    for (int k = 0; k < kmax; ++k) u += h.col(k).dot(w.at_time(-k));
    return Eigen::VectorXd::Constant(1, std::tanh(scale * u));
  };

  seq::ProcessGenerator base_gen = gen_from_json(cfg.at("gen"), d);
  const auto& jn = cfg.at("noise");
  const double noise_std = jn.at("std").get<double>();
  const seq::NoiseKind noise_kind = noise_from_json(jn);

  const auto& jtr = cfg.at("train");
  const std::vector<int> n_grid = cfg.at("n_grid").get<std::vector<int>>();
  const std::vector<int> N_grid = cfg.at("N_grid").get<std::vector<int>>();
  const std::uint64_t gen_base = cfg.at("seeds").at("gen_base").get<std::uint64_t>();
  const std::uint64_t eval_base = cfg.at("seeds").at("eval_base").get<std::uint64_t>();
  const int num_eval = cfg.at("eval").at("num_windows").get<int>();
  const bool record_rt = cfg.value("record_runtime", false);

  const int tasks = static_cast<int>(n_grid.size() * N_grid.size());
  std::vector<ResultRow> rows(tasks);
  parallel_for(tasks, threads, [&](int t) {
    const auto t0 = std::chrono::steady_clock::now();
    const int ni = t / static_cast<int>(N_grid.size());
    const int Ni = t % static_cast<int>(N_grid.size());
    const int n = n_grid[ni];

    learn::TrainConfig tc;
    tc.reservoir_N = jtr.at("reservoir_N").get<int>();
    tc.d = d;
    tc.feature_count = N_grid[Ni];
    tc.esn_dist = esn::dist_from_name(jtr.value("dist", "gaussian"));
    tc.esn_target_norm = jtr.at("target_norm").get<double>();
    tc.R = jtr.at("R").get<double>();
    tc.sigma2 = sigma_from_name(jtr.value("sigma2", "relu"));
    tc.esn_seed = jtr.at("esn_seed").get<std::uint64_t>();
    tc.feature_seed = jtr.at("feature_seed").get<std::uint64_t>() +
                      static_cast<std::uint64_t>(t);
    tc.nu = elm::nu_from_json(cfg.at("nu"));

    const auto gen = base_gen.with_seed(gen_base + static_cast<std::uint64_t>(t));
    const auto ds = seq::generate_with(gen, n, 1, target, noise_std, noise_kind);
    const auto tm = learn::train(tc, ds);

    const int L = std::max(learn::system_washout(tm.model.reservoir.system, 1e-9),
                           K) + 1;
    const auto eval_gen = base_gen.with_seed(eval_base + static_cast<std::uint64_t>(t));
    const auto ge = learn::generalization_error_with(tm.model, target, eval_gen,
                                                     num_eval, L);
    ResultRow r;
    r.sweep = "universality-probe";
    r.seed = gen.seed;
    r.N = N_grid[Ni];
    r.n = n;
    r.R = tc.R;
    r.emp_risk = tm.train_risk;
    r.gen_err = ge.mean;
    r.gen_err_se = ge.std_error;
    if (record_rt) r.runtime_ms = detail::elapsed_ms(t0);
    rows[t] = std::move(r);
  });

  const double factor = cfg.at("thresholds").at("improvement_factor").get<double>();
  const double first = rows.front().gen_err, last = rows.back().gen_err;
  const bool pass = last <= factor * first;
  RunOutput out;
  out.rows = std::move(rows);
  out.summary = {{"kind", "universality-probe"},
                 {"first_cell_gen_err", first},
                 {"last_cell_gen_err", last},
                 {"thresholds", cfg.at("thresholds")},
                 {"pass", pass}};
  return out;
}

inline RunOutput run_experiment(const nlohmann::json& cfg, int threads) {
  const std::string kind = cfg.at("kind").get<std::string>();
  if (kind == "mc-rate") return run_mc_rate(cfg, threads);
  if (kind == "truncation-decay") return run_truncation_decay(cfg, threads);
  if (kind == "esn-tail") return run_esn_tail(cfg, threads);
  if (kind == "learn-sweep") return run_learn_sweep(cfg, threads, "learn-sweep");
  if (kind == "bound-dominance")
    return run_learn_sweep(cfg, threads, "bound-dominance");
  if (kind == "static-rate") return run_static_rate(cfg, threads);
  if (kind == "universality-probe") return run_universality_probe(cfg, threads);
  throw std::invalid_argument("run_experiment: unknown experiment kind '" +
                              kind + "'");
}

inline void write_outputs(const RunOutput& out, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_rows(out.rows, out_dir + "/results.csv");
  std::ofstream js(out_dir + "/summary.json");
  require(js.good(), "write_outputs: cannot open summary.json");
  js << out.summary.dump(2) << '\n';
}

// Generic numeric CSV reading for the slope subcommand.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("column '" + name + "' not found");
  }
};

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_table: cannot open " + path);
  Table t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "read_table: empty file");
  std::istringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      try {
        row.push_back(std::stod(cell));
      } catch (...) {
        row.push_back(kNaN);
      }
    }
    row.resize(t.columns.size(), kNaN);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace resbarron::expt
