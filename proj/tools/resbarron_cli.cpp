// Experiment driver: runs a JSON-configured sweep and writes results.csv +
// summary.json, or fits a slope to columns of an existing results file.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "resbarron/experiment.hpp"

namespace expt = resbarron::expt;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            int threads) {
  std::ifstream in(config_path);
  if (!in.good()) {
    std::cerr << "error: cannot open config file '" << config_path << "'\n";
    return 1;
  }
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "error: malformed config: " << e.what() << '\n';
    return 1;
  }
  try {
    const expt::RunOutput out = expt::run_experiment(cfg, threads);
    expt::write_outputs(out, out_dir);
    if (!out.printed.empty()) std::cout << out.printed;
    std::cout << out.summary.dump(2) << '\n';
    std::cout << "wrote " << out.rows.size() << " rows to " << out_dir
              << "/results.csv\n";
    return out.summary.value("pass", false) ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_slope(const std::string& csv_path, const std::string& xcol,
              const std::string& ycol, bool semilog, bool mean_by_x) {
  try {
    const expt::Table t = expt::read_table(csv_path);
    const int xi = t.column_index(xcol);
    const int yi = t.column_index(ycol);
    std::vector<double> x, y;
    if (mean_by_x) {
      std::map<double, std::pair<double, int>> acc;
      for (const auto& row : t.rows) {
        if (std::isnan(row[xi]) || std::isnan(row[yi])) continue;
        auto& a = acc[row[xi]];
        a.first += row[yi];
        a.second += 1;
      }
      for (const auto& [xv, a] : acc) {
        x.push_back(xv);
        y.push_back(a.first / a.second);
      }
    } else {
      for (const auto& row : t.rows) {
        if (std::isnan(row[xi]) || std::isnan(row[yi])) continue;
        x.push_back(row[xi]);
        y.push_back(row[yi]);
      }
    }
    const expt::SlopeFit f =
        semilog ? expt::fit_semilog(x, y) : expt::fit_loglog(x, y);
    nlohmann::json j{{"slope", f.slope},
                     {"intercept", f.intercept},
                     {"std_error", f.std_error},
                     {"points", f.points},
                     {"scale", semilog ? "semilog" : "loglog"}};
    std::cout << j.dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reservoir-computing experiment driver"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", csv_path, xcol, ycol;
  int threads = 1;
  bool semilog = false, mean_by_x = false;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "JSON experiment config")->required();
  run->add_option("--out", out_dir, "output directory (results.csv, summary.json)");
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto* slope = app.add_subcommand("slope", "fit a decay slope to CSV columns");
  slope->add_option("csv", csv_path, "results CSV")->required();
  slope->add_option("--x", xcol, "x column name")->required();
  slope->add_option("--y", ycol, "y column name")->required();
  slope->add_flag("--semilog", semilog, "fit log y against x (default: log-log)");
  slope->add_flag("--mean", mean_by_x, "average y over rows sharing an x value");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(run)) return cmd_run(config_path, out_dir, threads);
  return cmd_slope(csv_path, xcol, ycol, semilog, mean_by_x);
}
