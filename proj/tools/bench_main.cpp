#include <chrono>
#include <cstdio>
#include <functional>

#include "CLI11.hpp"
#include "nct/design.hpp"
#include "nct/graph.hpp"
#include "nct/io.hpp"
#include "nct/simlab.hpp"
#include "nct/tree.hpp"

namespace {

double time_seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

std::string report_string(const nct::MetricsReport& r) {
  std::string s;
  for (const auto& e : r.effects) {
    s += e.effect + ":" + nct::io::format_double(e.bias) + "," +
         nct::io::format_double(e.mse) + "," + nct::io::format_double(e.coverage) + ";";
  }
  for (const auto& d : r.discovery) {
    s += d.criterion + ":" + nct::io::format_double(d.mean_overall) + ";";
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial-vs-parallel benchmark for the estimation kernels"};
  int jobs = 4;
  int clusters = 20;
  int cluster_size = 200;
  int reps = 8;
  double h = 1.1;
  std::uint64_t seed = 7;
  app.add_option("--jobs", jobs, "Parallel worker count")->capture_default_str();
  app.add_option("--clusters", clusters, "Clusters for the marginal benchmark")
      ->capture_default_str();
  app.add_option("--cluster-size", cluster_size, "Units per cluster")
      ->capture_default_str();
  app.add_option("--reps", reps, "Replications for the batch benchmark")
      ->capture_default_str();
  app.add_option("--h", h, "Effect size for the batch benchmark")
      ->capture_default_str();
  app.add_option("--seed", seed, "Seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  // 1. Marginal-table construction: serial kernel vs OpenMP kernel.
  const nct::ClusteredNetwork net =
      nct::ClusteredNetwork::erdos_renyi(clusters, cluster_size, 0.05, seed);
  const nct::ThresholdExposure mapping{1};
  double t_serial = 0.0, t_parallel = 0.0;
  {
    t_serial = time_seconds(
        [&] { nct::ProbabilityTable probs(net, 0.5, mapping, {}, 1); });
    t_parallel = time_seconds(
        [&] { nct::ProbabilityTable probs(net, 0.5, mapping, {}, jobs); });
    const nct::ProbabilityTable a(net, 0.5, mapping, {}, 1);
    const nct::ProbabilityTable b(net, 0.5, mapping, {}, jobs);
    bool equal = true;
    for (int u = 0; u < net.n_units() && equal; ++u) {
      for (const nct::CellCondition& c : nct::kAllCells) {
        if (a.marginal(u, c) != b.marginal(u, c)) equal = false;
      }
    }
    std::printf("marginals  n=%d  serial %.4fs  jobs=%d %.4fs  speedup %.2fx  equal=%s\n",
                net.n_units(), t_serial, jobs, t_parallel,
                t_parallel > 0 ? t_serial / t_parallel : 0.0,
                equal ? "yes" : "NO");
    if (!equal) return 1;
  }

  // 2. Replication batch: serial reference vs worker pool.
  nct::ScenarioConfig config;
  config.scenario = 1;
  config.h = h;
  config.clusters = 10;
  config.cluster_size = 100;
  config.replications = reps;
  config.seed = seed;
  nct::RunOptions opt;
  opt.set = nct::default_estimand_set();
  opt.tree.min_size = 10;
  opt.jobs = jobs;

  nct::MetricsReport serial_report, parallel_report;
  const double rt_serial = time_seconds(
      [&] { serial_report = nct::run_replications_serial(config, opt); });
  const double rt_parallel = time_seconds(
      [&] { parallel_report = nct::run_replications(config, opt); });
  const bool equal = report_string(serial_report) == report_string(parallel_report);
  std::printf("replications M=%d  serial %.3fs  jobs=%d %.3fs  speedup %.2fx  equal=%s\n",
              reps, rt_serial, jobs, rt_parallel,
              rt_parallel > 0 ? rt_serial / rt_parallel : 0.0,
              equal ? "yes" : "NO");
  return equal ? 0 : 1;
}
