#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "nct/common.hpp"
#include "nct/design.hpp"
#include "nct/estimator.hpp"
#include "nct/graph.hpp"
#include "nct/io.hpp"
#include "nct/simlab.hpp"
#include "nct/tree.hpp"
#include "nct/version.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

// "w1000=0.5,w0100=0.5" -> ordered (contrast, weight) pairs.
std::vector<std::pair<nct::Contrast, double>> parse_weights(const std::string& spec) {
  std::vector<std::pair<nct::Contrast, double>> out;
  for (const std::string& item : split_list(spec, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || item.size() < 2 || item[0] != 'w') {
      throw nct::ConfigError("weights: expected wCODE=VALUE items, got '" + item + "'");
    }
    nct::Contrast contrast;
    try {
      contrast = nct::parse_contrast(item.substr(1, eq - 1));
    } catch (const nct::Error& e) {
      throw nct::ConfigError("weights: bad contrast in '" + item + "': " + e.what());
    }
    double value = 0.0;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw nct::ConfigError("weights: bad value in '" + item + "'");
    }
    if (!(value >= 0.0)) {
      throw nct::ConfigError("weights: value in '" + item + "' must be >= 0");
    }
    out.emplace_back(contrast, value);
  }
  if (out.empty()) throw nct::ConfigError("weights: empty specification");
  return out;
}

// Estimand set from --criterion and --weights.  The treatment and spillover
// contrasts are always carried (estimated in every tree) even at weight 0.
nct::EstimandSet make_estimand_set(const std::string& criterion,
                                   const std::string& weights_spec) {
  nct::EstimandSet set = nct::default_estimand_set();
  const auto ensure = [&set](nct::Contrast c) -> std::size_t {
    for (std::size_t i = 0; i < set.contrasts.size(); ++i) {
      if (set.contrasts[i] == c) return i;
    }
    set.contrasts.push_back(c);
    set.weights.push_back(0.0);
    return set.contrasts.size() - 1;
  };
  if (!weights_spec.empty()) {
    std::fill(set.weights.begin(), set.weights.end(), 0.0);
    for (const auto& [contrast, value] : parse_weights(weights_spec)) {
      set.weights[ensure(contrast)] = value;
    }
  }
  if (criterion.rfind("single:", 0) == 0) {
    nct::Contrast c;
    try {
      c = nct::parse_contrast(criterion.substr(7));
    } catch (const nct::Error& e) {
      throw nct::ConfigError("criterion: bad contrast in '" + criterion + "': " + e.what());
    }
    std::fill(set.weights.begin(), set.weights.end(), 0.0);
    set.weights[ensure(c)] = 1.0;
  } else if (criterion != "composite") {
    throw nct::ConfigError("criterion: must be 'composite' or 'single:<contrast>', got '" +
                           criterion + "'");
  }
  try {
    set.validate();
  } catch (const nct::Error& e) {
    throw nct::ConfigError(std::string("weights: ") + e.what());
  }
  return set;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct CommonTreeOpts {
  int max_depth = 3;
  long min_size = 20;
  bool honest = true;
  std::string criterion = "composite";
  std::string weights;
  double train_fraction = 0.5;
};

void add_tree_options(CLI::App* cmd, CommonTreeOpts& o) {
  cmd->add_option("--max-depth", o.max_depth, "Maximum tree depth")
      ->capture_default_str();
  cmd->add_option("--min-size", o.min_size,
                  "Minimum training units per condition cell in every leaf")
      ->capture_default_str();
  cmd->add_flag("--honest,!--no-honest", o.honest,
                "Use the variance-penalized honest splitting criterion");
  cmd->add_option("--criterion", o.criterion,
                  "Splitting criterion: composite or single:<contrast>")
      ->capture_default_str();
  cmd->add_option("--weights", o.weights,
                  "Composite weights, e.g. w1000=0.5,w0100=0.5");
  cmd->add_option("--train-fraction", o.train_fraction,
                  "Fraction of clusters assigned to the discovery sample")
      ->capture_default_str();
}

nct::TreeParams tree_params(const CommonTreeOpts& o) {
  nct::TreeParams params;
  params.max_depth = o.max_depth;
  params.min_size = o.min_size;
  params.honest = o.honest;
  return params;
}

void append_tree_manifest(std::vector<std::pair<std::string, std::string>>& m,
                          const CommonTreeOpts& o) {
  m.emplace_back("max-depth", std::to_string(o.max_depth));
  m.emplace_back("min-size", std::to_string(o.min_size));
  m.emplace_back("honest", bool_str(o.honest));
  m.emplace_back("criterion", o.criterion);
  if (!o.weights.empty()) m.emplace_back("weights", o.weights);
  m.emplace_back("train-fraction", nct::io::format_double(o.train_fraction));
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOpts {
  nct::ScenarioConfig config;
  CommonTreeOpts tree;
  bool refinement = false;
  int jobs = 1;
  std::string out = "nct-out";
};

int run_simulate(const SimulateOpts& o) {
  o.config.validate();
  nct::RunOptions ropt;
  ropt.set = make_estimand_set(o.tree.criterion, o.tree.weights);
  ropt.tree = tree_params(o.tree);
  ropt.train_fraction = o.tree.train_fraction;
  ropt.jobs = o.jobs;
  ropt.refinement_matching = o.refinement;

  fs::create_directories(o.out);
  const nct::MetricsReport report = nct::run_replications(o.config, ropt);

  nct::io::write_metrics_csv(o.out + "/metrics.csv", report);
  nct::io::write_discovery_csv(o.out + "/discovery.csv", report);

  std::vector<std::pair<std::string, std::string>> manifest;
  manifest.emplace_back("scenario", std::to_string(o.config.scenario));
  manifest.emplace_back("h", nct::io::format_double(o.config.h));
  manifest.emplace_back("clusters", std::to_string(o.config.clusters));
  manifest.emplace_back("cluster-size", std::to_string(o.config.cluster_size));
  manifest.emplace_back("edge-prob", nct::io::format_double(o.config.edge_prob));
  manifest.emplace_back("alpha", nct::io::format_double(o.config.alpha));
  manifest.emplace_back("q", std::to_string(o.config.q));
  manifest.emplace_back("covariates", std::to_string(o.config.covariates));
  manifest.emplace_back("rho", nct::io::format_double(o.config.rho));
  manifest.emplace_back("homophily", bool_str(o.config.homophily));
  manifest.emplace_back("homophily-p-base",
                        nct::io::format_double(o.config.homophily_p_base));
  manifest.emplace_back("homophily-p-same",
                        nct::io::format_double(o.config.homophily_p_same));
  manifest.emplace_back("reps", std::to_string(o.config.replications));
  manifest.emplace_back("seed", std::to_string(o.config.seed));
  append_tree_manifest(manifest, o.tree);
  manifest.emplace_back("refinement", bool_str(o.refinement));
  nct::io::write_manifest(o.out + "/manifest.txt", manifest, nct::kVersion);

  std::fprintf(stderr, "simulate: %d/%d replications completed (%d failed)\n",
               report.replications_completed, o.config.replications,
               report.replications_failed);
  for (const std::string& msg : report.failure_messages) {
    std::fprintf(stderr, "  failure: %s\n", msg.c_str());
  }
  if (static_cast<double>(report.replications_failed) >
      0.10 * static_cast<double>(o.config.replications)) {
    std::fprintf(stderr, "simulate: replication failure rate exceeds 10%%\n");
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeOpts {
  std::string edges;
  std::string nodes;
  bool directed = true;
  double alpha = 0.5;
  long q = 1;
  CommonTreeOpts tree;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out = "nct-out";
};

int run_analyze(const AnalyzeOpts& o) {
  if (o.edges.empty()) throw nct::ConfigError("--edges is required");
  if (o.nodes.empty()) throw nct::ConfigError("--nodes is required");
  const std::vector<nct::EdgeRow> edges = nct::io::read_edge_csv(o.edges);
  const nct::io::NodeTable table = nct::io::read_node_csv(o.nodes);

  nct::ClusteredNetwork::BuildStats stats;
  const nct::ClusteredNetwork net =
      nct::ClusteredNetwork::from_edge_list(edges, table.nodes, o.directed, &stats);
  if (stats.duplicate_edges > 0) {
    std::fprintf(stderr, "analyze: ignored %ld duplicate edges\n",
                 stats.duplicate_edges);
  }

  // Reorder node-table rows into network unit order.
  const int n = net.n_units();
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n));
  std::vector<double> y(static_cast<std::size_t>(n));
  std::vector<double> x(static_cast<std::size_t>(n) *
                        static_cast<std::size_t>(table.n_covariates));
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  for (std::size_t r = 0; r < table.nodes.size(); ++r) {
    const int u = net.find_unit(table.nodes[r].cluster, table.nodes[r].node);
    if (seen[static_cast<std::size_t>(u)]) {
      throw nct::SchemaError("node table: duplicate row for " +
                             table.nodes[r].cluster + ":" + table.nodes[r].node);
    }
    seen[static_cast<std::size_t>(u)] = 1;
    w[static_cast<std::size_t>(u)] = static_cast<std::uint8_t>(table.w[r]);
    y[static_cast<std::size_t>(u)] = table.y[r];
    for (int j = 0; j < table.n_covariates; ++j) {
      x[static_cast<std::size_t>(u) * static_cast<std::size_t>(table.n_covariates) +
        static_cast<std::size_t>(j)] =
          table.x[r * static_cast<std::size_t>(table.n_covariates) +
                  static_cast<std::size_t>(j)];
    }
  }

  const nct::ProbabilityTable probs(net, o.alpha, nct::ThresholdExposure{o.q},
                                    {}, o.jobs);
  const nct::Dataset ds(net, probs, std::move(w), std::move(y), std::move(x),
                        table.n_covariates);
  const long excluded =
      n - static_cast<long>(ds.eligible_units().size());
  std::fprintf(stderr,
               "analyze: positivity excluded %ld of %d units (out-degree < %ld)\n",
               excluded, n, o.q);

  const nct::HonestSplit split =
      nct::split_clusters(ds, o.tree.train_fraction, o.seed);
  const nct::EstimandSet set =
      make_estimand_set(o.tree.criterion, o.tree.weights);
  nct::CausalTree tree = nct::CausalTree::grow(ds, split, set, tree_params(o.tree));
  tree.estimate_leaves(ds, split);

  fs::create_directories(o.out);
  nct::io::write_tree_json(o.out + "/tree.json", tree);
  nct::io::write_leaf_csv(o.out + "/leaves.csv", tree);

  std::vector<std::pair<std::string, std::string>> manifest;
  manifest.emplace_back("edges", o.edges);
  manifest.emplace_back("nodes", o.nodes);
  manifest.emplace_back("directed", bool_str(o.directed));
  manifest.emplace_back("alpha", nct::io::format_double(o.alpha));
  manifest.emplace_back("q", std::to_string(o.q));
  manifest.emplace_back("seed", std::to_string(o.seed));
  append_tree_manifest(manifest, o.tree);
  nct::io::write_manifest(o.out + "/manifest.txt", manifest, nct::kVersion);
  return 0;
}

// ---------------------------------------------------------------------------
// probs

struct ProbsOpts {
  std::string edges;
  std::string nodes;
  bool directed = true;
  double alpha = 0.5;
  long q = 1;
  std::string pairs;
  int jobs = 1;
  std::string out = "nct-out";
};

int run_probs(const ProbsOpts& o) {
  if (o.edges.empty()) throw nct::ConfigError("--edges is required");
  const std::vector<nct::EdgeRow> edges = nct::io::read_edge_csv(o.edges);
  nct::ClusteredNetwork net = [&] {
    if (!o.nodes.empty()) {
      const nct::io::NodeTable table = nct::io::read_node_csv(o.nodes);
      return nct::ClusteredNetwork::from_edge_list(edges, table.nodes, o.directed);
    }
    return nct::ClusteredNetwork::from_edge_list(edges, o.directed);
  }();
  const nct::ProbabilityTable probs(net, o.alpha, nct::ThresholdExposure{o.q},
                                    {}, o.jobs);
  fs::create_directories(o.out);
  nct::io::write_probs_csv(o.out + "/probs.csv", probs);

  if (!o.pairs.empty()) {
    std::vector<std::pair<int, int>> unit_pairs;
    for (const std::string& item : split_list(o.pairs, ',')) {
      if (item.empty()) continue;
      const auto parts = split_list(item, ':');
      if (parts.size() != 4) {
        throw nct::ConfigError(
            "pairs: expected clusterA:nodeA:clusterB:nodeB items, got '" + item + "'");
      }
      unit_pairs.emplace_back(net.find_unit(parts[0], parts[1]),
                              net.find_unit(parts[2], parts[3]));
    }
    nct::io::write_pairs_csv(o.out + "/pairs.csv", probs, unit_pairs);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous treatment and spillover effects under clustered "
               "network interference"};
  app.set_version_flag("--version", nct::kVersion);
  app.require_subcommand(1);

  SimulateOpts sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run Monte Carlo replications of a synthetic scenario");
  // The effect-size option is spelled --h, so this subcommand offers help
  // only under its long name.
  simulate->set_help_flag("--help", "Print this help message and exit");
  simulate->set_config("--config", "", "Read options from a key=value file");
  simulate->add_option("--scenario", sim.config.scenario, "Heterogeneity structure (1 or 2)")
      ->capture_default_str();
  simulate->add_option("--h", sim.config.h, "Effect size")->capture_default_str();
  simulate->add_option("--clusters", sim.config.clusters, "Number of clusters")
      ->capture_default_str();
  simulate->add_option("--cluster-size", sim.config.cluster_size, "Units per cluster")
      ->capture_default_str();
  simulate->add_option("--edge-prob", sim.config.edge_prob, "Within-cluster link probability")
      ->capture_default_str();
  simulate->add_option("--alpha", sim.config.alpha, "Treatment probability")
      ->capture_default_str();
  simulate->add_option("--q", sim.config.q, "Exposure threshold")->capture_default_str();
  simulate->add_option("--covariates", sim.config.covariates, "Number of covariates")
      ->capture_default_str();
  simulate->add_option("--rho", sim.config.rho, "Covariate equicorrelation in [0,1)")
      ->capture_default_str();
  simulate->add_flag("--homophily,!--no-homophily", sim.config.homophily,
                     "Homophilous networks on the first covariate");
  simulate->add_option("--homophily-p-base", sim.config.homophily_p_base,
                       "Link probability across attribute values")
      ->capture_default_str();
  simulate->add_option("--homophily-p-same", sim.config.homophily_p_same,
                       "Link probability within attribute values")
      ->capture_default_str();
  simulate->add_option("--reps", sim.config.replications, "Monte Carlo replications")
      ->capture_default_str();
  simulate->add_option("--seed", sim.config.seed, "Master seed")->capture_default_str();
  add_tree_options(simulate, sim.tree);
  simulate->add_flag("--refinement,!--no-refinement", sim.refinement,
                     "Count refining leaves in rule discovery (sensitivity)");
  simulate->add_option("--jobs", sim.jobs, "Worker count")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();

  AnalyzeOpts ana;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "Grow an honest tree from edge-list and node CSV files");
  analyze->set_config("--config", "", "Read options from a key=value file");
  analyze->add_option("--edges", ana.edges, "Edge CSV (cluster,src,dst)");
  analyze->add_option("--nodes", ana.nodes, "Node CSV (cluster,node,w,y,x_1..x_P)");
  analyze->add_flag("--directed,!--undirected", ana.directed,
                    "Treat edges as directed (default) or symmetrize");
  analyze->add_option("--alpha", ana.alpha, "Treatment probability of the design")
      ->capture_default_str();
  analyze->add_option("--q", ana.q, "Exposure threshold")->capture_default_str();
  analyze->add_option("--seed", ana.seed, "Cluster-split seed")->capture_default_str();
  add_tree_options(analyze, ana.tree);
  analyze->add_option("--jobs", ana.jobs, "Worker count")->capture_default_str();
  analyze->add_option("--out", ana.out, "Output directory")->capture_default_str();

  ProbsOpts prb;
  CLI::App* probs = app.add_subcommand(
      "probs", "Dump per-unit exposure probabilities for a network");
  probs->set_config("--config", "", "Read options from a key=value file");
  probs->add_option("--edges", prb.edges, "Edge CSV (cluster,src,dst)");
  probs->add_option("--nodes", prb.nodes, "Optional node CSV fixing the roster");
  probs->add_flag("--directed,!--undirected", prb.directed,
                  "Treat edges as directed (default) or symmetrize");
  probs->add_option("--alpha", prb.alpha, "Treatment probability")->capture_default_str();
  probs->add_option("--q", prb.q, "Exposure threshold")->capture_default_str();
  probs->add_option("--pairs", prb.pairs,
                    "Joint-probability dump list clusterA:nodeA:clusterB:nodeB,...");
  probs->add_option("--jobs", prb.jobs, "Worker count")->capture_default_str();
  probs->add_option("--out", prb.out, "Output directory")->capture_default_str();

  // CLI11 reads config files only on the root application, so a file named
  // by a subcommand's --config is applied here by hand.  Values given on the
  // command line keep precedence: options that already hold a result are
  // left untouched by the stream parse.
  const auto apply_subcommand_config = [](CLI::App* sub) {
    const CLI::Option* cfg = sub->get_config_ptr();
    if (cfg == nullptr || cfg->count() == 0) return;
    const std::string path = cfg->as<std::string>();
    std::ifstream file(path);
    if (!file.good()) throw CLI::FileError::Missing(path);
    sub->parse_from_stream(file);
  };

  try {
    app.parse(argc, argv);
    for (CLI::App* sub : {simulate, analyze, probs}) {
      if (sub->parsed()) apply_subcommand_config(sub);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (analyze->parsed()) return run_analyze(ana);
    if (probs->parsed()) return run_probs(prb);
  } catch (const nct::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const nct::SchemaError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const nct::InvalidRho& e) {
    std::fprintf(stderr, "config error: rho: %s\n", e.what());
    return 2;
  } catch (const nct::TooFewClusters& e) {
    std::fprintf(stderr, "config error: clusters: %s\n", e.what());
    return 2;
  } catch (const nct::UnknownNode& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const nct::CrossClusterEdge& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const nct::InvalidProbability& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const nct::InvalidThreshold& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const nct::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
