#include "nct/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nct/common.hpp"

namespace nct::io {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

// Quote a CSV field only when needed.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

long parse_long(const std::string& field, std::size_t line, const char* what) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(field.c_str(), &end, 10);
  if (errno != 0 || end == field.c_str() || *end != '\0') {
    throw SchemaError("line " + std::to_string(line) + ": " + what +
                      " is not an integer: '" + field + "'");
  }
  return v;
}

double parse_double(const std::string& field, std::size_t line, const char* what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (errno != 0 || end == field.c_str() || *end != '\0') {
    throw SchemaError("line " + std::to_string(line) + ": " + what +
                      " is not a number: '" + field + "'");
  }
  return v;
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  const auto end_row = [&](std::size_t line) {
    end_field();
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw SchemaError("line " + std::to_string(line) + ": expected " +
                        std::to_string(rows.front().size()) + " fields, got " +
                        std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
    row.clear();
  };

  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else if (c == '\n' || c == '\r') {
        throw SchemaError("line " + std::to_string(line) +
                          ": newline inside a quoted field");
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw SchemaError("line " + std::to_string(line) +
                            ": stray quote inside a field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row(line);
        ++line;
        break;
      case '\n':
        end_row(line);
        ++line;
        break;
      default:
        field += c;
        field_started = true;
        break;
    }
  }
  if (in_quotes) {
    throw SchemaError("line " + std::to_string(line) + ": unterminated quote");
  }
  if (field_started || !row.empty() || !field.empty()) end_row(line);
  return rows;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open file for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << content;
  if (!out) throw Error("failed while writing: " + path);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  return parse_csv(read_text_file(path));
}

std::vector<EdgeRow> read_edge_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw SchemaError(path + ": empty edge file");
  const auto& header = rows.front();
  if (header.size() != 3 || header[0] != "cluster" || header[1] != "src" ||
      header[2] != "dst") {
    throw SchemaError(path + ": edge header must be cluster,src,dst");
  }
  std::vector<EdgeRow> edges;
  edges.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    edges.push_back(EdgeRow{rows[i][0], rows[i][1], rows[i][2]});
  }
  return edges;
}

NodeTable read_node_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw SchemaError(path + ": empty node file");
  const auto& header = rows.front();
  if (header.size() < 4 || header[0] != "cluster" || header[1] != "node" ||
      header[2] != "w" || header[3] != "y") {
    throw SchemaError(path + ": node header must start with cluster,node,w,y");
  }
  const int p = static_cast<int>(header.size()) - 4;
  for (int j = 0; j < p; ++j) {
    const std::string expected = "x_" + std::to_string(j + 1);
    if (header[static_cast<std::size_t>(4 + j)] != expected) {
      throw SchemaError(path + ": covariate column " + std::to_string(5 + j) +
                        " must be named " + expected);
    }
  }
  NodeTable table;
  table.n_covariates = p;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::size_t line = i + 1;
    table.nodes.push_back(NodeRef{r[0], r[1]});
    const long w = parse_long(r[2], line, "w");
    if (w != 0 && w != 1) {
      throw SchemaError("line " + std::to_string(line) +
                        ": w must be 0 or 1, got '" + r[2] + "'");
    }
    table.w.push_back(static_cast<int>(w));
    table.y.push_back(parse_double(r[3], line, "y"));
    for (int j = 0; j < p; ++j) {
      table.x.push_back(parse_double(r[static_cast<std::size_t>(4 + j)], line,
                                     header[static_cast<std::size_t>(4 + j)].c_str()));
    }
  }
  return table;
}

void write_probs_csv(const std::string& path, const ProbabilityTable& probs) {
  const ClusteredNetwork& net = probs.network();
  std::string out = "cluster,node,degree,pi_00,pi_10,pi_01,pi_11\n";
  for (int u = 0; u < net.n_units(); ++u) {
    out += csv_field(net.cluster_label(net.cluster_of(u)));
    out += ',';
    out += csv_field(net.node_label(u));
    out += ',';
    out += std::to_string(net.out_degree(u));
    for (const CellCondition& c : kAllCells) {
      out += ',';
      out += format_double(probs.marginal(u, c));
    }
    out += '\n';
  }
  write_text_file(path, out);
}

void write_pairs_csv(const std::string& path, const ProbabilityTable& probs,
                     std::span<const std::pair<int, int>> unit_pairs) {
  const ClusteredNetwork& net = probs.network();
  std::string out = "cluster_a,node_a,cluster_b,node_b,wa,ga,wb,gb,pi\n";
  for (const auto& [a, b] : unit_pairs) {
    for (const CellCondition& ca : kAllCells) {
      for (const CellCondition& cb : kAllCells) {
        out += csv_field(net.cluster_label(net.cluster_of(a)));
        out += ',';
        out += csv_field(net.node_label(a));
        out += ',';
        out += csv_field(net.cluster_label(net.cluster_of(b)));
        out += ',';
        out += csv_field(net.node_label(b));
        out += ',' + std::to_string(ca.w) + ',' + std::to_string(ca.g);
        out += ',' + std::to_string(cb.w) + ',' + std::to_string(cb.g);
        out += ',';
        out += format_double(probs.pairwise(a, ca, b, cb).value);
        out += '\n';
      }
    }
  }
  write_text_file(path, out);
}

void write_leaf_csv(const std::string& path, const CausalTree& tree) {
  std::string out =
      "leaf_id,constraints,contrast,point,se,ci_low,ci_high,n_00,n_10,n_01,n_11\n";
  for (int id : tree.terminal_ids()) {
    const TreeNode& node = tree.node(id);
    for (const EffectEstimate& e : node.estimates) {
      out += std::to_string(id);
      out += ',';
      out += csv_field(node.region.to_string());
      out += ',';
      out += contrast_code(e.contrast);
      out += ',';
      if (e.available) {
        out += format_double(e.point);
        out += ',';
        out += format_double(e.std_error);
        out += ',';
        out += format_double(e.ci_low);
        out += ',';
        out += format_double(e.ci_high);
      } else {
        out += ",,,";
      }
      for (const CellCondition& c : kAllCells) {
        out += ',';
        out += std::to_string(e.n_cell[static_cast<std::size_t>(cell_index(c))]);
      }
      out += '\n';
    }
  }
  write_text_file(path, out);
}

void write_tree_json(const std::string& path, const CausalTree& tree) {
  write_text_file(path, tree.to_json());
}

CausalTree read_tree_json(const std::string& path) {
  return CausalTree::from_json(read_text_file(path));
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  const std::string h = format_double(report.config.h);
  std::string out = "effect,h,leaf,mean_est,mean_se,mse,bias,coverage\n";
  for (const EffectMetrics& em : report.effects) {
    const std::string tail = format_double(em.mse) + ',' +
                             format_double(em.bias) + ',' +
                             format_double(em.coverage);
    if (em.rules.empty()) {
      out += em.effect + ',' + h + ",0,,," + tail + '\n';
      continue;
    }
    for (std::size_t r = 0; r < em.rules.size(); ++r) {
      const RuleMetrics& rm = em.rules[r];
      out += em.effect + ',' + h + ',' + std::to_string(r + 1) + ',';
      if (rm.estimated > 0) {
        out += format_double(rm.mean_est) + ',' + format_double(rm.mean_se);
      } else {
        out += ",";
      }
      out += ',' + tail + '\n';
    }
  }
  write_text_file(path, out);
}

void write_discovery_csv(const std::string& path, const MetricsReport& report) {
  const std::string h = format_double(report.config.h);
  std::string out = "criterion,h,mean_correct_rules\n";
  for (const DiscoveryStat& d : report.discovery) {
    out += d.criterion + ',' + h + ',' + format_double(d.mean_overall) + '\n';
  }
  write_text_file(path, out);
}

void write_manifest(const std::string& path,
                    std::span<const std::pair<std::string, std::string>> entries,
                    const std::string& version) {
  std::string out = "# nct version " + version + "\n";
  for (const auto& [key, value] : entries) {
    out += key + " = " + value + "\n";
  }
  write_text_file(path, out);
}

}  // namespace nct::io
