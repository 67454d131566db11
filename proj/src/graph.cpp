#include "hqgae/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "hqgae/rng.hpp"

namespace hqgae {

namespace {

std::uint64_t edge_key(std::int64_t n, Edge e) {
  return static_cast<std::uint64_t>(e.first) * static_cast<std::uint64_t>(n) +
         static_cast<std::uint64_t>(e.second);
}

Edge ordered(std::int32_t a, std::int32_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

double parse_real(const std::string& token, const std::string& file, std::int64_t line) {
  double v = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error(file + ":" + std::to_string(line) + ": non-numeric token '" + token +
                             "'");
  }
  return v;
}

long long parse_int(const std::string& token, const std::string& file, std::int64_t line) {
  long long v = 0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error(file + ":" + std::to_string(line) + ": non-numeric token '" + token +
                             "'");
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing file: " + p.string());
  return in;
}

std::string chomp(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Csr transpose_csr(const Csr& a) {
  Csr t;
  t.rows = a.cols;
  t.cols = a.rows;
  t.offsets.assign(t.rows + 1, 0);
  for (const std::int32_t c : a.targets) t.offsets[c + 1]++;
  for (int i = 0; i < t.rows; ++i) t.offsets[i + 1] += t.offsets[i];
  t.targets.resize(a.targets.size());
  t.weights.resize(a.weights.size());
  std::vector<std::int64_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
  for (int i = 0; i < a.rows; ++i) {
    for (std::int64_t e = a.offsets[i]; e < a.offsets[i + 1]; ++e) {
      const std::int64_t slot = cursor[a.targets[e]]++;
      t.targets[slot] = static_cast<std::int32_t>(i);
      t.weights[slot] = a.weights[e];
    }
  }
  return t;
}

bool SparseGraph::has_edge(int i, int j) const {
  const auto begin = csr_targets.begin() + csr_offsets[i];
  const auto end = csr_targets.begin() + csr_offsets[i + 1];
  return std::binary_search(begin, end, static_cast<std::int32_t>(j));
}

EdgeList SparseGraph::undirected_edges() const {
  EdgeList out;
  out.reserve(static_cast<std::size_t>(num_undirected_edges()));
  for (int i = 0; i < num_nodes; ++i) {
    for (std::int64_t e = csr_offsets[i]; e < csr_offsets[i + 1]; ++e) {
      if (csr_targets[e] > i) out.emplace_back(i, csr_targets[e]);
    }
  }
  return out;
}

SparseGraph build_graph(int num_nodes, const EdgeList& edges, Matrix features,
                        std::vector<int> labels, int num_classes, LoadWarnings* warnings) {
  LoadWarnings w;
  std::vector<std::set<std::int32_t>> adj(num_nodes);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) {
      throw std::runtime_error("node index out of range: (" + std::to_string(a) + ", " +
                               std::to_string(b) + ") with num_nodes=" + std::to_string(num_nodes));
    }
    if (a == b) {
      w.dropped_self_loops++;
      continue;
    }
    if (!adj[a].insert(b).second) {
      w.dropped_duplicates++;
      continue;
    }
    adj[b].insert(a);
  }

  SparseGraph g;
  g.num_nodes = num_nodes;
  g.csr_offsets.assign(num_nodes + 1, 0);
  for (int i = 0; i < num_nodes; ++i) {
    g.csr_offsets[i + 1] = g.csr_offsets[i] + static_cast<std::int64_t>(adj[i].size());
  }
  g.csr_targets.reserve(g.csr_offsets[num_nodes]);
  for (int i = 0; i < num_nodes; ++i) {
    g.csr_targets.insert(g.csr_targets.end(), adj[i].begin(), adj[i].end());
  }
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.num_classes = num_classes;
  if (warnings) *warnings = w;
  return g;
}

SparseGraph load_graph(const std::string& dir_path, LoadWarnings* warnings) {
  const std::filesystem::path dir(dir_path);

  nlohmann::json meta;
  {
    std::ifstream in = open_or_throw(dir / "meta.json");
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("meta.json: parse error: " + std::string(e.what()));
    }
  }
  for (const char* key : {"num_nodes", "feature_dim", "num_classes"}) {
    if (!meta.contains(key) || !meta[key].is_number_integer()) {
      throw std::runtime_error(std::string("meta.json: missing integer key '") + key + "'");
    }
  }
  const int num_nodes = meta["num_nodes"].get<int>();
  const int feature_dim = meta["feature_dim"].get<int>();
  const int num_classes = meta["num_classes"].get<int>();
  if (num_nodes <= 0 || feature_dim <= 0) {
    throw std::runtime_error("meta.json: num_nodes and feature_dim must be positive");
  }

  EdgeList edges;
  {
    std::ifstream in = open_or_throw(dir / "edges.tsv");
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = chomp(line);
      if (line.empty()) continue;
      const auto tokens = split_tabs(line);
      if (tokens.size() != 2) {
        throw std::runtime_error("edges.tsv:" + std::to_string(lineno) +
                                 ": expected two tab-separated ids");
      }
      const long long a = parse_int(tokens[0], "edges.tsv", lineno);
      const long long b = parse_int(tokens[1], "edges.tsv", lineno);
      edges.emplace_back(static_cast<std::int32_t>(a), static_cast<std::int32_t>(b));
    }
  }

  Matrix features(num_nodes, feature_dim);
  {
    std::ifstream in = open_or_throw(dir / "features.tsv");
    std::string line;
    int row = 0;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = chomp(line);
      if (line.empty()) continue;
      if (row >= num_nodes) {
        throw std::runtime_error("features.tsv: more rows than num_nodes=" +
                                 std::to_string(num_nodes));
      }
      const auto tokens = split_tabs(line);
      if (static_cast<int>(tokens.size()) != feature_dim) {
        throw std::runtime_error("features.tsv:" + std::to_string(lineno) + ": expected " +
                                 std::to_string(feature_dim) + " columns, got " +
                                 std::to_string(tokens.size()));
      }
      for (int j = 0; j < feature_dim; ++j) {
        features.at(row, j) = parse_real(tokens[j], "features.tsv", lineno);
      }
      ++row;
    }
    if (row != num_nodes) {
      throw std::runtime_error("features.tsv: row count " + std::to_string(row) +
                               " != num_nodes " + std::to_string(num_nodes));
    }
  }

  std::vector<int> labels;
  if (std::filesystem::exists(dir / "labels.tsv")) {
    std::ifstream in = open_or_throw(dir / "labels.tsv");
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = chomp(line);
      if (line.empty()) continue;
      labels.push_back(static_cast<int>(parse_int(line, "labels.tsv", lineno)));
    }
    if (static_cast<int>(labels.size()) != num_nodes) {
      throw std::runtime_error("labels.tsv: row count " + std::to_string(labels.size()) +
                               " != num_nodes " + std::to_string(num_nodes));
    }
  }

  const int classes = labels.empty() ? 0 : num_classes;
  return build_graph(num_nodes, edges, std::move(features), std::move(labels), classes, warnings);
}

void save_graph(const SparseGraph& g, const std::string& dir_path) {
  const std::filesystem::path dir(dir_path);
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "edges.tsv");
    for (const auto& [a, b] : g.undirected_edges()) out << a << '\t' << b << '\n';
  }
  {
    std::ofstream out(dir / "features.tsv");
    char buf[64];
    for (int i = 0; i < g.num_nodes; ++i) {
      for (int j = 0; j < g.features.cols; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", g.features.at(i, j));
        if (j) out << '\t';
        out << buf;
      }
      out << '\n';
    }
  }
  if (g.has_labels()) {
    std::ofstream out(dir / "labels.tsv");
    for (const int l : g.labels) out << l << '\n';
  }
  {
    nlohmann::json meta;
    meta["num_nodes"] = g.num_nodes;
    meta["feature_dim"] = g.features.cols;
    meta["num_classes"] = g.num_classes;
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << '\n';
  }
}

NormalizedAdjacency sym_normalize(const SparseGraph& g) {
  NormalizedAdjacency adj;
  Csr& m = adj.csr;
  const int n = g.num_nodes;
  m.rows = n;
  m.cols = n;
  m.offsets.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) m.offsets[i + 1] = m.offsets[i] + g.degree(i) + 1;  // + self-loop
  m.targets.resize(m.offsets[n]);
  m.weights.resize(m.offsets[n]);
  for (int i = 0; i < n; ++i) {
    std::int64_t slot = m.offsets[i];
    bool self_placed = false;
    const double di = static_cast<double>(g.degree(i)) + 1.0;
    for (std::int64_t e = g.csr_offsets[i]; e < g.csr_offsets[i + 1]; ++e) {
      const std::int32_t j = g.csr_targets[e];
      if (!self_placed && j > i) {
        m.targets[slot] = i;
        m.weights[slot] = 1.0 / di;
        ++slot;
        self_placed = true;
      }
      const double dj = static_cast<double>(g.degree(j)) + 1.0;
      m.targets[slot] = j;
      m.weights[slot] = 1.0 / std::sqrt(di * dj);
      ++slot;
    }
    if (!self_placed) {
      m.targets[slot] = i;
      m.weights[slot] = 1.0 / di;
    }
  }
  return adj;
}

EdgeSplit split_edges(const SparseGraph& g, double val_frac, double test_frac, std::uint64_t seed) {
  if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
    throw std::runtime_error("split_edges: fractions must be nonnegative and sum below 1");
  }
  EdgeList edges = g.undirected_edges();
  const std::int64_t total = static_cast<std::int64_t>(edges.size());
  const std::int64_t n_val = static_cast<std::int64_t>(std::floor(val_frac * total));
  const std::int64_t n_test = static_cast<std::int64_t>(std::floor(test_frac * total));
  if ((val_frac > 0.0 && n_val == 0) || (test_frac > 0.0 && n_test == 0) ||
      total - n_val - n_test <= 0) {
    throw std::runtime_error("split_edges: graph too small for requested fractions");
  }

  Rng rng(seed);
  // Fisher-Yates in fixed order.
  for (std::int64_t i = total - 1; i > 0; --i) {
    const std::int64_t j = static_cast<std::int64_t>(rng.below(i + 1));
    std::swap(edges[i], edges[j]);
  }

  EdgeSplit split;
  split.test_pos.assign(edges.begin(), edges.begin() + n_test);
  split.val_pos.assign(edges.begin() + n_test, edges.begin() + n_test + n_val);
  split.train_pos.assign(edges.begin() + n_test + n_val, edges.end());

  if (n_val > 0) split.val_neg = sample_negative_edges(g, n_val, rng.next_u64());
  if (n_test > 0) split.test_neg = sample_negative_edges(g, n_test, rng.next_u64(), split.val_neg);
  return split;
}

EdgeList sample_negative_edges(const SparseGraph& g, std::int64_t count, std::uint64_t seed,
                               const EdgeList& exclude) {
  if (count < 0) throw std::runtime_error("sample_negative_edges: negative count");
  if (count == 0) return {};
  const std::int64_t n = g.num_nodes;

  std::unordered_set<std::uint64_t> excluded;
  excluded.reserve(exclude.size());
  std::int64_t extra_excluded = 0;
  for (const auto& [a, b] : exclude) {
    const Edge e = ordered(a, b);
    if (excluded.insert(edge_key(n, e)).second && !g.has_edge(e.first, e.second)) {
      ++extra_excluded;
    }
  }

  const std::int64_t all_pairs = n * (n - 1) / 2;
  const std::int64_t available = all_pairs - g.num_undirected_edges() - extra_excluded;
  if (count > available) {
    throw std::runtime_error("sample_negative_edges: requested " + std::to_string(count) +
                             " non-edges but only " + std::to_string(available) + " exist");
  }

  Rng rng(seed);
  EdgeList out;
  out.reserve(count);
  std::unordered_set<std::uint64_t> taken;
  taken.reserve(count * 2);

  if (count * 4 >= available || all_pairs <= 4096) {
    // Dense regime: enumerate all candidate non-edges and shuffle.
    EdgeList candidates;
    candidates.reserve(available);
    for (std::int32_t i = 0; i < n; ++i) {
      for (std::int32_t j = i + 1; j < n; ++j) {
        if (g.has_edge(i, j)) continue;
        if (excluded.count(edge_key(n, {i, j}))) continue;
        candidates.emplace_back(i, j);
      }
    }
    for (std::int64_t i = static_cast<std::int64_t>(candidates.size()) - 1; i > 0; --i) {
      const std::int64_t j = static_cast<std::int64_t>(rng.below(i + 1));
      std::swap(candidates[i], candidates[j]);
    }
    out.assign(candidates.begin(), candidates.begin() + count);
    return out;
  }

  while (static_cast<std::int64_t>(out.size()) < count) {
    const std::int32_t a = static_cast<std::int32_t>(rng.below(n));
    const std::int32_t b = static_cast<std::int32_t>(rng.below(n));
    if (a == b) continue;
    const Edge e = ordered(a, b);
    const std::uint64_t key = edge_key(n, e);
    if (g.has_edge(e.first, e.second)) continue;
    if (excluded.count(key)) continue;
    if (!taken.insert(key).second) continue;
    out.push_back(e);
  }
  return out;
}

SparseGraph generate_sbm(const SbmParams& p, std::uint64_t seed) {
  if (p.blocks < 1 || p.nodes_per_block < 1) {
    throw std::runtime_error("generate_sbm: blocks and nodes_per_block must be positive");
  }
  if (!(p.p_out >= 0.0 && p.p_out <= p.p_in && p.p_in <= 1.0)) {
    throw std::runtime_error("generate_sbm: need 0 <= p_out <= p_in <= 1");
  }
  if (p.feature_dim < 1) throw std::runtime_error("generate_sbm: feature_dim must be positive");

  const int n = p.blocks * p.nodes_per_block;
  Rng rng(seed);

  EdgeList edges;
  for (std::int32_t i = 0; i < n; ++i) {
    const int bi = i / p.nodes_per_block;
    for (std::int32_t j = i + 1; j < n; ++j) {
      const int bj = j / p.nodes_per_block;
      const double prob = (bi == bj) ? p.p_in : p.p_out;
      if (rng.uniform() < prob) edges.emplace_back(i, j);
    }
  }

  Matrix features(n, p.feature_dim);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int block = i / p.nodes_per_block;
    labels[i] = block;
    for (int j = 0; j < p.feature_dim; ++j) {
      const double base = (j % p.blocks == block) ? 1.0 : 0.0;
      const double noise = (p.feature_noise > 0.0) ? p.feature_noise * rng.normal() : 0.0;
      features.at(i, j) = base + noise;
    }
  }

  return build_graph(n, edges, std::move(features), std::move(labels), p.blocks);
}

SparseGraph restrict_to_edges(const SparseGraph& g, const EdgeList& edges) {
  return build_graph(g.num_nodes, edges, g.features, g.labels, g.num_classes);
}

}  // namespace hqgae
