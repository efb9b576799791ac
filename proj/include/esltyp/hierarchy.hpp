#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esltyp/util.hpp"

namespace esltyp {

// Binary merge tree from bottom-up agglomeration. Node ids follow the usual
// convention: 0..n-1 are leaves, n+k is the cluster created by merge k.
struct ClusterMerge {
  int left = 0;
  int right = 0;
  double height = 0.0;
  int count = 0;  // leaves covered by the new cluster
};

struct ClusterTree {
  std::vector<std::string> leaves;
  std::vector<ClusterMerge> merges;

  size_t num_leaves() const { return leaves.size(); }
  int root_id() const { return static_cast<int>(leaves.size() + merges.size()) - 1; }

  // Height of any node: leaves sit at 0.
  double height_of(int node) const {
    return node < static_cast<int>(leaves.size())
               ? 0.0
               : merges[static_cast<size_t>(node) - leaves.size()].height;
  }
};

inline void validate(const ClusterTree& tree) {
  const size_t n = tree.leaves.size();
  if (n < 2) throw DomainError("cluster tree: need at least 2 leaves");
  if (tree.merges.size() != n - 1)
    throw DomainError("cluster tree: expected " + std::to_string(n - 1) + " merges");
  std::vector<bool> used(2 * n - 1, false);
  double prev_height = 0.0;
  for (size_t k = 0; k < tree.merges.size(); ++k) {
    const ClusterMerge& m = tree.merges[k];
    int max_id = static_cast<int>(n + k);
    for (int child : {m.left, m.right}) {
      if (child < 0 || child >= max_id)
        throw DomainError("cluster tree: merge child id out of range");
      if (used[static_cast<size_t>(child)])
        throw DomainError("cluster tree: node used twice as a child");
      used[static_cast<size_t>(child)] = true;
    }
    if (m.height + 1e-12 < prev_height)
      throw DomainError("cluster tree: merge heights decrease");
    prev_height = m.height;
  }
}

// Ward update: distance between the merged cluster a∪b and cluster c,
// given the pre-merge distances and cluster sizes.
inline double lance_williams_update(double d_ac, double d_bc, double d_ab, int n_a, int n_b,
                                    int n_c) {
  if (d_ac < 0 || d_bc < 0 || d_ab < 0)
    throw DomainError("lance_williams_update: distances must be non-negative");
  if (n_a < 1 || n_b < 1 || n_c < 1)
    throw DomainError("lance_williams_update: cluster sizes must be >= 1");
  const double total = static_cast<double>(n_a + n_b + n_c);
  const double radicand = ((n_a + n_c) * d_ac * d_ac + (n_b + n_c) * d_bc * d_bc -
                           n_c * d_ab * d_ab) /
                          total;
  if (radicand < 0.0)
    throw DomainError("lance_williams_update: negative radicand (" +
                      format_g9(radicand) + "); input distances are inconsistent");
  return std::sqrt(radicand);
}

// Bottom-up Ward agglomeration on a symmetric distance matrix with zero
// diagonal. Ties on the minimum distance break toward the pair whose member
// labels sort lowest, so the result depends only on the labeled distances.
inline ClusterTree ward_cluster(const std::vector<std::string>& labels,
                                const std::vector<double>& distances) {
  const size_t n = labels.size();
  if (n < 2) throw DomainError("ward_cluster: need at least 2 items");
  if (distances.size() != n * n) throw DomainError("ward_cluster: distance matrix size mismatch");
  for (size_t i = 0; i < n; ++i) {
    if (distances[i * n + i] != 0.0)
      throw DomainError("ward_cluster: diagonal must be zero");
    for (size_t j = 0; j < n; ++j) {
      double d = distances[i * n + j];
      if (!(d >= 0.0))
        throw DomainError("ward_cluster: distances must be non-negative and finite");
      if (d != distances[j * n + i])
        throw DomainError("ward_cluster: distance matrix must be symmetric");
    }
  }

  struct Active {
    int node;                // tree node id
    int size;                // member count
    const std::string* low;  // lexicographically smallest member label
  };
  std::vector<Active> active;
  active.reserve(n);
  for (size_t i = 0; i < n; ++i)
    active.push_back(Active{static_cast<int>(i), 1, &labels[i]});

  // Distances between active clusters, indexed by position in `active`.
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) dist[i][j] = distances[i * n + j];

  ClusterTree tree;
  tree.leaves = labels;

  for (size_t step = 0; step + 1 < n; ++step) {
    const size_t m = active.size();
    size_t best_i = 0, best_j = 1;
    bool have = false;
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = i + 1; j < m; ++j) {
        if (!have || dist[i][j] < dist[best_i][best_j]) {
          best_i = i;
          best_j = j;
          have = true;
        } else if (dist[i][j] == dist[best_i][best_j]) {
          auto key = [&](size_t a, size_t b) {
            return std::minmax(*active[a].low, *active[b].low,
                               std::less<std::string>());
          };
          if (key(i, j) < key(best_i, best_j)) {
            best_i = i;
            best_j = j;
          }
        }
      }
    }

    const double merge_dist = dist[best_i][best_j];
    const Active a = active[best_i];
    const Active b = active[best_j];
    // Children ordered by lowest member label.
    ClusterMerge merge;
    merge.left = *a.low < *b.low ? a.node : b.node;
    merge.right = *a.low < *b.low ? b.node : a.node;
    merge.height = merge_dist;
    merge.count = a.size + b.size;

    // Ward distances from the new cluster to every other active cluster.
    std::vector<double> to_new(m, 0.0);
    for (size_t c = 0; c < m; ++c) {
      if (c == best_i || c == best_j) continue;
      to_new[c] = lance_williams_update(dist[best_i][c], dist[best_j][c], merge_dist, a.size,
                                        b.size, active[c].size);
    }

    // Replace cluster at best_i with the merge, drop best_j.
    active[best_i] = Active{static_cast<int>(n + step), merge.count,
                            std::min(*a.low, *b.low) == *a.low ? a.low : b.low};
    for (size_t c = 0; c < m; ++c) {
      dist[best_i][c] = to_new[c];
      dist[c][best_i] = to_new[c];
    }
    dist[best_i][best_i] = 0.0;
    active.erase(active.begin() + static_cast<long>(best_j));
    for (auto& row : dist) row.erase(row.begin() + static_cast<long>(best_j));
    dist.erase(dist.begin() + static_cast<long>(best_j));

    tree.merges.push_back(merge);
  }

  validate(tree);
  return tree;
}

// --- exports -------------------------------------------------------------

namespace detail {

inline bool newick_needs_quoting(const std::string& name) {
  if (name.empty()) return true;
  return name.find_first_of(" \t()[]{}:;,'\"") != std::string::npos;
}

inline std::string newick_escape(const std::string& name) {
  if (!newick_needs_quoting(name)) return name;
  std::string out = "'";
  for (char c : name) {
    out += c;
    if (c == '\'') out += '\'';
  }
  out += '\'';
  return out;
}

}  // namespace detail

// Newick text with branch lengths = parent height - child height.
inline std::string to_newick(const ClusterTree& tree) {
  validate(tree);
  const int n = static_cast<int>(tree.leaves.size());
  std::function<void(int, double, std::string&)> emit = [&](int node, double parent_height,
                                                            std::string& out) {
    if (node < n) {
      out += detail::newick_escape(tree.leaves[static_cast<size_t>(node)]);
      out += ':';
      out += format_exact(parent_height);
      return;
    }
    const ClusterMerge& m = tree.merges[static_cast<size_t>(node - n)];
    out += '(';
    emit(m.left, m.height, out);
    out += ',';
    emit(m.right, m.height, out);
    out += ')';
    if (parent_height >= 0.0) {
      out += ':';
      out += format_exact(parent_height - m.height);
    }
  };
  std::string out;
  emit(tree.root_id(), -1.0, out);  // negative parent height = no branch length
  out += ';';
  return out;
}

// Minimal Newick reader for round-trip checks of trees we emitted: binary
// topology, branch lengths present on all non-root nodes.
struct NewickNode {
  std::string name;                 // leaves only
  double branch_length = 0.0;       // to the parent
  std::vector<NewickNode> children;
};

namespace detail {

inline NewickNode parse_newick_node(const std::string& text, size_t& pos);

inline std::string parse_newick_label(const std::string& text, size_t& pos) {
  if (pos < text.size() && text[pos] == '\'') {
    std::string out;
    ++pos;
    while (pos < text.size()) {
      if (text[pos] == '\'') {
        if (pos + 1 < text.size() && text[pos + 1] == '\'') {
          out += '\'';
          pos += 2;
        } else {
          ++pos;
          return out;
        }
      } else {
        out += text[pos++];
      }
    }
    throw DomainError("newick: unterminated quoted label");
  }
  size_t start = pos;
  while (pos < text.size() && std::string("(),:;").find(text[pos]) == std::string::npos) ++pos;
  return text.substr(start, pos - start);
}

inline NewickNode parse_newick_node(const std::string& text, size_t& pos) {
  NewickNode node;
  if (pos < text.size() && text[pos] == '(') {
    ++pos;
    while (true) {
      node.children.push_back(parse_newick_node(text, pos));
      if (pos >= text.size()) throw DomainError("newick: unexpected end of input");
      if (text[pos] == ',') {
        ++pos;
        continue;
      }
      if (text[pos] == ')') {
        ++pos;
        break;
      }
      throw DomainError("newick: expected ',' or ')'");
    }
    parse_newick_label(text, pos);  // internal labels are ignored
  } else {
    node.name = parse_newick_label(text, pos);
  }
  if (pos < text.size() && text[pos] == ':') {
    ++pos;
    size_t start = pos;
    while (pos < text.size() && std::string("(),;").find(text[pos]) == std::string::npos) ++pos;
    node.branch_length = parse_double(text.substr(start, pos - start), "branch length");
  }
  return node;
}

}  // namespace detail

inline NewickNode parse_newick(const std::string& text) {
  size_t pos = 0;
  NewickNode root = detail::parse_newick_node(text, pos);
  if (pos >= text.size() || text[pos] != ';') throw DomainError("newick: missing ';'");
  return root;
}

inline nlohmann::json tree_to_json(const ClusterTree& tree) {
  nlohmann::json merges = nlohmann::json::array();
  for (const ClusterMerge& m : tree.merges)
    merges.push_back({{"left", m.left},
                      {"right", m.right},
                      {"height", m.height},
                      {"count", m.count}});
  return nlohmann::json{{"leaves", tree.leaves}, {"merges", std::move(merges)}};
}

inline ClusterTree tree_from_json(const nlohmann::json& j) {
  ClusterTree tree;
  tree.leaves = j.at("leaves").get<std::vector<std::string>>();
  for (const auto& m : j.at("merges"))
    tree.merges.push_back(ClusterMerge{m.at("left").get<int>(), m.at("right").get<int>(),
                                       m.at("height").get<double>(), m.at("count").get<int>()});
  validate(tree);
  return tree;
}

// Static dendrogram: leaves stacked on the left, merge heights on the x axis.
inline std::string to_svg(const ClusterTree& tree) {
  validate(tree);
  const int n = static_cast<int>(tree.leaves.size());
  const double row_height = 22.0;
  const double label_width = 120.0;
  const double plot_width = 480.0;
  const double margin = 12.0;
  const double height = margin * 2 + row_height * n;
  const double max_merge = tree.merges.back().height;
  const double scale = max_merge > 0 ? plot_width / max_merge : 1.0;

  // Leaf order: left-to-right depth-first walk so subtrees stay contiguous.
  std::vector<int> leaf_order;
  std::function<void(int)> walk = [&](int node) {
    if (node < n) {
      leaf_order.push_back(node);
      return;
    }
    const ClusterMerge& m = tree.merges[static_cast<size_t>(node - n)];
    walk(m.left);
    walk(m.right);
  };
  walk(tree.root_id());

  std::vector<double> y_pos(static_cast<size_t>(2 * n - 1), 0.0);
  for (size_t i = 0; i < leaf_order.size(); ++i)
    y_pos[static_cast<size_t>(leaf_order[i])] = margin + row_height * (static_cast<double>(i) + 0.5);

  auto x_of = [&](int node) { return label_width + tree.height_of(node) * scale; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         format_g9(label_width + plot_width + 2 * margin) + "\" height=\"" + format_g9(height) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (size_t k = 0; k < tree.merges.size(); ++k) {
    const ClusterMerge& m = tree.merges[k];
    int node = n + static_cast<int>(k);
    double x = x_of(node);
    double yl = y_pos[static_cast<size_t>(m.left)];
    double yr = y_pos[static_cast<size_t>(m.right)];
    y_pos[static_cast<size_t>(node)] = 0.5 * (yl + yr);
    auto line = [&svg](double x1, double y1, double x2, double y2) {
      svg += "  <line x1=\"" + format_g9(x1) + "\" y1=\"" + format_g9(y1) + "\" x2=\"" +
             format_g9(x2) + "\" y2=\"" + format_g9(y2) +
             "\" stroke=\"#333\" stroke-width=\"1.5\"/>\n";
    };
    line(x_of(m.left), yl, x, yl);
    line(x_of(m.right), yr, x, yr);
    line(x, yl, x, yr);
  }
  for (int leaf = 0; leaf < n; ++leaf) {
    svg += "  <text x=\"" + format_g9(label_width - 6.0) + "\" y=\"" +
           format_g9(y_pos[static_cast<size_t>(leaf)] + 4.0) + "\" text-anchor=\"end\">";
    for (char c : tree.leaves[static_cast<size_t>(leaf)]) {
      switch (c) {
        case '&': svg += "&amp;"; break;
        case '<': svg += "&lt;"; break;
        case '>': svg += "&gt;"; break;
        default: svg += c;
      }
    }
    svg += "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace esltyp
