#include "hycon/network.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include "hycon/error.hpp"

namespace hycon {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DisconnectedParent: return "DisconnectedParent";
    case ErrorCode::DisconnectedCluster: return "DisconnectedCluster";
    case ErrorCode::BadPartition: return "BadPartition";
    case ErrorCode::SelfEdge: return "SelfEdge";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::InfeasibleRequest: return "InfeasibleRequest";
    case ErrorCode::NotConnected: return "NotConnected";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EventSkipped: return "EventSkipped";
    case ErrorCode::NotInJumpSet: return "NotInJumpSet";
    case ErrorCode::TimerOutOfRange: return "TimerOutOfRange";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NoCertificate: return "NoCertificate";
    case ErrorCode::OmegaTooLarge: return "OmegaTooLarge";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

bool is_connected(const NodeSet& nodes, const std::vector<Edge>& edges) {
  if (nodes.size() <= 1) return true;
  std::map<int, std::vector<int>> adj;
  for (int v : nodes) adj[v];
  for (const auto& [a, b] : edges) {
    if (adj.count(a) && adj.count(b)) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  }
  std::set<int> seen{nodes.front()};
  std::queue<int> frontier;
  frontier.push(nodes.front());
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop();
    for (int w : adj[v]) {
      if (seen.insert(w).second) frontier.push(w);
    }
  }
  return seen.size() == adj.size();
}

ClusteredNetwork ClusteredNetwork::build(int n_nodes, std::vector<Edge> edges,
                                         std::vector<NodeSet> partition) {
  if (n_nodes < 2) {
    throw Error(ErrorCode::InfeasibleRequest, "a clustered network needs at least 2 nodes");
  }
  for (auto& e : edges) {
    if (e.first < 1 || e.first > n_nodes || e.second < 1 || e.second > n_nodes) {
      throw Error(ErrorCode::UnknownNode, "edge (" + std::to_string(e.first) + "," +
                                              std::to_string(e.second) + ") out of range");
    }
    if (e.first == e.second) {
      throw Error(ErrorCode::SelfEdge, "self edge on node " + std::to_string(e.first));
    }
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  ClusteredNetwork net;
  net.n_nodes_ = n_nodes;
  net.cluster_of_.assign(n_nodes, -1);
  for (std::size_t c = 0; c < partition.size(); ++c) {
    auto& cluster = partition[c];
    if (cluster.empty()) {
      throw Error(ErrorCode::BadPartition, "cluster " + std::to_string(c + 1) + " is empty");
    }
    std::sort(cluster.begin(), cluster.end());
    for (int v : cluster) {
      if (v < 1 || v > n_nodes) {
        throw Error(ErrorCode::UnknownNode, "partition references node " + std::to_string(v));
      }
      if (net.cluster_of_[v - 1] != -1) {
        throw Error(ErrorCode::BadPartition, "node " + std::to_string(v) + " is in two clusters");
      }
      net.cluster_of_[v - 1] = static_cast<int>(c);
    }
  }
  for (int v = 0; v < n_nodes; ++v) {
    if (net.cluster_of_[v] == -1) {
      throw Error(ErrorCode::BadPartition, "node " + std::to_string(v + 1) + " is in no cluster");
    }
  }

  NodeSet all(n_nodes);
  std::iota(all.begin(), all.end(), 1);
  if (!is_connected(all, edges)) {
    throw Error(ErrorCode::DisconnectedParent, "parent graph is not connected");
  }
  for (std::size_t c = 0; c < partition.size(); ++c) {
    if (!is_connected(partition[c], edges)) {
      throw Error(ErrorCode::DisconnectedCluster,
                  "cluster " + std::to_string(c + 1) + " induces a disconnected sub-graph");
    }
  }

  net.edges_ = std::move(edges);
  net.partition_ = std::move(partition);
  net.neighbors_.assign(n_nodes, {});
  net.cluster_edges_.assign(net.partition_.size(), {});

  std::map<std::pair<int, int>, InterCluster> by_pair;
  for (const auto& e : net.edges_) {
    net.neighbors_[e.first - 1].push_back(e.second);
    net.neighbors_[e.second - 1].push_back(e.first);
    int ca = net.cluster_of_[e.first - 1];
    int cb = net.cluster_of_[e.second - 1];
    if (ca == cb) {
      net.cluster_edges_[ca].push_back(e);
      continue;
    }
    auto key = std::minmax(ca, cb);
    auto& ic = by_pair[{key.first, key.second}];
    ic.cluster_a = key.first;
    ic.cluster_b = key.second;
    ic.edges.push_back(e);
    ic.nodes.push_back(e.first);
    ic.nodes.push_back(e.second);
  }
  for (auto& nb : net.neighbors_) std::sort(nb.begin(), nb.end());

  // b(p,q) = r: lexicographic order of realized cluster pairs.
  for (auto& [key, ic] : by_pair) {
    std::sort(ic.nodes.begin(), ic.nodes.end());
    ic.nodes.erase(std::unique(ic.nodes.begin(), ic.nodes.end()), ic.nodes.end());
    net.pair_label_[key] = static_cast<int>(net.inter_clusters_.size());
    net.inter_clusters_.push_back(std::move(ic));
  }
  return net;
}

int ClusteredNetwork::cluster_of(NodeId p) const {
  if (p.index < 1 || p.index > n_nodes_) {
    throw Error(ErrorCode::UnknownNode, "node " + std::to_string(p.index));
  }
  return cluster_of_[p.index - 1];
}

std::optional<int> ClusteredNetwork::inter_cluster_label(int cluster_a, int cluster_b) const {
  auto key = std::minmax(cluster_a, cluster_b);
  auto it = pair_label_.find({key.first, key.second});
  if (it == pair_label_.end()) return std::nullopt;
  return it->second;
}

bool ClusteredNetwork::in_inter_cluster(NodeId p, int r) const {
  const auto& nodes = inter_clusters_.at(r).nodes;
  return std::binary_search(nodes.begin(), nodes.end(), p.index);
}

const NodeSet& ClusteredNetwork::neighbors(NodeId p) const {
  if (p.index < 1 || p.index > n_nodes_) {
    throw Error(ErrorCode::UnknownNode, "node " + std::to_string(p.index));
  }
  return neighbors_[p.index - 1];
}

NeighborPartition ClusteredNetwork::partition_neighbors(NodeId p) const {
  const int own = cluster_of(p);
  NeighborPartition out;
  for (int r = 0; r < num_inter_clusters(); ++r) out.per_inter_cluster[r];
  for (int q : neighbors(p)) {
    const int cq = cluster_of_[q - 1];
    if (cq == own) {
      out.same_cluster.push_back(q);
    } else {
      out.per_inter_cluster[pair_label_.at({std::min(own, cq), std::max(own, cq)})].push_back(q);
    }
  }
  return out;
}

Eigen::MatrixXd ClusteredNetwork::adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_nodes_, n_nodes_);
  for (const auto& [u, v] : edges_) {
    a(u - 1, v - 1) = 1.0;
    a(v - 1, u - 1) = 1.0;
  }
  return a;
}

namespace {

Eigen::MatrixXd laplacian_of(const Eigen::MatrixXd& adj) {
  Eigen::MatrixXd l = -adj;
  l.diagonal() = adj.rowwise().sum();
  return l;
}

Eigen::MatrixXd adjacency_from(int n, const std::vector<Edge>& edges) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [u, v] : edges) {
    a(u - 1, v - 1) = 1.0;
    a(v - 1, u - 1) = 1.0;
  }
  return a;
}

}  // namespace

Eigen::MatrixXd ClusteredNetwork::laplacian() const { return laplacian_of(adjacency()); }

Eigen::MatrixXd ClusteredNetwork::augmented_adjacency(const NodeSet& s) const {
  if (s.empty()) throw Error(ErrorCode::EmptySet, "augmented matrix of an empty node set");
  NodeSet sorted = s;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int v : sorted) {
    if (v < 1 || v > n_nodes_) throw Error(ErrorCode::UnknownNode, "node " + std::to_string(v));
  }
  for (const auto& ic : inter_clusters_) {
    if (ic.nodes == sorted) return adjacency_from(n_nodes_, ic.edges);
  }
  std::vector<Edge> induced;
  for (const auto& e : edges_) {
    if (std::binary_search(sorted.begin(), sorted.end(), e.first) &&
        std::binary_search(sorted.begin(), sorted.end(), e.second)) {
      induced.push_back(e);
    }
  }
  return adjacency_from(n_nodes_, induced);
}

Eigen::MatrixXd ClusteredNetwork::augmented_laplacian(const NodeSet& s) const {
  return laplacian_of(augmented_adjacency(s));
}

Eigen::MatrixXd ClusteredNetwork::cluster_laplacian(int cluster) const {
  return laplacian_of(adjacency_from(n_nodes_, cluster_edges_.at(cluster)));
}

Eigen::MatrixXd ClusteredNetwork::inter_cluster_laplacian(int r) const {
  return laplacian_of(adjacency_from(n_nodes_, inter_clusters_.at(r).edges));
}

Eigen::MatrixXd ClusteredNetwork::intra_cluster_laplacian() const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n_nodes_, n_nodes_);
  for (int c = 0; c < num_clusters(); ++c) l += cluster_laplacian(c);
  return l;
}

std::string ClusteredNetwork::to_adjacency_list() const {
  std::ostringstream os;
  os << "# nodes " << n_nodes_ << " clusters " << num_clusters() << " inter_clusters "
     << num_inter_clusters() << "\n";
  for (int v = 1; v <= n_nodes_; ++v) {
    os << v << ":";
    for (int q : neighbors_[v - 1]) os << ' ' << q;
    os << "\n";
  }
  for (int c = 0; c < num_clusters(); ++c) {
    os << "cluster " << c + 1 << ":";
    for (int v : partition_[c]) os << ' ' << v;
    os << "\n";
  }
  for (int r = 0; r < num_inter_clusters(); ++r) {
    const auto& ic = inter_clusters_[r];
    os << "inter_cluster " << r + 1 << " (" << ic.cluster_a + 1 << "," << ic.cluster_b + 1
       << "):";
    for (int v : ic.nodes) os << ' ' << v;
    os << " |";
    for (const auto& [u, w] : ic.edges) os << ' ' << u << '-' << w;
    os << "\n";
  }
  return os.str();
}

ClusteredNetwork random_clustered_network(int n_nodes, int n_clusters, double extra_edge_prob,
                                          std::uint64_t seed) {
  if (n_clusters < 1 || n_clusters > n_nodes) {
    throw Error(ErrorCode::InfeasibleRequest, "need 1 <= clusters <= nodes, got " +
                                                  std::to_string(n_clusters) + " clusters for " +
                                                  std::to_string(n_nodes) + " nodes");
  }
  if (n_nodes < 2) throw Error(ErrorCode::InfeasibleRequest, "need at least 2 nodes");
  if (!(extra_edge_prob >= 0.0 && extra_edge_prob <= 1.0)) {
    throw Error(ErrorCode::InfeasibleRequest, "extra_edge_prob must lie in [0,1]");
  }
  std::mt19937_64 rng(seed);

  // Uniform composition of N into M positive parts: choose M-1 distinct cut points.
  std::vector<int> cuts(n_nodes - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  std::shuffle(cuts.begin(), cuts.end(), rng);
  cuts.resize(n_clusters - 1);
  std::sort(cuts.begin(), cuts.end());
  cuts.insert(cuts.begin(), 0);
  cuts.push_back(n_nodes);

  std::vector<int> order(n_nodes);
  std::iota(order.begin(), order.end(), 1);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<NodeSet> partition(n_clusters);
  std::set<Edge> edges;
  auto add_edge = [&](int a, int b) { edges.insert(std::minmax(a, b)); };
  auto pick = [&](const NodeSet& s) {
    std::uniform_int_distribution<std::size_t> d(0, s.size() - 1);
    return s[d(rng)];
  };

  for (int c = 0; c < n_clusters; ++c) {
    for (int k = cuts[c]; k < cuts[c + 1]; ++k) {
      const int v = order[k];
      // BFS-style growth: attach each new member to one already placed.
      if (!partition[c].empty()) add_edge(v, pick(partition[c]));
      partition[c].push_back(v);
    }
  }

  std::vector<int> cluster_order(n_clusters);
  std::iota(cluster_order.begin(), cluster_order.end(), 0);
  std::shuffle(cluster_order.begin(), cluster_order.end(), rng);
  for (int k = 1; k < n_clusters; ++k) {
    std::uniform_int_distribution<int> d(0, k - 1);
    const int target = cluster_order[d(rng)];
    add_edge(pick(partition[cluster_order[k]]), pick(partition[target]));
  }

  std::bernoulli_distribution extra(extra_edge_prob);
  for (int a = 1; a <= n_nodes; ++a) {
    for (int b = a + 1; b <= n_nodes; ++b) {
      if (!edges.count({a, b}) && extra(rng)) edges.insert({a, b});
    }
  }
  return ClusteredNetwork::build(n_nodes, {edges.begin(), edges.end()}, std::move(partition));
}

}  // namespace hycon
