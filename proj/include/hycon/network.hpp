#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace hycon {

/// 1-based node label, as used in configs and on every public API.
struct NodeId {
  int index;
  friend bool operator==(NodeId a, NodeId b) { return a.index == b.index; }
  friend bool operator<(NodeId a, NodeId b) { return a.index < b.index; }
};

/// Unordered edge stored with first < second (1-based).
using Edge = std::pair<int, int>;
using NodeSet = std::vector<int>;  // sorted, 1-based

/// Nodes of two clusters joined by at least one cross edge, together with those
/// cross edges. Clusters are referred to by 0-based position in the partition.
struct InterCluster {
  int cluster_a = 0;
  int cluster_b = 0;
  NodeSet nodes;
  std::vector<Edge> edges;
};

struct NeighborPartition {
  NodeSet same_cluster;
  /// Keyed by 0-based inter-cluster label r; every inter-cluster appears, possibly empty.
  std::map<int, NodeSet> per_inter_cluster;
};

/// Static undirected connected graph with a fixed partition into connected clusters.
/// Immutable once built.
class ClusteredNetwork {
 public:
  ClusteredNetwork() = default;  // empty; use build()

  /// Validates every structural invariant; throws hycon::Error on the first failure.
  static ClusteredNetwork build(int n_nodes, std::vector<Edge> edges,
                                std::vector<NodeSet> partition);

  int size() const { return n_nodes_; }
  int num_clusters() const { return static_cast<int>(partition_.size()); }
  int num_inter_clusters() const { return static_cast<int>(inter_clusters_.size()); }

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<NodeSet>& partition() const { return partition_; }
  const std::vector<InterCluster>& inter_clusters() const { return inter_clusters_; }
  const std::vector<Edge>& cluster_edges(int cluster) const { return cluster_edges_.at(cluster); }

  /// 0-based cluster index of a node.
  int cluster_of(NodeId p) const;
  /// Label r of the inter-cluster between clusters a and b (0-based, order-free).
  std::optional<int> inter_cluster_label(int cluster_a, int cluster_b) const;
  bool in_inter_cluster(NodeId p, int r) const;

  const NodeSet& neighbors(NodeId p) const;
  NeighborPartition partition_neighbors(NodeId p) const;

  Eigen::MatrixXd adjacency() const;
  Eigen::MatrixXd laplacian() const;

  /// N×N augmented adjacency of S. If S is exactly an inter-cluster node set the
  /// cross edges E_pq are used, otherwise the edges induced by S.
  Eigen::MatrixXd augmented_adjacency(const NodeSet& s) const;
  Eigen::MatrixXd augmented_laplacian(const NodeSet& s) const;

  Eigen::MatrixXd cluster_laplacian(int cluster) const;
  Eigen::MatrixXd inter_cluster_laplacian(int r) const;
  /// Σ_p L[V_p]; row p is the Laplacian row of agent p's own cluster.
  Eigen::MatrixXd intra_cluster_laplacian() const;

  /// "node: nbr nbr ..." lines followed by cluster and inter-cluster listings.
  std::string to_adjacency_list() const;

 private:
  int n_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<NodeSet> partition_;
  std::vector<int> cluster_of_;  // 0-based node -> cluster
  std::vector<NodeSet> neighbors_;
  std::vector<std::vector<Edge>> cluster_edges_;
  std::vector<InterCluster> inter_clusters_;
  std::map<std::pair<int, int>, int> pair_label_;
};

/// Seeded random clustered network: random composition of cluster sizes, random
/// spanning tree inside each cluster, spanning tree of cross edges between clusters,
/// then every remaining pair is added with probability extra_edge_prob.
ClusteredNetwork random_clustered_network(int n_nodes, int n_clusters, double extra_edge_prob,
                                          std::uint64_t seed);

/// True when the edge list restricted to `nodes` forms a connected graph.
bool is_connected(const NodeSet& nodes, const std::vector<Edge>& edges);

}  // namespace hycon
