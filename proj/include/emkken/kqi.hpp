#pragma once

#include <cstddef>
#include <vector>

#include "emkken/graph.hpp"

namespace emkken::kqi {

using graph::NodeId;

/// Knowledge tree over the corpus DAG. Parents of a node are the papers it
/// cites (knowledge flows from cited to citing); children are the papers
/// citing it. d_in = #parents, d_out = #children.
struct KnowledgeTree {
    std::vector<std::vector<NodeId>> parents;
    std::vector<std::vector<NodeId>> children;
    std::size_t removed_cycle_edges = 0;

    std::size_t node_count() const { return parents.size(); }
    int d_in(NodeId a) const { return static_cast<int>(parents[a].size()); }
    int d_out(NodeId a) const { return static_cast<int>(children[a].size()); }
};

/// Knowledge-tree volumes: V_a = d_out(a) + sum over children c of
/// V_c / d_in(c). Leaves (d_out = 0) have volume 0.
struct VolumeTable {
    std::vector<double> volume;
    double total = 0.0;  // W = sum of all volumes
};

struct KqiScore {
    std::vector<double> kappa;
};

/// Orients the citation edges into the knowledge tree and repairs cycles by
/// dropping the closing edge of each cycle found in depth-first order
/// (deterministic given ingestion order).
KnowledgeTree to_dag(const graph::CitationCorpus& corpus);

/// Volumes in reverse topological order (children before parents).
/// Throws ContractError if the tree is cyclic.
VolumeTable compute_volumes(const KnowledgeTree& tree);

/// Structural-entropy score of one node:
///   kappa_a = -sum over parents p of (V_a/(d_in(a)*W)) * log2(V_a/(d_in(a)*V_p))
/// with the 0*log(0) = 0 convention; 0 when d_in = 0 or W = 0.
double kqi_node(const KnowledgeTree& tree, const VolumeTable& volumes, NodeId a);

KqiScore kqi_all(const KnowledgeTree& tree, const VolumeTable& volumes);

struct LogBinResult {
    std::vector<int> labels;
    bool degenerate_all_zero = false;  // single-class warning
};

/// Natural-log transform of positive scores, zeros pinned to class 0, the
/// rest binned by equal-frequency quantiles into n_classes labels.
LogBinResult log_bin(const std::vector<double>& scores, int n_classes);

}  // namespace emkken::kqi
