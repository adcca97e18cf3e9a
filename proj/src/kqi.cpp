#include "emkken/kqi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "emkken/errors.hpp"

namespace emkken::kqi {

KnowledgeTree to_dag(const graph::CitationCorpus& corpus) {
    const std::size_t n = corpus.node_count();
    KnowledgeTree tree;
    tree.parents.assign(n, {});
    tree.children.assign(n, {});

    // arcs follow citation direction: citing -> cited (node -> its parent)
    std::vector<std::vector<NodeId>> cites(n);
    for (const auto& [citing, cited] : corpus.edges) cites[citing].push_back(cited);

    // iterative DFS with colors; a gray->gray arc closes a cycle and is dropped
    enum : char { white, gray, black };
    std::vector<char> color(n, white);
    std::vector<std::vector<char>> keep(n);
    for (std::size_t i = 0; i < n; ++i) keep[i].assign(cites[i].size(), 1);

    struct Frame {
        NodeId node;
        std::size_t next;
    };
    for (std::size_t root = 0; root < n; ++root) {
        if (color[root] != white) continue;
        std::vector<Frame> stack{{static_cast<NodeId>(root), 0}};
        color[root] = gray;
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < cites[f.node].size()) {
                const std::size_t e = f.next++;
                const NodeId to = cites[f.node][e];
                if (color[to] == gray) {
                    keep[f.node][e] = 0;  // back edge: drop to break the cycle
                    ++tree.removed_cycle_edges;
                } else if (color[to] == white) {
                    color[to] = gray;
                    stack.push_back({to, 0});
                }
            } else {
                color[f.node] = black;
                stack.pop_back();
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < cites[i].size(); ++e)
            if (keep[i][e]) {
                tree.parents[i].push_back(cites[i][e]);
                tree.children[cites[i][e]].push_back(static_cast<NodeId>(i));
            }
    return tree;
}

VolumeTable compute_volumes(const KnowledgeTree& tree) {
    const std::size_t n = tree.node_count();
    VolumeTable vt;
    vt.volume.assign(n, 0.0);

    // Kahn over child->parent dependencies: a node is ready once all its
    // children are done
    std::vector<int> pending(n);
    std::vector<NodeId> ready;
    for (std::size_t i = 0; i < n; ++i) {
        pending[i] = tree.d_out(static_cast<NodeId>(i));
        if (pending[i] == 0) ready.push_back(static_cast<NodeId>(i));
    }
    std::size_t done = 0;
    for (std::size_t head = 0; head < ready.size(); ++head) {
        const NodeId a = ready[head];
        double v = static_cast<double>(tree.d_out(a));
        for (NodeId c : tree.children[a]) v += vt.volume[c] / static_cast<double>(tree.d_in(c));
        vt.volume[a] = v;
        ++done;
        for (NodeId p : tree.parents[a])
            if (--pending[p] == 0) ready.push_back(p);
    }
    if (done != n) throw ContractError("compute_volumes: tree contains a cycle");
    double total = 0.0;
    for (double v : vt.volume) total += v;
    vt.total = total;
    return vt;
}

double kqi_node(const KnowledgeTree& tree, const VolumeTable& volumes, NodeId a) {
    const int din = tree.d_in(a);
    if (din == 0) return 0.0;
    const double va = volumes.volume[a];
    if (va == 0.0) return 0.0;  // 0*log(0) convention
    if (volumes.total <= 0.0) return 0.0;
    double kappa = 0.0;
    for (NodeId p : tree.parents[a]) {
        const double vp = volumes.volume[p];
        if (vp <= 0.0)
            throw ContractError("kqi_node: parent " + std::to_string(p) + " has zero volume while child " +
                                std::to_string(a) + " has positive volume");
        const double weight = va / (static_cast<double>(din) * volumes.total);
        const double ratio = va / (static_cast<double>(din) * vp);
        kappa -= weight * std::log2(ratio);
    }
    return kappa;
}

KqiScore kqi_all(const KnowledgeTree& tree, const VolumeTable& volumes) {
    KqiScore score;
    const std::size_t n = tree.node_count();
    score.kappa.resize(n);
    for (std::size_t i = 0; i < n; ++i) score.kappa[i] = kqi_node(tree, volumes, static_cast<NodeId>(i));
    return score;
}

LogBinResult log_bin(const std::vector<double>& scores, int n_classes) {
    if (n_classes < 2) throw ContractError("log_bin needs >= 2 classes");
    LogBinResult result;
    result.labels.assign(scores.size(), 0);
    std::vector<double> logs;
    for (double s : scores)
        if (s > 0.0) logs.push_back(std::log(s));
    if (logs.empty()) {
        result.degenerate_all_zero = true;
        return result;
    }
    std::sort(logs.begin(), logs.end());
    const auto boundaries = graph::quantile_boundaries(std::move(logs), n_classes);
    for (std::size_t i = 0; i < scores.size(); ++i)
        result.labels[i] = scores[i] > 0.0 ? graph::quantile_bin(std::log(scores[i]), boundaries) : 0;
    return result;
}

}  // namespace emkken::kqi
