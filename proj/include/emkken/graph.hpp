#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace emkken::graph {

using NodeId = std::int64_t;

struct PaperNode {
    NodeId id = 0;
    std::optional<int> year;
    std::vector<double> meta;
    std::vector<double> embedding;
};

/// Immutable after ingestion. Ids are dense 0..num_nodes-1; the original
/// external ids live in `external_ids`.
struct CitationCorpus {
    std::vector<PaperNode> nodes;
    std::vector<std::pair<NodeId, NodeId>> edges;  // (citing, cited)
    int f_meta = 0;
    int f_embed = 0;
    std::vector<std::int64_t> external_ids;  // dense id -> external id
    std::size_t dropped_self_loops = 0;
    std::size_t dropped_duplicate_edges = 0;

    std::size_t node_count() const { return nodes.size(); }
    std::size_t edge_count() const { return edges.size(); }
    /// Out-neighbors (papers the node cites), sorted ascending.
    std::vector<NodeId> references_of(NodeId center) const;
    /// In-degree in the citation sense (papers citing the node).
    std::vector<int> in_degrees() const;

    void build_adjacency() const;  // lazy index used by references_of

private:
    mutable std::vector<std::vector<NodeId>> out_adj_;
    mutable bool adj_built_ = false;
};

struct EgoNetwork {
    NodeId center = 0;
    std::vector<NodeId> ordered_nodes;
    std::vector<std::pair<NodeId, NodeId>> edges;  // corpus ids
    int central_index = 0;
};

struct GraphStats {
    double avg_degree = 0.0;
    double density = 0.0;
    double clustering_coefficient = 0.0;
    std::size_t node_count = 0;
    std::size_t edge_count = 0;
};

struct IngestOptions {
    bool edge_header = false;
    bool meta_header = false;
    /// If >= 0, that 0-based float column of the metadata file is consumed
    /// as the publication year instead of a feature.
    int year_column = -1;
};

/// Loads edge CSV (citing,cited), metadata CSV (id + F_meta floats) and
/// embeddings (CSV id + floats, or raw f32 binary with a JSON sidecar).
/// Remaps ids densely, drops self-loops and duplicate edges.
CitationCorpus ingest_corpus(const std::string& edge_path,
                             const std::string& meta_path,
                             const std::string& embed_path,
                             const IngestOptions& opts = {});

/// Center plus its direct references, with all corpus edges among them.
/// Ordering applied via order_nodes.
EgoNetwork build_ego_network(const CitationCorpus& corpus, NodeId center);

/// References sorted ascending by (year, id), missing year first by id,
/// center moved last.
EgoNetwork order_nodes(const CitationCorpus& corpus, EgoNetwork ego);

/// Undirected-view statistics. Single-node egos get density/clustering 0.
GraphStats compute_stats(const EgoNetwork& ego);

/// Complexity-based labeling: z-scored composite of center in-degree, node
/// count, and edge count, binned into equal-frequency quantiles of the
/// fitted (training) distribution. Boundary scores go to the lower class.
class ComplexityLabeler {
public:
    struct EgoFeatures {
        double in_degree = 0.0;
        double nodes = 0.0;
        double edges = 0.0;
    };

    static EgoFeatures features_of(const EgoNetwork& ego, const CitationCorpus& corpus);
    static EgoFeatures features_of(const EgoNetwork& ego, const std::vector<int>& corpus_in_degrees);

    void fit(const std::vector<EgoFeatures>& train_features, int n_classes);
    bool fitted() const { return fitted_; }
    int n_classes() const { return n_classes_; }

    double score(const EgoFeatures& f) const;
    int label(const EgoFeatures& f) const;

private:
    bool fitted_ = false;
    int n_classes_ = 0;
    double mean_[3] = {0, 0, 0};
    double std_[3] = {1, 1, 1};
    std::vector<double> boundaries_;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
    bool stratified = true;  // false when a class was too small and we fell back
};

/// Stratified-by-label split, deterministic given seed. A class with fewer
/// samples than splits triggers an unstratified fallback (warning flag in
/// the result).
DatasetSplit split_dataset(const std::vector<int>& labels,
                           double train_ratio,
                           double val_ratio,
                           double test_ratio,
                           std::uint64_t seed);

/// Equal-frequency quantile binning shared by labelers: boundary scores go
/// to the lower class.
std::vector<double> quantile_boundaries(std::vector<double> sorted_scores, int n_classes);
int quantile_bin(double score, const std::vector<double>& boundaries);

}  // namespace emkken::graph
