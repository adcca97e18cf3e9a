#include "emkken/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "emkken/errors.hpp"
#include "emkken/io_util.hpp"
#include "emkken/tensor.hpp"
#include "nlohmann/json.hpp"

namespace emkken::graph {

void CitationCorpus::build_adjacency() const {
    if (adj_built_) return;
    out_adj_.assign(nodes.size(), {});
    for (const auto& [citing, cited] : edges) out_adj_[citing].push_back(cited);
    for (auto& nbrs : out_adj_) std::sort(nbrs.begin(), nbrs.end());
    adj_built_ = true;
}

std::vector<NodeId> CitationCorpus::references_of(NodeId center) const {
    build_adjacency();
    if (center < 0 || center >= static_cast<NodeId>(nodes.size()))
        throw LookupError("unknown node id " + std::to_string(center));
    return out_adj_[center];
}

std::vector<int> CitationCorpus::in_degrees() const {
    std::vector<int> deg(nodes.size(), 0);
    for (const auto& [citing, cited] : edges) ++deg[cited];
    return deg;
}

namespace {

std::vector<std::string> read_csv_lines(const std::string& path) {
    if (!io::file_exists(path)) throw ParseError("file not found: " + path);
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool blank(const std::string& s) {
    return s.find_first_not_of(" \t") == std::string::npos;
}

struct MetaRow {
    std::int64_t external_id;
    std::optional<int> year;
    std::vector<double> features;
};

}  // namespace

CitationCorpus ingest_corpus(const std::string& edge_path,
                             const std::string& meta_path,
                             const std::string& embed_path,
                             const IngestOptions& opts) {
    CitationCorpus corpus;

    // --- metadata: id + float columns, optional year column ---
    auto meta_lines = read_csv_lines(meta_path);
    std::vector<MetaRow> meta_rows;
    std::unordered_map<std::int64_t, NodeId> id_map;
    int f_meta = -1;
    for (std::size_t ln = 0; ln < meta_lines.size(); ++ln) {
        if (blank(meta_lines[ln])) continue;
        if (opts.meta_header && meta_rows.empty() && id_map.empty() && ln == 0) continue;
        const std::string where = meta_path + ":" + std::to_string(ln + 1);
        auto fields = io::split_csv_line(meta_lines[ln]);
        if (fields.size() < 2) throw ParseError("metadata row needs id + at least one column at " + where);
        MetaRow row;
        row.external_id = io::parse_int(fields[0], where);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const double v = io::parse_double(fields[i], where);
            if (opts.year_column == static_cast<int>(i) - 1)
                row.year = static_cast<int>(v);
            else
                row.features.push_back(v);
        }
        for (double v : row.features)
            if (!std::isfinite(v)) throw SchemaError("non-finite metadata value at " + where);
        if (f_meta < 0)
            f_meta = static_cast<int>(row.features.size());
        else if (static_cast<int>(row.features.size()) != f_meta)
            throw SchemaError("metadata row has " + std::to_string(row.features.size()) + " features, expected " +
                              std::to_string(f_meta) + " at " + where);
        if (id_map.count(row.external_id))
            throw SchemaError("duplicate node id " + std::to_string(row.external_id) + " at " + where);
        id_map[row.external_id] = static_cast<NodeId>(meta_rows.size());
        meta_rows.push_back(std::move(row));
    }
    if (meta_rows.empty()) throw SchemaError("metadata file has no rows: " + meta_path);
    if (f_meta == 0) throw SchemaError("metadata file has no feature columns: " + meta_path);

    // --- embeddings: CSV (id + floats) or raw f32 with JSON sidecar ---
    std::vector<std::vector<double>> embeds(meta_rows.size());
    int f_embed = -1;
    const std::string sidecar = embed_path + ".json";
    if (io::file_exists(sidecar)) {
        nlohmann::json meta_json;
        try {
            meta_json = nlohmann::json::parse(io::read_text(sidecar));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("bad sidecar " + sidecar + ": " + e.what());
        }
        if (!meta_json.contains("count") || !meta_json.contains("dim"))
            throw SchemaError("sidecar must hold {\"count\",\"dim\"}: " + sidecar);
        const std::size_t count = meta_json["count"].get<std::size_t>();
        f_embed = meta_json["dim"].get<int>();
        if (count != meta_rows.size())
            throw SchemaError("embedding count " + std::to_string(count) + " != node count " +
                              std::to_string(meta_rows.size()));
        auto bytes = io::read_bytes(embed_path);
        if (bytes.size() != count * static_cast<std::size_t>(f_embed) * 4)
            throw SchemaError("embedding payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(count * f_embed * 4));
        for (std::size_t i = 0; i < count; ++i) {
            embeds[i].resize(f_embed);
            for (int j = 0; j < f_embed; ++j) {
                float f;
                std::memcpy(&f, bytes.data() + (i * f_embed + j) * 4, 4);
                if (!std::isfinite(f)) throw SchemaError("non-finite embedding value, node row " + std::to_string(i));
                embeds[i][j] = static_cast<double>(f);
            }
        }
    } else {
        auto embed_lines = read_csv_lines(embed_path);
        std::vector<bool> seen(meta_rows.size(), false);
        std::size_t rows_seen = 0;
        for (std::size_t ln = 0; ln < embed_lines.size(); ++ln) {
            if (blank(embed_lines[ln])) continue;
            const std::string where = embed_path + ":" + std::to_string(ln + 1);
            auto fields = io::split_csv_line(embed_lines[ln]);
            if (fields.size() < 2) throw ParseError("embedding row needs id + floats at " + where);
            const std::int64_t ext = io::parse_int(fields[0], where);
            auto it = id_map.find(ext);
            if (it == id_map.end()) throw SchemaError("embedding id " + std::to_string(ext) + " unknown at " + where);
            if (seen[it->second]) throw SchemaError("duplicate embedding id " + std::to_string(ext) + " at " + where);
            seen[it->second] = true;
            ++rows_seen;
            std::vector<double>& e = embeds[it->second];
            for (std::size_t i = 1; i < fields.size(); ++i) {
                const double v = io::parse_double(fields[i], where);
                if (!std::isfinite(v)) throw SchemaError("non-finite embedding value at " + where);
                e.push_back(v);
            }
            if (f_embed < 0)
                f_embed = static_cast<int>(e.size());
            else if (static_cast<int>(e.size()) != f_embed)
                throw SchemaError("embedding row has " + std::to_string(e.size()) + " values, expected " +
                                  std::to_string(f_embed) + " at " + where);
        }
        if (rows_seen != meta_rows.size())
            throw SchemaError("embedding file covers " + std::to_string(rows_seen) + " of " +
                              std::to_string(meta_rows.size()) + " nodes");
    }

    // --- edges: citing,cited with dense remap, dropping self-loops/dups ---
    auto edge_lines = read_csv_lines(edge_path);
    std::unordered_set<std::uint64_t> edge_seen;
    for (std::size_t ln = 0; ln < edge_lines.size(); ++ln) {
        if (blank(edge_lines[ln])) continue;
        if (opts.edge_header && ln == 0) continue;
        const std::string where = edge_path + ":" + std::to_string(ln + 1);
        auto fields = io::split_csv_line(edge_lines[ln]);
        if (fields.size() != 2) throw ParseError("edge row needs exactly 2 columns at " + where);
        const std::int64_t citing_ext = io::parse_int(fields[0], where);
        const std::int64_t cited_ext = io::parse_int(fields[1], where);
        auto ci = id_map.find(citing_ext);
        auto cj = id_map.find(cited_ext);
        if (ci == id_map.end())
            throw SchemaError("edge endpoint " + std::to_string(citing_ext) + " unknown at " + where);
        if (cj == id_map.end())
            throw SchemaError("edge endpoint " + std::to_string(cited_ext) + " unknown at " + where);
        const NodeId a = ci->second, b = cj->second;
        if (a == b) {
            ++corpus.dropped_self_loops;
            continue;
        }
        const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
        if (!edge_seen.insert(key).second) {
            ++corpus.dropped_duplicate_edges;
            continue;
        }
        corpus.edges.emplace_back(a, b);
    }

    corpus.f_meta = f_meta;
    corpus.f_embed = f_embed;
    corpus.nodes.resize(meta_rows.size());
    corpus.external_ids.resize(meta_rows.size());
    for (std::size_t i = 0; i < meta_rows.size(); ++i) {
        corpus.nodes[i].id = static_cast<NodeId>(i);
        corpus.nodes[i].year = meta_rows[i].year;
        corpus.nodes[i].meta = std::move(meta_rows[i].features);
        corpus.nodes[i].embedding = std::move(embeds[i]);
        corpus.external_ids[i] = meta_rows[i].external_id;
    }
    return corpus;
}

EgoNetwork build_ego_network(const CitationCorpus& corpus, NodeId center) {
    if (center < 0 || center >= static_cast<NodeId>(corpus.nodes.size()))
        throw LookupError("unknown center id " + std::to_string(center));
    EgoNetwork ego;
    ego.center = center;
    std::vector<NodeId> members = corpus.references_of(center);
    members.push_back(center);
    std::unordered_set<NodeId> member_set(members.begin(), members.end());
    ego.ordered_nodes.assign(member_set.begin(), member_set.end());
    std::sort(ego.ordered_nodes.begin(), ego.ordered_nodes.end());
    for (const auto& [a, b] : corpus.edges)
        if (member_set.count(a) && member_set.count(b)) ego.edges.emplace_back(a, b);
    std::sort(ego.edges.begin(), ego.edges.end());
    return order_nodes(corpus, std::move(ego));
}

EgoNetwork order_nodes(const CitationCorpus& corpus, EgoNetwork ego) {
    std::vector<NodeId> refs;
    refs.reserve(ego.ordered_nodes.size());
    for (NodeId n : ego.ordered_nodes)
        if (n != ego.center) refs.push_back(n);
    // missing year sorts as -inf, ties broken by id; center goes last
    std::sort(refs.begin(), refs.end(), [&](NodeId a, NodeId b) {
        const auto& ya = corpus.nodes[a].year;
        const auto& yb = corpus.nodes[b].year;
        const long long ka = ya ? *ya : std::numeric_limits<long long>::min();
        const long long kb = yb ? *yb : std::numeric_limits<long long>::min();
        if (ka != kb) return ka < kb;
        return a < b;
    });
    refs.push_back(ego.center);
    ego.ordered_nodes = std::move(refs);
    ego.central_index = static_cast<int>(ego.ordered_nodes.size()) - 1;
    return ego;
}

GraphStats compute_stats(const EgoNetwork& ego) {
    GraphStats st;
    const std::size_t n = ego.ordered_nodes.size();
    st.node_count = n;

    // undirected view: collapse directions, dedupe
    std::unordered_map<NodeId, int> local;
    for (std::size_t i = 0; i < n; ++i) local[ego.ordered_nodes[i]] = static_cast<int>(i);
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    std::size_t und_edges = 0;
    for (const auto& [a, b] : ego.edges) {
        const int i = local.at(a), j = local.at(b);
        if (i == j || adj[i][j]) continue;
        adj[i][j] = adj[j][i] = 1;
        ++und_edges;
    }
    st.edge_count = und_edges;
    if (n <= 1) return st;

    st.avg_degree = 2.0 * static_cast<double>(und_edges) / static_cast<double>(n);
    st.density = 2.0 * static_cast<double>(und_edges) / (static_cast<double>(n) * static_cast<double>(n - 1));

    double clustering_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> nbrs;
        for (std::size_t j = 0; j < n; ++j)
            if (adj[i][j]) nbrs.push_back(static_cast<int>(j));
        const std::size_t k = nbrs.size();
        if (k < 2) continue;
        std::size_t links = 0;
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t q = p + 1; q < k; ++q)
                if (adj[nbrs[p]][nbrs[q]]) ++links;
        clustering_sum += 2.0 * static_cast<double>(links) / (static_cast<double>(k) * static_cast<double>(k - 1));
    }
    st.clustering_coefficient = clustering_sum / static_cast<double>(n);
    return st;
}

ComplexityLabeler::EgoFeatures ComplexityLabeler::features_of(const EgoNetwork& ego,
                                                              const std::vector<int>& corpus_in_degrees) {
    EgoFeatures f;
    f.in_degree = static_cast<double>(corpus_in_degrees[ego.center]);
    f.nodes = static_cast<double>(ego.ordered_nodes.size());
    f.edges = static_cast<double>(ego.edges.size());
    return f;
}

ComplexityLabeler::EgoFeatures ComplexityLabeler::features_of(const EgoNetwork& ego, const CitationCorpus& corpus) {
    return features_of(ego, corpus.in_degrees());
}

void ComplexityLabeler::fit(const std::vector<EgoFeatures>& train_features, int n_classes) {
    if (n_classes < 2) throw ContractError("complexity labeling needs >= 2 classes");
    if (train_features.empty()) throw ContractError("complexity labeling fit on empty training set");
    n_classes_ = n_classes;
    const std::size_t n = train_features.size();
    auto component = [](const EgoFeatures& f, int k) {
        return k == 0 ? f.in_degree : (k == 1 ? f.nodes : f.edges);
    };
    for (int k = 0; k < 3; ++k) {
        double sum = 0.0;
        for (const auto& f : train_features) sum += component(f, k);
        mean_[k] = sum / n;
        double var = 0.0;
        for (const auto& f : train_features) {
            const double d = component(f, k) - mean_[k];
            var += d * d;
        }
        std_[k] = std::sqrt(var / n);
    }
    fitted_ = true;
    std::vector<double> scores;
    scores.reserve(n);
    for (const auto& f : train_features) scores.push_back(score(f));
    std::sort(scores.begin(), scores.end());
    boundaries_ = quantile_boundaries(std::move(scores), n_classes);
}

double ComplexityLabeler::score(const EgoFeatures& f) const {
    if (!fitted_) throw StateError("complexity labeler not fitted");
    auto z = [&](double v, int k) { return std_[k] > 0.0 ? (v - mean_[k]) / std_[k] : 0.0; };
    return z(f.in_degree, 0) + z(f.nodes, 1) + z(f.edges, 2);
}

int ComplexityLabeler::label(const EgoFeatures& f) const {
    if (!fitted_) throw StateError("complexity labeler not fitted");
    return quantile_bin(score(f), boundaries_);
}

std::vector<double> quantile_boundaries(std::vector<double> sorted_scores, int n_classes) {
    if (n_classes < 2) throw ContractError("quantile binning needs >= 2 classes");
    const std::size_t n = sorted_scores.size();
    std::vector<double> boundaries;
    boundaries.reserve(n_classes - 1);
    for (int i = 1; i < n_classes; ++i) {
        std::size_t idx = static_cast<std::size_t>(i) * n / static_cast<std::size_t>(n_classes);
        if (idx == 0) idx = 1;
        boundaries.push_back(sorted_scores[idx - 1]);
    }
    return boundaries;
}

int quantile_bin(double score, const std::vector<double>& boundaries) {
    int cls = 0;
    for (double b : boundaries)
        if (score > b) ++cls;
    return cls;
}

DatasetSplit split_dataset(const std::vector<int>& labels,
                           double train_ratio,
                           double val_ratio,
                           double test_ratio,
                           std::uint64_t seed) {
    if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0)
        throw ContractError("split ratios must be positive");
    if (std::fabs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw ContractError("split ratios must sum to 1");

    DatasetSplit split;
    split.seed = seed;
    const std::size_t n = labels.size();
    if (n == 0) return split;

    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    std::vector<std::vector<std::size_t>> groups;
    for (int c : classes) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (labels[i] == c) members.push_back(i);
        groups.push_back(std::move(members));
    }
    bool stratified = true;
    for (const auto& g : groups)
        if (g.size() < 3) stratified = false;
    if (!stratified) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        groups.assign(1, std::move(all));
    }
    split.stratified = stratified;

    Rng rng(seed);
    const double r_tr = train_ratio;
    const double r_tv = train_ratio + val_ratio;
    std::size_t processed = 0, assigned_tr = 0, assigned_tv = 0;
    for (auto& g : groups) {
        rng.shuffle(g);
        const std::size_t m = g.size();
        const std::size_t target_tr = static_cast<std::size_t>(std::floor(r_tr * (processed + m) + 1e-9));
        const std::size_t target_tv = static_cast<std::size_t>(std::floor(r_tv * (processed + m) + 1e-9));
        std::size_t a_tr = target_tr > assigned_tr ? target_tr - assigned_tr : 0;
        if (a_tr > m) a_tr = m;
        std::size_t a_tv = target_tv > assigned_tv ? target_tv - assigned_tv : 0;
        if (a_tv < a_tr) a_tv = a_tr;
        if (a_tv > m) a_tv = m;
        for (std::size_t i = 0; i < m; ++i) {
            if (i < a_tr)
                split.train.push_back(g[i]);
            else if (i < a_tv)
                split.validation.push_back(g[i]);
            else
                split.test.push_back(g[i]);
        }
        processed += m;
        assigned_tr += a_tr;
        assigned_tv += a_tv;
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

}  // namespace emkken::graph
