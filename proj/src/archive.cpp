#include "emkken/archive.hpp"

#include <cstring>
#include <limits>

#include "emkken/errors.hpp"
#include "emkken/io_util.hpp"

namespace emkken::io {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'K', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::int64_t kNoYear = std::numeric_limits<std::int64_t>::min();

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(const unsigned char*& p, const unsigned char* end) {
    if (p + sizeof(T) > end) throw ParseError("corpus archive truncated");
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
}

}  // namespace

void save_corpus(const std::string& path, const graph::CitationCorpus& corpus) {
    std::string out;
    out.append(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, corpus.node_count());
    put<std::uint64_t>(out, corpus.edge_count());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.f_meta));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.f_embed));
    put<std::uint64_t>(out, corpus.dropped_self_loops);
    put<std::uint64_t>(out, corpus.dropped_duplicate_edges);
    for (std::size_t i = 0; i < corpus.node_count(); ++i) {
        put<std::int64_t>(out, corpus.external_ids[i]);
        put<std::int64_t>(out, corpus.nodes[i].year ? static_cast<std::int64_t>(*corpus.nodes[i].year) : kNoYear);
    }
    for (const auto& node : corpus.nodes)
        for (double v : node.meta) put<double>(out, v);
    for (const auto& node : corpus.nodes)
        for (double v : node.embedding) put<double>(out, v);
    for (const auto& [a, b] : corpus.edges) {
        put<std::int64_t>(out, a);
        put<std::int64_t>(out, b);
    }
    write_atomic(path, out);
}

graph::CitationCorpus load_corpus(const std::string& path) {
    auto bytes = read_bytes(path);
    const unsigned char* p = bytes.data();
    const unsigned char* end = bytes.data() + bytes.size();
    if (bytes.size() < 4 || std::memcmp(p, kMagic, 4) != 0) throw ParseError("not a corpus archive: " + path);
    p += 4;
    const auto version = get<std::uint32_t>(p, end);
    if (version != kVersion) throw ParseError("unsupported corpus archive version " + std::to_string(version));
    graph::CitationCorpus corpus;
    const auto n_nodes = get<std::uint64_t>(p, end);
    const auto n_edges = get<std::uint64_t>(p, end);
    corpus.f_meta = static_cast<int>(get<std::uint32_t>(p, end));
    corpus.f_embed = static_cast<int>(get<std::uint32_t>(p, end));
    corpus.dropped_self_loops = get<std::uint64_t>(p, end);
    corpus.dropped_duplicate_edges = get<std::uint64_t>(p, end);
    corpus.nodes.resize(n_nodes);
    corpus.external_ids.resize(n_nodes);
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
        corpus.external_ids[i] = get<std::int64_t>(p, end);
        const std::int64_t year = get<std::int64_t>(p, end);
        corpus.nodes[i].id = static_cast<graph::NodeId>(i);
        if (year != kNoYear) corpus.nodes[i].year = static_cast<int>(year);
    }
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
        corpus.nodes[i].meta.resize(corpus.f_meta);
        for (int f = 0; f < corpus.f_meta; ++f) corpus.nodes[i].meta[f] = get<double>(p, end);
    }
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
        corpus.nodes[i].embedding.resize(corpus.f_embed);
        for (int f = 0; f < corpus.f_embed; ++f) corpus.nodes[i].embedding[f] = get<double>(p, end);
    }
    corpus.edges.reserve(n_edges);
    for (std::uint64_t e = 0; e < n_edges; ++e) {
        const auto a = get<std::int64_t>(p, end);
        const auto b = get<std::int64_t>(p, end);
        corpus.edges.emplace_back(a, b);
    }
    if (p != end) throw ParseError("corpus archive has trailing bytes: " + path);
    return corpus;
}

}  // namespace emkken::io
