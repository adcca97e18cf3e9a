#pragma once

#include <string>

#include "emkken/graph.hpp"

namespace emkken::io {

/// Binary corpus archive emitted by `ingest`: magic "EMKC", version, counts
/// and feature widths, then node years/external ids, meta and embedding
/// payloads, and the edge list. Fully deterministic for identical inputs.
void save_corpus(const std::string& path, const graph::CitationCorpus& corpus);
graph::CitationCorpus load_corpus(const std::string& path);

}  // namespace emkken::io
