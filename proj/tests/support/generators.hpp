#pragma once

#include "spanforge/aog.hpp"

#include <random>
#include <string>
#include <vector>

namespace gen {

using Rng = std::mt19937_64;

/// Short mixed text: words, capitalised names, digits, punctuation, a few
/// non-ASCII letters and the odd newline.
std::string random_text(Rng& rng, std::size_t max_chars);

/// A pattern over the text alphabet above, in the shared subset of our
/// syntax and ECMAScript.
std::string random_pattern(Rng& rng, int depth = 0);

/// DAG with nodes 0..n-1 and forward edges only. Kinds are arbitrary and the
/// graph is not schema-valid; it exists for topology tests.
spanforge::OperatorGraph random_topology(Rng& rng, std::size_t nodes, double edge_probability = 0.35);

/// Valid, schema-inferred query graph: DocSource, up to `max_views` views of
/// every operator kind, and a Sink per unconsumed view (plus a few more).
spanforge::OperatorGraph random_query_graph(Rng& rng, std::size_t max_views);

/// Fixed dictionary used by generated graphs.
const std::vector<std::string>& dictionary_words();

} // namespace gen
