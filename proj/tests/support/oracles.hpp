#pragma once

// Brute-force reference implementations. Deliberately naive: they share no
// code with the operators they check beyond UTF-8 decoding and case folding.

#include "spanforge/aog.hpp"
#include "spanforge/operators.hpp"

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using spanforge::Span;
using spanforge::Tuple;

/// Leftmost-longest, non-overlapping, non-empty matches found by testing
/// every substring with std::wregex (ECMAScript).
std::vector<Span> regex_spans(std::u32string_view text, const std::string& pattern);

/// Every case-insensitive occurrence of every entry whose ends sit on token
/// boundaries, sorted by (begin, end).
std::vector<Span> dictionary_spans(std::u32string_view text, const std::vector<std::string>& entries);

bool follows(Span a, Span b, std::int64_t min, std::int64_t max);
bool contains(Span a, Span b);
bool overlaps(Span a, Span b);

/// Predicate over one tuple (select) or a left/right pair (join). In a join,
/// two-column atoms read their first column from the left and the second
/// from the right; one-column atoms read the concatenated output tuple.
bool eval(const spanforge::Predicate& p, const spanforge::Schema& ls, const Tuple& l,
          const spanforge::Schema* rs = nullptr, const Tuple* r = nullptr);

/// Concatenated schema; right-hand names that collide get "_r" appended.
spanforge::Schema concat_schema(const spanforge::Schema& l, const spanforge::Schema& r);

std::vector<Tuple> nested_loop_join(const spanforge::ops::AnnotationSet& left,
                                    const spanforge::ops::AnnotationSet& right,
                                    const std::function<bool(const Tuple&, const Tuple&)>& keep);

/// Tuples whose first span is not strictly inside another tuple's first span.
std::vector<Tuple> consolidate(const std::vector<Tuple>& tuples, std::size_t key = 0);

/// Multiset equality.
bool same_bag(std::vector<Tuple> a, std::vector<Tuple> b);

/// Nondecreasing in the first Span column, then all columns.
bool canonical(const std::vector<Tuple>& tuples, std::size_t key = 0);

/// Sorts into (key span, then all columns) order.
void sort_canonical(std::vector<Tuple>& tuples, std::size_t key = 0);

/// Adjacency from the graph's edges, keyed by node id.
using Adjacency = std::map<spanforge::NodeId, std::set<spanforge::NodeId>>;
Adjacency adjacency(const spanforge::OperatorGraph& graph);

/// Every path between two members runs through members only. Enumerates all
/// simple paths explicitly.
bool convex_by_paths(const Adjacency& adj, const std::set<spanforge::NodeId>& set);

/// Convexity of every node subset of a small graph (at most 16 nodes),
/// each decided once by path enumeration.
class ConvexTable {
public:
    explicit ConvexTable(const spanforge::OperatorGraph& graph);
    bool convex(const std::set<spanforge::NodeId>& set) const;

private:
    std::map<spanforge::NodeId, int> bit_;
    std::vector<bool> convex_;
};

/// Checks sets returned by the greedy partitioner against brute force:
/// flagged members only, convex, disjoint, covering, and for each set in
/// creation order no non-empty group of still-unassigned flagged nodes can
/// be added while staying convex. Returns a description of the first
/// violation, or an empty string.
std::string check_convex_sets(const ConvexTable& table, const std::map<spanforge::NodeId, bool>& flags,
                              const std::vector<std::vector<spanforge::NodeId>>& sets);

/// Sink outputs computed node by node from the oracles above, sorted
/// canonically. Independent of the executor and the operator library.
std::map<spanforge::NodeId, spanforge::ops::AnnotationSet> evaluate(const spanforge::OperatorGraph& graph,
                                                                     const spanforge::Document& doc);

} // namespace oracle
