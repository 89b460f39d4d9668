#pragma once

#include "spanforge/aog.hpp"
#include "spanforge/regex.hpp"
#include "spanforge/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace spanforge::ops {

struct AnnotationSet {
    Schema schema;
    std::vector<Tuple> tuples;

    /// Sorts tuples into canonical order (see CanonicalLess).
    void canonicalize();
    bool is_canonical() const;
    std::size_t size() const noexcept { return tuples.size(); }

    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

AnnotationSet span_set(std::vector<Span> spans, std::string column = "match");

/// Gazetteer with case-folded entries.
class Dictionary {
public:
    Dictionary(std::string name, const std::vector<std::string>& entries);

    const std::string& name() const noexcept { return name_; }
    /// Entries after case folding, deduplicated, in sorted order.
    const std::vector<std::u32string>& folded_entries() const noexcept { return entries_; }
    std::size_t max_length() const noexcept { return max_length_; }

    /// Per-position trie walk; matches begin and end on token boundaries.
    std::vector<Span> find_all(std::u32string_view text) const;

private:
    struct TrieNode {
        std::vector<std::pair<char32_t, int>> next;  // sorted by character
        bool terminal = false;
    };
    int child(int node, char32_t c) const noexcept;

    std::string name_;
    std::vector<std::u32string> entries_;
    std::vector<TrieNode> trie_;
    std::size_t max_length_ = 0;
};

/// Token boundary at offset k: text start/end, or an alphanumeric change.
bool token_boundary(std::u32string_view text, std::size_t k) noexcept;

/// Predicate with columns resolved to (side, index). Side 0 is the select
/// input or the left join input; side 1 the right join input.
class BoundPredicate {
public:
    static BoundPredicate for_select(const Predicate& p, const Schema& input);
    static BoundPredicate for_join(const Predicate& p, const Schema& left, const Schema& right);

    bool operator()(const Tuple& left, const Tuple* right = nullptr) const;

private:
    struct ColumnRef {
        int side = 0;
        std::size_t index = 0;
    };
    struct Node {
        Predicate::Op op;
        ColumnRef a;
        ColumnRef b;
        std::int64_t min = 0;
        std::int64_t max = 0;
        std::vector<int> children;
    };
    static int bind(const Predicate& p, const Schema& left, const Schema* right, const Schema& out,
                    std::vector<Node>& nodes);
    bool eval(int node, const Tuple& left, const Tuple* right) const;

    std::vector<Node> nodes_;
};

/// Leftmost-longest, non-overlapping, non-empty matches, resuming at each
/// match end.
AnnotationSet regex_extract(std::u32string_view text, const regex::Dfa& dfa);
AnnotationSet regex_extract(const Document& doc, std::string_view pattern,
                            std::size_t state_budget = regex::kSoftwareStateBudget);

/// Every token-aligned, case-insensitive occurrence of every entry.
AnnotationSet dictionary_extract(std::u32string_view text, const Dictionary& dict);
AnnotationSet dictionary_extract(const Document& doc, const Dictionary& dict);

AnnotationSet select(const AnnotationSet& input, const BoundPredicate& predicate);
AnnotationSet select(const AnnotationSet& input, const Predicate& predicate);

AnnotationSet project(const AnnotationSet& input, const std::vector<std::string>& columns);

/// Nested-loop join over the concatenated schema, canonically sorted.
AnnotationSet span_join(const AnnotationSet& left, const AnnotationSet& right,
                        const BoundPredicate& predicate, const Schema& output_schema);
AnnotationSet span_join(const AnnotationSet& left, const AnnotationSet& right, const Predicate& predicate);

AnnotationSet union_all(const std::vector<const AnnotationSet*>& inputs);

/// Drops tuples whose first Span column is strictly inside another tuple's.
AnnotationSet consolidate(const AnnotationSet& input, std::string_view policy = "contained_within");

} // namespace spanforge::ops
