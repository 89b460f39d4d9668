#include "spanforge/operators.hpp"

#include "spanforge/error.hpp"
#include "spanforge/unicode.hpp"

#include <algorithm>

namespace spanforge::ops {

void AnnotationSet::canonicalize() {
    std::stable_sort(tuples.begin(), tuples.end(), CanonicalLess{schema.first_span_column()});
}

bool AnnotationSet::is_canonical() const {
    return std::is_sorted(tuples.begin(), tuples.end(), CanonicalLess{schema.first_span_column()});
}

AnnotationSet span_set(std::vector<Span> spans, std::string column) {
    AnnotationSet out{Schema({{std::move(column), ValueType::Span}}), {}};
    out.tuples.reserve(spans.size());
    for (const auto& s : spans) out.tuples.push_back({s});
    out.canonicalize();
    return out;
}

// ---------------------------------------------------------------------------
// Dictionary

Dictionary::Dictionary(std::string name, const std::vector<std::string>& entries) : name_(std::move(name)) {
    for (const auto& e : entries) {
        std::u32string folded = unicode::decode_utf8(e);
        if (folded.empty()) throw Error("dictionary '" + name_ + "' has an empty entry");
        for (auto& c : folded) c = unicode::fold_case(c);
        entries_.push_back(std::move(folded));
    }
    std::sort(entries_.begin(), entries_.end());
    entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());

    trie_.emplace_back();
    for (const auto& e : entries_) {
        max_length_ = std::max(max_length_, e.size());
        int cur = 0;
        for (char32_t c : e) {
            int nxt = child(cur, c);
            if (nxt < 0) {
                nxt = static_cast<int>(trie_.size());
                trie_.emplace_back();
                auto& edges = trie_[static_cast<std::size_t>(cur)].next;
                auto it = std::lower_bound(edges.begin(), edges.end(), c,
                                           [](const auto& p, char32_t v) { return p.first < v; });
                edges.insert(it, {c, nxt});
            }
            cur = nxt;
        }
        trie_[static_cast<std::size_t>(cur)].terminal = true;
    }
}

int Dictionary::child(int node, char32_t c) const noexcept {
    const auto& edges = trie_[static_cast<std::size_t>(node)].next;
    auto it = std::lower_bound(edges.begin(), edges.end(), c,
                               [](const auto& p, char32_t v) { return p.first < v; });
    return (it != edges.end() && it->first == c) ? it->second : -1;
}

bool token_boundary(std::u32string_view text, std::size_t k) noexcept {
    if (k == 0 || k >= text.size()) return true;
    return unicode::is_alnum(text[k - 1]) != unicode::is_alnum(text[k]);
}

std::vector<Span> Dictionary::find_all(std::u32string_view text) const {
    std::vector<Span> out;
    if (entries_.empty()) return out;
    for (std::size_t b = 0; b < text.size(); ++b) {
        if (!token_boundary(text, b)) continue;
        int cur = 0;
        for (std::size_t e = b; e < text.size(); ++e) {
            cur = child(cur, unicode::fold_case(text[e]));
            if (cur < 0) break;
            if (trie_[static_cast<std::size_t>(cur)].terminal && token_boundary(text, e + 1)) {
                out.push_back({static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(e + 1)});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Predicates

namespace {

const Span& span_at(const Tuple& t, std::size_t i) {
    return std::get<Span>(t[i]);
}

void require_span_column(const Schema& s, std::size_t idx, const std::string& name) {
    if (s.columns()[idx].type != ValueType::Span) {
        throw SchemaError("type mismatch: column '" + name + "' is not a Span");
    }
}

} // namespace

int BoundPredicate::bind(const Predicate& p, const Schema& left, const Schema* right, const Schema& out,
                         std::vector<Node>& nodes) {
    Node n;
    n.op = p.op;
    n.min = p.min;
    n.max = p.max;
    auto resolve = [&](const Schema& s, int side, const std::string& name) {
        ColumnRef ref{side, s.require(name)};
        require_span_column(s, ref.index, name);
        return ref;
    };
    switch (p.op) {
        case Predicate::Op::Follows:
        case Predicate::Op::Contains:
        case Predicate::Op::Overlaps:
            if (p.columns.size() != 2) throw SchemaError(std::string(to_string(p.op)) + " takes two columns");
            n.a = resolve(left, 0, p.columns[0]);
            n.b = right ? resolve(*right, 1, p.columns[1]) : resolve(left, 0, p.columns[1]);
            break;
        case Predicate::Op::SpanLengthGreaterThan: {
            if (p.columns.size() != 1) throw SchemaError("SpanLengthGreaterThan takes one column");
            ColumnRef ref = resolve(out, 0, p.columns[0]);
            if (right && ref.index >= left.size()) {
                ref.side = 1;
                ref.index -= left.size();
            }
            n.a = ref;
            break;
        }
        case Predicate::Op::And:
        case Predicate::Op::Or:
        case Predicate::Op::Not: {
            const std::size_t want = p.op == Predicate::Op::Not ? 1 : 2;
            if (p.children.size() != want) throw SchemaError("malformed " + std::string(to_string(p.op)));
            for (const auto& c : p.children) n.children.push_back(bind(c, left, right, out, nodes));
            break;
        }
    }
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

BoundPredicate BoundPredicate::for_select(const Predicate& p, const Schema& input) {
    BoundPredicate bp;
    bind(p, input, nullptr, input, bp.nodes_);
    return bp;
}

BoundPredicate BoundPredicate::for_join(const Predicate& p, const Schema& left, const Schema& right) {
    BoundPredicate bp;
    const Schema out = join_schema(left, right);
    bind(p, left, &right, out, bp.nodes_);
    return bp;
}

bool BoundPredicate::eval(int idx, const Tuple& left, const Tuple* right) const {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    auto get = [&](const ColumnRef& r) -> const Span& {
        return span_at(r.side == 0 ? left : *right, r.index);
    };
    switch (n.op) {
        case Predicate::Op::Follows: {
            const Span& a = get(n.a);
            const Span& b = get(n.b);
            const std::int64_t gap = static_cast<std::int64_t>(b.begin) - static_cast<std::int64_t>(a.end);
            return n.min <= gap && gap <= n.max;
        }
        case Predicate::Op::Contains: {
            const Span& a = get(n.a);
            const Span& b = get(n.b);
            return a.begin <= b.begin && b.end <= a.end;
        }
        case Predicate::Op::Overlaps: {
            const Span& a = get(n.a);
            const Span& b = get(n.b);
            return a.begin < b.end && b.begin < a.end;
        }
        case Predicate::Op::SpanLengthGreaterThan:
            return static_cast<std::int64_t>(get(n.a).length()) > n.min;
        case Predicate::Op::And:
            return eval(n.children[0], left, right) && eval(n.children[1], left, right);
        case Predicate::Op::Or:
            return eval(n.children[0], left, right) || eval(n.children[1], left, right);
        case Predicate::Op::Not:
            return !eval(n.children[0], left, right);
    }
    return false;
}

bool BoundPredicate::operator()(const Tuple& left, const Tuple* right) const {
    return eval(static_cast<int>(nodes_.size()) - 1, left, right);
}

// ---------------------------------------------------------------------------
// Extraction

AnnotationSet regex_extract(std::u32string_view text, const regex::Dfa& dfa) {
    AnnotationSet out{Schema({{"match", ValueType::Span}}), {}};
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        std::int32_t state = dfa.start();
        std::size_t best = i;
        for (std::size_t j = i; j < n; ++j) {
            state = dfa.step(state, text[j]);
            if (state == regex::Dfa::kDead) break;
            if (dfa.accepting(state)) best = j + 1;
        }
        if (best > i) {
            out.tuples.push_back({Span{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(best)}});
            i = best;
        } else {
            ++i;
        }
    }
    return out;
}

AnnotationSet regex_extract(const Document& doc, std::string_view pattern, std::size_t state_budget) {
    return regex_extract(doc.text, regex::compile(pattern, state_budget));
}

AnnotationSet dictionary_extract(std::u32string_view text, const Dictionary& dict) {
    AnnotationSet out{Schema({{"match", ValueType::Span}}), {}};
    for (const auto& s : dict.find_all(text)) out.tuples.push_back({s});
    return out;
}

AnnotationSet dictionary_extract(const Document& doc, const Dictionary& dict) {
    return dictionary_extract(doc.text, dict);
}

// ---------------------------------------------------------------------------
// Relational

AnnotationSet select(const AnnotationSet& input, const BoundPredicate& predicate) {
    AnnotationSet out{input.schema, {}};
    for (const auto& t : input.tuples) {
        if (predicate(t)) out.tuples.push_back(t);
    }
    return out;
}

AnnotationSet select(const AnnotationSet& input, const Predicate& predicate) {
    return select(input, BoundPredicate::for_select(predicate, input.schema));
}

AnnotationSet project(const AnnotationSet& input, const std::vector<std::string>& columns) {
    std::vector<std::size_t> idx;
    std::vector<Column> cols;
    for (const auto& name : columns) {
        idx.push_back(input.schema.require(name));
        cols.push_back(input.schema.columns()[idx.back()]);
    }
    AnnotationSet out{Schema(std::move(cols)), {}};
    out.tuples.reserve(input.tuples.size());
    for (const auto& t : input.tuples) {
        Tuple row;
        row.reserve(idx.size());
        for (std::size_t i : idx) row.push_back(t[i]);
        out.tuples.push_back(std::move(row));
    }
    out.canonicalize();
    return out;
}

AnnotationSet span_join(const AnnotationSet& left, const AnnotationSet& right, const BoundPredicate& predicate,
                        const Schema& output_schema) {
    AnnotationSet out{output_schema, {}};
    for (const auto& l : left.tuples) {
        for (const auto& r : right.tuples) {
            if (!predicate(l, &r)) continue;
            Tuple row;
            row.reserve(l.size() + r.size());
            row.insert(row.end(), l.begin(), l.end());
            row.insert(row.end(), r.begin(), r.end());
            out.tuples.push_back(std::move(row));
        }
    }
    out.canonicalize();
    return out;
}

AnnotationSet span_join(const AnnotationSet& left, const AnnotationSet& right, const Predicate& predicate) {
    return span_join(left, right, BoundPredicate::for_join(predicate, left.schema, right.schema),
                     join_schema(left.schema, right.schema));
}

AnnotationSet union_all(const std::vector<const AnnotationSet*>& inputs) {
    if (inputs.empty()) throw SchemaError("union of zero inputs");
    AnnotationSet out{inputs.front()->schema, {}};
    for (const auto* in : inputs) {
        if (!(in->schema == out.schema)) throw SchemaError("schema mismatch in union");
        out.tuples.insert(out.tuples.end(), in->tuples.begin(), in->tuples.end());
    }
    out.canonicalize();
    return out;
}

AnnotationSet consolidate(const AnnotationSet& input, std::string_view policy) {
    if (policy != "contained_within") {
        throw SchemaError("unsupported consolidation policy '" + std::string(policy) + "'");
    }
    const auto col = input.schema.first_span_column();
    if (!col) throw SchemaError("consolidate needs a Span column");

    // Order by (begin asc, end desc): every strict container of a span sorts
    // before it, so a running maximum of earlier distinct ends decides.
    std::vector<std::size_t> order(input.tuples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Span& x = span_at(input.tuples[a], *col);
        const Span& y = span_at(input.tuples[b], *col);
        if (x.begin != y.begin) return x.begin < y.begin;
        return x.end > y.end;
    });
    std::vector<char> keep(input.tuples.size(), 1);
    bool have_prev = false;
    std::uint32_t max_end = 0;  // over earlier groups of distinct spans
    std::size_t i = 0;
    while (i < order.size()) {
        const Span s = span_at(input.tuples[order[i]], *col);
        std::size_t j = i;
        while (j < order.size() && span_at(input.tuples[order[j]], *col) == s) ++j;
        const bool contained = have_prev && max_end >= s.end;
        for (std::size_t k = i; k < j; ++k) keep[order[k]] = contained ? 0 : 1;
        max_end = have_prev ? std::max(max_end, s.end) : s.end;
        have_prev = true;
        i = j;
    }
    AnnotationSet out{input.schema, {}};
    for (std::size_t k = 0; k < input.tuples.size(); ++k) {
        if (keep[k]) out.tuples.push_back(input.tuples[k]);
    }
    out.canonicalize();
    return out;
}

} // namespace spanforge::ops
