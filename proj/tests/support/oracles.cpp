#include "support/oracles.hpp"

#include "spanforge/unicode.hpp"

#include <algorithm>
#include <queue>
#include <regex>
#include <stdexcept>

using namespace spanforge;

namespace oracle {

namespace {

std::wstring wide(std::u32string_view s) { return std::wstring(s.begin(), s.end()); }

bool boundary(std::u32string_view t, std::size_t k) {
    if (k == 0 || k == t.size()) return true;
    return unicode::is_alnum(t[k - 1]) != unicode::is_alnum(t[k]);
}

Span span_at(const Schema& s, const Tuple& t, const std::string& name) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.columns()[i].name == name) return std::get<Span>(t.at(i));
    }
    throw std::runtime_error("oracle: no column " + name);
}

std::size_t first_span(const Schema& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.columns()[i].type == ValueType::Span) return i;
    }
    return 0;
}

bool key_less(const Tuple& a, const Tuple& b, std::size_t key) {
    const Span& x = std::get<Span>(a[key]);
    const Span& y = std::get<Span>(b[key]);
    if (x.begin != y.begin) return x.begin < y.begin;
    if (x.end != y.end) return x.end < y.end;
    return a < b;
}

} // namespace

std::vector<Span> regex_spans(std::u32string_view text, const std::string& pattern) {
    const std::wregex re(wide(unicode::decode_utf8(pattern)), std::regex_constants::ECMAScript);
    const std::wstring t = wide(text);
    std::vector<Span> out;
    std::size_t b = 0;
    while (b < t.size()) {
        std::size_t best = 0;
        for (std::size_t e = b + 1; e <= t.size(); ++e) {
            if (std::regex_match(t.begin() + static_cast<std::ptrdiff_t>(b), t.begin() + static_cast<std::ptrdiff_t>(e), re)) {
                best = e;
            }
        }
        if (best) {
            out.push_back({static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(best)});
            b = best;
        } else {
            ++b;
        }
    }
    return out;
}

std::vector<Span> dictionary_spans(std::u32string_view text, const std::vector<std::string>& entries) {
    std::set<std::u32string> folded;
    for (const auto& e : entries) {
        std::u32string f;
        for (char32_t c : unicode::decode_utf8(e)) f.push_back(unicode::fold_case(c));
        if (!f.empty()) folded.insert(f);
    }
    std::vector<Span> out;
    for (std::size_t b = 0; b < text.size(); ++b) {
        for (const auto& f : folded) {
            if (b + f.size() > text.size()) continue;
            bool eq = true;
            for (std::size_t i = 0; i < f.size() && eq; ++i) eq = unicode::fold_case(text[b + i]) == f[i];
            if (eq && boundary(text, b) && boundary(text, b + f.size())) {
                out.push_back({static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b + f.size())});
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool follows(Span a, Span b, std::int64_t min, std::int64_t max) {
    const std::int64_t gap = static_cast<std::int64_t>(b.begin) - static_cast<std::int64_t>(a.end);
    return min <= gap && gap <= max;
}

bool contains(Span a, Span b) { return a.begin <= b.begin && b.end <= a.end; }

bool overlaps(Span a, Span b) { return a.begin < b.end && b.begin < a.end; }

Schema concat_schema(const Schema& l, const Schema& r) {
    std::vector<Column> cols = l.columns();
    for (Column c : r.columns()) {
        for (;;) {
            bool clash = false;
            for (const auto& x : cols) clash = clash || x.name == c.name;
            if (!clash) break;
            c.name += "_r";
        }
        cols.push_back(c);
    }
    return Schema(cols);
}

bool eval(const Predicate& p, const Schema& ls, const Tuple& l, const Schema* rs, const Tuple* r) {
    using Op = Predicate::Op;
    auto pair = [&](Span& a, Span& b) {
        a = span_at(ls, l, p.columns.at(0));
        b = r ? span_at(*rs, *r, p.columns.at(1)) : span_at(ls, l, p.columns.at(1));
    };
    Span a, b;
    switch (p.op) {
        case Op::Follows:
            pair(a, b);
            return follows(a, b, p.min, p.max);
        case Op::Contains:
            pair(a, b);
            return contains(a, b);
        case Op::Overlaps:
            pair(a, b);
            return overlaps(a, b);
        case Op::SpanLengthGreaterThan: {
            if (r) {
                Tuple joined = l;
                joined.insert(joined.end(), r->begin(), r->end());
                a = span_at(concat_schema(ls, *rs), joined, p.columns.at(0));
            } else {
                a = span_at(ls, l, p.columns.at(0));
            }
            return static_cast<std::int64_t>(a.end) - static_cast<std::int64_t>(a.begin) > p.min;
        }
        case Op::And:
            return eval(p.children.at(0), ls, l, rs, r) && eval(p.children.at(1), ls, l, rs, r);
        case Op::Or:
            return eval(p.children.at(0), ls, l, rs, r) || eval(p.children.at(1), ls, l, rs, r);
        case Op::Not:
            return !eval(p.children.at(0), ls, l, rs, r);
    }
    return false;
}

std::vector<Tuple> nested_loop_join(const ops::AnnotationSet& left, const ops::AnnotationSet& right,
                                    const std::function<bool(const Tuple&, const Tuple&)>& keep) {
    std::vector<Tuple> out;
    for (const auto& a : left.tuples) {
        for (const auto& b : right.tuples) {
            if (!keep(a, b)) continue;
            Tuple t = a;
            t.insert(t.end(), b.begin(), b.end());
            out.push_back(std::move(t));
        }
    }
    return out;
}

std::vector<Tuple> consolidate(const std::vector<Tuple>& tuples, std::size_t key) {
    std::vector<Tuple> out;
    for (std::size_t i = 0; i < tuples.size(); ++i) {
        const Span s = std::get<Span>(tuples[i][key]);
        bool inside = false;
        for (std::size_t j = 0; j < tuples.size() && !inside; ++j) {
            const Span o = std::get<Span>(tuples[j][key]);
            inside = contains(o, s) && o != s;
        }
        if (!inside) out.push_back(tuples[i]);
    }
    return out;
}

bool same_bag(std::vector<Tuple> a, std::vector<Tuple> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

bool canonical(const std::vector<Tuple>& tuples, std::size_t key) {
    for (std::size_t i = 1; i < tuples.size(); ++i) {
        if (key_less(tuples[i], tuples[i - 1], key)) return false;
    }
    return true;
}

void sort_canonical(std::vector<Tuple>& tuples, std::size_t key) {
    std::sort(tuples.begin(), tuples.end(), [key](const Tuple& a, const Tuple& b) { return key_less(a, b, key); });
}

Adjacency adjacency(const OperatorGraph& graph) {
    Adjacency adj;
    for (const auto& n : graph.nodes()) adj[n.id];
    for (const auto& e : graph.edges()) adj[e.producer].insert(e.consumer);
    return adj;
}

namespace {

// Walks every simple path from `at`; fails if one leaves the set and comes back.
bool paths_stay_inside(const Adjacency& adj, const std::set<NodeId>& set, NodeId at, bool left_set) {
    for (NodeId next : adj.at(at)) {
        const bool member = set.count(next) > 0;
        if (member && left_set) return false;
        if (!paths_stay_inside(adj, set, next, left_set || !member)) return false;
    }
    return true;
}

} // namespace

bool convex_by_paths(const Adjacency& adj, const std::set<NodeId>& set) {
    for (NodeId u : set) {
        if (!paths_stay_inside(adj, set, u, false)) return false;
    }
    return true;
}

ConvexTable::ConvexTable(const OperatorGraph& graph) {
    const Adjacency adj = adjacency(graph);
    int b = 0;
    for (const auto& n : graph.nodes()) bit_[n.id] = b++;
    if (b > 16) throw std::runtime_error("oracle: ConvexTable needs at most 16 nodes");
    convex_.assign(std::size_t{1} << b, false);
    for (std::size_t mask = 0; mask < convex_.size(); ++mask) {
        std::set<NodeId> set;
        for (const auto& [id, bit] : bit_) {
            if (mask >> bit & 1) set.insert(id);
        }
        convex_[mask] = convex_by_paths(adj, set);
    }
}

bool ConvexTable::convex(const std::set<NodeId>& set) const {
    std::size_t mask = 0;
    for (NodeId id : set) mask |= std::size_t{1} << bit_.at(id);
    return convex_[mask];
}

std::string check_convex_sets(const ConvexTable& table, const std::map<NodeId, bool>& flags,
                              const std::vector<std::vector<NodeId>>& sets) {
    std::set<NodeId> flagged;
    for (const auto& [id, f] : flags) {
        if (f) flagged.insert(id);
    }
    std::set<NodeId> assigned;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const std::set<NodeId> s(sets[i].begin(), sets[i].end());
        const std::string tag = "set " + std::to_string(i) + ": ";
        if (s.empty()) return tag + "empty";
        for (NodeId id : s) {
            if (!flagged.count(id)) return tag + "node " + std::to_string(id) + " is not accelerable";
            if (assigned.count(id)) return tag + "node " + std::to_string(id) + " appears twice";
        }
        if (!table.convex(s)) return tag + "not convex";
        assigned.insert(s.begin(), s.end());

        std::vector<NodeId> rest;
        for (NodeId id : flagged) {
            if (!assigned.count(id)) rest.push_back(id);
        }
        for (std::size_t mask = 1; mask < (std::size_t{1} << rest.size()); ++mask) {
            std::set<NodeId> grown = s;
            for (std::size_t k = 0; k < rest.size(); ++k) {
                if (mask >> k & 1) grown.insert(rest[k]);
            }
            if (table.convex(grown)) return tag + "not maximal";
        }
    }
    if (assigned != flagged) return "accelerable nodes left unassigned";
    return {};
}

std::map<NodeId, ops::AnnotationSet> evaluate(const OperatorGraph& graph, const Document& doc) {
    std::map<NodeId, int> indegree;
    for (const auto& n : graph.nodes()) indegree[n.id] = 0;
    for (const auto& e : graph.edges()) ++indegree[e.consumer];
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (const auto& [id, d] : indegree) {
        if (d == 0) ready.push(id);
    }
    std::map<NodeId, ops::AnnotationSet> value;
    std::map<NodeId, ops::AnnotationSet> sinks;
    while (!ready.empty()) {
        const NodeId id = ready.top();
        ready.pop();
        const OperatorNode& node = graph.node(id);
        std::vector<Edge> in;
        for (const auto& e : graph.edges()) {
            if (e.consumer == id) in.push_back(e);
        }
        std::sort(in.begin(), in.end(), [](const Edge& a, const Edge& b) { return a.slot < b.slot; });
        auto input = [&](std::size_t i) -> const ops::AnnotationSet& { return value.at(in.at(i).producer); };

        ops::AnnotationSet out;
        auto spans = [&](const std::vector<Span>& v) {
            out.schema = Schema({{"match", ValueType::Span}});
            for (const auto& s : v) out.tuples.push_back({s});
        };
        switch (node.kind) {
            case OperatorKind::DocSource:
                break;
            case OperatorKind::RegexExtract:
                spans(regex_spans(doc.text, node.as<RegexParams>().pattern));
                break;
            case OperatorKind::DictionaryExtract:
                spans(dictionary_spans(doc.text, node.as<DictionaryParams>().entries));
                break;
            case OperatorKind::Select: {
                const auto& src = input(0);
                out.schema = src.schema;
                for (const auto& t : src.tuples) {
                    if (eval(node.as<PredicateParams>().predicate, src.schema, t)) out.tuples.push_back(t);
                }
                break;
            }
            case OperatorKind::Project: {
                const auto& src = input(0);
                std::vector<std::size_t> idx;
                std::vector<Column> cols;
                for (const auto& name : node.as<ProjectParams>().columns) {
                    for (std::size_t i = 0; i < src.schema.size(); ++i) {
                        if (src.schema.columns()[i].name == name) {
                            idx.push_back(i);
                            cols.push_back(src.schema.columns()[i]);
                        }
                    }
                }
                out.schema = Schema(cols);
                for (const auto& t : src.tuples) {
                    Tuple p;
                    for (auto i : idx) p.push_back(t[i]);
                    out.tuples.push_back(std::move(p));
                }
                break;
            }
            case OperatorKind::Join: {
                const auto& l = input(0);
                const auto& r = input(1);
                const Predicate& p = node.as<PredicateParams>().predicate;
                out.schema = concat_schema(l.schema, r.schema);
                out.tuples = nested_loop_join(l, r, [&](const Tuple& a, const Tuple& b) {
                    return eval(p, l.schema, a, &r.schema, &b);
                });
                break;
            }
            case OperatorKind::Union:
                out.schema = input(0).schema;
                for (std::size_t i = 0; i < in.size(); ++i) {
                    const auto& t = input(i).tuples;
                    out.tuples.insert(out.tuples.end(), t.begin(), t.end());
                }
                break;
            case OperatorKind::Consolidate:
                out.schema = input(0).schema;
                out.tuples = consolidate(input(0).tuples, first_span(out.schema));
                break;
            case OperatorKind::Sink:
                out = input(0);
                break;
            case OperatorKind::SubgraphCall:
                throw std::runtime_error("oracle: SubgraphCall is not evaluated");
        }
        if (!out.schema.empty()) sort_canonical(out.tuples, first_span(out.schema));
        if (node.kind == OperatorKind::Sink) sinks[id] = out;
        value[id] = std::move(out);
        for (const auto& e : graph.edges()) {
            if (e.producer == id && --indegree[e.consumer] == 0) ready.push(e.consumer);
        }
    }
    return sinks;
}

} // namespace oracle
