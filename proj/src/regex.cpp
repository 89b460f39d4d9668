#include "spanforge/regex.hpp"

#include "spanforge/error.hpp"
#include "spanforge/unicode.hpp"

#include <algorithm>
#include <map>

namespace spanforge::regex {
namespace {

constexpr char32_t kMaxCodepoint = 0x10FFFF;
constexpr std::uint32_t kMaxRepeat = 1000;
constexpr std::size_t kMaxNfaStates = 200000;

std::vector<CharRange> normalize(std::vector<CharRange> ranges) {
    std::sort(ranges.begin(), ranges.end(),
              [](const CharRange& a, const CharRange& b) { return a.lo < b.lo; });
    std::vector<CharRange> out;
    for (const auto& r : ranges) {
        if (!out.empty() && r.lo <= out.back().hi + 1) {
            out.back().hi = std::max(out.back().hi, r.hi);
        } else {
            out.push_back(r);
        }
    }
    return out;
}

std::vector<CharRange> complement(const std::vector<CharRange>& ranges) {
    std::vector<CharRange> out;
    char32_t next = 0;
    for (const auto& r : ranges) {
        if (r.lo > next) out.push_back({next, r.lo - 1});
        next = r.hi + 1;
    }
    if (next <= kMaxCodepoint) out.push_back({next, kMaxCodepoint});
    return out;
}

Ast make_set(std::vector<CharRange> ranges) {
    Ast a;
    a.kind = Ast::Kind::Set;
    a.set = normalize(std::move(ranges));
    return a;
}

class Parser {
public:
    explicit Parser(std::string_view pattern) : text_(unicode::decode_utf8(pattern)) {}

    Ast run() {
        Ast result = alternation();
        if (pos_ < text_.size()) fail("unbalanced ')'");
        return result;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw PatternError("regex error at position " + std::to_string(pos_) + ": " + what);
    }

    bool at_end() const { return pos_ >= text_.size(); }
    char32_t peek() const { return text_[pos_]; }

    Ast alternation() {
        std::vector<Ast> branches;
        branches.push_back(concatenation());
        while (!at_end() && peek() == U'|') {
            ++pos_;
            branches.push_back(concatenation());
        }
        if (branches.size() == 1) return std::move(branches.front());
        Ast a;
        a.kind = Ast::Kind::Alternate;
        a.children = std::move(branches);
        return a;
    }

    Ast concatenation() {
        std::vector<Ast> items;
        while (!at_end() && peek() != U'|' && peek() != U')') {
            items.push_back(repetition());
        }
        if (items.empty()) return Ast{};
        if (items.size() == 1) return std::move(items.front());
        Ast a;
        a.kind = Ast::Kind::Concat;
        a.children = std::move(items);
        return a;
    }

    Ast repetition() {
        Ast atom_ast = atom();
        while (!at_end()) {
            std::uint32_t lo = 0;
            std::uint32_t hi = 0;
            const char32_t c = peek();
            if (c == U'*') {
                lo = 0; hi = Ast::kUnbounded; ++pos_;
            } else if (c == U'+') {
                lo = 1; hi = Ast::kUnbounded; ++pos_;
            } else if (c == U'?') {
                lo = 0; hi = 1; ++pos_;
            } else if (c == U'{') {
                ++pos_;
                lo = number();
                hi = lo;
                if (!at_end() && peek() == U',') {
                    ++pos_;
                    hi = (!at_end() && peek() == U'}') ? Ast::kUnbounded : number();
                }
                if (at_end() || peek() != U'}') fail("expected '}' in counted repetition");
                ++pos_;
                if (hi != Ast::kUnbounded && hi < lo) fail("repetition bounds out of order");
                if (lo > kMaxRepeat || (hi != Ast::kUnbounded && hi > kMaxRepeat)) {
                    fail("repetition count too large");
                }
            } else {
                break;
            }
            Ast rep;
            rep.kind = Ast::Kind::Repeat;
            rep.min = lo;
            rep.max = hi;
            rep.children.push_back(std::move(atom_ast));
            atom_ast = std::move(rep);
        }
        return atom_ast;
    }

    std::uint32_t number() {
        if (at_end() || peek() < U'0' || peek() > U'9') fail("expected a number");
        std::uint64_t v = 0;
        while (!at_end() && peek() >= U'0' && peek() <= U'9') {
            v = v * 10 + (peek() - U'0');
            if (v > kMaxRepeat) fail("repetition count too large");
            ++pos_;
        }
        return static_cast<std::uint32_t>(v);
    }

    Ast atom() {
        const char32_t c = peek();
        switch (c) {
            case U'(': {
                ++pos_;
                if (pos_ + 1 < text_.size() && peek() == U'?') {
                    if (text_[pos_ + 1] != U':') fail("only non-capturing (?: ) groups are supported");
                    pos_ += 2;
                }
                Ast inner = alternation();
                if (at_end() || peek() != U')') fail("missing ')'");
                ++pos_;
                return inner;
            }
            case U'[':
                ++pos_;
                return bracket();
            case U'.':
                ++pos_;
                return make_set(complement(normalize({{U'\n', U'\n'}, {U'\r', U'\r'}, {0x2028, 0x2029}})));
            case U'\\':
                ++pos_;
                return make_set(escape(false));
            case U'^':
            case U'$':
                fail("anchors are not supported");
            case U'*':
            case U'+':
            case U'?':
            case U'{':
                fail("quantifier without operand");
            case U')':
                fail("unbalanced ')'");
            case U']':
            case U'}':
                fail("unescaped metacharacter");
            default:
                ++pos_;
                return make_set({{c, c}});
        }
    }

    std::vector<CharRange> escape(bool in_class) {
        if (at_end()) fail("dangling escape");
        const char32_t c = text_[pos_++];
        static const std::vector<CharRange> digit{{U'0', U'9'}};
        static const std::vector<CharRange> word{{U'0', U'9'}, {U'A', U'Z'}, {U'_', U'_'}, {U'a', U'z'}};
        static const std::vector<CharRange> space{{U'\t', U'\r'}, {U' ', U' '}};
        switch (c) {
            case U'd': return digit;
            case U'w': return word;
            case U's': return space;
            case U'D': return complement(digit);
            case U'W': return complement(word);
            case U'S': return complement(space);
            case U'n': return {{U'\n', U'\n'}};
            case U't': return {{U'\t', U'\t'}};
            case U'r': return {{U'\r', U'\r'}};
            case U'f': return {{U'\f', U'\f'}};
            case U'v': return {{U'\v', U'\v'}};
            case U'b':
                if (in_class) return {{U'\b', U'\b'}};
                fail("word-boundary assertions are not supported");
            case U'B':
                fail("word-boundary assertions are not supported");
            default:
                if (c >= U'1' && c <= U'9') fail("backreferences are not supported");
                if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9')) {
                    fail("unknown escape");
                }
                return {{c, c}};
        }
    }

    Ast bracket() {
        bool negate = false;
        if (!at_end() && peek() == U'^') {
            negate = true;
            ++pos_;
        }
        std::vector<CharRange> ranges;
        bool first = true;
        while (true) {
            if (at_end()) fail("unterminated character class");
            char32_t c = peek();
            if (c == U']' && !first) {
                ++pos_;
                break;
            }
            first = false;
            std::vector<CharRange> item;
            if (c == U'\\') {
                ++pos_;
                item = escape(true);
            } else {
                ++pos_;
                item = {{c, c}};
            }
            // Range a-b, only between single characters.
            if (item.size() == 1 && item[0].lo == item[0].hi && pos_ + 1 < text_.size() &&
                peek() == U'-' && text_[pos_ + 1] != U']') {
                ++pos_;
                char32_t hi_c = peek();
                std::vector<CharRange> hi_item;
                if (hi_c == U'\\') {
                    ++pos_;
                    hi_item = escape(true);
                } else {
                    ++pos_;
                    hi_item = {{hi_c, hi_c}};
                }
                if (hi_item.size() != 1 || hi_item[0].lo != hi_item[0].hi) fail("invalid class range");
                if (hi_item[0].lo < item[0].lo) fail("class range out of order");
                item = {{item[0].lo, hi_item[0].lo}};
            }
            ranges.insert(ranges.end(), item.begin(), item.end());
        }
        ranges = normalize(std::move(ranges));
        if (negate) ranges = complement(ranges);
        return make_set(std::move(ranges));
    }

    std::u32string text_;
    std::size_t pos_ = 0;
};

// Thompson NFA: each state has up to two epsilon edges or one set edge.
struct Nfa {
    struct State {
        std::vector<int> eps;
        std::vector<CharRange> set;
        int next = -1;
    };
    std::vector<State> states;

    int add() {
        if (states.size() >= kMaxNfaStates) {
            throw PatternTooComplex("pattern expands to too many automaton states");
        }
        states.emplace_back();
        return static_cast<int>(states.size()) - 1;
    }
};

struct Fragment {
    int in;
    int out;
};

Fragment build(Nfa& nfa, const Ast& ast) {
    switch (ast.kind) {
        case Ast::Kind::Empty: {
            int s = nfa.add();
            return {s, s};
        }
        case Ast::Kind::Set: {
            int a = nfa.add();
            int b = nfa.add();
            nfa.states[a].set = ast.set;
            nfa.states[a].next = b;
            return {a, b};
        }
        case Ast::Kind::Concat: {
            Fragment f = build(nfa, ast.children.front());
            for (std::size_t i = 1; i < ast.children.size(); ++i) {
                Fragment g = build(nfa, ast.children[i]);
                nfa.states[f.out].eps.push_back(g.in);
                f.out = g.out;
            }
            return f;
        }
        case Ast::Kind::Alternate: {
            int in = nfa.add();
            int out = nfa.add();
            for (const auto& child : ast.children) {
                Fragment g = build(nfa, child);
                nfa.states[in].eps.push_back(g.in);
                nfa.states[g.out].eps.push_back(out);
            }
            return {in, out};
        }
        case Ast::Kind::Repeat: {
            const Ast& body = ast.children.front();
            int in = nfa.add();
            int cur = in;
            for (std::uint32_t i = 0; i < ast.min; ++i) {
                Fragment g = build(nfa, body);
                nfa.states[cur].eps.push_back(g.in);
                cur = g.out;
            }
            if (ast.max == Ast::kUnbounded) {
                Fragment g = build(nfa, body);
                int out = nfa.add();
                nfa.states[cur].eps.push_back(g.in);
                nfa.states[cur].eps.push_back(out);
                nfa.states[g.out].eps.push_back(g.in);
                nfa.states[g.out].eps.push_back(out);
                return {in, out};
            }
            int out = nfa.add();
            for (std::uint32_t i = ast.min; i < ast.max; ++i) {
                Fragment g = build(nfa, body);
                nfa.states[cur].eps.push_back(g.in);
                nfa.states[cur].eps.push_back(out);
                cur = g.out;
            }
            nfa.states[cur].eps.push_back(out);
            return {in, out};
        }
    }
    throw InvariantViolation("unreachable regex AST kind");
}

std::vector<int> closure(const Nfa& nfa, std::vector<int> seeds) {
    std::vector<char> seen(nfa.states.size(), 0);
    std::vector<int> stack;
    std::vector<int> out;
    for (int s : seeds) {
        if (!seen[s]) {
            seen[s] = 1;
            stack.push_back(s);
        }
    }
    while (!stack.empty()) {
        int s = stack.back();
        stack.pop_back();
        out.push_back(s);
        for (int t : nfa.states[s].eps) {
            if (!seen[t]) {
                seen[t] = 1;
                stack.push_back(t);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

Ast parse(std::string_view pattern) {
    return Parser(pattern).run();
}

std::int32_t Dfa::step_wide(const State& s, char32_t c) noexcept {
    auto it = std::upper_bound(s.wide.begin(), s.wide.end(), c,
                               [](char32_t v, const WideEdge& e) { return v < e.lo; });
    if (it == s.wide.begin()) return kDead;
    --it;
    return c <= it->hi ? it->target : kDead;
}

Dfa compile(const Ast& ast, std::size_t state_budget) {
    Nfa nfa;
    Fragment frag = build(nfa, ast);
    const int accept = frag.out;

    Dfa dfa;
    std::map<std::vector<int>, std::int32_t> ids;
    std::vector<std::vector<int>> pending;

    auto intern = [&](std::vector<int> set) -> std::int32_t {
        if (set.empty()) return Dfa::kDead;
        auto it = ids.find(set);
        if (it != ids.end()) return it->second;
        if (dfa.states_.size() >= state_budget) {
            throw PatternTooComplex("automaton exceeds the state budget of " +
                                    std::to_string(state_budget) + " states");
        }
        const auto id = static_cast<std::int32_t>(dfa.states_.size());
        Dfa::State st;
        st.ascii.fill(Dfa::kDead);
        st.accepting = std::binary_search(set.begin(), set.end(), accept);
        dfa.states_.push_back(std::move(st));
        ids.emplace(set, id);
        pending.push_back(std::move(set));
        return id;
    };

    intern(closure(nfa, {frag.in}));
    for (std::size_t done = 0; done < pending.size(); ++done) {
        const std::vector<int> members = pending[done];
        // Partition the alphabet at every range boundary of the member edges.
        std::vector<char32_t> cuts;
        for (int s : members) {
            for (const auto& r : nfa.states[s].set) {
                cuts.push_back(r.lo);
                if (r.hi < kMaxCodepoint) cuts.push_back(r.hi + 1);
            }
        }
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        for (std::size_t k = 0; k < cuts.size(); ++k) {
            const char32_t lo = cuts[k];
            const char32_t hi = (k + 1 < cuts.size()) ? cuts[k + 1] - 1 : kMaxCodepoint;
            std::vector<int> targets;
            for (int s : members) {
                for (const auto& r : nfa.states[s].set) {
                    if (r.lo <= lo && hi <= r.hi) {
                        targets.push_back(nfa.states[s].next);
                        break;
                    }
                }
            }
            if (targets.empty()) continue;
            const std::int32_t target = intern(closure(nfa, std::move(targets)));
            auto& st = dfa.states_[done];
            for (char32_t c = lo; c <= std::min<char32_t>(hi, 127); ++c) st.ascii[c] = target;
            if (hi >= 128) {
                const char32_t wlo = std::max<char32_t>(lo, 128);
                if (!st.wide.empty() && st.wide.back().target == target && st.wide.back().hi + 1 == wlo) {
                    st.wide.back().hi = hi;
                } else {
                    st.wide.push_back({wlo, hi, target});
                }
            }
        }
    }
    return dfa;
}

Dfa compile(std::string_view pattern, std::size_t state_budget) {
    return compile(parse(pattern), state_budget);
}

std::size_t count_states(std::string_view pattern, std::size_t limit) {
    try {
        return compile(pattern, limit).state_count();
    } catch (const PatternTooComplex&) {
        return 0;
    }
}

} // namespace spanforge::regex
