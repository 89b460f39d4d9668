#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace spanforge::regex {

struct CharRange {
    char32_t lo;
    char32_t hi;  // inclusive
};

/// Supported syntax: literals, escapes (\d \w \s \D \W \S and escaped
/// metacharacters), '.', bracket classes with ranges and negation, grouping
/// with ( ) or (?: ), alternation, and the quantifiers * + ? {m} {m,} {m,n}.
/// Anchors and backreferences are rejected.
struct Ast {
    enum class Kind { Empty, Set, Concat, Alternate, Repeat };

    Kind kind = Kind::Empty;
    std::vector<CharRange> set;  // Set: sorted, disjoint
    std::vector<Ast> children;   // Concat / Alternate / Repeat (one child)
    std::uint32_t min = 0;
    std::uint32_t max = 0;       // Repeat; kUnbounded for * and +

    static constexpr std::uint32_t kUnbounded = UINT32_MAX;
};

/// Throws PatternError with the offending position on syntax errors.
Ast parse(std::string_view pattern);

inline constexpr std::size_t kDefaultStateBudget = 256;
inline constexpr std::size_t kSoftwareStateBudget = 1u << 16;

/// Deterministic automaton over Unicode scalar values. State ids are dense;
/// kDead is the absorbing reject state.
class Dfa {
public:
    static constexpr std::int32_t kDead = -1;

    std::int32_t start() const noexcept { return 0; }
    std::int32_t step(std::int32_t state, char32_t c) const noexcept {
        const State& s = states_[static_cast<std::size_t>(state)];
        if (c < 128) return s.ascii[c];
        return step_wide(s, c);
    }
    bool accepting(std::int32_t state) const noexcept {
        return states_[static_cast<std::size_t>(state)].accepting;
    }
    std::size_t state_count() const noexcept { return states_.size(); }

private:
    friend Dfa compile(const Ast&, std::size_t);

    struct WideEdge {
        char32_t lo;
        char32_t hi;
        std::int32_t target;
    };
    struct State {
        std::array<std::int32_t, 128> ascii;
        std::vector<WideEdge> wide;  // sorted by lo, only ranges above 0x7F
        bool accepting = false;
    };

    static std::int32_t step_wide(const State& s, char32_t c) noexcept;

    std::vector<State> states_;
};

/// Subset construction. Throws PatternTooComplex when the automaton would
/// need more than `state_budget` live states.
Dfa compile(const Ast& ast, std::size_t state_budget = kDefaultStateBudget);
Dfa compile(std::string_view pattern, std::size_t state_budget = kDefaultStateBudget);

/// Number of live DFA states the pattern needs, or 0 if it exceeds `limit`.
std::size_t count_states(std::string_view pattern, std::size_t limit = kSoftwareStateBudget);

} // namespace spanforge::regex
