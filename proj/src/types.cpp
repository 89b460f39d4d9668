#include "spanforge/types.hpp"

#include "spanforge/error.hpp"
#include "spanforge/unicode.hpp"

#include <unordered_set>

namespace spanforge {

std::string_view to_string(ValueType type) noexcept {
    switch (type) {
        case ValueType::Span: return "Span";
        case ValueType::Integer: return "Integer";
        case ValueType::Float: return "Float";
        case ValueType::Boolean: return "Boolean";
        case ValueType::Text: return "Text";
    }
    return "?";
}

std::optional<ValueType> parse_value_type(std::string_view name) noexcept {
    if (name == "Span") return ValueType::Span;
    if (name == "Integer") return ValueType::Integer;
    if (name == "Float") return ValueType::Float;
    if (name == "Boolean") return ValueType::Boolean;
    if (name == "Text") return ValueType::Text;
    return std::nullopt;
}

ValueType type_of(const Value& value) noexcept {
    return static_cast<ValueType>(value.index());
}

Schema::Schema(std::vector<Column> columns) : columns_(std::move(columns)) {
    std::unordered_set<std::string> seen;
    for (const auto& c : columns_) {
        if (!seen.insert(c.name).second) {
            throw SchemaError("duplicate column name '" + c.name + "'");
        }
    }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t Schema::require(std::string_view name) const {
    if (auto idx = index_of(name)) return *idx;
    throw SchemaError("unknown column '" + std::string(name) + "'");
}

std::optional<std::size_t> Schema::first_span_column() const noexcept {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].type == ValueType::Span) return i;
    }
    return std::nullopt;
}

std::strong_ordering compare_values(const Value& a, const Value& b) noexcept {
    if (a.index() != b.index()) return a.index() <=> b.index();
    return std::visit(
        [&](const auto& lhs) -> std::strong_ordering {
            using T = std::decay_t<decltype(lhs)>;
            const auto& rhs = std::get<T>(b);
            if constexpr (std::is_same_v<T, double>) {
                if (lhs < rhs) return std::strong_ordering::less;
                if (rhs < lhs) return std::strong_ordering::greater;
                return std::strong_ordering::equal;
            } else {
                return lhs <=> rhs;
            }
        },
        a);
}

bool CanonicalLess::operator()(const Tuple& a, const Tuple& b) const noexcept {
    if (key_column) {
        auto c = compare_values(a[*key_column], b[*key_column]);
        if (c != 0) return c < 0;
    }
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        auto c = compare_values(a[i], b[i]);
        if (c != 0) return c < 0;
    }
    return a.size() < b.size();
}

Document Document::from_utf8(std::string id, std::string utf8) {
    Document doc;
    doc.id = std::move(id);
    doc.text = unicode::decode_utf8(utf8);
    doc.utf8 = std::move(utf8);
    return doc;
}

} // namespace spanforge
