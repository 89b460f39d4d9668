#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spanforge {

/// Half-open interval [begin, end) of Unicode scalar offsets into a document.
struct Span {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;

    std::uint32_t length() const noexcept { return end - begin; }
    friend auto operator<=>(const Span&, const Span&) = default;
};

enum class ValueType { Span, Integer, Float, Boolean, Text };

std::string_view to_string(ValueType type) noexcept;
std::optional<ValueType> parse_value_type(std::string_view name) noexcept;

// Variant order matches ValueType.
using Value = std::variant<Span, std::int64_t, double, bool, std::string>;

ValueType type_of(const Value& value) noexcept;

struct Column {
    std::string name;
    ValueType type = ValueType::Span;

    friend bool operator==(const Column&, const Column&) = default;
};

class Schema {
public:
    Schema() = default;
    explicit Schema(std::vector<Column> columns);

    const std::vector<Column>& columns() const noexcept { return columns_; }
    std::size_t size() const noexcept { return columns_.size(); }
    bool empty() const noexcept { return columns_.empty(); }

    std::optional<std::size_t> index_of(std::string_view name) const noexcept;
    /// Throws SchemaError when the column does not exist.
    std::size_t require(std::string_view name) const;
    std::optional<std::size_t> first_span_column() const noexcept;

    friend bool operator==(const Schema&, const Schema&) = default;

private:
    std::vector<Column> columns_;
};

using Tuple = std::vector<Value>;

/// Canonical tuple order: the first Span column's (begin, end), then every
/// column left to right.
struct CanonicalLess {
    std::optional<std::size_t> key_column;
    bool operator()(const Tuple& a, const Tuple& b) const noexcept;
};

std::strong_ordering compare_values(const Value& a, const Value& b) noexcept;

struct Document {
    std::string id;
    std::string utf8;
    std::u32string text;

    static Document from_utf8(std::string id, std::string utf8);
    std::size_t bytes() const noexcept { return utf8.size(); }
};

using DocumentPtr = std::shared_ptr<const Document>;

} // namespace spanforge
