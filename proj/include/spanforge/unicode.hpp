#pragma once

#include <string>
#include <string_view>

namespace spanforge::unicode {

/// Decodes UTF-8 into Unicode scalar values. Throws spanforge::Error on
/// malformed input (overlong forms, surrogates, truncated sequences).
std::u32string decode_utf8(std::string_view bytes);

std::string encode_utf8(std::u32string_view text);
void append_utf8(std::string& out, char32_t cp);

/// Simple one-to-one case folding (ASCII, Latin-1, Greek, Cyrillic).
char32_t fold_case(char32_t cp) noexcept;

/// Token-boundary classification: ASCII letters and digits, plus letters of
/// the Latin-1/Latin Extended, Greek and Cyrillic blocks and anything at or
/// above U+3040 outside the CJK punctuation block.
bool is_alnum(char32_t cp) noexcept;

} // namespace spanforge::unicode
