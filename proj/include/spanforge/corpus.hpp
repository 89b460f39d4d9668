#pragma once

#include "spanforge/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spanforge::corpus {

/// One corpus document, or the reason it could not be loaded.
struct CorpusEntry {
    std::string id;
    DocumentPtr doc;                   // null when `error` is set
    std::optional<std::string> error;

    std::size_t bytes() const noexcept { return doc ? doc->bytes() : 0; }
};

using Corpus = std::vector<CorpusEntry>;

/// A directory of `.txt` files (id = file name) or a JSON Lines file of
/// {"id": string, "text": string}. Throws CorpusError when the path does not
/// exist; unreadable or undecodable documents become failed entries.
Corpus load_corpus(const std::filesystem::path& path);

/// Writes `{"id","text"}` lines.
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// Deterministic English-like text with names, organizations, places, dates,
/// phone numbers, e-mail addresses and amounts. Every document is exactly
/// `sizes[i % sizes.size()]` bytes of UTF-8.
Corpus synthetic_corpus(std::size_t documents, const std::vector<std::size_t>& sizes, std::uint64_t seed = 42);

std::string synthetic_text(std::size_t bytes, std::uint64_t seed);

std::uint64_t total_bytes(const Corpus& corpus) noexcept;
std::size_t failed_count(const Corpus& corpus) noexcept;

} // namespace spanforge::corpus
