#pragma once

#include "spanforge/corpus.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace spanforge::fixtures {

/// The bundled demo queries T1-T5. T1-T4 spend most of their time in
/// extraction; T5 in nested-loop joins.
struct DemoQuery {
    std::string name;
    std::string title;
    std::string aql;
    bool relational_heavy = false;
};

const std::vector<DemoQuery>& demo_queries();
/// Throws Error for an unknown name.
const DemoQuery& demo_query(std::string_view name);

inline constexpr std::size_t kDemoDocSize = 2048;
inline constexpr std::size_t kDemoDocuments = 1000;
inline constexpr std::uint64_t kDemoSeed = 42;

/// The shipped synthetic corpus: kDemoDocuments documents of kDemoDocSize bytes.
corpus::Corpus demo_corpus(std::size_t documents = kDemoDocuments, std::size_t doc_size = kDemoDocSize,
                           std::uint64_t seed = kDemoSeed);

} // namespace spanforge::fixtures
