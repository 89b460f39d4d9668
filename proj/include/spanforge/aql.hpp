#pragma once

#include "spanforge/aog.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spanforge::aql {

struct SourceLocation {
    std::size_t line = 1;
    std::size_t column = 1;
};

struct DictionaryDecl {
    std::string name;
    std::vector<std::string> entries;
    std::string file;  // non-empty when declared "from file"
    SourceLocation where;
};

struct ExtractRegex {
    std::string pattern;
    std::string source_view;
    std::string source_column;
};
struct ExtractDictionary {
    std::string dict;
    std::string source_view;
    std::string source_column;
};
struct SelectBody {
    Predicate predicate;
    std::string input;
};
struct ProjectBody {
    std::vector<std::string> columns;
    std::string input;
};
struct JoinBody {
    Predicate predicate;
    std::string left;
    std::string right;
};
struct UnionBody {
    std::vector<std::string> inputs;
};
struct ConsolidateBody {
    std::string policy;
    std::string input;
};

using ViewBody = std::variant<ExtractRegex, ExtractDictionary, SelectBody, ProjectBody, JoinBody,
                              UnionBody, ConsolidateBody>;

struct ViewDefinition {
    std::string name;
    ViewBody body;
    SourceLocation where;
};

struct OutputView {
    std::string name;
    SourceLocation where;
};

using Statement = std::variant<DictionaryDecl, ViewDefinition, OutputView>;

struct RuleProgram {
    std::vector<Statement> statements;

    std::vector<const ViewDefinition*> views() const;
    std::vector<const OutputView*> outputs() const;
    const DictionaryDecl* dictionary(std::string_view name) const;
};

/// Views a body reads from, in input-slot order.
std::vector<std::string> view_inputs(const ViewBody& body);

/// Parses and resolves a rule program. Views may be referenced anywhere in
/// the program; cycles are rejected later by lower_to_aog. Dictionary files
/// are read relative to `base_dir`.
/// Throws ParseError (with line/column) or ResolutionError.
RuleProgram parse_aql(std::string_view source, const std::filesystem::path& base_dir = {});

/// One node per view feeding an output (DocSource is node 0), one Sink per
/// output statement. Views that feed no output are dropped.
/// Throws GraphError when views reference each other cyclically.
OperatorGraph lower_to_aog(const RuleProgram& program);

/// Placeholder for cost-based rewriting; returns the graph unchanged.
OperatorGraph optimize(OperatorGraph graph);

/// parse → lower → optimize → infer_schemas → validate.
OperatorGraph compile(std::string_view source, const std::filesystem::path& base_dir = {});

} // namespace spanforge::aql
