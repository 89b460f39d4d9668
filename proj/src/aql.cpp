#include "spanforge/aql.hpp"

#include "spanforge/error.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <queue>
#include <set>

namespace spanforge::aql {
namespace {

enum class Tok { Ident, Integer, String, Regex, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    std::int64_t number = 0;
    SourceLocation where;
};

bool ieq(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            Token t;
            t.where = {line_, col_};
            if (pos_ >= src_.size()) {
                out.push_back(t);
                return out;
            }
            const char c = src_[pos_];
            const bool after_regex_kw = !out.empty() && out.back().kind == Tok::Ident && ieq(out.back().text, "regex");
            if (after_regex_kw && c == '/') {
                t.kind = Tok::Regex;
                t.text = regex_literal();
            } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = Tok::Ident;
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                    t.text.push_back(advance());
                }
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '-' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                t.kind = Tok::Integer;
                t.text.push_back(advance());
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                    t.text.push_back(advance());
                }
                try {
                    t.number = std::stoll(t.text);
                } catch (const std::exception&) {
                    throw ParseError("integer out of range", t.where.line, t.where.column);
                }
            } else if (c == '\'' || c == '"') {
                t.kind = Tok::String;
                t.text = string_literal(c);
            } else if (std::string_view("(),;.*").find(c) != std::string_view::npos) {
                t.kind = Tok::Punct;
                t.text.push_back(advance());
            } else {
                throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
            }
            out.push_back(std::move(t));
        }
    }

private:
    char advance() {
        const char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
            ++col_;
        }
        return c;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '-') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else {
                break;
            }
        }
    }

    std::string string_literal(char quote) {
        const std::size_t line = line_;
        const std::size_t col = col_;
        advance();
        std::string out;
        while (true) {
            if (pos_ >= src_.size()) throw ParseError("unterminated string literal", line, col);
            char c = advance();
            if (c == '\\' && pos_ < src_.size()) {
                out.push_back(advance());
            } else if (c == quote) {
                if (pos_ < src_.size() && src_[pos_] == quote) {
                    out.push_back(advance());
                } else {
                    return out;
                }
            } else {
                out.push_back(c);
            }
        }
    }

    std::string regex_literal() {
        const std::size_t line = line_;
        const std::size_t col = col_;
        advance();
        std::string out;
        while (true) {
            if (pos_ >= src_.size() || src_[pos_] == '\n') {
                throw ParseError("unterminated regex literal", line, col);
            }
            char c = advance();
            if (c == '\\' && pos_ < src_.size() && src_[pos_] == '/') {
                out.push_back(advance());
            } else if (c == '\\' && pos_ < src_.size()) {
                out.push_back(c);
                out.push_back(advance());
            } else if (c == '/') {
                return out;
            } else {
                out.push_back(c);
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

class Parser {
public:
    Parser(std::vector<Token> tokens, std::filesystem::path base_dir)
        : toks_(std::move(tokens)), base_dir_(std::move(base_dir)) {}

    RuleProgram run() {
        RuleProgram program;
        while (peek().kind != Tok::End) program.statements.push_back(statement());
        return program;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const std::string& msg, const Token& at) const {
        throw ParseError(msg, at.where.line, at.where.column);
    }

    static std::string describe(const Token& t) {
        switch (t.kind) {
            case Tok::End: return "end of input";
            case Tok::String: return "string '" + t.text + "'";
            case Tok::Regex: return "regex /" + t.text + "/";
            default: return "'" + t.text + "'";
        }
    }

    bool at_keyword(std::string_view kw) const { return peek().kind == Tok::Ident && ieq(peek().text, kw); }

    void keyword(std::string_view kw) {
        if (!at_keyword(kw)) fail("expected '" + std::string(kw) + "' but found " + describe(peek()), peek());
        take();
    }

    void punct(char c) {
        if (peek().kind != Tok::Punct || peek().text[0] != c) {
            fail(std::string("expected '") + c + "' but found " + describe(peek()), peek());
        }
        take();
    }

    bool at_punct(char c) const { return peek().kind == Tok::Punct && peek().text[0] == c; }

    std::string ident(const char* what) {
        if (peek().kind != Tok::Ident) fail(std::string("expected ") + what + " but found " + describe(peek()), peek());
        return take().text;
    }

    std::string string(const char* what) {
        if (peek().kind != Tok::String) fail(std::string("expected ") + what + " but found " + describe(peek()), peek());
        return take().text;
    }

    std::int64_t integer() {
        if (peek().kind != Tok::Integer) fail("expected an integer but found " + describe(peek()), peek());
        return take().number;
    }

    Statement statement() {
        const Token start = peek();
        if (at_keyword("create")) {
            take();
            if (at_keyword("dictionary")) {
                take();
                return dictionary(start.where);
            }
            if (at_keyword("view")) {
                take();
                return view(start.where);
            }
            fail("expected 'dictionary' or 'view' after 'create'", peek());
        }
        if (at_keyword("output")) {
            take();
            keyword("view");
            OutputView out{ident("a view name"), start.where};
            punct(';');
            return out;
        }
        fail("expected a statement but found " + describe(peek()), peek());
    }

    DictionaryDecl dictionary(SourceLocation where) {
        DictionaryDecl d;
        d.where = where;
        d.name = ident("a dictionary name");
        if (at_keyword("from")) {
            take();
            keyword("file");
            const Token& file_tok = peek();
            d.file = string("a file path");
            std::filesystem::path path(d.file);
            if (path.is_relative() && !base_dir_.empty()) path = base_dir_ / path;
            try {
                d.entries = load_dictionary_file(path);
            } catch (const FormatError& e) {
                throw ResolutionError(std::to_string(file_tok.where.line) + ":" +
                                      std::to_string(file_tok.where.column) + ": " + e.what());
            }
        } else {
            keyword("as");
            punct('(');
            if (!at_punct(')')) {
                d.entries.push_back(string("a dictionary entry"));
                while (at_punct(',')) {
                    take();
                    d.entries.push_back(string("a dictionary entry"));
                }
            }
            punct(')');
        }
        for (const auto& e : d.entries) {
            if (e.empty()) throw ParseError("empty dictionary entry", where.line, where.column);
        }
        punct(';');
        return d;
    }

    // "on D.text from Document D"
    void extraction_source(std::string& view, std::string& column) {
        keyword("on");
        const Token alias_tok = peek();
        std::string alias = ident("a source alias");
        punct('.');
        column = ident("a column name");
        keyword("from");
        view = ident("a source view");
        std::string alias2 = ident("a source alias");
        if (alias != alias2) fail("alias '" + alias + "' is not bound in the from clause", alias_tok);
    }

    ViewDefinition view(SourceLocation where) {
        ViewDefinition v;
        v.where = where;
        v.name = ident("a view name");
        keyword("as");
        if (at_keyword("extract")) {
            take();
            if (at_keyword("regex")) {
                take();
                if (peek().kind != Tok::Regex) fail("expected a /regex/ literal", peek());
                ExtractRegex body;
                body.pattern = take().text;
                extraction_source(body.source_view, body.source_column);
                v.body = std::move(body);
            } else if (at_keyword("dictionary")) {
                take();
                ExtractDictionary body;
                body.dict = ident("a dictionary name");
                extraction_source(body.source_view, body.source_column);
                v.body = std::move(body);
            } else {
                fail("expected 'regex' or 'dictionary' after 'extract'", peek());
            }
        } else if (at_keyword("select")) {
            take();
            v.body = select_body();
        } else if (at_keyword("union")) {
            take();
            keyword("all");
            UnionBody body;
            body.inputs.push_back(ident("a view name"));
            while (at_punct(',')) {
                take();
                body.inputs.push_back(ident("a view name"));
            }
            v.body = std::move(body);
        } else if (at_keyword("consolidate")) {
            take();
            ConsolidateBody body;
            body.input = ident("a view name");
            keyword("using");
            const Token& pol = peek();
            std::string policy = string("a consolidation policy");
            if (policy == "ContainedWithin" || policy == "contained_within") {
                body.policy = "contained_within";
            } else {
                fail("unsupported consolidation policy '" + policy + "'", pol);
            }
            v.body = std::move(body);
        } else {
            fail("expected 'extract', 'select', 'union' or 'consolidate' but found " + describe(peek()), peek());
        }
        punct(';');
        return v;
    }

    ViewBody select_body() {
        const Token list_tok = peek();
        std::vector<std::string> columns;
        bool star = false;
        if (at_punct('*')) {
            take();
            star = true;
        } else {
            columns.push_back(column_ref());
            while (at_punct(',')) {
                take();
                columns.push_back(column_ref());
            }
        }
        keyword("from");
        std::vector<std::string> inputs{ident("a view name")};
        while (at_punct(',')) {
            take();
            inputs.push_back(ident("a view name"));
        }
        if (inputs.size() > 2) fail("select takes at most two input views", list_tok);
        std::optional<Predicate> where;
        if (at_keyword("where")) {
            take();
            where = predicate();
        }
        if (inputs.size() == 2) {
            if (!star) fail("a join must select '*'", list_tok);
            if (!where) fail("a join needs a 'where' predicate", peek());
            return JoinBody{std::move(*where), inputs[0], inputs[1]};
        }
        if (star) {
            if (!where) fail("'select *' without 'where' is an identity view", list_tok);
            return SelectBody{std::move(*where), inputs[0]};
        }
        if (where) fail("a projection cannot also filter; split it into two views", list_tok);
        return ProjectBody{std::move(columns), inputs[0]};
    }

    // Column references may be qualified ("V.match"); the qualifier is dropped.
    std::string column_ref() {
        std::string name = ident("a column name");
        if (at_punct('.')) {
            take();
            name = ident("a column name");
        }
        return name;
    }

    Predicate predicate() {
        const Token head = peek();
        const std::string name = ident("a predicate");
        punct('(');
        Predicate p;
        if (ieq(name, "Follows")) {
            std::string a = column_ref();
            punct(',');
            std::string b = column_ref();
            punct(',');
            std::int64_t lo = integer();
            punct(',');
            std::int64_t hi = integer();
            if (lo > hi) fail("Follows bounds out of order", head);
            p = Predicate::follows(std::move(a), std::move(b), lo, hi);
        } else if (ieq(name, "Contains") || ieq(name, "Overlaps")) {
            std::string a = column_ref();
            punct(',');
            std::string b = column_ref();
            p = ieq(name, "Contains") ? Predicate::contains(std::move(a), std::move(b))
                                      : Predicate::overlaps(std::move(a), std::move(b));
        } else if (ieq(name, "SpanLengthGreaterThan")) {
            std::string a = column_ref();
            punct(',');
            p = Predicate::length_greater_than(std::move(a), integer());
        } else if (ieq(name, "And") || ieq(name, "Or")) {
            Predicate a = predicate();
            punct(',');
            Predicate b = predicate();
            p = ieq(name, "And") ? Predicate::conjunction(std::move(a), std::move(b))
                                 : Predicate::disjunction(std::move(a), std::move(b));
        } else if (ieq(name, "Not")) {
            p = Predicate::negation(predicate());
        } else {
            fail("unknown predicate '" + name + "'", head);
        }
        punct(')');
        return p;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::filesystem::path base_dir_;
};

std::string where_prefix(SourceLocation w) {
    return std::to_string(w.line) + ":" + std::to_string(w.column) + ": ";
}

void resolve(const RuleProgram& program) {
    std::map<std::string, const ViewDefinition*> views;
    std::set<std::string> dicts;
    for (const auto& st : program.statements) {
        if (const auto* d = std::get_if<DictionaryDecl>(&st)) {
            if (!dicts.insert(d->name).second) {
                throw ResolutionError(where_prefix(d->where) + "duplicate dictionary \"" + d->name + "\"");
            }
        } else if (const auto* v = std::get_if<ViewDefinition>(&st)) {
            if (v->name == "Document") {
                throw ResolutionError(where_prefix(v->where) + "\"Document\" is a reserved view name");
            }
            if (!views.emplace(v->name, v).second) {
                throw ResolutionError(where_prefix(v->where) + "duplicate view \"" + v->name + "\"");
            }
        }
    }
    std::set<std::string> emitted;
    bool any_output = false;
    for (const auto& st : program.statements) {
        if (const auto* v = std::get_if<ViewDefinition>(&st)) {
            auto check_source = [&](const std::string& view, const std::string& column) {
                if (view != "Document") {
                    throw ResolutionError(where_prefix(v->where) + "view \"" + v->name +
                                          "\": extraction must read Document, not \"" + view + "\"");
                }
                if (column != "text") {
                    throw ResolutionError(where_prefix(v->where) + "view \"" + v->name +
                                          "\": Document has no column \"" + column + "\"");
                }
            };
            if (const auto* r = std::get_if<ExtractRegex>(&v->body)) {
                check_source(r->source_view, r->source_column);
            } else if (const auto* d = std::get_if<ExtractDictionary>(&v->body)) {
                check_source(d->source_view, d->source_column);
                if (!dicts.count(d->dict)) {
                    throw ResolutionError(where_prefix(v->where) + "undefined dictionary \"" + d->dict + "\"");
                }
            }
            for (const auto& in : view_inputs(v->body)) {
                if (!views.count(in)) {
                    throw ResolutionError(where_prefix(v->where) + "undefined view \"" + in + "\"");
                }
            }
        } else if (const auto* o = std::get_if<OutputView>(&st)) {
            any_output = true;
            if (!views.count(o->name)) {
                throw ResolutionError(where_prefix(o->where) + "undefined view \"" + o->name + "\"");
            }
            if (!emitted.insert(o->name).second) {
                throw ResolutionError(where_prefix(o->where) + "view \"" + o->name + "\" is output twice");
            }
        }
    }
    if (!any_output) throw ResolutionError("program has no 'output view' statement");
}

} // namespace

std::vector<const ViewDefinition*> RuleProgram::views() const {
    std::vector<const ViewDefinition*> out;
    for (const auto& st : statements) {
        if (const auto* v = std::get_if<ViewDefinition>(&st)) out.push_back(v);
    }
    return out;
}

std::vector<const OutputView*> RuleProgram::outputs() const {
    std::vector<const OutputView*> out;
    for (const auto& st : statements) {
        if (const auto* o = std::get_if<OutputView>(&st)) out.push_back(o);
    }
    return out;
}

const DictionaryDecl* RuleProgram::dictionary(std::string_view name) const {
    for (const auto& st : statements) {
        if (const auto* d = std::get_if<DictionaryDecl>(&st); d && d->name == name) return d;
    }
    return nullptr;
}

std::vector<std::string> view_inputs(const ViewBody& body) {
    return std::visit(
        [](const auto& b) -> std::vector<std::string> {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, ExtractRegex> || std::is_same_v<B, ExtractDictionary>) {
                return {};
            } else if constexpr (std::is_same_v<B, JoinBody>) {
                return {b.left, b.right};
            } else if constexpr (std::is_same_v<B, UnionBody>) {
                return b.inputs;
            } else {
                return {b.input};
            }
        },
        body);
}

RuleProgram parse_aql(std::string_view source, const std::filesystem::path& base_dir) {
    RuleProgram program = Parser(Lexer(source).run(), base_dir).run();
    resolve(program);
    return program;
}

OperatorGraph lower_to_aog(const RuleProgram& program) {
    const auto views = program.views();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < views.size(); ++i) index[views[i]->name] = i;

    // Views that feed some output.
    std::vector<char> needed(views.size(), 0);
    std::vector<std::size_t> stack;
    for (const auto* o : program.outputs()) {
        auto it = index.find(o->name);
        if (it == index.end()) throw ResolutionError("undefined view \"" + o->name + "\"");
        if (!needed[it->second]) {
            needed[it->second] = 1;
            stack.push_back(it->second);
        }
    }
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (const auto& in : view_inputs(views[v]->body)) {
            auto it = index.find(in);
            if (it == index.end()) throw ResolutionError("undefined view \"" + in + "\"");
            if (!needed[it->second]) {
                needed[it->second] = 1;
                stack.push_back(it->second);
            }
        }
    }

    // Kahn's algorithm over needed views; ties go to source order.
    std::vector<int> pending(views.size(), 0);
    std::vector<std::vector<std::size_t>> consumers(views.size());
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (!needed[v]) continue;
        for (const auto& in : view_inputs(views[v]->body)) {
            ++pending[v];
            consumers[index[in]].push_back(v);
        }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (needed[v] && pending[v] == 0) ready.push(v);
    }
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        std::size_t v = ready.top();
        ready.pop();
        order.push_back(v);
        for (std::size_t c : consumers[v]) {
            if (--pending[c] == 0) ready.push(c);
        }
    }
    const auto needed_count = static_cast<std::size_t>(std::count(needed.begin(), needed.end(), 1));
    if (order.size() != needed_count) {
        std::string names;
        for (std::size_t v = 0; v < views.size(); ++v) {
            if (needed[v] && pending[v] > 0) {
                if (!names.empty()) names += ", ";
                names += views[v]->name;
            }
        }
        throw GraphError("cycle detected among views: " + names);
    }

    OperatorGraph g;
    g.add_node({0, OperatorKind::DocSource, NoParams{}, "Document", {}});
    std::map<std::string, NodeId> ids;
    NodeId next = 1;
    for (std::size_t v : order) ids[views[v]->name] = next++;

    for (std::size_t v : order) {
        const ViewDefinition& def = *views[v];
        const NodeId id = ids[def.name];
        OperatorNode node;
        node.id = id;
        node.name = def.name;
        std::visit(
            [&](const auto& b) {
                using B = std::decay_t<decltype(b)>;
                if constexpr (std::is_same_v<B, ExtractRegex>) {
                    node.kind = OperatorKind::RegexExtract;
                    node.params = RegexParams{b.pattern};
                } else if constexpr (std::is_same_v<B, ExtractDictionary>) {
                    node.kind = OperatorKind::DictionaryExtract;
                    const DictionaryDecl* d = program.dictionary(b.dict);
                    if (!d) throw ResolutionError("undefined dictionary \"" + b.dict + "\"");
                    node.params = DictionaryParams{d->name, d->entries, {}};
                } else if constexpr (std::is_same_v<B, SelectBody>) {
                    node.kind = OperatorKind::Select;
                    node.params = PredicateParams{b.predicate};
                } else if constexpr (std::is_same_v<B, ProjectBody>) {
                    node.kind = OperatorKind::Project;
                    node.params = ProjectParams{b.columns};
                } else if constexpr (std::is_same_v<B, JoinBody>) {
                    node.kind = OperatorKind::Join;
                    node.params = PredicateParams{b.predicate};
                } else if constexpr (std::is_same_v<B, UnionBody>) {
                    node.kind = OperatorKind::Union;
                    node.params = NoParams{};
                } else if constexpr (std::is_same_v<B, ConsolidateBody>) {
                    node.kind = OperatorKind::Consolidate;
                    node.params = ConsolidateParams{b.policy};
                }
            },
            def.body);
        if (is_extraction(node.kind)) {
            g.add_edge({0, id, 0, 0});
        } else {
            int slot = 0;
            for (const auto& in : view_inputs(def.body)) g.add_edge({ids[in], id, slot++, 0});
        }
        g.add_node(std::move(node));
    }

    std::vector<NodeId> outputs;
    for (const auto* o : program.outputs()) {
        OperatorNode sink{next, OperatorKind::Sink, SinkParams{o->name}, o->name, {}};
        g.add_edge({ids[o->name], next, 0, 0});
        g.add_node(std::move(sink));
        outputs.push_back(next++);
    }
    g.set_outputs(std::move(outputs));
    return g;
}

OperatorGraph optimize(OperatorGraph graph) {
    return graph;
}

OperatorGraph compile(std::string_view source, const std::filesystem::path& base_dir) {
    OperatorGraph g = infer_schemas(optimize(lower_to_aog(parse_aql(source, base_dir))));
    require_valid(g);
    return g;
}

} // namespace spanforge::aql
