#include "spanforge/accel.hpp"

#include "spanforge/error.hpp"
#include "spanforge/unicode.hpp"

#include <algorithm>
#include <deque>
#include <exception>
#include <map>
#include <sstream>
#include <thread>

namespace spanforge::accel {

// ---------------------------------------------------------------------------
// Cost model

void CostModel::validate() const {
    if (!(peak_bandwidth > 0) || !(package_rate > 0) || lanes == 0 || !(clock_hz > 0) || docs_per_package == 0) {
        throw Error("cost model parameters must be positive");
    }
}

double calibrated_package_rate(double peak_bandwidth, std::size_t docs_per_package, double doc_size, double factor) {
    return (peak_bandwidth / factor) / (static_cast<double>(docs_per_package) * doc_size);
}

double model_throughput(const CostModel& cost, double doc_size, std::size_t docs_per_package) {
    if (!(doc_size > 0)) throw Error("document size must be positive");
    cost.validate();
    return std::min(cost.peak_bandwidth, cost.package_rate * static_cast<double>(docs_per_package) * doc_size);
}

double model_throughput(const CostModel& cost, double doc_size) {
    return model_throughput(cost, doc_size, cost.docs_per_package);
}

// ---------------------------------------------------------------------------
// Sorting buffer

SortingBuffer::SortingBuffer(std::size_t capacity, std::optional<std::size_t> key_column, std::string stage)
    : capacity_(capacity), key_column_(key_column), stage_(std::move(stage)) {
    if (capacity_ == 0) throw Error("sorting buffer capacity must be positive");
}

Span SortingBuffer::key_of(const Tuple& t) const {
    if (!key_column_) return {};
    return std::get<Span>(t[*key_column_]);
}

void SortingBuffer::push(Tuple t) {
    if (full()) throw StageError(stage_, "sorting buffer overflow: capacity " + std::to_string(capacity_) + " exceeded");
    const Span key = key_of(t);
    if (last_ && key < *last_) {
        throw StageError(stage_, "sorting buffer overflow: tuple [" + std::to_string(key.begin) + "," +
                                     std::to_string(key.end) + ") arrived after [" + std::to_string(last_->begin) +
                                     "," + std::to_string(last_->end) + ") was emitted (capacity " +
                                     std::to_string(capacity_) + ")");
    }
    heap_.push({key, seq_++, std::move(t)});
}

Tuple SortingBuffer::pop() {
    Entry e = heap_.top();
    heap_.pop();
    last_ = e.key;
    return std::move(e.tuple);
}

// ---------------------------------------------------------------------------
// Aho-Corasick

AhoCorasick::AhoCorasick(const ops::Dictionary& dict) {
    nodes_.emplace_back();
    for (const auto& entry : dict.folded_entries()) {
        max_length_ = std::max(max_length_, entry.size());
        int cur = 0;
        for (char32_t c : entry) {
            int nxt = child(cur, c);
            if (nxt < 0) {
                nxt = static_cast<int>(nodes_.size());
                nodes_.emplace_back();
                auto& edges = nodes_[static_cast<std::size_t>(cur)].next;
                auto it = std::lower_bound(edges.begin(), edges.end(), c,
                                           [](const auto& p, char32_t v) { return p.first < v; });
                edges.insert(it, {c, nxt});
            }
            cur = nxt;
        }
        nodes_[static_cast<std::size_t>(cur)].out.push_back(static_cast<std::uint32_t>(entry.size()));
    }
    std::deque<int> queue;
    for (const auto& [c, n] : nodes_[0].next) {
        nodes_[static_cast<std::size_t>(n)].fail = 0;
        queue.push_back(n);
    }
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (const auto& [c, v] : nodes_[static_cast<std::size_t>(u)].next) {
            int f = nodes_[static_cast<std::size_t>(u)].fail;
            while (f != 0 && child(f, c) < 0) f = nodes_[static_cast<std::size_t>(f)].fail;
            int target = child(f, c);
            if (target < 0 || target == v) target = 0;
            auto& node = nodes_[static_cast<std::size_t>(v)];
            node.fail = target;
            const auto& inherited = nodes_[static_cast<std::size_t>(target)].out;
            node.out.insert(node.out.end(), inherited.begin(), inherited.end());
            queue.push_back(v);
        }
    }
}

int AhoCorasick::child(int node, char32_t c) const noexcept {
    const auto& edges = nodes_[static_cast<std::size_t>(node)].next;
    auto it = std::lower_bound(edges.begin(), edges.end(), c, [](const auto& p, char32_t v) { return p.first < v; });
    if (it == edges.end() || it->first != c) return -1;
    return it->second;
}

int AhoCorasick::step(int state, char32_t folded) const noexcept {
    for (;;) {
        const int n = child(state, folded);
        if (n >= 0) return n;
        if (state == 0) return 0;
        state = nodes_[static_cast<std::size_t>(state)].fail;
    }
}

std::string_view to_string(StageKind kind) noexcept {
    switch (kind) {
        case StageKind::Regex: return "regex";
        case StageKind::Dictionary: return "dictionary";
        case StageKind::Select: return "select";
        case StageKind::Project: return "project";
        case StageKind::Join: return "join";
        case StageKind::Union: return "union";
        case StageKind::Consolidate: return "consolidate";
        case StageKind::SortingBuffer: return "sort";
        case StageKind::HostInput: return "input";
        case StageKind::Output: return "output";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Build

struct Pipeline::Compiled {
    std::vector<std::unique_ptr<regex::Dfa>> dfas;
    std::vector<std::unique_ptr<ops::Dictionary>> dicts;
    std::vector<std::unique_ptr<AhoCorasick>> automata;
    std::vector<std::unique_ptr<ops::BoundPredicate>> predicates;
    std::vector<std::vector<std::size_t>> projections;
    std::vector<std::string> policies;
};

namespace {

StageKind stage_kind(OperatorKind k) {
    switch (k) {
        case OperatorKind::RegexExtract: return StageKind::Regex;
        case OperatorKind::DictionaryExtract: return StageKind::Dictionary;
        case OperatorKind::Select: return StageKind::Select;
        case OperatorKind::Project: return StageKind::Project;
        case OperatorKind::Join: return StageKind::Join;
        case OperatorKind::Union: return StageKind::Union;
        case OperatorKind::Consolidate: return StageKind::Consolidate;
        default: break;
    }
    throw GraphError(std::string("operator kind ") + std::string(to_string(k)) + " has no pipeline stage");
}

bool is_tap(StageKind k) { return k == StageKind::Regex || k == StageKind::Dictionary; }

} // namespace

Pipeline Pipeline::build(const partition::Subgraph& sg, const partition::CapabilitySet& caps,
                         const PipelineOptions& options, const CostModel& cost) {
    if (options.channel_capacity == 0 || options.tap_window == 0 || options.sort_capacity == 0) {
        throw Error("pipeline channel, tap and sorting capacities must be positive");
    }
    cost.validate();
    Pipeline p;
    p.subgraph_id_ = sg.id;
    p.input_count_ = sg.inputs.size();
    p.output_count_ = sg.outputs.size();
    p.options_ = options;
    p.cost_ = cost;
    auto compiled = std::make_shared<Compiled>();

    auto add_stage = [&](StageSpec spec) {
        p.stages_.push_back(std::move(spec));
        compiled->dfas.emplace_back();
        compiled->dicts.emplace_back();
        compiled->automata.emplace_back();
        compiled->predicates.emplace_back();
        compiled->projections.emplace_back();
        compiled->policies.emplace_back();
        return static_cast<int>(p.stages_.size() - 1);
    };

    // Host-fed inputs.
    std::map<int, int> host_stage;  // input slot -> stage
    for (const auto& in : sg.inputs) {
        if (in.document) continue;
        StageSpec s;
        s.kind = StageKind::HostInput;
        s.name = "input" + std::to_string(in.slot);
        s.slot = in.slot;
        s.schema = in.schema;
        s.key_column = in.schema.first_span_column();
        s.sorted = true;
        host_stage[in.slot] = add_stage(std::move(s));
    }
    // Which boundary slot feeds (node, slot).
    std::map<std::pair<NodeId, int>, const partition::BoundaryInput*> boundary;
    for (const auto& in : sg.inputs) {
        for (const auto& t : in.targets) boundary[t] = &in;
    }

    std::map<NodeId, int> node_stage;
    for (NodeId id : topo_order(sg.fragment)) {
        const OperatorNode& node = sg.fragment.node(id);
        if (!caps.allows(node.kind)) {
            throw GraphError("node " + std::to_string(id) + " (" + std::string(to_string(node.kind)) +
                             ") is not accelerable under the given capabilities");
        }
        StageSpec s;
        s.kind = stage_kind(node.kind);
        s.node = id;
        s.name = std::string(to_string(s.kind)) + "#" + std::to_string(id);
        s.schema = node.output_schema;
        s.key_column = node.output_schema.first_span_column();

        // Input slots: internal producers or host inputs; extraction reads the tap.
        std::vector<int> producers;
        std::vector<Schema> input_schemas;
        if (!is_tap(s.kind)) {
            std::map<int, int> by_slot;
            for (const auto& e : sg.fragment.inputs_of(id)) by_slot[e.slot] = node_stage.at(e.producer);
            for (const auto& [key, in] : boundary) {
                if (key.first == id) by_slot[key.second] = host_stage.at(in->slot);
            }
            for (const auto& [slot, stage] : by_slot) {
                if (slot != static_cast<int>(producers.size())) {
                    throw GraphError("input slot " + std::to_string(producers.size()) + " of node " +
                                     std::to_string(id) + " unconnected");
                }
                producers.push_back(stage);
                input_schemas.push_back(p.stages_[static_cast<std::size_t>(stage)].schema);
            }
        }

        // Blocking stages that need sorted input get a buffer behind any
        // unsorted producer.
        if (s.kind == StageKind::Join || s.kind == StageKind::Consolidate) {
            for (std::size_t k = 0; k < producers.size(); ++k) {
                const StageSpec& prod = p.stages_[static_cast<std::size_t>(producers[k])];
                if (prod.sorted) continue;
                StageSpec b;
                b.kind = StageKind::SortingBuffer;
                b.name = "sort" + std::to_string(k) + "#" + std::to_string(id);
                b.inputs = {producers[k]};
                b.schema = prod.schema;
                b.key_column = prod.key_column;
                b.sorted = true;
                const int bi = add_stage(std::move(b));
                p.stages_[static_cast<std::size_t>(producers[k])].consumers.push_back(bi);
                producers[k] = bi;
            }
        }

        bool sorted = true;
        switch (s.kind) {
            case StageKind::Regex:
            case StageKind::Dictionary:
            case StageKind::Consolidate:
                sorted = true;
                break;
            case StageKind::Select:
                sorted = p.stages_[static_cast<std::size_t>(producers.at(0))].sorted;
                break;
            case StageKind::Project: {
                const auto& in_schema = input_schemas.at(0);
                const auto in_key = in_schema.first_span_column();
                const auto out_key = s.schema.first_span_column();
                sorted = p.stages_[static_cast<std::size_t>(producers.at(0))].sorted &&
                         (!out_key || (in_key && in_schema.columns()[*in_key].name == s.schema.columns()[*out_key].name));
                break;
            }
            case StageKind::Join:
                sorted = input_schemas.at(0).first_span_column().has_value() || !s.key_column;
                break;
            case StageKind::Union:
                sorted = producers.size() == 1 && p.stages_[static_cast<std::size_t>(producers[0])].sorted;
                break;
            default:
                break;
        }
        s.sorted = sorted || !s.key_column;
        s.inputs = producers;
        const int si = add_stage(std::move(s));
        for (int prod : producers) p.stages_[static_cast<std::size_t>(prod)].consumers.push_back(si);
        node_stage[id] = si;

        const auto idx = static_cast<std::size_t>(si);
        switch (node.kind) {
            case OperatorKind::RegexExtract:
                compiled->dfas[idx] = std::make_unique<regex::Dfa>(
                    regex::compile(node.as<RegexParams>().pattern, caps.regex_state_budget));
                break;
            case OperatorKind::DictionaryExtract: {
                const auto& dp = node.as<DictionaryParams>();
                compiled->dicts[idx] = std::make_unique<ops::Dictionary>(dp.dict, dp.entries);
                compiled->automata[idx] = std::make_unique<AhoCorasick>(*compiled->dicts[idx]);
                break;
            }
            case OperatorKind::Select:
                compiled->predicates[idx] = std::make_unique<ops::BoundPredicate>(
                    ops::BoundPredicate::for_select(node.as<PredicateParams>().predicate, input_schemas.at(0)));
                break;
            case OperatorKind::Join:
                compiled->predicates[idx] = std::make_unique<ops::BoundPredicate>(ops::BoundPredicate::for_join(
                    node.as<PredicateParams>().predicate, input_schemas.at(0), input_schemas.at(1)));
                break;
            case OperatorKind::Project:
                for (const auto& c : node.as<ProjectParams>().columns) {
                    compiled->projections[idx].push_back(input_schemas.at(0).require(c));
                }
                break;
            case OperatorKind::Consolidate:
                compiled->policies[idx] = node.as<ConsolidateParams>().policy;
                break;
            default:
                break;
        }
    }

    for (const auto& out : sg.outputs) {
        StageSpec s;
        s.kind = StageKind::Output;
        s.name = "output" + std::to_string(out.port);
        s.slot = out.port;
        const int prod = node_stage.at(out.node);
        s.inputs = {prod};
        s.schema = out.schema;
        s.key_column = out.schema.first_span_column();
        const int si = add_stage(std::move(s));
        p.stages_[static_cast<std::size_t>(prod)].consumers.push_back(si);
    }
    p.compiled_ = std::move(compiled);
    return p;
}

Pipeline build_pipeline(const partition::Subgraph& subgraph, const partition::CapabilitySet& caps,
                        const PipelineOptions& options, const CostModel& cost) {
    return Pipeline::build(subgraph, caps, options, cost);
}

std::size_t Pipeline::node_stage_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(stages_.begin(), stages_.end(), [](const StageSpec& s) { return s.node >= 0; }));
}

std::size_t Pipeline::sorting_buffer_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(
        stages_.begin(), stages_.end(), [](const StageSpec& s) { return s.kind == StageKind::SortingBuffer; }));
}

// ---------------------------------------------------------------------------
// Per-document execution

namespace {

struct Item {
    Tuple tuple;
    bool eod = false;
};

struct Channel {
    std::deque<Item> q;
    std::size_t capacity = 1;
    int consumer = 0;
    int slot = 0;
    std::optional<std::size_t> key_column;
    int audit_stream = -1;

    bool has_space() const noexcept { return q.size() < capacity; }
};

struct RegexThread {
    std::uint32_t start;
    std::int32_t state;
    std::int64_t last_accept;
};

struct SpanLater {
    bool operator()(const Span& a, const Span& b) const noexcept { return b < a; }
};

struct StageState {
    std::deque<Item> outbox;
    std::vector<int> out_channels;
    std::vector<int> in_channels;  // per slot
    std::vector<bool> in_eod;
    bool finished_input = false;
    bool done = false;
    StageTrace trace;

    // taps
    std::size_t cursor = 0;
    std::vector<RegexThread> threads;
    int ac_state = 0;
    std::vector<std::uint32_t> pending_ends;
    std::deque<bool> alnum;
    std::size_t alnum_base = 0;
    std::priority_queue<Span, std::vector<Span>, SpanLater> reorder;

    // blocking relational stages
    std::vector<std::vector<Tuple>> held;
    std::size_t rr = 0;
    std::optional<SortingBuffer> sorter;
};

class Run {
public:
    Run(const Pipeline& p, const Pipeline::Compiled& c, const Document& doc,
        const std::vector<const ops::AnnotationSet*>& inputs, bool instrument)
        : p_(p), c_(c), doc_(doc), inputs_(inputs), text_(doc.text) {
        const auto& specs = p.stages();
        st_.resize(specs.size());
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            st_[i].in_channels.assign(s.inputs.size(), -1);
            st_[i].in_eod.assign(s.inputs.size(), false);
            st_[i].held.resize(s.inputs.size());
            if (s.kind == StageKind::SortingBuffer) {
                st_[i].sorter.emplace(p.options().sort_capacity, s.key_column, s.name);
            }
            if (is_tap(s.kind)) taps_.push_back(static_cast<int>(i));
        }
        for (std::size_t i = 0; i < specs.size(); ++i) {
            for (std::size_t slot = 0; slot < specs[i].inputs.size(); ++slot) {
                const int prod = specs[i].inputs[slot];
                Channel ch;
                ch.capacity = p.options().channel_capacity;
                ch.consumer = static_cast<int>(i);
                ch.slot = static_cast<int>(slot);
                ch.key_column = specs[static_cast<std::size_t>(prod)].key_column;
                const int ci = static_cast<int>(channels_.size());
                channels_.push_back(std::move(ch));
                st_[i].in_channels[slot] = ci;
                st_[static_cast<std::size_t>(prod)].out_channels.push_back(ci);
            }
        }
        if (instrument) {
            audit_.emplace();
            for (int t : taps_) {
                audit_->tap_stages.push_back(t);
                audit_->tap_reads.emplace_back(text_.size(), 0);
            }
            for (auto& ch : channels_) {
                const auto kind = specs[static_cast<std::size_t>(ch.consumer)].kind;
                if ((kind == StageKind::Join || kind == StageKind::Consolidate) && ch.key_column) {
                    ch.audit_stream = static_cast<int>(audit_->sorted_streams.size());
                    audit_->sorted_streams.emplace_back();
                    audit_->sorted_stream_names.push_back(specs[static_cast<std::size_t>(ch.consumer)].name + "[" +
                                                          std::to_string(ch.slot) + "]");
                }
            }
        }
    }

    DocumentRun run() {
        const auto& specs = p_.stages();
        for (;;) {
            bool progress = false;
            bool all_done = true;
            for (std::size_t i = 0; i < specs.size(); ++i) {
                if (st_[i].done) continue;
                progress = step(i) || progress;
                if (!st_[i].done) all_done = false;
            }
            if (all_done) break;
            if (!progress) throw InvariantViolation("pipeline deadlock: no stage can make progress");
        }
        DocumentRun out;
        out.outputs.resize(p_.output_count());
        std::uint64_t bottleneck = 0;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            bottleneck = std::max(bottleneck, st_[i].trace.cycles);
            out.trace.push_back(st_[i].trace);
            if (specs[i].kind == StageKind::Output) {
                ops::AnnotationSet set{specs[i].schema, std::move(st_[i].held[0])};
                set.canonicalize();
                out.outputs[static_cast<std::size_t>(specs[i].slot)] = std::move(set);
            }
        }
        out.cycles = p_.cost().setup_cycles + bottleneck;
        out.audit = std::move(audit_);
        return out;
    }

private:
    const StageSpec& spec(std::size_t i) const { return p_.stages()[i]; }

    // Moves outbox items into every consumer channel while all have room.
    bool flush(std::size_t i) {
        auto& s = st_[i];
        bool moved = false;
        while (!s.outbox.empty()) {
            for (int ch : s.out_channels) {
                if (!channels_[static_cast<std::size_t>(ch)].has_space()) return moved;
            }
            Item item = std::move(s.outbox.front());
            s.outbox.pop_front();
            if (!item.eod) ++s.trace.tuples_out;
            const bool eod = item.eod;
            for (std::size_t k = 0; k < s.out_channels.size(); ++k) {
                auto& q = channels_[static_cast<std::size_t>(s.out_channels[k])].q;
                if (k + 1 == s.out_channels.size()) {
                    q.push_back(std::move(item));
                } else {
                    q.push_back(item);
                }
            }
            moved = true;
            if (eod) s.done = true;
        }
        return moved;
    }

    void emit(std::size_t i, Tuple t) { st_[i].outbox.push_back({std::move(t), false}); }
    void emit_eod(std::size_t i) { st_[i].outbox.push_back({{}, true}); }

    // Pops one item from an input channel, with accounting.
    Item take(std::size_t i, std::size_t slot) {
        auto& ch = channels_[static_cast<std::size_t>(st_[i].in_channels[slot])];
        Item item = std::move(ch.q.front());
        ch.q.pop_front();
        if (!item.eod) {
            ++st_[i].trace.tuples_in;
            ++st_[i].trace.cycles;
            if (ch.audit_stream >= 0) {
                audit_->sorted_streams[static_cast<std::size_t>(ch.audit_stream)].push_back(
                    std::get<Span>(item.tuple[*ch.key_column]));
            }
        }
        return item;
    }
    bool available(std::size_t i, std::size_t slot) const {
        return !channels_[static_cast<std::size_t>(st_[i].in_channels[slot])].q.empty();
    }

    std::size_t tap_limit() const {
        std::size_t slowest = text_.size();
        for (int t : taps_) slowest = std::min(slowest, st_[static_cast<std::size_t>(t)].cursor);
        return std::min(text_.size(), slowest + p_.options().tap_window);
    }

    char32_t read(std::size_t i) {
        auto& s = st_[i];
        if (audit_) {
            const auto pos = std::find(taps_.begin(), taps_.end(), static_cast<int>(i)) - taps_.begin();
            ++audit_->tap_reads[static_cast<std::size_t>(pos)][s.cursor];
        }
        ++s.trace.cycles;
        return text_[s.cursor++];
    }

    bool step(std::size_t i) {
        bool progress = flush(i);
        if (st_[i].done || !st_[i].outbox.empty()) return progress;
        switch (spec(i).kind) {
            case StageKind::Regex: return step_regex(i) || progress;
            case StageKind::Dictionary: return step_dictionary(i) || progress;
            case StageKind::Select:
            case StageKind::Project: return step_map(i) || progress;
            case StageKind::Union: return step_union(i) || progress;
            case StageKind::Join:
            case StageKind::Consolidate: return step_blocking(i) || progress;
            case StageKind::SortingBuffer: return step_sort(i) || progress;
            case StageKind::HostInput: return step_host(i) || progress;
            case StageKind::Output: return step_output(i) || progress;
        }
        return progress;
    }

    // Leftmost-longest scan with one thread per candidate start.
    void regex_resolve(std::size_t i, bool final) {
        auto& s = st_[i];
        std::size_t head = 0;
        while (head < s.threads.size() && (final || s.threads[head].state == regex::Dfa::kDead)) {
            const RegexThread t = s.threads[head];
            if (t.last_accept > static_cast<std::int64_t>(t.start)) {
                emit(i, {Span{t.start, static_cast<std::uint32_t>(t.last_accept)}});
                while (head < s.threads.size() && s.threads[head].start < t.last_accept) ++head;
            } else {
                ++head;
            }
        }
        s.threads.erase(s.threads.begin(), s.threads.begin() + static_cast<std::ptrdiff_t>(head));
    }

    bool step_regex(std::size_t i) {
        auto& s = st_[i];
        const regex::Dfa& dfa = *c_.dfas[i];
        const std::size_t limit = tap_limit();
        bool progress = false;
        while (s.cursor < limit && s.outbox.empty()) {
            const auto pos = static_cast<std::uint32_t>(s.cursor);
            const char32_t c = read(i);
            s.threads.push_back({pos, dfa.start(), -1});
            std::size_t w = 0;
            for (std::size_t k = 0; k < s.threads.size(); ++k) {
                RegexThread t = s.threads[k];
                if (t.state != regex::Dfa::kDead) {
                    t.state = dfa.step(t.state, c);
                    if (t.state != regex::Dfa::kDead && dfa.accepting(t.state)) t.last_accept = pos + 1;
                }
                // A dead thread that never matched cannot contribute.
                if (t.state != regex::Dfa::kDead || t.last_accept >= 0) s.threads[w++] = t;
            }
            s.threads.resize(w);
            regex_resolve(i, false);
            progress = true;
            flush(i);
        }
        if (s.cursor == text_.size() && s.outbox.empty() && !s.finished_input) {
            regex_resolve(i, true);
            s.finished_input = true;
            emit_eod(i);
            flush(i);
            progress = true;
        }
        return progress;
    }

    bool alnum_at(const StageState& s, std::size_t k) const { return s.alnum[k - s.alnum_base]; }

    // Candidates ending at `end` whose end boundary is now known.
    void dict_confirm(std::size_t i, std::size_t end, bool end_boundary) {
        auto& s = st_[i];
        for (std::uint32_t len : s.pending_ends) {
            if (!end_boundary) break;
            const std::size_t b = end - len;
            const bool begin_boundary = b == 0 || alnum_at(s, b - 1) != alnum_at(s, b);
            if (begin_boundary) s.reorder.push(Span{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(end)});
        }
        s.pending_ends.clear();
    }

    bool step_dictionary(std::size_t i) {
        auto& s = st_[i];
        const AhoCorasick& ac = *c_.automata[i];
        const std::size_t max_len = ac.max_length();
        const std::size_t limit = tap_limit();
        bool progress = false;
        while (s.cursor < limit && s.outbox.empty()) {
            const std::size_t pos = s.cursor;
            const char32_t c = read(i);
            const bool a = unicode::is_alnum(c);
            dict_confirm(i, pos, pos == 0 || alnum_at(s, pos - 1) != a);
            s.alnum.push_back(a);
            while (s.alnum.size() > max_len + 2) {
                s.alnum.pop_front();
                ++s.alnum_base;
            }
            s.ac_state = ac.step(s.ac_state, unicode::fold_case(c));
            s.pending_ends = ac.ends(s.ac_state);
            // Future matches begin at or after cursor - max_len.
            while (!s.reorder.empty() && s.reorder.top().begin + max_len <= s.cursor) {
                emit(i, {s.reorder.top()});
                s.reorder.pop();
            }
            progress = true;
            flush(i);
        }
        if (s.cursor == text_.size() && s.outbox.empty() && !s.finished_input) {
            dict_confirm(i, s.cursor, true);
            while (!s.reorder.empty()) {
                emit(i, {s.reorder.top()});
                s.reorder.pop();
            }
            s.finished_input = true;
            emit_eod(i);
            flush(i);
            progress = true;
        }
        return progress;
    }

    bool step_map(std::size_t i) {
        auto& s = st_[i];
        bool progress = false;
        while (s.outbox.empty() && available(i, 0)) {
            Item item = take(i, 0);
            progress = true;
            if (item.eod) {
                emit_eod(i);
            } else if (spec(i).kind == StageKind::Select) {
                if ((*c_.predicates[i])(item.tuple)) emit(i, std::move(item.tuple));
            } else {
                Tuple t;
                for (std::size_t k : c_.projections[i]) t.push_back(item.tuple[k]);
                emit(i, std::move(t));
            }
            flush(i);
        }
        return progress;
    }

    bool step_union(std::size_t i) {
        auto& s = st_[i];
        const std::size_t n = s.in_channels.size();
        bool progress = false;
        bool moved = true;
        while (s.outbox.empty() && moved) {
            moved = false;
            for (std::size_t k = 0; k < n && s.outbox.empty(); ++k) {
                const std::size_t slot = (s.rr + k) % n;
                if (s.in_eod[slot] || !available(i, slot)) continue;
                Item item = take(i, slot);
                if (item.eod) {
                    s.in_eod[slot] = true;
                } else {
                    emit(i, std::move(item.tuple));
                }
                s.rr = slot + 1;
                moved = progress = true;
                flush(i);
            }
        }
        if (!s.finished_input && s.outbox.empty() &&
            std::all_of(s.in_eod.begin(), s.in_eod.end(), [](bool b) { return b; })) {
            s.finished_input = true;
            emit_eod(i);
            flush(i);
            progress = true;
        }
        return progress;
    }

    bool drain_inputs(std::size_t i) {
        auto& s = st_[i];
        bool progress = false;
        for (std::size_t slot = 0; slot < s.in_channels.size(); ++slot) {
            while (!s.in_eod[slot] && available(i, slot)) {
                Item item = take(i, slot);
                if (item.eod) {
                    s.in_eod[slot] = true;
                } else {
                    s.held[slot].push_back(std::move(item.tuple));
                }
                progress = true;
            }
        }
        return progress;
    }

    bool step_blocking(std::size_t i) {
        auto& s = st_[i];
        bool progress = drain_inputs(i);
        if (s.finished_input || !std::all_of(s.in_eod.begin(), s.in_eod.end(), [](bool b) { return b; })) {
            return progress;
        }
        s.finished_input = true;
        if (spec(i).kind == StageKind::Join) {
            const auto& pred = *c_.predicates[i];
            for (const auto& l : s.held[0]) {
                for (const auto& r : s.held[1]) {
                    if (!pred(l, &r)) continue;
                    Tuple t = l;
                    t.insert(t.end(), r.begin(), r.end());
                    emit(i, std::move(t));
                }
            }
        } else {
            ops::AnnotationSet in{p_.stages()[static_cast<std::size_t>(spec(i).inputs[0])].schema, std::move(s.held[0])};
            for (auto& t : ops::consolidate(in, c_.policies[i]).tuples) emit(i, std::move(t));
        }
        for (auto& h : s.held) h.clear();
        emit_eod(i);
        flush(i);
        return true;
    }

    bool step_sort(std::size_t i) {
        auto& s = st_[i];
        SortingBuffer& buf = *s.sorter;
        bool progress = false;
        while (!s.in_eod[0] && available(i, 0)) {
            auto& front = channels_[static_cast<std::size_t>(s.in_channels[0])].q.front();
            if (!front.eod && buf.full()) {
                if (!s.outbox.empty()) break;
                emit(i, buf.pop());
                flush(i);
            }
            Item item = take(i, 0);
            progress = true;
            if (item.eod) {
                s.in_eod[0] = true;
            } else {
                buf.push(std::move(item.tuple));
            }
        }
        if (s.in_eod[0] && !s.finished_input) {
            while (!buf.empty()) emit(i, buf.pop());
            s.finished_input = true;
            emit_eod(i);
            flush(i);
            progress = true;
        }
        return progress;
    }

    bool step_host(std::size_t i) {
        auto& s = st_[i];
        if (s.finished_input) return false;
        const auto slot = static_cast<std::size_t>(spec(i).slot);
        const ops::AnnotationSet* in = slot < inputs_.size() ? inputs_[slot] : nullptr;
        if (!in) throw InvariantViolation("subgraph input slot " + std::to_string(slot) + " not supplied");
        if (!(in->schema == spec(i).schema)) {
            throw InvariantViolation("subgraph input slot " + std::to_string(slot) + " has the wrong schema");
        }
        for (const auto& t : in->tuples) {
            emit(i, t);
            ++s.trace.cycles;
        }
        s.finished_input = true;
        emit_eod(i);
        flush(i);
        return true;
    }

    bool step_output(std::size_t i) {
        auto& s = st_[i];
        bool progress = false;
        while (available(i, 0)) {
            Item item = take(i, 0);
            progress = true;
            if (item.eod) {
                s.done = true;
                break;
            }
            s.held[0].push_back(std::move(item.tuple));
        }
        return progress;
    }

    const Pipeline& p_;
    const Pipeline::Compiled& c_;
    const Document& doc_;
    const std::vector<const ops::AnnotationSet*>& inputs_;
    const std::u32string& text_;
    std::vector<StageState> st_;
    std::vector<Channel> channels_;
    std::vector<int> taps_;
    std::optional<StreamAudit> audit_;
};

} // namespace

DocumentRun Pipeline::run_document(const Document& doc, const std::vector<const ops::AnnotationSet*>& inputs,
                                   bool instrument) const {
    Run run(*this, *compiled_, doc, inputs, instrument);
    return run.run();
}

// ---------------------------------------------------------------------------
// Packages

StreamResult execute_stream(const Pipeline& pipeline, const std::vector<StreamEntry>& entries,
                            const StreamOptions& options) {
    if (entries.empty()) throw Error("work package has no documents");
    const std::size_t lanes = pipeline.cost().lanes;
    StreamResult result;
    result.entries.resize(entries.size());
    result.lane_cycles.assign(lanes, 0);
    std::vector<std::vector<StageTrace>> lane_trace(lanes, std::vector<StageTrace>(pipeline.stages().size()));

    auto run_lane = [&](std::size_t lane) {
        for (std::size_t k = lane; k < entries.size(); k += lanes) {
            const StreamEntry& e = entries[k];
            EntryResult& r = result.entries[k];
            std::vector<const ops::AnnotationSet*> inputs;
            for (const auto& set : e.inputs) inputs.push_back(&set);
            try {
                DocumentRun run = pipeline.run_document(*e.doc, inputs, options.instrument);
                r.outputs = std::move(run.outputs);
                r.cycles = run.cycles;
                r.audit = std::move(run.audit);
                for (std::size_t s = 0; s < run.trace.size(); ++s) {
                    lane_trace[lane][s].cycles += run.trace[s].cycles;
                    lane_trace[lane][s].tuples_in += run.trace[s].tuples_in;
                    lane_trace[lane][s].tuples_out += run.trace[s].tuples_out;
                }
            } catch (const Error& err) {
                r.error = err.what();
                r.cycles = pipeline.cost().setup_cycles;
            }
            result.lane_cycles[lane] += r.cycles;
        }
    };

    if (options.mode == LaneMode::Threaded && lanes > 1) {
        std::vector<std::exception_ptr> failures(lanes);
        std::vector<std::thread> threads;
        for (std::size_t lane = 0; lane < lanes; ++lane) {
            threads.emplace_back([&, lane] {
                try {
                    run_lane(lane);
                } catch (...) {
                    failures[lane] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& f : failures) {
            if (f) std::rethrow_exception(f);
        }
    } else {
        for (std::size_t lane = 0; lane < lanes; ++lane) run_lane(lane);
    }

    result.trace.assign(pipeline.stages().size(), {});
    for (const auto& lt : lane_trace) {
        for (std::size_t s = 0; s < lt.size(); ++s) {
            result.trace[s].cycles += lt[s].cycles;
            result.trace[s].tuples_in += lt[s].tuples_in;
            result.trace[s].tuples_out += lt[s].tuples_out;
        }
    }
    for (auto c : result.lane_cycles) result.cycles += c;
    return result;
}

std::string trace_csv(const Pipeline& pipeline, const std::vector<StageTrace>& trace) {
    std::ostringstream out;
    out << "stage,cycles,tuples_in,tuples_out\n";
    for (std::size_t s = 0; s < pipeline.stages().size() && s < trace.size(); ++s) {
        out << pipeline.stages()[s].name << ',' << trace[s].cycles << ',' << trace[s].tuples_in << ','
            << trace[s].tuples_out << '\n';
    }
    return out.str();
}

} // namespace spanforge::accel
