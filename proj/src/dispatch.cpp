#include "spanforge/dispatch.hpp"

#include "spanforge/error.hpp"

#include <algorithm>
#include <atomic>

namespace spanforge::dispatch {

std::size_t DispatchConfig::default_worker_threads() noexcept {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

void DispatchConfig::validate() const {
    if (byte_threshold == 0) throw Error("byte threshold must be positive");
    if (max_docs_per_package == 0) throw Error("max docs per package must be positive");
    if (flush_timeout.count() <= 0) throw Error("flush timeout must be positive");
    if (worker_threads == 0) throw Error("worker thread count must be positive");
}

std::string_view to_string(PackReason reason) noexcept {
    switch (reason) {
        case PackReason::Threshold: return "threshold";
        case PackReason::MaxDocs: return "max_docs";
        case PackReason::Timeout: return "timeout";
        case PackReason::Drain: return "drain";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Packer

Packer::Packer(DispatchConfig config) : config_(config) {}

void Packer::submit(Submission s) {
    queues_[s.subgraph].push_back(std::move(s));
}

std::size_t Packer::pending() const noexcept {
    std::size_t n = 0;
    for (const auto& [id, q] : queues_) n += q.size();
    return n;
}

std::optional<Clock::time_point> Packer::next_deadline() const {
    std::optional<Clock::time_point> out;
    for (const auto& [id, q] : queues_) {
        if (q.empty()) continue;
        const auto d = q.front().submitted + config_.flush_timeout;
        if (!out || d < *out) out = d;
    }
    return out;
}

std::optional<WorkPackage> Packer::pack(Clock::time_point now, bool drain) {
    // Oldest head first; ties by subgraph id.
    std::vector<std::pair<Clock::time_point, int>> order;
    for (const auto& [id, q] : queues_) {
        if (!q.empty()) order.emplace_back(q.front().submitted, id);
    }
    std::sort(order.begin(), order.end());
    for (const auto& [head_time, id] : order) {
        auto& q = queues_[id];
        std::size_t bytes = 0;
        std::size_t n = 0;
        std::optional<PackReason> reason;
        for (const auto& s : q) {
            bytes += s.bytes;
            ++n;
            if (bytes > config_.byte_threshold) {
                reason = PackReason::Threshold;
                break;
            }
            if (n == config_.max_docs_per_package) {
                reason = PackReason::MaxDocs;
                break;
            }
        }
        if (!reason) {
            if (now - head_time >= config_.flush_timeout) {
                reason = PackReason::Timeout;
            } else if (drain) {
                reason = PackReason::Drain;
            } else {
                continue;
            }
        }
        WorkPackage pkg;
        pkg.id = next_id_++;
        pkg.subgraph = id;
        pkg.reason = *reason;
        for (std::size_t k = 0; k < n; ++k) {
            pkg.payload_bytes += q.front().bytes;
            pkg.entries.push_back(std::move(q.front()));
            q.pop_front();
        }
        return pkg;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Dispatcher

Dispatcher::Dispatcher(DispatchConfig config, std::map<int, const accel::Pipeline*> pipelines,
                       accel::StreamOptions stream, std::size_t workers)
    : config_(config), pipelines_(std::move(pipelines)), stream_(stream), packer_(config), live_workers_(workers) {
    config_.validate();
    comm_ = std::thread([this] { communication_loop(); });
    accel_ = std::thread([this] { accelerator_loop(); });
}

Dispatcher::~Dispatcher() {
    try {
        shutdown();
    } catch (...) {
    }
}

accel::EntryResult Dispatcher::call(int subgraph, accel::StreamEntry entry) {
    auto slot = std::make_shared<Slot>();
    {
        std::lock_guard lk(m_);
        if (fatal_) {
            accel::EntryResult r;
            r.error = "accelerator stopped after a fatal error";
            return r;
        }
        if (!pipelines_.count(subgraph)) throw InvariantViolation("no pipeline for subgraph " + std::to_string(subgraph));
        Submission s;
        s.ticket = next_ticket_++;
        s.subgraph = subgraph;
        s.bytes = entry.doc ? entry.doc->bytes() : 0;
        s.entry = std::move(entry);
        s.submitted = Clock::now();
        slots_[s.ticket] = slot;
        submit_queue_.push_back(std::move(s));
        ++blocked_;
        ++stats_.submissions;
    }
    cv_.notify_one();
    std::unique_lock sl(slot->m);
    slot->cv.wait(sl, [&] { return slot->ready; });
    return std::move(slot->result);
}

void Dispatcher::worker_exited() {
    {
        std::lock_guard lk(m_);
        if (live_workers_ > 0) --live_workers_;
    }
    cv_.notify_one();
}

void Dispatcher::complete(CompletionSignal signal) {
    std::vector<std::pair<std::shared_ptr<Slot>, accel::EntryResult>> deliveries;
    {
        std::lock_guard lk(m_);
        auto it = in_flight_.find(signal.package);
        if (it == in_flight_.end()) {
            throw InvariantViolation("completion signal for unknown package " + std::to_string(signal.package));
        }
        std::vector<std::uint64_t> tickets = std::move(it->second);
        in_flight_.erase(it);
        if (tickets.size() != signal.results.size()) {
            throw InvariantViolation("completion signal for package " + std::to_string(signal.package) +
                                     " has the wrong number of results");
        }
        for (std::size_t i = 0; i < tickets.size(); ++i) {
            auto s = slots_.find(tickets[i]);
            if (s == slots_.end()) throw InvariantViolation("ticket " + std::to_string(tickets[i]) + " released twice");
            deliveries.emplace_back(std::move(s->second), std::move(signal.results[i]));
            slots_.erase(s);
            --blocked_;
            ++stats_.releases;
        }
    }
    for (auto& [slot, result] : deliveries) {
        {
            std::lock_guard sl(slot->m);
            slot->result = std::move(result);
            slot->ready = true;
        }
        slot->cv.notify_one();
    }
}

void Dispatcher::fail(std::exception_ptr e) {
    std::vector<std::shared_ptr<Slot>> waiting;
    {
        std::lock_guard lk(m_);
        if (!fatal_) fatal_ = e;
        for (auto& [ticket, slot] : slots_) waiting.push_back(slot);
        slots_.clear();
        in_flight_.clear();
        submit_queue_.clear();
        while (packer_.pending() > 0) (void)packer_.pack(Clock::now(), true);
        blocked_ = 0;
    }
    for (auto& slot : waiting) {
        {
            std::lock_guard sl(slot->m);
            slot->result = {};
            slot->result.error = "accelerator stopped after a fatal error";
            slot->ready = true;
        }
        slot->cv.notify_one();
    }
    cv_.notify_one();
}

void Dispatcher::communication_loop() {
    std::unique_lock lk(m_);
    for (;;) {
        while (!completions_.empty()) {
            CompletionSignal sig = std::move(completions_.front());
            completions_.pop_front();
            lk.unlock();
            try {
                complete(std::move(sig));
            } catch (...) {
                fail(std::current_exception());
            }
            lk.lock();
        }
        while (!submit_queue_.empty()) {
            packer_.submit(std::move(submit_queue_.front()));
            submit_queue_.pop_front();
        }
        // Every live worker waiting means nothing more can arrive.
        const bool drain = stopping_ || (blocked_ > 0 && blocked_ >= live_workers_);
        if (auto pkg = packer_.pack(Clock::now(), drain)) {
            stats_.packages.push_back({pkg->id, pkg->subgraph, pkg->entries.size(), pkg->payload_bytes, pkg->reason});
            auto& tickets = in_flight_[pkg->id];
            for (const auto& s : pkg->entries) tickets.push_back(s.ticket);
            accel_queue_.push_back(std::move(*pkg));
            accel_cv_.notify_one();
            continue;
        }
        if (stopping_ && packer_.pending() == 0 && in_flight_.empty() && completions_.empty() &&
            submit_queue_.empty()) {
            break;
        }
        if (auto deadline = packer_.next_deadline()) {
            cv_.wait_until(lk, *deadline);
        } else {
            cv_.wait(lk);
        }
    }
}

void Dispatcher::accelerator_loop() {
    std::unique_lock lk(m_);
    for (;;) {
        accel_cv_.wait(lk, [&] { return !accel_queue_.empty() || accel_stop_; });
        if (accel_queue_.empty()) break;
        WorkPackage pkg = std::move(accel_queue_.front());
        accel_queue_.pop_front();
        lk.unlock();

        const accel::Pipeline& pipeline = *pipelines_.at(pkg.subgraph);
        std::vector<accel::StreamEntry> entries;
        entries.reserve(pkg.entries.size());
        for (auto& s : pkg.entries) entries.push_back(std::move(s.entry));
        std::optional<accel::StreamResult> result;
        try {
            result = accel::execute_stream(pipeline, entries, stream_);
        } catch (...) {
            fail(std::current_exception());
        }

        lk.lock();
        if (!result) continue;
        stats_.accel_cycles += result->cycles;
        auto& trace = stats_.trace[pkg.subgraph];
        trace.resize(result->trace.size());
        for (std::size_t s = 0; s < trace.size(); ++s) {
            trace[s].cycles += result->trace[s].cycles;
            trace[s].tuples_in += result->trace[s].tuples_in;
            trace[s].tuples_out += result->trace[s].tuples_out;
        }
        completions_.push_back({pkg.id, std::move(result->entries)});
        cv_.notify_one();
    }
}

void Dispatcher::shutdown() {
    {
        std::lock_guard lk(m_);
        stopping_ = true;
    }
    cv_.notify_one();
    if (comm_.joinable()) comm_.join();
    {
        std::lock_guard lk(m_);
        accel_stop_ = true;
    }
    accel_cv_.notify_one();
    if (accel_.joinable()) accel_.join();
    std::lock_guard lk(m_);
    if (fatal_) {
        auto e = fatal_;
        fatal_ = nullptr;
        std::rethrow_exception(e);
    }
}

DispatchStats Dispatcher::stats() const {
    std::lock_guard lk(m_);
    return stats_;
}

// ---------------------------------------------------------------------------
// Corpus runs

std::map<int, accel::Pipeline> build_pipelines(const partition::PartitionPlan& plan, const RunOptions& options) {
    std::map<int, accel::Pipeline> out;
    for (const auto& sg : plan.subgraphs) {
        out.emplace(sg.id, accel::build_pipeline(sg, options.caps, options.pipeline, options.cost));
    }
    return out;
}

RunResult run_corpus(const partition::PartitionPlan& plan, const corpus::Corpus& corpus, const DispatchConfig& config,
                     const RunOptions& options) {
    config.validate();
    partition::validate_plan(plan);
    const CompiledGraph graph(plan.supergraph);
    const auto pipelines = build_pipelines(plan, options);

    const std::size_t workers = config.worker_threads;
    std::unique_ptr<Dispatcher> dispatcher;
    if (!pipelines.empty()) {
        std::map<int, const accel::Pipeline*> ptrs;
        for (const auto& [id, p] : pipelines) ptrs[id] = &p;
        dispatcher = std::make_unique<Dispatcher>(config, std::move(ptrs),
                                                  accel::StreamOptions{options.lane_mode, false}, workers);
    }

    ExecutionHooks base;
    base.invoke_subgraph = [&](const OperatorNode& call, const DocumentPtr& doc,
                               const std::vector<const ops::AnnotationSet*>& inputs) {
        const int id = call.as<CallParams>().subgraph;
        const partition::Subgraph& sg = plan.subgraph(id);
        accel::StreamEntry entry;
        entry.doc = doc;
        entry.inputs.resize(inputs.size());
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (!sg.inputs[k].document) entry.inputs[k] = *inputs[k];
        }
        accel::EntryResult r = dispatcher->call(id, std::move(entry));
        if (r.error) throw Error("accelerator " + *r.error);
        return std::move(r.outputs);
    };

    RunResult result;
    result.documents.resize(corpus.size());
    std::vector<NodeClock> clocks(workers);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex fatal_m;
    std::exception_ptr fatal;

    auto worker = [&](std::size_t w) {
        ExecutionHooks hooks = base;
        if (options.profile) {
            clocks[w].resize(graph.node_count());
            hooks.clock = &clocks[w];
        }
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= corpus.size() || abort.load()) break;
            const corpus::CorpusEntry& e = corpus[i];
            DocumentAnnotations& out = result.documents[i];
            out.doc = e.id;
            if (e.error) {
                out.error = *e.error;
                continue;
            }
            try {
                out = label_sinks(plan.supergraph, e.id, execute_sinks(graph, e.doc, hooks));
            } catch (const Error& err) {
                out.views.clear();
                out.error = err.what();
            } catch (...) {
                std::lock_guard lk(fatal_m);
                if (!fatal) fatal = std::current_exception();
                abort = true;
            }
        }
        if (dispatcher) dispatcher->worker_exited();
    };

    const auto t0 = Clock::now();
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker, w);
    for (auto& t : threads) t.join();
    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();

    if (dispatcher) {
        dispatcher->shutdown();
        result.stats = dispatcher->stats();
    }
    if (fatal) std::rethrow_exception(fatal);

    NodeClock merged;
    merged.resize(graph.node_count());
    for (const auto& c : clocks) merged.merge(c);
    result.profile = profile::ProfileReport::from_clock(graph, merged);
    result.profile.total_s = wall;
    result.profile.threads = workers;
    result.profile.bytes = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (!result.documents[i].error) result.profile.bytes += corpus[i].bytes();
    }
    return result;
}

} // namespace spanforge::dispatch
