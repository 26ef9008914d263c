#pragma once
// Discrete-event simulation of k-bin batching: Poisson arrivals, (possibly
// mispredicted) bin assignment, per-bin batch formation, a central
// first-formed-first-served queue, and S identical servers. A batch
// occupies a server for the maximum of its members' service times.
//
// A run is a pure function of its config. Ties in event time resolve
// batch-completion < arrival < batch-formation, then by scheduling sequence,
// so identical configs produce bit-identical results.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "binbatch/binning.hpp"
#include "binbatch/rng.hpp"
#include "binbatch/service_dist.hpp"

namespace binbatch {

// Arrival-rate value meaning "all requests arrive at time zero".
constexpr double kOverload = std::numeric_limits<double>::infinity();

constexpr std::size_t kNoBatch = std::numeric_limits<std::size_t>::max();

struct Request {
    std::size_t id = 0;
    double arrival_time = 0;
    double service_time = 0;          // true service time; always used to serve
    std::size_t true_bin = 0;
    std::size_t predicted_bin = 0;    // the bin the request queues in
    std::size_t batch = kNoBatch;
    double completion_time = std::numeric_limits<double>::quiet_NaN();
};

struct BatchRecord {
    std::size_t bin = 0;
    std::vector<std::size_t> members;  // exactly B ids, fewer only for a flush batch
    double formed_time = 0;
    double start_time = std::numeric_limits<double>::quiet_NaN();
    double finish_time = std::numeric_limits<double>::quiet_NaN();
    double service_time = 0;           // max member service time
};

// How trace replays map trace entries to requests.
enum class TraceMode {
    cyclic,    // request i gets lengths[i mod n]
    resample,  // sampled with replacement from the trace
};

struct SimConfig {
    double arrival_rate = kOverload;  // requests per unit time; kOverload = all at t=0
    std::size_t n_requests = 0;
    std::size_t batch_size = 1;
    BinConfig bins;
    ErrorModel error_model = Perfect{};
    std::size_t n_servers = 1;
    ServiceDist service = Uniform{1.0, 2.0};
    std::uint64_t seed = 0;
    bool flush_partial = true;        // emit undersized batches after the last arrival
    std::optional<double> max_batch_wait;
    TraceMode trace_mode = TraceMode::cyclic;  // used by replay_trace only
};

struct SimMetrics {
    double throughput = 0;     // completed requests / makespan
    double makespan = 0;       // first arrival to last completion
    double latency_mean = 0;
    double latency_p50 = 0;
    double latency_p99 = 0;
    std::vector<std::size_t> per_bin_batch_counts;
    double server_busy_fraction = 0;
    std::size_t n_completed = 0;

    bool operator==(const SimMetrics&) const = default;
};

struct SimResult {
    SimMetrics metrics;
    std::vector<Request> requests;
    std::vector<BatchRecord> batches;
};

namespace detail {

enum class EventKind : std::uint8_t { batch_done, arrival, formation, flush_timer, drain_bin };

struct Event {
    double time = 0;
    int rank = 0;  // completion 0 < arrival 1 < formation-class 2
    std::uint64_t seq = 0;
    EventKind kind = EventKind::arrival;
    std::size_t a = 0;  // request index / bin / batch index
    std::size_t b = 0;  // flush_timer: the request id the timer was armed for
};

struct EventAfter {
    bool operator()(const Event& x, const Event& y) const {
        if (x.time != y.time) return x.time > y.time;
        if (x.rank != y.rank) return x.rank > y.rank;
        return x.seq > y.seq;
    }
};

// One simulation run. Service times come from a sampler indexed by request
// id so the same engine serves both generative and trace-driven runs.
class Engine {
public:
    using ServiceSampler = std::function<double(std::size_t, RandomStream&)>;

    Engine(const SimConfig& cfg, ServiceSampler sampler)
        : cfg_(cfg),
          sampler_(std::move(sampler)),
          service_rng_(RandomStream::derive(cfg.seed, 1)),
          error_rng_(RandomStream::derive(cfg.seed, 2)) {}

    SimResult run() {
        validate();
        const std::size_t k = cfg_.bins.bin_count();
        bin_queues_.assign(k + 1, {});
        batch_counts_.assign(k, 0);
        requests_.reserve(cfg_.n_requests);
        idle_servers_ = cfg_.n_servers;

        schedule_arrivals();
        while (!events_.empty()) {
            const Event ev = events_.top();
            events_.pop();
            now_ = ev.time;
            switch (ev.kind) {
                case EventKind::batch_done: on_batch_done(ev.a); break;
                case EventKind::arrival: on_arrival(ev.a); break;
                case EventKind::formation: on_formation(ev.a); break;
                case EventKind::flush_timer: on_flush_timer(ev.a, ev.b); break;
                case EventKind::drain_bin: on_drain(ev.a); break;
            }
        }
        return finish();
    }

private:
    void validate() const {
        if (cfg_.bins.edges.size() < 2)
            throw std::invalid_argument("sim config: bins not configured");
        if (cfg_.n_requests < cfg_.batch_size)
            throw std::invalid_argument("sim config: n_requests must be >= batch_size");
        if (cfg_.batch_size == 0) throw std::invalid_argument("sim config: batch size must be >= 1");
        if (cfg_.n_servers == 0) throw std::invalid_argument("sim config: need at least one server");
        if (!(cfg_.arrival_rate > 0))
            throw std::invalid_argument("sim config: arrival rate must be positive (or overload)");
        if (cfg_.max_batch_wait && !(*cfg_.max_batch_wait > 0))
            throw std::invalid_argument("sim config: max_batch_wait must be positive");
        if (const auto* c = std::get_if<Confusion>(&cfg_.error_model))
            if (c->rows.size() != cfg_.bins.bin_count())
                throw std::invalid_argument("sim config: confusion matrix size does not match bin count");
    }

    void schedule(double time, EventKind kind, std::size_t a, std::size_t b = 0) {
        const int rank = kind == EventKind::batch_done ? 0 : kind == EventKind::arrival ? 1 : 2;
        events_.push(Event{time, rank, next_seq_++, kind, a, b});
    }

    void schedule_arrivals() {
        RandomStream arrival_rng = RandomStream::derive(cfg_.seed, 0);
        double t = 0.0;
        for (std::size_t i = 0; i < cfg_.n_requests; ++i) {
            if (std::isinf(cfg_.arrival_rate)) {
                t = 0.0;
            } else {
                t += arrival_rng.exponential(cfg_.arrival_rate);
            }
            schedule(t, EventKind::arrival, i);
        }
    }

    void on_arrival(std::size_t id) {
        const double svc = sampler_(id, service_rng_);
        if (!(svc > 0) || !std::isfinite(svc))
            throw std::domain_error("simulation: drew a non-positive service time");
        const std::size_t k = cfg_.bins.bin_count();
        const std::size_t true_bin = assign_bin(cfg_.bins, svc);
        const std::size_t predicted = predict_bin(cfg_.error_model, true_bin, k, error_rng_);
        requests_.push_back(Request{id, now_, svc, true_bin, predicted, kNoBatch,
                                    std::numeric_limits<double>::quiet_NaN()});
        auto& queue = bin_queues_[predicted];
        queue.push_back(id);
        if (queue.size() == cfg_.batch_size) {
            schedule(now_, EventKind::formation, predicted);
        } else if (queue.size() == 1 && cfg_.max_batch_wait) {
            schedule(now_ + *cfg_.max_batch_wait, EventKind::flush_timer, predicted, id);
        }
        if (++arrived_ == cfg_.n_requests && cfg_.flush_partial) {
            for (std::size_t bin = 1; bin <= k; ++bin) schedule(now_, EventKind::drain_bin, bin);
        }
    }

    void on_formation(std::size_t bin) {
        if (bin_queues_[bin].size() < cfg_.batch_size) return;  // already drained
        form_batch(bin, cfg_.batch_size);
        if (bin_queues_[bin].size() >= cfg_.batch_size) {
            schedule(now_, EventKind::formation, bin);
        } else {
            rearm_timer(bin);
        }
    }

    void on_drain(std::size_t bin) {
        while (bin_queues_[bin].size() >= cfg_.batch_size) form_batch(bin, cfg_.batch_size);
        if (!bin_queues_[bin].empty()) form_batch(bin, bin_queues_[bin].size());
    }

    void on_flush_timer(std::size_t bin, std::size_t armed_for) {
        const auto& queue = bin_queues_[bin];
        if (queue.empty() || queue.front() != armed_for) return;  // stale timer
        form_batch(bin, std::min(queue.size(), cfg_.batch_size));
        rearm_timer(bin);
    }

    void rearm_timer(std::size_t bin) {
        if (!cfg_.max_batch_wait || bin_queues_[bin].empty()) return;
        const std::size_t oldest = bin_queues_[bin].front();
        const double due = requests_[oldest].arrival_time + *cfg_.max_batch_wait;
        schedule(std::max(now_, due), EventKind::flush_timer, bin, oldest);
    }

    void form_batch(std::size_t bin, std::size_t size) {
        auto& queue = bin_queues_[bin];
        BatchRecord batch;
        batch.bin = bin;
        batch.formed_time = now_;
        batch.members.reserve(size);
        for (std::size_t i = 0; i < size; ++i) {
            const std::size_t id = queue.front();
            queue.pop_front();
            batch.members.push_back(id);
            requests_[id].batch = batches_.size();
            batch.service_time = std::max(batch.service_time, requests_[id].service_time);
        }
        ++batch_counts_[bin - 1];
        batches_.push_back(std::move(batch));
        central_queue_.push_back(batches_.size() - 1);
        dispatch();
    }

    void dispatch() {
        while (idle_servers_ > 0 && !central_queue_.empty()) {
            const std::size_t idx = central_queue_.front();
            central_queue_.pop_front();
            BatchRecord& batch = batches_[idx];
            batch.start_time = now_;
            batch.finish_time = now_ + batch.service_time;
            busy_time_ += batch.service_time;
            --idle_servers_;
            schedule(batch.finish_time, EventKind::batch_done, idx);
        }
    }

    void on_batch_done(std::size_t idx) {
        ++idle_servers_;
        for (const std::size_t id : batches_[idx].members) {
            requests_[id].completion_time = batches_[idx].finish_time;
        }
        completed_ += batches_[idx].members.size();
        last_completion_ = std::max(last_completion_, now_);
        dispatch();
    }

    SimResult finish() {
        SimMetrics m;
        m.per_bin_batch_counts = batch_counts_;
        m.n_completed = completed_;
        if (completed_ > 0) {
            const double first_arrival = requests_.front().arrival_time;
            m.makespan = last_completion_ - first_arrival;
            m.throughput = static_cast<double>(completed_) / m.makespan;
            m.server_busy_fraction =
                busy_time_ / (static_cast<double>(cfg_.n_servers) * m.makespan);
            std::vector<double> latencies;
            latencies.reserve(completed_);
            double sum = 0.0;
            for (const Request& r : requests_) {
                if (std::isnan(r.completion_time)) continue;
                const double latency = r.completion_time - r.arrival_time;
                latencies.push_back(latency);
                sum += latency;
            }
            std::sort(latencies.begin(), latencies.end());
            m.latency_mean = sum / static_cast<double>(latencies.size());
            m.latency_p50 = interpolated_quantile(latencies, 0.50);
            m.latency_p99 = interpolated_quantile(latencies, 0.99);
        }
        return SimResult{std::move(m), std::move(requests_), std::move(batches_)};
    }

    SimConfig cfg_;
    ServiceSampler sampler_;
    RandomStream service_rng_;
    RandomStream error_rng_;

    std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
    std::uint64_t next_seq_ = 0;
    double now_ = 0;

    std::vector<std::deque<std::size_t>> bin_queues_;  // 1-based by bin
    std::deque<std::size_t> central_queue_;            // batch indices, formation order
    std::vector<Request> requests_;
    std::vector<BatchRecord> batches_;
    std::vector<std::size_t> batch_counts_;

    std::size_t idle_servers_ = 0;
    std::size_t arrived_ = 0;
    std::size_t completed_ = 0;
    double busy_time_ = 0;
    double last_completion_ = 0;
};

}  // namespace detail

// Generative run: service times drawn i.i.d. from config.service.
inline SimResult run_simulation_detailed(const SimConfig& config) {
    detail::Engine engine(config, [&config](std::size_t, RandomStream& rng) {
        return sample(config.service, rng);
    });
    return engine.run();
}

inline SimMetrics run_simulation(const SimConfig& config) {
    return run_simulation_detailed(config).metrics;
}

// Trace-driven run: identical engine, service times taken from `lengths`
// per config.trace_mode instead of a parametric distribution.
inline SimResult replay_trace_detailed(const SimConfig& config, const std::vector<double>& lengths) {
    if (lengths.empty()) throw std::invalid_argument("replay_trace: empty trace");
    for (double v : lengths)
        if (!(v > 0) || !std::isfinite(v))
            throw std::invalid_argument("replay_trace: trace lengths must be positive");
    detail::Engine engine(config, [&](std::size_t id, RandomStream& rng) {
        if (config.trace_mode == TraceMode::cyclic) return lengths[id % lengths.size()];
        return lengths[rng.index(lengths.size())];
    });
    return engine.run();
}

inline SimMetrics replay_trace(const SimConfig& config, const std::vector<double>& lengths) {
    return replay_trace_detailed(config, lengths).metrics;
}

// Per-request record stream as JSON lines, one object per request.
// Requests left unserved (flush_partial = false) carry null batch fields.
inline void write_request_log(const SimResult& result, std::ostream& out) {
    out.precision(17);
    for (const Request& r : result.requests) {
        out << "{\"id\":" << r.id << ",\"arrival\":" << r.arrival_time
            << ",\"service\":" << r.service_time << ",\"true_bin\":" << r.true_bin
            << ",\"predicted_bin\":" << r.predicted_bin;
        if (r.batch == kNoBatch) {
            out << ",\"batch\":null,\"start\":null,\"finish\":null}\n";
        } else {
            const BatchRecord& b = result.batches[r.batch];
            out << ",\"batch\":" << r.batch << ",\"start\":" << b.start_time
                << ",\"finish\":" << b.finish_time << "}\n";
        }
    }
}

inline void write_request_log(const SimResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open request log for writing: " + path);
    write_request_log(result, out);
}

}  // namespace binbatch
