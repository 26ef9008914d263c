#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "binbatch/analytics.hpp"
#include "binbatch/simulator.hpp"

using namespace binbatch;
using Catch::Approx;

namespace {

SimConfig overload_uniform(std::size_t n, std::size_t batch, std::size_t k, std::uint64_t seed) {
    SimConfig cfg;
    cfg.arrival_rate = kOverload;
    cfg.n_requests = n;
    cfg.batch_size = batch;
    cfg.bins = uniform_boundaries(k, 1.0, 20.0);
    cfg.service = make_uniform(1.0, 20.0);
    cfg.n_servers = 1;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("config validation rejects degenerate setups") {
    REQUIRE_THROWS_AS(run_simulation(SimConfig{}), std::invalid_argument);  // no bins
    SimConfig cfg = overload_uniform(100, 8, 2, 1);
    cfg.n_requests = 4;
    REQUIRE_THROWS_AS(run_simulation(cfg), std::invalid_argument);
    cfg = overload_uniform(100, 8, 2, 1);
    cfg.n_servers = 0;
    REQUIRE_THROWS_AS(run_simulation(cfg), std::invalid_argument);
    cfg = overload_uniform(100, 8, 2, 1);
    cfg.arrival_rate = 0.0;
    REQUIRE_THROWS_AS(run_simulation(cfg), std::invalid_argument);
    cfg = overload_uniform(100, 8, 2, 1);
    cfg.max_batch_wait = 0.0;
    REQUIRE_THROWS_AS(run_simulation(cfg), std::invalid_argument);
    cfg = overload_uniform(100, 8, 2, 1);
    cfg.error_model = make_confusion({{0.9, 0.1}, {0.1, 0.9}});
    REQUIRE_NOTHROW(run_simulation(cfg));
    cfg.bins = uniform_boundaries(3, 1.0, 20.0);
    REQUIRE_THROWS_AS(run_simulation(cfg), std::invalid_argument);
}

TEST_CASE("serial single-request batches serve at the mean") {
    SimConfig cfg = overload_uniform(10000, 1, 1, 99);
    const SimMetrics m = run_simulation(cfg);
    REQUIRE(m.n_completed == 10000);
    CHECK(m.throughput == Approx(1.0 / 10.5).epsilon(0.02));
    CHECK(m.server_busy_fraction == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("all requests complete and appear in exactly one batch") {
    SimConfig cfg = overload_uniform(1003, 16, 3, 7);
    cfg.arrival_rate = 5.0;
    cfg.n_servers = 2;
    cfg.flush_partial = true;
    const SimResult result = run_simulation_detailed(cfg);
    REQUIRE(result.metrics.n_completed == 1003);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const BatchRecord& b : result.batches) {
        total += b.members.size();
        for (const std::size_t id : b.members) seen.insert(id);
        CHECK(b.members.size() <= 16);
    }
    CHECK(total == 1003);
    CHECK(seen.size() == 1003);
    for (const Request& r : result.requests) {
        REQUIRE(r.batch != kNoBatch);
        CHECK(r.completion_time >= r.arrival_time);
    }
    std::size_t batch_sum = 0;
    for (const std::size_t c : result.metrics.per_bin_batch_counts) batch_sum += c;
    CHECK(batch_sum == result.batches.size());
}

TEST_CASE("changing the error model never perturbs arrivals or services") {
    SimConfig cfg = overload_uniform(800, 16, 4, 2024);
    cfg.arrival_rate = 6.0;
    const SimResult clean = run_simulation_detailed(cfg);
    cfg.error_model = make_symmetric(0.3);
    const SimResult noisy = run_simulation_detailed(cfg);
    REQUIRE(clean.requests.size() == noisy.requests.size());
    std::size_t moved = 0;
    for (std::size_t i = 0; i < clean.requests.size(); ++i) {
        CHECK(clean.requests[i].arrival_time == noisy.requests[i].arrival_time);
        CHECK(clean.requests[i].service_time == noisy.requests[i].service_time);
        CHECK(clean.requests[i].true_bin == noisy.requests[i].true_bin);
        if (clean.requests[i].predicted_bin != noisy.requests[i].predicted_bin) ++moved;
    }
    CHECK(moved > 0);
}

TEST_CASE("identical configs produce bit-identical results") {
    SimConfig cfg = overload_uniform(2000, 32, 4, 12345);
    cfg.arrival_rate = 8.0;
    cfg.error_model = make_symmetric(0.1);
    const SimMetrics a = run_simulation(cfg);
    const SimMetrics b = run_simulation(cfg);
    CHECK(a == b);
    cfg.seed = 54321;
    const SimMetrics c = run_simulation(cfg);
    CHECK(a != c);
}

TEST_CASE("batch service time is the member maximum") {
    SimConfig cfg = overload_uniform(500, 8, 2, 3);
    cfg.arrival_rate = 3.0;
    const SimResult result = run_simulation_detailed(cfg);
    for (const BatchRecord& b : result.batches) {
        double expected = 0;
        for (const std::size_t id : b.members)
            expected = std::max(expected, result.requests[id].service_time);
        CHECK(b.finish_time - b.start_time == Approx(expected).margin(1e-9));
        CHECK(b.formed_time <= b.start_time);
        CHECK(b.start_time <= b.finish_time);
    }
}

TEST_CASE("batches start in formation order on a single server") {
    SimConfig cfg = overload_uniform(1200, 16, 3, 8);
    cfg.arrival_rate = 20.0;
    const SimResult result = run_simulation_detailed(cfg);
    std::vector<BatchRecord> batches = result.batches;
    std::sort(batches.begin(), batches.end(),
              [](const BatchRecord& a, const BatchRecord& b) { return a.formed_time < b.formed_time; });
    double prev_start = -1.0;
    for (const BatchRecord& b : batches) {
        CHECK(b.start_time >= prev_start);
        prev_start = b.start_time;
    }
}

TEST_CASE("perfect predictions keep batch members inside their bin") {
    SimConfig cfg = overload_uniform(2000, 16, 5, 21);
    const SimResult result = run_simulation_detailed(cfg);
    for (const BatchRecord& b : result.batches) {
        const double lo = cfg.bins.edges[b.bin - 1];
        const double hi = cfg.bins.edges[b.bin];
        for (const std::size_t id : b.members) {
            CHECK(result.requests[id].service_time >= lo);
            CHECK(result.requests[id].service_time <= hi);
        }
    }
}

TEST_CASE("mispredicted requests serve with their true time") {
    SimConfig cfg = overload_uniform(3000, 16, 4, 33);
    cfg.error_model = make_symmetric(0.4);
    const SimResult result = run_simulation_detailed(cfg);
    std::size_t moved = 0;
    for (const Request& r : result.requests) {
        CHECK(r.true_bin == assign_bin(cfg.bins, r.service_time));
        const auto diff = static_cast<long long>(r.predicted_bin) - static_cast<long long>(r.true_bin);
        CHECK(std::llabs(diff) <= 1);
        if (diff != 0) ++moved;
    }
    CHECK(moved > 0);
    for (const BatchRecord& b : result.batches) {
        double expected = 0;
        for (const std::size_t id : b.members) {
            CHECK(result.requests[id].predicted_bin == b.bin);
            expected = std::max(expected, result.requests[id].service_time);
        }
        CHECK(b.finish_time - b.start_time == Approx(expected).margin(1e-9));
    }
}

TEST_CASE("overloaded single server never idles") {
    SimConfig cfg = overload_uniform(5 * 128, 128, 2, 77);
    const SimResult result = run_simulation_detailed(cfg);
    double total_service = 0;
    for (const BatchRecord& b : result.batches) total_service += b.service_time;
    CHECK(result.metrics.makespan == Approx(total_service).epsilon(1e-12));
    CHECK(result.metrics.server_busy_fraction == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean batch service time at one bin matches the order statistic") {
    const std::size_t batch = 8, n_batches = 1500;
    SimConfig cfg = overload_uniform(batch * n_batches, batch, 1, 13);
    const SimResult result = run_simulation_detailed(cfg);
    REQUIRE(result.batches.size() == n_batches);
    double sum = 0, sum_sq = 0;
    for (const BatchRecord& b : result.batches) {
        sum += b.service_time;
        sum_sq += b.service_time * b.service_time;
    }
    const double mean_service = sum / n_batches;
    const double sd = std::sqrt((sum_sq - n_batches * mean_service * mean_service) / (n_batches - 1));
    const double se = sd / std::sqrt(static_cast<double>(n_batches));
    CHECK(std::abs(mean_service - expected_max_uniform(batch, 1.0, 20.0)) < 3 * se);
}

TEST_CASE("latency matches the closed form when servers are plentiful") {
    SimConfig cfg;
    cfg.arrival_rate = 2.0;
    cfg.n_requests = 6400;
    cfg.batch_size = 16;
    cfg.bins = uniform_boundaries(2, 1.0, 20.0);
    cfg.service = make_uniform(1.0, 20.0);
    cfg.n_servers = 500;
    double total = 0;
    const int reps = 5;
    for (int rep = 0; rep < reps; ++rep) {
        cfg.seed = 400 + rep;
        total += run_simulation(cfg).latency_mean;
    }
    const double predicted = expected_latency(16, 2, 1.0, 20.0, 2.0);
    CHECK(std::abs(total / reps - predicted) / predicted < 0.05);
}

TEST_CASE("latency mean dominates the served mean service time") {
    SimConfig cfg = overload_uniform(2000, 32, 2, 55);
    cfg.arrival_rate = 6.0;
    const SimResult result = run_simulation_detailed(cfg);
    double mean_service = 0;
    for (const Request& r : result.requests) mean_service += r.service_time;
    mean_service /= static_cast<double>(result.requests.size());
    CHECK(result.metrics.latency_mean >= mean_service);
    CHECK(result.metrics.latency_p99 >= result.metrics.latency_p50);
}

TEST_CASE("disabling the flush leaves only full batches") {
    SimConfig cfg = overload_uniform(1000, 16, 3, 9);
    cfg.flush_partial = false;
    const SimResult result = run_simulation_detailed(cfg);
    for (const BatchRecord& b : result.batches) CHECK(b.members.size() == 16);
    CHECK(result.metrics.n_completed == 16 * result.batches.size());
    CHECK(result.metrics.n_completed < 1000);
    std::size_t unserved = 0;
    for (const Request& r : result.requests)
        if (r.batch == kNoBatch) ++unserved;
    CHECK(unserved == 1000 - result.metrics.n_completed);
}

TEST_CASE("a batch-wait cap bounds in-bin waiting") {
    SimConfig cfg;
    cfg.arrival_rate = 2.0;
    cfg.n_requests = 400;
    cfg.batch_size = 10;
    cfg.bins = uniform_boundaries(4, 1.0, 20.0);
    cfg.service = make_uniform(1.0, 20.0);
    cfg.n_servers = 8;
    cfg.seed = 70;
    cfg.max_batch_wait = 1.5;
    const SimResult result = run_simulation_detailed(cfg);
    REQUIRE(result.metrics.n_completed == 400);
    bool any_undersized = false;
    for (const BatchRecord& b : result.batches) {
        any_undersized = any_undersized || b.members.size() < 10;
        for (const std::size_t id : b.members)
            CHECK(b.formed_time - result.requests[id].arrival_time <= 1.5 + 1e-9);
    }
    CHECK(any_undersized);
}

TEST_CASE("service draws outside the bin support are an error") {
    SimConfig cfg;
    cfg.arrival_rate = kOverload;
    cfg.n_requests = 4;
    cfg.batch_size = 2;
    cfg.bins = make_bin_config({1.0, 3.5, 6.0});
    cfg.seed = 5;
    REQUIRE_THROWS_AS(replay_trace(cfg, {1.0, 5.0, 2.0, 50.0}), std::domain_error);
    REQUIRE_THROWS_AS(replay_trace(cfg, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(replay_trace(cfg, {1.0, -2.0}), std::invalid_argument);
}

TEST_CASE("equal-length traces remove all batching inefficiency") {
    SimConfig cfg;
    cfg.arrival_rate = kOverload;
    cfg.n_requests = 64;
    cfg.batch_size = 16;
    cfg.bins = make_bin_config({0.5, 1.5});
    cfg.n_servers = 2;
    cfg.seed = 31;
    cfg.trace_mode = TraceMode::cyclic;
    const SimResult result = replay_trace_detailed(cfg, {1.0});
    for (const BatchRecord& b : result.batches) CHECK(b.service_time == 1.0);
    // 4 batches over 2 servers, two rounds of exactly 1s each
    CHECK(result.metrics.makespan == Approx(2.0));
    CHECK(result.metrics.throughput == Approx(64.0 / 2.0));
}

TEST_CASE("splitting a two-length trace halves the busy time") {
    SimConfig cfg;
    cfg.arrival_rate = kOverload;
    cfg.n_requests = 8;
    cfg.batch_size = 2;
    cfg.seed = 1;
    cfg.trace_mode = TraceMode::cyclic;
    const std::vector<double> lengths{1.0, 6.0};

    cfg.bins = make_bin_config({1.0, 6.0});
    const double mixed = replay_trace(cfg, lengths).makespan;

    cfg.bins = make_bin_config({1.0, 3.5, 6.0});
    const double split = replay_trace(cfg, lengths).makespan;

    CHECK(split < mixed);
    CHECK(mixed == Approx(4 * 6.0));
    CHECK(split == Approx(2 * 1.0 + 2 * 6.0));
}

TEST_CASE("arrival-order batching of the 1s/5s/2s/6s example takes 11 seconds") {
    SimConfig cfg;
    cfg.arrival_rate = kOverload;
    cfg.n_requests = 4;
    cfg.batch_size = 2;
    cfg.n_servers = 1;
    cfg.seed = 2;
    cfg.trace_mode = TraceMode::cyclic;
    const std::vector<double> lengths{1.0, 5.0, 2.0, 6.0};

    cfg.bins = make_bin_config({1.0, 6.0});
    CHECK(replay_trace(cfg, lengths).makespan == 11.0);

    cfg.bins = make_bin_config({1.0, 3.5, 6.0});
    CHECK(replay_trace(cfg, lengths).makespan == 8.0);
}

TEST_CASE("request logs are stable and complete") {
    SimConfig cfg = overload_uniform(64, 8, 2, 17);
    cfg.arrival_rate = 4.0;
    cfg.flush_partial = false;
    const SimResult result = run_simulation_detailed(cfg);
    std::ostringstream a, b;
    write_request_log(result, a);
    write_request_log(result, b);
    CHECK(a.str() == b.str());
    std::size_t lines = 0;
    std::istringstream in(a.str());
    std::string line;
    bool saw_null = false;
    while (std::getline(in, line)) {
        ++lines;
        CHECK(line.front() == '{');
        CHECK(line.back() == '}');
        saw_null = saw_null || line.find("\"batch\":null") != std::string::npos;
    }
    CHECK(lines == 64);
    CHECK(saw_null == (result.metrics.n_completed < 64));
}
