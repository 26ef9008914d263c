#pragma once
// Closed-form throughput and latency of k-bin batching. These are the
// oracles the simulator is validated against, and double as a user-facing
// calculator through the CLI.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>

#include "binbatch/binning.hpp"
#include "binbatch/service_dist.hpp"

namespace binbatch {

struct SystemParams {
    std::size_t batch_size = 1;
    std::size_t bins = 1;
    ServiceDist service = Uniform{1.0, 2.0};
    std::optional<double> arrival_rate;  // only latency needs it
};

inline SystemParams make_system_params(std::size_t batch_size, std::size_t bins,
                                       ServiceDist service,
                                       std::optional<double> arrival_rate = {}) {
    if (batch_size == 0) throw std::invalid_argument("system params: batch size must be >= 1");
    if (bins == 0) throw std::invalid_argument("system params: bin count must be >= 1");
    if (arrival_rate && !(*arrival_rate > 0))
        throw std::invalid_argument("system params: arrival rate must be positive");
    return SystemParams{batch_size, bins, std::move(service), arrival_rate};
}

namespace detail {

inline void check_uniform_range(double min_time, double max_time) {
    if (!(min_time >= 0) || !(min_time < max_time))
        throw std::invalid_argument("analytics: need 0 <= min_time < max_time");
}

inline void check_counts(std::size_t batch_size, std::size_t bins) {
    if (batch_size == 0) throw std::invalid_argument("analytics: batch size must be >= 1");
    if (bins == 0) throw std::invalid_argument("analytics: bin count must be >= 1");
}

// Per-bin inefficiency of standard batching: how far the expected batch
// maximum sits above the single-request mean.
inline double batching_gap(std::size_t batch_size, double min_time, double max_time) {
    return expected_max_uniform(batch_size, min_time, max_time) - (min_time + max_time) / 2.0;
}

}  // namespace detail

// Expected service time of a size-B batch under k equal-mass bins with
// Uniform(min_time, max_time) request service times.
inline double expected_service_time(std::size_t batch_size, std::size_t bins, double min_time,
                                    double max_time) {
    detail::check_counts(batch_size, bins);
    detail::check_uniform_range(min_time, max_time);
    const double mid = (min_time + max_time) / 2.0;
    return mid + detail::batching_gap(batch_size, min_time, max_time) / static_cast<double>(bins);
}

// Expected throughput of k-bin batching: batch size over expected batch
// service time.
inline double throughput(std::size_t batch_size, std::size_t bins, double min_time,
                         double max_time) {
    return static_cast<double>(batch_size) /
           expected_service_time(batch_size, bins, min_time, max_time);
}

// Asymptotic throughput ceiling as the binning becomes infinitely fine:
// batch size over the single-request mean.
inline double max_throughput(std::size_t batch_size, double min_time, double max_time) {
    detail::check_counts(batch_size, 1);
    detail::check_uniform_range(min_time, max_time);
    return static_cast<double>(batch_size) / ((min_time + max_time) / 2.0);
}

// Smallest bin count whose throughput reaches max_throughput - epsilon.
inline std::size_t min_bins_for_throughput(std::size_t batch_size, double min_time,
                                           double max_time, double epsilon) {
    detail::check_counts(batch_size, 1);
    detail::check_uniform_range(min_time, max_time);
    const double cap = max_throughput(batch_size, min_time, max_time);
    if (!(epsilon > 0) || !(epsilon < cap))
        throw std::invalid_argument("min_bins_for_throughput: need 0 < epsilon < max throughput");
    const double mid = (min_time + max_time) / 2.0;
    const double needed =
        (cap - epsilon) * detail::batching_gap(batch_size, min_time, max_time) / (epsilon * mid);
    std::size_t k = needed < 1.0 ? 1 : static_cast<std::size_t>(std::ceil(needed));
    // The ceiling can land one off when the target sits exactly on an
    // integer; pin the result to "smallest k reaching cap - epsilon".
    const double target = cap - epsilon;
    while (k > 1 && throughput(batch_size, k - 1, min_time, max_time) >= target) --k;
    while (throughput(batch_size, k, min_time, max_time) < target) ++k;
    return k;
}

// Expected request latency under instantaneous batch dispatch: expected
// batch service time plus the mean wait for the batch to fill, (B-1)k/(2 l).
inline double expected_latency(std::size_t batch_size, std::size_t bins, double min_time,
                               double max_time, double arrival_rate) {
    if (!(arrival_rate > 0) || !std::isfinite(arrival_rate))
        throw std::invalid_argument("expected_latency: arrival rate must be positive and finite");
    const double batch_fill_wait = static_cast<double>(batch_size - 1) *
                                   static_cast<double>(bins) / (2.0 * arrival_rate);
    return expected_service_time(batch_size, bins, min_time, max_time) + batch_fill_wait;
}

// Upper bound on the expected batch service time for Exponential(rate)
// service, evaluated at the optimal boundaries: interior bins are charged
// their top edge, the open last bin is the exact shifted-exponential value
// edge_{k-1} + H_B/rate. The implied throughput lower bound is B over this.
inline double exponential_service_bound(std::size_t batch_size, std::size_t bins, double rate) {
    detail::check_counts(batch_size, bins);
    if (!(rate > 0)) throw std::invalid_argument("exponential_service_bound: rate must be positive");
    const BinConfig config = exponential_boundaries(bins, rate, batch_size);
    const double hb = harmonic_number(batch_size);
    double total = 0.0;
    for (std::size_t i = 1; i < bins; ++i) {
        const double mass = std::exp(-rate * config.edges[i - 1]) - std::exp(-rate * config.edges[i]);
        total += mass * config.edges[i];
    }
    const double last_edge = config.edges[bins - 1];
    total += std::exp(-rate * last_edge) * (last_edge + hb / rate);
    return total;
}

// Convenience overloads over a parameter bundle; the closed forms require
// uniform service.
inline double throughput(const SystemParams& params) {
    const auto* u = std::get_if<Uniform>(&params.service);
    if (!u) throw std::invalid_argument("throughput: closed form requires uniform service");
    return throughput(params.batch_size, params.bins, u->min_time, u->max_time);
}

inline double expected_latency(const SystemParams& params) {
    const auto* u = std::get_if<Uniform>(&params.service);
    if (!u) throw std::invalid_argument("expected_latency: closed form requires uniform service");
    if (!params.arrival_rate)
        throw std::invalid_argument("expected_latency: params carry no arrival rate");
    return expected_latency(params.batch_size, params.bins, u->min_time, u->max_time,
                            *params.arrival_rate);
}

}  // namespace binbatch
