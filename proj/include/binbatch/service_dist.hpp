#pragma once
// Service-time models: the distributions request execution times are drawn
// from, and the order-statistic quantities batch service analysis rests on.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <variant>
#include <vector>

#include "binbatch/rng.hpp"

namespace binbatch {

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace detail

struct Uniform {
    double min_time = 0;
    double max_time = 0;
};

struct Exponential {
    double rate = 0;
};

struct Empirical {
    std::vector<double> samples;  // sorted ascending, all positive
};

using ServiceDist = std::variant<Uniform, Exponential, Empirical>;

inline ServiceDist make_uniform(double min_time, double max_time) {
    if (!(min_time >= 0) || !(min_time < max_time) || !std::isfinite(max_time))
        throw std::invalid_argument("uniform service: need 0 <= min_time < max_time");
    return Uniform{min_time, max_time};
}

inline ServiceDist make_exponential(double rate) {
    if (!(rate > 0) || !std::isfinite(rate))
        throw std::invalid_argument("exponential service: rate must be positive");
    return Exponential{rate};
}

// Samples are stored sorted; sampling is with replacement.
inline ServiceDist make_empirical(std::vector<double> samples) {
    if (samples.empty())
        throw std::invalid_argument("empirical service: sample set is empty");
    for (double s : samples)
        if (!(s > 0) || !std::isfinite(s))
            throw std::invalid_argument("empirical service: all samples must be positive");
    std::sort(samples.begin(), samples.end());
    return Empirical{std::move(samples)};
}

inline double mean(const ServiceDist& dist) {
    return std::visit(detail::overloaded{
                          [](const Uniform& u) { return (u.min_time + u.max_time) / 2.0; },
                          [](const Exponential& e) { return 1.0 / e.rate; },
                          [](const Empirical& e) {
                              double sum = std::accumulate(e.samples.begin(), e.samples.end(), 0.0);
                              return sum / static_cast<double>(e.samples.size());
                          },
                      },
                      dist);
}

// Expected maximum of `count` i.i.d. uniform draws on [lo, hi].
inline double expected_max_uniform(std::size_t count, double lo, double hi) {
    if (count == 0) throw std::invalid_argument("expected_max_uniform: count must be >= 1");
    if (!(lo < hi)) throw std::invalid_argument("expected_max_uniform: need lo < hi");
    const double b = static_cast<double>(count);
    return (b * hi + lo) / (b + 1.0);
}

// H_n by direct summation, smallest terms first.
inline double harmonic_number(std::size_t n) {
    if (n == 0) throw std::invalid_argument("harmonic_number: n must be >= 1");
    double sum = 0.0;
    for (std::size_t j = n; j >= 1; --j) sum += 1.0 / static_cast<double>(j);
    return sum;
}

// One i.i.d. draw from the distribution.
inline double sample(const ServiceDist& dist, RandomStream& rng) {
    return std::visit(detail::overloaded{
                          [&](const Uniform& u) { return rng.uniform(u.min_time, u.max_time); },
                          [&](const Exponential& e) { return rng.exponential(e.rate); },
                          [&](const Empirical& e) { return e.samples[rng.index(e.samples.size())]; },
                      },
                      dist);
}

}  // namespace binbatch
