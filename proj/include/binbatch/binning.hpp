#pragma once
// Bin boundary computation, bin assignment, and prediction-error models.
//
// Bins are half-open intervals [edge[i-1], edge[i]) indexed 1..k, with the
// top edge closed into bin k so the full support is covered. The last edge
// may be +infinity (open-ended top bin).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "binbatch/rng.hpp"
#include "binbatch/service_dist.hpp"

namespace binbatch {

struct BinConfig {
    std::vector<double> edges;  // k+1 strictly increasing values

    std::size_t bin_count() const { return edges.size() - 1; }
    double lower() const { return edges.front(); }
    double upper() const { return edges.back(); }
};

inline BinConfig make_bin_config(std::vector<double> edges) {
    if (edges.size() < 2)
        throw std::invalid_argument("bin config: need at least two edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const bool last = (i + 1 == edges.size());
        if (std::isnan(edges[i]) || (!last && !std::isfinite(edges[i])) ||
            (last && edges[i] == -std::numeric_limits<double>::infinity()))
            throw std::invalid_argument("bin config: only the top edge may be infinite");
    }
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i - 1] < edges[i]))
            throw std::invalid_argument("bin config: edges must be strictly increasing");
    return BinConfig{std::move(edges)};
}

// Equal-width (and, under a uniform distribution, equal-mass) boundaries.
inline BinConfig uniform_boundaries(std::size_t k, double min_time, double max_time) {
    if (k == 0) throw std::invalid_argument("uniform_boundaries: k must be >= 1");
    if (!(min_time >= 0) || !(min_time < max_time))
        throw std::invalid_argument("uniform_boundaries: need 0 <= min_time < max_time");
    std::vector<double> edges(k + 1);
    for (std::size_t i = 0; i <= k; ++i)
        edges[i] = min_time + (static_cast<double>(i) / static_cast<double>(k)) * (max_time - min_time);
    edges[0] = min_time;
    edges[k] = max_time;
    return make_bin_config(std::move(edges));
}

// The sequence [L_1, ..., L_{k-1}] with L_1 = H_B and L_m = 1 + ln(L_{m-1});
// it parameterizes the optimal exponential-case boundaries. Empty for k = 1.
inline std::vector<double> l_sequence(std::size_t k, std::size_t batch_size) {
    if (k == 0) throw std::invalid_argument("l_sequence: k must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("l_sequence: batch size must be >= 1");
    std::vector<double> seq;
    if (k == 1) return seq;
    seq.reserve(k - 1);
    seq.push_back(harmonic_number(batch_size));
    for (std::size_t m = 2; m < k; ++m) {
        if (!(seq.back() > 0))
            throw std::domain_error("l_sequence: non-positive term, log undefined");
        seq.push_back(1.0 + std::log(seq.back()));
    }
    return seq;
}

// Boundaries minimizing the batch-service upper bound for Exponential(rate)
// service: edge_i = (1/rate) * sum_{j=1..i} ln(L_{k-j}), with edge_0 = 0 and
// an open-ended top bin.
inline BinConfig exponential_boundaries(std::size_t k, double rate, std::size_t batch_size) {
    if (k == 0) throw std::invalid_argument("exponential_boundaries: k must be >= 1");
    if (!(rate > 0)) throw std::invalid_argument("exponential_boundaries: rate must be positive");
    std::vector<double> edges;
    edges.reserve(k + 1);
    edges.push_back(0.0);
    const std::vector<double> seq = l_sequence(k, batch_size);
    double log_sum = 0.0;
    for (std::size_t i = 1; i < k; ++i) {
        log_sum += std::log(seq[k - i - 1]);  // L_{k-i}
        edges.push_back(log_sum / rate);
    }
    edges.push_back(std::numeric_limits<double>::infinity());
    return make_bin_config(std::move(edges));
}

namespace detail {

// Linear interpolation between order statistics of an ascending-sorted set.
inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto idx = static_cast<std::size_t>(pos);
    if (idx + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(idx);
    return sorted[idx] + frac * (sorted[idx + 1] - sorted[idx]);
}

}  // namespace detail

// Equiprobable boundaries for trace data: interior edges at the j/k sample
// quantiles, outer edges at the sample extremes.
inline BinConfig empirical_boundaries(std::size_t k, const std::vector<double>& samples) {
    if (k == 0) throw std::invalid_argument("empirical_boundaries: k must be >= 1");
    if (samples.empty()) throw std::invalid_argument("empirical_boundaries: sample set is empty");
    std::vector<double> sorted(samples);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct(sorted);
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < k)
        throw std::invalid_argument("empirical_boundaries: k exceeds the number of distinct sample values");
    std::vector<double> edges(k + 1);
    edges[0] = sorted.front();
    edges[k] = sorted.back();
    for (std::size_t j = 1; j < k; ++j)
        edges[j] = detail::interpolated_quantile(sorted, static_cast<double>(j) / static_cast<double>(k));
    for (std::size_t i = 1; i <= k; ++i)
        if (!(edges[i - 1] < edges[i]))
            throw std::invalid_argument("empirical_boundaries: bins collapse (duplicate quantiles)");
    return make_bin_config(std::move(edges));
}

// Bin index in [1, k] for a service length; lengths equal to the top edge
// close into bin k. Out-of-support lengths are an error, not a clamp: they
// signal a trace/distribution mismatch.
inline std::size_t assign_bin(const BinConfig& config, double length) {
    const auto& e = config.edges;
    if (!(length >= e.front()) || !(length <= e.back())) {
        std::ostringstream msg;
        msg << "assign_bin: length " << length << " outside bin support [" << e.front() << ", "
            << e.back() << "]";
        throw std::domain_error(msg.str());
    }
    if (length == e.back()) return config.bin_count();
    const auto it = std::upper_bound(e.begin(), e.end(), length);
    return static_cast<std::size_t>(it - e.begin());
}

// --- prediction-error models ---------------------------------------------

struct Perfect {};

// Adjacent-bin misprediction: an interior bin leaks to each neighbor with
// probability p_error; an edge bin leaks to its single neighbor with
// probability p_error.
struct Symmetric {
    double p_error = 0;
};

// Row-stochastic matrix; rows[i-1][j-1] = P(predicted = j | true = i).
struct Confusion {
    std::vector<std::vector<double>> rows;
};

using ErrorModel = std::variant<Perfect, Symmetric, Confusion>;

inline ErrorModel make_symmetric(double p_error) {
    if (!(p_error >= 0) || !(p_error <= 0.5))
        throw std::invalid_argument("symmetric error model: need 0 <= p_error <= 0.5");
    return Symmetric{p_error};
}

inline ErrorModel make_confusion(std::vector<std::vector<double>> rows) {
    if (rows.empty()) throw std::invalid_argument("confusion matrix: empty");
    const std::size_t k = rows.size();
    for (std::size_t i = 0; i < k; ++i) {
        if (rows[i].size() != k)
            throw std::invalid_argument("confusion matrix: must be square");
        double sum = 0.0;
        for (double p : rows[i]) {
            if (!(p >= 0)) throw std::invalid_argument("confusion matrix: negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            std::ostringstream msg;
            msg << "confusion matrix: row " << (i + 1) << " sums to " << sum << ", expected 1";
            throw std::invalid_argument(msg.str());
        }
    }
    return Confusion{std::move(rows)};
}

// Plain-text matrix: k lines of k whitespace-separated probabilities,
// line i = true bin i.
inline ErrorModel parse_confusion(std::istream& in, const std::string& name) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<double> row;
        double v = 0;
        while (fields >> v) row.push_back(v);
        if (!fields.eof()) {
            std::ostringstream msg;
            msg << name << " line " << line_no << ": malformed probability";
            throw std::runtime_error(msg.str());
        }
        if (row.empty()) continue;  // blank line
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(name + ": no matrix rows");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) {
            std::ostringstream msg;
            msg << name << ": row " << (i + 1) << " has " << rows[i].size() << " entries, expected "
                << rows.size();
            throw std::runtime_error(msg.str());
        }
    }
    return make_confusion(std::move(rows));
}

inline ErrorModel load_confusion(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open confusion matrix file: " + path);
    return parse_confusion(in, path);
}

// Predicted bin for a request whose true bin is known. Perfect is the
// identity; Symmetric applies the adjacent-bin rule (identity when k = 1);
// Confusion samples from the true bin's row.
inline std::size_t predict_bin(const ErrorModel& model, std::size_t true_bin, std::size_t k,
                               RandomStream& rng) {
    if (true_bin < 1 || true_bin > k)
        throw std::invalid_argument("predict_bin: true bin out of range");
    return std::visit(
        detail::overloaded{
            [&](const Perfect&) { return true_bin; },
            [&](const Symmetric& s) {
                if (k == 1 || s.p_error == 0) return true_bin;
                const double u = rng.uniform01();
                if (true_bin == 1) return u < s.p_error ? std::size_t{2} : true_bin;
                if (true_bin == k) return u < s.p_error ? k - 1 : true_bin;
                if (u < s.p_error) return true_bin - 1;
                if (u >= 1.0 - s.p_error) return true_bin + 1;
                return true_bin;
            },
            [&](const Confusion& c) {
                if (c.rows.size() != k)
                    throw std::invalid_argument("predict_bin: confusion matrix size does not match k");
                const auto& row = c.rows[true_bin - 1];
                const double u = rng.uniform01();
                double cum = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    cum += row[j];
                    if (u < cum) return j + 1;
                }
                return k;  // guard against row sums a hair below 1
            },
        },
        model);
}

// --- exhaustive boundary oracle -------------------------------------------

// Grid-search minimizer of the model's expected batch service time, used to
// cross-check the closed-form boundaries. Exhaustive and intentionally
// limited to k in {2, 3} and small grids; test machinery, not a production
// optimizer.
inline BinConfig brute_force_boundaries(std::size_t k, const ServiceDist& dist,
                                        std::size_t batch_size, std::size_t grid_points) {
    if (k != 2 && k != 3)
        throw std::invalid_argument("brute_force_boundaries: only k = 2 or 3 supported");
    if (batch_size == 0)
        throw std::invalid_argument("brute_force_boundaries: batch size must be >= 1");
    if (grid_points < k + 1 || grid_points > 400)
        throw std::invalid_argument("brute_force_boundaries: grid_points must be in [k+1, 400]");

    if (const auto* u = std::get_if<Uniform>(&dist)) {
        const double lo = u->min_time, hi = u->max_time, range = hi - lo;
        const double step = range / static_cast<double>(grid_points);
        // Expected batch service = sum_i P(bin i) * E[max of B | bin i].
        const auto service = [&](const std::vector<double>& e) {
            double total = 0.0;
            for (std::size_t i = 1; i < e.size(); ++i)
                total += (e[i] - e[i - 1]) / range * expected_max_uniform(batch_size, e[i - 1], e[i]);
            return total;
        };
        std::vector<double> best;
        double best_val = std::numeric_limits<double>::infinity();
        if (k == 2) {
            for (std::size_t j = 1; j < grid_points; ++j) {
                const std::vector<double> e{lo, lo + static_cast<double>(j) * step, hi};
                const double v = service(e);
                if (v < best_val) { best_val = v; best = e; }
            }
        } else {
            for (std::size_t j1 = 1; j1 + 1 < grid_points; ++j1) {
                for (std::size_t j2 = j1 + 1; j2 < grid_points; ++j2) {
                    const std::vector<double> e{lo, lo + static_cast<double>(j1) * step,
                                                lo + static_cast<double>(j2) * step, hi};
                    const double v = service(e);
                    if (v < best_val) { best_val = v; best = e; }
                }
            }
        }
        return make_bin_config(std::move(best));
    }

    if (const auto* ex = std::get_if<Exponential>(&dist)) {
        const double rate = ex->rate;
        const double hb = harmonic_number(batch_size);
        const double top = hb / rate;  // search window; the optimum sits well inside
        const double step = top / static_cast<double>(grid_points);
        // Upper bound on expected batch service: interior bins are charged
        // their top edge, the open last bin is exact for shifted exponentials.
        const auto bound = [&](const std::vector<double>& interior) {
            double total = 0.0;
            double prev = 0.0;
            for (double edge : interior) {
                total += (std::exp(-rate * prev) - std::exp(-rate * edge)) * edge;
                prev = edge;
            }
            total += std::exp(-rate * prev) * (prev + hb / rate);
            return total;
        };
        std::vector<double> best;
        double best_val = std::numeric_limits<double>::infinity();
        if (k == 2) {
            for (std::size_t j = 1; j < grid_points; ++j) {
                const std::vector<double> interior{static_cast<double>(j) * step};
                const double v = bound(interior);
                if (v < best_val) { best_val = v; best = interior; }
            }
        } else {
            for (std::size_t j1 = 1; j1 + 1 < grid_points; ++j1) {
                for (std::size_t j2 = j1 + 1; j2 < grid_points; ++j2) {
                    const std::vector<double> interior{static_cast<double>(j1) * step,
                                                       static_cast<double>(j2) * step};
                    const double v = bound(interior);
                    if (v < best_val) { best_val = v; best = interior; }
                }
            }
        }
        std::vector<double> edges{0.0};
        edges.insert(edges.end(), best.begin(), best.end());
        edges.push_back(std::numeric_limits<double>::infinity());
        return make_bin_config(std::move(edges));
    }

    throw std::invalid_argument("brute_force_boundaries: unsupported distribution family");
}

}  // namespace binbatch
