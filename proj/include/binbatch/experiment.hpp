#pragma once
// Experiment harness: parameter sweeps over simulator configs with seeded
// replications, CSV emission, and measured-vs-analytic comparison.
//
// Reproducibility: replication r of any sweep point runs with seed
// replication_seed(spec.seed, r), independent of the point's position in
// the sweep, so every point can be re-run in isolation. Sweep points are
// independent simulations; the worker pool size never changes results.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "binbatch/analytics.hpp"
#include "binbatch/simulator.hpp"
#include "binbatch/workload.hpp"

namespace binbatch {

enum class ServiceKind { uniform, exponential, trace };

struct ServiceSpec {
    ServiceKind kind = ServiceKind::uniform;
    double min_time = 1.0;   // uniform
    double max_time = 2.0;   // uniform
    double rate = 1.0;       // exponential
    std::string trace_path;  // trace
    TraceFormat trace_format = TraceFormat::csv;
    TraceMode trace_mode = TraceMode::resample;
    std::optional<LinearTimeModel> time_model;  // token counts -> times
};

// Empty edges means boundaries are derived from the service model:
// equal-width for uniform, the optimal open-ended set for exponential,
// sample quantiles for traces.
struct BinRule {
    std::size_t k = 1;
    std::vector<double> edges;
};

enum class ErrorKind { perfect, symmetric, confusion };

struct ErrorSpec {
    ErrorKind kind = ErrorKind::perfect;
    double p_error = 0;
    std::string matrix_path;
};

struct RunTemplate {
    double arrival_rate = kOverload;
    std::size_t n_requests = 0;
    std::size_t batch_size = 1;
    std::size_t n_servers = 1;
    bool flush_partial = true;
    std::optional<double> max_batch_wait;
    ServiceSpec service;
    BinRule bins;
    ErrorSpec error;
};

struct SweepAxis {
    std::string param;  // lambda | k | B | p_e | n_servers
    std::vector<double> values;
};

struct ExperimentSpec {
    std::string name = "experiment";
    RunTemplate base;
    std::vector<SweepAxis> axes;  // at most 2
    std::size_t replications = 10;
    std::string output;  // csv path; empty = caller decides
    std::uint64_t seed = 1;
};

// Seed for replication `rep` of a run under master seed `master`.
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t rep) {
    return detail::splitmix64(master ^ detail::splitmix64(rep + 0x51ED2701A7B4E5D3ULL));
}

// Files referenced by a template, loaded once per experiment.
struct ResolvedWorkload {
    std::vector<double> trace_times;       // service.kind == trace
    std::optional<ErrorModel> confusion;   // error.kind == confusion
};

inline ResolvedWorkload resolve_workload(const RunTemplate& t) {
    ResolvedWorkload w;
    if (t.service.kind == ServiceKind::trace) {
        const Trace trace = load_trace(t.service.trace_path, t.service.trace_format);
        w.trace_times = service_times(trace, t.service.time_model);
    }
    if (t.error.kind == ErrorKind::confusion) w.confusion = load_confusion(t.error.matrix_path);
    return w;
}

inline SimConfig materialize(const RunTemplate& t, const ResolvedWorkload& w, std::uint64_t seed) {
    SimConfig cfg;
    cfg.arrival_rate = t.arrival_rate;
    cfg.n_requests = t.n_requests;
    cfg.batch_size = t.batch_size;
    cfg.n_servers = t.n_servers;
    cfg.flush_partial = t.flush_partial;
    cfg.max_batch_wait = t.max_batch_wait;
    cfg.seed = seed;
    cfg.trace_mode = t.service.trace_mode;

    switch (t.service.kind) {
        case ServiceKind::uniform:
            cfg.service = make_uniform(t.service.min_time, t.service.max_time);
            break;
        case ServiceKind::exponential:
            cfg.service = make_exponential(t.service.rate);
            break;
        case ServiceKind::trace:
            cfg.service = make_empirical(w.trace_times);
            break;
    }

    if (!t.bins.edges.empty()) {
        cfg.bins = make_bin_config(t.bins.edges);
    } else {
        switch (t.service.kind) {
            case ServiceKind::uniform:
                cfg.bins = uniform_boundaries(t.bins.k, t.service.min_time, t.service.max_time);
                break;
            case ServiceKind::exponential:
                cfg.bins = exponential_boundaries(t.bins.k, t.service.rate, t.batch_size);
                break;
            case ServiceKind::trace:
                cfg.bins = empirical_boundaries(t.bins.k, w.trace_times);
                break;
        }
    }

    switch (t.error.kind) {
        case ErrorKind::perfect: cfg.error_model = Perfect{}; break;
        case ErrorKind::symmetric: cfg.error_model = make_symmetric(t.error.p_error); break;
        case ErrorKind::confusion: cfg.error_model = *w.confusion; break;
    }
    return cfg;
}

inline SimResult run_template(const RunTemplate& t, const ResolvedWorkload& w, std::uint64_t seed) {
    const SimConfig cfg = materialize(t, w, seed);
    if (t.service.kind == ServiceKind::trace) return replay_trace_detailed(cfg, w.trace_times);
    return run_simulation_detailed(cfg);
}

// One row of a results table: a sweep point's parameters, replication
// aggregates, and the matching closed-form predictions (NaN when the
// formulas do not apply to the configured service/bin family).
struct PointResult {
    double arrival_rate = kOverload;
    std::size_t k = 1;
    std::size_t batch_size = 1;
    std::size_t n_servers = 1;
    std::string error_model = "perfect";
    double p_error = 0;
    std::size_t n_requests = 0;
    std::size_t replications = 1;

    double throughput_mean = 0, throughput_std = 0;
    double latency_mean = 0, latency_std = 0;
    double latency_p50 = 0, latency_p99 = 0;
    double makespan_mean = 0, busy_fraction_mean = 0;

    double analytic_throughput = std::numeric_limits<double>::quiet_NaN();
    double analytic_latency = std::numeric_limits<double>::quiet_NaN();
    double analytic_max_throughput = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean_out, double& std_out) {
    const double n = static_cast<double>(xs.size());
    double sum = 0;
    for (double x : xs) sum += x;
    mean_out = sum / n;
    if (xs.size() < 2) {
        std_out = 0;
        return;
    }
    double ss = 0;
    for (double x : xs) ss += (x - mean_out) * (x - mean_out);
    std_out = std::sqrt(ss / (n - 1.0));
}

inline std::size_t as_count(double v, const std::string& param) {
    if (!(v >= 1) || v != std::floor(v) || !std::isfinite(v))
        throw std::invalid_argument("sweep axis " + param + ": values must be integers >= 1");
    return static_cast<std::size_t>(v);
}

inline void apply_override(RunTemplate& t, const std::string& param, double value) {
    if (param == "lambda") {
        if (!(value > 0)) throw std::invalid_argument("sweep axis lambda: values must be positive");
        t.arrival_rate = value;
    } else if (param == "k") {
        if (!t.bins.edges.empty())
            throw std::invalid_argument("cannot sweep k when explicit bin edges are given");
        t.bins.k = as_count(value, param);
    } else if (param == "B") {
        t.batch_size = as_count(value, param);
    } else if (param == "n_servers") {
        t.n_servers = as_count(value, param);
    } else if (param == "p_e") {
        if (t.error.kind == ErrorKind::confusion)
            throw std::invalid_argument("cannot sweep p_e over a confusion-matrix error model");
        t.error.kind = ErrorKind::symmetric;
        t.error.p_error = value;
    } else {
        throw std::invalid_argument("unknown sweep parameter: " + param);
    }
}

inline std::string error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::perfect: return "perfect";
        case ErrorKind::symmetric: return "symmetric";
        case ErrorKind::confusion: return "confusion";
    }
    return "?";
}

}  // namespace detail

inline void validate_spec(const ExperimentSpec& spec) {
    if (spec.axes.size() > 2)
        throw std::invalid_argument("experiment spec: at most 2 sweep axes");
    if (spec.replications < 1)
        throw std::invalid_argument("experiment spec: replications must be >= 1");
    for (const SweepAxis& axis : spec.axes) {
        if (axis.values.empty())
            throw std::invalid_argument("experiment spec: sweep axis '" + axis.param + "' has no values");
        RunTemplate probe = spec.base;
        for (double v : axis.values) detail::apply_override(probe, axis.param, v);
    }
}

inline PointResult run_point(const RunTemplate& t, const ResolvedWorkload& w,
                             std::uint64_t master_seed, std::size_t replications) {
    std::vector<double> thr, lat, p50, p99, mk, busy;
    for (std::size_t rep = 0; rep < replications; ++rep) {
        const SimMetrics m = run_template(t, w, replication_seed(master_seed, rep)).metrics;
        thr.push_back(m.throughput);
        lat.push_back(m.latency_mean);
        p50.push_back(m.latency_p50);
        p99.push_back(m.latency_p99);
        mk.push_back(m.makespan);
        busy.push_back(m.server_busy_fraction);
    }
    PointResult r;
    r.arrival_rate = t.arrival_rate;
    r.k = t.bins.edges.empty() ? t.bins.k : t.bins.edges.size() - 1;
    r.batch_size = t.batch_size;
    r.n_servers = t.n_servers;
    r.error_model = detail::error_kind_name(t.error.kind);
    r.p_error = t.error.kind == ErrorKind::symmetric ? t.error.p_error : 0.0;
    r.n_requests = t.n_requests;
    r.replications = replications;
    detail::mean_std(thr, r.throughput_mean, r.throughput_std);
    detail::mean_std(lat, r.latency_mean, r.latency_std);
    double ignored = 0;
    detail::mean_std(p50, r.latency_p50, ignored);
    detail::mean_std(p99, r.latency_p99, ignored);
    detail::mean_std(mk, r.makespan_mean, ignored);
    detail::mean_std(busy, r.busy_fraction_mean, ignored);

    // Closed-form predictions apply to uniform service with derived
    // (equal-mass) boundaries. The throughput formula is a capacity, so it
    // is only comparable to overload runs; at finite arrival rates the
    // latency lower bound is the meaningful oracle. Ceilings scale with the
    // server count.
    const double servers = static_cast<double>(t.n_servers);
    if (t.service.kind == ServiceKind::uniform && t.bins.edges.empty()) {
        r.analytic_max_throughput =
            servers * max_throughput(t.batch_size, t.service.min_time, t.service.max_time);
        if (std::isinf(t.arrival_rate))
            r.analytic_throughput =
                servers * throughput(t.batch_size, r.k, t.service.min_time, t.service.max_time);
        else
            r.analytic_latency = expected_latency(t.batch_size, r.k, t.service.min_time,
                                                  t.service.max_time, t.arrival_rate);
    } else if (t.service.kind == ServiceKind::exponential) {
        r.analytic_max_throughput = servers * static_cast<double>(t.batch_size) * t.service.rate;
    } else if (t.service.kind == ServiceKind::trace && !w.trace_times.empty()) {
        double sum = 0;
        for (double v : w.trace_times) sum += v;
        r.analytic_max_throughput = servers * static_cast<double>(t.batch_size) *
                                    static_cast<double>(w.trace_times.size()) / sum;
    }
    return r;
}

// Runs every sweep point (cartesian product of the axes, sorted ascending)
// with `replications` seeded runs each. `jobs` sizes the worker pool;
// results are identical for any value.
inline std::vector<PointResult> run_experiment(const ExperimentSpec& spec, unsigned jobs = 1) {
    validate_spec(spec);
    const ResolvedWorkload workload = resolve_workload(spec.base);

    std::vector<std::vector<double>> grid;
    for (const SweepAxis& axis : spec.axes) {
        std::vector<double> values = axis.values;
        std::sort(values.begin(), values.end());
        grid.push_back(std::move(values));
    }
    std::vector<RunTemplate> points;
    if (grid.empty()) {
        points.push_back(spec.base);
    } else if (grid.size() == 1) {
        for (double v : grid[0]) {
            RunTemplate t = spec.base;
            detail::apply_override(t, spec.axes[0].param, v);
            points.push_back(t);
        }
    } else {
        for (double v0 : grid[0]) {
            for (double v1 : grid[1]) {
                RunTemplate t = spec.base;
                detail::apply_override(t, spec.axes[0].param, v0);
                detail::apply_override(t, spec.axes[1].param, v1);
                points.push_back(t);
            }
        }
    }

    std::vector<PointResult> results(points.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1)) {
            if (failed.load()) return;
            try {
                results[i] = run_point(points[i], workload, spec.seed, spec.replications);
            } catch (const std::exception& e) {
                failed.store(true);
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::make_exception_ptr(std::runtime_error(
                        "experiment '" + spec.name + "': sweep point " + std::to_string(i) +
                        " failed: " + e.what()));
                return;
            }
        }
    };
    const unsigned pool = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(points.size())));
    std::vector<std::thread> threads;
    for (unsigned j = 1; j < pool; ++j) threads.emplace_back(worker);
    worker();
    for (std::thread& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

namespace detail {

inline std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace detail

inline const char* results_csv_header() {
    return "name,lambda,k,B,n_servers,error_model,p_e,n_requests,replications,seed,"
           "throughput_mean,throughput_std,latency_mean,latency_std,latency_p50,latency_p99,"
           "makespan_mean,server_busy_fraction,analytic_throughput,analytic_latency,analytic_cmax";
}

inline void write_results_csv(const ExperimentSpec& spec, const std::vector<PointResult>& results,
                              std::ostream& out) {
    out << results_csv_header() << "\n";
    for (const PointResult& r : results) {
        out << spec.name << ',' << detail::csv_number(r.arrival_rate) << ',' << r.k << ','
            << r.batch_size << ',' << r.n_servers << ',' << r.error_model << ','
            << detail::csv_number(r.p_error) << ',' << r.n_requests << ',' << r.replications << ','
            << spec.seed << ',' << detail::csv_number(r.throughput_mean) << ','
            << detail::csv_number(r.throughput_std) << ',' << detail::csv_number(r.latency_mean)
            << ',' << detail::csv_number(r.latency_std) << ',' << detail::csv_number(r.latency_p50)
            << ',' << detail::csv_number(r.latency_p99) << ','
            << detail::csv_number(r.makespan_mean) << ','
            << detail::csv_number(r.busy_fraction_mean) << ','
            << detail::csv_number(r.analytic_throughput) << ','
            << detail::csv_number(r.analytic_latency) << ','
            << detail::csv_number(r.analytic_max_throughput) << "\n";
    }
}

inline void write_results_csv(const ExperimentSpec& spec, const std::vector<PointResult>& results,
                              const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open results file for writing: " + path);
    write_results_csv(spec, results, out);
}

// --- measured vs analytic comparison --------------------------------------

struct CompareRow {
    std::size_t csv_line = 0;
    std::string label;
    std::string metric;  // throughput | latency
    double measured = 0;
    double analytic = 0;
    double rel_error = 0;
    bool pass = false;
};

struct CompareReport {
    std::vector<CompareRow> rows;
    std::size_t n_checked = 0;
    std::size_t n_failed = 0;
    bool ok() const { return n_failed == 0 && n_checked > 0; }
};

// Checks every row that carries analytic predictions against the measured
// means at the given relative tolerances.
inline CompareReport compare_results(std::istream& in, double tol_throughput = 0.02,
                                     double tol_latency = 0.05) {
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("compare: empty results file");
    std::map<std::string, std::size_t> col;
    {
        std::istringstream split(header);
        std::string name;
        std::size_t i = 0;
        while (std::getline(split, name, ',')) col[name] = i++;
    }
    for (const char* required : {"name", "lambda", "k", "throughput_mean", "latency_mean",
                                 "analytic_throughput", "analytic_latency"})
        if (!col.count(required))
            throw std::runtime_error(std::string("compare: missing column ") + required);

    CompareReport report;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream split(line);
        std::string field;
        while (std::getline(split, field, ',')) fields.push_back(field);
        fields.resize(col.size());
        const auto get = [&](const char* name) { return fields[col.at(name)]; };
        const std::string label =
            get("name") + " lambda=" + get("lambda") + " k=" + get("k");
        const auto check = [&](const char* measured_col, const char* analytic_col,
                               const char* metric, double tol) {
            const std::string a = get(analytic_col);
            const std::string m = get(measured_col);
            if (a.empty() || m.empty()) return;
            CompareRow row;
            row.csv_line = line_no;
            row.label = label;
            row.metric = metric;
            row.measured = std::stod(m);
            row.analytic = std::stod(a);
            row.rel_error = std::abs(row.measured - row.analytic) / std::abs(row.analytic);
            row.pass = row.rel_error <= tol;
            ++report.n_checked;
            if (!row.pass) ++report.n_failed;
            report.rows.push_back(std::move(row));
        };
        check("throughput_mean", "analytic_throughput", "throughput", tol_throughput);
        check("latency_mean", "analytic_latency", "latency", tol_latency);
    }
    return report;
}

inline CompareReport compare_results_file(const std::string& path, double tol_throughput = 0.02,
                                          double tol_latency = 0.05) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open results file: " + path);
    return compare_results(in, tol_throughput, tol_latency);
}

// --- JSON experiment specs -------------------------------------------------

namespace detail {

inline double parse_rate(const nlohmann::json& v, const char* what) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf" || s == "overload") return kOverload;
        throw std::invalid_argument(std::string(what) + ": expected a number, \"inf\" or \"overload\"");
    }
    return v.get<double>();
}

inline ServiceSpec parse_service_spec(const nlohmann::json& obj) {
    ServiceSpec s;
    const std::string type = obj.at("type").get<std::string>();
    if (type == "uniform") {
        s.kind = ServiceKind::uniform;
        s.min_time = obj.at("min_time").get<double>();
        s.max_time = obj.at("max_time").get<double>();
    } else if (type == "exponential") {
        s.kind = ServiceKind::exponential;
        s.rate = obj.at("rate").get<double>();
    } else if (type == "trace") {
        s.kind = ServiceKind::trace;
        s.trace_path = obj.at("path").get<std::string>();
        if (obj.contains("format"))
            s.trace_format =
                obj["format"].get<std::string>() == "jsonl" ? TraceFormat::jsonl : TraceFormat::csv;
        if (obj.contains("mode"))
            s.trace_mode =
                obj["mode"].get<std::string>() == "cyclic" ? TraceMode::cyclic : TraceMode::resample;
        if (obj.contains("time_model") && !obj["time_model"].is_null())
            s.time_model = make_linear_time_model(obj["time_model"].at("slope").get<double>(),
                                                  obj["time_model"].at("intercept").get<double>());
    } else {
        throw std::invalid_argument("service type must be uniform, exponential or trace");
    }
    return s;
}

}  // namespace detail

// Run config JSON: lambda (number, "inf" or "overload"), n_requests,
// batch_size, optional n_servers / flush_partial / max_batch_wait, a
// service object, and optional bins / error objects.
inline RunTemplate parse_run_template(const nlohmann::json& obj) {
    RunTemplate t;
    t.arrival_rate = detail::parse_rate(obj.at("lambda"), "lambda");
    t.n_requests = obj.at("n_requests").get<std::size_t>();
    t.batch_size = obj.at("batch_size").get<std::size_t>();
    if (obj.contains("n_servers")) t.n_servers = obj["n_servers"].get<std::size_t>();
    if (obj.contains("flush_partial")) t.flush_partial = obj["flush_partial"].get<bool>();
    if (obj.contains("max_batch_wait") && !obj["max_batch_wait"].is_null())
        t.max_batch_wait = obj["max_batch_wait"].get<double>();
    t.service = detail::parse_service_spec(obj.at("service"));
    if (obj.contains("bins")) {
        const auto& bins = obj["bins"];
        if (bins.contains("edges")) {
            t.bins.edges = bins["edges"].get<std::vector<double>>();
        } else {
            t.bins.k = bins.at("k").get<std::size_t>();
        }
    }
    if (obj.contains("error")) {
        const auto& err = obj["error"];
        const std::string type = err.at("type").get<std::string>();
        if (type == "perfect") {
            t.error.kind = ErrorKind::perfect;
        } else if (type == "symmetric") {
            t.error.kind = ErrorKind::symmetric;
            t.error.p_error = err.at("p_error").get<double>();
        } else if (type == "confusion") {
            t.error.kind = ErrorKind::confusion;
            t.error.matrix_path = err.at("path").get<std::string>();
        } else {
            throw std::invalid_argument("error type must be perfect, symmetric or confusion");
        }
    }
    return t;
}

inline ExperimentSpec parse_experiment_spec(const nlohmann::json& obj) {
    ExperimentSpec spec;
    if (obj.contains("name")) spec.name = obj["name"].get<std::string>();
    if (obj.contains("seed")) spec.seed = obj["seed"].get<std::uint64_t>();
    if (obj.contains("replications")) spec.replications = obj["replications"].get<std::size_t>();
    if (obj.contains("output")) spec.output = obj["output"].get<std::string>();
    spec.base = parse_run_template(obj.at("base"));
    if (obj.contains("sweep")) {
        for (const auto& axis : obj["sweep"]) {
            SweepAxis a;
            a.param = axis.at("param").get<std::string>();
            a.values = axis.at("values").get<std::vector<double>>();
            spec.axes.push_back(std::move(a));
        }
    }
    validate_spec(spec);
    return spec;
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open experiment spec: " + path);
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return parse_experiment_spec(obj);
}

}  // namespace binbatch
