// Command-line front end: closed-form tables, single simulations, parameter
// sweeps, measured-vs-analytic checks, and linear time-model fitting.
//
// Exit codes: 0 success, 1 usage/config error, 2 comparison failure.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "binbatch/binbatch.hpp"

namespace {

// --out flag beats the spec's own output path beats $BINBATCH_OUT_DIR/<name>.
std::string resolve_output(const std::optional<std::string>& flag, const std::string& spec_output,
                           const std::string& default_name) {
    if (flag) return *flag;
    if (!spec_output.empty()) return spec_output;
    if (const char* dir = std::getenv("BINBATCH_OUT_DIR"))
        return std::string(dir) + "/" + default_name;
    return default_name;
}

nlohmann::json metrics_json(const binbatch::SimMetrics& m) {
    return nlohmann::json{{"throughput", m.throughput},
                          {"makespan", m.makespan},
                          {"latency_mean", m.latency_mean},
                          {"latency_p50", m.latency_p50},
                          {"latency_p99", m.latency_p99},
                          {"per_bin_batch_counts", m.per_bin_batch_counts},
                          {"server_busy_fraction", m.server_busy_fraction},
                          {"n_completed", m.n_completed}};
}

void scale_requests(binbatch::RunTemplate& base, double scale) {
    if (scale == 1.0) return;
    if (!(scale > 0)) throw std::invalid_argument("--scale must be positive");
    base.n_requests = static_cast<std::size_t>(static_cast<double>(base.n_requests) * scale);
}

int run_analyze(std::size_t batch_size, const std::vector<std::size_t>& bin_counts, double min_time,
                double max_time, std::optional<double> lambda, std::optional<double> epsilon,
                std::optional<double> rate, const std::optional<std::string>& out_flag) {
    std::ostringstream out;
    out << "k,expected_service_time,throughput,fraction_of_max";
    if (lambda) out << ",expected_latency";
    out << "\n";
    const double cap = binbatch::max_throughput(batch_size, min_time, max_time);
    for (std::size_t k : bin_counts) {
        const double service = binbatch::expected_service_time(batch_size, k, min_time, max_time);
        const double thr = binbatch::throughput(batch_size, k, min_time, max_time);
        out << k << ',' << service << ',' << thr << ',' << thr / cap;
        if (lambda)
            out << ',' << binbatch::expected_latency(batch_size, k, min_time, max_time, *lambda);
        out << "\n";
    }
    out << "max_throughput," << cap << "\n";
    if (epsilon)
        out << "min_bins_for_throughput(epsilon=" << *epsilon << "),"
            << binbatch::min_bins_for_throughput(batch_size, min_time, max_time, *epsilon) << "\n";
    if (rate) {
        out << "\nk,exponential_service_bound(rate=" << *rate << "),throughput_lower_bound\n";
        for (std::size_t k : bin_counts) {
            const double bound = binbatch::exponential_service_bound(batch_size, k, *rate);
            out << k << ',' << bound << ',' << static_cast<double>(batch_size) / bound << "\n";
        }
    }
    if (out_flag) {
        std::ofstream file(*out_flag);
        if (!file) throw std::runtime_error("cannot open output file: " + *out_flag);
        file << out.str();
    } else {
        std::cout << out.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"k-bin batching: simulator, analytics and experiment harness"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed_flag;
    std::optional<std::string> out_flag;
    double scale = 1.0;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--seed", seed_flag, "master seed override");
    app.add_option("--out", out_flag, "output file override");
    app.add_option("--scale", scale, "multiply n_requests by this factor")->capture_default_str();
    app.add_option("--jobs", jobs, "sweep worker pool size")->capture_default_str();

    auto* analyze = app.add_subcommand("analyze", "print closed-form throughput/latency tables");
    std::size_t an_batch = 0;
    std::vector<std::size_t> an_bins{1, 2, 4, 8};
    double an_min = 1.0, an_max = 20.0;
    std::optional<double> an_lambda, an_epsilon, an_rate;
    analyze->add_option("--batch-size,-B", an_batch, "batch size")->required()
        ->check(CLI::PositiveNumber);
    analyze->add_option("--k", an_bins, "bin counts")->delimiter(',');
    analyze->add_option("--min-time", an_min, "minimum service time")->capture_default_str();
    analyze->add_option("--max-time", an_max, "maximum service time")->capture_default_str();
    analyze->add_option("--lambda", an_lambda, "arrival rate (adds latency column)");
    analyze->add_option("--epsilon", an_epsilon, "throughput slack (adds min-bins row)");
    analyze->add_option("--mu", an_rate, "exponential rate (adds service-bound table)");

    auto* simulate = app.add_subcommand("simulate", "run one simulation from a JSON config");
    std::string sim_config;
    std::optional<std::string> sim_log;
    simulate->add_option("--config", sim_config, "run config JSON")->required()
        ->check(CLI::ExistingFile);
    simulate->add_option("--log", sim_log, "write per-request JSON-lines log here");

    auto* sweep = app.add_subcommand("sweep", "run an experiment spec and emit a CSV");
    std::string sweep_spec;
    sweep->add_option("--spec", sweep_spec, "experiment spec JSON")->required()
        ->check(CLI::ExistingFile);

    auto* compare = app.add_subcommand("compare", "check measured columns against analytic ones");
    std::string cmp_results;
    double cmp_tol_thr = 0.02, cmp_tol_lat = 0.05;
    compare->add_option("--results", cmp_results, "results CSV from sweep")->required()
        ->check(CLI::ExistingFile);
    compare->add_option("--tol-throughput", cmp_tol_thr, "relative throughput tolerance")
        ->capture_default_str();
    compare->add_option("--tol-latency", cmp_tol_lat, "relative latency tolerance")
        ->capture_default_str();

    auto* fit = app.add_subcommand("fit", "fit the linear token->time model to a trace");
    std::string fit_trace;
    std::string fit_format = "auto";
    fit->add_option("--trace", fit_trace, "trace file")->required()->check(CLI::ExistingFile);
    fit->add_option("--format", fit_format, "csv | jsonl | auto")->capture_default_str()
        ->check(CLI::IsMember({"csv", "jsonl", "auto"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(analyze)) {
            return run_analyze(an_batch, an_bins, an_min, an_max, an_lambda, an_epsilon, an_rate,
                               out_flag);
        }

        if (app.got_subcommand(simulate)) {
            std::ifstream in(sim_config);
            nlohmann::json obj = nlohmann::json::parse(in);
            binbatch::RunTemplate tmpl = binbatch::parse_run_template(obj);
            scale_requests(tmpl, scale);
            const binbatch::ResolvedWorkload workload = binbatch::resolve_workload(tmpl);
            const std::uint64_t seed = seed_flag.value_or(obj.value("seed", std::uint64_t{1}));
            const binbatch::SimResult result = binbatch::run_template(tmpl, workload, seed);
            if (sim_log) binbatch::write_request_log(result, *sim_log);
            nlohmann::json report = metrics_json(result.metrics);
            report["seed"] = seed;
            const std::string text = report.dump(2);
            if (out_flag) {
                std::ofstream file(*out_flag);
                if (!file) throw std::runtime_error("cannot open output file: " + *out_flag);
                file << text << "\n";
            } else {
                std::cout << text << "\n";
            }
            return 0;
        }

        if (app.got_subcommand(sweep)) {
            binbatch::ExperimentSpec spec = binbatch::load_experiment_spec(sweep_spec);
            if (seed_flag) spec.seed = *seed_flag;
            scale_requests(spec.base, scale);
            const std::string path = resolve_output(out_flag, spec.output, spec.name + ".csv");
            const std::vector<binbatch::PointResult> results = binbatch::run_experiment(spec, jobs);
            binbatch::write_results_csv(spec, results, path);
            std::cout << "wrote " << results.size() << " rows to " << path << "\n";
            return 0;
        }

        if (app.got_subcommand(compare)) {
            const binbatch::CompareReport report =
                binbatch::compare_results_file(cmp_results, cmp_tol_thr, cmp_tol_lat);
            for (const binbatch::CompareRow& row : report.rows) {
                std::printf("%s  %-10s %s  measured=%.6g analytic=%.6g rel_error=%.4f\n",
                            row.pass ? "PASS" : "FAIL", row.metric.c_str(), row.label.c_str(),
                            row.measured, row.analytic, row.rel_error);
            }
            std::printf("%zu checks, %zu failures\n", report.n_checked, report.n_failed);
            if (report.n_checked == 0) {
                std::fprintf(stderr, "compare: no rows carry analytic predictions\n");
                return 2;
            }
            return report.ok() ? 0 : 2;
        }

        if (app.got_subcommand(fit)) {
            binbatch::TraceFormat format = binbatch::TraceFormat::csv;
            if (fit_format == "jsonl" ||
                (fit_format == "auto" && fit_trace.size() > 6 &&
                 fit_trace.substr(fit_trace.size() - 6) == ".jsonl"))
                format = binbatch::TraceFormat::jsonl;
            const binbatch::Trace trace = binbatch::load_trace(fit_trace, format);
            const binbatch::LinearTimeModel model = binbatch::fit_linear_model(trace);
            if (out_flag) {
                binbatch::save_model(model, *out_flag);
            } else {
                binbatch::save_model(model, std::cout);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
