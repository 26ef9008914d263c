#pragma once
// Request-length traces and the linear token-count -> service-time model
// used to drive trace-based simulations.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace binbatch {

struct LinearTimeModel {
    double slope = 0;      // time per generated token
    double intercept = 0;  // fixed per-request overhead
};

inline LinearTimeModel make_linear_time_model(double slope, double intercept) {
    if (!(slope > 0) || !std::isfinite(slope))
        throw std::invalid_argument("linear time model: slope must be positive");
    if (!(intercept >= 0) || !std::isfinite(intercept))
        throw std::invalid_argument("linear time model: intercept must be non-negative");
    return LinearTimeModel{slope, intercept};
}

struct TraceEntry {
    std::int64_t id = 0;
    std::size_t token_count = 0;
    std::optional<double> measured_time;
};

struct Trace {
    std::vector<TraceEntry> entries;
};

enum class TraceFormat { csv, jsonl };

namespace detail {

inline std::runtime_error trace_error(const std::string& name, std::size_t line,
                                      const std::string& what) {
    std::ostringstream msg;
    msg << name << " line " << line << ": " << what;
    return std::runtime_error(msg.str());
}

inline void validate_entry(TraceEntry& entry, const std::string& name, std::size_t line) {
    if (entry.token_count < 1) throw trace_error(name, line, "token_count must be >= 1");
    if (entry.measured_time && !(*entry.measured_time > 0))
        throw trace_error(name, line, "measured_time must be positive");
}

}  // namespace detail

// CSV columns: id,token_count[,measured_time]. A single leading header line
// is tolerated and skipped.
inline Trace parse_trace_csv(std::istream& in, const std::string& name) {
    Trace trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream split(line);
        std::string field;
        while (std::getline(split, field, ',')) fields.push_back(field);
        if (line_no == 1 && !fields.empty() &&
            fields[0].find_first_not_of("0123456789+- \t") != std::string::npos)
            continue;  // header row
        if (fields.size() < 2 || fields.size() > 3)
            throw detail::trace_error(name, line_no, "expected id,token_count[,measured_time]");
        TraceEntry entry;
        try {
            std::size_t used = 0;
            entry.id = std::stoll(fields[0], &used);
            if (used != fields[0].size()) throw std::invalid_argument("trailing characters");
            const long long tokens = std::stoll(fields[1], &used);
            if (used != fields[1].size()) throw std::invalid_argument("trailing characters");
            if (tokens < 0) throw std::invalid_argument("negative token count");
            entry.token_count = static_cast<std::size_t>(tokens);
            if (fields.size() == 3) {
                entry.measured_time = std::stod(fields[2], &used);
                if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
            }
        } catch (const std::exception&) {
            throw detail::trace_error(name, line_no, "malformed field in '" + line + "'");
        }
        detail::validate_entry(entry, name, line_no);
        trace.entries.push_back(entry);
    }
    if (trace.entries.empty()) throw std::runtime_error(name + ": no trace entries");
    return trace;
}

// JSON lines: {"id":1,"token_count":100,"measured_time":2.5}, one per line.
inline Trace parse_trace_jsonl(std::istream& in, const std::string& name) {
    Trace trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw detail::trace_error(name, line_no, e.what());
        }
        if (!obj.contains("id") || !obj.contains("token_count"))
            throw detail::trace_error(name, line_no, "missing id or token_count");
        TraceEntry entry;
        entry.id = obj["id"].get<std::int64_t>();
        const auto tokens = obj["token_count"].get<std::int64_t>();
        if (tokens < 0) throw detail::trace_error(name, line_no, "negative token count");
        entry.token_count = static_cast<std::size_t>(tokens);
        if (obj.contains("measured_time") && !obj["measured_time"].is_null())
            entry.measured_time = obj["measured_time"].get<double>();
        detail::validate_entry(entry, name, line_no);
        trace.entries.push_back(entry);
    }
    if (trace.entries.empty()) throw std::runtime_error(name + ": no trace entries");
    return trace;
}

inline Trace load_trace(const std::string& path, TraceFormat format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    return format == TraceFormat::csv ? parse_trace_csv(in, path) : parse_trace_jsonl(in, path);
}

// Ordinary least squares of measured_time on token_count.
inline LinearTimeModel fit_linear_model(const Trace& trace) {
    double sum_x = 0, sum_y = 0;
    std::size_t n = 0;
    for (const TraceEntry& e : trace.entries) {
        if (!e.measured_time) continue;
        sum_x += static_cast<double>(e.token_count);
        sum_y += *e.measured_time;
        ++n;
    }
    if (n < 2)
        throw std::invalid_argument("fit_linear_model: need at least 2 entries with measured times");
    const double mean_x = sum_x / static_cast<double>(n);
    const double mean_y = sum_y / static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (const TraceEntry& e : trace.entries) {
        if (!e.measured_time) continue;
        const double dx = static_cast<double>(e.token_count) - mean_x;
        sxx += dx * dx;
        sxy += dx * (*e.measured_time - mean_y);
    }
    if (sxx == 0)
        throw std::invalid_argument("fit_linear_model: all token counts equal, slope undefined");
    const double slope = sxy / sxx;
    const double intercept = mean_y - slope * mean_x;
    return make_linear_time_model(slope, intercept);
}

inline double tokens_to_time(const LinearTimeModel& model, std::size_t tokens) {
    if (tokens == 0) throw std::invalid_argument("tokens_to_time: token count must be >= 1");
    return model.slope * static_cast<double>(tokens) + model.intercept;
}

// Service times for every trace entry: through the model when one is given,
// otherwise the measured times (which must then all be present).
inline std::vector<double> service_times(const Trace& trace,
                                         const std::optional<LinearTimeModel>& model = {}) {
    std::vector<double> times;
    times.reserve(trace.entries.size());
    for (const TraceEntry& e : trace.entries) {
        if (model) {
            times.push_back(tokens_to_time(*model, e.token_count));
        } else if (e.measured_time) {
            times.push_back(*e.measured_time);
        } else {
            throw std::invalid_argument(
                "service_times: trace entry lacks measured_time and no time model was given");
        }
    }
    return times;
}

inline void save_model(const LinearTimeModel& model, std::ostream& out) {
    nlohmann::json obj{{"slope", model.slope}, {"intercept", model.intercept}};
    out << obj.dump(2) << "\n";
}

inline void save_model(const LinearTimeModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
    save_model(model, out);
}

inline LinearTimeModel load_model(std::istream& in) {
    nlohmann::json obj = nlohmann::json::parse(in);
    return make_linear_time_model(obj.at("slope").get<double>(),
                                  obj.at("intercept").get<double>());
}

inline LinearTimeModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    return load_model(in);
}

}  // namespace binbatch
