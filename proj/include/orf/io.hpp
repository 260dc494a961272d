#pragma once

// Delimiter-separated file formats: item tables, long-format responses,
// fit outputs, score tables, and prediction reports. Responses carry raw
// seconds on disk and natural-log times in memory. All numeric output uses
// round-trippable formatting so identical runs produce identical bytes.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orf/model.hpp"
#include "orf/mom.hpp"
#include "orf/scoring.hpp"
#include "orf/types.hpp"

namespace orf {

namespace detail {

inline std::string fmt_double(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

inline double parse_double(const std::string& field, const std::string& file, int line) {
    if (field == "inf") return std::numeric_limits<double>::infinity();
    if (field == "-inf") return -std::numeric_limits<double>::infinity();
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ValidationError(file + ":" + std::to_string(line) + ": malformed number '" +
                              field + "'");
    }
    return value;
}

inline long parse_int(const std::string& field, const std::string& file, int line) {
    long value = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ValidationError(file + ":" + std::to_string(line) + ": malformed integer '" +
                              field + "'");
    }
    return value;
}

inline std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path + " for reading");
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace detail

// items file: header `item_id,n_words`, one row per item.
inline std::vector<Item> parse_items_file(const std::string& path) {
    auto in = detail::open_input(path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
    ++line_no;
    if (detail::split_csv_line(line) != std::vector<std::string>{"item_id", "n_words"}) {
        throw ValidationError(path + ":1: expected header 'item_id,n_words'");
    }
    std::vector<Item> items;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 2 || fields[0].empty()) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed row");
        }
        const long n_words = detail::parse_int(fields[1], path, line_no);
        if (n_words < 1) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": n_words must be >= 1");
        }
        if (!seen.insert(fields[0]).second) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": duplicate item_id '" + fields[0] + "'");
        }
        items.push_back(Item{fields[0], static_cast<int>(n_words)});
    }
    if (items.empty()) throw ValidationError(path + ": no items");
    return items;
}

// responses file: header `individual_id,item_id,words_correct,time_seconds`.
// Absent (individual, item) rows are jointly missing pairs; times are stored
// as natural logs.
inline Dataset parse_responses_file(const std::string& path, const std::vector<Item>& items) {
    auto in = detail::open_input(path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
    ++line_no;
    if (detail::split_csv_line(line) !=
        std::vector<std::string>{"individual_id", "item_id", "words_correct", "time_seconds"}) {
        throw ValidationError(
            path + ":1: expected header 'individual_id,item_id,words_correct,time_seconds'");
    }
    std::map<std::string, int> item_index;
    for (std::size_t i = 0; i < items.size(); ++i) {
        item_index[items[i].id] = static_cast<int>(i);
    }

    Dataset data;
    data.items = items;
    std::map<std::string, std::size_t> individual_index;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 4 || fields[0].empty()) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed row");
        }
        const auto item_it = item_index.find(fields[1]);
        if (item_it == item_index.end()) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": unknown item_id '" + fields[1] + "'");
        }
        const long count = detail::parse_int(fields[2], path, line_no);
        const int n_words = items[static_cast<std::size_t>(item_it->second)].n_words;
        if (count < 0 || count > n_words) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": words_correct " +
                                  fields[2] + " outside [0, " + std::to_string(n_words) +
                                  "] for item " + fields[1]);
        }
        const double seconds = detail::parse_double(fields[3], path, line_no);
        if (!(seconds > 0.0) || !std::isfinite(seconds)) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": time_seconds must be positive");
        }
        auto [it, inserted] =
            individual_index.try_emplace(fields[0], data.individuals.size());
        if (inserted) data.individuals.push_back(Individual{fields[0], {}});
        auto& ind = data.individuals[it->second];
        if (!ind.observed
                 .emplace(item_it->second,
                          Observation{static_cast<int>(count), std::log(seconds)})
                 .second) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": duplicate response for individual '" + fields[0] +
                                  "', item '" + fields[1] + "'");
        }
    }
    data.validate();
    return data;
}

inline void write_items_csv(const std::filesystem::path& path, const std::vector<Item>& items) {
    auto out = detail::open_output(path);
    out << "item_id,n_words\n";
    for (const auto& item : items) {
        out << item.id << "," << item.n_words << "\n";
    }
}

inline void write_responses_csv(const std::filesystem::path& path, const Dataset& data) {
    auto out = detail::open_output(path);
    out << "individual_id,item_id,words_correct,time_seconds\n";
    for (const auto& ind : data.individuals) {
        for (const auto& [idx, obs] : ind.observed) {
            out << ind.id << "," << data.items[static_cast<std::size_t>(idx)].id << ","
                << obs.count << "," << detail::fmt_double(std::exp(obs.log_time)) << "\n";
        }
    }
}

inline void write_fit_csv(const std::filesystem::path& path, const std::vector<Item>& items,
                          const FitResult& fit) {
    auto out = detail::open_output(path);
    out << "item_id,n_words,a,b,alpha,beta\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        out << items[i].id << "," << items[i].n_words << ","
            << detail::fmt_double(fit.items[i].a) << "," << detail::fmt_double(fit.items[i].b)
            << "," << detail::fmt_double(fit.items[i].alpha) << ","
            << detail::fmt_double(fit.items[i].beta) << "\n";
    }
}

inline void write_population_csv(const std::filesystem::path& path, const FitResult& fit) {
    auto out = detail::open_output(path);
    out << "sigma2_tau,sigma_theta_tau,correlation\n";
    out << detail::fmt_double(fit.pop.sigma2_tau) << ","
        << detail::fmt_double(fit.pop.sigma_theta_tau) << ","
        << detail::fmt_double(fit.pop.correlation()) << "\n";
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<Item>& items,
                            const FitResult& fit) {
    auto out = detail::open_output(path);
    out << "iteration,m_draws,loglik,sigma2_tau,sigma_theta_tau";
    for (const auto& item : items) {
        out << ",a_" << item.id << ",b_" << item.id << ",alpha_" << item.id << ",beta_"
            << item.id;
    }
    out << "\n";
    for (const auto& rec : fit.diagnostics.trace) {
        out << rec.iteration << "," << rec.m_draws << "," << detail::fmt_double(rec.loglik)
            << "," << detail::fmt_double(rec.pop.sigma2_tau) << ","
            << detail::fmt_double(rec.pop.sigma_theta_tau);
        for (const auto& item : rec.items) {
            out << "," << detail::fmt_double(item.a) << "," << detail::fmt_double(item.b)
                << "," << detail::fmt_double(item.alpha) << ","
                << detail::fmt_double(item.beta);
        }
        out << "\n";
    }
}

// Sample versus model-implied item moments, on the count, raw-time, and
// log-time scales.
inline void write_moments_csv(const std::filesystem::path& path, const Dataset& data,
                              const FitResult& fit) {
    const SampleMoments moments = compute_moments(data);
    auto out = detail::open_output(path);
    out << "item_id,n_words,n_obs,missing_rate,"
        << "count_mean_sample,count_sd_sample,count_mean_model,count_sd_model,"
        << "time_mean_sample,time_sd_sample,time_mean_model,time_sd_model,"
        << "logtime_mean_sample,logtime_sd_sample,logtime_mean_model,logtime_sd_model\n";
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        const auto& m = moments.item[i];
        double time_sum = 0.0, time_sq = 0.0;
        int n = 0;
        for (const auto& ind : data.individuals) {
            const auto obs = ind.observed.find(static_cast<int>(i));
            if (obs == ind.observed.end()) continue;
            const double t_raw = std::exp(obs->second.log_time);
            time_sum += t_raw;
            time_sq += t_raw * t_raw;
            ++n;
        }
        const double time_mean = time_sum / n;
        const double time_sd = std::sqrt((time_sq - n * time_mean * time_mean) / (n - 1));
        const double missing_rate =
            1.0 - static_cast<double>(n) / static_cast<double>(data.individuals.size());
        out << data.items[i].id << "," << data.items[i].n_words << "," << m.n_obs << ","
            << detail::fmt_double(missing_rate) << "," << detail::fmt_double(m.ybar) << ","
            << detail::fmt_double(std::sqrt(m.s2_y)) << ","
            << detail::fmt_double(mean_count(fit.items[i])) << ","
            << detail::fmt_double(std::sqrt(var_count(fit.items[i]))) << ","
            << detail::fmt_double(time_mean) << "," << detail::fmt_double(time_sd) << ","
            << detail::fmt_double(mean_rawtime(fit.items[i], fit.pop)) << ","
            << detail::fmt_double(sd_rawtime(fit.items[i], fit.pop)) << ","
            << detail::fmt_double(m.tbar) << "," << detail::fmt_double(std::sqrt(m.s2_t))
            << "," << detail::fmt_double(fit.items[i].beta) << ","
            << detail::fmt_double(std::sqrt(var_logtime(fit.items[i], fit.pop))) << "\n";
    }
}

struct LoadedFit {
    std::vector<Item> items;
    FitResult fit;
};

// Read fit.csv and population.csv back from a fit directory.
inline LoadedFit read_fit_dir(const std::string& dir) {
    const std::string fit_path = dir + "/fit.csv";
    auto in = detail::open_input(fit_path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw ValidationError(fit_path + ": empty file");
    ++line_no;
    if (detail::split_csv_line(line) !=
        std::vector<std::string>{"item_id", "n_words", "a", "b", "alpha", "beta"}) {
        throw ValidationError(fit_path + ":1: unexpected header");
    }
    LoadedFit loaded;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 6) {
            throw ValidationError(fit_path + ":" + std::to_string(line_no) + ": malformed row");
        }
        ItemParams item;
        item.n_words = static_cast<int>(detail::parse_int(fields[1], fit_path, line_no));
        item.a = detail::parse_double(fields[2], fit_path, line_no);
        item.b = detail::parse_double(fields[3], fit_path, line_no);
        item.alpha = detail::parse_double(fields[4], fit_path, line_no);
        item.beta = detail::parse_double(fields[5], fit_path, line_no);
        item.validate();
        loaded.items.push_back(Item{fields[0], item.n_words});
        loaded.fit.items.push_back(item);
    }
    if (loaded.items.empty()) throw ValidationError(fit_path + ": no items");

    const std::string pop_path = dir + "/population.csv";
    auto pop_in = detail::open_input(pop_path);
    if (!std::getline(pop_in, line)) throw ValidationError(pop_path + ": empty file");
    if (!std::getline(pop_in, line)) throw ValidationError(pop_path + ": missing data row");
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw ValidationError(pop_path + ":2: malformed row");
    loaded.fit.pop.sigma2_tau = detail::parse_double(fields[0], pop_path, 2);
    loaded.fit.pop.sigma_theta_tau = detail::parse_double(fields[1], pop_path, 2);
    loaded.fit.pop.validate();
    return loaded;
}

inline void write_scores_csv(const std::filesystem::path& path, const ScoreTable& table) {
    auto out = detail::open_output(path);
    out << "individual_id,theta_hat,tau_hat,m_draws,seed,stream\n";
    for (const auto& row : table.rows) {
        out << row.individual_id << "," << detail::fmt_double(row.theta_hat) << ","
            << detail::fmt_double(row.tau_hat) << "," << table.m_draws << ","
            << table.seed.seed << "," << table.seed.stream_id << "\n";
    }
}

inline void write_prediction_csv(const std::filesystem::path& path,
                                 const std::vector<PredictionRow>& rows) {
    auto out = detail::open_output(path);
    out << "item_id,n_eval,rspe0_count,rspe1_count,rel_decrease_count,"
        << "rspe0_time,rspe1_time,rel_decrease_time\n";
    for (const auto& row : rows) {
        out << row.item_id << "," << row.n_eval << "," << detail::fmt_double(row.rspe0_count)
            << "," << detail::fmt_double(row.rspe1_count) << ","
            << detail::fmt_double(row.rel_decrease_count) << ","
            << detail::fmt_double(row.rspe0_time) << "," << detail::fmt_double(row.rspe1_time)
            << "," << detail::fmt_double(row.rel_decrease_time) << "\n";
    }
}

}  // namespace orf
