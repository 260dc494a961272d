// Command-line front end: simulate, fit, score, predict-loo, and
// replicate-study pipelines over the delimiter-separated file formats.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orf/orf.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::pair<int, int>> parse_schedule(const std::string& text) {
    // "10x20,3x200" -> [(10 iterations, M=20), (3 iterations, M=200)]
    std::vector<std::pair<int, int>> schedule;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string part =
            text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const std::size_t x = part.find('x');
        if (x == std::string::npos) {
            throw orf::ValidationError("bad schedule entry '" + part +
                                       "' (expected ITERSxM, e.g. 10x20)");
        }
        try {
            schedule.emplace_back(std::stoi(part.substr(0, x)), std::stoi(part.substr(x + 1)));
        } catch (const std::exception&) {
            throw orf::ValidationError("bad schedule entry '" + part + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (schedule.empty()) throw orf::ValidationError("empty schedule");
    return schedule;
}

fs::path ensure_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw orf::IoError("cannot create output directory " + out);
    return dir;
}

void write_study_files(const fs::path& dir, const orf::StudyConfig& cfg,
                       const orf::StudyResult& result) {
    {
        std::ofstream out(dir / "study_armse.csv", std::ios::binary);
        out << "parameter,mom_sqrtn_ase,mom_sqrtn_armse,mom_excluded,"
            << "ml_sqrtn_ase,ml_sqrtn_armse,ml_excluded\n";
        const auto& names = orf::study_param_names();
        for (std::size_t p = 0; p < names.size(); ++p) {
            out << names[p];
            if (result.mom.present) {
                out << "," << orf::detail::fmt_double(result.mom.params[p].sqrtn_ase) << ","
                    << orf::detail::fmt_double(result.mom.params[p].sqrtn_armse) << ","
                    << result.mom.params[p].excluded;
            } else {
                out << ",,,";
            }
            if (result.mcem.present) {
                out << "," << orf::detail::fmt_double(result.mcem.params[p].sqrtn_ase) << ","
                    << orf::detail::fmt_double(result.mcem.params[p].sqrtn_armse) << ","
                    << result.mcem.params[p].excluded;
            } else {
                out << ",,,";
            }
            out << "\n";
        }
    }
    {
        std::ofstream out(dir / "study_correlations.csv", std::ios::binary);
        out << "method,cor_theta,cor_tau\n";
        if (result.mom.present) {
            out << "mom," << orf::detail::fmt_double(result.mom.mean_cor_theta) << ","
                << orf::detail::fmt_double(result.mom.mean_cor_tau) << "\n";
        }
        if (result.mcem.present) {
            out << "mcem," << orf::detail::fmt_double(result.mcem.mean_cor_theta) << ","
                << orf::detail::fmt_double(result.mcem.mean_cor_tau) << "\n";
        }
    }
    {
        std::ofstream out(dir / "study_meta.csv", std::ios::binary);
        out << "scenario,n,replicates_requested,replicates_run,replicates_failed\n";
        out << cfg.scenario << "," << cfg.n << "," << cfg.replicates << ","
            << result.replicates_run << "," << result.replicates_failed << "\n";
    }
}

void write_fit_outputs(const fs::path& dir, const orf::Dataset& data,
                       const orf::FitResult& fit) {
    orf::write_fit_csv(dir / "fit.csv", data.items, fit);
    orf::write_population_csv(dir / "population.csv", fit);
    orf::write_trace_csv(dir / "trace.csv", data.items, fit);
    orf::write_moments_csv(dir / "moments.csv", data, fit);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint oral-reading speed and accuracy model: simulation, "
                 "estimation, scoring, and leave-item-out prediction"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an INI config file; flags override");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
    int sim_scenario = 2;
    int sim_n = 0;
    double sim_missing = 0.0;
    std::uint64_t sim_seed = 0;
    std::string sim_out;
    sim_cmd->add_option("--scenario", sim_scenario, "item configuration (1 or 2)")
        ->check(CLI::IsMember({1, 2}))
        ->required();
    sim_cmd->add_option("--n", sim_n, "number of individuals")->required();
    sim_cmd->add_option("--missing-rate", sim_missing, "per-pair MCAR missing probability");
    sim_cmd->add_option("--seed", sim_seed, "random seed")->required();
    sim_cmd->add_option("--out", sim_out, "output directory")->required();

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "estimate model parameters from data");
    std::string fit_items, fit_responses, fit_method, fit_schedule = "10x20,3x200", fit_out;
    double fit_rel_tol = 1e-3;
    std::uint64_t fit_seed = 0;
    fit_cmd->add_option("--items", fit_items, "items CSV path")->required();
    fit_cmd->add_option("--responses", fit_responses, "responses CSV path")->required();
    fit_cmd->add_option("--method", fit_method, "estimation method")
        ->check(CLI::IsMember({"mom", "mcem"}))
        ->required();
    fit_cmd->add_option("--schedule", fit_schedule, "MCEM stages as ITERSxM,...");
    fit_cmd->add_option("--rel-tol", fit_rel_tol, "final-stage relative-change tolerance");
    fit_cmd->add_option("--seed", fit_seed, "random seed")->required();
    fit_cmd->add_option("--out", fit_out, "output directory")->required();

    // score
    auto* score_cmd = app.add_subcommand("score", "EAP latent-trait scores");
    std::string score_fit, score_responses, score_out;
    int score_m = 20;
    std::uint64_t score_seed = 0;
    score_cmd->add_option("--fit", score_fit, "fit output directory")->required();
    score_cmd->add_option("--responses", score_responses, "responses CSV path")->required();
    score_cmd->add_option("--m", score_m, "Monte Carlo draws per individual");
    score_cmd->add_option("--seed", score_seed, "random seed")->required();
    score_cmd->add_option("--out", score_out, "output directory")->required();

    // predict-loo
    auto* pred_cmd =
        app.add_subcommand("predict-loo", "leave-item-out prediction error report");
    std::string pred_fit, pred_responses, pred_out;
    int pred_m = 20;
    std::uint64_t pred_seed = 0;
    pred_cmd->add_option("--fit", pred_fit, "fit output directory")->required();
    pred_cmd->add_option("--responses", pred_responses, "responses CSV path")->required();
    pred_cmd->add_option("--m", pred_m, "Monte Carlo draws per individual");
    pred_cmd->add_option("--seed", pred_seed, "random seed")->required();
    pred_cmd->add_option("--out", pred_out, "output directory")->required();

    // replicate-study
    auto* study_cmd =
        app.add_subcommand("replicate-study", "repeated simulate/fit/score benchmark");
    int study_scenario = 2, study_n = 40, study_replicates = 100, study_score_m = 20;
    double study_missing = 0.0, study_rel_tol = 1e-3;
    std::string study_method = "both", study_schedule = "10x20,3x200", study_out;
    std::uint64_t study_seed = 0;
    study_cmd->add_option("--scenario", study_scenario, "item configuration (1 or 2)")
        ->check(CLI::IsMember({1, 2}))
        ->required();
    study_cmd->add_option("--n", study_n, "individuals per replicate")->required();
    study_cmd->add_option("--replicates", study_replicates, "number of replicates")->required();
    study_cmd->add_option("--method", study_method, "estimators to run")
        ->check(CLI::IsMember({"mom", "mcem", "both"}));
    study_cmd->add_option("--missing-rate", study_missing, "per-pair MCAR missing probability");
    study_cmd->add_option("--schedule", study_schedule, "MCEM stages as ITERSxM,...");
    study_cmd->add_option("--rel-tol", study_rel_tol, "final-stage tolerance");
    study_cmd->add_option("--score-m", study_score_m, "scoring draws per individual");
    study_cmd->add_option("--seed", study_seed, "random seed")->required();
    study_cmd->add_option("--out", study_out, "output directory")->required();

    try {
        app.parse(argc, argv);

        if (sim_cmd->parsed()) {
            const orf::Scenario scenario = orf::table1_scenario(sim_scenario);
            orf::SimConfig cfg;
            cfg.items = scenario.items;
            cfg.pop = scenario.pop;
            cfg.n = sim_n;
            cfg.missing_rate = sim_missing;
            cfg.seed = orf::RngStream{sim_seed, 0};
            orf::SimResult result = orf::simulate_dataset(cfg);
            // scenario times are minute-scale; files carry seconds
            for (auto& ind : result.data.individuals) {
                for (auto& [idx, obs] : ind.observed) obs.log_time += std::log(60.0);
            }
            const fs::path dir = ensure_out_dir(sim_out);
            orf::write_items_csv(dir / "items.csv", result.data.items);
            orf::write_responses_csv(dir / "responses.csv", result.data);
        } else if (fit_cmd->parsed()) {
            const auto items = orf::parse_items_file(fit_items);
            const orf::Dataset data = orf::parse_responses_file(fit_responses, items);
            orf::FitResult fit = orf::fit_mom(data);
            if (fit_method == "mcem") {
                orf::McemConfig cfg;
                cfg.schedule = parse_schedule(fit_schedule);
                cfg.rel_tol = fit_rel_tol;
                cfg.seed = orf::RngStream{fit_seed, 0};
                fit = orf::fit_mcem(data, fit, cfg);
            }
            write_fit_outputs(ensure_out_dir(fit_out), data, fit);
        } else if (score_cmd->parsed()) {
            const orf::LoadedFit loaded = orf::read_fit_dir(score_fit);
            const orf::Dataset data = orf::parse_responses_file(score_responses, loaded.items);
            const orf::ScoreTable table =
                orf::eap_scores(data, loaded.fit, score_m, orf::RngStream{score_seed, 0});
            orf::write_scores_csv(ensure_out_dir(score_out) / "scores.csv", table);
        } else if (pred_cmd->parsed()) {
            const orf::LoadedFit loaded = orf::read_fit_dir(pred_fit);
            const orf::Dataset data = orf::parse_responses_file(pred_responses, loaded.items);
            const orf::RngStream master{pred_seed, 0};
            std::vector<orf::PredictionRow> rows;
            for (std::size_t i = 0; i < data.items.size(); ++i) {
                const orf::ScoreTable loo =
                    orf::loo_scores(data, loaded.fit, static_cast<int>(i), pred_m,
                                    orf::substream(master, orf::hash_key(data.items[i].id)));
                rows.push_back(orf::predict(data, loaded.fit, static_cast<int>(i), loo));
            }
            orf::write_prediction_csv(ensure_out_dir(pred_out) / "prediction.csv", rows);
        } else if (study_cmd->parsed()) {
            orf::StudyConfig cfg;
            cfg.scenario = study_scenario;
            cfg.n = study_n;
            cfg.replicates = study_replicates;
            cfg.method = study_method == "mom"    ? orf::StudyMethod::Mom
                         : study_method == "mcem" ? orf::StudyMethod::Mcem
                                                  : orf::StudyMethod::Both;
            cfg.missing_rate = study_missing;
            cfg.score_m = study_score_m;
            cfg.seed = orf::RngStream{study_seed, 0};
            cfg.mcem.schedule = parse_schedule(study_schedule);
            cfg.mcem.rel_tol = study_rel_tol;
            const orf::StudyResult result = orf::run_replicate_study(cfg);
            for (const auto& failure : result.failures) {
                std::cerr << "warning: " << failure << "\n";
            }
            write_study_files(ensure_out_dir(study_out), cfg, result);
        }
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const orf::ValidationError& e) {
        std::cerr << "error [validation]: " << e.what() << "\n";
        return 2;
    } catch (const orf::NumericError& e) {
        std::cerr << "error [numeric]: " << e.what() << "\n";
        return 3;
    } catch (const orf::IoError& e) {
        std::cerr << "error [io]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
