// petbench — command-line front end for the denoising benchmark.
//
// Verbs mirror the pipeline stages: simulate phantoms, train the configured
// models, evaluate slice metrics, summarize lesion SUV agreement, or run the
// whole benchmark and emit the report plus plot data. Every verb exits 0
// only when everything it was asked for completed.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "petbench/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace petbench;

namespace {

struct CliArgs {
    std::uint64_t seed = 0;  ///< 0 keeps the seed from the config file
    std::string config;
    std::string data;
    std::string out = ".";
};

void add_common(CLI::App* cmd, CliArgs& args, bool config_required = true) {
    cmd->add_option("--seed", args.seed, "override the experiment seed");
    auto* c = cmd->add_option("--config", args.config, "JSON configuration file")
                  ->check(CLI::ExistingFile);
    if (config_required) c->required();
    cmd->add_option("--data", args.data, "dataset root (overrides the config)");
    cmd->add_option("--out", args.out, "output directory");
}

experiment::ExperimentConfig load_experiment_config(const CliArgs& args) {
    auto cfg = experiment::experiment_config_from_json(
        experiment::detail::read_json_file(args.config));
    if (args.seed != 0) cfg.seed = args.seed;
    if (!args.data.empty()) cfg.dataset_root = args.data;
    return cfg;
}

// simulate accepts either a bare dataset-synthesis spec or a full experiment
// config (its "sim" section is used, so one file can drive every verb).
int cmd_simulate(const CliArgs& args) {
    const json j = experiment::detail::read_json_file(args.config);
    experiment::SimulateSpec spec;
    std::uint64_t seed = args.seed != 0 ? args.seed : 2024;
    if (j.contains("sim")) {
        auto cfg = experiment::experiment_config_from_json(j);
        if (args.seed != 0) cfg.seed = args.seed;
        spec = cfg.sim;
        seed = cfg.seed;
    } else {
        spec = experiment::simulate_spec_from_json(j);
    }
    phantom::EnsembleSpec es = spec.ensemble;
    if (es.seed == 0) es.seed = derive_seed(seed, "phantoms");

    const fs::path root = args.data.empty() ? fs::path(args.out) : fs::path(args.data);
    const auto specs = phantom::random_phantoms(es);
    const auto ds =
        phantom::make_paired_dataset(specs, spec.fractions, spec.splits, derive_seed(seed, "counts"));
    const auto manifest = io::save_dataset(ds, root);
    std::printf("wrote %zu studies (%zu fractions) to %s\n", ds.studies.size(),
                ds.fractions.size(), root.string().c_str());
    (void)manifest;
    return 0;
}

phantom::PhantomDataset load_volumes(const experiment::ExperimentConfig& cfg) {
    if (cfg.dataset_root.empty())
        throw ConfigError("this verb needs a dataset: pass --data or set dataset_root");
    return io::load_dataset(cfg.dataset_root);
}

int cmd_train(const CliArgs& args) {
    auto cfg = load_experiment_config(args);
    const auto vols = load_volumes(cfg);
    const auto pairs = phantom::to_image_pairs(vols, cfg.fraction);
    const fs::path runs = fs::path(args.out) / "runs";

    int failures = 0;
    for (const auto& ms : cfg.models) {
        if (ms.arch == "identity") {
            std::printf("%-20s untrained passthrough, nothing to do\n", ms.name.c_str());
            continue;
        }
        try {
            train::RunRecord rec;
            experiment::train_and_persist(ms, cfg, pairs, runs, &rec);
            std::printf("%-20s trained %zu epochs, best val ssim %.4f -> %s\n", ms.name.c_str(),
                        rec.epochs.size(), rec.best_val_ssim, rec.checkpoint_path.c_str());
        } catch (const std::exception& ex) {
            ++failures;
            std::fprintf(stderr, "%s: training failed: %s\n", ms.name.c_str(), ex.what());
        }
    }
    return failures == 0 ? 0 : 1;
}

/// Denoisers for every configured row, checkpoints loaded as needed.
std::map<std::string, metrics::Denoiser> assemble_denoisers(
    const experiment::ExperimentConfig& cfg, const fs::path& out, int* failures) {
    std::map<std::string, metrics::Denoiser> dens;
    dens["lt_vs_ft"] = experiment::identity_denoiser();
    if (cfg.gaussian_baseline)
        dens["gaussian"] = experiment::gaussian_denoiser(cfg.gaussian_sigma);
    for (const auto& ms : cfg.models) {
        try {
            dens[ms.name] = ms.arch == "identity"
                                ? experiment::identity_denoiser()
                                : experiment::model_denoiser(
                                      experiment::load_checkpoint(ms, out / "runs", cfg.seed));
        } catch (const std::exception& ex) {
            ++*failures;
            std::fprintf(stderr, "%s: %s\n", ms.name.c_str(), ex.what());
        }
    }
    return dens;
}

int cmd_evaluate(const CliArgs& args) {
    auto cfg = load_experiment_config(args);
    const auto vols = load_volumes(cfg);
    const auto test_pairs =
        phantom::to_image_pairs(vols, cfg.fraction).subset_copy(Split::Test);

    int failures = 0;
    for (auto& [name, den] : assemble_denoisers(cfg, args.out, &failures)) {
        try {
            const auto mr = metrics::evaluate_pairs(den, test_pairs, name);
            const fs::path file =
                fs::path(args.out) / ("evaluate_" + experiment::detail::safe_name(name) + ".json");
            experiment::detail::write_json_file(file, experiment::to_json(mr));
            std::printf("%-20s rel_rmse %+7.2f%%  rel_issim %+7.2f%%  -> %s\n", name.c_str(),
                        mr.rel_rmse.mean, mr.rel_issim.mean, file.string().c_str());
        } catch (const std::exception& ex) {
            ++failures;
            std::fprintf(stderr, "%s: evaluation failed: %s\n", name.c_str(), ex.what());
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_suv(const CliArgs& args) {
    auto cfg = load_experiment_config(args);
    const auto vols = load_volumes(cfg);

    int failures = 0;
    for (auto& [name, den] : assemble_denoisers(cfg, args.out, &failures)) {
        try {
            const auto suv = experiment::suv_agreement(vols, cfg.fraction, den);
            if (!suv.ok)
                throw ValueError("fewer than 3 pooled lesions in the test split");
            const json j{{"suv_max", experiment::to_json(suv.suv_max)},
                         {"suv_peak", experiment::to_json(suv.suv_peak)}};
            const fs::path file =
                fs::path(args.out) / ("suv_" + experiment::detail::safe_name(name) + ".json");
            experiment::detail::write_json_file(file, j);
            std::printf("%-20s suv_max bias %+0.4f (n=%zu)  -> %s\n", name.c_str(),
                        suv.suv_max.median_bias, suv.suv_max.n_lesions, file.string().c_str());
        } catch (const std::exception& ex) {
            ++failures;
            std::fprintf(stderr, "%s: SUV agreement failed: %s\n", name.c_str(), ex.what());
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_report(const CliArgs& args) {
    const auto cfg = load_experiment_config(args);
    const auto rep = experiment::run_experiment(cfg, args.out);
    experiment::emit_plot_data(rep, fs::path(args.out) / "plots");
    for (const auto& row : rep.rows) {
        if (row.ok)
            std::printf("%-20s rel_rmse %+7.2f%%  rel_issim %+7.2f%%%s\n", row.name.c_str(),
                        row.metrics.rel_rmse.mean, row.metrics.rel_issim.mean,
                        row.has_suv ? "  [suv]" : "");
        else
            std::printf("%-20s FAILED: %s\n", row.name.c_str(), row.error.c_str());
    }
    std::printf("report: %s\n", (fs::path(args.out) / "bench_report.json").string().c_str());
    return experiment::all_ok(rep) ? 0 : 1;
}

// Applies one sampled search point onto the model's training and loss
// configs. Integer-valued fields are rounded.
void apply_point(experiment::ModelSpec& ms, const std::map<std::string, double>& point) {
    for (const auto& [key, v] : point) {
        if (key == "max_lr") ms.tc.max_lr = v;
        else if (key == "epochs") ms.tc.epochs = static_cast<int>(std::lround(v));
        else if (key == "batch_size") ms.tc.batch_size = static_cast<int>(std::lround(v));
        else if (key == "patch_size") ms.tc.patch_size = static_cast<int>(std::lround(v));
        else if (key == "weight_decay") ms.tc.weight_decay = v;
        else if (key == "beta1") ms.tc.beta1 = v;
        else if (key == "beta2") ms.tc.beta2 = v;
        else if (key == "w_reconstruction") ms.lc.w_reconstruction = v;
        else if (key == "w_adversarial") ms.lc.w_adversarial = v;
        else if (key == "w_cycle") ms.lc.w_cycle = v;
        else if (key == "w_identity") ms.lc.w_identity = v;
        else if (key == "w_image_prior") ms.lc.w_image_prior = v;
        else throw ConfigError("unknown tuning parameter: " + key);
    }
}

// Config: {"model": {...}, "space": {"max_lr": [1e-4, 1e-2], ...},
//          "budget": 8, "fraction": 0.333, "seed": 2024, "dataset_root": "..."}
// Objective is the best validation SSIM of a fresh training run per point.
int cmd_tune(const CliArgs& args) {
    const json j = experiment::detail::read_json_file(args.config);
    auto ms = experiment::model_spec_from_json(j.at("model"));
    train::SearchSpace space;
    for (const auto& [key, range] : j.at("space").items())
        space.ranges[key] = {range.at(0).get<double>(), range.at(1).get<double>()};
    const int budget = j.at("budget").get<int>();
    const double fraction = j.value("fraction", 1.0 / 3.0);
    std::uint64_t seed = j.value("seed", std::uint64_t{2024});
    if (args.seed != 0) seed = args.seed;

    std::string root = j.value("dataset_root", std::string{});
    if (!args.data.empty()) root = args.data;
    if (root.empty()) throw ConfigError("tuning needs a dataset: pass --data or set dataset_root");
    const auto pairs = phantom::to_image_pairs(io::load_dataset(root), fraction);
    if (pairs.subset(Split::Val).empty())
        throw ConfigError("tuning needs a validation split to score points");

    int trial = 0;
    const auto result = train::tune(
        space, budget,
        [&](const std::map<std::string, double>& point) {
            experiment::ModelSpec trial_ms = ms;
            apply_point(trial_ms, point);
            torch::manual_seed(derive_seed(seed, ms.name + "/init"));
            auto g = models::make_generator(experiment::resolved_arch(trial_ms));
            train::TrainConfig tc = trial_ms.tc;
            if (tc.seed == 0) tc.seed = derive_seed(seed, ms.name + "/train");
            const auto rec = experiment::train_spec(g, trial_ms, tc, pairs);
            const double score =
                std::isfinite(rec.best_val_ssim) ? rec.best_val_ssim : -1.0;
            std::printf("trial %2d/%d: val ssim %.4f\n", ++trial, budget, score);
            std::fflush(stdout);
            return score;
        },
        seed);

    json out{{"budget", budget}, {"seed", seed}, {"model", experiment::to_json(ms)}};
    out["best"] = {{"point", result.best.point}, {"objective", result.best.objective}};
    out["trials"] = json::array();
    for (const auto& t : result.trials)
        out["trials"].push_back({{"point", t.point}, {"objective", t.objective}});
    const fs::path file = fs::path(args.out) / "tune_result.json";
    experiment::detail::write_json_file(file, out);
    std::printf("best objective %.4f -> %s\n", result.best.objective, file.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paired low/full-time PET denoising benchmark"};
    app.require_subcommand(1);

    CliArgs args;
    auto* simulate = app.add_subcommand("simulate", "synthesize a paired phantom dataset");
    auto* train = app.add_subcommand("train", "train every configured model");
    auto* evaluate = app.add_subcommand("evaluate", "slice metrics for models and baselines");
    auto* suv = app.add_subcommand("suv", "lesion SUV agreement for models and baselines");
    auto* report = app.add_subcommand("report", "full benchmark: simulate/train/evaluate/suv");
    auto* tune = app.add_subcommand("tune", "random-search hyperparameters by validation SSIM");
    for (auto* cmd : {simulate, train, evaluate, suv, report, tune}) add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(args);
        if (train->parsed()) return cmd_train(args);
        if (evaluate->parsed()) return cmd_evaluate(args);
        if (suv->parsed()) return cmd_suv(args);
        if (report->parsed()) return cmd_report(args);
        if (tune->parsed()) return cmd_tune(args);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "petbench: %s\n", ex.what());
        return 1;
    }
    return 1;
}
