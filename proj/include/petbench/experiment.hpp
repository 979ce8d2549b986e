#pragma once

// End-to-end benchmark orchestration: obtain (or synthesize) a phantom
// dataset, train the requested denoisers, score them against the full-time
// reference in 2-D and through the lesion SUV agreement pipeline in 3-D, and
// assemble everything into one JSON report plus CSV plot data.
//
// Every row of the report is built independently: a model that fails to
// train or evaluate contributes an error row and the remaining rows are
// still produced.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "petbench/common.hpp"
#include "petbench/dataset.hpp"
#include "petbench/dataset_io.hpp"
#include "petbench/lesions.hpp"
#include "petbench/losses.hpp"
#include "petbench/metrics.hpp"
#include "petbench/models.hpp"
#include "petbench/phantom.hpp"
#include "petbench/stats.hpp"
#include "petbench/torch_bridge.hpp"
#include "petbench/train.hpp"
#include "petbench/volume.hpp"

namespace petbench::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON helpers. NaN is not representable in JSON; we store it as null and
// read null back as NaN so reports with empty validation splits round-trip.

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double num_at(const json& j, const std::string& key, double fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (it->is_null()) return std::numeric_limits<double>::quiet_NaN();
    return it->get<double>();
}

inline void write_json_file(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << j.dump(2) << '\n';
    if (!os) throw IoError("short write: " + path.string());
}

inline json read_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& ex) {
        throw IoError("malformed JSON in " + path.string() + ": " + ex.what());
    }
}

inline std::string file_hash_hex(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(buf.str());
    return hex.str();
}

inline std::string safe_name(const std::string& s) {
    std::string out;
    for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization of the pieces the report and config are assembled from.

inline json to_json(const train::TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"max_lr", c.max_lr},
                {"schedule", train::to_string(c.schedule)},
                {"plateau_epochs", c.plateau_epochs},
                {"tail_epochs", c.tail_epochs},
                {"plateau_factor", c.plateau_factor},
                {"plateau_patience", c.plateau_patience},
                {"weight_decay", c.weight_decay},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"augment_rotate", c.augment_rotate},
                {"augment_flip", c.augment_flip},
                {"patch_size", c.patch_size},
                {"seed", c.seed}};
}

inline train::TrainConfig train_config_from_json(const json& j,
                                                 train::TrainConfig c = train::TrainConfig{}) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_lr = j.value("max_lr", c.max_lr);
    if (j.contains("schedule")) c.schedule = train::schedule_from_string(j.at("schedule"));
    c.plateau_epochs = j.value("plateau_epochs", c.plateau_epochs);
    c.tail_epochs = j.value("tail_epochs", c.tail_epochs);
    c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.augment_rotate = j.value("augment_rotate", c.augment_rotate);
    c.augment_flip = j.value("augment_flip", c.augment_flip);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.seed = j.value("seed", c.seed);
    return c;
}

inline json to_json(const losses::LossConfig& c) {
    return json{{"mode", losses::to_string(c.mode)},
                {"w_adversarial", c.w_adversarial},
                {"w_reconstruction", c.w_reconstruction},
                {"w_cycle", c.w_cycle},
                {"w_identity", c.w_identity},
                {"w_image_prior", c.w_image_prior}};
}

inline losses::LossConfig loss_config_from_json(const json& j) {
    losses::GanMode mode = losses::GanMode::Supervised;
    if (j.contains("mode")) mode = losses::mode_from_string(j.at("mode"));
    losses::LossConfig c = losses::loss_preset(mode);
    c.w_adversarial = j.value("w_adversarial", c.w_adversarial);
    c.w_reconstruction = j.value("w_reconstruction", c.w_reconstruction);
    c.w_cycle = j.value("w_cycle", c.w_cycle);
    c.w_identity = j.value("w_identity", c.w_identity);
    c.w_image_prior = j.value("w_image_prior", c.w_image_prior);
    return c;
}

inline json to_json(const metrics::Aggregate& a) {
    return json{{"mean", a.mean},
                {"median", a.median},
                {"iqr", a.iqr},
                {"ci", json::array({a.ci_lo, a.ci_hi})}};
}

inline metrics::Aggregate aggregate_from_json(const json& j) {
    metrics::Aggregate a;
    a.mean = j.at("mean");
    a.median = j.at("median");
    a.iqr = j.at("iqr");
    a.ci_lo = j.at("ci").at(0);
    a.ci_hi = j.at("ci").at(1);
    return a;
}

inline json to_json(const metrics::MetricReport& r) {
    json pairs = json::array();
    for (const auto& p : r.pairs)
        pairs.push_back(json{{"study_id", p.study_id},
                             {"slice_index", p.slice_index},
                             {"rmse", p.rmse},
                             {"issim", p.issim},
                             {"rel_rmse", p.rel_rmse},
                             {"rel_issim", p.rel_issim},
                             {"degenerate_range", p.degenerate_range}});
    return json{{"model", r.model_tag},
                {"fraction", r.fraction},
                {"pairs", std::move(pairs)},
                {"aggregates",
                 json{{"rmse", to_json(r.rmse)},
                      {"issim", to_json(r.issim)},
                      {"rel_rmse", to_json(r.rel_rmse)},
                      {"rel_issim", to_json(r.rel_issim)},
                      {"n_excluded", r.n_excluded}}}};
}

inline metrics::MetricReport metric_report_from_json(const json& j) {
    metrics::MetricReport r;
    r.model_tag = j.at("model");
    r.fraction = j.at("fraction");
    for (const json& pj : j.at("pairs")) {
        metrics::PairMetrics p;
        p.study_id = pj.at("study_id");
        p.slice_index = pj.at("slice_index");
        p.rmse = pj.at("rmse");
        p.issim = pj.at("issim");
        p.rel_rmse = pj.at("rel_rmse");
        p.rel_issim = pj.at("rel_issim");
        p.degenerate_range = pj.at("degenerate_range");
        r.pairs.push_back(std::move(p));
    }
    const json& agg = j.at("aggregates");
    r.rmse = aggregate_from_json(agg.at("rmse"));
    r.issim = aggregate_from_json(agg.at("issim"));
    r.rel_rmse = aggregate_from_json(agg.at("rel_rmse"));
    r.rel_issim = aggregate_from_json(agg.at("rel_issim"));
    r.n_excluded = agg.at("n_excluded");
    return r;
}

/// The SUV agreement schema reports 1 - R^2 (smaller is better), matching the
/// headline figure of merit used for lesion quantitation.
inline json to_json(const lesions::AgreementStats& s) {
    return json{{"one_minus_r2", 1.0 - s.r_squared},
                {"median_bias", s.median_bias},
                {"iqr", s.iqr},
                {"ci", json::array({s.ci_lo, s.ci_hi})},
                {"n_lesions", s.n_lesions}};
}

inline lesions::AgreementStats agreement_from_json(const json& j) {
    lesions::AgreementStats s;
    s.r_squared = 1.0 - j.at("one_minus_r2").get<double>();
    s.median_bias = j.at("median_bias");
    s.iqr = j.at("iqr");
    s.ci_lo = j.at("ci").at(0);
    s.ci_hi = j.at("ci").at(1);
    s.n_lesions = j.at("n_lesions");
    return s;
}

inline json to_json(const train::RunRecord& r) {
    json epochs = json::array();
    for (const auto& e : r.epochs)
        epochs.push_back(json{{"train_loss", e.train_loss},
                              {"val_ssim", detail::num(e.val_ssim)},
                              {"lr", e.lr},
                              {"terms", e.terms},
                              {"disc_terms", e.disc_terms}});
    return json{{"train", to_json(r.train_cfg)},
                {"loss", to_json(r.loss_cfg)},
                {"epochs", std::move(epochs)},
                {"best_val_ssim", detail::num(r.best_val_ssim)},
                {"best_epoch", r.best_epoch},
                {"wall_seconds", r.wall_seconds},
                {"checkpoint_path", r.checkpoint_path}};
}

inline train::RunRecord run_record_from_json(const json& j) {
    train::RunRecord r;
    r.train_cfg = train_config_from_json(j.at("train"));
    r.loss_cfg = loss_config_from_json(j.at("loss"));
    for (const json& ej : j.at("epochs")) {
        train::EpochLog e;
        e.train_loss = ej.at("train_loss");
        e.val_ssim = detail::num_at(ej, "val_ssim", std::numeric_limits<double>::quiet_NaN());
        e.lr = ej.at("lr");
        e.terms = ej.at("terms").get<std::map<std::string, double>>();
        e.disc_terms = ej.at("disc_terms").get<std::map<std::string, double>>();
        r.epochs.push_back(std::move(e));
    }
    r.best_val_ssim = detail::num_at(j, "best_val_ssim", std::numeric_limits<double>::quiet_NaN());
    r.best_epoch = j.at("best_epoch");
    r.wall_seconds = j.at("wall_seconds");
    r.checkpoint_path = j.at("checkpoint_path");
    return r;
}

// ---------------------------------------------------------------------------
// Configuration.

/// One benchmark entry: an architecture preset plus the trainer and loss
/// setup used to fit it. `arch` may also be "identity", which skips training
/// and evaluates the unmodified low-time input (useful as a pipeline oracle).
struct ModelSpec {
    std::string name;
    std::string arch = "resnet_ed";
    json arch_overrides = json::object();
    int disc_base_channels = 64;  ///< PatchGAN width for the GAN modes
    train::TrainConfig tc;
    losses::LossConfig lc;
};

inline json to_json(const ModelSpec& ms) {
    return json{{"name", ms.name},
                {"arch", ms.arch},
                {"arch_overrides", ms.arch_overrides},
                {"disc_base_channels", ms.disc_base_channels},
                {"train", to_json(ms.tc)},
                {"loss", to_json(ms.lc)}};
}

inline ModelSpec model_spec_from_json(const json& j) {
    ModelSpec ms;
    ms.name = j.at("name");
    ms.arch = j.value("arch", ms.name);
    ms.arch_overrides = j.value("arch_overrides", json::object());
    ms.disc_base_channels = j.value("disc_base_channels", ms.disc_base_channels);
    train::TrainConfig base;
    if (j.contains("train_preset")) base = train::train_preset(j.at("train_preset"));
    ms.tc = train_config_from_json(j.value("train", json::object()), base);
    ms.lc = loss_config_from_json(j.value("loss", json::object()));
    return ms;
}

/// Synthesis settings used when no dataset root is given.
struct SimulateSpec {
    phantom::EnsembleSpec ensemble;
    std::vector<double> fractions{1.0 / 3.0};
    phantom::SplitCounts splits{8, 2, 2};
};

inline json to_json(const SimulateSpec& s) {
    const auto& e = s.ensemble;
    return json{{"ensemble",
                 json{{"n_phantoms", e.n_phantoms},
                      {"nz", e.nz},
                      {"ny", e.ny},
                      {"nx", e.nx},
                      {"spacing", json{{"dx", e.spacing.dx}, {"dy", e.spacing.dy}, {"dz", e.spacing.dz}}},
                      {"background_suv", e.background_suv},
                      {"min_spheres", e.min_spheres},
                      {"max_spheres", e.max_spheres},
                      {"min_diameter_mm", e.min_diameter_mm},
                      {"max_diameter_mm", e.max_diameter_mm},
                      {"min_uptake_suv", e.min_uptake_suv},
                      {"max_uptake_suv", e.max_uptake_suv},
                      {"counts_per_suv_per_second", e.counts_per_suv_per_second},
                      {"frame_seconds", e.frame_seconds},
                      {"seed", e.seed},
                      {"id_prefix", e.id_prefix}}},
                {"fractions", s.fractions},
                {"splits",
                 json{{"train", s.splits.train}, {"val", s.splits.val}, {"test", s.splits.test}}}};
}

inline SimulateSpec simulate_spec_from_json(const json& j) {
    SimulateSpec s;
    if (j.contains("ensemble")) {
        const json& ej = j.at("ensemble");
        auto& e = s.ensemble;
        e.n_phantoms = ej.value("n_phantoms", e.n_phantoms);
        e.nz = ej.value("nz", e.nz);
        e.ny = ej.value("ny", e.ny);
        e.nx = ej.value("nx", e.nx);
        if (ej.contains("spacing")) {
            const json& sp = ej.at("spacing");
            e.spacing.dx = sp.value("dx", e.spacing.dx);
            e.spacing.dy = sp.value("dy", e.spacing.dy);
            e.spacing.dz = sp.value("dz", e.spacing.dz);
        }
        e.background_suv = ej.value("background_suv", e.background_suv);
        e.min_spheres = ej.value("min_spheres", e.min_spheres);
        e.max_spheres = ej.value("max_spheres", e.max_spheres);
        e.min_diameter_mm = ej.value("min_diameter_mm", e.min_diameter_mm);
        e.max_diameter_mm = ej.value("max_diameter_mm", e.max_diameter_mm);
        e.min_uptake_suv = ej.value("min_uptake_suv", e.min_uptake_suv);
        e.max_uptake_suv = ej.value("max_uptake_suv", e.max_uptake_suv);
        e.counts_per_suv_per_second =
            ej.value("counts_per_suv_per_second", e.counts_per_suv_per_second);
        e.frame_seconds = ej.value("frame_seconds", e.frame_seconds);
        e.seed = ej.value("seed", e.seed);
        e.id_prefix = ej.value("id_prefix", e.id_prefix);
    }
    s.fractions = j.value("fractions", s.fractions);
    if (j.contains("splits")) {
        const json& sj = j.at("splits");
        s.splits.train = sj.value("train", s.splits.train);
        s.splits.val = sj.value("val", s.splits.val);
        s.splits.test = sj.value("test", s.splits.test);
    }
    return s;
}

/// Everything one benchmark run needs. When `dataset_root` is empty the
/// dataset is synthesized per `sim` (and cached next to the outputs).
struct ExperimentConfig {
    int schema_version = 1;
    std::uint64_t seed = 2024;
    double fraction = 1.0 / 3.0;
    std::string dataset_root;
    SimulateSpec sim;
    std::vector<ModelSpec> models;
    bool gaussian_baseline = true;
    double gaussian_sigma = 2.5;
    bool with_suv = true;
};

inline void validate(const ExperimentConfig& cfg) {
    if (cfg.schema_version != 1)
        throw ConfigError("unsupported experiment schema version " +
                          std::to_string(cfg.schema_version));
    if (!(cfg.fraction > 0.0) || cfg.fraction > 1.0)
        throw ConfigError("time fraction must lie in (0, 1]");
    if (!(cfg.gaussian_sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
    std::set<std::string> names{"lt_vs_ft", "gaussian"};
    for (const auto& ms : cfg.models) {
        if (ms.name.empty()) throw ConfigError("model entries need a name");
        if (!names.insert(ms.name).second)
            throw ConfigError("duplicate or reserved model name: " + ms.name);
    }
}

inline json to_json(const ExperimentConfig& cfg) {
    json models = json::array();
    for (const auto& ms : cfg.models) models.push_back(to_json(ms));
    return json{{"schema_version", cfg.schema_version},
                {"seed", cfg.seed},
                {"fraction", cfg.fraction},
                {"dataset_root", cfg.dataset_root},
                {"sim", to_json(cfg.sim)},
                {"models", std::move(models)},
                {"gaussian_baseline", cfg.gaussian_baseline},
                {"gaussian_sigma", cfg.gaussian_sigma},
                {"with_suv", cfg.with_suv}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.schema_version = j.value("schema_version", cfg.schema_version);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.fraction = j.value("fraction", cfg.fraction);
    cfg.dataset_root = j.value("dataset_root", cfg.dataset_root);
    if (j.contains("sim")) cfg.sim = simulate_spec_from_json(j.at("sim"));
    for (const json& mj : j.value("models", json::array()))
        cfg.models.push_back(model_spec_from_json(mj));
    cfg.gaussian_baseline = j.value("gaussian_baseline", cfg.gaussian_baseline);
    cfg.gaussian_sigma = j.value("gaussian_sigma", cfg.gaussian_sigma);
    cfg.with_suv = j.value("with_suv", cfg.with_suv);
    validate(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Report.

struct ModelRow {
    std::string name;
    std::string run_id;
    bool ok = false;
    std::string error;
    bool trained = false;
    metrics::MetricReport metrics;
    bool has_suv = false;
    lesions::AgreementStats suv_max;
    lesions::AgreementStats suv_peak;
    lesions::PairedSuv paired;  ///< per-lesion values backing the SUV plots
    train::RunRecord run;
};

struct BenchReport {
    int schema_version = 1;
    std::uint64_t seed = 0;
    double fraction = 0.0;
    std::string environment;
    std::string manifest_hash;
    std::vector<ModelRow> rows;  ///< rows[0] is always the lt_vs_ft baseline
};

inline bool all_ok(const BenchReport& rep) {
    for (const auto& row : rep.rows)
        if (!row.ok) return false;
    return true;
}

inline const ModelRow* find_row(const BenchReport& rep, const std::string& name) {
    for (const auto& row : rep.rows)
        if (row.name == name) return &row;
    return nullptr;
}

inline json to_json(const ModelRow& row) {
    json j{{"name", row.name}, {"run_id", row.run_id}, {"ok", row.ok}, {"trained", row.trained}};
    if (!row.ok) {
        j["error"] = row.error;
        return j;
    }
    j["metrics"] = to_json(row.metrics);
    if (row.has_suv) {
        j["suv"] = json{{"suv_max", to_json(row.suv_max)}, {"suv_peak", to_json(row.suv_peak)}};
        j["paired"] = json{{"max_reference", row.paired.max_reference},
                           {"max_candidate", row.paired.max_candidate},
                           {"peak_reference", row.paired.peak_reference},
                           {"peak_candidate", row.paired.peak_candidate}};
    }
    if (row.trained) j["run"] = to_json(row.run);
    return j;
}

inline ModelRow model_row_from_json(const json& j) {
    ModelRow row;
    row.name = j.at("name");
    row.run_id = j.at("run_id");
    row.ok = j.at("ok");
    row.trained = j.at("trained");
    if (!row.ok) {
        row.error = j.value("error", "");
        return row;
    }
    row.metrics = metric_report_from_json(j.at("metrics"));
    if (j.contains("suv")) {
        row.has_suv = true;
        row.suv_max = agreement_from_json(j.at("suv").at("suv_max"));
        row.suv_peak = agreement_from_json(j.at("suv").at("suv_peak"));
        const json& pj = j.at("paired");
        row.paired.max_reference = pj.at("max_reference").get<std::vector<double>>();
        row.paired.max_candidate = pj.at("max_candidate").get<std::vector<double>>();
        row.paired.peak_reference = pj.at("peak_reference").get<std::vector<double>>();
        row.paired.peak_candidate = pj.at("peak_candidate").get<std::vector<double>>();
    }
    if (row.trained) row.run = run_record_from_json(j.at("run"));
    return row;
}

inline json to_json(const BenchReport& rep) {
    json rows = json::array();
    for (const auto& row : rep.rows) rows.push_back(to_json(row));
    return json{{"schema_version", rep.schema_version},
                {"seed", rep.seed},
                {"fraction", rep.fraction},
                {"environment", rep.environment},
                {"manifest_hash", rep.manifest_hash},
                {"rows", std::move(rows)}};
}

inline BenchReport bench_report_from_json(const json& j) {
    BenchReport rep;
    rep.schema_version = j.at("schema_version");
    rep.seed = j.at("seed");
    rep.fraction = j.at("fraction");
    rep.environment = j.at("environment");
    rep.manifest_hash = j.at("manifest_hash");
    for (const json& rj : j.at("rows")) rep.rows.push_back(model_row_from_json(rj));
    return rep;
}

inline std::string environment_string() {
    std::ostringstream os;
#ifdef TORCH_VERSION
    os << "libtorch " << TORCH_VERSION;
#else
    os << "libtorch unknown";
#endif
#ifdef __VERSION__
    os << "; compiler " << __VERSION__;
#endif
    return os.str();
}

// ---------------------------------------------------------------------------
// Building blocks.

/// Resolves an architecture preset plus per-field overrides from the config.
inline models::ArchConfig resolved_arch(const ModelSpec& ms) {
    models::ArchConfig cfg = models::arch_preset(ms.arch);
    for (const auto& [key, value] : ms.arch_overrides.items()) {
        if (key == "in_channels") cfg.in_channels = value.get<int>();
        else if (key == "out_channels") cfg.out_channels = value.get<int>();
        else if (key == "base_channels") cfg.base_channels = value.get<int>();
        else if (key == "n_blocks") cfg.n_blocks = value.get<int>();
        else if (key == "n_downs") cfg.n_downs = value.get<int>();
        else if (key == "unet_depth") cfg.unet_depth = value.get<int>();
        else if (key == "embed_dim") cfg.embed_dim = value.get<int>();
        else if (key == "n_rstb") cfg.n_rstb = value.get<int>();
        else if (key == "layers_per_rstb") cfg.layers_per_rstb = value.get<int>();
        else if (key == "window") cfg.window = value.get<int>();
        else if (key == "n_heads") cfg.n_heads = value.get<int>();
        else if (key == "mlp_ratio") cfg.mlp_ratio = value.get<double>();
        else if (key == "residual_output") cfg.residual_output = value.get<bool>();
        else if (key == "suv_scale") cfg.suv_scale = value.get<double>();
        else if (key == "zero_init_head") cfg.zero_init_head = value.get<bool>();
        else throw ConfigError("unknown architecture override: " + key);
    }
    models::validate(cfg);
    return cfg;
}

/// Wraps a trained generator as a slice denoiser. The holder is captured by
/// value; module holders share the underlying parameters.
inline metrics::Denoiser model_denoiser(models::DenoiserModel g) {
    return [g](const Image2D& lt) mutable {
        torch::NoGradGuard ng;
        g->eval();
        return bridge::to_image(g->forward(bridge::to_tensor(lt)));
    };
}

inline metrics::Denoiser identity_denoiser() {
    return [](const Image2D& lt) { return lt; };
}

inline metrics::Denoiser gaussian_denoiser(double sigma) {
    return [sigma](const Image2D& lt) { return metrics::gaussian_baseline(lt, sigma); };
}

/// Convenience wrapper: score a generator on a set of slice pairs.
inline metrics::MetricReport evaluate_model(models::DenoiserModel g,
                                            std::span<const ImagePair> pairs,
                                            const std::string& tag) {
    return metrics::evaluate_pairs(model_denoiser(std::move(g)), pairs, tag);
}

/// Applies a slice denoiser to every plane of a low-time volume.
inline PETVolume denoise_volume(const PETVolume& lt, const metrics::Denoiser& den) {
    PETVolume out = lt;
    for (int z = 0; z < lt.nz; ++z) {
        const Image2D d = den(slice_of(lt, z));
        if (d.h != lt.ny || d.w != lt.nx)
            throw ShapeError("denoiser changed the slice shape at plane " + std::to_string(z));
        for (int y = 0; y < lt.ny; ++y)
            for (int x = 0; x < lt.nx; ++x) out.at(z, y, x) = d.at(y, x);
    }
    return out;
}

struct SuvOutcome {
    bool ok = false;  ///< false when the test split yields fewer than 3 lesions
    lesions::AgreementStats suv_max;
    lesions::AgreementStats suv_peak;
    lesions::PairedSuv paired;
};

/// Lesion SUV agreement pooled over every test-split study: lesions are
/// segmented and measured on the full-time reference, transplanted onto the
/// denoised low-time volume, and the paired values are pooled before the
/// Bland-Altman / regression summary.
inline SuvOutcome suv_agreement(const phantom::PhantomDataset& ds, double fraction,
                                const metrics::Denoiser& den) {
    lesions::PairedSuv pooled;
    for (const auto& rec : ds.studies) {
        if (rec.split != Split::Test) continue;
        auto it = rec.lt_by_fraction.find(fraction);
        if (it == rec.lt_by_fraction.end())
            throw ConfigError("study " + rec.spec.id + " lacks the requested time fraction");
        const PETVolume cand = denoise_volume(it->second, den);
        const auto res = lesions::suv_pipeline(rec.ft, cand);
        auto append = [](std::vector<double>& dst, const std::vector<double>& src) {
            dst.insert(dst.end(), src.begin(), src.end());
        };
        append(pooled.max_reference, res.paired.max_reference);
        append(pooled.max_candidate, res.paired.max_candidate);
        append(pooled.peak_reference, res.paired.peak_reference);
        append(pooled.peak_candidate, res.paired.peak_candidate);
    }
    SuvOutcome out;
    out.paired = std::move(pooled);
    if (out.paired.max_reference.size() < 3) return out;  // regression needs >= 3 lesions
    out.ok = true;
    out.suv_max = lesions::agreement(out.paired.max_reference, out.paired.max_candidate);
    out.suv_peak = lesions::agreement(out.paired.peak_reference, out.paired.peak_candidate);
    return out;
}

/// Trains one benchmark entry with the trainer its loss mode calls for.
/// The generator must already be constructed (so callers control seeding).
inline train::RunRecord train_spec(models::DenoiserModel& g, const ModelSpec& ms,
                                   const train::TrainConfig& tc, const ImagePairDataset& data) {
    using losses::GanMode;
    switch (ms.lc.mode) {
        case GanMode::Supervised:
            return train::train_supervised(g, data, tc, ms.lc);
        case GanMode::Pix2pix: {
            models::ArchConfig dc = models::arch_preset("patchgan");
            dc.in_channels = 2;
            dc.base_channels = ms.disc_base_channels;
            auto d = models::make_discriminator(dc);
            return train::train_pix2pix(g, d, data, tc, ms.lc);
        }
        default: {  // the CycleGAN family
            models::ArchConfig dc = models::arch_preset("patchgan");
            dc.in_channels = 1;
            dc.base_channels = ms.disc_base_channels;
            auto f = models::make_generator(resolved_arch(ms));
            auto d_ft = models::make_discriminator(dc);
            auto d_lt = models::make_discriminator(dc);
            return train::train_cyclegan(g, f, d_ft, d_lt, data, tc, ms.lc);
        }
    }
    throw ConfigError("unhandled loss mode");
}

// ---------------------------------------------------------------------------
// Orchestration.

inline std::string make_run_id(const std::string& name, std::uint64_t seed) {
    return detail::safe_name(name) + "-s" + std::to_string(seed);
}

/// Loads the dataset named by the config, or synthesizes one into
/// `out_dir`/data and reuses it on later runs with the same output directory.
inline phantom::PhantomDataset obtain_dataset(const ExperimentConfig& cfg, const fs::path& out_dir,
                                              std::string* manifest_hash = nullptr) {
    const fs::path root =
        cfg.dataset_root.empty() ? out_dir / "data" : fs::path(cfg.dataset_root);
    if (!fs::exists(root / "manifest.json")) {
        if (!cfg.dataset_root.empty())
            throw IoError("dataset root has no manifest.json: " + root.string());
        phantom::EnsembleSpec es = cfg.sim.ensemble;
        if (es.seed == 0) es.seed = derive_seed(cfg.seed, "phantoms");
        const auto specs = phantom::random_phantoms(es);
        const auto ds = phantom::make_paired_dataset(specs, cfg.sim.fractions, cfg.sim.splits,
                                                     derive_seed(cfg.seed, "counts"));
        io::save_dataset(ds, root);
    }
    if (manifest_hash) *manifest_hash = detail::file_hash_hex(root / "manifest.json");
    return io::load_dataset(root);
}

namespace detail {

inline ModelRow scored_row(const std::string& name, const metrics::Denoiser& den,
                           std::span<const ImagePair> test_pairs,
                           const phantom::PhantomDataset& vols, const ExperimentConfig& cfg) {
    ModelRow row;
    row.name = name;
    row.run_id = make_run_id(name, cfg.seed);
    row.metrics = metrics::evaluate_pairs(den, test_pairs, name);
    if (cfg.with_suv) {
        const SuvOutcome suv = suv_agreement(vols, cfg.fraction, den);
        row.has_suv = suv.ok;
        row.suv_max = suv.suv_max;
        row.suv_peak = suv.suv_peak;
        row.paired = suv.paired;
    }
    row.ok = true;
    return row;
}

}  // namespace detail

/// Trains one config entry and persists the run (checkpoint + record) under
/// `runs_dir` unless it is empty. Returns the trained generator.
inline models::DenoiserModel train_and_persist(const ModelSpec& ms, const ExperimentConfig& cfg,
                                               const ImagePairDataset& pairs,
                                               const fs::path& runs_dir, train::RunRecord* record) {
    torch::manual_seed(derive_seed(cfg.seed, ms.name + "/init"));
    auto g = models::make_generator(resolved_arch(ms));
    train::TrainConfig tc = ms.tc;
    if (tc.seed == 0) tc.seed = derive_seed(cfg.seed, ms.name + "/train");
    train::RunRecord rec = train_spec(g, ms, tc, pairs);
    if (!runs_dir.empty()) {
        const fs::path dir = runs_dir / make_run_id(ms.name, cfg.seed);
        fs::create_directories(dir);
        const fs::path ckpt = dir / "checkpoint.pt";
        torch::save(g, ckpt.string());
        rec.checkpoint_path = ckpt.string();
        detail::write_json_file(dir / "run.json", json{{"spec", to_json(ms)},
                                                       {"seed", cfg.seed},
                                                       {"fraction", cfg.fraction},
                                                       {"record", to_json(rec)}});
    }
    if (record) *record = std::move(rec);
    return g;
}

/// Rebuilds a generator from its persisted run directory.
inline models::DenoiserModel load_checkpoint(const ModelSpec& ms, const fs::path& runs_dir,
                                             std::uint64_t seed) {
    const fs::path ckpt = runs_dir / make_run_id(ms.name, seed) / "checkpoint.pt";
    if (!fs::exists(ckpt))
        throw IoError("no checkpoint for model " + ms.name + " at " + ckpt.string() +
                      "; train it first");
    auto g = models::make_generator(resolved_arch(ms));
    torch::load(g, ckpt.string());
    return g;
}

/// Runs the whole benchmark: dataset, baselines, every configured model,
/// one report. Each row is isolated — a failure becomes an error row and the
/// remaining rows are still computed. Writes `bench_report.json` under
/// `out_dir` and returns the report.
inline BenchReport run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
    validate(cfg);
    fs::create_directories(out_dir);

    BenchReport rep;
    rep.seed = cfg.seed;
    rep.fraction = cfg.fraction;
    rep.environment = environment_string();

    const phantom::PhantomDataset vols = obtain_dataset(cfg, out_dir, &rep.manifest_hash);
    const ImagePairDataset pairs = phantom::to_image_pairs(vols, cfg.fraction);
    const std::vector<ImagePair> test_pairs = pairs.subset_copy(Split::Test);

    auto guarded = [&](const std::string& name, auto&& build) {
        ModelRow row;
        try {
            row = build();
        } catch (const std::exception& ex) {
            row = ModelRow{};
            row.name = name;
            row.run_id = make_run_id(name, cfg.seed);
            row.ok = false;
            row.error = ex.what();
        }
        rep.rows.push_back(std::move(row));
    };

    guarded("lt_vs_ft", [&] {
        return detail::scored_row("lt_vs_ft", identity_denoiser(), test_pairs, vols, cfg);
    });
    if (cfg.gaussian_baseline)
        guarded("gaussian", [&] {
            return detail::scored_row("gaussian", gaussian_denoiser(cfg.gaussian_sigma),
                                      test_pairs, vols, cfg);
        });

    for (const ModelSpec& ms : cfg.models)
        guarded(ms.name, [&]() -> ModelRow {
            metrics::Denoiser den;
            ModelRow row;
            if (ms.arch == "identity") {
                den = identity_denoiser();
            } else {
                train::RunRecord rec;
                auto g = train_and_persist(ms, cfg, pairs, out_dir / "runs", &rec);
                den = model_denoiser(std::move(g));
                row.trained = true;
                row.run = std::move(rec);
            }
            ModelRow scored = detail::scored_row(ms.name, den, test_pairs, vols, cfg);
            scored.trained = row.trained;
            scored.run = std::move(row.run);
            return scored;
        });

    detail::write_json_file(out_dir / "bench_report.json", to_json(rep));
    return rep;
}

// ---------------------------------------------------------------------------
// Plot data.

/// Writes the per-lesion CSVs backing the two standard figures: Bland-Altman
/// (mean vs difference) and the orig-vs-denoised scatter with its fitted
/// line. One pair of files per successful row and SUV metric; a row without
/// lesions still gets header-only files plus a warning on stderr. Returns
/// the written paths.
inline std::vector<fs::path> emit_plot_data(const BenchReport& rep, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<fs::path> written;

    auto write_csv = [&](const fs::path& path, const std::string& header,
                         const std::vector<std::string>& rows) {
        std::ofstream os(path);
        if (!os) throw IoError("cannot open for writing: " + path.string());
        os << header << '\n';
        for (const auto& r : rows) os << r << '\n';
        if (!os) throw IoError("short write: " + path.string());
        written.push_back(path);
    };
    auto fmt = [](double v) {
        std::ostringstream os;
        os << std::setprecision(17) << v;
        return os.str();
    };

    for (const ModelRow& row : rep.rows) {
        if (!row.ok) continue;
        const std::string base = detail::safe_name(row.name);
        const struct {
            const char* tag;
            const std::vector<double>& ref;
            const std::vector<double>& cand;
        } series[2] = {{"suv_max", row.paired.max_reference, row.paired.max_candidate},
                       {"suv_peak", row.paired.peak_reference, row.paired.peak_candidate}};

        for (const auto& s : series) {
            const std::size_t n = s.ref.size();
            std::vector<std::string> ba_rows, sc_rows;
            if (n == 0) {
                std::cerr << "warning: no lesions for row '" << row.name << "' (" << s.tag
                          << "); writing header-only plot data\n";
            } else {
                const double nan = std::numeric_limits<double>::quiet_NaN();
                stats::OlsFit fit;
                fit.slope = fit.intercept = fit.r_squared = nan;
                if (n >= 3) fit = stats::ols_fit(s.ref, s.cand);
                for (std::size_t i = 0; i < n; ++i) {
                    const double mean = 0.5 * (s.ref[i] + s.cand[i]);
                    const double diff = s.cand[i] - s.ref[i];
                    ba_rows.push_back(fmt(mean) + "," + fmt(diff));
                    sc_rows.push_back(fmt(s.ref[i]) + "," + fmt(s.cand[i]) + "," +
                                      fmt(fit.slope) + "," + fmt(fit.intercept) + "," +
                                      fmt(fit.r_squared));
                }
            }
            write_csv(dir / ("bland_altman_" + base + "_" + s.tag + ".csv"), "mean,difference",
                      ba_rows);
            write_csv(dir / ("scatter_" + base + "_" + s.tag + ".csv"),
                      "reference,candidate,slope,intercept,r_squared", sc_rows);
        }
    }
    return written;
}

}  // namespace petbench::experiment
