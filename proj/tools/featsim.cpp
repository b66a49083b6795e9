// featsim command-line entry point.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "featsim/checkpoint.hpp"
#include "featsim/dataset.hpp"
#include "featsim/error.hpp"
#include "featsim/gradcheck.hpp"
#include "featsim/label_map.hpp"
#include "featsim/metrics.hpp"
#include "featsim/training.hpp"
#include "featsim/unet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace featsim;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kConfig = 2;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    fs::path out;
    std::size_t count = 100;
    std::uint64_t seed = 0;
    std::size_t size = 64;
    std::string difficulty = "medium";
    std::size_t folds = 5;
    bool preview = false;
};

int cmd_gen_data(const GenDataArgs& a) {
    if (a.size == 0 || a.size % 8 != 0)
        throw ConfigError("--size must be a positive multiple of 8, got " + std::to_string(a.size));
    if (a.count < a.folds) throw ConfigError("--count must be at least --folds");
    const auto m = generate_dataset(a.out, a.count, a.seed, a.size, a.size, difficulty_preset(a.difficulty), a.folds,
                                    a.preview);
    std::cout << "wrote " << m.size() << " samples to " << a.out.string() << "\n";
    return kOk;
}

// ------------------------------------------------------------------ train

struct RunConfig {
    fs::path manifest;
    fs::path out_dir;
    TrainConfig train;
    std::size_t depth = 3;
    std::size_t base_channels = 8;
};

template <class T>
void take(const json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{"manifest",   "out_dir", "lr",         "epochs",      "noise_p",
                                               "xi",         "batch_size", "seed",    "k_folds",     "joint_train",
                                               "no_refine",  "no_noise", "dice_eps", "depth",       "base_channels"};
    return keys;
}

RunConfig load_run_config(const fs::path& path) {
    RunConfig rc;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& item : j.items()) {
        const auto& keys = config_keys();
        if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
            throw ConfigError("unknown config key '" + item.key() + "'");
    }
    std::string s;
    if (j.contains("manifest")) {
        take(j, "manifest", s);
        rc.manifest = s;
    }
    if (j.contains("out_dir")) {
        take(j, "out_dir", s);
        rc.out_dir = s;
    }
    auto& t = rc.train;
    take(j, "lr", t.lr);
    take(j, "epochs", t.epochs);
    take(j, "noise_p", t.noise_p);
    take(j, "xi", t.xi);
    take(j, "batch_size", t.batch_size);
    take(j, "seed", t.seed);
    take(j, "k_folds", t.k_folds);
    take(j, "joint_train", t.joint_train);
    take(j, "no_refine", t.no_refine);
    take(j, "no_noise", t.no_noise);
    take(j, "dice_eps", t.dice_eps);
    take(j, "depth", rc.depth);
    take(j, "base_channels", rc.base_channels);
    return rc;
}

json to_json(const RunConfig& rc, const std::string& mode, const std::vector<std::size_t>& folds) {
    const auto& t = rc.train;
    return json{{"manifest", rc.manifest.string()},
                {"out_dir", rc.out_dir.string()},
                {"mode", mode},
                {"folds", folds},
                {"lr", t.lr},
                {"epochs", t.epochs},
                {"noise_p", t.noise_p},
                {"xi", t.xi},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"k_folds", t.k_folds},
                {"joint_train", t.joint_train},
                {"no_refine", t.no_refine},
                {"no_noise", t.no_noise},
                {"dice_eps", t.dice_eps},
                {"depth", rc.depth},
                {"base_channels", rc.base_channels}};
}

struct TrainArgs {
    std::optional<fs::path> config;
    std::optional<fs::path> manifest;
    std::optional<fs::path> out;
    std::string mode = "full";
    bool no_refine = false;
    bool no_noise = false;
    std::optional<float> xi;
    std::optional<std::size_t> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> fold;
};

std::vector<std::uint8_t> organ_classes(std::size_t k) {
    std::vector<std::uint8_t> out;
    for (std::size_t c = 1; c < k; ++c) out.push_back(static_cast<std::uint8_t>(c));
    return out;
}

void print_summary(const std::string& label, const metrics::ClassReport& r) {
    std::cout << label << ": DSC " << metrics::format_mean_std(r.overall.dsc, 1, 100.0) << " %  ASSD "
              << metrics::format_mean_std(r.overall.assd, 2) << " mm\n";
}

UNet load_required(const fs::path& dir, const std::string& stage) {
    if (!checkpoint::exists(dir)) throw ConfigError("missing " + stage + " checkpoint at " + dir.string());
    return UNet::load(dir);
}

// Runs one of the single-stage modes for one fold, reusing checkpoints of
// earlier stages from the fold directory.
void run_single_stage(const std::string& mode, const DatasetManifest& ds, const std::vector<Sample>& all,
                      std::size_t fold, const UNetConfig& arch, const RunConfig& rc) {
    const fs::path dir = rc.out_dir / ("fold_" + std::to_string(fold));
    std::vector<Sample> train, test;
    const auto test_ids = fold_members(ds, fold);
    for (auto i : fold_complement(ds, fold)) train.push_back(all[i]);
    for (auto i : test_ids) test.push_back(all[i]);
    const metrics::Spacing spacing{ds.spacing_y, ds.spacing_x};
    LossCurve curve;

    std::optional<UNet> evaluated;
    if (mode == "stage1") {
        std::vector<LabelMap> masks;
        for (const auto& s : train) masks.push_back(s.mask);
        fs::create_directories(dir);
        train_stage1(masks, arch, rc.train, &curve).save(dir / "n_gt");
    } else if (mode == "stage2") {
        const UNet n_gt = load_required(dir / "n_gt", "stage-1 (n_gt)");
        auto r = train_stage2(train, n_gt, arch, rc.train, &curve);
        r.n_ct.save(dir / "n_ct_stage2");
        r.fsm.save(dir / "fsm");
        evaluated = std::move(r.n_ct);
    } else {
        const UNet n_gt = load_required(dir / "n_gt", "stage-1 (n_gt)");
        const UNet n_ct = load_required(dir / "n_ct_stage2", "stage-2 (n_ct_stage2)");
        UNet refined = train_stage3_refine(n_ct, n_gt, train, rc.train, &curve);
        refined.save(dir / "n_ct_stage3");
        evaluated = std::move(refined);
    }
    curve.write_csv(dir / ("losses_" + mode + ".csv"));
    if (evaluated) {
        const auto report = metrics::aggregate(evaluate_network(*evaluated, test, test_ids, spacing),
                                               organ_classes(arch.num_classes));
        metrics::write_report_csv(report, dir / ("metrics_" + mode + ".csv"));
        print_summary("fold " + std::to_string(fold) + " " + mode, report);
    }
    std::cout << "fold " << fold << " " << mode << " done: " << dir.string() << "\n";
}

int cmd_train(const TrainArgs& a) {
    static const std::vector<std::string> modes{"full", "stage1", "stage2", "stage3", "joint", "plain"};
    if (std::find(modes.begin(), modes.end(), a.mode) == modes.end()) throw ConfigError("unknown --mode " + a.mode);

    RunConfig rc = a.config ? load_run_config(*a.config) : RunConfig{};
    if (a.manifest) rc.manifest = *a.manifest;
    if (a.out) rc.out_dir = *a.out;
    if (a.no_refine) rc.train.no_refine = true;
    if (a.no_noise) rc.train.no_noise = true;
    if (a.xi) rc.train.xi = *a.xi;
    if (a.epochs) rc.train.epochs = *a.epochs;
    if (a.seed) rc.train.seed = *a.seed;
    if (a.mode == "joint") rc.train.joint_train = true;
    if (rc.manifest.empty()) throw ConfigError("no dataset manifest given (--manifest or config 'manifest')");
    if (rc.out_dir.empty()) throw ConfigError("no output directory given (--out or config 'out_dir')");
    if (!fs::exists(rc.manifest)) throw ConfigError("manifest not found: " + rc.manifest.string());

    try {
        rc.train.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    const DatasetManifest ds = load_manifest(rc.manifest);
    if (rc.train.k_folds != ds.k_folds)
        throw ConfigError("k_folds " + std::to_string(rc.train.k_folds) + " differs from the dataset split (" +
                          std::to_string(ds.k_folds) + ")");
    const UNetConfig arch{1, ds.num_classes, rc.depth, rc.base_channels};
    try {
        arch.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    if (ds.height % (std::size_t{1} << arch.depth) != 0 || ds.width % (std::size_t{1} << arch.depth) != 0)
        throw ConfigError("image size is not divisible by 2^depth");

    std::vector<std::size_t> folds;
    if (a.fold) {
        if (*a.fold >= ds.k_folds) throw ConfigError("--fold out of range");
        folds = {*a.fold};
    } else {
        for (std::size_t f = 0; f < ds.k_folds; ++f) folds.push_back(f);
    }

    fs::create_directories(rc.out_dir);
    std::ofstream(rc.out_dir / "config.json") << to_json(rc, a.mode, folds).dump(2) << "\n";

    if (a.mode == "stage1" || a.mode == "stage2" || a.mode == "stage3") {
        const auto all = load_samples(ds);
        for (auto f : folds) run_single_stage(a.mode, ds, all, f, arch, rc);
        return kOk;
    }

    PipelineOptions opt;
    opt.mode = a.mode == "plain" ? PipelineMode::plain : PipelineMode::full;
    opt.folds = folds;
    opt.out_dir = rc.out_dir;
    const auto art = run_pipeline(ds, arch, rc.train, opt);
    print_summary(a.mode, art.report);
    if (opt.mode == PipelineMode::full && !rc.train.no_refine) print_summary("stage 2 (no refine)", art.report_stage2);
    return kOk;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::optional<fs::path> checkpoint;
    fs::path manifest;
    std::optional<std::size_t> fold;
    std::optional<fs::path> out;
    bool identity = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
    if (!a.identity && !a.checkpoint) throw ConfigError("--checkpoint is required unless --identity is given");
    if (a.checkpoint && !checkpoint::exists(*a.checkpoint))
        throw ConfigError("checkpoint not found: " + a.checkpoint->string());
    if (!fs::exists(a.manifest)) throw ConfigError("manifest not found: " + a.manifest.string());
    const DatasetManifest ds = load_manifest(a.manifest);

    std::vector<std::size_t> ids;
    if (a.fold) {
        if (*a.fold >= ds.k_folds) throw ConfigError("--fold out of range");
        ids = fold_members(ds, *a.fold);
    } else {
        for (std::size_t i = 0; i < ds.size(); ++i) ids.push_back(i);
    }
    const auto samples = load_samples(ds, ids);
    const metrics::Spacing spacing{ds.spacing_y, ds.spacing_x};
    const auto classes = organ_classes(ds.num_classes);

    std::vector<metrics::CaseResult> cases;
    if (a.identity) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto c = metrics::evaluate_case(samples[i].mask, samples[i].mask, spacing, classes, ds.num_classes, ids[i]);
            cases.insert(cases.end(), c.begin(), c.end());
        }
    } else {
        const UNet net = UNet::load(*a.checkpoint);
        const auto& cfg = net.config();
        if (cfg.num_classes != ds.num_classes)
            throw ConfigError("checkpoint predicts " + std::to_string(cfg.num_classes) + " classes, dataset has " +
                              std::to_string(ds.num_classes));
        if (cfg.in_channels != 1 && cfg.in_channels != ds.num_classes)
            throw ConfigError("checkpoint input channels match neither images nor one-hot masks");
        const std::size_t div = std::size_t{1} << cfg.depth;
        if (ds.height % div != 0 || ds.width % div != 0)
            throw ConfigError("image size is not divisible by 2^depth of the checkpoint");
        if (cfg.in_channels == 1) {
            cases = evaluate_network(net, samples, ids, spacing);
        } else {
            // Mask autoencoder: reconstruct the clean one-hot masks.
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const LabelMap pred = predict(net, one_hot(samples[i].mask, ds.num_classes));
                auto c = metrics::evaluate_case(pred, samples[i].mask, spacing, classes, ds.num_classes, ids[i]);
                cases.insert(cases.end(), c.begin(), c.end());
            }
        }
    }
    const auto report = metrics::aggregate(std::move(cases), classes);
    if (a.out) {
        fs::create_directories(*a.out);
        metrics::write_report_csv(report, *a.out / "metrics.csv");
    } else {
        std::cout << metrics::report_csv(report);
    }
    print_summary("evaluate", report);
    return kOk;
}

// -------------------------------------------------------------- gradcheck

struct GradcheckArgs {
    std::uint64_t seed = 0;
    std::size_t seeds = 5;
    std::vector<std::size_t> sizes{4, 8};
    std::optional<std::string> corrupt;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    gradcheck::SuiteOptions opt;
    opt.seed = a.seed;
    opt.seeds = a.seeds;
    opt.sizes = a.sizes;
    if (a.corrupt) {
        const auto ops = gradcheck::suite_ops();
        if (std::find(ops.begin(), ops.end(), *a.corrupt) == ops.end())
            throw ConfigError("--corrupt names an unknown op: " + *a.corrupt);
        opt.corrupt_op = a.corrupt;
        opt.check.corrupt_factor = 1.01;
    }
    bool all = true;
    std::printf("%-26s %5s %14s  %s\n", "op", "runs", "max_rel_error", "status");
    for (const auto& e : gradcheck::run_suite(opt)) {
        std::printf("%-26s %5zu %14.3e  %s\n", e.op.c_str(), e.runs, e.max_rel_error, e.passed ? "PASS" : "FAIL");
        all = all && e.passed;
    }
    std::printf("%s (tolerance %.0e)\n", all ? "all ops pass" : "gradient mismatch detected", opt.check.tolerance);
    return all ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"featsim: ground-truth feature similarity training for segmentation networks"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--count", gen.count, "Number of samples");
    g->add_option("--seed", gen.seed, "Global dataset seed");
    g->add_option("--size", gen.size, "Image side length (multiple of 8)");
    g->add_option("--difficulty", gen.difficulty, "easy | medium | hard");
    g->add_option("--folds", gen.folds, "Cross-validation folds");
    g->add_flag("--preview", gen.preview, "Also write PGM previews");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train networks with k-fold cross validation");
    t->add_option("--config", tr.config, "JSON run configuration");
    t->add_option("--manifest", tr.manifest, "Dataset manifest (overrides config)");
    t->add_option("--out", tr.out, "Output directory (overrides config)");
    t->add_option("--mode", tr.mode, "full | stage1 | stage2 | stage3 | joint | plain");
    t->add_flag("--no-refine", tr.no_refine, "Skip stage 3");
    t->add_flag("--no-noise", tr.no_noise, "Train the mask autoencoder on clean masks");
    t->add_option("--xi", tr.xi, "Weight of the feature similarity term");
    t->add_option("--epochs", tr.epochs, "Epochs per stage");
    t->add_option("--seed", tr.seed, "Training seed");
    t->add_option("--fold", tr.fold, "Run a single fold");

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory");
    e->add_option("--manifest", ev.manifest, "Dataset manifest")->required();
    e->add_option("--fold", ev.fold, "Evaluate only this fold's samples");
    e->add_option("--out", ev.out, "Directory for metrics.csv (default: stdout)");
    e->add_flag("--identity", ev.identity, "Score ground truth against itself");

    GradcheckArgs gc;
    auto* c = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    c->add_option("--seed", gc.seed, "Base seed");
    c->add_option("--seeds", gc.seeds, "Seeds per op");
    c->add_option("--sizes", gc.sizes, "Spatial sizes, even and at most 8")->delimiter(',');
    c->add_option("--corrupt", gc.corrupt, "Test hook: perturb the analytic gradient of this op");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? kOk : kConfig;
    }

    try {
        if (*g) return cmd_gen_data(gen);
        if (*t) return cmd_train(tr);
        if (*e) return cmd_evaluate(ev);
        if (*c) return cmd_gradcheck(gc);
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kConfig;
    } catch (const PreconditionError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kConfig;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kRuntime;
    }
    return kOk;
}
