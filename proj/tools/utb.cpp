// Command-line front end: gen, build-dataset, train, inspect, eval.
// Exit codes: 0 success, 2 usage/config error, 3 incompatible or malformed
// input, 4 runtime abort.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "utb/pipeline.hpp"

namespace fs = std::filesystem;
using Real = float;

namespace {

struct GenArgs {
    std::string config;
    std::string out;
    std::string truth;
    std::string depth;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_gen(const GenArgs& a) {
    utb::SynthConfig cfg = utb::load_synth_config_file(a.config);
    if (a.seed_set) cfg.rng_seed = a.seed;
    const fs::path scan = a.out;
    const fs::path truth = a.truth.empty() ? utb::sidecar_path(scan, ".truth") : fs::path(a.truth);
    const fs::path depth = a.depth.empty() ? utb::sidecar_path(scan, ".depth") : fs::path(a.depth);
    const utb::GenResult r = utb::gen_scan_files(cfg, scan, truth, depth);
    std::cout << "seed " << r.seed << " flaws " << r.flaw_count << " bytes " << r.scan_bytes
              << "\n";
    return 0;
}

struct BuildDatasetArgs {
    std::string scans;
    std::string out;
    std::uint64_t size = 0;
    std::uint64_t train = 0;
    double balance = 0.25;
    double sub_fraction = 0.2;
    std::uint64_t seed = 1;
};

int run_build_dataset(const BuildDatasetArgs& a) {
    if (a.train == 0 || a.train >= a.size)
        throw utb::ConfigError("--train must be positive and smaller than --size");
    utb::DatasetPlan plan;
    plan.train_count = a.train;
    plan.cv_count = a.size - a.train;
    plan.positive_fraction = a.balance;
    plan.sub_fraction = a.sub_fraction;
    plan.validate();
    const auto entries = utb::load_scan_list(a.scans);
    const utb::Dataset ds = utb::build_dataset_from_files(entries, plan, a.seed);
    auto out = utb::open_output(a.out);
    utb::write_dataset(ds, out);
    const utb::DatasetCounts t = plan.train_counts();
    const utb::DatasetCounts c = plan.cv_counts();
    std::cout << "train " << ds.train.size() << " (flaw " << t.qualifying << " sub "
              << t.sub_threshold << " free " << t.flaw_free << ") cv " << ds.cv.size()
              << " (flaw " << c.qualifying << " sub " << c.sub_threshold << " free "
              << c.flaw_free << ") seed " << ds.seed << "\n";
    return 0;
}

struct TrainArgs {
    std::string dataset;
    std::string preset = "ci_small";
    std::string out;
    std::string state_out;
    std::string resume;
    std::string optimizer = "adam";
    double lr = 1e-3;
    std::uint64_t batch = 64;
    std::uint64_t epochs = 30;
    double l2 = 1e-4;
    double dropout = 0.5;
    double target_cv = 2.0;
    std::uint64_t seed = 1;
};

int run_train(const TrainArgs& a) {
    utb::ModelPreset preset;
    if (!utb::preset_from(a.preset, preset))
        throw utb::ConfigError("unknown preset: " + a.preset);
    utb::TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.batch_size = static_cast<std::uint32_t>(a.batch);
    cfg.epochs = static_cast<std::uint32_t>(a.epochs);
    cfg.l2_lambda = a.l2;
    cfg.seed = a.seed;
    cfg.target_cv_accuracy = a.target_cv;
    if (a.optimizer == "adam") cfg.optimizer = utb::nn::OptKind::adam;
    else if (a.optimizer == "sgd") cfg.optimizer = utb::nn::OptKind::sgd;
    else throw utb::ConfigError("unknown optimizer: " + a.optimizer);

    auto in = utb::open_input(a.dataset);
    const utb::Dataset ds = utb::read_dataset(in);

    utb::nn::Model<Real> model = utb::build_model<Real>(preset, a.dropout);
    utb::nn::TrainState<Real> resume_state;
    const utb::nn::TrainState<Real>* resume = nullptr;
    if (!a.resume.empty()) {
        model = utb::load_model_file<Real>(a.resume, &resume_state);
        resume = &resume_state;
    }

    const auto result = utb::train<Real>(std::move(model), ds, cfg, &std::cout, resume);
    utb::save_model_file(result.best_model, a.out);
    const fs::path state_path =
        a.state_out.empty() ? utb::sidecar_path(fs::path(a.out), ".state.utnc")
                            : fs::path(a.state_out);
    utb::save_model_file(result.last_model, state_path, &result.state);
    std::cout << "best_epoch " << result.best_epoch << " best_cv_accuracy "
              << utb::detector_detail::format_metric(result.best_cv_accuracy) << "\n";
    return 0;
}

struct InspectArgs {
    std::string scan;
    std::string model;
    std::string out_dir = ".";
    std::string truth;
    double threshold = 0.09;
    std::string ref_policy = "in_bundle_channel_mean";
    std::uint64_t reference_row = 0;
    bool no_postproc = false;
};

int run_inspect(const InspectArgs& a) {
    utb::PostProcConfig cfg;
    cfg.threshold_mm = a.threshold;
    if (!utb::ref_policy_from(a.ref_policy, cfg.policy))
        throw utb::ConfigError("unknown reference policy: " + a.ref_policy);
    cfg.reference_row = static_cast<std::uint32_t>(a.reference_row);
    const utb::nn::Model<Real> model = utb::load_model_file<Real>(a.model);

    utb::WaveBufferStats::reset_peak();
    const auto r = utb::inspect_scan_file(a.scan, model, cfg, !a.no_postproc);
    const std::uint64_t peak = utb::WaveBufferStats::peak();

    const fs::path out_dir = a.out_dir;
    fs::create_directories(out_dir);
    const std::string stem = fs::path(a.scan).stem().string();

    std::uint64_t positives = 0;
    for (const auto& d : r.detections) positives += d.cls;
    std::uint64_t retained = 0;
    for (const auto& d : r.retained) retained += d.cls;

    if (r.postproc_applied) {
        auto out = utb::open_output(out_dir / (stem + ".depth_report.txt"), false);
        utb::write_depth_report(r.post, out);
    }

    const fs::path truth_path =
        a.truth.empty() ? utb::sidecar_path(fs::path(a.scan), ".truth") : fs::path(a.truth);
    if (fs::exists(truth_path)) {
        auto tin = utb::open_input(truth_path, false);
        const auto truth = utb::read_truth_sidecar(tin);
        const auto report = utb::flaw_hits(r.retained, truth, r.header);
        auto out = utb::open_output(out_dir / (stem + ".flaw_report.txt"), false);
        utb::write_flaw_hit_report(report, out);
        auto img = utb::overlay_render(r.tof, r.header, r.retained, truth);
        auto pout = utb::open_output(out_dir / (stem + ".overlay.ppm"));
        utb::write_overlay_ppm(img, pout);
    } else {
        auto img = utb::overlay_render(r.tof, r.header, r.retained, {});
        auto pout = utb::open_output(out_dir / (stem + ".overlay.ppm"));
        utb::write_overlay_ppm(img, pout);
    }

    std::cout << "bundles " << r.grid.count() << " positives " << positives << " retained "
              << retained << " dropped_waveforms " << r.dropped_waveforms
              << " invalid_waveforms " << r.tof.invalid_count
              << " peak_waveform_buffer_bytes " << peak << " row_bytes "
              << r.header.row_bytes() << "\n";
    return 0;
}

struct EvalArgs {
    std::vector<std::string> scans;
    std::string model;
    std::string report;
    double threshold = 0.09;
    std::string ref_policy = "in_bundle_channel_mean";
    std::uint64_t reference_row = 0;
    bool no_postproc = false;
};

int run_eval(const EvalArgs& a) {
    utb::PostProcConfig cfg;
    cfg.threshold_mm = a.threshold;
    if (!utb::ref_policy_from(a.ref_policy, cfg.policy))
        throw utb::ConfigError("unknown reference policy: " + a.ref_policy);
    cfg.reference_row = static_cast<std::uint32_t>(a.reference_row);
    const utb::nn::Model<Real> model = utb::load_model_file<Real>(a.model);
    std::vector<fs::path> paths(a.scans.begin(), a.scans.end());
    const auto agg = utb::eval_scan_files(paths, model, cfg, !a.no_postproc);
    if (a.report.empty()) {
        utb::write_eval_report(agg, std::cout);
    } else {
        auto out = utb::open_output(a.report, false);
        utb::write_eval_report(agg, out);
    }
    return agg.failed_scans ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ultrasonic scan flaw detection pipeline"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* cgen = app.add_subcommand("gen", "synthesize a scan with ground truth sidecars");
    cgen->add_option("--config", gen.config, "synthesis config file")->required();
    cgen->add_option("--out", gen.out, "output scan path (.utb)")->required();
    cgen->add_option("--truth", gen.truth, "truth sidecar path (default: scan with .truth)");
    cgen->add_option("--depth", gen.depth, "depth sidecar path (default: scan with .depth)");
    cgen->add_option("--seed", gen.seed, "override the config seed")
        ->each([&](const std::string&) { gen.seed_set = true; });

    BuildDatasetArgs bd;
    auto* cbd = app.add_subcommand("build-dataset", "sample a labeled dataset from scans");
    cbd->add_option("--scans", bd.scans, "scan list file")->required();
    cbd->add_option("--out", bd.out, "output dataset path (.utds)")->required();
    cbd->add_option("--size", bd.size, "total dataset size")->required();
    cbd->add_option("--train", bd.train, "training split size (cv = size - train)")->required();
    cbd->add_option("--balance", bd.balance, "label-1 fraction per split (default 0.25)");
    cbd->add_option("--sub-fraction", bd.sub_fraction,
                    "sub-threshold share of the label-0 pool (default 0.2)");
    cbd->add_option("--seed", bd.seed, "sampling seed");

    TrainArgs tr;
    auto* ctr = app.add_subcommand("train", "train a detector on a dataset");
    ctr->add_option("--dataset", tr.dataset, "dataset path (.utds)")->required();
    ctr->add_option("--out", tr.out, "best checkpoint output path (.utnc)")->required();
    ctr->add_option("--preset", tr.preset, "paper_full or ci_small (default ci_small)");
    ctr->add_option("--state-out", tr.state_out,
                    "resume checkpoint path (default: out with .state.utnc)");
    ctr->add_option("--resume", tr.resume, "resume from a .state.utnc checkpoint");
    ctr->add_option("--optimizer", tr.optimizer, "adam or sgd (default adam)");
    ctr->add_option("--lr", tr.lr, "learning rate (default 1e-3)");
    ctr->add_option("--batch", tr.batch, "batch size (default 64)");
    ctr->add_option("--epochs", tr.epochs, "epoch count (default 30)");
    ctr->add_option("--l2", tr.l2, "L2 lambda (default 1e-4)");
    ctr->add_option("--dropout", tr.dropout, "dropout rate on hidden dense layers (default 0.5)");
    ctr->add_option("--target-cv", tr.target_cv, "early-stop CV accuracy (default off)");
    ctr->add_option("--seed", tr.seed, "training seed");

    InspectArgs ins;
    auto* cins = app.add_subcommand("inspect", "detect flaws in one scan");
    cins->add_option("--scan", ins.scan, "scan path (.utb)")->required();
    cins->add_option("--model", ins.model, "checkpoint path (.utnc)")->required();
    cins->add_option("--out-dir", ins.out_dir, "report directory (default .)");
    cins->add_option("--truth", ins.truth, "truth sidecar (default: scan with .truth)");
    cins->add_option("--threshold-mm", ins.threshold, "post-proc depth threshold (default 0.09)");
    cins->add_option("--ref-policy", ins.ref_policy,
                     "in_bundle_channel_mean or neighbor_healthy_row");
    cins->add_option("--reference-row", ins.reference_row,
                     "healthy row for neighbor_healthy_row (default 0)");
    cins->add_flag("--no-postproc", ins.no_postproc, "keep raw CNN positives");

    EvalArgs ev;
    auto* cev = app.add_subcommand("eval", "aggregate per-flaw results over many scans");
    cev->add_option("scans", ev.scans, "scan paths (.utb, each with a .truth sidecar)")
        ->required();
    cev->add_option("--model", ev.model, "checkpoint path (.utnc)")->required();
    cev->add_option("--report", ev.report, "report output path (default stdout)");
    cev->add_option("--threshold-mm", ev.threshold, "post-proc depth threshold (default 0.09)");
    cev->add_option("--ref-policy", ev.ref_policy,
                    "in_bundle_channel_mean or neighbor_healthy_row");
    cev->add_option("--reference-row", ev.reference_row,
                    "healthy row for neighbor_healthy_row (default 0)");
    cev->add_flag("--no-postproc", ev.no_postproc, "keep raw CNN positives");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cgen->parsed()) return run_gen(gen);
        if (cbd->parsed()) return run_build_dataset(bd);
        if (ctr->parsed()) return run_train(tr);
        if (cins->parsed()) return run_inspect(ins);
        if (cev->parsed()) return run_eval(ev);
        std::cerr << "no subcommand selected\n";
        return 2;
    } catch (const utb::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const utb::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const utb::CompatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const utb::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const utb::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
