#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "utb/dataset.hpp"
#include "utb/detector.hpp"
#include "utb/error.hpp"
#include "utb/evalkit.hpp"
#include "utb/nn/model.hpp"
#include "utb/postproc.hpp"
#include "utb/scan_model.hpp"
#include "utb/sigproc.hpp"
#include "utb/synth.hpp"

// End-to-end plumbing shared by the command-line tool and the test suites:
// every subcommand is a thin wrapper over one function here.

namespace utb {

inline std::ifstream open_input(const std::filesystem::path& p, bool binary = true) {
    std::ifstream in(p, binary ? std::ios::binary | std::ios::in : std::ios::in);
    if (!in) throw ConfigError("cannot open input file: " + p.string());
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& p, bool binary = true) {
    std::ofstream out(p, binary ? std::ios::binary | std::ios::out | std::ios::trunc
                                : std::ios::out | std::ios::trunc);
    if (!out) throw IoError("cannot open output file: " + p.string(), 0);
    return out;
}

inline std::filesystem::path sidecar_path(std::filesystem::path scan, const char* extension) {
    scan.replace_extension(extension);
    return scan;
}

// ---- gen -----------------------------------------------------------------------

struct GenResult {
    std::uint64_t scan_bytes = 0;
    std::size_t flaw_count = 0;
    std::uint64_t seed = 0;
};

inline SynthConfig load_synth_config_file(const std::filesystem::path& p) {
    auto in = open_input(p, false);
    return load_synth_config(in);
}

// Writes scan + truth + depth sidecars; the scan payload is streamed row by
// row, so memory stays bounded by one axial row.
inline GenResult gen_scan_files(const SynthConfig& cfg, const std::filesystem::path& scan_path,
                                const std::filesystem::path& truth_path,
                                const std::filesystem::path& depth_path) {
    cfg.validate();
    const DepthField field = build_depth_field(cfg);
    GenResult r;
    r.seed = cfg.rng_seed;
    r.flaw_count = cfg.flaws.size();
    {
        auto out = open_output(scan_path);
        r.scan_bytes = synthesize_scan_to_stream(field, cfg, out);
    }
    {
        auto out = open_output(truth_path, false);
        const auto regions = truth_regions(cfg);
        write_truth_sidecar(regions, out);
        if (!out) throw IoError("failed writing " + truth_path.string(), 0);
    }
    {
        auto out = open_output(depth_path);
        write_depth_field(field, cfg.header, out);
    }
    return r;
}

// ---- dataset build ---------------------------------------------------------------

struct ScanListEntry {
    std::filesystem::path scan;
    std::filesystem::path depth;
};

// One scan per line: the scan path, optionally followed by the depth sidecar
// path (defaults to the scan path with a .depth extension). '#' comments.
inline std::vector<ScanListEntry> load_scan_list(const std::filesystem::path& p) {
    auto in = open_input(p, false);
    std::vector<ScanListEntry> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string scan, depth, extra;
        if (!(ls >> scan)) continue;
        ScanListEntry e;
        e.scan = scan;
        if (ls >> depth) e.depth = depth;
        else e.depth = sidecar_path(e.scan, ".depth");
        if (ls >> extra) throw ParseError(line_no, "too many fields on scan list line");
        out.push_back(std::move(e));
    }
    return out;
}

// Streams every listed scan once, labels bundles against the depth sidecar,
// and reservoir-samples the planned dataset.
inline Dataset build_dataset_from_files(const std::vector<ScanListEntry>& scans,
                                        const DatasetPlan& plan, std::uint64_t seed) {
    if (scans.empty()) throw ConfigError("scan list is empty");
    DatasetBuilder builder(plan, seed);
    std::vector<std::string> ids;
    for (std::size_t s = 0; s < scans.size(); ++s) {
        auto din = open_input(scans[s].depth);
        const DepthField truth = read_depth_field(din);
        auto in = open_input(scans[s].scan);
        const ScanHeader h = read_scan_header(in);
        if (truth.axial_count() != h.axial_count || truth.rotary_count() != h.rotary_count)
            throw CompatError("depth sidecar does not match scan grid: " +
                              scans[s].scan.string());
        std::optional<BundleAssembler> assembler;
        WaveBuffer row(static_cast<std::size_t>(h.row_bytes()));
        std::uint64_t received = kScanHeaderBytes;
        for (std::uint32_t i = 0; i < h.axial_count; ++i) {
            const std::size_t got = io::read_upto(in, row.data(), row.size());
            received += got;
            if (got < row.size()) throw TruncationError(h.file_bytes(), received);
            if (i == 0) {
                const std::uint32_t anchor = compute_anchor(row.span(), h);
                assembler.emplace(h, anchor, [&, s](BundleTensor&& b) {
                    const BundleCategory cat =
                        label_bundle_cells(truth, bundle_cells(b.bi, b.bj));
                    builder.add_candidate(static_cast<std::uint32_t>(s), b, cat);
                });
            }
            assembler->push_row(row.span());
        }
        assembler->finish();
        ids.push_back(scans[s].scan.filename().string());
    }
    return builder.finish(std::move(ids));
}

// In-memory variant for synthetic experiments: volumes arrive one at a time
// through the callback-driven collector in dataset.hpp.

// ---- checkpoints -----------------------------------------------------------------

template <class Real>
void save_model_file(const nn::Model<Real>& model, const std::filesystem::path& p,
                     const nn::TrainState<Real>* state = nullptr) {
    auto out = open_output(p);
    nn::save_checkpoint(model, out, state);
}

template <class Real>
nn::Model<Real> load_model_file(const std::filesystem::path& p,
                                nn::TrainState<Real>* state = nullptr) {
    auto in = open_input(p);
    return nn::load_checkpoint<Real>(in, state);
}

// ---- inspect ---------------------------------------------------------------------

struct InspectResult {
    ScanHeader header;
    BundleGrid grid;
    std::uint32_t anchor = 0;
    std::uint64_t dropped_waveforms = 0;
    std::vector<Detection> detections;  // every bundle, class 0 or 1
    bool postproc_applied = false;
    PostProcResult post;                // meaningful when postproc_applied
    std::vector<Detection> retained;    // final detection set
    TofGrid tof;
};

namespace pipeline_detail {

inline InspectResult finish_inspect(InspectResult&& r, const PostProcConfig& cfg,
                                    bool apply_postproc) {
    if (apply_postproc) {
        r.post = filter_detections(r.detections, r.tof, r.header, cfg);
        r.retained = r.post.retained;
        r.postproc_applied = true;
    } else {
        r.retained = r.detections;
    }
    return std::move(r);
}

}  // namespace pipeline_detail

// Streaming inspection: reads the scan once, keeping only one raw axial row
// in memory; emits per-bundle classifications, TOF grid, and the filtered
// detection set.
template <class Real>
InspectResult inspect_scan_stream(std::istream& in, const nn::Model<Real>& model,
                                  const PostProcConfig& cfg, bool apply_postproc = true) {
    require_detector_model(model);
    cfg.validate();
    InspectResult r;
    r.header = read_scan_header(in);
    r.grid = bundle_grid(r.header);
    r.tof = TofGrid(r.header.axial_count, r.header.rotary_count);

    std::optional<BundleAssembler> assembler;
    WaveBuffer row(static_cast<std::size_t>(r.header.row_bytes()));
    std::uint64_t received = kScanHeaderBytes;
    for (std::uint32_t i = 0; i < r.header.axial_count; ++i) {
        const std::size_t got = io::read_upto(in, row.data(), row.size());
        received += got;
        if (got < row.size()) throw TruncationError(r.header.file_bytes(), received);
        measure_row_tofs(row.span(), r.header, i, r.tof);
        if (i == 0) {
            r.anchor = compute_anchor(row.span(), r.header);
            assembler.emplace(r.header, r.anchor, [&](BundleTensor&& b) {
                r.detections.push_back(classify_bundle(model, b));
            });
        }
        assembler->push_row(row.span());
    }
    r.dropped_waveforms = assembler->finish();
    return pipeline_detail::finish_inspect(std::move(r), cfg, apply_postproc);
}

template <class Real>
InspectResult inspect_scan_file(const std::filesystem::path& p, const nn::Model<Real>& model,
                                const PostProcConfig& cfg, bool apply_postproc = true) {
    auto in = open_input(p);
    return inspect_scan_stream(in, model, cfg, apply_postproc);
}

// In-memory variant, for experiments that synthesize volumes directly.
template <class Real>
InspectResult inspect_volume(const ScanVolume& volume, const nn::Model<Real>& model,
                             const PostProcConfig& cfg, bool apply_postproc = true) {
    require_detector_model(model);
    cfg.validate();
    InspectResult r;
    r.header = volume.header();
    r.grid = bundle_grid(r.header);
    r.detections = classify_scan(model, volume, &r.dropped_waveforms);
    r.anchor = compute_anchor(volume.row(0), r.header);
    r.tof = measure_tof_grid(volume);
    return pipeline_detail::finish_inspect(std::move(r), cfg, apply_postproc);
}

// ---- eval ------------------------------------------------------------------------

struct EvalScanOutcome {
    std::string scan;
    bool ok = false;
    std::string error;
    FlawHitReport report;
    std::uint64_t bundle_count = 0;
};

struct EvalAggregate {
    std::vector<EvalScanOutcome> scans;
    std::uint64_t required_regions = 0;
    std::uint64_t hit_regions = 0;
    std::uint64_t open_field_fps = 0;
    std::uint64_t inspection_points = 0;
    std::uint64_t failed_scans = 0;

    double hit_rate() const {
        return required_regions ? static_cast<double>(hit_regions) /
                                      static_cast<double>(required_regions)
                                : 1.0;
    }
};

// Inspects each scan against its .truth sidecar; unreadable inputs are
// recorded and skipped so one bad file cannot hide results for the rest.
template <class Real>
EvalAggregate eval_scan_files(const std::vector<std::filesystem::path>& scans,
                              const nn::Model<Real>& model, const PostProcConfig& cfg,
                              bool apply_postproc = true) {
    if (scans.empty()) throw ConfigError("no scans to evaluate");
    EvalAggregate agg;
    for (const auto& path : scans) {
        EvalScanOutcome outcome;
        outcome.scan = path.string();
        try {
            auto r = inspect_scan_file(path, model, cfg, apply_postproc);
            auto tin = open_input(sidecar_path(path, ".truth"), false);
            const auto truth = read_truth_sidecar(tin);
            outcome.report = flaw_hits(r.retained, truth, r.header);
            outcome.bundle_count = r.grid.count();
            outcome.ok = true;
        } catch (const Error& e) {
            outcome.error = e.what();
        }
        if (outcome.ok) {
            agg.required_regions += outcome.report.required_count();
            agg.hit_regions += outcome.report.required_hit_count();
            agg.open_field_fps += outcome.report.open_field_fps.size();
            agg.inspection_points += outcome.bundle_count;
        } else {
            ++agg.failed_scans;
        }
        agg.scans.push_back(std::move(outcome));
    }
    return agg;
}

inline void write_eval_report(const EvalAggregate& agg, std::ostream& out) {
    for (const auto& sc : agg.scans) {
        if (!sc.ok) {
            out << "scan " << sc.scan << " error " << sc.error << '\n';
            continue;
        }
        out << "scan " << sc.scan << " required " << sc.report.required_count() << " hit "
            << sc.report.required_hit_count() << " open_field_fps "
            << sc.report.open_field_fps.size() << " inspection_points " << sc.bundle_count
            << '\n';
    }
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", agg.hit_rate());
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.2f", 100.0 * agg.hit_rate());
    out << "total required " << agg.required_regions << " hit " << agg.hit_regions
        << " hit_rate " << rate << " (" << pct << "%)"
        << " open_field_fps " << agg.open_field_fps << " inspection_points "
        << agg.inspection_points << " failed_scans " << agg.failed_scans << '\n';
}

}  // namespace utb
