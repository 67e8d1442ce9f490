// Acceptance gate for the ultrasonic B-scan inspection toolkit.
//
// Runs eight release criteria and prints exactly one PASS/FAIL line per
// criterion; the process exits 0 only when every criterion passes. Everything
// the checks need (scans, datasets, models) is synthesized on the fly; the
// only disk usage is one large temporary scan for the streaming-memory check.
//
// Usage: acceptance [criterion-number ...]   (no arguments runs all eight)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "utb/dataset.hpp"
#include "utb/detector.hpp"
#include "utb/error.hpp"
#include "utb/evalkit.hpp"
#include "utb/io.hpp"
#include "utb/nn/model.hpp"
#include "utb/pipeline.hpp"
#include "utb/postproc.hpp"
#include "utb/rng.hpp"
#include "utb/scan_model.hpp"
#include "utb/sigproc.hpp"
#include "utb/synth.hpp"

namespace {

using namespace utb;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

int g_failures = 0;

void check(bool ok, const std::string& msg) {
    if (!ok) throw Error(msg);
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

template <class F>
void criterion(int num, const char* name, F&& body) {
    const auto t0 = Clock::now();
    std::string err;
    try {
        body();
    } catch (const std::exception& e) {
        err = e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    char elapsed[32];
    std::snprintf(elapsed, sizeof elapsed, "%.1fs", secs);
    if (err.empty()) {
        std::cout << "criterion " << num << " (" << name << "): PASS [" << elapsed << "]\n";
    } else {
        std::cout << "criterion " << num << " (" << name << "): FAIL [" << elapsed << "] "
                  << err << "\n";
        ++g_failures;
    }
    std::cout.flush();
}

// ---- 1: architecture fidelity ----------------------------------------------------

void check_architecture() {
    const auto m = build_model<float>(ModelPreset::paper_full);
    const std::vector<std::uint64_t> expect = {37'800, 2'250'300, 6'758'912, 65'664,
                                               16'512, 8'256,     650,       22};
    const auto counts = m.parameter_counts();
    check(counts == expect, "per-layer parameter counts do not match the published table");
    check(m.parameter_count() == 9'138'116,
          "total parameter count is " + std::to_string(m.parameter_count()) +
              ", expected 9138116");
    check(m.layers()[0].out == nn::Shape3{48, 8, 300},
          "first conv output shape is not (48, 8, 300)");
    check(m.layers()[2].out == nn::Shape3{22, 2, 300},
          "second conv output shape is not (22, 2, 300)");
    check(m.layers()[4].out == nn::Shape3{1, 1, 13'200}, "flattened width is not 13200");
}

// ---- 2: metrics fidelity ----------------------------------------------------------

void check_metrics() {
    const Metrics m = metrics(ConfusionMatrix{7281, 488, 197, 2034});
    check(m.accuracy && m.sensitivity && m.specificity, "metrics unexpectedly undefined");
    const auto pct2 = [](double v) { return std::llround(v * 10'000.0); };
    check(pct2(*m.accuracy) == 9315,
          "accuracy is " + fmt(*m.accuracy * 100.0) + "%, expected 93.15%");
    check(pct2(*m.sensitivity) == 9117,
          "sensitivity is " + fmt(*m.sensitivity * 100.0) + "%, expected 91.17%");
    check(pct2(*m.specificity) == 9372,
          "specificity is " + fmt(*m.specificity * 100.0) + "%, expected 93.72%");
}

// ---- 3: gradient correctness ------------------------------------------------------

template <class Real>
double pinned_loss(const nn::Model<Real>& m, const nn::Tensor3<Real>& x, std::uint32_t label,
                   std::uint64_t mask_seed) {
    rng::SplitMix g(mask_seed);
    nn::Workspace<Real> ws;
    const auto p = m.forward_train(x, ws, g);
    return nn::xent_loss(p, label);
}

void check_gradients() {
    // 50 randomized instances of a network containing every layer kind
    // (conv2d with both strides, relu, flatten, dense, dropout, softmax),
    // checked in 64-bit precision against central finite differences on
    // parameters and inputs.
    double worst = 0.0;
    std::uint64_t checked = 0;
    const double h = 1e-6;
    const auto rel_err = [](double a, double b) {
        return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    };
    for (std::uint64_t inst = 1; inst <= 50; ++inst) {
        rng::SplitMix g(inst * 6151);
        const auto sh = 1 + static_cast<std::uint32_t>(inst % 2);
        const auto sw = 1 + static_cast<std::uint32_t>((inst / 2) % 2);
        nn::Model<double> m(nn::Shape3{6, 5, 2});
        m.add(nn::LayerSpec::conv2d(3, 2, 3, sh, sw))
            .add(nn::LayerSpec::relu())
            .add(nn::LayerSpec::flatten())
            .add(nn::LayerSpec::dense(7))
            .add(nn::LayerSpec::relu())
            .add(nn::LayerSpec::dropout(0.3))
            .add(nn::LayerSpec::dense(4))
            .add(nn::LayerSpec::softmax());
        m.init_params(inst);
        nn::Tensor3<double> x(6, 5, 2);
        for (auto& v : x.v) v = g.uniform(-1.0, 1.0);
        const auto label = static_cast<std::uint32_t>(g.below(4));
        const std::uint64_t mask_seed = g.next();

        nn::Workspace<double> ws;
        nn::Grads<double> grads;
        m.init_grads(grads);
        rng::SplitMix fg(mask_seed);
        m.forward_train(x, ws, fg);
        const auto dx = m.backward_fused(ws, label, grads);

        const auto probe = [&](double analytic, double& slot, const char* what) {
            const double keep = slot;
            slot = keep + h;
            const double lp = pinned_loss(m, x, label, mask_seed);
            slot = keep - h;
            const double lm = pinned_loss(m, x, label, mask_seed);
            slot = keep;
            const double numeric = (lp - lm) / (2.0 * h);
            const double e = rel_err(analytic, numeric);
            worst = std::max(worst, e);
            check(e <= 1e-4, std::string(what) + " gradient off by rel err " + fmt(e) +
                                 " (analytic " + fmt(analytic) + ", numeric " + fmt(numeric) +
                                 ") in instance " + std::to_string(inst));
            ++checked;
        };

        for (std::size_t li = 0; li < m.layers().size(); ++li) {
            auto& L = m.layers_mutable()[li];
            for (int pick = 0; pick < 8 && !L.w.empty(); ++pick) {
                const auto k = static_cast<std::size_t>(g.below(L.w.size()));
                probe(grads.dw[li][k], L.w[k], "weight");
            }
            for (int pick = 0; pick < 2 && !L.b.empty(); ++pick) {
                const auto k = static_cast<std::size_t>(g.below(L.b.size()));
                probe(grads.db[li][k], L.b[k], "bias");
            }
        }
        for (int pick = 0; pick < 10; ++pick) {
            const auto k = static_cast<std::size_t>(g.below(x.size()));
            probe(dx.v[k], x.v[k], "input");
        }
    }
    check(checked >= 2000, "too few gradient probes ran: " + std::to_string(checked));
}

// ---- 4: depth measurement oracle --------------------------------------------------

void check_depth_oracle() {
    SynthConfig cfg;
    cfg.header.axial_count = 40;    // 8 mm
    cfg.header.rotary_count = 500;  // 50 deg
    cfg.rng_seed = 904;
    cfg.flaws = {
        {FlawKind::debris, 1.0, 3.0, 5.0, 15.0, 0.28},
        {FlawKind::fbbpf, 3.6, 6.4, 20.0, 35.0, 0.22},
        {FlawKind::crevice, 1.0, 3.2, 36.0, 46.0, 0.25},
        {FlawKind::debris, 5.0, 7.0, 2.0, 10.0, 0.06},
    };
    const DepthField field = build_depth_field(cfg);
    const ScanHeader& h = cfg.header;

    const auto measure_errors = [&](const SynthConfig& c) {
        const ScanVolume vol = synthesize_scan(field, c);
        const TofGrid grid = measure_tof_grid(vol);
        std::vector<double> errs;
        errs.reserve(grid.tof_ns.size());
        for (std::uint32_t i = 0; i < h.axial_count; ++i)
            for (std::uint32_t j = 0; j < h.rotary_count; ++j) {
                if (!grid.is_valid(i, j)) {
                    errs.push_back(std::numeric_limits<double>::infinity());
                    continue;
                }
                const double depth = depth_from_shift_ns(grid.at(i, j) - c.base_tof_ns,
                                                         h.velocity_mm_per_us);
                errs.push_back(std::abs(depth - static_cast<double>(field.at(i, j))));
            }
        return errs;
    };

    // Noise-free: every waveform within 0.01 mm of the generating truth.
    {
        auto errs = measure_errors(cfg);
        const double worst = *std::max_element(errs.begin(), errs.end());
        check(worst <= 0.01,
              "noise-free depth error " + fmt(worst) + " mm exceeds 0.01 mm");
    }
    // Default noise (sigma = 5 counts): 99th percentile within 0.03 mm.
    {
        SynthConfig noisy = cfg;
        noisy.noise_sigma = 5.0;
        auto errs = measure_errors(noisy);
        std::sort(errs.begin(), errs.end());
        const double p99 = errs[errs.size() * 99 / 100];
        check(p99 <= 0.03,
              "99th percentile depth error " + fmt(p99) + " mm exceeds 0.03 mm at sigma 5");
    }
}

// ---- 5: format round trip ----------------------------------------------------------

void check_format_round_trip() {
    rng::SplitMix g(505);
    for (int trial = 0; trial < 200; ++trial) {
        ScanHeader h;
        h.axial_count = 1 + static_cast<std::uint32_t>(g.below(6));
        h.rotary_count = 1 + static_cast<std::uint32_t>(g.below(40));
        h.samples_per_wave = 8 + static_cast<std::uint32_t>(g.below(120));
        h.axial_pitch_mm = g.uniform(0.05, 1.0);
        h.rotary_pitch_deg = g.uniform(0.02, 0.3);
        h.sample_period_ns = g.uniform(1.0, 20.0);
        h.velocity_mm_per_us = g.uniform(0.5, 3.5);
        h.axial_origin_mm = g.uniform(-5.0, 5.0);
        h.rotary_origin_deg = g.uniform(0.0, 300.0);

        ScanVolume v(h);
        for (std::uint32_t i = 0; i < h.axial_count; ++i)
            for (auto& b : v.row(i)) b = static_cast<std::uint8_t>(g.below(256));

        std::ostringstream sink(std::ios::binary);
        const std::uint64_t written = write_scan(v, sink);
        const std::string bytes = sink.str();
        check(written == h.file_bytes() && bytes.size() == h.file_bytes(),
              "written byte count does not match the declared file size");

        std::istringstream in(bytes, std::ios::binary);
        const ScanVolume rt = read_scan(in);
        check(rt == v, "write -> read round trip is not bit-exact (trial " +
                           std::to_string(trial) + ")");

        std::ostringstream sink2(std::ios::binary);
        write_scan(rt, sink2);
        check(sink2.str() == bytes, "second write differs from the original bytes");

        std::istringstream in2(bytes, std::ios::binary);
        std::uint32_t rows_seen = 0;
        bool rows_match = true;
        const ScanHeader hs = read_scan_streaming(in2, [&](std::uint32_t i,
                                                           std::span<const std::uint8_t> row) {
            const auto want = v.row(i);
            rows_match = rows_match && std::equal(row.begin(), row.end(), want.begin(),
                                                  want.end());
            ++rows_seen;
        });
        check(hs == h && rows_seen == h.axial_count && rows_match,
              "streaming reader disagrees with the whole-file reader");
    }
}

// ---- 6: post-processor properties --------------------------------------------------

void check_postproc_properties() {
    // (a) retained detections are always a subsequence of the input; every
    // positive gets exactly one report entry; negatives pass through.
    {
        rng::SplitMix g(606);
        for (int trial = 0; trial < 1000; ++trial) {
            const auto brows = 1 + static_cast<std::uint32_t>(g.below(3));
            const auto bcols = 1 + static_cast<std::uint32_t>(g.below(3));
            ScanHeader h;
            h.axial_count = brows * kBundleAxial;
            h.rotary_count = bcols * kBundleRotary;
            TofGrid grid(h.axial_count, h.rotary_count);
            for (auto& t : grid.tof_ns) {
                if (g.below(40) == 0) {
                    ++grid.invalid_count;  // leave the NaN seeded by the constructor
                    continue;
                }
                t = g.uniform(3800.0, 4200.0);
            }
            std::vector<Detection> dets;
            const auto n = g.below(30);
            std::uint64_t positives = 0, negatives = 0;
            for (std::uint64_t k = 0; k < n; ++k) {
                Detection d;
                d.bi = static_cast<std::uint32_t>(g.below(brows));
                d.bj = static_cast<std::uint32_t>(g.below(bcols));
                d.cls = static_cast<std::uint8_t>(g.below(2));
                d.score = static_cast<float>(g.uniform01());
                (d.cls ? positives : negatives)++;
                dets.push_back(d);
            }
            PostProcConfig pc;
            pc.threshold_mm = g.uniform(0.005, 0.1);
            pc.policy = (trial & 1) ? RefPolicy::neighbor_healthy_row
                                    : RefPolicy::in_bundle_channel_mean;
            pc.reference_row = static_cast<std::uint32_t>(g.below(h.axial_count));
            const PostProcResult res = filter_detections(dets, grid, h, pc);

            check(res.report.size() == positives, "report size != positive count");
            std::size_t cursor = 0;
            std::uint64_t kept_negatives = 0;
            for (const Detection& d : res.retained) {
                while (cursor < dets.size() && !(dets[cursor] == d)) ++cursor;
                check(cursor < dets.size(),
                      "retained set is not a subsequence of the input detections");
                ++cursor;
                if (d.cls == 0) ++kept_negatives;
            }
            check(kept_negatives == negatives, "a negative detection did not pass through");
        }
    }

    // (b) + (c) on noise-free synthetic scans: retained sets shrink
    // monotonically across the threshold sweep, and a bundle whose true depth
    // reaches 0.12 mm is never rejected.
    rng::SplitMix fg(8008);
    for (int sc = 0; sc < 6; ++sc) {
        SynthConfig cfg;
        cfg.header.axial_count = 30;    // 6 bundle rows
        cfg.header.rotary_count = 200;  // 10 bundle cols
        cfg.header.samples_per_wave = 600;
        cfg.rng_seed = 7000 + static_cast<std::uint64_t>(sc);
        cfg.chatter_amplitude_ns = (sc % 2) ? 40.0 : 0.0;
        int placed = 0;
        for (int ab = 0; ab < 2; ++ab)
            for (int rb = 0; rb < 3; ++rb, ++placed) {
                FlawSpec f;
                f.kind = static_cast<FlawKind>(placed % 3);
                f.axial_start_mm = 1.2 + 2.0 * ab;
                f.axial_end_mm = 2.8 + 2.0 * ab;
                f.rotary_start_deg = 2.4 + 6.0 * rb;
                f.rotary_end_deg = 5.6 + 6.0 * rb;
                f.peak_depth_mm = placed == 0 ? fg.uniform(0.15, 0.3) : fg.uniform(0.03, 0.3);
                cfg.flaws.push_back(f);
            }
        const DepthField field = build_depth_field(cfg);
        const ScanVolume vol = synthesize_scan(field, cfg);
        const TofGrid grid = measure_tof_grid(vol);
        const BundleGrid bg = bundle_grid(cfg.header);

        std::vector<Detection> all;
        for (std::uint32_t bi = 0; bi < bg.rows; ++bi)
            for (std::uint32_t bj = 0; bj < bg.cols; ++bj)
                all.push_back(Detection{bi, bj, 1, 1.0f});

        PostProcConfig pc;
        pc.policy = RefPolicy::neighbor_healthy_row;
        pc.reference_row = 0;
        std::set<std::pair<std::uint32_t, std::uint32_t>> prev;
        bool first = true;
        for (const double thr : {0.05, 0.06, 0.07, 0.08, 0.09, 0.10}) {
            pc.threshold_mm = thr;
            const PostProcResult res = filter_detections(all, grid, cfg.header, pc);
            std::set<std::pair<std::uint32_t, std::uint32_t>> cur;
            for (const Detection& d : res.retained) cur.emplace(d.bi, d.bj);
            if (!first)
                for (const auto& b : cur)
                    check(prev.count(b) != 0,
                          "retained set grew when the threshold tightened (scan " +
                              std::to_string(sc) + ", threshold " + fmt(thr) + " mm)");
            for (std::uint32_t bi = 0; bi < bg.rows; ++bi)
                for (std::uint32_t bj = 0; bj < bg.cols; ++bj) {
                    const CellWindow w = bundle_cells(bi, bj);
                    if (field.max_in_window(w.i0, w.i1, w.j0, w.j1) >= 0.12f)
                        check(cur.count({bi, bj}) != 0,
                              "bundle with true depth >= 0.12 mm rejected (scan " +
                                  std::to_string(sc) + ", threshold " + fmt(thr) + " mm)");
                }
            prev = std::move(cur);
            first = false;
        }
    }
}

// ---- 7: end-to-end desk-scale experiment -------------------------------------------

SynthConfig desk_train_cfg(int s, bool noisy) {
    SynthConfig cfg;
    cfg.header.axial_count = 150;   // 30 bundle rows
    cfg.header.rotary_count = 800;  // 40 bundle cols
    cfg.header.samples_per_wave = 400;
    cfg.base_tof_ns = 2000.0;
    cfg.rng_seed = 0xA000 + static_cast<std::uint64_t>(s);
    if (noisy) {
        cfg.noise_sigma = 5.0;
        cfg.chatter_amplitude_ns = 40.0;
        cfg.chatter_period_deg = 30.0;
    }
    // 12 qualifying flaws on a 6 x 2 block lattice, peaks 0.16..0.265 mm,
    // kinds cycling through debris/crevice/fbbpf. Cell row 0 stays healthy so
    // it can anchor bundling and serve as the depth reference row.
    int k = 0;
    for (int b = 0; b < 6; ++b)
        for (int c = 0; c < 2; ++c, ++k) {
            FlawSpec f;
            f.kind = static_cast<FlawKind>((s + k) % 3);
            f.axial_start_mm = 1.1 + 5.0 * b;
            f.axial_end_mm = 4.7 + 5.0 * b;
            f.rotary_start_deg = c ? 48.0 : 8.0;
            f.rotary_end_deg = c ? 64.0 : 24.0;
            f.peak_depth_mm = 0.18 + 0.0125 * ((s + 3 * k) % 8);
            cfg.flaws.push_back(f);
        }
    // 4 sub-threshold flaws in the untouched rotary band.
    for (int j = 0; j < 4; ++j) {
        FlawSpec f;
        f.kind = static_cast<FlawKind>((s + j) % 3);
        f.axial_start_mm = 2.0 + 7.0 * j;
        f.axial_end_mm = f.axial_start_mm + 1.6;
        f.rotary_start_deg = 30.0 + 3.0 * j;
        f.rotary_end_deg = f.rotary_start_deg + 2.4;
        f.peak_depth_mm = 0.03 + 0.012 * ((s + j) % 5);
        cfg.flaws.push_back(f);
    }
    return cfg;
}

SynthConfig desk_test_cfg(int s, bool noisy) {
    SynthConfig cfg;
    cfg.header.axial_count = 100;   // 20 bundle rows
    cfg.header.rotary_count = 600;  // 30 bundle cols
    cfg.header.samples_per_wave = 400;
    cfg.base_tof_ns = 2000.0;
    cfg.rng_seed = 0xB000 + static_cast<std::uint64_t>(s);
    if (noisy) {
        cfg.noise_sigma = 5.0;
        cfg.chatter_amplitude_ns = 40.0;
        cfg.chatter_period_deg = 30.0;
    }
    const int rows[5] = {3, 7, 11, 15, 18};
    const int cols[5] = {4, 10, 16, 22, 27};
    for (int k = 0; k < 5; ++k) {
        FlawSpec f;
        f.kind = static_cast<FlawKind>((s + k) % 3);
        f.axial_start_mm = rows[k] + 0.2;
        f.axial_end_mm = rows[k] + 1.7;
        f.rotary_start_deg = 2.0 * cols[k] + 0.5;
        f.rotary_end_deg = 2.0 * cols[k] + 3.5;
        f.peak_depth_mm = 0.16 + 0.02 * ((s + k) % 5);
        cfg.flaws.push_back(f);
    }
    const int sub_rows[2] = {5, 13};
    const int sub_cols[2] = {1, 28};
    for (int k = 0; k < 2; ++k) {
        FlawSpec f;
        f.kind = static_cast<FlawKind>((s + k + 1) % 3);
        f.axial_start_mm = sub_rows[k] + 0.3;
        f.axial_end_mm = sub_rows[k] + 1.5;
        f.rotary_start_deg = 2.0 * sub_cols[k] + 0.5;
        f.rotary_end_deg = 2.0 * sub_cols[k] + 3.1;
        f.peak_depth_mm = k ? 0.065 : 0.04;
        cfg.flaws.push_back(f);
    }
    return cfg;
}

Dataset build_desk_dataset(bool noisy) {
    DatasetPlan plan;
    plan.train_count = 7500;
    plan.cv_count = 2500;
    DatasetBuilder builder(plan, 42);
    std::vector<std::string> ids;
    for (int s = 0; s < 20; ++s) {
        const SynthConfig cfg = desk_train_cfg(s, noisy);
        const DepthField field = build_depth_field(cfg);
        const ScanVolume vol = synthesize_scan(field, cfg);
        collect_candidates(vol, field, static_cast<std::uint32_t>(s), builder);
        ids.push_back("train" + std::to_string(s));
    }
    return builder.finish(std::move(ids));
}

TrainResult<float> train_desk_model(const Dataset& ds, const char* tag) {
    TrainConfig tc;
    tc.learning_rate = 1.5e-3;
    tc.batch_size = 50;
    tc.epochs = 30;
    tc.l2_lambda = 1e-4;
    tc.seed = 7;
    tc.target_cv_accuracy = 0.992;
    auto model = build_model<float>(ModelPreset::ci_small, 0.25);
    std::cerr << "[criterion 7] training " << tag << " (" << ds.train.size() << " train / "
              << ds.cv.size() << " cv)\n";
    return train(std::move(model), ds, tc, &std::cerr);
}

void check_desk_scale() {
    // Noisy suite: 20 training scans -> 10,000-point 75/25 dataset -> train
    // the compact preset -> inspect 6 held-out noisy scans with depth-based
    // post-processing.
    nn::Model<float> detector(nn::Shape3{kWaveWindow, kBundleRotary, kBundleAxial});
    {
        const Dataset ds = build_desk_dataset(true);
        check(ds.train.size() == 7500 && ds.cv.size() == 2500,
              "dataset is not a 7500/2500 split");
        TrainResult<float> tr = train_desk_model(ds, "noisy suite");
        std::cerr << "[criterion 7] noisy best cv_accuracy "
                  << fmt(tr.best_cv_accuracy) << "\n";
        detector = std::move(tr.best_model);
    }

    PostProcConfig pc;
    pc.threshold_mm = 0.09;
    pc.policy = RefPolicy::neighbor_healthy_row;
    pc.reference_row = 0;

    std::uint64_t required_total = 0, hit_total = 0, fp_total = 0;
    for (int s = 0; s < 6; ++s) {
        const SynthConfig cfg = desk_test_cfg(s, true);
        const DepthField field = build_depth_field(cfg);
        const ScanVolume vol = synthesize_scan(field, cfg);
        const auto regions = truth_regions(cfg);
        const InspectResult ir = inspect_volume(vol, detector, pc, true);
        const FlawHitReport rep = flaw_hits(ir.retained, regions, vol.header());
        required_total += rep.required_count();
        hit_total += rep.required_hit_count();
        fp_total += rep.open_field_fps.size();
        for (const Detection& d : rep.open_field_fps) {
            bool found = false;
            for (const DepthDecision& dec : ir.post.report) {
                if (dec.bi != d.bi || dec.bj != d.bj) continue;
                found = true;
                check(dec.invalid_peaks || dec.max_estimated_depth_mm >= 0.09,
                      "open-field FP at bundle (" + std::to_string(d.bi) + ", " +
                          std::to_string(d.bj) + ") re-measured below 0.09 mm: " +
                          fmt(dec.max_estimated_depth_mm));
            }
            check(found, "open-field FP missing from the depth report");
        }
        std::cerr << "[criterion 7] test scan " << s << ": required "
                  << rep.required_count() << " hit " << rep.required_hit_count()
                  << " open-field FPs " << rep.open_field_fps.size() << "\n";
    }
    check(required_total >= 25,
          "test suite has only " + std::to_string(required_total) + " qualifying flaws");
    check(hit_total == required_total,
          "per-flaw hit rate below 100%: " + std::to_string(hit_total) + "/" +
              std::to_string(required_total));
    std::cerr << "[criterion 7] hit rate " << hit_total << "/" << required_total
              << ", open-field FPs " << fp_total << "\n";

    // Noise-free variant of the same suite: cross-validation accuracy >= 99%.
    const Dataset clean = build_desk_dataset(false);
    const TrainResult<float> tr = train_desk_model(clean, "noise-free suite");
    std::cerr << "[criterion 7] noise-free best cv_accuracy "
              << fmt(tr.best_cv_accuracy) << "\n";
    check(tr.best_cv_accuracy >= 0.99,
          "noise-free cross-validation accuracy " + fmt(tr.best_cv_accuracy) + " < 0.99");
}

// ---- 8: streaming memory bound -----------------------------------------------------

void check_streaming_bound() {
    const fs::path dir = fs::temp_directory_path() / "utb_acceptance";
    fs::create_directories(dir);
    const fs::path scan = dir / "big.utb";

    SynthConfig cfg;
    cfg.header.axial_count = 60;
    cfg.header.rotary_count = 3600;  // full 360 degrees
    cfg.header.samples_per_wave = 5000;
    cfg.rng_seed = 808;
    cfg.flaws = {
        {FlawKind::debris, 2.0, 4.0, 100.0, 110.0, 0.22},
        {FlawKind::fbbpf, 6.0, 9.0, 200.0, 215.0, 0.15},
    };
    const DepthField field = build_depth_field(cfg);
    {
        auto out = open_output(scan);
        const std::uint64_t bytes = synthesize_scan_to_stream(field, cfg, out);
        check(bytes >= 1'000'000'000,
              "generated scan is only " + std::to_string(bytes) + " bytes");
    }

    auto model = build_model<float>(ModelPreset::ci_small, 0.5);
    model.init_params(1);
    PostProcConfig pc;
    pc.policy = RefPolicy::neighbor_healthy_row;
    pc.reference_row = 0;

    WaveBufferStats::reset_peak();
    const InspectResult r = inspect_scan_file(scan, model, pc, true);
    const std::uint64_t peak = WaveBufferStats::peak().load();
    fs::remove(scan);

    const std::uint64_t row_bytes = r.header.row_bytes();
    check(row_bytes == 18'000'000, "unexpected row size " + std::to_string(row_bytes));
    check(peak > 0, "waveform buffer instrumentation recorded nothing");
    check(peak <= row_bytes, "peak waveform buffer " + std::to_string(peak) +
                                 " bytes exceeds one axial row (" +
                                 std::to_string(row_bytes) + " bytes)");
    check(r.detections.size() == 2160, "expected 2160 bundles, got " +
                                           std::to_string(r.detections.size()));
    check(r.dropped_waveforms == 0, "grid-aligned scan dropped waveforms");
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    const auto want = [&](int n) { return only.empty() || only.count(n) != 0; };

    if (want(1)) criterion(1, "architecture fidelity", check_architecture);
    if (want(2)) criterion(2, "metrics fidelity", check_metrics);
    if (want(3)) criterion(3, "gradient correctness", check_gradients);
    if (want(4)) criterion(4, "depth measurement oracle", check_depth_oracle);
    if (want(5)) criterion(5, "format round trip", check_format_round_trip);
    if (want(6)) criterion(6, "post-processor properties", check_postproc_properties);
    if (want(7)) criterion(7, "end-to-end desk-scale experiment", check_desk_scale);
    if (want(8)) criterion(8, "streaming memory bound", check_streaming_bound);

    if (g_failures) {
        std::cout << g_failures << " criteria failed\n";
        return 1;
    }
    std::cout << "all acceptance criteria passed\n";
    return 0;
}
