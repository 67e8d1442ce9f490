#include <cmath>
#include <cstdint>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "utb/sigproc.hpp"
#include "utb/synth.hpp"

using namespace utb;

namespace {

std::vector<std::uint8_t> gaussian_pulse(double tof_ns, double sigma_ns, double period_ns,
                                         std::size_t n) {
    std::vector<std::uint8_t> w(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const double dt = (static_cast<double>(k) * period_ns - tof_ns) / sigma_ns;
        w[k] = static_cast<std::uint8_t>(std::lround(255.0 * std::exp(-0.5 * dt * dt)));
    }
    return w;
}

// Independent reference: exhaustive sub-sample search for the pulse center
// that best explains the quantized samples.
double grid_search_tof(std::span<const std::uint8_t> w, double sigma_ns, double period_ns,
                       double lo_ns, double hi_ns, double step_ns) {
    double best_tof = lo_ns;
    double best_sse = std::numeric_limits<double>::infinity();
    for (double tof = lo_ns; tof <= hi_ns; tof += step_ns) {
        double sse = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double dt = (static_cast<double>(k) * period_ns - tof) / sigma_ns;
            const double model = 255.0 * std::exp(-0.5 * dt * dt);
            sse += (model - w[k]) * (model - w[k]);
        }
        if (sse < best_sse) {
            best_sse = sse;
            best_tof = tof;
        }
    }
    return best_tof;
}

}  // namespace

TEST_CASE("peak refinement matches the closed-form parabola") {
    const std::uint8_t sym[] = {0, 10, 30, 10, 0};
    const PeakEstimate p = detect_peak(sym, 10.0);
    REQUIRE(p.valid);
    REQUIRE(p.index == 2);
    REQUIRE(p.refined_tof_ns == 20.0);  // symmetric neighbors, no shift
    REQUIRE(p.amplitude == 30.0);

    const std::uint8_t lean[] = {0, 20, 30, 10, 0};
    // delta = 0.5*(20-10)/(20-60+10) = -1/6
    REQUIRE(detect_peak(lean, 10.0).refined_tof_ns ==
            Catch::Approx((2.0 - 1.0 / 6.0) * 10.0).epsilon(1e-12));
}

TEST_CASE("peak ties resolve to the earliest index") {
    const std::uint8_t plateau[] = {5, 10, 30, 30, 10};
    const PeakEstimate p = detect_peak(plateau, 10.0);
    REQUIRE(p.index == 2);
    // refinement leans right but the clamp holds it to half a sample
    REQUIRE(p.refined_tof_ns == 25.0);
}

TEST_CASE("peak edge cases") {
    SECTION("all-zero waveform is invalid") {
        const std::uint8_t zeros[8] = {};
        REQUIRE_FALSE(detect_peak(zeros, 10.0).valid);
    }
    SECTION("empty waveform throws") {
        REQUIRE_THROWS_AS(detect_peak({}, 10.0), MeasureError);
    }
    SECTION("peak at the first or last sample skips refinement") {
        const std::uint8_t front[] = {30, 10, 0};
        REQUIRE(detect_peak(front, 10.0).refined_tof_ns == 0.0);
        const std::uint8_t back[] = {0, 10, 30};
        REQUIRE(detect_peak(back, 10.0).refined_tof_ns == 20.0);
    }
    SECTION("flat top argmaxes at its leading edge and clamps the shift") {
        // Earliest-index tie-breaking guarantees the left neighbor is
        // strictly smaller, so the parabola denominator never vanishes;
        // here the vertex lands exactly on the +0.5 sample clamp.
        const std::uint8_t flat[] = {10, 30, 30, 30, 10};
        const PeakEstimate p = detect_peak(flat, 10.0);
        REQUIRE(p.index == 1);
        REQUIRE(p.refined_tof_ns == 15.0);
    }
    SECTION("clamp bounds the shift to half a sample") {
        const std::uint8_t steep[] = {0, 29, 30, 29, 0};
        const double r = detect_peak(steep, 10.0).refined_tof_ns;
        REQUIRE(r >= 15.0);
        REQUIRE(r <= 25.0);
    }
}

TEST_CASE("sub-sample refinement agrees with an exhaustive search") {
    const double sigma = 30.0, period = 10.0;
    for (const double truth : {423.7, 417.2, 430.0, 425.01, 509.49}) {
        const auto w = gaussian_pulse(truth, sigma, period, 100);
        const PeakEstimate p = detect_peak(w, period);
        REQUIRE(p.valid);
        const double oracle = grid_search_tof(w, sigma, period, truth - 20, truth + 20, 0.001);
        REQUIRE(std::abs(oracle - truth) < 0.5);  // quantization floor
        REQUIRE(std::abs(p.refined_tof_ns - oracle) < 2.0);
        REQUIRE(std::abs(p.refined_tof_ns - truth) < 2.0);
    }
}

TEST_CASE("depth conversions") {
    REQUIRE(depth_from_shift_ns(200.0, 1.48) == Catch::Approx(0.148).epsilon(1e-12));
    REQUIRE(shift_ns_from_depth(0.148, 1.48) == Catch::Approx(200.0).epsilon(1e-12));
    REQUIRE(shift_ns_from_depth(0.09, 1.48) == Catch::Approx(121.6216216).epsilon(1e-8));
    // the two are inverses
    for (double d : {0.01, 0.05, 0.1, 0.3})
        REQUIRE(depth_from_shift_ns(shift_ns_from_depth(d, 2.3), 2.3) ==
                Catch::Approx(d).epsilon(1e-12));
}

TEST_CASE("single-reference depth is signed") {
    ScanHeader h;
    const PeakEstimate target{true, 0, 4000.0, 255.0};
    const PeakEstimate ref{true, 0, 4100.0, 255.0};
    REQUIRE(depth_single_ref(target, ref, h) == Catch::Approx(-0.074).epsilon(1e-12));
    REQUIRE(depth_single_ref(ref, target, h) == Catch::Approx(0.074).epsilon(1e-12));
    REQUIRE_THROWS_AS(depth_single_ref(PeakEstimate{}, ref, h), MeasureError);
    REQUIRE_THROWS_AS(depth_single_ref(target, PeakEstimate{}, h), MeasureError);
}

TEST_CASE("two-reference depth interpolates the healthy baseline") {
    ScanHeader h;  // velocity 1.48
    const PeakEstimate ra{true, 0, 4000.0, 255.0};
    const PeakEstimate rb{true, 0, 4100.0, 255.0};
    const PeakEstimate target{true, 0, 4150.0, 255.0};
    REQUIRE(depth_two_ref(target, ra, 0.0, rb, 10.0, 5.0, h) ==
            Catch::Approx(0.074).epsilon(1e-12));

    SECTION("a target on the interpolated line has zero depth") {
        for (double t : {1.0, 2.5, 7.75}) {
            const PeakEstimate on{true, 0, 4000.0 + 10.0 * t, 255.0};
            REQUIRE(depth_two_ref(on, ra, 0.0, rb, 10.0, t, h) ==
                    Catch::Approx(0.0).margin(1e-12));
        }
    }
    SECTION("the target must sit strictly between the references") {
        REQUIRE_THROWS_AS(depth_two_ref(target, ra, 0.0, rb, 10.0, 0.0, h), MeasureError);
        REQUIRE_THROWS_AS(depth_two_ref(target, ra, 0.0, rb, 10.0, 10.0, h), MeasureError);
        REQUIRE_THROWS_AS(depth_two_ref(target, ra, 0.0, rb, 10.0, -1.0, h), MeasureError);
    }
    SECTION("invalid peaks are rejected") {
        REQUIRE_THROWS_AS(depth_two_ref(PeakEstimate{}, ra, 0.0, rb, 10.0, 5.0, h),
                          MeasureError);
    }
}

TEST_CASE("window truncation") {
    std::vector<std::uint8_t> wave(1000);
    for (std::size_t k = 0; k < wave.size(); ++k) wave[k] = static_cast<std::uint8_t>(k % 251);
    std::vector<std::uint8_t> out(kWaveWindow);

    SECTION("interior anchor copies [anchor-50, anchor+50)") {
        truncate_wave(wave, 400, out);
        for (std::uint32_t k = 0; k < kWaveWindow; ++k)
            REQUIRE(out[k] == wave[350 + k]);
    }
    SECTION("early anchor zero-pads the head") {
        truncate_wave(wave, 30, out);
        for (std::uint32_t k = 0; k < 20; ++k) REQUIRE(out[k] == 0);
        for (std::uint32_t k = 20; k < kWaveWindow; ++k) REQUIRE(out[k] == wave[k - 20]);
    }
    SECTION("late anchor zero-pads the tail") {
        truncate_wave(wave, 980, out);
        for (std::uint32_t k = 0; k < 70; ++k) REQUIRE(out[k] == wave[930 + k]);
        for (std::uint32_t k = 70; k < kWaveWindow; ++k) REQUIRE(out[k] == 0);
    }
    SECTION("output must be exactly one window") {
        std::vector<std::uint8_t> bad(kWaveWindow - 1);
        REQUIRE_THROWS_AS(truncate_wave(wave, 400, bad), ShapeError);
    }
}

TEST_CASE("anchor is the lower-median argmax of the row") {
    ScanHeader h;
    h.samples_per_wave = 50;
    h.rotary_count = 5;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(h.row_bytes()), 0);
    const std::uint32_t peaks[5] = {18, 10, 14, 16, 12};
    for (std::uint32_t j = 0; j < 5; ++j) row[j * 50 + peaks[j]] = 200;
    REQUIRE(compute_anchor(row, h) == 14);

    SECTION("even count takes the lower of the middle pair") {
        h.rotary_count = 4;
        std::vector<std::uint8_t> r4(static_cast<std::size_t>(h.row_bytes()), 0);
        const std::uint32_t p4[4] = {16, 10, 14, 12};
        for (std::uint32_t j = 0; j < 4; ++j) r4[j * 50 + p4[j]] = 200;
        REQUIRE(compute_anchor(r4, h) == 12);
    }
    SECTION("all-zero waveforms contribute index 0") {
        h.rotary_count = 3;
        std::vector<std::uint8_t> r3(static_cast<std::size_t>(h.row_bytes()), 0);
        r3[0 * 50 + 20] = 200;  // argmaxes {20, 0, 0} -> median 0
        REQUIRE(compute_anchor(r3, h) == 0);
    }
    SECTION("wrong row size") {
        std::vector<std::uint8_t> bad(10);
        REQUIRE_THROWS_AS(compute_anchor(bad, h), ShapeError);
    }
}

TEST_CASE("TOF grid measurement over a synthetic volume") {
    SynthConfig cfg;
    cfg.header.axial_count = 10;
    cfg.header.rotary_count = 30;
    cfg.chatter_amplitude_ns = 20.0;
    cfg.flaws.push_back({FlawKind::debris, 0.2, 1.6, 0.4, 2.4, 0.2});
    const DepthField field = build_depth_field(cfg);
    const ScanVolume v = synthesize_scan(field, cfg);
    const TofGrid grid = measure_tof_grid(v);
    REQUIRE(grid.axial_count == 10);
    REQUIRE(grid.rotary_count == 30);
    REQUIRE(grid.invalid_count == 0);
    for (std::uint32_t i = 0; i < 10; ++i)
        for (std::uint32_t j = 0; j < 30; ++j) {
            const double expect = echo_tof_ns(cfg, field.at(i, j), cfg.header.rotary_deg(j));
            REQUIRE(grid.at(i, j) == Catch::Approx(expect).margin(1.0));
        }
}

TEST_CASE("row-reference depth map cancels rotary-periodic chatter") {
    ScanHeader h;
    h.axial_count = 3;
    h.rotary_count = 8;
    TofGrid grid(3, 8);
    const double depths[3] = {0.0, 0.12, 0.04};
    for (std::uint32_t i = 0; i < 3; ++i)
        for (std::uint32_t j = 0; j < 8; ++j) {
            const double chatter = 35.0 * std::sin(0.7 * j);
            grid.tof_ns[i * 8 + j] =
                4000.0 + chatter + shift_ns_from_depth(depths[i], h.velocity_mm_per_us);
        }
    grid.tof_ns[2 * 8 + 5] = std::numeric_limits<double>::quiet_NaN();

    const auto depth = depth_map_from_row_ref(grid, h, 0);
    for (std::uint32_t i = 0; i < 3; ++i)
        for (std::uint32_t j = 0; j < 8; ++j) {
            if (i == 2 && j == 5) {
                REQUIRE(std::isnan(depth[i * 8 + j]));
            } else {
                REQUIRE(depth[i * 8 + j] == Catch::Approx(depths[i]).margin(1e-12));
            }
        }
    REQUIRE_THROWS_AS(depth_map_from_row_ref(grid, h, 3), ShapeError);
}

TEST_CASE("bundle grid arithmetic") {
    ScanHeader h;
    h.axial_count = 50;
    h.rotary_count = 3600;
    const BundleGrid g = bundle_grid(h);
    REQUIRE(g.rows == 10);
    REQUIRE(g.cols == 180);
    REQUIRE(g.count() == 1800);
    REQUIRE(g.dropped_waveforms == 0);

    SECTION("partial axial rows are dropped") {
        h.axial_count = 52;
        const BundleGrid p = bundle_grid(h);
        REQUIRE(p.rows == 10);
        REQUIRE(p.dropped_waveforms == 2ull * 3600);
    }
    SECTION("partial rotary columns are dropped") {
        h.rotary_count = 3610;
        const BundleGrid p = bundle_grid(h);
        REQUIRE(p.cols == 180);
        REQUIRE(p.dropped_waveforms == 50ull * 10);
    }
    SECTION("non-native pitches are rejected") {
        h.axial_pitch_mm = 0.25;
        REQUIRE_THROWS_AS(bundle_grid(h), ConfigError);
        h.axial_pitch_mm = 0.2;
        h.rotary_pitch_deg = 0.2;
        REQUIRE_THROWS_AS(bundle_grid(h), ConfigError);
    }
}

TEST_CASE("bundle footprints and index lookup are inverse") {
    ScanHeader h;
    h.axial_count = 20;
    h.rotary_count = 60;
    h.axial_origin_mm = 5.0;
    h.rotary_origin_deg = 30.0;
    const BundleGrid g = bundle_grid(h);
    REQUIRE(g.rows == 4);
    REQUIRE(g.cols == 3);
    for (std::uint32_t bi = 0; bi < g.rows; ++bi)
        for (std::uint32_t bj = 0; bj < g.cols; ++bj) {
            const BundleFootprint f = bundle_footprint(h, bi, bj);
            REQUIRE(f.axial_end_mm - f.axial_start_mm == Catch::Approx(1.0));
            REQUIRE(f.rotary_end_deg - f.rotary_start_deg == Catch::Approx(2.0));
            std::uint32_t ri = 99, rj = 99;
            REQUIRE(bundle_index_of(h, 0.5 * (f.axial_start_mm + f.axial_end_mm),
                                    0.5 * (f.rotary_start_deg + f.rotary_end_deg), ri, rj));
            REQUIRE(ri == bi);
            REQUIRE(rj == bj);
        }
    std::uint32_t ri, rj;
    REQUIRE_FALSE(bundle_index_of(h, 4.9, 31.0, ri, rj));   // before the grid
    REQUIRE_FALSE(bundle_index_of(h, 9.1, 31.0, ri, rj));   // past the last bundle row
    REQUIRE_FALSE(bundle_index_of(h, 5.5, 36.1, ri, rj));   // past the last bundle col

    SECTION("cell windows tile the grid") {
        const CellWindow w = bundle_cells(2, 1);
        REQUIRE(w.i0 == 10);
        REQUIRE(w.i1 == 15);
        REQUIRE(w.j0 == 20);
        REQUIRE(w.j1 == 40);
    }
}

TEST_CASE("bundle values follow the (time, rotary, channel) layout exactly") {
    ScanHeader h;
    h.axial_count = 10;
    h.rotary_count = 40;
    h.samples_per_wave = 120;
    ScanVolume v(h);
    for (std::uint32_t i = 0; i < h.axial_count; ++i)
        for (std::uint32_t j = 0; j < h.rotary_count; ++j) {
            auto w = v.wave(i, j);
            for (std::uint32_t k = 0; k < h.samples_per_wave; ++k)
                w[k] = static_cast<std::uint8_t>((7u * i + 3u * j + k) % 251);
        }

    const std::uint32_t anchor = 60;
    std::uint64_t dropped = 123;
    const auto bundles = bundle_volume(v, anchor, &dropped);
    REQUIRE(dropped == 0);
    REQUIRE(bundles.size() == 4);  // 2 x 2

    for (const auto& b : bundles) {
        for (std::uint32_t t = 0; t < kWaveWindow; ++t)
            for (std::uint32_t r = 0; r < kBundleRotary; ++r)
                for (std::uint32_t c = 0; c < kBundleAxial; ++c) {
                    const std::uint32_t i = b.bi * kBundleAxial + c;
                    const std::uint32_t j = b.bj * kBundleRotary + r;
                    const std::uint32_t src = anchor - kWaveWindow / 2 + t;
                    // same normalization expression as the assembler: a
                    // reciprocal multiply, not a division (one-ulp difference)
                    const float expect =
                        static_cast<float>(v.wave(i, j)[src]) * (1.0f / 255.0f);
                    REQUIRE(b.at(t, r, c) == expect);
                }
    }

    SECTION("bundles arrive ordered by (bi, bj)") {
        REQUIRE(bundles[0].bi == 0);
        REQUIRE(bundles[0].bj == 0);
        REQUIRE(bundles[1].bj == 1);
        REQUIRE(bundles[2].bi == 1);
        REQUIRE(bundles[3].bj == 1);
    }
}

TEST_CASE("bundle assembler enforces its protocol") {
    ScanHeader h;
    h.axial_count = 7;  // one full bundle row + 2 dropped rows
    h.rotary_count = 20;
    h.samples_per_wave = 100;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(h.row_bytes()), 9);
    std::size_t emitted = 0;
    BundleAssembler a(h, 50, [&](BundleTensor&&) { ++emitted; });

    SECTION("wrong row size") {
        std::vector<std::uint8_t> bad(row.size() - 1);
        REQUIRE_THROWS_AS(a.push_row(bad), ShapeError);
    }
    SECTION("early finish") {
        a.push_row(row);
        REQUIRE_THROWS_AS(a.finish(), ShapeError);
    }
    SECTION("full run drops the partial tail rows") {
        for (int i = 0; i < 7; ++i) a.push_row(row);
        REQUIRE_THROWS_AS(a.push_row(row), ShapeError);
        REQUIRE(a.finish() == 2ull * 20);
        REQUIRE(emitted == 1);
    }
}

TEST_CASE("grayscale rendering is a direct quantization of bundle values") {
    BundleTensor b(0, 0);
    for (std::uint32_t t = 0; t < kWaveWindow; ++t)
        for (std::uint32_t r = 0; r < kBundleRotary; ++r)
            for (std::uint32_t c = 0; c < kBundleAxial; ++c)
                b.at(t, r, c) = static_cast<float>((t + 2 * r + 3 * c) % 256) / 255.0f;

    const auto ch = render_channel_gray(b, 2);
    REQUIRE(ch.size() == static_cast<std::size_t>(kWaveWindow) * kBundleRotary);
    for (std::uint32_t t = 0; t < kWaveWindow; ++t)
        for (std::uint32_t r = 0; r < kBundleRotary; ++r)
            REQUIRE(ch[t * kBundleRotary + r] == (t + 2 * r + 6) % 256);

    const auto all = render_bundle_gray(b);
    REQUIRE(all.size() == static_cast<std::size_t>(kWaveWindow) * kBundleRotary * kBundleAxial);
    for (std::uint32_t t = 0; t < kWaveWindow; ++t)
        for (std::uint32_t c = 0; c < kBundleAxial; ++c)
            for (std::uint32_t r = 0; r < kBundleRotary; ++r)
                REQUIRE(all[t * 100 + c * kBundleRotary + r] == (t + 2 * r + 3 * c) % 256);

    REQUIRE_THROWS_AS(render_channel_gray(b, 5), ShapeError);
}
