#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "utb/error.hpp"
#include "utb/scan_model.hpp"

namespace utb {

// Classifier input geometry: 5 axial x 20 rotary waveforms, truncated to 100
// samples each, one bundle per 1mm x 2deg patch at the native pitches below.
inline constexpr std::uint32_t kWaveWindow = 100;
inline constexpr std::uint32_t kBundleAxial = 5;
inline constexpr std::uint32_t kBundleRotary = 20;
inline constexpr std::size_t kBundleValues =
    static_cast<std::size_t>(kWaveWindow) * kBundleRotary * kBundleAxial;
inline constexpr double kNativeAxialPitchMm = 0.2;
inline constexpr double kNativeRotaryPitchDeg = 0.1;

struct PeakEstimate {
    bool valid = false;
    std::uint32_t index = 0;
    double refined_tof_ns = 0.0;
    double amplitude = 0.0;
};

// Argmax peak, earliest index on ties, with 3-point parabolic sub-sample
// refinement (skipped at array edges). All-zero waveform -> invalid.
inline PeakEstimate detect_peak(std::span<const std::uint8_t> wave, double sample_period_ns) {
    if (wave.empty()) throw MeasureError("cannot detect a peak in an empty waveform");
    std::size_t best = 0;
    std::uint8_t best_value = wave[0];
    for (std::size_t k = 1; k < wave.size(); ++k) {
        if (wave[k] > best_value) {
            best_value = wave[k];
            best = k;
        }
    }
    if (best_value == 0) return PeakEstimate{};

    double refined = static_cast<double>(best);
    if (best > 0 && best + 1 < wave.size()) {
        const double ym = wave[best - 1];
        const double y0 = wave[best];
        const double yp = wave[best + 1];
        const double denom = ym - 2.0 * y0 + yp;
        if (denom != 0.0) {
            const double delta = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
            refined += delta;
        }
    }
    return PeakEstimate{true, static_cast<std::uint32_t>(best), refined * sample_period_ns,
                        static_cast<double>(best_value)};
}

// Pulse-echo conversion: a TOF shift of dt covers the extra depth twice.
inline double depth_from_shift_ns(double shift_ns, double velocity_mm_per_us) {
    return 0.5 * shift_ns * velocity_mm_per_us / 1000.0;
}

inline double shift_ns_from_depth(double depth_mm, double velocity_mm_per_us) {
    return 2000.0 * depth_mm / velocity_mm_per_us;
}

// Signed: negative means the target surface is shallower than the reference.
inline double depth_single_ref(const PeakEstimate& target, const PeakEstimate& reference,
                               const ScanHeader& header) {
    if (!target.valid || !reference.valid)
        throw MeasureError("depth measurement requires valid peaks");
    return depth_from_shift_ns(target.refined_tof_ns - reference.refined_tof_ns,
                               header.velocity_mm_per_us);
}

// Reference TOF linearly interpolated between two healthy positions a < t < b
// on any one axis (axial or rotary; the caller chooses the axis).
inline double depth_two_ref(const PeakEstimate& target, const PeakEstimate& ref_a, double a,
                            const PeakEstimate& ref_b, double b, double t,
                            const ScanHeader& header) {
    if (!target.valid || !ref_a.valid || !ref_b.valid)
        throw MeasureError("depth measurement requires valid peaks");
    if (!(a < t && t < b))
        throw MeasureError("target position must lie strictly between the references");
    const double w = (t - a) / (b - a);
    const double ref_tof = ref_a.refined_tof_ns + w * (ref_b.refined_tof_ns - ref_a.refined_tof_ns);
    return depth_from_shift_ns(target.refined_tof_ns - ref_tof, header.velocity_mm_per_us);
}

// Window [anchor-50, anchor+50) copied into out, zero-padded where it falls
// outside the waveform. The anchor is global for a scan so TOF shifts stay
// visible inside the window.
inline void truncate_wave(std::span<const std::uint8_t> wave, std::int64_t anchor_index,
                          std::span<std::uint8_t> out) {
    if (out.size() != kWaveWindow) throw ShapeError("truncation window must be 100 samples");
    const std::int64_t start = anchor_index - kWaveWindow / 2;
    const auto n = static_cast<std::int64_t>(wave.size());
    for (std::uint32_t k = 0; k < kWaveWindow; ++k) {
        const std::int64_t src = start + k;
        out[k] = (src >= 0 && src < n) ? wave[static_cast<std::size_t>(src)] : std::uint8_t{0};
    }
}

// Global truncation anchor: lower-median argmax index over one axial row
// (callers pass the scan's first row as a healthy-region proxy). All-zero
// waveforms contribute index 0.
inline std::uint32_t compute_anchor(std::span<const std::uint8_t> row, const ScanHeader& header) {
    if (row.size() != header.row_bytes()) throw ShapeError("anchor row has wrong size");
    std::vector<std::uint32_t> indices(header.rotary_count);
    for (std::uint32_t j = 0; j < header.rotary_count; ++j) {
        const auto wave = row.subspan(static_cast<std::size_t>(j) * header.samples_per_wave,
                                      header.samples_per_wave);
        indices[j] = detect_peak(wave, header.sample_period_ns).index;
    }
    const std::size_t mid = (indices.size() - 1) / 2;
    std::nth_element(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(mid),
                     indices.end());
    return indices[mid];
}

// ---- TOF grid ----------------------------------------------------------------

// Refined peak TOF per waveform; NaN marks waveforms with no echo.
struct TofGrid {
    std::uint32_t axial_count = 0;
    std::uint32_t rotary_count = 0;
    std::vector<double> tof_ns;
    std::uint64_t invalid_count = 0;

    TofGrid() = default;
    TofGrid(std::uint32_t ac, std::uint32_t rc)
        : axial_count(ac),
          rotary_count(rc),
          tof_ns(static_cast<std::size_t>(ac) * rc, std::numeric_limits<double>::quiet_NaN()) {}

    double at(std::uint32_t i, std::uint32_t j) const {
        return tof_ns[static_cast<std::size_t>(i) * rotary_count + j];
    }
    bool is_valid(std::uint32_t i, std::uint32_t j) const { return !std::isnan(at(i, j)); }
};

inline void measure_row_tofs(std::span<const std::uint8_t> row, const ScanHeader& header,
                             std::uint32_t i, TofGrid& grid) {
    if (row.size() != header.row_bytes()) throw ShapeError("TOF row has wrong size");
    for (std::uint32_t j = 0; j < header.rotary_count; ++j) {
        const auto wave = row.subspan(static_cast<std::size_t>(j) * header.samples_per_wave,
                                      header.samples_per_wave);
        const PeakEstimate p = detect_peak(wave, header.sample_period_ns);
        if (p.valid)
            grid.tof_ns[static_cast<std::size_t>(i) * grid.rotary_count + j] = p.refined_tof_ns;
        else
            ++grid.invalid_count;
    }
}

inline TofGrid measure_tof_grid(const ScanVolume& volume) {
    const ScanHeader& h = volume.header();
    TofGrid grid(h.axial_count, h.rotary_count);
    for (std::uint32_t i = 0; i < h.axial_count; ++i) measure_row_tofs(volume.row(i), h, i, grid);
    return grid;
}

// Signed per-cell depth against the same rotary position in a reference row
// (cancels rotary-periodic chatter exactly). NaN where either TOF is invalid.
inline std::vector<double> depth_map_from_row_ref(const TofGrid& grid, const ScanHeader& header,
                                                  std::uint32_t reference_row = 0) {
    if (reference_row >= grid.axial_count) throw ShapeError("reference row out of range");
    std::vector<double> depth(grid.tof_ns.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::uint32_t i = 0; i < grid.axial_count; ++i) {
        for (std::uint32_t j = 0; j < grid.rotary_count; ++j) {
            const double t = grid.at(i, j);
            const double r = grid.at(reference_row, j);
            if (!std::isnan(t) && !std::isnan(r))
                depth[static_cast<std::size_t>(i) * grid.rotary_count + j] =
                    depth_from_shift_ns(t - r, header.velocity_mm_per_us);
        }
    }
    return depth;
}

// ---- bundling ----------------------------------------------------------------

// One classifier input: values laid out (time, rotary, channel) with the
// axial channel fastest, every value in [0,1] (amplitude / 255).
struct BundleTensor {
    std::uint32_t bi = 0;  // bundle axial index
    std::uint32_t bj = 0;  // bundle rotary index
    std::vector<float> values;

    BundleTensor() : values(kBundleValues, 0.0f) {}
    BundleTensor(std::uint32_t bi_, std::uint32_t bj_) : bi(bi_), bj(bj_), values(kBundleValues) {}

    float at(std::uint32_t t, std::uint32_t r, std::uint32_t c) const {
        return values[(static_cast<std::size_t>(t) * kBundleRotary + r) * kBundleAxial + c];
    }
    float& at(std::uint32_t t, std::uint32_t r, std::uint32_t c) {
        return values[(static_cast<std::size_t>(t) * kBundleRotary + r) * kBundleAxial + c];
    }
};

struct BundleGrid {
    std::uint32_t rows = 0;  // bundle rows (axial)
    std::uint32_t cols = 0;  // bundle cols (rotary)
    std::uint64_t dropped_waveforms = 0;

    std::uint64_t count() const { return static_cast<std::uint64_t>(rows) * cols; }
};

// Tiling is defined only at the native pitches; anything else is a config
// error rather than a silent rescale.
inline BundleGrid bundle_grid(const ScanHeader& header) {
    if (std::abs(header.axial_pitch_mm - kNativeAxialPitchMm) > 1e-12 ||
        std::abs(header.rotary_pitch_deg - kNativeRotaryPitchDeg) > 1e-12)
        throw ConfigError("bundling requires 0.2mm axial and 0.1deg rotary pitches");
    BundleGrid g;
    g.rows = header.axial_count / kBundleAxial;
    g.cols = header.rotary_count / kBundleRotary;
    g.dropped_waveforms =
        static_cast<std::uint64_t>(header.axial_count) * header.rotary_count -
        static_cast<std::uint64_t>(g.rows) * kBundleAxial * g.cols * kBundleRotary;
    return g;
}

// Cell-index window [i0,i1) x [j0,j1) covered by bundle (bi,bj).
struct CellWindow {
    std::uint32_t i0, i1, j0, j1;
};

inline CellWindow bundle_cells(std::uint32_t bi, std::uint32_t bj) {
    return CellWindow{bi * kBundleAxial, (bi + 1) * kBundleAxial, bj * kBundleRotary,
                      (bj + 1) * kBundleRotary};
}

// Physical footprint [start, end) along each axis.
struct BundleFootprint {
    double axial_start_mm, axial_end_mm;
    double rotary_start_deg, rotary_end_deg;
};

inline BundleFootprint bundle_footprint(const ScanHeader& h, std::uint32_t bi, std::uint32_t bj) {
    return BundleFootprint{
        h.axial_origin_mm + bi * (kBundleAxial * h.axial_pitch_mm),
        h.axial_origin_mm + (bi + 1) * (kBundleAxial * h.axial_pitch_mm),
        h.rotary_origin_deg + bj * (kBundleRotary * h.rotary_pitch_deg),
        h.rotary_origin_deg + (bj + 1) * (kBundleRotary * h.rotary_pitch_deg)};
}

// Inverse of bundle_footprint for interior coordinates; false when the
// coordinate falls outside every retained bundle.
inline bool bundle_index_of(const ScanHeader& h, double axial_mm, double rotary_deg,
                            std::uint32_t& bi, std::uint32_t& bj) {
    const BundleGrid g = bundle_grid(h);
    const double fi = (axial_mm - h.axial_origin_mm) / (kBundleAxial * h.axial_pitch_mm);
    const double fj = (rotary_deg - h.rotary_origin_deg) / (kBundleRotary * h.rotary_pitch_deg);
    if (fi < 0.0 || fj < 0.0) return false;
    const auto i = static_cast<std::uint64_t>(fi);
    const auto j = static_cast<std::uint64_t>(fj);
    if (i >= g.rows || j >= g.cols) return false;
    bi = static_cast<std::uint32_t>(i);
    bj = static_cast<std::uint32_t>(j);
    return true;
}

// Consumes axial rows in order, truncates every waveform around the anchor,
// and emits one row of bundles each time 5 axial rows complete. Rows beyond
// the last full bundle row are dropped (counted, never emitted).
class BundleAssembler {
public:
    using Sink = std::function<void(BundleTensor&&)>;

    BundleAssembler(const ScanHeader& header, std::uint32_t anchor, Sink sink)
        : header_(header),
          grid_(bundle_grid(header)),
          anchor_(anchor),
          sink_(std::move(sink)),
          staging_(static_cast<std::size_t>(kBundleAxial) * header.rotary_count * kWaveWindow) {}

    const BundleGrid& grid() const { return grid_; }

    void push_row(std::span<const std::uint8_t> row) {
        if (next_row_ >= header_.axial_count) throw ShapeError("more rows than the header declares");
        if (row.size() != header_.row_bytes()) throw ShapeError("bundle row has wrong size");
        const std::uint32_t i = next_row_++;
        if (i >= grid_.rows * kBundleAxial) return;  // partial axial window, dropped

        const std::uint32_t a = i % kBundleAxial;
        for (std::uint32_t j = 0; j < header_.rotary_count; ++j) {
            const auto wave = row.subspan(static_cast<std::size_t>(j) * header_.samples_per_wave,
                                          header_.samples_per_wave);
            truncate_wave(wave, anchor_, staging_slot(a, j));
        }
        if (a == kBundleAxial - 1) emit_bundle_row(i / kBundleAxial);
    }

    // Returns the dropped-waveform count; all full rows must have been pushed.
    std::uint64_t finish() {
        if (next_row_ != header_.axial_count)
            throw ShapeError("bundle assembly finished before all rows were pushed");
        return grid_.dropped_waveforms;
    }

private:
    std::span<std::uint8_t> staging_slot(std::uint32_t a, std::uint32_t j) {
        return std::span<std::uint8_t>(staging_)
            .subspan((static_cast<std::size_t>(a) * header_.rotary_count + j) * kWaveWindow,
                     kWaveWindow);
    }

    void emit_bundle_row(std::uint32_t bi) {
        constexpr float kScale = 1.0f / 255.0f;
        for (std::uint32_t bj = 0; bj < grid_.cols; ++bj) {
            BundleTensor b(bi, bj);
            for (std::uint32_t t = 0; t < kWaveWindow; ++t)
                for (std::uint32_t r = 0; r < kBundleRotary; ++r)
                    for (std::uint32_t c = 0; c < kBundleAxial; ++c)
                        b.at(t, r, c) =
                            kScale *
                            staging_[(static_cast<std::size_t>(c) * header_.rotary_count +
                                      (static_cast<std::size_t>(bj) * kBundleRotary + r)) *
                                         kWaveWindow +
                                     t];
            sink_(std::move(b));
        }
    }

    ScanHeader header_;
    BundleGrid grid_;
    std::uint32_t anchor_ = 0;
    Sink sink_;
    std::vector<std::uint8_t> staging_;
    std::uint32_t next_row_ = 0;
};

// In-memory convenience over BundleAssembler; bundles ordered by (bi, bj).
inline std::vector<BundleTensor> bundle_volume(const ScanVolume& volume, std::uint32_t anchor,
                                               std::uint64_t* dropped_waveforms = nullptr) {
    std::vector<BundleTensor> out;
    const ScanHeader& h = volume.header();
    out.reserve(bundle_grid(h).count());
    BundleAssembler assembler(h, anchor, [&](BundleTensor&& b) { out.push_back(std::move(b)); });
    for (std::uint32_t i = 0; i < h.axial_count; ++i) assembler.push_row(volume.row(i));
    const std::uint64_t dropped = assembler.finish();
    if (dropped_waveforms) *dropped_waveforms = dropped;
    return out;
}

// ---- grayscale rendering -------------------------------------------------------

inline std::uint8_t gray_of(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// One channel as an image: row = time sample, column = rotary waveform.
inline std::vector<std::uint8_t> render_channel_gray(const BundleTensor& b, std::uint32_t channel) {
    if (channel >= kBundleAxial) throw ShapeError("channel out of range");
    std::vector<std::uint8_t> img(static_cast<std::size_t>(kWaveWindow) * kBundleRotary);
    for (std::uint32_t t = 0; t < kWaveWindow; ++t)
        for (std::uint32_t r = 0; r < kBundleRotary; ++r)
            img[static_cast<std::size_t>(t) * kBundleRotary + r] = gray_of(b.at(t, r, channel));
    return img;
}

// All 5 channels side by side (channel-major column groups of 20).
inline std::vector<std::uint8_t> render_bundle_gray(const BundleTensor& b) {
    const std::uint32_t cols = kBundleAxial * kBundleRotary;
    std::vector<std::uint8_t> img(static_cast<std::size_t>(kWaveWindow) * cols);
    for (std::uint32_t t = 0; t < kWaveWindow; ++t)
        for (std::uint32_t c = 0; c < kBundleAxial; ++c)
            for (std::uint32_t r = 0; r < kBundleRotary; ++r)
                img[static_cast<std::size_t>(t) * cols + c * kBundleRotary + r] =
                    gray_of(b.at(t, r, c));
    return img;
}

}  // namespace utb
