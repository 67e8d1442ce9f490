#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "utb/dataset.hpp"
#include "utb/detector.hpp"
#include "utb/error.hpp"
#include "utb/image.hpp"
#include "utb/scan_model.hpp"
#include "utb/sigproc.hpp"

namespace utb {

struct ConfusionMatrix {
    std::uint64_t tn = 0, fp = 0, fn = 0, tp = 0;
    std::uint64_t total() const { return tn + fp + fn + tp; }
    bool operator==(const ConfusionMatrix&) const = default;
};

// Positive class = 1; any nonzero label counts as positive.
inline ConfusionMatrix confusion(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size())
        throw ShapeError("prediction and truth label counts differ");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0;
        const bool t = truth[i] != 0;
        if (t)
            ++(p ? cm.tp : cm.fn);
        else
            ++(p ? cm.fp : cm.tn);
    }
    return cm;
}

// Metrics with zero denominators are undefined, not zero.
struct Metrics {
    std::optional<double> accuracy, sensitivity, specificity;
};

inline Metrics metrics(const ConfusionMatrix& cm) {
    Metrics m;
    if (cm.total())
        m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    if (cm.tp + cm.fn)
        m.sensitivity = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (cm.tn + cm.fp)
        m.specificity = static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
    return m;
}

// ---- per-flaw evaluation -------------------------------------------------------

struct RegionHit {
    FlawRegion region;
    bool required = false;  // depth at or beyond the qualifying threshold
    bool hit = false;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> hitting_bundles;
};

struct FlawHitReport {
    std::vector<RegionHit> regions;
    std::vector<Detection> open_field_fps;
    // Detections overlapping only sub-threshold regions: explainable, not FPs.
    std::uint64_t absorbed_count = 0;
    std::uint64_t region_overlapping_count = 0;
    std::uint64_t total_positives = 0;

    std::uint64_t required_count() const {
        std::uint64_t n = 0;
        for (const auto& r : regions) n += r.required ? 1 : 0;
        return n;
    }
    std::uint64_t required_hit_count() const {
        std::uint64_t n = 0;
        for (const auto& r : regions) n += (r.required && r.hit) ? 1 : 0;
        return n;
    }
};

namespace evalkit_detail {

// Closed-interval rectangle intersection; boundary contact counts.
inline bool overlaps(const BundleFootprint& f, const FlawRegion& r) {
    return f.axial_start_mm <= r.axial_end_mm && r.axial_start_mm <= f.axial_end_mm &&
           f.rotary_start_deg <= r.rotary_end_deg && r.rotary_start_deg <= f.rotary_end_deg;
}

}  // namespace evalkit_detail

// Assigns every retained positive detection to exactly one of: overlapping a
// qualifying region (a hit), overlapping only sub-threshold truth (absorbed),
// or an open-field false positive. Only class-1 detections participate.
inline FlawHitReport flaw_hits(std::span<const Detection> retained,
                               std::span<const FlawRegion> truth, const ScanHeader& header) {
    FlawHitReport report;
    report.regions.reserve(truth.size());
    for (const auto& r : truth)
        report.regions.push_back(
            RegionHit{r, r.max_depth_mm >= kQualifyingDepthMm, false, {}});

    for (const Detection& d : retained) {
        if (d.cls == 0) continue;
        ++report.total_positives;
        const BundleFootprint f = bundle_footprint(header, d.bi, d.bj);
        bool any_required = false, any_sub = false;
        for (auto& rh : report.regions) {
            if (!evalkit_detail::overlaps(f, rh.region)) continue;
            (rh.required ? any_required : any_sub) = true;
            rh.hit = true;
            rh.hitting_bundles.emplace_back(d.bi, d.bj);
        }
        if (any_required)
            ++report.region_overlapping_count;
        else if (any_sub)
            ++report.absorbed_count;
        else
            report.open_field_fps.push_back(d);
    }
    return report;
}

inline void write_flaw_hit_report(const FlawHitReport& report, std::ostream& out) {
    for (std::size_t k = 0; k < report.regions.size(); ++k) {
        const RegionHit& rh = report.regions[k];
        char depth[32];
        std::snprintf(depth, sizeof depth, "%.6f", rh.region.max_depth_mm);
        out << "region " << k << " kind " << to_string(rh.region.kind) << " depth_mm " << depth
            << (rh.required ? " required" : " informational") << (rh.hit ? " hit" : " miss");
        out << " bundles";
        for (const auto& [bi, bj] : rh.hitting_bundles) out << ' ' << bi << ',' << bj;
        out << '\n';
    }
    for (const Detection& d : report.open_field_fps) {
        char score[32];
        std::snprintf(score, sizeof score, "%.6f", static_cast<double>(d.score));
        out << "open_field_fp bundle " << d.bi << ' ' << d.bj << " score " << score << '\n';
    }
    out << "summary required " << report.required_count() << " hit "
        << report.required_hit_count() << " open_field_fps " << report.open_field_fps.size()
        << " absorbed " << report.absorbed_count << " positives " << report.total_positives
        << '\n';
}

// ---- overlay rendering -----------------------------------------------------------

struct OverlayImage {
    std::uint32_t width = 0, height = 0;
    std::vector<Rgb> pixels;
};

// Axial x rotary map: measured-depth grayscale background (normalized to the
// deepest measured cell), truth regions outlined, retained positives marked.
inline OverlayImage overlay_render(const TofGrid& grid, const ScanHeader& header,
                                   std::span<const Detection> retained,
                                   std::span<const FlawRegion> truth) {
    OverlayImage img;
    img.width = grid.rotary_count;
    img.height = grid.axial_count;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, Rgb{0, 0, 0});

    const std::vector<double> depth = depth_map_from_row_ref(grid, header, 0);
    double dmax = 0.0;
    for (double d : depth)
        if (!std::isnan(d)) dmax = std::max(dmax, d);
    for (std::size_t k = 0; k < depth.size(); ++k) {
        double d = depth[k];
        if (std::isnan(d) || d < 0.0 || dmax <= 0.0) d = 0.0;
        const auto g = static_cast<std::uint8_t>(std::lround(255.0 * (dmax > 0.0 ? d / dmax : 0.0)));
        img.pixels[k] = Rgb{g, g, g};
    }

    auto cell_of = [&](double axial_mm, double rotary_deg, std::int64_t& i, std::int64_t& j) {
        i = static_cast<std::int64_t>(std::lround((axial_mm - header.axial_origin_mm) /
                                                  header.axial_pitch_mm));
        j = static_cast<std::int64_t>(std::lround((rotary_deg - header.rotary_origin_deg) /
                                                  header.rotary_pitch_deg));
    };
    auto put = [&](std::int64_t i, std::int64_t j, Rgb c) {
        if (i < 0 || j < 0 || i >= static_cast<std::int64_t>(img.height) ||
            j >= static_cast<std::int64_t>(img.width))
            return;
        img.pixels[static_cast<std::size_t>(i) * img.width + static_cast<std::size_t>(j)] = c;
    };

    const Rgb red{255, 0, 0};
    for (const auto& r : truth) {
        std::int64_t i0, j0, i1, j1;
        cell_of(r.axial_start_mm, r.rotary_start_deg, i0, j0);
        cell_of(r.axial_end_mm, r.rotary_end_deg, i1, j1);
        i0 = std::clamp<std::int64_t>(i0, 0, img.height - 1);
        i1 = std::clamp<std::int64_t>(i1, 0, img.height - 1);
        j0 = std::clamp<std::int64_t>(j0, 0, img.width - 1);
        j1 = std::clamp<std::int64_t>(j1, 0, img.width - 1);
        for (std::int64_t j = j0; j <= j1; ++j) {
            put(i0, j, red);
            put(i1, j, red);
        }
        for (std::int64_t i = i0; i <= i1; ++i) {
            put(i, j0, red);
            put(i, j1, red);
        }
    }

    const Rgb blue{0, 0, 255};
    for (const Detection& d : retained) {
        if (d.cls == 0) continue;
        const CellWindow wnd = bundle_cells(d.bi, d.bj);
        const std::int64_t ci = wnd.i0 + kBundleAxial / 2;
        const std::int64_t cj = wnd.j0 + kBundleRotary / 2;
        put(ci, cj, blue);
        put(ci - 1, cj, blue);
        put(ci + 1, cj, blue);
        put(ci, cj - 1, blue);
        put(ci, cj + 1, blue);
    }
    return img;
}

inline OverlayImage overlay_render(const ScanVolume& volume,
                                   std::span<const Detection> retained,
                                   std::span<const FlawRegion> truth) {
    return overlay_render(measure_tof_grid(volume), volume.header(), retained, truth);
}

inline std::uint64_t write_overlay_ppm(const OverlayImage& img, std::ostream& out) {
    return write_ppm(img.width, img.height, img.pixels, out);
}

}  // namespace utb
