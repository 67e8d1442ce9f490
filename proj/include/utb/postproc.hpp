#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "utb/detector.hpp"
#include "utb/error.hpp"
#include "utb/scan_model.hpp"
#include "utb/sigproc.hpp"

namespace utb {

// How the healthy reference TOF is chosen when re-measuring a positive bundle.
//   in_bundle_channel_mean: per axial channel, the mean TOF of its own 20
//     waveforms (self included). Suits flaws occupying a minority of a bundle.
//   neighbor_healthy_row: the TOF at the same rotary position in a designated
//     healthy row, which cancels rotary-periodic chatter per waveform and
//     stays unbiased when a flaw spans the whole bundle.
enum class RefPolicy : std::uint8_t { in_bundle_channel_mean = 0, neighbor_healthy_row = 1 };

inline const char* to_string(RefPolicy p) {
    return p == RefPolicy::in_bundle_channel_mean ? "in_bundle_channel_mean"
                                                  : "neighbor_healthy_row";
}

inline bool ref_policy_from(const std::string& s, RefPolicy& out) {
    if (s == "in_bundle_channel_mean") out = RefPolicy::in_bundle_channel_mean;
    else if (s == "neighbor_healthy_row") out = RefPolicy::neighbor_healthy_row;
    else return false;
    return true;
}

struct PostProcConfig {
    double threshold_mm = 0.09;
    RefPolicy policy = RefPolicy::in_bundle_channel_mean;
    std::uint32_t reference_row = 0;  // neighbor_healthy_row only

    void validate() const {
        if (!(threshold_mm > 0.0 && threshold_mm <= 0.1))
            throw ConfigError("post-processing threshold must be in (0, 0.1] mm");
    }
};

// Decision record for one CNN-positive bundle.
struct DepthDecision {
    std::uint32_t bi = 0, bj = 0;
    bool retained = false;
    // Max over the bundle of per-waveform estimated depth; NaN when invalid
    // peaks forced conservative retention.
    double max_estimated_depth_mm = 0.0;
    bool invalid_peaks = false;
};

struct PostProcResult {
    // Input sequence minus rejected positives; negatives pass through.
    std::vector<Detection> retained;
    std::vector<DepthDecision> report;  // one entry per positive input
    std::uint64_t warning_count = 0;    // positives retained due to invalid peaks
};

namespace postproc_detail {

// Max per-waveform |tof - reference| over the bundle, as a depth. Returns NaN
// when any needed TOF is invalid.
inline double max_estimated_depth(const TofGrid& grid, const ScanHeader& header,
                                  const CellWindow& wnd, const PostProcConfig& cfg) {
    double max_dev_ns = 0.0;
    if (cfg.policy == RefPolicy::in_bundle_channel_mean) {
        for (std::uint32_t i = wnd.i0; i < wnd.i1; ++i) {
            double sum = 0.0;
            for (std::uint32_t j = wnd.j0; j < wnd.j1; ++j) {
                if (!grid.is_valid(i, j)) return std::numeric_limits<double>::quiet_NaN();
                sum += grid.at(i, j);
            }
            const double ref = sum / (wnd.j1 - wnd.j0);
            for (std::uint32_t j = wnd.j0; j < wnd.j1; ++j)
                max_dev_ns = std::max(max_dev_ns, std::abs(grid.at(i, j) - ref));
        }
    } else {
        for (std::uint32_t j = wnd.j0; j < wnd.j1; ++j)
            if (!grid.is_valid(cfg.reference_row, j))
                return std::numeric_limits<double>::quiet_NaN();
        for (std::uint32_t i = wnd.i0; i < wnd.i1; ++i) {
            for (std::uint32_t j = wnd.j0; j < wnd.j1; ++j) {
                if (!grid.is_valid(i, j)) return std::numeric_limits<double>::quiet_NaN();
                max_dev_ns = std::max(max_dev_ns,
                                      std::abs(grid.at(i, j) - grid.at(cfg.reference_row, j)));
            }
        }
    }
    return depth_from_shift_ns(max_dev_ns, header.velocity_mm_per_us);
}

}  // namespace postproc_detail

// Re-measures each CNN-positive bundle and drops those whose estimated depth
// stays below the threshold. Invalid peaks retain the bundle conservatively
// (a missed flaw costs more than a spurious detection).
inline PostProcResult filter_detections(const std::vector<Detection>& detections,
                                        const TofGrid& grid, const ScanHeader& header,
                                        const PostProcConfig& cfg) {
    cfg.validate();
    if (cfg.policy == RefPolicy::neighbor_healthy_row && cfg.reference_row >= grid.axial_count)
        throw ConfigError("reference row lies outside the scan");
    PostProcResult result;
    result.retained.reserve(detections.size());
    for (const Detection& d : detections) {
        if (d.cls == 0) {
            result.retained.push_back(d);
            continue;
        }
        const CellWindow wnd = bundle_cells(d.bi, d.bj);
        if (wnd.i1 > grid.axial_count || wnd.j1 > grid.rotary_count)
            throw CompatError("detection references a bundle outside the scan");
        DepthDecision dec;
        dec.bi = d.bi;
        dec.bj = d.bj;
        dec.max_estimated_depth_mm =
            postproc_detail::max_estimated_depth(grid, header, wnd, cfg);
        if (std::isnan(dec.max_estimated_depth_mm)) {
            dec.retained = true;
            dec.invalid_peaks = true;
            ++result.warning_count;
        } else {
            dec.retained = dec.max_estimated_depth_mm >= cfg.threshold_mm;
        }
        if (dec.retained) result.retained.push_back(d);
        result.report.push_back(dec);
    }
    return result;
}

inline PostProcResult filter_detections(const std::vector<Detection>& detections,
                                        const ScanVolume& volume, const PostProcConfig& cfg) {
    return filter_detections(detections, measure_tof_grid(volume), volume.header(), cfg);
}

// Line per positive bundle: coords, decision, max estimated depth.
inline void write_depth_report(const PostProcResult& result, std::ostream& out) {
    for (const auto& dec : result.report) {
        char depth[32];
        if (std::isnan(dec.max_estimated_depth_mm))
            std::snprintf(depth, sizeof depth, "na");
        else
            std::snprintf(depth, sizeof depth, "%.6f", dec.max_estimated_depth_mm);
        out << "bundle " << dec.bi << ' ' << dec.bj << ' '
            << (dec.retained ? "retained" : "rejected") << " max_depth_mm " << depth;
        if (dec.invalid_peaks) out << " invalid_peaks";
        out << '\n';
    }
}

}  // namespace utb
