#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "utb/error.hpp"
#include "utb/rng.hpp"
#include "utb/scan_model.hpp"

namespace utb {

// A flaw primitive: the region it occupies plus its nominal peak depth.
// Profiles are smooth depressions; the exact shapes are documented per kind
// in build_depth_field.
struct FlawSpec {
    FlawKind kind = FlawKind::debris;
    double axial_start_mm = 0.0;
    double axial_end_mm = 0.0;
    double rotary_start_deg = 0.0;
    double rotary_end_deg = 0.0;
    double peak_depth_mm = 0.0;
};

struct SynthConfig {
    ScanHeader header;
    std::vector<FlawSpec> flaws;
    double base_tof_ns = 4000.0;
    double pulse_width_ns = 30.0;  // Gaussian envelope sigma
    double chatter_amplitude_ns = 0.0;
    double chatter_period_deg = 45.0;
    double noise_sigma = 0.0;  // amplitude counts
    std::uint64_t rng_seed = 1;

    double max_depth_shift_ns() const {
        double peak = 0.0;
        for (const auto& f : flaws) peak = std::max(peak, f.peak_depth_mm);
        return 2000.0 * peak / header.velocity_mm_per_us;
    }

    void validate() const {
        header.validate();
        if (!(pulse_width_ns > 0.0)) throw ConfigError("pulse_width_ns must be > 0");
        if (!(chatter_period_deg > 0.0)) throw ConfigError("chatter_period_deg must be > 0");
        if (chatter_amplitude_ns < 0.0) throw ConfigError("chatter_amplitude_ns must be >= 0");
        if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
        for (const auto& f : flaws) {
            if (!(f.axial_start_mm < f.axial_end_mm) ||
                !(f.rotary_start_deg < f.rotary_end_deg))
                throw ConfigError("flaw extents must have start < end");
            if (!(f.peak_depth_mm >= 0.0)) throw ConfigError("flaw peak depth must be >= 0");
        }
        const double window_ns = header.samples_per_wave * header.sample_period_ns;
        const double latest = base_tof_ns + max_depth_shift_ns() + chatter_amplitude_ns +
                              3.0 * pulse_width_ns;
        if (latest > window_ns)
            throw ConfigError("pulse exceeds sampled window: base TOF + depth shift + chatter + "
                              "3*pulse_width = " +
                              std::to_string(latest) + " ns > " + std::to_string(window_ns) +
                              " ns");
        const double earliest = base_tof_ns - chatter_amplitude_ns - 3.0 * pulse_width_ns;
        if (earliest < 0.0) throw ConfigError("pulse starts before the sampled window");
    }
};

// Per-cell ground-truth depth, aligned 1:1 with the scan grid. Baseline 0.
class DepthField {
public:
    DepthField() = default;
    DepthField(std::uint32_t axial_count, std::uint32_t rotary_count)
        : axial_count_(axial_count),
          rotary_count_(rotary_count),
          depth_(static_cast<std::size_t>(axial_count) * rotary_count, 0.0f) {}

    std::uint32_t axial_count() const { return axial_count_; }
    std::uint32_t rotary_count() const { return rotary_count_; }

    float at(std::uint32_t i, std::uint32_t j) const { return depth_[idx(i, j)]; }
    float& at(std::uint32_t i, std::uint32_t j) { return depth_[idx(i, j)]; }

    float max_depth() const {
        float m = 0.0f;
        for (float d : depth_) m = std::max(m, d);
        return m;
    }

    // max over the cell-index window [i0, i1) x [j0, j1)
    float max_in_window(std::uint32_t i0, std::uint32_t i1, std::uint32_t j0,
                        std::uint32_t j1) const {
        float m = 0.0f;
        for (std::uint32_t i = i0; i < i1; ++i)
            for (std::uint32_t j = j0; j < j1; ++j) m = std::max(m, at(i, j));
        return m;
    }

    bool operator==(const DepthField&) const = default;

private:
    std::size_t idx(std::uint32_t i, std::uint32_t j) const {
        return static_cast<std::size_t>(i) * rotary_count_ + j;
    }

    std::uint32_t axial_count_ = 0;
    std::uint32_t rotary_count_ = 0;
    std::vector<float> depth_;
};

namespace synth_detail {

// Cosine taper: 1 at r=0 falling smoothly to 0 at r=1.
inline double cos_taper(double r) {
    if (r >= 1.0) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * r));
}

inline double snap(double value, double origin, double pitch, std::uint32_t count) {
    double k = std::round((value - origin) / pitch);
    k = std::clamp(k, 0.0, static_cast<double>(count - 1));
    return origin + k * pitch;
}

struct Depression {
    double center_axial_mm, center_rotary_deg;
    double half_len_mm, half_wid_deg;
    double peak_mm;
    bool flat_top_axial;  // fbbpf: flat plateau along the axial axis

    double depth_at(double axial_mm, double rotary_deg) const {
        const double ua = std::abs(axial_mm - center_axial_mm) / half_len_mm;
        const double ur = std::abs(rotary_deg - center_rotary_deg) / half_wid_deg;
        if (flat_top_axial) {
            constexpr double kPlateau = 0.7;
            if (ua >= 1.0 || ur >= 1.0) return 0.0;
            const double fa =
                ua <= kPlateau ? 1.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * (ua - kPlateau) /
                                                             (1.0 - kPlateau)));
            return peak_mm * fa * cos_taper(ur);
        }
        return peak_mm * cos_taper(std::sqrt(ua * ua + ur * ur));
    }
};

// Expands one flaw primitive into depressions. Centers are snapped to grid
// cells so the nominal peak depth is realized exactly at some cell.
inline std::vector<Depression> expand_primitive(const FlawSpec& f, const ScanHeader& h,
                                                std::uint64_t seed, std::size_t index) {
    std::vector<Depression> out;
    const double half_len = 0.5 * (f.axial_end_mm - f.axial_start_mm);
    const double half_wid = 0.5 * (f.rotary_end_deg - f.rotary_start_deg);
    const double cx = snap(0.5 * (f.axial_start_mm + f.axial_end_mm), h.axial_origin_mm,
                           h.axial_pitch_mm, h.axial_count);
    const double cr = snap(0.5 * (f.rotary_start_deg + f.rotary_end_deg), h.rotary_origin_deg,
                           h.rotary_pitch_deg, h.rotary_count);

    if (f.kind == FlawKind::crevice) {
        // Cluster of small pits filling the region; the first pit carries the
        // nominal peak depth.
        rng::SplitMix g(rng::mix(seed, 0x6372u, index));
        const double area = (2.0 * half_len) * (2.0 * half_wid);
        const int pits = std::clamp(static_cast<int>(std::lround(area)), 4, 14);
        for (int p = 0; p < pits; ++p) {
            Depression d{};
            d.half_len_mm = g.uniform(0.25, 0.5);
            d.half_wid_deg = g.uniform(0.25, 0.5);
            const double ax_lo = f.axial_start_mm + d.half_len_mm;
            const double ax_hi = f.axial_end_mm - d.half_len_mm;
            const double ro_lo = f.rotary_start_deg + d.half_wid_deg;
            const double ro_hi = f.rotary_end_deg - d.half_wid_deg;
            double pax = p == 0 ? 0.5 * (f.axial_start_mm + f.axial_end_mm)
                                : g.uniform(ax_lo, std::max(ax_lo, ax_hi));
            double pro = p == 0 ? 0.5 * (f.rotary_start_deg + f.rotary_end_deg)
                                : g.uniform(ro_lo, std::max(ro_lo, ro_hi));
            d.center_axial_mm = snap(pax, h.axial_origin_mm, h.axial_pitch_mm, h.axial_count);
            d.center_rotary_deg =
                snap(pro, h.rotary_origin_deg, h.rotary_pitch_deg, h.rotary_count);
            d.peak_mm = p == 0 ? f.peak_depth_mm : f.peak_depth_mm * g.uniform(0.4, 0.9);
            d.flat_top_axial = false;
            out.push_back(d);
        }
        return out;
    }

    Depression d{};
    d.center_axial_mm = cx;
    d.center_rotary_deg = cr;
    d.half_len_mm = half_len;
    d.half_wid_deg = half_wid;
    d.peak_mm = f.peak_depth_mm;
    d.flat_top_axial = (f.kind == FlawKind::fbbpf);
    out.push_back(d);
    return out;
}

}  // namespace synth_detail

inline DepthField build_depth_field(const SynthConfig& cfg) {
    cfg.validate();
    const ScanHeader& h = cfg.header;
    const double axial_last = h.axial_mm(h.axial_count - 1);
    const double rotary_last = h.rotary_deg(h.rotary_count - 1);
    DepthField field(h.axial_count, h.rotary_count);

    for (std::size_t fi = 0; fi < cfg.flaws.size(); ++fi) {
        const FlawSpec& f = cfg.flaws[fi];
        if (f.axial_start_mm < h.axial_origin_mm - 1e-9 || f.axial_end_mm > axial_last + 1e-9 ||
            f.rotary_start_deg < h.rotary_origin_deg - 1e-9 ||
            f.rotary_end_deg > rotary_last + 1e-9)
            throw ConfigError("flaw primitive " + std::to_string(fi) + " lies outside the grid");

        for (const auto& d : synth_detail::expand_primitive(f, h, cfg.rng_seed, fi)) {
            // cell index window covering the depression footprint
            const auto lo_i = static_cast<std::int64_t>(
                std::floor((d.center_axial_mm - d.half_len_mm - h.axial_origin_mm) /
                           h.axial_pitch_mm));
            const auto hi_i = static_cast<std::int64_t>(
                std::ceil((d.center_axial_mm + d.half_len_mm - h.axial_origin_mm) /
                          h.axial_pitch_mm));
            const auto lo_j = static_cast<std::int64_t>(
                std::floor((d.center_rotary_deg - d.half_wid_deg - h.rotary_origin_deg) /
                           h.rotary_pitch_deg));
            const auto hi_j = static_cast<std::int64_t>(
                std::ceil((d.center_rotary_deg + d.half_wid_deg - h.rotary_origin_deg) /
                          h.rotary_pitch_deg));
            for (std::int64_t i = std::max<std::int64_t>(0, lo_i);
                 i <= std::min<std::int64_t>(h.axial_count - 1, hi_i); ++i) {
                for (std::int64_t j = std::max<std::int64_t>(0, lo_j);
                     j <= std::min<std::int64_t>(h.rotary_count - 1, hi_j); ++j) {
                    const double depth = d.depth_at(h.axial_mm(static_cast<std::uint32_t>(i)),
                                                    h.rotary_deg(static_cast<std::uint32_t>(j)));
                    auto& cell = field.at(static_cast<std::uint32_t>(i),
                                          static_cast<std::uint32_t>(j));
                    cell = std::max(cell, static_cast<float>(depth));
                }
            }
        }
    }
    return field;
}

// Ground-truth regions matching what build_depth_field realizes on the grid
// (centers snapped, so extents may shift by up to half a pitch).
inline std::vector<FlawRegion> truth_regions(const SynthConfig& cfg) {
    const ScanHeader& h = cfg.header;
    std::vector<FlawRegion> out;
    out.reserve(cfg.flaws.size());
    for (const auto& f : cfg.flaws) {
        const double half_len = 0.5 * (f.axial_end_mm - f.axial_start_mm);
        const double half_wid = 0.5 * (f.rotary_end_deg - f.rotary_start_deg);
        const double cx = synth_detail::snap(0.5 * (f.axial_start_mm + f.axial_end_mm),
                                             h.axial_origin_mm, h.axial_pitch_mm, h.axial_count);
        const double cr =
            synth_detail::snap(0.5 * (f.rotary_start_deg + f.rotary_end_deg),
                               h.rotary_origin_deg, h.rotary_pitch_deg, h.rotary_count);
        FlawRegion r;
        r.kind = f.kind;
        r.axial_start_mm = cx - half_len;
        r.axial_end_mm = cx + half_len;
        r.rotary_start_deg = cr - half_wid;
        r.rotary_end_deg = cr + half_wid;
        r.max_depth_mm = f.peak_depth_mm;
        out.push_back(r);
    }
    return out;
}

// ---- waveform synthesis -----------------------------------------------------

inline double chatter_shift_ns(const SynthConfig& cfg, double rotary_deg) {
    if (cfg.chatter_amplitude_ns == 0.0) return 0.0;
    return cfg.chatter_amplitude_ns *
           std::sin(2.0 * std::numbers::pi * rotary_deg / cfg.chatter_period_deg);
}

// Echo center time: deeper surface -> later echo (pulse-echo round trip).
inline double echo_tof_ns(const SynthConfig& cfg, double depth_mm, double rotary_deg) {
    return cfg.base_tof_ns + 2000.0 * depth_mm / cfg.header.velocity_mm_per_us +
           chatter_shift_ns(cfg, rotary_deg);
}

namespace synth_detail {

inline void render_wave(const SynthConfig& cfg, double tof_ns, std::uint64_t wave_seed,
                        std::span<std::uint8_t> out) {
    const double period = cfg.header.sample_period_ns;
    const double sigma = cfg.pulse_width_ns;
    const auto n = static_cast<std::int64_t>(out.size());

    std::fill(out.begin(), out.end(), std::uint8_t{0});
    // Gaussian envelope, evaluated only where it is non-negligible.
    const auto k0 = std::max<std::int64_t>(
        0, static_cast<std::int64_t>(std::floor((tof_ns - 5.0 * sigma) / period)));
    const auto k1 = std::min<std::int64_t>(
        n - 1, static_cast<std::int64_t>(std::ceil((tof_ns + 5.0 * sigma) / period)));
    for (std::int64_t k = k0; k <= k1; ++k) {
        const double dt = (k * period - tof_ns) / sigma;
        const double a = 255.0 * std::exp(-0.5 * dt * dt);
        out[static_cast<std::size_t>(k)] =
            static_cast<std::uint8_t>(std::lround(std::min(a, 255.0)));
    }

    if (cfg.noise_sigma > 0.0) {
        rng::SplitMix g(wave_seed);
        for (std::int64_t k = 0; k < n; ++k) {
            const double v = out[static_cast<std::size_t>(k)] + cfg.noise_sigma * g.gaussian();
            out[static_cast<std::size_t>(k)] =
                static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
}

inline void render_row(const SynthConfig& cfg, const DepthField& field, std::uint32_t i,
                       std::span<std::uint8_t> row) {
    const ScanHeader& h = cfg.header;
    for (std::uint32_t j = 0; j < h.rotary_count; ++j) {
        const double tof = echo_tof_ns(cfg, field.at(i, j), h.rotary_deg(j));
        render_wave(cfg, tof, rng::mix(cfg.rng_seed, i, j),
                    row.subspan(static_cast<std::size_t>(j) * h.samples_per_wave,
                                h.samples_per_wave));
    }
}

}  // namespace synth_detail

// Deterministic in cfg: equal configs produce byte-identical volumes.
inline ScanVolume synthesize_scan(const DepthField& field, const SynthConfig& cfg) {
    cfg.validate();
    const ScanHeader& h = cfg.header;
    if (field.axial_count() != h.axial_count || field.rotary_count() != h.rotary_count)
        throw ConfigError("depth field dimensions do not match scan grid");
    ScanVolume v(h);
    for (std::uint32_t i = 0; i < h.axial_count; ++i)
        synth_detail::render_row(cfg, field, i, v.row(i));
    return v;
}

// Streams rows straight to the sink; byte-identical to synthesize_scan +
// write_scan but bounded by one row of memory.
inline std::uint64_t synthesize_scan_to_stream(const DepthField& field, const SynthConfig& cfg,
                                               std::ostream& out) {
    cfg.validate();
    const ScanHeader& h = cfg.header;
    if (field.axial_count() != h.axial_count || field.rotary_count() != h.rotary_count)
        throw ConfigError("depth field dimensions do not match scan grid");
    ScanWriter w(h, out);
    WaveBuffer row(static_cast<std::size_t>(h.row_bytes()));
    for (std::uint32_t i = 0; i < h.axial_count; ++i) {
        synth_detail::render_row(cfg, field, i, row.span());
        w.write_row(row.span());
    }
    return w.finish();
}

// ---- .depth sidecar ----------------------------------------------------------
// Binary per-cell truth depth grid emitted alongside generated scans:
//   magic "UTD1", version u16, axial_count u32, rotary_count u32,
//   axial_origin_mm f64, axial_pitch_mm f64, rotary_origin_deg f64,
//   rotary_pitch_deg f64, then axial-major f32 depths (little-endian).

inline constexpr char kDepthMagic[4] = {'U', 'T', 'D', '1'};

inline void write_depth_field(const DepthField& field, const ScanHeader& h, std::ostream& out) {
    unsigned char head[46];
    io::Writer w{head};
    w.bytes(kDepthMagic, 4);
    w.u16(1);
    w.u32(field.axial_count());
    w.u32(field.rotary_count());
    w.f64(h.axial_origin_mm);
    w.f64(h.axial_pitch_mm);
    w.f64(h.rotary_origin_deg);
    w.f64(h.rotary_pitch_deg);
    io::write_exact(out, head, sizeof head, 0);
    std::vector<unsigned char> rowbuf(static_cast<std::size_t>(field.rotary_count()) * 4);
    std::uint64_t written = sizeof head;
    for (std::uint32_t i = 0; i < field.axial_count(); ++i) {
        for (std::uint32_t j = 0; j < field.rotary_count(); ++j)
            io::store_f32(field.at(i, j), rowbuf.data() + static_cast<std::size_t>(j) * 4);
        io::write_exact(out, rowbuf.data(), rowbuf.size(), written);
        written += rowbuf.size();
    }
}

struct DepthFrame {
    double axial_origin_mm = 0.0, axial_pitch_mm = 0.0;
    double rotary_origin_deg = 0.0, rotary_pitch_deg = 0.0;
};

inline DepthField read_depth_field(std::istream& in, DepthFrame* frame = nullptr) {
    unsigned char head[46];
    const std::size_t got = io::read_upto(in, head, sizeof head);
    if (got < sizeof head) throw TruncationError(sizeof head, got);
    if (std::memcmp(head, kDepthMagic, 4) != 0)
        throw FormatError("bad magic, not a UTD1 depth field");
    io::Reader r{head + 4};
    const std::uint16_t version = r.u16();
    if (version != 1) throw FormatError("unsupported depth field version");
    const std::uint32_t ac = r.u32();
    const std::uint32_t rc = r.u32();
    DepthFrame f;
    f.axial_origin_mm = r.f64();
    f.axial_pitch_mm = r.f64();
    f.rotary_origin_deg = r.f64();
    f.rotary_pitch_deg = r.f64();
    if (frame) *frame = f;
    DepthField field(ac, rc);
    std::vector<unsigned char> rowbuf(static_cast<std::size_t>(rc) * 4);
    std::uint64_t received = sizeof head;
    const std::uint64_t expected =
        sizeof head + static_cast<std::uint64_t>(ac) * rc * 4;
    for (std::uint32_t i = 0; i < ac; ++i) {
        const std::size_t n = io::read_upto(in, rowbuf.data(), rowbuf.size());
        received += n;
        if (n < rowbuf.size()) throw TruncationError(expected, received);
        for (std::uint32_t j = 0; j < rc; ++j)
            field.at(i, j) = io::load_f32(rowbuf.data() + static_cast<std::size_t>(j) * 4);
    }
    return field;
}

// ---- config file -------------------------------------------------------------
// Line-oriented text:  key = value, '#' comments, plus one
//   flaw <kind> <axial_start> <axial_end> <rotary_start> <rotary_end> <peak_depth>
// line per primitive. Unknown keys are rejected. Missing keys keep the
// defaults above.

inline SynthConfig load_synth_config(std::istream& in) {
    SynthConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;

        if (first == "flaw") {
            std::vector<std::string> tok;
            std::string t;
            while (ls >> t) tok.push_back(t);
            if (tok.size() != 6) throw ParseError(line_no, "flaw line needs 6 fields");
            FlawSpec f;
            if (!flaw_kind_from(tok[0], f.kind))
                throw ParseError(line_no, "unknown flaw kind '" + tok[0] + "'");
            double* fields[5] = {&f.axial_start_mm, &f.axial_end_mm, &f.rotary_start_deg,
                                 &f.rotary_end_deg, &f.peak_depth_mm};
            for (int i = 0; i < 5; ++i)
                if (!detail::parse_double(tok[i + 1], *fields[i]))
                    throw ParseError(line_no, "bad number '" + tok[i + 1] + "'");
            cfg.flaws.push_back(f);
            continue;
        }

        std::string eq, value;
        if (!(ls >> eq >> value) || eq != "=")
            throw ParseError(line_no, "expected 'key = value'");
        std::string extra;
        if (ls >> extra) throw ParseError(line_no, "trailing tokens after value");

        auto num = [&]() {
            double v;
            if (!detail::parse_double(value, v))
                throw ParseError(line_no, "bad number '" + value + "'");
            return v;
        };
        auto unum = [&]() {
            const double v = num();
            if (v < 0 || v != std::floor(v))
                throw ParseError(line_no, "expected non-negative integer");
            return static_cast<std::uint64_t>(v);
        };

        if (first == "axial_count") cfg.header.axial_count = static_cast<std::uint32_t>(unum());
        else if (first == "rotary_count")
            cfg.header.rotary_count = static_cast<std::uint32_t>(unum());
        else if (first == "samples_per_wave")
            cfg.header.samples_per_wave = static_cast<std::uint32_t>(unum());
        else if (first == "axial_pitch_mm") cfg.header.axial_pitch_mm = num();
        else if (first == "rotary_pitch_deg") cfg.header.rotary_pitch_deg = num();
        else if (first == "axial_origin_mm") cfg.header.axial_origin_mm = num();
        else if (first == "rotary_origin_deg") cfg.header.rotary_origin_deg = num();
        else if (first == "sample_period_ns") cfg.header.sample_period_ns = num();
        else if (first == "velocity_mm_per_us") cfg.header.velocity_mm_per_us = num();
        else if (first == "base_tof_ns") cfg.base_tof_ns = num();
        else if (first == "pulse_width_ns") cfg.pulse_width_ns = num();
        else if (first == "chatter_amplitude_ns") cfg.chatter_amplitude_ns = num();
        else if (first == "chatter_period_deg") cfg.chatter_period_deg = num();
        else if (first == "noise_sigma") cfg.noise_sigma = num();
        else if (first == "seed") cfg.rng_seed = unum();
        else throw ParseError(line_no, "unknown key '" + first + "'");
    }
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

}  // namespace utb
