#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "utb/error.hpp"
#include "utb/io.hpp"

namespace utb {

// ---------------------------------------------------------------------------
// .utb binary layout (all multi-byte fields little-endian):
//   offset  size  field
//        0     4  magic "UTB1"
//        4     2  version (u16, currently 1)
//        6     8  axial_pitch_mm (f64)
//       14     8  rotary_pitch_deg (f64)
//       22     4  samples_per_wave (u32)
//       26     8  sample_period_ns (f64)
//       34     8  velocity_mm_per_us (f64)
//       42     4  axial_count (u32)
//       46     4  rotary_count (u32)
//       50     8  axial_origin_mm (f64)
//       58     8  rotary_origin_deg (f64)
//       66     -  payload: axial-major rows, each rotary_count waveforms of
//                 samples_per_wave unsigned 8-bit amplitudes
// ---------------------------------------------------------------------------

inline constexpr char kScanMagic[4] = {'U', 'T', 'B', '1'};
inline constexpr std::uint16_t kScanVersion = 1;
inline constexpr std::size_t kScanHeaderBytes = 66;

enum class FlawKind : std::uint8_t { debris = 0, crevice = 1, fbbpf = 2, unknown = 3 };

inline const char* to_string(FlawKind k) {
    switch (k) {
        case FlawKind::debris: return "debris";
        case FlawKind::crevice: return "crevice";
        case FlawKind::fbbpf: return "fbbpf";
        default: return "unknown";
    }
}

inline bool flaw_kind_from(const std::string& s, FlawKind& out) {
    if (s == "debris") out = FlawKind::debris;
    else if (s == "crevice") out = FlawKind::crevice;
    else if (s == "fbbpf") out = FlawKind::fbbpf;
    else if (s == "unknown") out = FlawKind::unknown;
    else return false;
    return true;
}

struct ScanHeader {
    std::uint16_t version = kScanVersion;
    double axial_pitch_mm = 0.2;
    double rotary_pitch_deg = 0.1;
    std::uint32_t samples_per_wave = 1000;
    double sample_period_ns = 10.0;
    double velocity_mm_per_us = 1.48;
    std::uint32_t axial_count = 1;
    std::uint32_t rotary_count = 1;
    double axial_origin_mm = 0.0;
    double rotary_origin_deg = 0.0;

    double axial_mm(std::uint32_t i) const { return axial_origin_mm + i * axial_pitch_mm; }
    double rotary_deg(std::uint32_t j) const { return rotary_origin_deg + j * rotary_pitch_deg; }

    std::uint64_t wave_count() const {
        return static_cast<std::uint64_t>(axial_count) * rotary_count;
    }
    std::uint64_t row_bytes() const {
        return static_cast<std::uint64_t>(rotary_count) * samples_per_wave;
    }
    std::uint64_t payload_bytes() const { return axial_count * row_bytes(); }
    std::uint64_t file_bytes() const { return kScanHeaderBytes + payload_bytes(); }

    void validate() const {
        if (version != kScanVersion)
            throw FormatError("unsupported scan version " + std::to_string(version));
        if (axial_count < 1) throw FormatError("axial_count must be >= 1");
        if (rotary_count < 1) throw FormatError("rotary_count must be >= 1");
        if (samples_per_wave < 1) throw FormatError("samples_per_wave must be >= 1");
        if (!(axial_pitch_mm > 0.0) || !std::isfinite(axial_pitch_mm))
            throw FormatError("axial_pitch_mm must be > 0");
        if (!(rotary_pitch_deg > 0.0) || !std::isfinite(rotary_pitch_deg))
            throw FormatError("rotary_pitch_deg must be > 0");
        if (!(sample_period_ns > 0.0) || !std::isfinite(sample_period_ns))
            throw FormatError("sample_period_ns must be > 0");
        if (!(velocity_mm_per_us > 0.0) || !std::isfinite(velocity_mm_per_us))
            throw FormatError("velocity_mm_per_us must be > 0");
        if (!std::isfinite(axial_origin_mm)) throw FormatError("axial_origin_mm must be finite");
        if (!(rotary_origin_deg >= 0.0) || !(rotary_origin_deg < 360.0))
            throw FormatError("rotary_origin_deg must be in [0, 360)");
        if (rotary_count * rotary_pitch_deg > 360.0 + 1e-9)
            throw FormatError("rotary span rotary_count * rotary_pitch_deg exceeds 360 degrees");
    }

    bool operator==(const ScanHeader&) const = default;
};

struct FlawRegion {
    FlawKind kind = FlawKind::unknown;
    double axial_start_mm = 0.0;
    double axial_end_mm = 0.0;
    double rotary_start_deg = 0.0;
    double rotary_end_deg = 0.0;
    double max_depth_mm = 0.0;

    void validate() const {
        if (!(axial_start_mm < axial_end_mm))
            throw FormatError("axial_start must be < axial_end");
        if (!(rotary_start_deg < rotary_end_deg))
            throw FormatError("rotary_start must be < rotary_end");
        if (!(max_depth_mm >= 0.0) || !std::isfinite(max_depth_mm))
            throw FormatError("max_depth must be >= 0");
    }

    bool operator==(const FlawRegion&) const = default;
};

// Immutable after construction; safe to share across threads for reading.
class ScanVolume {
public:
    ScanVolume() = default;
    explicit ScanVolume(const ScanHeader& h) : header_(h) {
        header_.validate();
        samples_.allocate(static_cast<std::size_t>(header_.payload_bytes()));
    }

    const ScanHeader& header() const { return header_; }

    std::span<const std::uint8_t> wave(std::uint32_t i, std::uint32_t j) const {
        return {samples_.data() + wave_offset(i, j), header_.samples_per_wave};
    }
    std::span<std::uint8_t> wave(std::uint32_t i, std::uint32_t j) {
        return {samples_.data() + wave_offset(i, j), header_.samples_per_wave};
    }
    std::span<const std::uint8_t> row(std::uint32_t i) const {
        return {samples_.data() + i * header_.row_bytes(),
                static_cast<std::size_t>(header_.row_bytes())};
    }
    std::span<std::uint8_t> row(std::uint32_t i) {
        return {samples_.data() + i * header_.row_bytes(),
                static_cast<std::size_t>(header_.row_bytes())};
    }

    bool operator==(const ScanVolume& other) const {
        return header_ == other.header_ && samples_.size() == other.samples_.size() &&
               (samples_.empty() ||
                std::memcmp(samples_.data(), other.samples_.data(), samples_.size()) == 0);
    }

private:
    std::size_t wave_offset(std::uint32_t i, std::uint32_t j) const {
        return static_cast<std::size_t>(i) * header_.row_bytes() +
               static_cast<std::size_t>(j) * header_.samples_per_wave;
    }

    ScanHeader header_;
    WaveBuffer samples_;
};

// ---- header encode/decode ---------------------------------------------------

inline void encode_scan_header(const ScanHeader& h, unsigned char* buf) {
    io::Writer w{buf};
    w.bytes(kScanMagic, 4);
    w.u16(h.version);
    w.f64(h.axial_pitch_mm);
    w.f64(h.rotary_pitch_deg);
    w.u32(h.samples_per_wave);
    w.f64(h.sample_period_ns);
    w.f64(h.velocity_mm_per_us);
    w.u32(h.axial_count);
    w.u32(h.rotary_count);
    w.f64(h.axial_origin_mm);
    w.f64(h.rotary_origin_deg);
}

inline ScanHeader decode_scan_header(const unsigned char* buf) {
    if (std::memcmp(buf, kScanMagic, 4) != 0) throw FormatError("bad magic, not a UTB1 scan");
    io::Reader r{buf + 4};
    ScanHeader h;
    h.version = r.u16();
    h.axial_pitch_mm = r.f64();
    h.rotary_pitch_deg = r.f64();
    h.samples_per_wave = r.u32();
    h.sample_period_ns = r.f64();
    h.velocity_mm_per_us = r.f64();
    h.axial_count = r.u32();
    h.rotary_count = r.u32();
    h.axial_origin_mm = r.f64();
    h.rotary_origin_deg = r.f64();
    h.validate();
    return h;
}

// ---- writers ----------------------------------------------------------------

// Row-at-a-time writer; lets generators emit scans far larger than memory.
class ScanWriter {
public:
    ScanWriter(const ScanHeader& h, std::ostream& out) : header_(h), out_(out) {
        header_.validate();
        unsigned char buf[kScanHeaderBytes];
        encode_scan_header(header_, buf);
        io::write_exact(out_, buf, kScanHeaderBytes, 0);
        written_ = kScanHeaderBytes;
    }

    const ScanHeader& header() const { return header_; }

    void write_row(std::span<const std::uint8_t> row) {
        if (rows_done_ >= header_.axial_count)
            throw ConfigError("write_row past declared axial_count");
        if (row.size() != header_.row_bytes())
            throw ConfigError("row size does not match header row_bytes");
        io::write_exact(out_, row.data(), row.size(), written_);
        written_ += row.size();
        ++rows_done_;
    }

    std::uint64_t finish() {
        if (rows_done_ != header_.axial_count)
            throw ConfigError("scan incomplete: " + std::to_string(rows_done_) + " of " +
                              std::to_string(header_.axial_count) + " rows written");
        out_.flush();
        if (!out_) throw IoError("sink flush failed", written_);
        return written_;
    }

private:
    ScanHeader header_;
    std::ostream& out_;
    std::uint64_t written_ = 0;
    std::uint32_t rows_done_ = 0;
};

inline std::uint64_t write_scan(const ScanVolume& v, std::ostream& out) {
    ScanWriter w(v.header(), out);
    for (std::uint32_t i = 0; i < v.header().axial_count; ++i) w.write_row(v.row(i));
    return w.finish();
}

// ---- readers ----------------------------------------------------------------

inline ScanHeader read_scan_header(std::istream& in) {
    unsigned char buf[kScanHeaderBytes];
    const std::size_t got = io::read_upto(in, buf, kScanHeaderBytes);
    if (got < kScanHeaderBytes) throw TruncationError(kScanHeaderBytes, got);
    return decode_scan_header(buf);
}

// Streams the payload one axial row at a time; peak raw-sample memory is one
// row regardless of file size. Full rows are delivered before a truncated
// tail raises.
inline ScanHeader read_scan_streaming(
    std::istream& in,
    const std::function<void(std::uint32_t, std::span<const std::uint8_t>)>& on_row) {
    const ScanHeader h = read_scan_header(in);
    WaveBuffer row(static_cast<std::size_t>(h.row_bytes()));
    std::uint64_t received = kScanHeaderBytes;
    for (std::uint32_t i = 0; i < h.axial_count; ++i) {
        const std::size_t got = io::read_upto(in, row.data(), row.size());
        received += got;
        if (got < row.size()) throw TruncationError(h.file_bytes(), received);
        on_row(i, row.span());
    }
    return h;
}

inline ScanVolume read_scan(std::istream& in) {
    unsigned char buf[kScanHeaderBytes];
    const std::size_t got = io::read_upto(in, buf, kScanHeaderBytes);
    if (got < kScanHeaderBytes) throw TruncationError(kScanHeaderBytes, got);
    ScanVolume v(decode_scan_header(buf));
    const ScanHeader& h = v.header();
    std::uint64_t received = kScanHeaderBytes;
    for (std::uint32_t i = 0; i < h.axial_count; ++i) {
        auto row = v.row(i);
        const std::size_t n = io::read_upto(in, row.data(), row.size());
        received += n;
        if (n < row.size()) throw TruncationError(h.file_bytes(), received);
    }
    return v;
}

// ---- .truth sidecar ----------------------------------------------------------
// One region per line:
//   kind axial_start_mm axial_end_mm rotary_start_deg rotary_end_deg max_depth_mm
// '#' starts a comment, blank lines ignored.

namespace detail {
inline bool parse_double(const std::string& tok, double& out) {
    const char* b = tok.data();
    const char* e = b + tok.size();
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && std::isfinite(out);
}
}  // namespace detail

inline std::vector<FlawRegion> read_truth_sidecar(std::istream& in) {
    std::vector<FlawRegion> regions;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() != 6)
            throw ParseError(line_no, "expected 6 fields, got " + std::to_string(tok.size()));
        FlawRegion r;
        if (!flaw_kind_from(tok[0], r.kind))
            throw ParseError(line_no, "unknown flaw kind '" + tok[0] + "'");
        double* fields[5] = {&r.axial_start_mm, &r.axial_end_mm, &r.rotary_start_deg,
                             &r.rotary_end_deg, &r.max_depth_mm};
        for (int i = 0; i < 5; ++i)
            if (!detail::parse_double(tok[i + 1], *fields[i]))
                throw ParseError(line_no, "bad number '" + tok[i + 1] + "'");
        try {
            r.validate();
        } catch (const Error& e) {
            throw ParseError(line_no, e.what());
        }
        regions.push_back(r);
    }
    return regions;
}

inline void write_truth_sidecar(std::span<const FlawRegion> regions, std::ostream& out) {
    out << "# kind axial_start_mm axial_end_mm rotary_start_deg rotary_end_deg max_depth_mm\n";
    char buf[256];
    for (const auto& r : regions) {
        std::snprintf(buf, sizeof buf, "%s %.9g %.9g %.9g %.9g %.9g\n", to_string(r.kind),
                      r.axial_start_mm, r.axial_end_mm, r.rotary_start_deg, r.rotary_end_deg,
                      r.max_depth_mm);
        out << buf;
    }
    if (!out) throw IoError("truth sidecar write failed", 0);
}

}  // namespace utb
