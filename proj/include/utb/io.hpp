#pragma once

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <span>

#include "utb/error.hpp"

namespace utb::io {

// ---- little-endian encode/decode ------------------------------------------

inline void store_u16(std::uint16_t v, unsigned char* p) {
    p[0] = static_cast<unsigned char>(v);
    p[1] = static_cast<unsigned char>(v >> 8);
}

inline void store_u32(std::uint32_t v, unsigned char* p) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline void store_u64(std::uint64_t v, unsigned char* p) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline void store_f64(double v, unsigned char* p) { store_u64(std::bit_cast<std::uint64_t>(v), p); }
inline void store_f32(float v, unsigned char* p) { store_u32(std::bit_cast<std::uint32_t>(v), p); }

inline std::uint16_t load_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline std::uint64_t load_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline double load_f64(const unsigned char* p) { return std::bit_cast<double>(load_u64(p)); }
inline float load_f32(const unsigned char* p) { return std::bit_cast<float>(load_u32(p)); }

// ---- cursor helpers over a fixed buffer ------------------------------------

struct Writer {
    unsigned char* p;
    void u16(std::uint16_t v) { store_u16(v, p); p += 2; }
    void u32(std::uint32_t v) { store_u32(v, p); p += 4; }
    void u64(std::uint64_t v) { store_u64(v, p); p += 8; }
    void f64(double v) { store_f64(v, p); p += 8; }
    void f32(float v) { store_f32(v, p); p += 4; }
    void bytes(const void* src, std::size_t n) { std::memcpy(p, src, n); p += n; }
};

struct Reader {
    const unsigned char* p;
    std::uint16_t u16() { auto v = load_u16(p); p += 2; return v; }
    std::uint32_t u32() { auto v = load_u32(p); p += 4; return v; }
    std::uint64_t u64() { auto v = load_u64(p); p += 8; return v; }
    double f64() { auto v = load_f64(p); p += 8; return v; }
    float f32() { auto v = load_f32(p); p += 4; return v; }
};

// ---- stream helpers ---------------------------------------------------------

// Writes n bytes; on sink failure throws IoError carrying bytes_before.
inline void write_exact(std::ostream& out, const void* data, std::size_t n,
                        std::uint64_t bytes_before) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("sink write failed", bytes_before);
}

// Reads up to n bytes; returns the number actually read.
inline std::size_t read_upto(std::istream& in, void* data, std::size_t n) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount());
}

}  // namespace utb::io

namespace utb {

// Instrumentation for raw waveform sample storage. Every full-length raw
// amplitude buffer in the library lives in a WaveBuffer, so the peak counter
// bounds the memory the scan readers/writers hold at once.
struct WaveBufferStats {
    static std::atomic<std::uint64_t>& current() {
        static std::atomic<std::uint64_t> v{0};
        return v;
    }
    static std::atomic<std::uint64_t>& peak() {
        static std::atomic<std::uint64_t> v{0};
        return v;
    }
    static void on_alloc(std::uint64_t n) {
        const std::uint64_t cur = current().fetch_add(n) + n;
        std::uint64_t prev = peak().load();
        while (prev < cur && !peak().compare_exchange_weak(prev, cur)) {
        }
    }
    static void on_free(std::uint64_t n) { current().fetch_sub(n); }
    static void reset_peak() { peak().store(current().load()); }
};

class WaveBuffer {
public:
    WaveBuffer() = default;
    explicit WaveBuffer(std::size_t n) { allocate(n); }
    ~WaveBuffer() { release(); }

    WaveBuffer(const WaveBuffer& other) { copy_from(other); }
    WaveBuffer& operator=(const WaveBuffer& other) {
        if (this != &other) {
            release();
            copy_from(other);
        }
        return *this;
    }
    WaveBuffer(WaveBuffer&& other) noexcept : data_(std::move(other.data_)), size_(other.size_) {
        other.size_ = 0;
    }
    WaveBuffer& operator=(WaveBuffer&& other) noexcept {
        if (this != &other) {
            release();
            data_ = std::move(other.data_);
            size_ = other.size_;
            other.size_ = 0;
        }
        return *this;
    }

    void allocate(std::size_t n) {  // zero-initialized
        release();
        if (n) {
            data_ = std::make_unique<std::uint8_t[]>(n);
            size_ = n;
            WaveBufferStats::on_alloc(n);
        }
    }

    std::uint8_t* data() { return data_.get(); }
    const std::uint8_t* data() const { return data_.get(); }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    std::span<std::uint8_t> span() { return {data_.get(), size_}; }
    std::span<const std::uint8_t> span() const { return {data_.get(), size_}; }

    std::uint8_t& operator[](std::size_t i) { return data_[i]; }
    std::uint8_t operator[](std::size_t i) const { return data_[i]; }

private:
    void release() {
        if (size_) WaveBufferStats::on_free(size_);
        data_.reset();
        size_ = 0;
    }
    void copy_from(const WaveBuffer& other) {
        if (other.size_) {
            allocate(other.size_);
            std::memcpy(data_.get(), other.data_.get(), other.size_);
        }
    }

    std::unique_ptr<std::uint8_t[]> data_;
    std::size_t size_ = 0;
};

}  // namespace utb
