#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "utb/error.hpp"

namespace utb::nn {

// Contiguous (height, width, channel) tensor, channel fastest. Flat vectors
// are represented as (1, 1, n) so every layer speaks one shape language.
template <class Real>
struct Tensor3 {
    std::uint32_t h = 0, w = 0, c = 0;
    std::vector<Real> v;

    Tensor3() = default;
    Tensor3(std::uint32_t h_, std::uint32_t w_, std::uint32_t c_)
        : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, Real(0)) {}

    static Tensor3 flat(std::uint32_t n) { return Tensor3(1, 1, n); }

    std::size_t size() const { return v.size(); }

    Real at(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return v[(static_cast<std::size_t>(i) * w + j) * c + k];
    }
    Real& at(std::uint32_t i, std::uint32_t j, std::uint32_t k) {
        return v[(static_cast<std::size_t>(i) * w + j) * c + k];
    }

    bool same_shape(const Tensor3& o) const { return h == o.h && w == o.w && c == o.c; }

    bool all_finite() const {
        for (Real x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

struct Shape3 {
    std::uint32_t h = 0, w = 0, c = 0;
    std::size_t count() const { return static_cast<std::size_t>(h) * w * c; }
    bool operator==(const Shape3&) const = default;
};

}  // namespace utb::nn
