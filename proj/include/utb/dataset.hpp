#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "utb/error.hpp"
#include "utb/rng.hpp"
#include "utb/scan_model.hpp"
#include "utb/sigproc.hpp"
#include "utb/synth.hpp"

namespace utb {

// Binary label threshold: flaws at or beyond this depth must be found.
inline constexpr double kQualifyingDepthMm = 0.1;

enum class BundleCategory : std::uint8_t {
    flaw_free = 0,
    sub_threshold_flaw = 1,
    qualifying_flaw = 2
};

inline const char* to_string(BundleCategory c) {
    switch (c) {
        case BundleCategory::flaw_free: return "flaw_free";
        case BundleCategory::sub_threshold_flaw: return "sub_threshold_flaw";
        case BundleCategory::qualifying_flaw: return "qualifying_flaw";
    }
    return "?";
}

inline BundleCategory category_of_depth(double max_depth_mm) {
    if (max_depth_mm >= kQualifyingDepthMm) return BundleCategory::qualifying_flaw;
    if (max_depth_mm > 0.0) return BundleCategory::sub_threshold_flaw;
    return BundleCategory::flaw_free;
}

// Only qualifying flaws are positive; sub-threshold flaws train as healthy.
inline std::uint8_t label_of(BundleCategory c) {
    return c == BundleCategory::qualifying_flaw ? 1 : 0;
}

// Category of one bundle from the per-cell truth grid (max over footprint).
inline BundleCategory label_bundle_cells(const DepthField& truth, const CellWindow& wnd) {
    if (wnd.i1 > truth.axial_count() || wnd.j1 > truth.rotary_count())
        throw CompatError("bundle footprint lies outside the truth depth grid");
    return category_of_depth(truth.max_in_window(wnd.i0, wnd.i1, wnd.j0, wnd.j1));
}

struct DatasetItem {
    std::uint32_t scan_index = 0;
    std::uint32_t bi = 0, bj = 0;
    BundleCategory category = BundleCategory::flaw_free;
    std::uint8_t label = 0;
    std::vector<std::uint8_t> samples;  // kBundleValues raw amplitudes

    bool operator==(const DatasetItem&) const = default;
};

struct DatasetCounts {
    std::uint64_t qualifying = 0, sub_threshold = 0, flaw_free = 0;
    std::uint64_t total() const { return qualifying + sub_threshold + flaw_free; }
    std::uint64_t of(BundleCategory c) const {
        switch (c) {
            case BundleCategory::qualifying_flaw: return qualifying;
            case BundleCategory::sub_threshold_flaw: return sub_threshold;
            case BundleCategory::flaw_free: return flaw_free;
        }
        return 0;
    }
};

// Split sizes plus the class balance applied within each split.
struct DatasetPlan {
    std::uint64_t train_count = 0;
    std::uint64_t cv_count = 0;
    double positive_fraction = 0.25;  // label-1 share of each split
    double sub_fraction = 0.2;        // sub-threshold share of the label-0 pool

    void validate() const {
        if (train_count == 0) throw ConfigError("train split must be non-empty");
        if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
            throw ConfigError("positive fraction must be in [0,1]");
        if (!(sub_fraction >= 0.0 && sub_fraction <= 1.0))
            throw ConfigError("sub-threshold fraction must be in [0,1]");
    }

    static DatasetCounts split_counts(std::uint64_t count, double pos_frac, double sub_frac) {
        DatasetCounts c;
        c.qualifying = static_cast<std::uint64_t>(
            std::llround(static_cast<double>(count) * pos_frac));
        const std::uint64_t neg = count - c.qualifying;
        c.sub_threshold =
            static_cast<std::uint64_t>(std::llround(static_cast<double>(neg) * sub_frac));
        c.flaw_free = neg - c.sub_threshold;
        return c;
    }

    DatasetCounts train_counts() const {
        return split_counts(train_count, positive_fraction, sub_fraction);
    }
    DatasetCounts cv_counts() const {
        return split_counts(cv_count, positive_fraction, sub_fraction);
    }
};

struct Dataset {
    DatasetPlan plan;
    std::uint64_t seed = 0;
    std::vector<std::string> scan_ids;
    std::vector<DatasetItem> train;
    std::vector<DatasetItem> cv;
};

// Uniform sampling without replacement over candidates that arrive one at a
// time (reservoir per category), so corpus size never bounds memory. Feed
// every candidate bundle of every scan in a fixed order, then finish().
class DatasetBuilder {
public:
    DatasetBuilder(const DatasetPlan& plan, std::uint64_t seed) : plan_(plan), seed_(seed) {
        plan.validate();
        const DatasetCounts t = plan.train_counts();
        const DatasetCounts c = plan.cv_counts();
        for (int k = 0; k < 3; ++k) {
            const auto cat = static_cast<BundleCategory>(kCatOrder[k]);
            pools_[k].needed = t.of(cat) + c.of(cat);
            pools_[k].items.reserve(pools_[k].needed);
            pools_[k].rng = rng::SplitMix(rng::mix(seed, 0x7265u, static_cast<std::uint64_t>(k)));
        }
    }

    void add_candidate(std::uint32_t scan_index, const BundleTensor& b, BundleCategory cat) {
        Pool& pool = pools_[pool_index(cat)];
        const std::uint64_t seen = pool.seen++;
        if (pool.needed == 0) return;
        if (seen < pool.needed) {
            pool.items.push_back(make_item(scan_index, b, cat));
            return;
        }
        const std::uint64_t r = pool.rng.below(seen + 1);
        if (r < pool.needed) pool.items[static_cast<std::size_t>(r)] = make_item(scan_index, b, cat);
    }

    std::uint64_t seen(BundleCategory cat) const { return pools_[pool_index(cat)].seen; }

    Dataset finish(std::vector<std::string> scan_ids) {
        const DatasetCounts t = plan_.train_counts();
        for (int k = 0; k < 3; ++k) {
            const auto cat = static_cast<BundleCategory>(kCatOrder[k]);
            if (pools_[k].seen < pools_[k].needed)
                throw ConfigError("insufficient " + std::string(to_string(cat)) +
                                  " candidates: have " + std::to_string(pools_[k].seen) +
                                  ", need " + std::to_string(pools_[k].needed));
        }
        Dataset ds;
        ds.plan = plan_;
        ds.seed = seed_;
        ds.scan_ids = std::move(scan_ids);
        for (int k = 0; k < 3; ++k) {
            const auto cat = static_cast<BundleCategory>(kCatOrder[k]);
            auto& items = pools_[k].items;
            rng::shuffle(items, pools_[k].rng);
            const std::uint64_t n_train = t.of(cat);
            for (std::uint64_t i = 0; i < items.size(); ++i) {
                if (i < n_train)
                    ds.train.push_back(std::move(items[i]));
                else
                    ds.cv.push_back(std::move(items[i]));
            }
            items.clear();
        }
        rng::SplitMix mixer(rng::mix(seed_, 0x6D69u));
        rng::shuffle(ds.train, mixer);
        rng::shuffle(ds.cv, mixer);
        return ds;
    }

private:
    struct Pool {
        std::uint64_t needed = 0;
        std::uint64_t seen = 0;
        std::vector<DatasetItem> items;
        rng::SplitMix rng{0};
    };

    static constexpr std::uint8_t kCatOrder[3] = {
        static_cast<std::uint8_t>(BundleCategory::qualifying_flaw),
        static_cast<std::uint8_t>(BundleCategory::sub_threshold_flaw),
        static_cast<std::uint8_t>(BundleCategory::flaw_free)};

    static int pool_index(BundleCategory cat) {
        switch (cat) {
            case BundleCategory::qualifying_flaw: return 0;
            case BundleCategory::sub_threshold_flaw: return 1;
            case BundleCategory::flaw_free: return 2;
        }
        return 2;
    }

    static DatasetItem make_item(std::uint32_t scan_index, const BundleTensor& b,
                                 BundleCategory cat) {
        DatasetItem item;
        item.scan_index = scan_index;
        item.bi = b.bi;
        item.bj = b.bj;
        item.category = cat;
        item.label = label_of(cat);
        item.samples.resize(kBundleValues);
        for (std::size_t i = 0; i < kBundleValues; ++i)
            item.samples[i] = static_cast<std::uint8_t>(std::lround(b.values[i] * 255.0f));
        return item;
    }

    DatasetPlan plan_;
    std::uint64_t seed_;
    Pool pools_[3];
};

// Labels and feeds every bundle of one scan held in memory.
inline void collect_candidates(const ScanVolume& volume, const DepthField& truth,
                               std::uint32_t scan_index, DatasetBuilder& builder) {
    const ScanHeader& h = volume.header();
    if (truth.axial_count() != h.axial_count || truth.rotary_count() != h.rotary_count)
        throw CompatError("truth depth grid does not match the scan grid");
    const std::uint32_t anchor = compute_anchor(volume.row(0), h);
    BundleAssembler assembler(h, anchor, [&](BundleTensor&& b) {
        const BundleCategory cat = label_bundle_cells(truth, bundle_cells(b.bi, b.bj));
        builder.add_candidate(scan_index, b, cat);
    });
    for (std::uint32_t i = 0; i < h.axial_count; ++i) assembler.push_row(volume.row(i));
    assembler.finish();
}

// ---- dataset file -------------------------------------------------------------
// Layout (little-endian): magic "UTDS", version u16, seed u64, train count
// u64, cv count u64, positive fraction f64, sub fraction f64, tensor dims
// u32 x3 (time, rotary, channel), scan id count u32, scan ids (u32 length +
// bytes each), then all train items followed by all cv items. Each item:
// scan index u32, bi u32, bj u32, category u8, label u8, raw samples u8 x10000.

inline constexpr char kDatasetMagic[4] = {'U', 'T', 'D', 'S'};

inline void write_dataset(const Dataset& ds, std::ostream& out) {
    if (ds.train.size() != ds.plan.train_count || ds.cv.size() != ds.plan.cv_count)
        throw ConfigError("dataset does not match its plan");
    std::vector<unsigned char> head;
    head.insert(head.end(), kDatasetMagic, kDatasetMagic + 4);
    unsigned char buf[8];
    auto put_u16 = [&](std::uint16_t v) { io::store_u16(v, buf); head.insert(head.end(), buf, buf + 2); };
    auto put_u32 = [&](std::uint32_t v) { io::store_u32(v, buf); head.insert(head.end(), buf, buf + 4); };
    auto put_u64 = [&](std::uint64_t v) { io::store_u64(v, buf); head.insert(head.end(), buf, buf + 8); };
    auto put_f64 = [&](double v) { io::store_f64(v, buf); head.insert(head.end(), buf, buf + 8); };
    put_u16(1);
    put_u64(ds.seed);
    put_u64(ds.plan.train_count);
    put_u64(ds.plan.cv_count);
    put_f64(ds.plan.positive_fraction);
    put_f64(ds.plan.sub_fraction);
    put_u32(kWaveWindow);
    put_u32(kBundleRotary);
    put_u32(kBundleAxial);
    put_u32(static_cast<std::uint32_t>(ds.scan_ids.size()));
    for (const auto& id : ds.scan_ids) {
        put_u32(static_cast<std::uint32_t>(id.size()));
        head.insert(head.end(), id.begin(), id.end());
    }
    io::write_exact(out, head.data(), head.size(), 0);
    std::uint64_t written = head.size();

    std::vector<unsigned char> rec(14 + kBundleValues);
    auto put_item = [&](const DatasetItem& item) {
        if (item.samples.size() != kBundleValues)
            throw ConfigError("dataset item has wrong tensor size");
        io::Writer w{rec.data()};
        w.u32(item.scan_index);
        w.u32(item.bi);
        w.u32(item.bj);
        rec[12] = static_cast<unsigned char>(item.category);
        rec[13] = item.label;
        std::memcpy(rec.data() + 14, item.samples.data(), kBundleValues);
        io::write_exact(out, rec.data(), rec.size(), written);
        written += rec.size();
    };
    for (const auto& item : ds.train) put_item(item);
    for (const auto& item : ds.cv) put_item(item);
}

inline Dataset read_dataset(std::istream& in) {
    std::uint64_t received = 0;
    unsigned char head[62];
    const std::size_t got = io::read_upto(in, head, sizeof head);
    received += got;
    if (got != sizeof head) throw TruncationError(sizeof head, received);
    if (std::memcmp(head, kDatasetMagic, 4) != 0)
        throw FormatError("bad magic, not a UTDS dataset");
    io::Reader r{head + 4};
    if (r.u16() != 1) throw FormatError("unsupported dataset version");
    Dataset ds;
    ds.seed = r.u64();
    ds.plan.train_count = r.u64();
    ds.plan.cv_count = r.u64();
    ds.plan.positive_fraction = r.f64();
    ds.plan.sub_fraction = r.f64();
    const std::uint32_t dt = r.u32();
    const std::uint32_t dr = r.u32();
    const std::uint32_t dc = r.u32();
    if (dt != kWaveWindow || dr != kBundleRotary || dc != kBundleAxial)
        throw FormatError("dataset tensor dimensions are not 100x20x5");
    const std::uint32_t id_count = r.u32();
    if (id_count > 1'000'000) throw FormatError("implausible dataset scan id count");
    ds.plan.validate();
    for (std::uint32_t i = 0; i < id_count; ++i) {
        unsigned char lbuf[4];
        const std::size_t lgot = io::read_upto(in, lbuf, 4);
        received += lgot;
        if (lgot != 4) throw TruncationError(received + 4 - lgot, received);
        const std::uint32_t len = io::load_u32(lbuf);
        if (len > 4096) throw FormatError("implausible scan id length");
        std::string id(len, '\0');
        const std::size_t sgot = io::read_upto(in, id.data(), len);
        received += sgot;
        if (sgot != len) throw TruncationError(received + len - sgot, received);
        ds.scan_ids.push_back(std::move(id));
    }
    std::vector<unsigned char> rec(14 + kBundleValues);
    auto get_item = [&]() {
        const std::size_t rgot = io::read_upto(in, rec.data(), rec.size());
        received += rgot;
        if (rgot != rec.size()) throw TruncationError(received + rec.size() - rgot, received);
        DatasetItem item;
        io::Reader ir{rec.data()};
        item.scan_index = ir.u32();
        item.bi = ir.u32();
        item.bj = ir.u32();
        if (rec[12] > 2) throw FormatError("unknown bundle category");
        item.category = static_cast<BundleCategory>(rec[12]);
        item.label = rec[13];
        if (item.label != label_of(item.category))
            throw FormatError("dataset label contradicts its category");
        item.samples.assign(rec.begin() + 14, rec.end());
        return item;
    };
    ds.train.reserve(static_cast<std::size_t>(ds.plan.train_count));
    for (std::uint64_t i = 0; i < ds.plan.train_count; ++i) ds.train.push_back(get_item());
    ds.cv.reserve(static_cast<std::size_t>(ds.plan.cv_count));
    for (std::uint64_t i = 0; i < ds.plan.cv_count; ++i) ds.cv.push_back(get_item());
    return ds;
}

}  // namespace utb
