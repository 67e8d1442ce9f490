#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "utb/dataset.hpp"
#include "utb/error.hpp"
#include "utb/nn/model.hpp"
#include "utb/rng.hpp"
#include "utb/scan_model.hpp"
#include "utb/sigproc.hpp"

namespace utb {

enum class ModelPreset { paper_full, ci_small };

inline const char* to_string(ModelPreset p) {
    return p == ModelPreset::paper_full ? "paper_full" : "ci_small";
}

inline bool preset_from(const std::string& s, ModelPreset& out) {
    if (s == "paper_full") out = ModelPreset::paper_full;
    else if (s == "ci_small") out = ModelPreset::ci_small;
    else return false;
    return true;
}

// Published full-size architecture: the per-layer parameter counts below are
// a build-time contract, not a derived quantity.
inline constexpr std::uint64_t kFullParameterCounts[8] = {37'800,    2'250'300, 6'758'912,
                                                          65'664,    16'512,    8'256,
                                                          650,       22};
inline constexpr std::uint64_t kFullParameterTotal = 9'138'116;

// Both presets share one topology: 2 strided conv blocks, flatten, 5 hidden
// dense blocks (ReLU + dropout), and a 2-way softmax head.
template <class Real>
nn::Model<Real> build_model(ModelPreset preset, double dropout_rate = 0.5) {
    const bool full = preset == ModelPreset::paper_full;
    const std::uint32_t conv = full ? 300 : 16;
    const std::uint32_t dense[5] = {full ? 512u : 64u, full ? 128u : 32u, full ? 128u : 32u,
                                    full ? 64u : 16u, 10u};
    nn::Model<Real> m(nn::Shape3{kWaveWindow, kBundleRotary, kBundleAxial});
    m.add(nn::LayerSpec::conv2d(conv, 5, 5, 2, 2)).add(nn::LayerSpec::relu());
    m.add(nn::LayerSpec::conv2d(conv, 5, 5, 2, 2)).add(nn::LayerSpec::relu());
    m.add(nn::LayerSpec::flatten());
    for (std::uint32_t units : dense) {
        m.add(nn::LayerSpec::dense(units)).add(nn::LayerSpec::relu());
        m.add(nn::LayerSpec::dropout(dropout_rate));
    }
    m.add(nn::LayerSpec::dense(2)).add(nn::LayerSpec::softmax());

    if (full) {
        const auto counts = m.parameter_counts();
        bool ok = counts.size() == 8 && m.parameter_count() == kFullParameterTotal;
        for (std::size_t i = 0; ok && i < counts.size(); ++i)
            ok = counts[i] == kFullParameterCounts[i];
        if (!ok) throw Error("preset paper_full built with unexpected parameter counts");
    }
    return m;
}

// One classified bundle; score is the softmax probability of class 1.
struct Detection {
    std::uint32_t bi = 0, bj = 0;
    std::uint8_t cls = 0;
    float score = 0.0f;

    bool operator==(const Detection&) const = default;
};

template <class Real>
nn::Tensor3<Real> bundle_to_tensor(const BundleTensor& b) {
    nn::Tensor3<Real> x(kWaveWindow, kBundleRotary, kBundleAxial);
    for (std::size_t i = 0; i < kBundleValues; ++i) x.v[i] = static_cast<Real>(b.values[i]);
    return x;
}

template <class Real>
nn::Tensor3<Real> samples_to_tensor(std::span<const std::uint8_t> samples) {
    if (samples.size() != kBundleValues) throw ShapeError("bundle sample count must be 10000");
    nn::Tensor3<Real> x(kWaveWindow, kBundleRotary, kBundleAxial);
    constexpr Real kScale = Real(1) / Real(255);
    for (std::size_t i = 0; i < kBundleValues; ++i) x.v[i] = samples[i] * kScale;
    return x;
}

template <class Real>
void require_detector_model(const nn::Model<Real>& m) {
    if (m.input_shape() != nn::Shape3{kWaveWindow, kBundleRotary, kBundleAxial})
        throw CompatError("model input shape is not 100x20x5");
    if (m.output_shape() != nn::Shape3{1, 1, 2})
        throw CompatError("model output is not a 2-class head");
}

// Exact tie (p1 == p0) resolves to class 0.
template <class Real>
Detection classify_bundle(const nn::Model<Real>& m, const BundleTensor& b) {
    const auto p = m.infer(bundle_to_tensor<Real>(b));
    Detection d;
    d.bi = b.bi;
    d.bj = b.bj;
    d.score = static_cast<float>(p.v[1]);
    d.cls = p.v[1] > p.v[0] ? 1 : 0;
    return d;
}

// One Detection per bundle, ordered by (bi, bj).
template <class Real>
std::vector<Detection> classify_scan(const nn::Model<Real>& m, const ScanVolume& volume,
                                     std::uint64_t* dropped_waveforms = nullptr) {
    require_detector_model(m);
    const ScanHeader& h = volume.header();
    std::vector<Detection> out;
    out.reserve(bundle_grid(h).count());
    const std::uint32_t anchor = compute_anchor(volume.row(0), h);
    BundleAssembler assembler(h, anchor,
                              [&](BundleTensor&& b) { out.push_back(classify_bundle(m, b)); });
    for (std::uint32_t i = 0; i < h.axial_count; ++i) assembler.push_row(volume.row(i));
    const std::uint64_t dropped = assembler.finish();
    if (dropped_waveforms) *dropped_waveforms = dropped;
    return out;
}

// ---- training -------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-3;
    std::uint32_t batch_size = 64;
    std::uint32_t epochs = 30;
    double l2_lambda = 1e-4;
    std::uint64_t seed = 1;
    nn::OptKind optimizer = nn::OptKind::adam;
    // Early stop once CV accuracy reaches this level; > 1 disables.
    double target_cv_accuracy = 2.0;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("learning rate must be a finite non-negative number");
        if (batch_size == 0) throw ConfigError("batch size must be >= 1");
        if (epochs == 0) throw ConfigError("epoch count must be >= 1");
        if (l2_lambda < 0.0) throw ConfigError("L2 lambda must be >= 0");
    }
};

struct EpochStats {
    std::uint32_t epoch = 0;
    double loss = 0.0;
    double cv_accuracy = 0.0;
    // NaN when the CV split lacks the relevant class.
    double cv_sensitivity = 0.0;
    double cv_specificity = 0.0;
};

template <class Real>
struct TrainResult {
    nn::Model<Real> best_model;
    nn::Model<Real> last_model;
    nn::TrainState<Real> state;  // resume point matching last_model
    std::vector<EpochStats> log;
    std::uint32_t best_epoch = 0;
    double best_cv_accuracy = 0.0;
};

namespace detector_detail {

inline std::string format_metric(double v) {
    if (std::isnan(v)) return "na";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

template <class Real>
EpochStats evaluate_cv(const nn::Model<Real>& m, const std::vector<DatasetItem>& cv) {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (const auto& item : cv) {
        const auto p = m.infer(samples_to_tensor<Real>(item.samples));
        const std::uint8_t pred = p.v[1] > p.v[0] ? 1 : 0;
        if (item.label == 1)
            (pred == 1 ? tp : fn)++;
        else
            (pred == 0 ? tn : fp)++;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EpochStats s;
    s.cv_accuracy = static_cast<double>(tp + tn) / static_cast<double>(cv.size());
    s.cv_sensitivity = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : nan;
    s.cv_specificity = (tn + fp) ? static_cast<double>(tn) / static_cast<double>(tn + fp) : nan;
    return s;
}

}  // namespace detector_detail

// Deterministic training: per-epoch shuffle and dropout masks both come from
// one seeded stream whose state is checkpointed, so a resumed run replays the
// exact uninterrupted trajectory. Pass resume = the state saved with
// last_model; epochs already done are skipped.
template <class Real>
TrainResult<Real> train(nn::Model<Real> model, const Dataset& ds, const TrainConfig& cfg,
                        std::ostream* log_out = nullptr,
                        const nn::TrainState<Real>* resume = nullptr) {
    cfg.validate();
    require_detector_model(model);
    if (ds.train.empty()) throw ConfigError("training set is empty");
    if (ds.cv.empty()) throw ConfigError("cross-validation set is empty");

    nn::Optimizer<Real> opt;
    opt.kind = cfg.optimizer;
    opt.lr = cfg.learning_rate;
    std::uint32_t first_epoch = 1;
    rng::SplitMix g(rng::mix(cfg.seed, 0x7472u));
    if (resume) {
        opt = resume->opt;
        opt.kind = cfg.optimizer;
        opt.lr = cfg.learning_rate;
        g = rng::SplitMix(resume->rng_state);
        first_epoch = resume->epochs_done + 1;
    } else {
        model.init_params(cfg.seed);
    }

    TrainResult<Real> result{model, model, {}, {}, 0, 0.0};
    if (resume) {
        result.state = *resume;
        result.best_cv_accuracy = resume->best_cv_accuracy;
    }
    nn::Workspace<Real> ws;
    nn::Grads<Real> grads;
    std::vector<std::size_t> order(ds.train.size());
    std::vector<nn::Tensor3<Real>> batch;
    std::vector<std::uint32_t> labels;

    for (std::uint32_t epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng::shuffle(order, g);
        double loss_sum = 0.0;
        std::uint64_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            batch.clear();
            labels.clear();
            for (std::size_t k = 0; k < n; ++k) {
                const DatasetItem& item = ds.train[order[start + k]];
                batch.push_back(samples_to_tensor<Real>(item.samples));
                labels.push_back(item.label);
            }
            loss_sum += nn::train_step<Real>(model, batch, labels, opt, cfg.l2_lambda, g, ws,
                                             grads);
            ++batches;
        }
        EpochStats stats = detector_detail::evaluate_cv(model, ds.cv);
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(batches);
        result.log.push_back(stats);
        if (log_out) {
            *log_out << "epoch " << epoch << " loss " << detector_detail::format_metric(stats.loss)
                     << " cv_accuracy " << detector_detail::format_metric(stats.cv_accuracy)
                     << " cv_sensitivity " << detector_detail::format_metric(stats.cv_sensitivity)
                     << " cv_specificity " << detector_detail::format_metric(stats.cv_specificity)
                     << "\n";
        }
        if (stats.cv_accuracy > result.best_cv_accuracy) {
            result.best_cv_accuracy = stats.cv_accuracy;
            result.best_epoch = epoch;
            result.best_model = model;
        }
        result.state.opt = opt;
        result.state.rng_state = g.state();
        result.state.epochs_done = epoch;
        result.state.best_cv_accuracy = result.best_cv_accuracy;
        if (stats.cv_accuracy >= cfg.target_cv_accuracy) break;
    }
    result.last_model = std::move(model);
    return result;
}

}  // namespace utb
