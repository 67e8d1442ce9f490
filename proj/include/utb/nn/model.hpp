#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "utb/error.hpp"
#include "utb/io.hpp"
#include "utb/nn/layers.hpp"
#include "utb/nn/tensor.hpp"
#include "utb/rng.hpp"

namespace utb::nn {

struct LayerSpec {
    enum class Kind : std::uint8_t {
        conv2d = 0,
        dense = 1,
        relu = 2,
        dropout = 3,
        flatten = 4,
        softmax = 5
    };

    Kind kind = Kind::relu;
    std::uint32_t filters = 0, kh = 0, kw = 0, sh = 1, sw = 1;  // conv2d
    std::uint32_t units = 0;                                    // dense
    double rate = 0.0;                                          // dropout

    static LayerSpec conv2d(std::uint32_t filters, std::uint32_t kh, std::uint32_t kw,
                            std::uint32_t sh, std::uint32_t sw) {
        LayerSpec s;
        s.kind = Kind::conv2d;
        s.filters = filters;
        s.kh = kh;
        s.kw = kw;
        s.sh = sh;
        s.sw = sw;
        return s;
    }
    static LayerSpec dense(std::uint32_t units) {
        LayerSpec s;
        s.kind = Kind::dense;
        s.units = units;
        return s;
    }
    static LayerSpec relu() { return LayerSpec{}; }
    static LayerSpec dropout(double rate) {
        LayerSpec s;
        s.kind = Kind::dropout;
        s.rate = rate;
        return s;
    }
    static LayerSpec flatten() {
        LayerSpec s;
        s.kind = Kind::flatten;
        return s;
    }
    static LayerSpec softmax() {
        LayerSpec s;
        s.kind = Kind::softmax;
        return s;
    }

    void validate() const {
        switch (kind) {
            case Kind::conv2d:
                if (filters < 1 || kh < 1 || kw < 1 || sh < 1 || sw < 1)
                    throw ConfigError("conv2d needs filters/kernel/stride >= 1");
                break;
            case Kind::dense:
                if (units < 1) throw ConfigError("dense needs units >= 1");
                break;
            case Kind::dropout:
                if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
                break;
            default:
                break;
        }
    }

    std::string describe() const {
        switch (kind) {
            case Kind::conv2d:
                return "conv2d(" + std::to_string(filters) + "," + std::to_string(kh) + "x" +
                       std::to_string(kw) + ",s" + std::to_string(sh) + "x" + std::to_string(sw) +
                       ")";
            case Kind::dense: return "dense(" + std::to_string(units) + ")";
            case Kind::relu: return "relu";
            case Kind::dropout: return "dropout(" + std::to_string(rate) + ")";
            case Kind::flatten: return "flatten";
            case Kind::softmax: return "softmax";
        }
        return "?";
    }

    bool operator==(const LayerSpec&) const = default;
};

template <class Real>
struct Workspace {
    // acts[i] is the input of layer i; acts.back() is the model output.
    std::vector<Tensor3<Real>> acts;
    std::vector<std::vector<std::uint8_t>> masks;
};

template <class Real>
struct Grads {
    std::vector<std::vector<Real>> dw, db;

    void scale(double s) {
        for (auto& g : dw)
            for (Real& v : g) v = static_cast<Real>(v * s);
        for (auto& g : db)
            for (Real& v : g) v = static_cast<Real>(v * s);
    }
};

template <class Real>
class Model {
public:
    struct Layer {
        LayerSpec spec;
        Shape3 in{}, out{};
        std::vector<Real> w, b;

        ConvGeom geom() const {
            return ConvGeom{spec.filters, spec.kh, spec.kw, spec.sh, spec.sw, in.c};
        }
        std::uint64_t parameter_count() const { return w.size() + b.size(); }
    };

    explicit Model(Shape3 input) : input_(input) {
        if (input.count() == 0) throw ShapeError("model input shape must be non-empty");
    }

    Model& add(const LayerSpec& s) {
        s.validate();
        if (!layers_.empty() && layers_.back().spec.kind == LayerSpec::Kind::softmax)
            throw ConfigError("no layers may follow softmax");
        Layer L;
        L.spec = s;
        L.in = layers_.empty() ? input_ : layers_.back().out;
        switch (s.kind) {
            case LayerSpec::Kind::conv2d: {
                L.out = conv_output_shape(L.in, L.geom());
                L.w.assign(L.geom().weight_count(), Real(0));
                L.b.assign(s.filters, Real(0));
                break;
            }
            case LayerSpec::Kind::dense: {
                if (L.in.h != 1 || L.in.w != 1)
                    throw ShapeError("dense layer requires a flattened input");
                L.out = Shape3{1, 1, s.units};
                L.w.assign(static_cast<std::size_t>(L.in.c) * s.units, Real(0));
                L.b.assign(s.units, Real(0));
                break;
            }
            case LayerSpec::Kind::flatten:
                L.out = Shape3{1, 1, static_cast<std::uint32_t>(L.in.count())};
                break;
            case LayerSpec::Kind::softmax:
                if (L.in.h != 1 || L.in.w != 1)
                    throw ShapeError("softmax layer requires a flattened input");
                L.out = L.in;
                break;
            default:
                L.out = L.in;
                break;
        }
        layers_.push_back(std::move(L));
        return *this;
    }

    const Shape3& input_shape() const { return input_; }
    Shape3 output_shape() const { return layers_.empty() ? input_ : layers_.back().out; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers_mutable() { return layers_; }

    std::uint64_t parameter_count() const {
        std::uint64_t n = 0;
        for (const auto& L : layers_) n += L.parameter_count();
        return n;
    }

    // Counts for parameterized layers only, in declaration order.
    std::vector<std::uint64_t> parameter_counts() const {
        std::vector<std::uint64_t> out;
        for (const auto& L : layers_)
            if (L.parameter_count() > 0) out.push_back(L.parameter_count());
        return out;
    }

    // He-uniform on weights (limit sqrt(6/fan_in)), zero biases.
    void init_params(std::uint64_t seed) {
        rng::SplitMix g(seed);
        for (auto& L : layers_) {
            if (L.w.empty()) continue;
            const double fan_in = L.spec.kind == LayerSpec::Kind::conv2d
                                      ? static_cast<double>(L.spec.kh) * L.spec.kw * L.in.c
                                      : static_cast<double>(L.in.c);
            const double limit = std::sqrt(6.0 / fan_in);
            for (Real& w : L.w) w = static_cast<Real>(g.uniform(-limit, limit));
            for (Real& b : L.b) b = Real(0);
        }
    }

    void init_grads(Grads<Real>& g) const {
        g.dw.resize(layers_.size());
        g.db.resize(layers_.size());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            g.dw[i].assign(layers_[i].w.size(), Real(0));
            g.db[i].assign(layers_[i].b.size(), Real(0));
        }
    }

    // Inference mode: dropout is the identity.
    Tensor3<Real> infer(const Tensor3<Real>& x) const {
        check_input(x);
        Tensor3<Real> cur = x;
        for (const auto& L : layers_) cur = apply(L, cur, nullptr, nullptr);
        return cur;
    }

    // Training mode: caches every layer input and the dropout masks.
    Tensor3<Real> forward_train(const Tensor3<Real>& x, Workspace<Real>& ws,
                                rng::SplitMix& g) const {
        check_input(x);
        ws.acts.clear();
        ws.acts.reserve(layers_.size() + 1);
        ws.masks.assign(layers_.size(), {});
        ws.acts.push_back(x);
        for (std::size_t i = 0; i < layers_.size(); ++i)
            ws.acts.push_back(apply(layers_[i], ws.acts.back(), &g, &ws.masks[i]));
        return ws.acts.back();
    }

    // Fused softmax + cross-entropy backward: seeds the walk with
    // d(loss)/d(logits) = probs - onehot. The final layer must be softmax.
    // Parameter gradients accumulate into grads; returns d(loss)/d(input).
    Tensor3<Real> backward_fused(const Workspace<Real>& ws, std::uint32_t label,
                                 Grads<Real>& grads) const {
        if (layers_.empty() || layers_.back().spec.kind != LayerSpec::Kind::softmax)
            throw ShapeError("fused backward requires a terminal softmax layer");
        if (ws.acts.size() != layers_.size() + 1)
            throw ShapeError("workspace does not match a training forward pass");
        const Tensor3<Real>& p = ws.acts.back();
        if (label >= p.size()) throw ShapeError("label out of range");
        Tensor3<Real> dy = p;
        dy.v[label] -= Real(1);
        for (std::size_t n = layers_.size() - 1; n-- > 0;) {
            const Layer& L = layers_[n];
            const Tensor3<Real>& in = ws.acts[n];
            switch (L.spec.kind) {
                case LayerSpec::Kind::conv2d: {
                    Tensor3<Real> dx;
                    conv2d_backward<Real>(in, L.geom(), L.w, dy, dx, grads.dw[n], grads.db[n]);
                    dy = std::move(dx);
                    break;
                }
                case LayerSpec::Kind::dense: {
                    Tensor3<Real> dx;
                    dense_backward<Real>(in, L.spec.units, L.w, dy, dx, grads.dw[n],
                                         grads.db[n]);
                    dy = std::move(dx);
                    break;
                }
                case LayerSpec::Kind::relu:
                    dy = relu_backward(in, dy);
                    break;
                case LayerSpec::Kind::dropout:
                    dy = dropout_backward<Real>(dy, ws.masks[n], L.spec.rate);
                    break;
                case LayerSpec::Kind::flatten: {
                    Tensor3<Real> dx(in.h, in.w, in.c);
                    dx.v = std::move(dy.v);
                    dy = std::move(dx);
                    break;
                }
                case LayerSpec::Kind::softmax:
                    throw ShapeError("softmax must be the terminal layer");
            }
        }
        return dy;
    }

private:
    void check_input(const Tensor3<Real>& x) const {
        if (Shape3{x.h, x.w, x.c} != input_)
            throw ShapeError("input tensor does not match the model input shape");
    }

    Tensor3<Real> apply(const Layer& L, const Tensor3<Real>& in, rng::SplitMix* g,
                        std::vector<std::uint8_t>* mask_out) const {
        switch (L.spec.kind) {
            case LayerSpec::Kind::conv2d:
                return conv2d_forward<Real>(in, L.geom(), L.w, L.b);
            case LayerSpec::Kind::dense:
                return dense_forward<Real>(in, L.spec.units, L.w, L.b);
            case LayerSpec::Kind::relu:
                return relu_forward(in);
            case LayerSpec::Kind::dropout: {
                if (!g) return in;  // inference: identity
                auto mask = make_dropout_mask(in.size(), L.spec.rate, *g);
                Tensor3<Real> y = dropout_apply<Real>(in, mask, L.spec.rate);
                *mask_out = std::move(mask);
                return y;
            }
            case LayerSpec::Kind::flatten: {
                Tensor3<Real> y = Tensor3<Real>::flat(static_cast<std::uint32_t>(in.size()));
                y.v = in.v;
                return y;
            }
            case LayerSpec::Kind::softmax:
                return softmax_forward(in);
        }
        throw ShapeError("unknown layer kind");
    }

    Shape3 input_;
    std::vector<Layer> layers_;
};

// ---- optimizer -----------------------------------------------------------------

enum class OptKind : std::uint8_t { adam = 0, sgd = 1 };

template <class Real>
struct Optimizer {
    OptKind kind = OptKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;
    std::vector<Real> m, v;  // flat Adam moments over (w, b) per layer in order

    void step(Model<Real>& model, const Grads<Real>& g) {
        const std::uint64_t total = model.parameter_count();
        if (kind == OptKind::adam) {
            if (m.empty()) {
                m.assign(total, Real(0));
                v.assign(total, Real(0));
            } else if (m.size() != total) {
                throw ShapeError("optimizer state does not match the model");
            }
        }
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        std::size_t off = 0;
        auto& layers = model.layers_mutable();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            update(layers[i].w, g.dw[i], off, c1, c2);
            update(layers[i].b, g.db[i], off, c1, c2);
        }
    }

private:
    void update(std::vector<Real>& p, const std::vector<Real>& g, std::size_t& off, double c1,
                double c2) {
        if (p.size() != g.size()) throw ShapeError("gradient does not match parameters");
        if (kind == OptKind::sgd) {
            for (std::size_t k = 0; k < p.size(); ++k)
                p[k] -= static_cast<Real>(lr * static_cast<double>(g[k]));
            off += p.size();
            return;
        }
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = static_cast<double>(g[k]);
            const double mk = beta1 * static_cast<double>(m[off + k]) + (1.0 - beta1) * gk;
            const double vk = beta2 * static_cast<double>(v[off + k]) + (1.0 - beta2) * gk * gk;
            m[off + k] = static_cast<Real>(mk);
            v[off + k] = static_cast<Real>(vk);
            p[k] -= static_cast<Real>(lr * (mk / c1) / (std::sqrt(vk / c2) + eps));
        }
        off += p.size();
    }
};

// ---- training step ----------------------------------------------------------------

namespace model_detail {

template <class Real>
std::string divergence_site(const Model<Real>& model, const Workspace<Real>& ws,
                            std::uint64_t step) {
    for (std::size_t i = 1; i < ws.acts.size(); ++i) {
        if (!ws.acts[i].all_finite())
            return "training diverged at step " + std::to_string(step) + ": non-finite output of layer " +
                   std::to_string(i - 1) + " (" + model.layers()[i - 1].spec.describe() + ")";
    }
    return "training diverged at step " + std::to_string(step) + ": non-finite loss";
}

}  // namespace model_detail

// One optimizer step on mean cross-entropy + L2 over the batch. Returns the
// total loss (CE mean + L2 term). Dropout is active and consumes g; fully
// deterministic given the RNG state.
template <class Real>
double train_step(Model<Real>& model, std::span<const Tensor3<Real>> batch,
                  std::span<const std::uint32_t> labels, Optimizer<Real>& opt, double l2_lambda,
                  rng::SplitMix& g, Workspace<Real>& ws, Grads<Real>& grads) {
    if (batch.empty()) throw ConfigError("empty training batch");
    if (batch.size() != labels.size()) throw ConfigError("batch/label count mismatch");
    model.init_grads(grads);
    double loss = 0.0;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const Tensor3<Real> p = model.forward_train(batch[n], ws, g);
        loss += xent_loss(p, labels[n]);
        model.backward_fused(ws, labels[n], grads);
    }
    loss /= static_cast<double>(batch.size());
    grads.scale(1.0 / static_cast<double>(batch.size()));

    if (l2_lambda > 0.0) {
        auto& layers = model.layers_mutable();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            double sq = 0.0;
            for (std::size_t k = 0; k < layers[i].w.size(); ++k) {
                const double w = static_cast<double>(layers[i].w[k]);
                sq += w * w;
                grads.dw[i][k] += static_cast<Real>(2.0 * l2_lambda * w);
            }
            loss += l2_lambda * sq;  // biases excluded
        }
    }

    if (!std::isfinite(loss)) throw DivergenceError(model_detail::divergence_site(model, ws, opt.t + 1));
    opt.step(model, grads);
    return loss;
}

// ---- checkpoint ---------------------------------------------------------------
// Layout (little-endian):
//   magic "UTNC", version u16, scalar width u8 (4|8), flags u8 (bit0 = train
//   state present), input shape u32 x3, layer count u32, then per layer:
//   kind u8, filters u32, kh u32, kw u32, sh u32, sw u32, units u32, rate f64;
//   then per parameterized layer: w count u64 + values, b count u64 + values;
//   then, when flagged: optimizer kind u8, lr f64, beta1 f64, beta2 f64,
//   eps f64, t u64, m count u64 + values, v count u64 + values, rng state u64,
//   epochs done u32, best cv accuracy f64.

inline constexpr char kCheckpointMagic[4] = {'U', 'T', 'N', 'C'};

template <class Real>
struct TrainState {
    Optimizer<Real> opt;
    std::uint64_t rng_state = 0;
    std::uint32_t epochs_done = 0;
    double best_cv_accuracy = 0.0;
};

namespace model_detail {

template <class Real>
void put_scalar(std::vector<unsigned char>& out, Real v) {
    unsigned char buf[8];
    if constexpr (sizeof(Real) == 4)
        io::store_f32(static_cast<float>(v), buf);
    else
        io::store_f64(static_cast<double>(v), buf);
    out.insert(out.end(), buf, buf + sizeof(Real));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    unsigned char buf[8];
    io::store_u64(v, buf);
    out.insert(out.end(), buf, buf + 8);
}

template <class Real>
void put_blob(std::vector<unsigned char>& out, const std::vector<Real>& v) {
    put_u64(out, v.size());
    for (Real x : v) put_scalar(out, x);
}

template <class Real>
Real get_scalar(std::istream& in, std::uint64_t& received) {
    unsigned char buf[8];
    const std::size_t got = io::read_upto(in, buf, sizeof(Real));
    received += got;
    if (got != sizeof(Real)) throw TruncationError(received + sizeof(Real) - got, received);
    if constexpr (sizeof(Real) == 4)
        return static_cast<Real>(io::load_f32(buf));
    else
        return static_cast<Real>(io::load_f64(buf));
}

inline std::uint64_t get_u64(std::istream& in, std::uint64_t& received) {
    unsigned char buf[8];
    const std::size_t got = io::read_upto(in, buf, 8);
    received += got;
    if (got != 8) throw TruncationError(received + 8 - got, received);
    return io::load_u64(buf);
}

template <class Real>
std::vector<Real> get_blob(std::istream& in, std::uint64_t& received) {
    const std::uint64_t n = get_u64(in, received);
    if (n > (std::uint64_t{1} << 32)) throw FormatError("implausible checkpoint blob size");
    std::vector<Real> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = get_scalar<Real>(in, received);
    return v;
}

}  // namespace model_detail

template <class Real>
void save_checkpoint(const Model<Real>& model, std::ostream& out,
                     const TrainState<Real>* state = nullptr) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 4);
    unsigned char fixed[4];
    io::store_u16(1, fixed);
    fixed[2] = static_cast<unsigned char>(sizeof(Real));
    fixed[3] = state ? 1 : 0;
    buf.insert(buf.end(), fixed, fixed + 4);
    unsigned char u32buf[4];
    auto put_u32 = [&](std::uint32_t v) {
        io::store_u32(v, u32buf);
        buf.insert(buf.end(), u32buf, u32buf + 4);
    };
    put_u32(model.input_shape().h);
    put_u32(model.input_shape().w);
    put_u32(model.input_shape().c);
    put_u32(static_cast<std::uint32_t>(model.layers().size()));
    for (const auto& L : model.layers()) {
        buf.push_back(static_cast<unsigned char>(L.spec.kind));
        put_u32(L.spec.filters);
        put_u32(L.spec.kh);
        put_u32(L.spec.kw);
        put_u32(L.spec.sh);
        put_u32(L.spec.sw);
        put_u32(L.spec.units);
        unsigned char f64buf[8];
        io::store_f64(L.spec.rate, f64buf);
        buf.insert(buf.end(), f64buf, f64buf + 8);
    }
    for (const auto& L : model.layers()) {
        if (L.parameter_count() == 0) continue;
        model_detail::put_blob(buf, L.w);
        model_detail::put_blob(buf, L.b);
    }
    if (state) {
        buf.push_back(static_cast<unsigned char>(state->opt.kind));
        unsigned char f64buf[8];
        for (double d : {state->opt.lr, state->opt.beta1, state->opt.beta2, state->opt.eps}) {
            io::store_f64(d, f64buf);
            buf.insert(buf.end(), f64buf, f64buf + 8);
        }
        model_detail::put_u64(buf, state->opt.t);
        model_detail::put_blob(buf, state->opt.m);
        model_detail::put_blob(buf, state->opt.v);
        model_detail::put_u64(buf, state->rng_state);
        put_u32(state->epochs_done);
        io::store_f64(state->best_cv_accuracy, f64buf);
        buf.insert(buf.end(), f64buf, f64buf + 8);
    }
    io::write_exact(out, buf.data(), buf.size(), 0);
}

template <class Real>
Model<Real> load_checkpoint(std::istream& in, TrainState<Real>* state_out = nullptr) {
    std::uint64_t received = 0;
    unsigned char head[24];
    const std::size_t got = io::read_upto(in, head, sizeof head);
    received += got;
    if (got != sizeof head) throw TruncationError(sizeof head, received);
    if (std::memcmp(head, kCheckpointMagic, 4) != 0)
        throw FormatError("bad magic, not a UTNC checkpoint");
    io::Reader r{head + 4};
    if (r.u16() != 1) throw FormatError("unsupported checkpoint version");
    const unsigned scalar = head[6];
    if (scalar != sizeof(Real))
        throw CompatError("checkpoint scalar width " + std::to_string(scalar) +
                          " does not match the requested precision " +
                          std::to_string(sizeof(Real)));
    const bool has_state = (head[7] & 1) != 0;
    io::Reader r2{head + 8};
    const Shape3 input{r2.u32(), r2.u32(), r2.u32()};
    const std::uint32_t layer_count = r2.u32();
    if (layer_count > 1024) throw FormatError("implausible checkpoint layer count");

    Model<Real> model(input);
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        unsigned char lbuf[33];
        const std::size_t lgot = io::read_upto(in, lbuf, sizeof lbuf);
        received += lgot;
        if (lgot != sizeof lbuf) throw TruncationError(received + sizeof lbuf - lgot, received);
        if (lbuf[0] > 5) throw FormatError("unknown layer kind in checkpoint");
        LayerSpec s;
        s.kind = static_cast<LayerSpec::Kind>(lbuf[0]);
        io::Reader lr{lbuf + 1};
        s.filters = lr.u32();
        s.kh = lr.u32();
        s.kw = lr.u32();
        s.sh = lr.u32();
        s.sw = lr.u32();
        s.units = lr.u32();
        s.rate = lr.f64();
        try {
            model.add(s);
        } catch (const Error& e) {
            throw FormatError(std::string("checkpoint layer stack invalid: ") + e.what());
        }
    }
    for (auto& L : model.layers_mutable()) {
        if (L.parameter_count() == 0) continue;
        auto w = model_detail::get_blob<Real>(in, received);
        auto b = model_detail::get_blob<Real>(in, received);
        if (w.size() != L.w.size() || b.size() != L.b.size())
            throw FormatError("checkpoint parameter blob does not match layer " +
                              L.spec.describe());
        L.w = std::move(w);
        L.b = std::move(b);
    }
    if (has_state) {
        TrainState<Real> st;
        unsigned char kbuf[1];
        const std::size_t kgot = io::read_upto(in, kbuf, 1);
        received += kgot;
        if (kgot != 1) throw TruncationError(received + 1, received);
        if (kbuf[0] > 1) throw FormatError("unknown optimizer kind in checkpoint");
        st.opt.kind = static_cast<OptKind>(kbuf[0]);
        unsigned char sbuf[32];
        const std::size_t sgot = io::read_upto(in, sbuf, sizeof sbuf);
        received += sgot;
        if (sgot != sizeof sbuf) throw TruncationError(received + sizeof sbuf - sgot, received);
        io::Reader sr{sbuf};
        st.opt.lr = sr.f64();
        st.opt.beta1 = sr.f64();
        st.opt.beta2 = sr.f64();
        st.opt.eps = sr.f64();
        st.opt.t = model_detail::get_u64(in, received);
        st.opt.m = model_detail::get_blob<Real>(in, received);
        st.opt.v = model_detail::get_blob<Real>(in, received);
        st.rng_state = model_detail::get_u64(in, received);
        unsigned char tail[12];
        const std::size_t tgot = io::read_upto(in, tail, sizeof tail);
        received += tgot;
        if (tgot != sizeof tail) throw TruncationError(received + sizeof tail - tgot, received);
        io::Reader tr{tail};
        st.epochs_done = tr.u32();
        st.best_cv_accuracy = tr.f64();
        if (state_out) *state_out = std::move(st);
    } else if (state_out) {
        *state_out = TrainState<Real>{};
    }
    return model;
}

}  // namespace utb::nn
