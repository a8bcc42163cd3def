#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gentron/conditioning.hpp"
#include "gentron/tensor.hpp"
#include "gentron/video.hpp"

namespace gentron {

enum class Variant { adaln_zero, cross_attention };

inline const char* variant_name(Variant v) {
    return v == Variant::adaln_zero ? "adaln_zero" : "cross_attention";
}

struct GenTronConfig {
    int depth = 2;
    int width = 64;
    int mlp_width = 256;
    int patch = 2;
    int latent_h = 8;
    int latent_w = 8;
    int latent_c = 4;
    int heads = 0; // 0 -> max(1, width/64), keeping head dim ~64 across scales
    Variant variant = Variant::cross_attention;
    EncoderSpec encoders;
    bool temporal = false; // true once temporal layers exist (inflated T2V)
    int t_frames = 8;      // clip length used by video training/sampling

    int resolved_heads() const { return heads > 0 ? heads : std::max(1, width / 64); }
    int grid_h() const { return latent_h / patch; }
    int grid_w() const { return latent_w / patch; }
    int tokens() const { return grid_h() * grid_w(); }
    int patch_dim() const { return patch * patch * latent_c; }

    void validate() const {
        if (depth < 1) throw ValueError("config: depth must be >= 1");
        if (width < 4 || width % 4 != 0)
            throw ValueError("config: width must be a positive multiple of 4 (2D sincos layout)");
        if (width % resolved_heads() != 0) throw ValueError("config: width not divisible by heads");
        if (patch < 1 || latent_h % patch != 0 || latent_w % patch != 0)
            throw ValueError("config: latent dims must be divisible by patch");
        if (latent_c < 1) throw ValueError("config: latent channels must be >= 1");
        if (mlp_width < 1) throw ValueError("config: mlp_width must be >= 1");
        if (t_frames < 1) throw ValueError("config: t_frames must be >= 1");
        encoders.validate();
    }

    // Table-scale presets; the dual interleaved encoders carry the
    // CLIP-L-sized (768) and T5-XXL-sized (4096) embedding widths.
    static GenTronConfig xl2() {
        GenTronConfig c;
        c.depth = 28;
        c.width = 1152;
        c.mlp_width = 4608;
        c.patch = 2;
        c.latent_h = c.latent_w = 32;
        c.latent_c = 4;
        c.variant = Variant::cross_attention;
        c.encoders.mode = EncoderMode::dual_interleaved;
        c.encoders.d_texts = {768, 4096};
        return c;
    }
    static GenTronConfig g2() {
        GenTronConfig c = xl2();
        c.depth = 48;
        c.width = 1664;
        c.mlp_width = 6656;
        return c;
    }
};

enum class InitKind { xavier, embed_normal, zeros, ones };

// Single source of truth for the parameter schema: construction, counting and
// the checkpoint shape table all walk this enumeration in the same order.
template <typename Fn>
void for_each_param(const GenTronConfig& cfg, Fn&& fn) {
    using Shape = std::vector<int>;
    const int w = cfg.width, pd = cfg.patch_dim(), mlp = cfg.mlp_width;
    fn("patch_embed.w", Shape{pd, w}, InitKind::xavier);
    fn("patch_embed.b", Shape{w}, InitKind::zeros);
    fn("time_mlp.w1", Shape{w, w}, InitKind::xavier);
    fn("time_mlp.b1", Shape{w}, InitKind::zeros);
    fn("time_mlp.w2", Shape{w, w}, InitKind::xavier);
    fn("time_mlp.b2", Shape{w}, InitKind::zeros);
    for (int e = 0; e < cfg.encoders.n_encoders(); ++e) {
        const std::string p = "enc" + std::to_string(e) + ".";
        const int dt = cfg.encoders.d_texts[static_cast<size_t>(e)];
        fn(p + "table", Shape{cfg.encoders.vocab, dt}, InitKind::embed_normal);
        fn(p + "pos", Shape{cfg.encoders.max_len, dt}, InitKind::embed_normal);
        fn(p + "null", Shape{1, dt}, InitKind::embed_normal);
        fn(p + "pool.w", Shape{dt, w}, InitKind::xavier);
        fn(p + "pool.b", Shape{w}, InitKind::zeros);
    }
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        fn(p + "adaln.w", Shape{w, 6 * w}, InitKind::zeros);
        fn(p + "adaln.b", Shape{6 * w}, InitKind::zeros);
        fn(p + "attn.wq", Shape{w, w}, InitKind::xavier);
        fn(p + "attn.bq", Shape{w}, InitKind::zeros);
        fn(p + "attn.wk", Shape{w, w}, InitKind::xavier);
        fn(p + "attn.bk", Shape{w}, InitKind::zeros);
        fn(p + "attn.wv", Shape{w, w}, InitKind::xavier);
        fn(p + "attn.bv", Shape{w}, InitKind::zeros);
        fn(p + "attn.wo", Shape{w, w}, InitKind::xavier);
        fn(p + "attn.bo", Shape{w}, InitKind::zeros);
        if (cfg.variant == Variant::cross_attention) {
            const int dt = cfg.encoders.d_text_for_block(i);
            fn(p + "xnorm.g", Shape{w}, InitKind::ones);
            fn(p + "xnorm.b", Shape{w}, InitKind::zeros);
            fn(p + "xattn.wq", Shape{w, w}, InitKind::xavier);
            fn(p + "xattn.bq", Shape{w}, InitKind::zeros);
            fn(p + "xattn.wk", Shape{dt, w}, InitKind::xavier);
            fn(p + "xattn.bk", Shape{w}, InitKind::zeros);
            fn(p + "xattn.wv", Shape{dt, w}, InitKind::xavier);
            fn(p + "xattn.bv", Shape{w}, InitKind::zeros);
            // zero output projection: the unmodulated cross branch contributes
            // nothing at init, preserving the block-level identity
            fn(p + "xattn.wo", Shape{w, w}, InitKind::zeros);
            fn(p + "xattn.bo", Shape{w}, InitKind::zeros);
        }
        if (cfg.temporal) {
            fn(p + "tnorm.g", Shape{w}, InitKind::ones);
            fn(p + "tnorm.b", Shape{w}, InitKind::zeros);
            fn(p + "tattn.wq", Shape{w, w}, InitKind::xavier);
            fn(p + "tattn.bq", Shape{w}, InitKind::zeros);
            fn(p + "tattn.wk", Shape{w, w}, InitKind::xavier);
            fn(p + "tattn.bk", Shape{w}, InitKind::zeros);
            fn(p + "tattn.wv", Shape{w, w}, InitKind::xavier);
            fn(p + "tattn.bv", Shape{w}, InitKind::zeros);
            fn(p + "tattn.wo", Shape{w, w}, InitKind::zeros);
            fn(p + "tattn.bo", Shape{w}, InitKind::zeros);
        }
        fn(p + "mlp.w1", Shape{w, mlp}, InitKind::xavier);
        fn(p + "mlp.b1", Shape{mlp}, InitKind::zeros);
        fn(p + "mlp.w2", Shape{mlp, w}, InitKind::xavier);
        fn(p + "mlp.b2", Shape{w}, InitKind::zeros);
    }
    fn("final.adaln.w", Shape{w, 2 * w}, InitKind::zeros);
    fn("final.adaln.b", Shape{2 * w}, InitKind::zeros);
    fn("final.dec.w", Shape{w, pd}, InitKind::zeros);
    fn("final.dec.b", Shape{pd}, InitKind::zeros);
}

// Metadata-only: sums shape products without allocating anything, so the
// billion-parameter presets can be tallied on a desk machine.
inline int64_t count_parameters(const GenTronConfig& cfg) {
    int64_t total = 0;
    for_each_param(cfg, [&](const std::string&, const std::vector<int>& shape, InitKind) {
        int64_t n = 1;
        for (int e : shape) n *= e;
        total += n;
    });
    return total;
}

inline std::vector<std::pair<std::string, std::vector<int>>> enumerate_param_shapes(
    const GenTronConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    for_each_param(cfg,
                   [&](const std::string& n, const std::vector<int>& s, InitKind) { out.emplace_back(n, s); });
    return out;
}

// Sinusoidal timestep features, layout [sin block | cos block], base 10000.
// t=0 gives zeros then ones.
template <typename T>
TensorT<T> timestep_sinusoid(int t, int dim) {
    if (t < 0) throw ValueError("timestep_sinusoid: t must be >= 0");
    if (dim < 2 || dim % 2 != 0) throw ValueError("timestep_sinusoid: dim must be even");
    const int half = dim / 2;
    auto out = TensorT<T>::zeros({dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        (*out.data)[i] = static_cast<T>(std::sin(t * freq));
        (*out.data)[half + i] = static_cast<T>(std::cos(t * freq));
    }
    return out;
}

namespace detail {
// 1D sincos of one grid coordinate into d slots ([sin | cos], d/2 frequencies).
inline void sincos_1d(double pos, int d, double* out) {
    const int quarter = d / 2;
    for (int k = 0; k < quarter; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / quarter);
        out[k] = std::sin(pos * freq);
        out[quarter + k] = std::cos(pos * freq);
    }
}
} // namespace detail

// Fixed (non-learned) 2D position embedding over the patch grid, row-major
// token order: per token concat[row embedding | column embedding].
template <typename T>
TensorT<T> make_2d_sincos_pos(int gh, int gw, int dim) {
    if (dim % 4 != 0) throw ValueError("pos embedding: dim must be divisible by 4");
    auto out = TensorT<T>::zeros({gh * gw, dim});
    std::vector<double> buf(static_cast<size_t>(dim));
    for (int ph = 0; ph < gh; ++ph)
        for (int pw = 0; pw < gw; ++pw) {
            detail::sincos_1d(static_cast<double>(ph), dim / 2, buf.data());
            detail::sincos_1d(static_cast<double>(pw), dim / 2, buf.data() + dim / 2);
            T* row = out.ptr() + (static_cast<int64_t>(ph) * gw + pw) * dim;
            for (int j = 0; j < dim; ++j) row[j] = static_cast<T>(buf[static_cast<size_t>(j)]);
        }
    return out;
}

// h * (1 + gamma) + beta with gamma/beta broadcast over tokens.
template <typename T>
TensorT<T> modulate(const TensorT<T>& h, const TensorT<T>& gamma, const TensorT<T>& beta) {
    return add_rowvec(mul_rowvec(h, add_const(gamma, T(1))), beta);
}

// The GenTron transformer. One forward handles one sample: an image enters as
// a single frame [1,H,W,C]; a clip enters as [t,H,W,C]. Frames only interact
// through the temporal layer, so a non-inflated model treats the leading axis
// as an inert batch dimension.
template <typename T>
class GenTronT {
public:
    static constexpr T kLnEps = T(1e-5);

    GenTronT(GenTronConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(seed);
        for_each_param(cfg_, [&](const std::string& name, const std::vector<int>& shape, InitKind k) {
            auto t = TensorT<T>::zeros(shape, /*requires_grad=*/true);
            switch (k) {
                case InitKind::xavier: {
                    const double std =
                        std::sqrt(2.0 / (static_cast<double>(shape[0]) + static_cast<double>(shape[1])));
                    for (auto& v : *t.data) v = static_cast<T>(rng.normal() * std);
                    break;
                }
                // unit-normal embeddings: the pooled text signal has to be on
                // the same scale as the timestep features or the conditioning
                // pathway starts invisible and never trains at desk scale
                case InitKind::embed_normal:
                    for (auto& v : *t.data) v = static_cast<T>(rng.normal());
                    break;
                case InitKind::ones:
                    std::fill(t.data->begin(), t.data->end(), T(1));
                    break;
                case InitKind::zeros:
                    break;
            }
            index_[name] = params_.size();
            names_.push_back(name);
            params_.push_back(std::move(t));
        });
        for (int e = 0; e < cfg_.encoders.n_encoders(); ++e) {
            const std::string p = "enc" + std::to_string(e) + ".";
            ToyEncoderT<T> enc;
            enc.name = "enc" + std::to_string(e);
            enc.vocab = cfg_.encoders.vocab;
            enc.max_len = cfg_.encoders.max_len;
            enc.table = param(p + "table");
            enc.positions = param(p + "pos");
            enc.null_token = param(p + "null");
            encoders_.push_back(std::move(enc));
        }
        pos_embed_ = make_2d_sincos_pos<T>(cfg_.grid_h(), cfg_.grid_w(), cfg_.width);
    }

    const GenTronConfig& config() const { return cfg_; }
    const std::vector<std::string>& param_names() const { return names_; }

    TensorT<T>& param(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValueError("unknown parameter: " + name);
        return params_[it->second];
    }
    const TensorT<T>& param(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValueError("unknown parameter: " + name);
        return params_[it->second];
    }

    std::vector<TensorT<T>*> parameters() {
        std::vector<TensorT<T>*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(&p);
        return out;
    }

    int64_t parameter_count() const { return count_parameters(cfg_); }

    int n_encoders() const { return static_cast<int>(encoders_.size()); }
    const ToyEncoderT<T>& encoder(int e) const { return encoders_[static_cast<size_t>(e)]; }

    std::vector<TextConditionT<T>> encode(const std::string& prompt) const {
        std::vector<TextConditionT<T>> out;
        for (auto& e : encoders_) out.push_back(e.encode(prompt));
        return out;
    }
    std::vector<TextConditionT<T>> null_conditions() const {
        std::vector<TextConditionT<T>> out;
        for (auto& e : encoders_) out.push_back(e.null_condition());
        return out;
    }

    // c = TimeMLP(sinusoid(t)) + sum_e PoolProj_e(pooled_e), shape [1, width].
    TensorT<T> condition_vector(int t, const std::vector<TextConditionT<T>>& conds) const {
        check_conditions(conds);
        auto freq = reshape(timestep_sinusoid<T>(t, cfg_.width), {1, cfg_.width});
        auto h = add_rowvec(matmul(freq, param("time_mlp.w1")), param("time_mlp.b1"));
        h = silu(h);
        h = add_rowvec(matmul(h, param("time_mlp.w2")), param("time_mlp.b2"));
        for (int e = 0; e < n_encoders(); ++e) {
            const std::string p = "enc" + std::to_string(e) + ".";
            auto pooled = reshape(conds[static_cast<size_t>(e)].pooled,
                                  {1, cfg_.encoders.d_texts[static_cast<size_t>(e)]});
            h = add(h, add_rowvec(matmul(pooled, param(p + "pool.w")), param(p + "pool.b")));
        }
        return h;
    }

    // One transformer block on tokens [F, n, width] with condition c [1, width].
    TensorT<T> block_forward(int i, const TensorT<T>& x, const TensorT<T>& c,
                             const std::vector<TextConditionT<T>>& conds,
                             const TensorT<T>* temporal_mask) const {
        const std::string p = "block" + std::to_string(i) + ".";
        const int w = cfg_.width, heads = cfg_.resolved_heads();

        auto chunks = add_rowvec(matmul(silu(c), param(p + "adaln.w")), param(p + "adaln.b"));
        auto g1 = reshape(slice_cols(chunks, 0, w), {w});
        auto b1 = reshape(slice_cols(chunks, w, w), {w});
        auto a1 = reshape(slice_cols(chunks, 2 * w, w), {w});
        auto g2 = reshape(slice_cols(chunks, 3 * w, w), {w});
        auto b2 = reshape(slice_cols(chunks, 4 * w, w), {w});
        auto a2 = reshape(slice_cols(chunks, 5 * w, w), {w});

        auto h = x;
        { // gated, modulated self-attention over tokens within each frame
            auto m_in = modulate(layer_norm_noaffine(h, kLnEps), g1, b1);
            auto q = split_heads(add_rowvec(matmul(m_in, param(p + "attn.wq")), param(p + "attn.bq")), heads);
            auto k = split_heads(add_rowvec(matmul(m_in, param(p + "attn.wk")), param(p + "attn.bk")), heads);
            auto v = split_heads(add_rowvec(matmul(m_in, param(p + "attn.wv")), param(p + "attn.bv")), heads);
            auto at = merge_heads(attention(q, k, v), heads);
            auto proj = add_rowvec(matmul(at, param(p + "attn.wo")), param(p + "attn.bo"));
            h = add(h, mul_rowvec(proj, a1));
        }
        if (cfg_.variant == Variant::cross_attention) {
            // unmodulated residual branch; image tokens query the text tokens
            const auto& ctx = select_context(cfg_.encoders, conds, i);
            const int dt = cfg_.encoders.d_text_for_block(i);
            if (ctx.tokens.rank() != 2 || ctx.tokens.dim(1) != dt)
                throw ShapeError("block: context token width does not match encoder spec");
            const int F = h.dim(0);
            auto cx = layer_norm(h, param(p + "xnorm.g"), param(p + "xnorm.b"), kLnEps);
            auto q = split_heads(add_rowvec(matmul(cx, param(p + "xattn.wq")), param(p + "xattn.bq")), heads);
            auto kk = reshape(add_rowvec(matmul(ctx.tokens, param(p + "xattn.wk")), param(p + "xattn.bk")),
                              {1, ctx.tokens.dim(0), w});
            auto vv = reshape(add_rowvec(matmul(ctx.tokens, param(p + "xattn.wv")), param(p + "xattn.bv")),
                              {1, ctx.tokens.dim(0), w});
            auto kt = tile_batch(split_heads(kk, heads), F);
            auto vt = tile_batch(split_heads(vv, heads), F);
            auto at = merge_heads(attention(q, kt, vt), heads);
            h = add(h, add_rowvec(matmul(at, param(p + "xattn.wo")), param(p + "xattn.bo")));
        }
        if (cfg_.temporal) {
            const int F = h.dim(0), n = h.dim(1);
            TensorT<T> full;
            const TensorT<T>* m = temporal_mask;
            if (m == nullptr) {
                full = full_motion_mask<T>(F);
                m = &full;
            }
            TempAttnParamsT<T> tp;
            tp.ln_g = param(p + "tnorm.g");
            tp.ln_b = param(p + "tnorm.b");
            tp.wq = param(p + "tattn.wq");
            tp.bq = param(p + "tattn.bq");
            tp.wk = param(p + "tattn.wk");
            tp.bk = param(p + "tattn.bk");
            tp.wv = param(p + "tattn.wv");
            tp.bv = param(p + "tattn.bv");
            tp.wo = param(p + "tattn.wo");
            tp.bo = param(p + "tattn.bo");
            auto ht = to_temporal(h, 1, F);
            auto yt = temp_self_attn(ht, tp, *m, heads, kLnEps);
            h = from_temporal(yt, 1, n);
        }
        { // gated, modulated MLP
            auto m_in = modulate(layer_norm_noaffine(h, kLnEps), g2, b2);
            auto mm = add_rowvec(matmul(m_in, param(p + "mlp.w1")), param(p + "mlp.b1"));
            mm = gelu(mm);
            mm = add_rowvec(matmul(mm, param(p + "mlp.w2")), param(p + "mlp.b2"));
            h = add(h, mul_rowvec(mm, a2));
        }
        return h;
    }

    // eps_hat prediction; output shape equals input shape.
    TensorT<T> forward(const TensorT<T>& x, int t, const std::vector<TextConditionT<T>>& conds,
                       const TensorT<T>* temporal_mask = nullptr) const {
        if (x.rank() != 4 || x.dim(1) != cfg_.latent_h || x.dim(2) != cfg_.latent_w ||
            x.dim(3) != cfg_.latent_c)
            throw ShapeError("forward: input does not match configured latent shape");
        if (temporal_mask != nullptr && !cfg_.temporal)
            throw ValueError("forward: temporal mask on a non-inflated model");
        check_conditions(conds);
        const int F = x.dim(0), w = cfg_.width;
        if (temporal_mask != nullptr &&
            (temporal_mask->rank() != 2 || temporal_mask->dim(0) != F || temporal_mask->dim(1) != F))
            throw ShapeError("forward: temporal mask must be [frames, frames]");

        auto tokens = patchify_rearrange(x, cfg_.patch);
        auto h = add_rowvec(matmul(tokens, param("patch_embed.w")), param("patch_embed.b"));
        h = add_bcast0(h, pos_embed_);
        auto c = condition_vector(t, conds);
        for (int i = 0; i < cfg_.depth; ++i) h = block_forward(i, h, c, conds, temporal_mask);

        auto chunks = add_rowvec(matmul(silu(c), param("final.adaln.w")), param("final.adaln.b"));
        auto gf = reshape(slice_cols(chunks, 0, w), {w});
        auto bf = reshape(slice_cols(chunks, w, w), {w});
        auto hf = modulate(layer_norm_noaffine(h, kLnEps), gf, bf);
        auto dec = add_rowvec(matmul(hf, param("final.dec.w")), param("final.dec.b"));
        return unpatchify_rearrange(dec, cfg_.patch, cfg_.latent_h, cfg_.latent_w, cfg_.latent_c);
    }

    // Same architecture at another scalar type (double shadow for gradient
    // oracles); parameter values are copied element-wise.
    template <typename U>
    GenTronT<U> cast() const {
        GenTronT<U> out(cfg_, 0);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& dst = out.param(names_[i]);
            for (size_t j = 0; j < params_[i].data->size(); ++j)
                (*dst.data)[j] = static_cast<U>((*params_[i].data)[j]);
        }
        return out;
    }

private:
    void check_conditions(const std::vector<TextConditionT<T>>& conds) const {
        if (static_cast<int>(conds.size()) != n_encoders())
            throw ValueError("forward: condition count does not match encoder spec");
        for (int e = 0; e < n_encoders(); ++e) {
            const int dt = cfg_.encoders.d_texts[static_cast<size_t>(e)];
            const auto& c = conds[static_cast<size_t>(e)];
            if (c.tokens.rank() != 2 || c.tokens.dim(0) < 1 || c.tokens.dim(1) != dt ||
                c.pooled.rank() != 1 || c.pooled.dim(0) != dt)
                throw ShapeError("forward: condition shapes do not match encoder spec");
        }
    }

    GenTronConfig cfg_;
    std::vector<std::string> names_;
    std::vector<TensorT<T>> params_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<ToyEncoderT<T>> encoders_;
    TensorT<T> pos_embed_;
};

// Grafts temporal layers onto a T2I model: shared parameters are copied
// verbatim, temporal q/k/v get fresh init, temporal output projections start
// at zero so frame-wise behavior is unchanged at step 0.
template <typename T>
GenTronT<T> inflate_t2i(const GenTronT<T>& t2i, uint64_t seed) {
    if (t2i.config().temporal) throw ValueError("inflate_t2i: model is already inflated");
    GenTronConfig vcfg = t2i.config();
    vcfg.temporal = true;
    GenTronT<T> v(vcfg, seed);
    for (const auto& name : t2i.param_names()) *v.param(name).data = *t2i.param(name).data;
    return v;
}

using GenTron = GenTronT<float>;

} // namespace gentron
