#pragma once

#include "gentron/tensor.hpp"

namespace gentron {

// A clip (or batch of clips) in flattened batch-frame layout. is_motion_free
// marks pseudo-video built from a single image: all t frames identical.
template <typename T>
struct VideoBatchT {
    TensorT<T> frames; // [(b·t), H, W, C] latent frames
    int b = 1;
    int t = 1;
    bool is_motion_free = false;
};

// (b t) n d -> (b n) t d
template <typename T>
TensorT<T> to_temporal(const TensorT<T>& x, int b, int t) {
    return regroup_frames(x, b, t);
}

// (b n) t d -> (b t) n d; the inverse regroup with the roles of t and n swapped.
template <typename T>
TensorT<T> from_temporal(const TensorT<T>& x, int b, int n) {
    return regroup_frames(x, b, n);
}

// Identity over frames: temporal attention degenerates to within-frame no-ops.
template <typename T>
TensorT<T> motion_free_mask(int t) {
    if (t < 1) throw ValueError("motion_free_mask: t must be >= 1");
    auto m = TensorT<T>::zeros({t, t});
    for (int i = 0; i < t; ++i) (*m.data)[static_cast<int64_t>(i) * t + i] = T(1);
    return m;
}

template <typename T>
TensorT<T> full_motion_mask(int t) {
    if (t < 1) throw ValueError("full_motion_mask: t must be >= 1");
    return TensorT<T>::full({t, t}, T(1));
}

// t identical frames from one image (the original plus t-1 repeats).
template <typename T>
VideoBatchT<T> pseudo_video(const TensorT<T>& image, int t) {
    if (image.rank() != 3) throw ShapeError("pseudo_video: image must be [H, W, C]");
    if (t < 1) throw ValueError("pseudo_video: t must be >= 1");
    VideoBatchT<T> v;
    v.b = 1;
    v.t = t;
    v.is_motion_free = true;
    v.frames = TensorT<T>::zeros({t, image.dim(0), image.dim(1), image.dim(2)});
    const size_t n = image.data->size();
    for (int f = 0; f < t; ++f)
        std::copy(image.data->begin(), image.data->end(),
                  v.frames.data->begin() + static_cast<int64_t>(f) * n);
    return v;
}

// Weights of one temporal self-attention layer. The output projection is zero
// at inflation time so the layer starts as an exact identity.
template <typename T>
struct TempAttnParamsT {
    TensorT<T> ln_g, ln_b;
    TensorT<T> wq, bq, wk, bk, wv, bv;
    TensorT<T> wo, bo;
};

// x = x + proj(Attn(LN(x))) over the frame axis: x is [(b·n), t, d],
// mask is [t, t] in {0,1} (identity = motion-free).
template <typename T>
TensorT<T> temp_self_attn(const TensorT<T>& x, const TempAttnParamsT<T>& p, const TensorT<T>& mask,
                          int heads, T ln_eps = T(1e-5)) {
    if (x.rank() != 3) throw ShapeError("temp_self_attn: rank 3 input required");
    auto h = layer_norm(x, p.ln_g, p.ln_b, ln_eps);
    auto q = split_heads(add_rowvec(matmul(h, p.wq), p.bq), heads);
    auto k = split_heads(add_rowvec(matmul(h, p.wk), p.bk), heads);
    auto v = split_heads(add_rowvec(matmul(h, p.wv), p.bv), heads);
    auto attn = merge_heads(attention(q, k, v, &mask), heads);
    return add(x, add_rowvec(matmul(attn, p.wo), p.bo));
}

} // namespace gentron
