#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gentron/rng.hpp"

namespace gentron {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#if !defined(NDEBUG)
#define GENTRON_FINITE_CHECKS 1
#endif

namespace detail {
inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive");
        n *= e;
    }
    return n;
}
} // namespace detail

template <typename T>
struct NodeT;

// Dense row-major tensor of reals with an optional gradient slot. Copies are
// shallow: data, grad and the autodiff node are shared, so a Tensor behaves
// like a handle. All arithmetic runs on a single thread with a fixed
// accumulation order, which makes every forward op bitwise reproducible.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;
    std::shared_ptr<std::vector<T>> grad; // allocated iff requires_grad
    std::shared_ptr<NodeT<T>> node;       // recorded op that produced this value
    bool requires_grad = false;

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        TensorT t;
        const int64_t n = detail::shape_numel(shape);
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<T>>(static_cast<size_t>(n), T(0));
        t.requires_grad = requires_grad;
        if (requires_grad) t.grad = std::make_shared<std::vector<T>>(static_cast<size_t>(n), T(0));
        return t;
    }

    static TensorT full(std::vector<int> shape, T value) {
        TensorT t = zeros(std::move(shape));
        std::fill(t.data->begin(), t.data->end(), value);
        return t;
    }

    static TensorT from_vec(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
        const int64_t n = detail::shape_numel(shape);
        if (static_cast<int64_t>(values.size()) != n)
            throw ShapeError("from_vec: data length does not match shape");
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<T>>(std::move(values));
        t.requires_grad = requires_grad;
        if (requires_grad) t.grad = std::make_shared<std::vector<T>>(static_cast<size_t>(n), T(0));
        return t;
    }

    static TensorT scalar(T value) { return from_vec({1}, {value}); }

    int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T* gptr() { return grad->data(); }
    const T* gptr() const { return grad->data(); }

    T item() const {
        if (numel() != 1) throw ShapeError("item: tensor is not scalar");
        return (*data)[0];
    }

    void ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<T>>(data->size(), T(0));
    }
    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }
};

template <typename T>
struct NodeT {
    std::vector<TensorT<T>> parents;
    std::function<void(const TensorT<T>&)> backward; // accumulates into parents' grads
};

// Scoped switch that disables tape recording (used by samplers and eval paths).
class NoGradGuard {
public:
    NoGradGuard() : prev_(enabled()) { enabled() = false; }
    ~NoGradGuard() { enabled() = prev_; }
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }

private:
    bool prev_;
};

namespace detail {

template <typename T>
inline void check_finite(const TensorT<T>& t, const char* op) {
#ifdef GENTRON_FINITE_CHECKS
    for (T v : *t.data) {
        if (!std::isfinite(static_cast<double>(v)))
            throw std::logic_error(std::string("non-finite value after op: ") + op);
    }
#else
    (void)t;
    (void)op;
#endif
}

template <typename T>
inline bool track(const TensorT<T>& t) {
    return t.requires_grad && NoGradGuard::enabled();
}

template <typename T, typename... Ts>
inline bool track(const TensorT<T>& t, const Ts&... rest) {
    return track(t) || track(rest...);
}

template <typename T>
inline TensorT<T> make_out(std::vector<int> shape, bool requires_grad) {
    return TensorT<T>::zeros(std::move(shape), requires_grad);
}

template <typename T, typename F>
inline void attach(TensorT<T>& out, std::vector<TensorT<T>> parents, F&& backward) {
    if (!out.requires_grad) return;
    out.node = std::make_shared<NodeT<T>>();
    out.node->parents = std::move(parents);
    out.node->backward = std::forward<F>(backward);
}

inline void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.shape == b.shape, "add: shape mismatch");
    auto out = detail::make_out<T>(a.shape, detail::track(a, b));
    const size_t n = a.data->size();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    detail::check_finite(out, "add");
    detail::attach(out, {a, b}, [](const TensorT<T>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const size_t n2 = o.data->size();
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i];
        }
    });
    return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.shape == b.shape, "sub: shape mismatch");
    auto out = detail::make_out<T>(a.shape, detail::track(a, b));
    const size_t n = a.data->size();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
    detail::check_finite(out, "sub");
    detail::attach(out, {a, b}, [](const TensorT<T>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const size_t n2 = o.data->size();
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n2; ++i) (*pb.grad)[i] -= (*o.grad)[i];
        }
    });
    return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.shape == b.shape, "mul: shape mismatch");
    auto out = detail::make_out<T>(a.shape, detail::track(a, b));
    const size_t n = a.data->size();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    detail::check_finite(out, "mul");
    detail::attach(out, {a, b}, [](const TensorT<T>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const size_t n2 = o.data->size();
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
        }
    });
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    auto out = detail::make_out<T>(a.shape, detail::track(a));
    const size_t n = a.data->size();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * s;
    detail::check_finite(out, "scale");
    detail::attach(out, {a}, [s](const TensorT<T>& o) {
        auto& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const size_t n2 = o.data->size();
        for (size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i] * s;
    });
    return out;
}

template <typename T>
TensorT<T> add_const(const TensorT<T>& a, T c) {
    auto out = detail::make_out<T>(a.shape, detail::track(a));
    const size_t n = a.data->size();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + c;
    detail::check_finite(out, "add_const");
    detail::attach(out, {a}, [](const TensorT<T>& o) {
        auto& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const size_t n2 = o.data->size();
        for (size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i];
    });
    return out;
}

// x[..., D] + v[D], v broadcast over all leading axes.
template <typename T>
TensorT<T> add_rowvec(const TensorT<T>& x, const TensorT<T>& v) {
    detail::require(x.rank() >= 1 && v.rank() == 1, "add_rowvec: v must be rank 1");
    const int d = x.shape.back();
    detail::require(v.dim(0) == d, "add_rowvec: trailing extent mismatch");
    auto out = detail::make_out<T>(x.shape, detail::track(x, v));
    const size_t rows = x.data->size() / static_cast<size_t>(d);
    for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j)
            (*out.data)[r * d + j] = (*x.data)[r * d + j] + (*v.data)[j];
    detail::check_finite(out, "add_rowvec");
    detail::attach(out, {x, v}, [d, rows](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        auto& pv = o.node->parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            const size_t n2 = o.data->size();
            for (size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (size_t r = 0; r < rows; ++r)
                for (int j = 0; j < d; ++j) (*pv.grad)[j] += (*o.grad)[r * d + j];
        }
    });
    return out;
}

// x[..., D] * v[D], v broadcast over all leading axes.
template <typename T>
TensorT<T> mul_rowvec(const TensorT<T>& x, const TensorT<T>& v) {
    detail::require(x.rank() >= 1 && v.rank() == 1, "mul_rowvec: v must be rank 1");
    const int d = x.shape.back();
    detail::require(v.dim(0) == d, "mul_rowvec: trailing extent mismatch");
    auto out = detail::make_out<T>(x.shape, detail::track(x, v));
    const size_t rows = x.data->size() / static_cast<size_t>(d);
    for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j)
            (*out.data)[r * d + j] = (*x.data)[r * d + j] * (*v.data)[j];
    detail::check_finite(out, "mul_rowvec");
    detail::attach(out, {x, v}, [d, rows](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        auto& pv = o.node->parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (size_t r = 0; r < rows; ++r)
                for (int j = 0; j < d; ++j)
                    (*px.grad)[r * d + j] += (*o.grad)[r * d + j] * (*pv.data)[j];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (size_t r = 0; r < rows; ++r)
                for (int j = 0; j < d; ++j)
                    (*pv.grad)[j] += (*o.grad)[r * d + j] * (*px.data)[r * d + j];
        }
    });
    return out;
}

// x[F, rest...] + m[rest...], m broadcast over the leading axis.
template <typename T>
TensorT<T> add_bcast0(const TensorT<T>& x, const TensorT<T>& m) {
    detail::require(x.rank() == m.rank() + 1, "add_bcast0: m must drop exactly the leading axis");
    for (int i = 0; i < m.rank(); ++i)
        detail::require(x.dim(i + 1) == m.dim(i), "add_bcast0: trailing extents disagree");
    const int F = x.dim(0);
    const int64_t chunk = m.numel();
    auto out = detail::make_out<T>(x.shape, detail::track(x, m));
    for (int f = 0; f < F; ++f)
        for (int64_t i = 0; i < chunk; ++i)
            (*out.data)[f * chunk + i] = (*x.data)[f * chunk + i] + (*m.data)[i];
    detail::check_finite(out, "add_bcast0");
    detail::attach(out, {x, m}, [F, chunk](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        auto& pm = o.node->parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            const size_t n2 = o.data->size();
            for (size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i];
        }
        if (pm.requires_grad) {
            pm.ensure_grad();
            for (int f = 0; f < F; ++f)
                for (int64_t i = 0; i < chunk; ++i) (*pm.grad)[i] += (*o.grad)[f * chunk + i];
        }
    });
    return out;
}

// [B, m, d] -> [R·B, m, d]: the whole batch repeated R times (out[i] = in[i mod B]).
// Lets per-frame query batches attend to one shared key/value set; the adjoint
// sums gradients over the repeats.
template <typename T>
TensorT<T> tile_batch(const TensorT<T>& x, int repeats) {
    detail::require(x.rank() == 3, "tile_batch: rank 3 required");
    detail::require(repeats >= 1, "tile_batch: repeats must be >= 1");
    const int B = x.dim(0);
    const int64_t chunk = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    auto out = detail::make_out<T>({repeats * B, x.dim(1), x.dim(2)}, detail::track(x));
    for (int r = 0; r < repeats; ++r)
        std::copy(x.data->begin(), x.data->end(),
                  out.data->begin() + static_cast<int64_t>(r) * B * chunk);
    detail::attach(out, {x}, [repeats, B, chunk](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const int64_t n = B * chunk;
        for (int r = 0; r < repeats; ++r)
            for (int64_t i = 0; i < n; ++i)
                (*px.grad)[i] += (*o.grad)[static_cast<int64_t>(r) * n + i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

namespace detail {

// out[R,n] += a[R,k] @ b[k,n], k accumulated in ascending order.
template <typename T>
void mm_accum(const T* a, const T* b, T* out, int64_t rows, int k, int n) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* arow = a + r * k;
        T* orow = out + r * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = b + static_cast<int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[R,k] += dy[R,n] @ b[k,n]^T
template <typename T>
void mm_accum_bt(const T* dy, const T* b, T* out, int64_t rows, int k, int n) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* dyrow = dy + r * n;
        T* orow = out + r * k;
        for (int kk = 0; kk < k; ++kk) {
            const T* brow = b + static_cast<int64_t>(kk) * n;
            T acc = 0;
            for (int j = 0; j < n; ++j) acc += dyrow[j] * brow[j];
            orow[kk] += acc;
        }
    }
}

// out[k,n] += a[R,k]^T @ dy[R,n]
template <typename T>
void mm_accum_at(const T* a, const T* dy, T* out, int64_t rows, int k, int n) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* arow = a + r * k;
        const T* dyrow = dy + r * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            T* orow = out + static_cast<int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * dyrow[j];
        }
    }
}

} // namespace detail

// a[..., k] @ b[k, n] -> [..., n]; leading axes of a are treated as rows.
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.rank() >= 2, "matmul: lhs must have rank >= 2");
    detail::require(b.rank() == 2, "matmul: rhs must have rank 2");
    const int k = a.shape.back();
    detail::require(b.dim(0) == k, "matmul: inner dimensions disagree");
    const int n = b.dim(1);
    std::vector<int> out_shape = a.shape;
    out_shape.back() = n;
    const int64_t rows = a.numel() / k;
    auto out = detail::make_out<T>(out_shape, detail::track(a, b));
    detail::mm_accum(a.ptr(), b.ptr(), out.ptr(), rows, k, n);
    detail::check_finite(out, "matmul");
    detail::attach(out, {a, b}, [rows, k, n](const TensorT<T>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            detail::mm_accum_bt(o.gptr(), pb.ptr(), pa.gptr(), rows, k, n);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            detail::mm_accum_at(pa.ptr(), o.gptr(), pb.gptr(), rows, k, n);
        }
    });
    return out;
}

// Batched a[B,m,k] @ b[B,k,n] -> [B,m,n].
template <typename T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.rank() == 3 && b.rank() == 3, "bmm: operands must have rank 3");
    detail::require(a.dim(0) == b.dim(0), "bmm: batch extents disagree");
    detail::require(a.dim(2) == b.dim(1), "bmm: inner dimensions disagree");
    const int B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    auto out = detail::make_out<T>({B, m, n}, detail::track(a, b));
    for (int i = 0; i < B; ++i)
        detail::mm_accum(a.ptr() + static_cast<int64_t>(i) * m * k,
                         b.ptr() + static_cast<int64_t>(i) * k * n,
                         out.ptr() + static_cast<int64_t>(i) * m * n, m, k, n);
    detail::check_finite(out, "bmm");
    detail::attach(out, {a, b}, [B, m, k, n](const TensorT<T>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        for (int i = 0; i < B; ++i) {
            const int64_t ao = static_cast<int64_t>(i) * m * k;
            const int64_t bo = static_cast<int64_t>(i) * k * n;
            const int64_t oo = static_cast<int64_t>(i) * m * n;
            if (pa.requires_grad) {
                pa.ensure_grad();
                detail::mm_accum_bt(o.gptr() + oo, pb.ptr() + bo, pa.gptr() + ao, m, k, n);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                detail::mm_accum_at(pa.ptr() + ao, o.gptr() + oo, pb.gptr() + bo, m, k, n);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// index permutations (reshape-free rearranges)
// ---------------------------------------------------------------------------

namespace detail {

// out[i] = in[map[i]]; map must be a bijection, so the adjoint is a scatter.
template <typename T>
TensorT<T> permutation(const TensorT<T>& x, std::vector<int> out_shape, std::vector<int64_t> map,
                       const char* op) {
    const int64_t n = shape_numel(out_shape);
    require(n == x.numel(), "permutation: element counts disagree");
    auto out = make_out<T>(std::move(out_shape), track(x));
    for (int64_t i = 0; i < n; ++i) (*out.data)[i] = (*x.data)[map[i]];
    check_finite(out, op);
    attach(out, {x}, [map = std::move(map), n](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int64_t i = 0; i < n; ++i) (*px.grad)[map[i]] += (*o.grad)[i];
    });
    return out;
}

} // namespace detail

// Pure metadata reshape (same element order).
template <typename T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<int> new_shape) {
    detail::require(detail::shape_numel(new_shape) == x.numel(), "reshape: element counts disagree");
    auto out = detail::make_out<T>(std::move(new_shape), detail::track(x));
    *out.data = *x.data;
    detail::attach(out, {x}, [](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const size_t n2 = o.data->size();
        for (size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i];
    });
    return out;
}

// [B,m,n] -> [B,n,m]
template <typename T>
TensorT<T> transpose_last2(const TensorT<T>& x) {
    detail::require(x.rank() == 3, "transpose_last2: rank 3 required");
    const int B = x.dim(0), m = x.dim(1), n = x.dim(2);
    std::vector<int64_t> map(static_cast<size_t>(x.numel()));
    int64_t i = 0;
    for (int b = 0; b < B; ++b)
        for (int j = 0; j < n; ++j)
            for (int r = 0; r < m; ++r)
                map[i++] = (static_cast<int64_t>(b) * m + r) * n + j;
    return detail::permutation(x, {B, n, m}, std::move(map), "transpose_last2");
}

// (b*t, n, d) -> (b*n, t, d); the t<->n regroup behind the temporal layer.
template <typename T>
TensorT<T> regroup_frames(const TensorT<T>& x, int b, int t) {
    detail::require(x.rank() == 3, "regroup_frames: rank 3 required");
    detail::require(b >= 1 && t >= 1 && x.dim(0) == b * t, "regroup_frames: leading extent must equal b*t");
    const int n = x.dim(1), d = x.dim(2);
    std::vector<int64_t> map(static_cast<size_t>(x.numel()));
    int64_t i = 0;
    for (int bb = 0; bb < b; ++bb)
        for (int nn = 0; nn < n; ++nn)
            for (int tt = 0; tt < t; ++tt)
                for (int dd = 0; dd < d; ++dd)
                    map[i++] = ((static_cast<int64_t>(bb) * t + tt) * n + nn) * d + dd;
    return detail::permutation(x, {b * n, t, d}, std::move(map), "regroup_frames");
}

// [F, n, h*hd] -> [F*h, n, hd]
template <typename T>
TensorT<T> split_heads(const TensorT<T>& x, int heads) {
    detail::require(x.rank() == 3, "split_heads: rank 3 required");
    const int F = x.dim(0), n = x.dim(1), w = x.dim(2);
    detail::require(heads >= 1 && w % heads == 0, "split_heads: width not divisible by heads");
    const int hd = w / heads;
    std::vector<int64_t> map(static_cast<size_t>(x.numel()));
    int64_t i = 0;
    for (int f = 0; f < F; ++f)
        for (int h = 0; h < heads; ++h)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < hd; ++k)
                    map[i++] = (static_cast<int64_t>(f) * n + j) * w + h * hd + k;
    return detail::permutation(x, {F * heads, n, hd}, std::move(map), "split_heads");
}

// [F*h, n, hd] -> [F, n, h*hd]
template <typename T>
TensorT<T> merge_heads(const TensorT<T>& x, int heads) {
    detail::require(x.rank() == 3, "merge_heads: rank 3 required");
    const int Fh = x.dim(0), n = x.dim(1), hd = x.dim(2);
    detail::require(heads >= 1 && Fh % heads == 0, "merge_heads: leading extent not divisible by heads");
    const int F = Fh / heads, w = heads * hd;
    std::vector<int64_t> map(static_cast<size_t>(x.numel()));
    int64_t i = 0;
    for (int f = 0; f < F; ++f)
        for (int j = 0; j < n; ++j)
            for (int h = 0; h < heads; ++h)
                for (int k = 0; k < hd; ++k)
                    map[i++] = ((static_cast<int64_t>(f) * heads + h) * n + j) * hd + k;
    return detail::permutation(x, {F, n, w}, std::move(map), "merge_heads");
}

// [F,H,W,C] -> [F, (H/p)*(W/p), p*p*C], patches in row-major grid order.
template <typename T>
TensorT<T> patchify_rearrange(const TensorT<T>& x, int p) {
    detail::require(x.rank() == 4, "patchify_rearrange: rank 4 required");
    const int F = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    detail::require(p >= 1 && H % p == 0 && W % p == 0, "patchify_rearrange: H and W must be divisible by patch");
    const int gh = H / p, gw = W / p;
    std::vector<int64_t> map(static_cast<size_t>(x.numel()));
    int64_t i = 0;
    for (int f = 0; f < F; ++f)
        for (int ph = 0; ph < gh; ++ph)
            for (int pw = 0; pw < gw; ++pw)
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        for (int c = 0; c < C; ++c)
                            map[i++] = ((static_cast<int64_t>(f) * H + ph * p + dy) * W + pw * p + dx) * C + c;
    return detail::permutation(x, {F, gh * gw, p * p * C}, std::move(map), "patchify_rearrange");
}

// Inverse of patchify_rearrange.
template <typename T>
TensorT<T> unpatchify_rearrange(const TensorT<T>& x, int p, int H, int W, int C) {
    detail::require(x.rank() == 3, "unpatchify_rearrange: rank 3 required");
    const int F = x.dim(0);
    detail::require(H % p == 0 && W % p == 0, "unpatchify_rearrange: H and W must be divisible by patch");
    const int gh = H / p, gw = W / p;
    detail::require(x.dim(1) == gh * gw && x.dim(2) == p * p * C, "unpatchify_rearrange: token grid mismatch");
    std::vector<int64_t> map(static_cast<size_t>(x.numel()));
    int64_t i = 0;
    for (int f = 0; f < F; ++f)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
                for (int c = 0; c < C; ++c) {
                    const int ph = h / p, dy = h % p, pw = w / p, dx = w % p;
                    map[i++] = (static_cast<int64_t>(f) * gh * gw + ph * gw + pw) * (p * p * C) +
                               (dy * p + dx) * C + c;
                }
    return detail::permutation(x, {F, H, W, C}, std::move(map), "unpatchify_rearrange");
}

// ---------------------------------------------------------------------------
// reductions and nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum_all(const TensorT<T>& x) {
    auto out = detail::make_out<T>({1}, detail::track(x));
    T acc = 0;
    for (T v : *x.data) acc += v;
    (*out.data)[0] = acc;
    detail::check_finite(out, "sum_all");
    detail::attach(out, {x}, [](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const T g = (*o.grad)[0];
        for (auto& gi : *px.grad) gi += g;
    });
    return out;
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// Mean over axis 0 of a rank-2 tensor: [L,d] -> [d].
template <typename T>
TensorT<T> mean_axis0(const TensorT<T>& x) {
    detail::require(x.rank() == 2, "mean_axis0: rank 2 required");
    const int L = x.dim(0), d = x.dim(1);
    auto out = detail::make_out<T>({d}, detail::track(x));
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < d; ++j) (*out.data)[j] += (*x.data)[static_cast<int64_t>(i) * d + j];
    for (int j = 0; j < d; ++j) (*out.data)[j] /= static_cast<T>(L);
    detail::check_finite(out, "mean_axis0");
    detail::attach(out, {x}, [L, d](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const T inv = T(1) / static_cast<T>(L);
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < d; ++j)
                (*px.grad)[static_cast<int64_t>(i) * d + j] += (*o.grad)[j] * inv;
    });
    return out;
}

// Columns [off, off+len) of the last axis.
template <typename T>
TensorT<T> slice_cols(const TensorT<T>& x, int off, int len) {
    detail::require(x.rank() >= 1, "slice_cols: rank >= 1 required");
    const int d = x.shape.back();
    detail::require(off >= 0 && len >= 1 && off + len <= d, "slice_cols: slice out of range");
    std::vector<int> out_shape = x.shape;
    out_shape.back() = len;
    const int64_t rows = x.numel() / d;
    auto out = detail::make_out<T>(out_shape, detail::track(x));
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < len; ++j) (*out.data)[r * len + j] = (*x.data)[r * d + off + j];
    detail::attach(out, {x}, [off, len, d, rows](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < len; ++j) (*px.grad)[r * d + off + j] += (*o.grad)[r * len + j];
    });
    return out;
}

// Row gather from a [V,d] table; adjoint is scatter-add (embedding lookup).
template <typename T>
TensorT<T> gather_rows(const TensorT<T>& table, const std::vector<int>& idx) {
    detail::require(table.rank() == 2, "gather_rows: table must have rank 2");
    const int V = table.dim(0), d = table.dim(1);
    const int L = static_cast<int>(idx.size());
    detail::require(L >= 1, "gather_rows: empty index list");
    for (int i : idx) detail::require(i >= 0 && i < V, "gather_rows: index out of range");
    auto out = detail::make_out<T>({L, d}, detail::track(table));
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < d; ++j)
            (*out.data)[static_cast<int64_t>(i) * d + j] = (*table.data)[static_cast<int64_t>(idx[i]) * d + j];
    detail::attach(out, {table}, [idx, d, L](const TensorT<T>& o) {
        auto& pt = o.node->parents[0];
        if (!pt.requires_grad) return;
        pt.ensure_grad();
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < d; ++j)
                (*pt.grad)[static_cast<int64_t>(idx[i]) * d + j] += (*o.grad)[static_cast<int64_t>(i) * d + j];
    });
    return out;
}

// Max-subtracted softmax over a given axis.
template <typename T>
TensorT<T> softmax(const TensorT<T>& x, int axis) {
    detail::require(axis >= 0 && axis < x.rank(), "softmax: axis out of range");
    const int L = x.dim(axis);
    int64_t inner = 1;
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int64_t outer = x.numel() / (L * inner);
    auto out = detail::make_out<T>(x.shape, detail::track(x));
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * L * inner + in;
            T mx = (*x.data)[base];
            for (int l = 1; l < L; ++l) mx = std::max(mx, (*x.data)[base + l * inner]);
            T sum = 0;
            for (int l = 0; l < L; ++l) {
                const T e = std::exp((*x.data)[base + l * inner] - mx);
                (*out.data)[base + l * inner] = e;
                sum += e;
            }
            for (int l = 0; l < L; ++l) (*out.data)[base + l * inner] /= sum;
        }
    detail::check_finite(out, "softmax");
    detail::attach(out, {x}, [L, inner, outer](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int64_t ou = 0; ou < outer; ++ou)
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = ou * L * inner + in;
                T dot = 0;
                for (int l = 0; l < L; ++l) dot += (*o.grad)[base + l * inner] * (*o.data)[base + l * inner];
                for (int l = 0; l < L; ++l)
                    (*px.grad)[base + l * inner] +=
                        (*o.data)[base + l * inner] * ((*o.grad)[base + l * inner] - dot);
            }
    });
    return out;
}

// Yields the same probabilities as adding log(mask) logits, but masked slots
// never materialize a -inf: they are skipped in the max/exp/sum loops and the
// output there is exactly 0. With an all-ones mask every loop degenerates to
// the unmasked arithmetic, so the result is bitwise equal to mask-free softmax.
template <typename T>
TensorT<T> softmax_masked(const TensorT<T>& scores, const TensorT<T>& mask) {
    detail::require(scores.rank() == 3, "softmax_masked: scores must have rank 3");
    const int B = scores.dim(0), Lq = scores.dim(1), Lk = scores.dim(2);
    detail::require(mask.rank() == 2 && mask.dim(0) == Lq && mask.dim(1) == Lk,
                    "softmax_masked: mask shape must be [Lq, Lk]");
    for (T v : *mask.data)
        if (v != T(0) && v != T(1)) throw ValueError("softmax_masked: mask entries must be 0 or 1");
    for (int i = 0; i < Lq; ++i) {
        T rowsum = 0;
        for (int j = 0; j < Lk; ++j) rowsum += (*mask.data)[static_cast<int64_t>(i) * Lk + j];
        if (rowsum == T(0)) throw ValueError("softmax_masked: fully masked attention row");
    }
    auto out = detail::make_out<T>(scores.shape, detail::track(scores));
    const T* m = mask.ptr();
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < Lq; ++i) {
            const int64_t base = (static_cast<int64_t>(b) * Lq + i) * Lk;
            const T* mrow = m + static_cast<int64_t>(i) * Lk;
            T mx = -std::numeric_limits<T>::infinity();
            for (int j = 0; j < Lk; ++j)
                if (mrow[j] != T(0)) mx = std::max(mx, (*scores.data)[base + j]);
            T sum = 0;
            for (int j = 0; j < Lk; ++j) {
                if (mrow[j] != T(0)) {
                    const T e = std::exp((*scores.data)[base + j] - mx);
                    (*out.data)[base + j] = e;
                    sum += e;
                } else {
                    (*out.data)[base + j] = T(0);
                }
            }
            for (int j = 0; j < Lk; ++j) (*out.data)[base + j] /= sum;
        }
    detail::check_finite(out, "softmax_masked");
    detail::attach(out, {scores}, [B, Lq, Lk](const TensorT<T>& o) {
        auto& ps = o.node->parents[0];
        if (!ps.requires_grad) return;
        ps.ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < Lq; ++i) {
                const int64_t base = (static_cast<int64_t>(b) * Lq + i) * Lk;
                T dot = 0;
                for (int j = 0; j < Lk; ++j) dot += (*o.grad)[base + j] * (*o.data)[base + j];
                for (int j = 0; j < Lk; ++j)
                    (*ps.grad)[base + j] += (*o.data)[base + j] * ((*o.grad)[base + j] - dot);
            }
    });
    return out;
}

// Last-axis layer norm without affine; zero-variance positions produce 0.
template <typename T>
TensorT<T> layer_norm_noaffine(const TensorT<T>& x, T eps) {
    detail::require(x.rank() >= 1, "layer_norm: rank >= 1 required");
    detail::require(eps > T(0), "layer_norm: eps must be positive");
    const int d = x.shape.back();
    const int64_t rows = x.numel() / d;
    auto out = detail::make_out<T>(x.shape, detail::track(x));
    std::vector<T> rstd(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x.ptr() + r * d;
        T mu = 0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<T>(d);
        T var = 0;
        for (int j = 0; j < d; ++j) {
            const T s = xr[j] - mu;
            var += s * s;
        }
        var /= static_cast<T>(d);
        const T rs = T(1) / std::sqrt(var + eps);
        rstd[r] = rs;
        T* orow = out.ptr() + r * d;
        for (int j = 0; j < d; ++j) orow[j] = (xr[j] - mu) * rs;
    }
    detail::check_finite(out, "layer_norm");
    detail::attach(out, {x},
                   [d, rows, rstd = std::move(rstd)](const TensorT<T>& o) {
                       auto& px = o.node->parents[0];
                       if (!px.requires_grad) return;
                       px.ensure_grad();
                       for (int64_t r = 0; r < rows; ++r) {
                           const T* dy = o.gptr() + r * d;
                           const T* y = o.ptr() + r * d;
                           T* dx = px.gptr() + r * d;
                           T dmean = 0, dnorm = 0;
                           for (int j = 0; j < d; ++j) {
                               dmean += dy[j];
                               dnorm += dy[j] * y[j];
                           }
                           dmean /= static_cast<T>(d);
                           dnorm /= static_cast<T>(d);
                           for (int j = 0; j < d; ++j)
                               dx[j] += rstd[r] * (dy[j] - dmean - y[j] * dnorm);
                       }
                   });
    return out;
}

// Affine layer norm: gamma * LN(x) + beta over the last axis.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta, T eps) {
    detail::require(gamma.rank() == 1 && beta.rank() == 1 && gamma.dim(0) == x.shape.back() &&
                        beta.dim(0) == x.shape.back(),
                    "layer_norm: gamma/beta must match the last-axis extent");
    return add_rowvec(mul_rowvec(layer_norm_noaffine(x, eps), gamma), beta);
}

// tanh-approximate GELU.
template <typename T>
TensorT<T> gelu(const TensorT<T>& x) {
    constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687;
    constexpr double kCubic = 0.044715;
    auto out = detail::make_out<T>(x.shape, detail::track(x));
    const size_t n = x.data->size();
    for (size_t i = 0; i < n; ++i) {
        const T v = (*x.data)[i];
        const T u = static_cast<T>(kSqrt2OverPi) * (v + static_cast<T>(kCubic) * v * v * v);
        (*out.data)[i] = T(0.5) * v * (T(1) + std::tanh(u));
    }
    detail::check_finite(out, "gelu");
    detail::attach(out, {x}, [](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const size_t n2 = o.data->size();
        for (size_t i = 0; i < n2; ++i) {
            const T v = (*px.data)[i];
            const T u = static_cast<T>(kSqrt2OverPi) * (v + static_cast<T>(kCubic) * v * v * v);
            const T th = std::tanh(u);
            const T sech2 = T(1) - th * th;
            const T du = static_cast<T>(kSqrt2OverPi) * (T(1) + T(3) * static_cast<T>(kCubic) * v * v);
            const T d = T(0.5) * (T(1) + th) + T(0.5) * v * sech2 * du;
            (*px.grad)[i] += (*o.grad)[i] * d;
        }
    });
    return out;
}

template <typename T>
TensorT<T> silu(const TensorT<T>& x) {
    auto out = detail::make_out<T>(x.shape, detail::track(x));
    const size_t n = x.data->size();
    for (size_t i = 0; i < n; ++i) {
        const T v = (*x.data)[i];
        (*out.data)[i] = v / (T(1) + std::exp(-v));
    }
    detail::check_finite(out, "silu");
    detail::attach(out, {x}, [](const TensorT<T>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const size_t n2 = o.data->size();
        for (size_t i = 0; i < n2; ++i) {
            const T v = (*px.data)[i];
            const T s = T(1) / (T(1) + std::exp(-v));
            (*px.grad)[i] += (*o.grad)[i] * s * (T(1) + v * (T(1) - s));
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

// softmax(q k^T / sqrt(d) [+ log mask]) v over rank-3 operands.
// q: [B,Lq,d], k/v: [B,Lk,d], mask: [Lq,Lk] of {0,1}. An absent mask is
// evaluated through the same all-ones code path, so the two are bitwise equal.
template <typename T>
TensorT<T> attention(const TensorT<T>& q, const TensorT<T>& k, const TensorT<T>& v,
                     const TensorT<T>* mask = nullptr) {
    detail::require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention: rank 3 operands required");
    detail::require(q.dim(0) == k.dim(0) && q.dim(0) == v.dim(0), "attention: batch extents disagree");
    detail::require(q.dim(2) == k.dim(2), "attention: q/k feature extents disagree");
    detail::require(k.dim(1) == v.dim(1), "attention: k/v length extents disagree");
    const int d = q.dim(2);
    TensorT<T> ones;
    const TensorT<T>* m = mask;
    if (m == nullptr) {
        ones = TensorT<T>::full({q.dim(1), k.dim(1)}, T(1));
        m = &ones;
    }
    auto scores = scale(bmm(q, transpose_last2(k)), T(1) / std::sqrt(static_cast<T>(d)));
    auto probs = softmax_masked(scores, *m);
    return bmm(probs, v);
}

// ---------------------------------------------------------------------------
// backward pass
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss over the recorded tape.
template <typename T>
void backward(TensorT<T>& loss) {
    if (loss.numel() != 1) throw ValueError("backward: loss must be scalar");
    if (!loss.requires_grad) return; // constant loss: nothing reachable
    loss.ensure_grad();
    (*loss.grad)[0] = T(1);
    if (!loss.node) return; // loss is itself a leaf parameter

    // Iterative post-order DFS over node identity.
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    std::vector<std::pair<NodeT<T>*, size_t>> stack;
    stack.emplace_back(loss.node.get(), 0);
    seen.insert(loss.node.get());
    std::vector<std::pair<NodeT<T>*, TensorT<T>>> outputs; // node -> the tensor it produced
    outputs.emplace_back(loss.node.get(), loss);

    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            auto& parent = node->parents[idx];
            ++idx;
            if (parent.node && !seen.count(parent.node.get())) {
                seen.insert(parent.node.get());
                outputs.emplace_back(parent.node.get(), parent);
                stack.emplace_back(parent.node.get(), 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // order is post-order: parents before children; run children first.
    std::unordered_map<NodeT<T>*, TensorT<T>*> out_of;
    out_of.reserve(outputs.size());
    for (auto& [n, t] : outputs) out_of[n] = &t;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* n = *it;
        TensorT<T>* t = out_of.at(n);
        t->ensure_grad();
        n->backward(*t);
    }
}

template <typename T>
void zero_grads(const std::vector<TensorT<T>*>& params) {
    for (auto* p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------
// random tensors
// ---------------------------------------------------------------------------

// i.i.d. standard normal entries (Box-Muller), fixed draw order.
template <typename T>
TensorT<T> randn(Rng& rng, std::vector<int> shape) {
    auto t = TensorT<T>::zeros(std::move(shape));
    for (auto& v : *t.data) v = static_cast<T>(rng.normal());
    return t;
}

} // namespace gentron
