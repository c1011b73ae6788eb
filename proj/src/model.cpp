#include "zfda/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "zfda/rng.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace zfda {

namespace {

// The engine churns through multi-hundred-KB activation buffers every step;
// keeping them inside the main arena instead of per-allocation mmaps avoids
// refaulting the same pages thousands of times.
bool tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 26);
    mallopt(M_TRIM_THRESHOLD, 1 << 26);
#endif
    return true;
}
const bool allocator_tuned = tune_allocator();

struct ConvDims {
    int64_t cin, h, w, cout, oh, ow;
};

ConvDims conv_dims(const LayerSpec& s, const Shape& in_shape, const Shape& out_shape) {
    return {s.in, s.in_h, s.in_w, s.out, out_shape[1], out_shape[2]};
}

// Layer parameters converted to a double scratch buffer once per call; the
// inner loops then run on homogeneous doubles.
thread_local std::vector<double> t_weights;

const double* weights_of(const LayerSpec& spec, const Tensor& params) {
    t_weights.resize(params.data.size());
    for (size_t i = 0; i < params.data.size(); ++i) t_weights[i] = static_cast<double>(params.data[i]);
    return t_weights.data();
}

// The compute kernels run on batch-minor scratch ("xt[feature][n]"): the
// batch index is the contiguous inner dimension, so every inner loop is a
// fixed-order 1D FMA over the batch. Transposes at the kernel boundaries are
// linear and cheap next to the multiply-accumulate work.
thread_local std::vector<double> t_in, t_out, t_dout, t_din;

void transpose_in(const std::vector<double>& x, int64_t batch, int64_t per, std::vector<double>& xt) {
    xt.resize(x.size());
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t i = 0; i < per; ++i) xt[i * batch + n] = x[n * per + i];
}

void transpose_out(const std::vector<double>& yt, int64_t batch, int64_t per, std::vector<double>& y) {
    y.resize(yt.size());
    for (int64_t i = 0; i < per; ++i)
        for (int64_t n = 0; n < batch; ++n) y[n * per + i] = yt[i * batch + n];
}

// Valid output-index ranges for a kernel offset: indices t with
// 0 <= t*stride + k - pad < limit, clipped to [0, count).
int64_t range_lo(int64_t k, int64_t pad, int64_t stride) {
    const int64_t need = pad - k;
    return need <= 0 ? 0 : (need + stride - 1) / stride;
}
int64_t range_hi(int64_t k, int64_t pad, int64_t stride, int64_t limit, int64_t count) {
    const int64_t last = limit - 1 - k + pad;
    if (last < 0) return 0;
    return std::min(count, last / stride + 1);
}

void axpy(double a, const double* __restrict__ x, double* __restrict__ y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Four fixed accumulators keep the summation order deterministic while
// letting the compiler vectorize the reduction.
double vdot(const double* __restrict__ a, const double* __restrict__ b, int64_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

void dense_forward(const LayerSpec& s, const Tensor& p, const std::vector<double>& x, int64_t batch,
                   std::vector<double>& y) {
    const double* W = weights_of(s, p);
    const double* b = s.has_bias ? W + s.weight_count() : nullptr;
    transpose_in(x, batch, s.in, t_in);
    t_out.assign(static_cast<size_t>(s.out * batch), 0.0);
    for (int64_t o = 0; o < s.out; ++o) {
        double* yo = t_out.data() + o * batch;
        if (b) {
            const double bias = b[o];
            for (int64_t n = 0; n < batch; ++n) yo[n] = bias;
        }
        const double* Wo = W + o * s.in;
        for (int64_t i = 0; i < s.in; ++i) {
            const double w = Wo[i];
            if (w != 0.0) axpy(w, t_in.data() + i * batch, yo, batch);
        }
    }
    transpose_out(t_out, batch, s.out, y);
}

void dense_backward(const LayerSpec& s, const Tensor& p, const std::vector<double>& x, const std::vector<double>& dy,
                    int64_t batch, std::vector<double>& dx, std::vector<double>& dparam, bool want_dx) {
    const double* W = weights_of(s, p);
    double* dW = dparam.data();
    double* db = s.has_bias ? dparam.data() + s.weight_count() : nullptr;
    transpose_in(x, batch, s.in, t_in);
    transpose_in(dy, batch, s.out, t_dout);
    if (want_dx) t_din.assign(static_cast<size_t>(s.in * batch), 0.0);
    for (int64_t o = 0; o < s.out; ++o) {
        const double* go = t_dout.data() + o * batch;
        if (db) {
            double acc = 0.0;
            for (int64_t n = 0; n < batch; ++n) acc += go[n];
            db[o] += acc;
        }
        const double* Wo = W + o * s.in;
        double* dWo = dW + o * s.in;
        for (int64_t i = 0; i < s.in; ++i) {
            dWo[i] += vdot(go, t_in.data() + i * batch, batch);
            if (want_dx) axpy(Wo[i], go, t_din.data() + i * batch, batch);
        }
    }
    if (want_dx) transpose_out(t_din, batch, s.in, dx);
}

void conv_forward(const LayerSpec& s, const Tensor& p, const std::vector<double>& x, int64_t batch,
                  const Shape& in_shape, const Shape& out_shape, std::vector<double>& y) {
    const ConvDims d = conv_dims(s, in_shape, out_shape);
    const double* W = weights_of(s, p);  // [cout, cin, kh, kw]
    const double* b = s.has_bias ? W + s.weight_count() : nullptr;
    transpose_in(x, batch, d.cin * d.h * d.w, t_in);
    t_out.assign(static_cast<size_t>(d.cout * d.oh * d.ow * batch), 0.0);
    const int64_t st = s.stride, pad = s.pad;
    for (int64_t co = 0; co < d.cout; ++co) {
        double* yc = t_out.data() + co * d.oh * d.ow * batch;
        if (b) {
            const double bias = b[co];
            for (int64_t i = 0; i < d.oh * d.ow * batch; ++i) yc[i] = bias;
        }
        for (int64_t ci = 0; ci < d.cin; ++ci) {
            const double* xc = t_in.data() + ci * d.h * d.w * batch;
            const double* Wk = W + (co * d.cin + ci) * s.kh * s.kw;
            for (int64_t kh = 0; kh < s.kh; ++kh) {
                const int64_t oh0 = range_lo(kh, pad, st), oh1 = range_hi(kh, pad, st, d.h, d.oh);
                for (int64_t kw = 0; kw < s.kw; ++kw) {
                    const double wgt = Wk[kh * s.kw + kw];
                    if (wgt == 0.0) continue;
                    const int64_t ow0 = range_lo(kw, pad, st), ow1 = range_hi(kw, pad, st, d.w, d.ow);
                    for (int64_t oh = oh0; oh < oh1; ++oh) {
                        const int64_t ih = oh * st + kh - pad;
                        const double* xrow = xc + (ih * d.w + kw - pad) * batch;
                        double* yrow = yc + oh * d.ow * batch;
                        for (int64_t ow = ow0; ow < ow1; ++ow)
                            axpy(wgt, xrow + ow * st * batch, yrow + ow * batch, batch);
                    }
                }
            }
        }
    }
    transpose_out(t_out, batch, d.cout * d.oh * d.ow, y);
}

void conv_backward(const LayerSpec& s, const Tensor& p, const std::vector<double>& x, const std::vector<double>& dy,
                   int64_t batch, const Shape& in_shape, const Shape& out_shape, std::vector<double>& dx,
                   std::vector<double>& dparam, bool want_dx) {
    const ConvDims d = conv_dims(s, in_shape, out_shape);
    const double* W = weights_of(s, p);
    double* dW = dparam.data();
    double* db = s.has_bias ? dparam.data() + s.weight_count() : nullptr;
    transpose_in(x, batch, d.cin * d.h * d.w, t_in);
    transpose_in(dy, batch, d.cout * d.oh * d.ow, t_dout);
    if (want_dx) t_din.assign(static_cast<size_t>(d.cin * d.h * d.w * batch), 0.0);
    const int64_t st = s.stride, pad = s.pad;
    for (int64_t co = 0; co < d.cout; ++co) {
        const double* dyc = t_dout.data() + co * d.oh * d.ow * batch;
        if (db) {
            double acc = 0.0;
            for (int64_t i = 0; i < d.oh * d.ow * batch; ++i) acc += dyc[i];
            db[co] += acc;
        }
        for (int64_t ci = 0; ci < d.cin; ++ci) {
            const double* xc = t_in.data() + ci * d.h * d.w * batch;
            double* dxc = want_dx ? t_din.data() + ci * d.h * d.w * batch : nullptr;
            const double* Wk = W + (co * d.cin + ci) * s.kh * s.kw;
            double* dWk = dW + (co * d.cin + ci) * s.kh * s.kw;
            for (int64_t kh = 0; kh < s.kh; ++kh) {
                const int64_t oh0 = range_lo(kh, pad, st), oh1 = range_hi(kh, pad, st, d.h, d.oh);
                for (int64_t kw = 0; kw < s.kw; ++kw) {
                    const int64_t ow0 = range_lo(kw, pad, st), ow1 = range_hi(kw, pad, st, d.w, d.ow);
                    const double wgt = Wk[kh * s.kw + kw];
                    double wacc = 0.0;
                    for (int64_t oh = oh0; oh < oh1; ++oh) {
                        const int64_t ih = oh * st + kh - pad;
                        const double* xrow = xc + (ih * d.w + kw - pad) * batch;
                        const double* dyrow = dyc + oh * d.ow * batch;
                        double* dxrow = dxc ? dxc + (ih * d.w + kw - pad) * batch : nullptr;
                        for (int64_t ow = ow0; ow < ow1; ++ow) {
                            wacc += vdot(dyrow + ow * batch, xrow + ow * st * batch, batch);
                            if (dxrow) axpy(wgt, dyrow + ow * batch, dxrow + ow * st * batch, batch);
                        }
                    }
                    dWk[kh * s.kw + kw] += wacc;
                }
            }
        }
    }
    if (want_dx) transpose_out(t_din, batch, d.cin * d.h * d.w, dx);
}

// ConvTranspose2D is the adjoint of Conv2D with the same spec: forward
// scatters each input element through the kernel, exactly like Conv2D's
// backward-data. Weight layout is [cin, cout, kh, kw].
void convt_forward(const LayerSpec& s, const Tensor& p, const std::vector<double>& x, int64_t batch,
                   const Shape& in_shape, const Shape& out_shape, std::vector<double>& y) {
    const int64_t cin = s.in, h = s.in_h, w = s.in_w;
    const int64_t cout = s.out, oh = out_shape[1], ow = out_shape[2];
    const double* W = weights_of(s, p);
    const double* b = s.has_bias ? W + s.weight_count() : nullptr;
    transpose_in(x, batch, cin * h * w, t_in);
    t_out.assign(static_cast<size_t>(cout * oh * ow * batch), 0.0);
    const int64_t st = s.stride, pad = s.pad;
    for (int64_t co = 0; co < cout; ++co) {
        double* yc = t_out.data() + co * oh * ow * batch;
        if (b) {
            const double bias = b[co];
            for (int64_t i = 0; i < oh * ow * batch; ++i) yc[i] = bias;
        }
        for (int64_t ci = 0; ci < cin; ++ci) {
            const double* xc = t_in.data() + ci * h * w * batch;
            const double* Wk = W + (ci * cout + co) * s.kh * s.kw;
            for (int64_t kh = 0; kh < s.kh; ++kh) {
                const int64_t ih0 = range_lo(kh, pad, st), ih1 = range_hi(kh, pad, st, oh, h);
                for (int64_t kw = 0; kw < s.kw; ++kw) {
                    const double wgt = Wk[kh * s.kw + kw];
                    if (wgt == 0.0) continue;
                    const int64_t iw0 = range_lo(kw, pad, st), iw1 = range_hi(kw, pad, st, ow, w);
                    for (int64_t ih = ih0; ih < ih1; ++ih) {
                        const double* xrow = xc + ih * w * batch;
                        double* yrow = yc + ((ih * st + kh - pad) * ow + kw - pad) * batch;
                        for (int64_t iw = iw0; iw < iw1; ++iw)
                            axpy(wgt, xrow + iw * batch, yrow + iw * st * batch, batch);
                    }
                }
            }
        }
    }
    transpose_out(t_out, batch, cout * oh * ow, y);
}

void convt_backward(const LayerSpec& s, const Tensor& p, const std::vector<double>& x, const std::vector<double>& dy,
                    int64_t batch, const Shape& in_shape, const Shape& out_shape, std::vector<double>& dx,
                    std::vector<double>& dparam, bool want_dx) {
    const int64_t cin = s.in, h = s.in_h, w = s.in_w;
    const int64_t cout = s.out, oh = out_shape[1], ow = out_shape[2];
    const double* W = weights_of(s, p);
    double* dW = dparam.data();
    double* db = s.has_bias ? dparam.data() + s.weight_count() : nullptr;
    transpose_in(x, batch, cin * h * w, t_in);
    transpose_in(dy, batch, cout * oh * ow, t_dout);
    if (want_dx) t_din.assign(static_cast<size_t>(cin * h * w * batch), 0.0);
    const int64_t st = s.stride, pad = s.pad;
    if (db) {
        for (int64_t co = 0; co < cout; ++co) {
            const double* dyc = t_dout.data() + co * oh * ow * batch;
            double acc = 0.0;
            for (int64_t i = 0; i < oh * ow * batch; ++i) acc += dyc[i];
            db[co] += acc;
        }
    }
    for (int64_t ci = 0; ci < cin; ++ci) {
        const double* xc = t_in.data() + ci * h * w * batch;
        double* dxc = want_dx ? t_din.data() + ci * h * w * batch : nullptr;
        for (int64_t co = 0; co < cout; ++co) {
            const double* dyc = t_dout.data() + co * oh * ow * batch;
            const double* Wk = W + (ci * cout + co) * s.kh * s.kw;
            double* dWk = dW + (ci * cout + co) * s.kh * s.kw;
            for (int64_t kh = 0; kh < s.kh; ++kh) {
                const int64_t ih0 = range_lo(kh, pad, st), ih1 = range_hi(kh, pad, st, oh, h);
                for (int64_t kw = 0; kw < s.kw; ++kw) {
                    const int64_t iw0 = range_lo(kw, pad, st), iw1 = range_hi(kw, pad, st, ow, w);
                    const double wgt = Wk[kh * s.kw + kw];
                    double wacc = 0.0;
                    for (int64_t ih = ih0; ih < ih1; ++ih) {
                        const double* xrow = xc + ih * w * batch;
                        const double* dyrow = t_dout.data() + (co * oh * ow + (ih * st + kh - pad) * ow + kw - pad) * batch;
                        double* dxrow = dxc ? dxc + ih * w * batch : nullptr;
                        for (int64_t iw = iw0; iw < iw1; ++iw) {
                            wacc += vdot(xrow + iw * batch, dyrow + iw * st * batch, batch);
                            if (dxrow) axpy(wgt, dyrow + iw * st * batch, dxrow + iw * batch, batch);
                        }
                    }
                    dWk[kh * s.kw + kw] += wacc;
                }
            }
        }
    }
    if (want_dx) transpose_out(t_din, batch, cin * h * w, dx);
}

void run_stage(const std::vector<LayerSpec>& specs, const std::vector<Tensor>& params, std::vector<double> input,
               const Shape& in_shape, int64_t batch, StageCache& cache, const std::string& stage) {
    cache.inputs.clear();
    cache.in_shapes.clear();
    Shape cur_shape = in_shape;
    std::vector<double> cur = std::move(input);
    for (size_t k = 0; k < specs.size(); ++k) {
        const LayerSpec& s = specs[k];
        cache.in_shapes.push_back(cur_shape);
        std::vector<double> next;
        Shape next_shape;
        switch (s.kind) {
            case LayerKind::ReLU:
                next.resize(cur.size());
                for (size_t i = 0; i < cur.size(); ++i) next[i] = cur[i] > 0.0 ? cur[i] : 0.0;
                next_shape = cur_shape;
                break;
            case LayerKind::Sigmoid:
                next.resize(cur.size());
                for (size_t i = 0; i < cur.size(); ++i) next[i] = 1.0 / (1.0 + std::exp(-cur[i]));
                next_shape = cur_shape;
                break;
            case LayerKind::Dense:
                next_shape = {s.out};
                dense_forward(s, params[k], cur, batch, next);
                break;
            case LayerKind::Conv2D: {
                LayerSpec tmp = s;
                next_shape = resolve_layer(tmp, cur_shape, stage);
                conv_forward(s, params[k], cur, batch, cur_shape, next_shape, next);
                break;
            }
            case LayerKind::ConvTranspose2D: {
                LayerSpec tmp = s;
                next_shape = resolve_layer(tmp, cur_shape, stage);
                convt_forward(s, params[k], cur, batch, cur_shape, next_shape, next);
                break;
            }
        }
        ensure_finite(next, stage + " layer " + std::to_string(k) + " (" + s.describe() + ") output");
        cache.inputs.push_back(std::move(cur));
        cur = std::move(next);
        cur_shape = next_shape;
    }
    cache.output = std::move(cur);
    cache.out_shape = cur_shape;
}

// Backward over one stage. dy is consumed; returns d(stage input). Gradients
// are accumulated in double and rounded to f32 once per layer.
std::vector<double> stage_backward(const std::vector<LayerSpec>& specs, const std::vector<Tensor>& params,
                                   const StageCache& cache, std::vector<double> dy, int64_t batch,
                                   std::vector<Tensor>& grads, bool want_input_grad, const std::string& stage) {
    grads.assign(specs.size(), Tensor{});
    for (int64_t k = static_cast<int64_t>(specs.size()) - 1; k >= 0; --k) {
        const LayerSpec& s = specs[k];
        const std::vector<double>& x = cache.inputs[k];
        const bool want_dx = k > 0 || want_input_grad;
        std::vector<double> dx;
        if (s.is_parameterized()) {
            std::vector<double> dparam(static_cast<size_t>(s.param_count()), 0.0);
            const Shape& in_shape = cache.in_shapes[k];
            const Shape out_shape = k + 1 < static_cast<int64_t>(specs.size()) ? cache.in_shapes[k + 1] : cache.out_shape;
            switch (s.kind) {
                case LayerKind::Dense:
                    dense_backward(s, params[k], x, dy, batch, dx, dparam, want_dx);
                    break;
                case LayerKind::Conv2D:
                    conv_backward(s, params[k], x, dy, batch, in_shape, out_shape, dx, dparam, want_dx);
                    break;
                default:
                    convt_backward(s, params[k], x, dy, batch, in_shape, out_shape, dx, dparam, want_dx);
                    break;
            }
            ensure_finite(dparam, stage + " layer " + std::to_string(k) + " gradient");
            Tensor g({s.param_count()});
            for (size_t i = 0; i < dparam.size(); ++i) g.data[i] = static_cast<float>(dparam[i]);
            grads[k] = std::move(g);
        } else if (s.kind == LayerKind::ReLU) {
            dx.resize(dy.size());
            for (size_t i = 0; i < dy.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
        } else {  // Sigmoid
            dx.resize(dy.size());
            for (size_t i = 0; i < dy.size(); ++i) {
                const double y = 1.0 / (1.0 + std::exp(-x[i]));
                dx[i] = dy[i] * y * (1.0 - y);
            }
        }
        if (!s.is_parameterized() || want_dx) dy = std::move(dx);
    }
    return dy;
}

std::vector<double> round_to_f32(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(static_cast<float>(v[i]));
    return out;
}

Tensor materialize_f32(const std::vector<double>& v, Shape per_sample, int64_t batch) {
    Shape shape;
    shape.push_back(batch);
    shape.insert(shape.end(), per_sample.begin(), per_sample.end());
    Tensor t(shape);
    for (size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
    return t;
}

}  // namespace

void ModelParams::finalize() {
    if (encoder.empty()) throw ShapeError("model: encoder must have at least one layer");
    semantics_shape = resolve_chain(encoder, input_shape, "encoder");
    Shape dec_out = semantics_shape;
    if (!decoder.empty()) dec_out = resolve_chain(decoder, semantics_shape, "decoder");
    // A flat decoder output of matching size stands for the input shape
    // (dense autoencoders reconstruct row-major pixels).
    if (dec_out.size() == 1 && input_shape.size() > 1 && dec_out[0] == shape_numel(input_shape))
        dec_out = input_shape;
    output_shape = dec_out;
    auto count = [](const std::vector<LayerSpec>& specs, const std::vector<Tensor>& params, const char* side) {
        if (specs.size() != params.size())
            throw ShapeError(std::string(side) + ": spec count " + std::to_string(specs.size()) +
                             " != param tensor count " + std::to_string(params.size()));
        int64_t total = 0;
        for (size_t k = 0; k < specs.size(); ++k) {
            const int64_t pk = specs[k].param_count();
            total += pk;
            if (params[k].numel() != pk)
                throw ShapeError(std::string(side) + " layer " + std::to_string(k) + " (" + specs[k].describe() +
                                 "): param tensor length " + std::to_string(params[k].numel()) + " != p_k " +
                                 std::to_string(pk));
        }
        return total;
    };
    n_enc = count(encoder, enc_params, "encoder");
    n_dec = count(decoder, dec_params, "decoder");
}

Tensor init_layer_params(const LayerSpec& spec, Rng& rng) {
    const int64_t p = spec.param_count();
    if (p == 0) return Tensor{};
    Tensor t({p});
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.d_in()));
    for (int64_t i = 0; i < p; ++i) t.data[i] = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

ModelParams build_model(std::vector<LayerSpec> encoder, std::vector<LayerSpec> decoder, Shape input_shape,
                        uint64_t seed) {
    ModelParams m;
    m.encoder = std::move(encoder);
    m.decoder = std::move(decoder);
    m.input_shape = std::move(input_shape);
    const Shape mid = resolve_chain(m.encoder, m.input_shape, "encoder");
    if (!m.decoder.empty()) resolve_chain(m.decoder, mid, "decoder");
    Rng rng(seed);
    for (const LayerSpec& s : m.encoder) m.enc_params.push_back(init_layer_params(s, rng));
    for (const LayerSpec& s : m.decoder) m.dec_params.push_back(init_layer_params(s, rng));
    m.finalize();
    return m;
}

ModelParams build_autoencoder(std::vector<LayerSpec> encoder, std::vector<LayerSpec> decoder, Shape input_shape,
                              uint64_t seed) {
    ModelParams m = build_model(std::move(encoder), std::move(decoder), std::move(input_shape), seed);
    if (m.output_shape != m.input_shape)
        throw ShapeError("autoencoder: decoder output shape " + shape_str(m.output_shape) +
                         " != encoder input shape " + shape_str(m.input_shape));
    return m;
}

ModelParams compose_pair(const ModelParams& encoder_side, const ModelParams& decoder_side) {
    if (encoder_side.semantics_shape != decoder_side.semantics_shape)
        throw ShapeError("cross pair: encoder semantics " + shape_str(encoder_side.semantics_shape) +
                         " incompatible with decoder semantics " + shape_str(decoder_side.semantics_shape));
    ModelParams m;
    m.encoder = encoder_side.encoder;
    m.enc_params = encoder_side.enc_params;
    m.decoder = decoder_side.decoder;
    m.dec_params = decoder_side.dec_params;
    m.input_shape = encoder_side.input_shape;
    m.finalize();
    return m;
}

ForwardResult forward(const ModelParams& model, const Tensor& x, ForwardCache& cache) {
    if (x.shape.size() != model.input_shape.size() + 1)
        throw ShapeError("forward: input " + shape_str(x.shape) + " must be [N]+" + shape_str(model.input_shape));
    for (size_t i = 0; i < model.input_shape.size(); ++i)
        if (x.shape[i + 1] != model.input_shape[i])
            throw ShapeError("forward: input " + shape_str(x.shape) + " does not match model input " +
                             shape_str(model.input_shape));
    ensure_finite(x.data, "forward input");
    const int64_t batch = x.shape[0];
    cache.batch = batch;

    std::vector<double> in(x.data.begin(), x.data.end());
    run_stage(model.encoder, model.enc_params, std::move(in), model.input_shape, batch, cache.enc, "encoder");

    // Round the semantics to f32 so that the composed pass and the split
    // encoder/decoder passes are bit-identical.
    cache.enc.output = round_to_f32(cache.enc.output);
    ForwardResult r;
    r.semantics = materialize_f32(cache.enc.output, cache.enc.out_shape, batch);

    run_stage(model.decoder, model.dec_params, cache.enc.output, cache.enc.out_shape, batch, cache.dec, "decoder");
    cache.dec.output = round_to_f32(cache.dec.output);
    r.outcome = materialize_f32(cache.dec.output, model.output_shape, batch);
    cache.valid = true;
    return r;
}

ForwardResult forward(const ModelParams& model, const Tensor& x) {
    ForwardCache cache;
    return forward(model, x, cache);
}

Tensor forward_encoder(const ModelParams& model, const Tensor& x) {
    ModelParams enc_only;
    enc_only.encoder = model.encoder;
    enc_only.enc_params = model.enc_params;
    enc_only.input_shape = model.input_shape;
    enc_only.finalize();
    return forward(enc_only, x).outcome;  // empty decoder: outcome == semantics
}

Tensor forward_decoder(const ModelParams& model, const Tensor& semantics) {
    ModelParams dec_only;
    dec_only.encoder = model.decoder;
    dec_only.enc_params = model.dec_params;
    dec_only.input_shape = model.semantics_shape;
    dec_only.finalize();
    return forward(dec_only, semantics).outcome;
}

double loss_mse(const Tensor& outcome, const Tensor& target) {
    if (outcome.shape != target.shape)
        throw ShapeError("loss_mse: outcome " + shape_str(outcome.shape) + " != target " + shape_str(target.shape));
    double acc = 0.0;
    for (size_t i = 0; i < outcome.data.size(); ++i) {
        const double d = static_cast<double>(outcome.data[i]) - static_cast<double>(target.data[i]);
        acc += d * d;
    }
    const double loss = acc / static_cast<double>(outcome.data.size());
    if (!std::isfinite(loss)) throw DivergenceError("loss_mse: non-finite loss");
    return loss;
}

std::vector<double> loss_mse_grad(const Tensor& outcome, const Tensor& target) {
    if (outcome.shape != target.shape)
        throw ShapeError("loss_mse_grad: outcome " + shape_str(outcome.shape) + " != target " + shape_str(target.shape));
    std::vector<double> g(outcome.data.size());
    const double scale = 2.0 / static_cast<double>(outcome.data.size());
    for (size_t i = 0; i < g.size(); ++i)
        g[i] = scale * (static_cast<double>(outcome.data[i]) - static_cast<double>(target.data[i]));
    return g;
}

ModelGrads backward(const ModelParams& model, const ForwardCache& cache, const std::vector<double>& dloss_doutcome,
                    bool want_input_grad) {
    if (!cache.valid) throw Error("backward: no recorded forward pass");
    if (dloss_doutcome.size() != cache.dec.output.size())
        throw ShapeError("backward: loss gradient length " + std::to_string(dloss_doutcome.size()) +
                         " != outcome length " + std::to_string(cache.dec.output.size()));
    ModelGrads grads;
    std::vector<double> d_sem = stage_backward(model.decoder, model.dec_params, cache.dec, dloss_doutcome, cache.batch,
                                               grads.dec, true, "decoder");
    std::vector<double> d_in =
        stage_backward(model.encoder, model.enc_params, cache.enc, std::move(d_sem), cache.batch, grads.enc,
                       want_input_grad, "encoder");
    if (want_input_grad) {
        grads.input_grad = materialize_f32(d_in, model.input_shape, cache.batch);
    }
    return grads;
}

void sgd_step(ModelParams& model, const ModelGrads& grads, double lr) {
    if (!std::isfinite(lr)) throw DivergenceError("sgd_step: non-finite learning rate");
    auto apply = [&](std::vector<Tensor>& params, const std::vector<Tensor>& gs, const char* side) {
        if (params.size() != gs.size()) throw ShapeError(std::string("sgd_step: ") + side + " gradient layout mismatch");
        for (size_t k = 0; k < params.size(); ++k) {
            if (gs[k].numel() != params[k].numel())
                throw ShapeError(std::string("sgd_step: ") + side + " layer " + std::to_string(k) +
                                 " gradient length mismatch");
            ensure_finite(gs[k].data, std::string(side) + " layer " + std::to_string(k) + " gradient");
            for (int64_t i = 0; i < params[k].numel(); ++i) {
                params[k].data[i] = static_cast<float>(static_cast<double>(params[k].data[i]) -
                                                       lr * static_cast<double>(gs[k].data[i]));
            }
        }
    };
    apply(model.enc_params, grads.enc, "encoder");
    apply(model.dec_params, grads.dec, "decoder");
}

TrainSet reconstruction_set(const Tensor& images) { return TrainSet{images, images}; }

Tensor gather_rows(const Tensor& data, const std::vector<int64_t>& rows) {
    if (data.shape.empty()) throw ShapeError("gather_rows: scalar tensor");
    const int64_t per = data.numel() / data.shape[0];
    Shape shape = data.shape;
    shape[0] = static_cast<int64_t>(rows.size());
    Tensor out(shape);
    for (size_t r = 0; r < rows.size(); ++r) {
        const int64_t src = rows[r];
        std::copy_n(data.data.begin() + src * per, per, out.data.begin() + static_cast<int64_t>(r) * per);
    }
    return out;
}

TrainLog train_model(ModelParams& model, const TrainSet& set, int64_t epochs, double lr, int64_t batch_size,
                     uint64_t seed) {
    return train_model_selective(model, set, epochs, lr, batch_size, seed, true, true);
}

TrainLog train_model_selective(ModelParams& model, const TrainSet& set, int64_t epochs, double lr,
                               int64_t batch_size, uint64_t seed, bool update_encoder, bool update_decoder) {
    const int64_t n = set.size();
    if (n <= 0) throw DataError("train: empty dataset");
    if (set.targets.shape.empty() || set.targets.shape[0] != n)
        throw ShapeError("train: inputs/targets row count mismatch");
    if (batch_size <= 0) throw ConfigError("train: batch size must be positive");
    if (epochs < 0) throw ConfigError("train: negative epoch count");
    TrainLog log;
    Rng rng(seed);
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    ForwardCache cache;
    for (int64_t e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        double sq_sum = 0.0;
        int64_t samples = 0;
        for (int64_t start = 0; start < n; start += batch_size) {
            const int64_t count = std::min(batch_size, n - start);
            std::vector<int64_t> rows(order.begin() + start, order.begin() + start + count);
            const Tensor bx = gather_rows(set.inputs, rows);
            const Tensor bt = gather_rows(set.targets, rows);
            const ForwardResult fr = forward(model, bx, cache);
            const double loss = loss_mse(fr.outcome, bt);
            if (!std::isfinite(loss))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(e));
            ModelGrads grads = backward(model, cache, loss_mse_grad(fr.outcome, bt));
            if (!update_encoder)
                for (Tensor& g : grads.enc) std::fill(g.data.begin(), g.data.end(), 0.0f);
            if (!update_decoder)
                for (Tensor& g : grads.dec) std::fill(g.data.begin(), g.data.end(), 0.0f);
            sgd_step(model, grads, lr);
            sq_sum += loss * static_cast<double>(count);
            samples += count;
        }
        log.epoch_loss.push_back(sq_sum / static_cast<double>(samples));
    }
    return log;
}

TrainLog pretrain(ModelParams& model, const Tensor& images, int64_t epochs, double lr, int64_t batch_size,
                  uint64_t seed) {
    if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
    return train_model(model, reconstruction_set(images), epochs, lr, batch_size, seed);
}

double eval_mse(const ModelParams& model, const TrainSet& set) {
    const int64_t n = set.size();
    if (n <= 0) throw DataError("eval: empty dataset");
    constexpr int64_t kEvalBatch = 64;
    double acc = 0.0;
    int64_t elems = 0;
    for (int64_t start = 0; start < n; start += kEvalBatch) {
        const int64_t count = std::min(kEvalBatch, n - start);
        std::vector<int64_t> rows(count);
        std::iota(rows.begin(), rows.end(), start);
        const Tensor bx = gather_rows(set.inputs, rows);
        const Tensor bt = gather_rows(set.targets, rows);
        const ForwardResult fr = forward(model, bx);
        for (size_t i = 0; i < fr.outcome.data.size(); ++i) {
            const double d = static_cast<double>(fr.outcome.data[i]) - static_cast<double>(bt.data[i]);
            acc += d * d;
        }
        elems += static_cast<int64_t>(fr.outcome.data.size());
    }
    return acc / static_cast<double>(elems);
}

std::vector<uint8_t> canonical_param_bytes(const ModelParams& model) {
    std::vector<uint8_t> bytes;
    bytes.reserve(static_cast<size_t>(4 * model.param_total()));
    auto emit = [&](const std::vector<Tensor>& params) {
        for (const Tensor& t : params) {
            for (float f : t.data) {
                const uint32_t u = std::bit_cast<uint32_t>(f);
                bytes.push_back(static_cast<uint8_t>(u & 0xff));
                bytes.push_back(static_cast<uint8_t>((u >> 8) & 0xff));
                bytes.push_back(static_cast<uint8_t>((u >> 16) & 0xff));
                bytes.push_back(static_cast<uint8_t>((u >> 24) & 0xff));
            }
        }
    };
    emit(model.enc_params);
    emit(model.dec_params);
    return bytes;
}

}  // namespace zfda
