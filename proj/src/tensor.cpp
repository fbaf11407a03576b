#include "survfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "survfuse/errors.hpp"
#include "survfuse/rng.hpp"

namespace survfuse::nn {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}

long dim(const Tensor& t, std::size_t i) {
    require(i < t.shape.size(), "tensor rank too small");
    return t.shape[i];
}

}  // namespace

LayerSpec LayerSpec::conv3d(int in_ch, int out_ch, int kernel) {
    if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || kernel % 2 == 0)
        throw ConfigError("conv3d needs positive channels and an odd kernel");
    LayerSpec s;
    s.kind = LayerKind::Conv3d;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kernel = kernel;
    return s;
}

LayerSpec LayerSpec::batchnorm3d(int channels) {
    if (channels <= 0) throw ConfigError("batchnorm3d needs positive channels");
    LayerSpec s;
    s.kind = LayerKind::BatchNorm3d;
    s.channels = channels;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec LayerSpec::maxpool3d() {
    LayerSpec s;
    s.kind = LayerKind::MaxPool3d;
    return s;
}

LayerSpec LayerSpec::linear(int in_features, int out_features) {
    if (in_features <= 0 || out_features <= 0) throw ConfigError("linear needs positive sizes");
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

LayerSpec LayerSpec::dropout(double p) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.p = p;
    return s;
}

LayerSpec LayerSpec::global_avg_pool() {
    LayerSpec s;
    s.kind = LayerKind::GlobalAvgPool;
    return s;
}

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv3d: return "conv3d";
        case LayerKind::BatchNorm3d: return "batchnorm3d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool3d: return "maxpool3d";
        case LayerKind::Linear: return "linear";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
    }
    return "?";
}

LayerParams make_params(const LayerSpec& spec) {
    LayerParams p;
    switch (spec.kind) {
        case LayerKind::Conv3d: {
            long k = spec.kernel;
            p.learnable.push_back(Tensor({spec.out_ch, spec.in_ch, k, k, k}));
            p.learnable.push_back(Tensor({spec.out_ch}));
            break;
        }
        case LayerKind::BatchNorm3d: {
            p.learnable.push_back(Tensor({spec.channels}));  // gamma
            p.learnable.push_back(Tensor({spec.channels}));  // beta
            p.buffers.push_back(Tensor({spec.channels}));    // running mean
            p.buffers.push_back(Tensor({spec.channels}));    // running var
            break;
        }
        case LayerKind::Linear: {
            p.learnable.push_back(Tensor({spec.out_features, spec.in_features}));
            p.learnable.push_back(Tensor({spec.out_features}));
            break;
        }
        default: break;
    }
    return p;
}

void init_params(const LayerSpec& spec, LayerParams& params, std::uint64_t seed) {
    Rng rng(seed);
    auto kaiming = [&](Tensor&w, long fan_in) {
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& v : w.data) v = rng.uniform(-bound, bound);
    };
    switch (spec.kind) {
        case LayerKind::Conv3d: {
            long k = spec.kernel;
            kaiming(params.learnable[0], static_cast<long>(spec.in_ch) * k * k * k);
            std::fill(params.learnable[1].data.begin(), params.learnable[1].data.end(), 0.0);
            break;
        }
        case LayerKind::BatchNorm3d: {
            std::fill(params.learnable[0].data.begin(), params.learnable[0].data.end(), 1.0);
            std::fill(params.learnable[1].data.begin(), params.learnable[1].data.end(), 0.0);
            std::fill(params.buffers[0].data.begin(), params.buffers[0].data.end(), 0.0);
            std::fill(params.buffers[1].data.begin(), params.buffers[1].data.end(), 1.0);
            break;
        }
        case LayerKind::Linear: {
            kaiming(params.learnable[0], spec.in_features);
            std::fill(params.learnable[1].data.begin(), params.learnable[1].data.end(), 0.0);
            break;
        }
        default: break;
    }
}

std::vector<long> output_shape(const LayerSpec& spec, const std::vector<long>& in) {
    switch (spec.kind) {
        case LayerKind::Conv3d: {
            if (in.size() != 5) throw DataError("conv3d expects a (N, C, D, H, W) tensor");
            if (in[1] != spec.in_ch)
                throw DataError("conv3d channel mismatch: expected " +
                                std::to_string(spec.in_ch) + ", got " + std::to_string(in[1]));
            return {in[0], spec.out_ch, in[2], in[3], in[4]};
        }
        case LayerKind::BatchNorm3d: {
            if (in.size() != 5 && in.size() != 2)
                throw DataError("batchnorm3d expects a 5-d or 2-d tensor");
            if (in[1] != spec.channels)
                throw DataError("batchnorm3d channel mismatch: expected " +
                                std::to_string(spec.channels) + ", got " + std::to_string(in[1]));
            return in;
        }
        case LayerKind::Relu:
        case LayerKind::Dropout: return in;
        case LayerKind::MaxPool3d: {
            if (in.size() != 5) throw DataError("maxpool3d expects a (N, C, D, H, W) tensor");
            return {in[0], in[1], in[2] / 2, in[3] / 2, in[4] / 2};
        }
        case LayerKind::Linear: {
            if (in.size() != 2) throw DataError("linear expects a (N, F) tensor");
            if (in[1] != spec.in_features)
                throw DataError("linear feature mismatch: expected " +
                                std::to_string(spec.in_features) + ", got " +
                                std::to_string(in[1]));
            return {in[0], spec.out_features};
        }
        case LayerKind::GlobalAvgPool: {
            if (in.size() != 5) throw DataError("global_avg_pool expects a (N, C, D, H, W) tensor");
            return {in[0], in[1]};
        }
    }
    throw ConfigError("unknown layer kind");
}

namespace {

Tensor conv3d_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& in) {
    Tensor out(output_shape(spec, in.shape));
    const long N = in.shape[0], C = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const long OC = spec.out_ch, K = spec.kernel, P = K / 2;
    const Tensor& wt = params.learnable[0];
    const Tensor& bias = params.learnable[1];
    const long in_chan_stride = D * H * W;
    const long out_chan_stride = D * H * W;
    for (long n = 0; n < N; ++n) {
        const double* in_n = in.data.data() + n * C * in_chan_stride;
        double* out_n = out.data.data() + n * OC * out_chan_stride;
        for (long oc = 0; oc < OC; ++oc) {
            const double* w_oc = wt.data.data() + oc * C * K * K * K;
            double* out_c = out_n + oc * out_chan_stride;
            const double b = bias.data[oc];
            for (long od = 0; od < D; ++od) {
                for (long oh = 0; oh < H; ++oh) {
                    double* acc = out_c + (od * H + oh) * W;
                    for (long ow = 0; ow < W; ++ow) acc[ow] = b;
                    for (long ic = 0; ic < C; ++ic) {
                        const double* in_c = in_n + ic * in_chan_stride;
                        const double* w_ic = w_oc + ic * K * K * K;
                        for (long kd = 0; kd < K; ++kd) {
                            const long id = od + kd - P;
                            if (id < 0 || id >= D) continue;
                            for (long kh = 0; kh < K; ++kh) {
                                const long ih = oh + kh - P;
                                if (ih < 0 || ih >= H) continue;
                                const double* in_row = in_c + (id * H + ih) * W;
                                const double* w_row = w_ic + (kd * K + kh) * K;
                                for (long kw = 0; kw < K; ++kw) {
                                    const double wv = w_row[kw];
                                    const long shift = kw - P;
                                    const long lo = std::max<long>(0, -shift);
                                    const long hi = std::min<long>(W, W - shift);
                                    const double* src = in_row + shift;
                                    for (long ow = lo; ow < hi; ++ow) acc[ow] += wv * src[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv3d_backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                       const Tensor& grad_out, std::vector<Tensor>* param_grads) {
    const Tensor& in = cache.input;
    Tensor grad_in(in.shape);
    const long N = in.shape[0], C = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const long OC = spec.out_ch, K = spec.kernel, P = K / 2;
    const Tensor& wt = params.learnable[0];
    Tensor gw(wt.shape), gb({OC});
    const long chan_stride = D * H * W;
    for (long n = 0; n < N; ++n) {
        const double* in_n = in.data.data() + n * C * chan_stride;
        double* gin_n = grad_in.data.data() + n * C * chan_stride;
        const double* go_n = grad_out.data.data() + n * OC * chan_stride;
        for (long oc = 0; oc < OC; ++oc) {
            const double* w_oc = wt.data.data() + oc * C * K * K * K;
            double* gw_oc = gw.data.data() + oc * C * K * K * K;
            const double* go_c = go_n + oc * chan_stride;
            double gb_acc = 0.0;
            for (long od = 0; od < D; ++od) {
                for (long oh = 0; oh < H; ++oh) {
                    const double* g_row = go_c + (od * H + oh) * W;
                    for (long ow = 0; ow < W; ++ow) gb_acc += g_row[ow];
                    for (long ic = 0; ic < C; ++ic) {
                        const double* in_c = in_n + ic * chan_stride;
                        double* gin_c = gin_n + ic * chan_stride;
                        const double* w_ic = w_oc + ic * K * K * K;
                        double* gw_ic = gw_oc + ic * K * K * K;
                        for (long kd = 0; kd < K; ++kd) {
                            const long id = od + kd - P;
                            if (id < 0 || id >= D) continue;
                            for (long kh = 0; kh < K; ++kh) {
                                const long ih = oh + kh - P;
                                if (ih < 0 || ih >= H) continue;
                                const double* in_row = in_c + (id * H + ih) * W;
                                double* gin_row = gin_c + (id * H + ih) * W;
                                const double* w_row = w_ic + (kd * K + kh) * K;
                                double* gw_row = gw_ic + (kd * K + kh) * K;
                                for (long kw = 0; kw < K; ++kw) {
                                    const long shift = kw - P;
                                    const long lo = std::max<long>(0, -shift);
                                    const long hi = std::min<long>(W, W - shift);
                                    const double wv = w_row[kw];
                                    double gw_acc = 0.0;
                                    const double* src = in_row + shift;
                                    double* dst = gin_row + shift;
                                    for (long ow = lo; ow < hi; ++ow) {
                                        const double g = g_row[ow];
                                        gw_acc += g * src[ow];
                                        dst[ow] += wv * g;
                                    }
                                    gw_row[kw] += gw_acc;
                                }
                            }
                        }
                    }
                }
            }
            gb.data[oc] += gb_acc;
        }
    }
    if (param_grads) {
        param_grads->clear();
        param_grads->push_back(std::move(gw));
        param_grads->push_back(std::move(gb));
    }
    return grad_in;
}

// Channel axis is 1; stats pool every other axis.
struct BnDims {
    long n, c, spatial;
};

BnDims bn_dims(const Tensor& t) {
    if (t.shape.size() == 5) return {t.shape[0], t.shape[1], t.shape[2] * t.shape[3] * t.shape[4]};
    return {t.shape[0], t.shape[1], 1};
}

Tensor batchnorm_forward(const LayerSpec& spec, LayerParams& params, const Tensor& in, Mode mode,
                         LayerCache* cache) {
    const BnDims d = bn_dims(in);
    const Tensor& gamma = params.learnable[0];
    const Tensor& beta = params.learnable[1];
    Tensor& run_mean = params.buffers[0];
    Tensor& run_var = params.buffers[1];
    const double count = static_cast<double>(d.n * d.spatial);
    std::vector<double> mean(d.c, 0.0), inv_std(d.c, 0.0);
    if (mode == Mode::Train) {
        if (d.n * d.spatial < 2) throw DataError("batchnorm needs at least 2 values per channel");
        std::vector<double> var(d.c, 0.0);
        for (long n = 0; n < d.n; ++n)
            for (long c = 0; c < d.c; ++c) {
                const double* x = in.data.data() + (n * d.c + c) * d.spatial;
                double s = 0.0;
                for (long i = 0; i < d.spatial; ++i) s += x[i];
                mean[c] += s;
            }
        for (long c = 0; c < d.c; ++c) mean[c] /= count;
        for (long n = 0; n < d.n; ++n)
            for (long c = 0; c < d.c; ++c) {
                const double* x = in.data.data() + (n * d.c + c) * d.spatial;
                double s = 0.0;
                for (long i = 0; i < d.spatial; ++i) {
                    const double dv = x[i] - mean[c];
                    s += dv * dv;
                }
                var[c] += s;
            }
        for (long c = 0; c < d.c; ++c) {
            var[c] /= count;
            inv_std[c] = 1.0 / std::sqrt(var[c] + spec.eps);
            run_mean.data[c] = (1.0 - spec.momentum) * run_mean.data[c] + spec.momentum * mean[c];
            run_var.data[c] = (1.0 - spec.momentum) * run_var.data[c] + spec.momentum * var[c];
        }
    } else {
        for (long c = 0; c < d.c; ++c) {
            mean[c] = run_mean.data[c];
            inv_std[c] = 1.0 / std::sqrt(run_var.data[c] + spec.eps);
        }
    }
    Tensor out(in.shape);
    Tensor xhat(in.shape);
    for (long n = 0; n < d.n; ++n)
        for (long c = 0; c < d.c; ++c) {
            const double* x = in.data.data() + (n * d.c + c) * d.spatial;
            double* xh = xhat.data.data() + (n * d.c + c) * d.spatial;
            double* y = out.data.data() + (n * d.c + c) * d.spatial;
            const double m = mean[c], is = inv_std[c], g = gamma.data[c], b = beta.data[c];
            for (long i = 0; i < d.spatial; ++i) {
                xh[i] = (x[i] - m) * is;
                y[i] = g * xh[i] + b;
            }
        }
    if (cache) {
        cache->normalized = std::move(xhat);
        cache->batch_mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

Tensor batchnorm_backward(const LayerParams& params, const LayerCache& cache,
                          const Tensor& grad_out, std::vector<Tensor>* param_grads) {
    const BnDims d = bn_dims(grad_out);
    const Tensor& gamma = params.learnable[0];
    const Tensor& xhat = cache.normalized;
    Tensor grad_in(grad_out.shape);
    Tensor ggamma({d.c}), gbeta({d.c});
    const double count = static_cast<double>(d.n * d.spatial);
    std::vector<double> sum_dy(d.c, 0.0), sum_dy_xhat(d.c, 0.0);
    for (long n = 0; n < d.n; ++n)
        for (long c = 0; c < d.c; ++c) {
            const double* dy = grad_out.data.data() + (n * d.c + c) * d.spatial;
            const double* xh = xhat.data.data() + (n * d.c + c) * d.spatial;
            double s = 0.0, sx = 0.0;
            for (long i = 0; i < d.spatial; ++i) {
                s += dy[i];
                sx += dy[i] * xh[i];
            }
            sum_dy[c] += s;
            sum_dy_xhat[c] += sx;
        }
    for (long c = 0; c < d.c; ++c) {
        gbeta.data[c] = sum_dy[c];
        ggamma.data[c] = sum_dy_xhat[c];
    }
    for (long n = 0; n < d.n; ++n)
        for (long c = 0; c < d.c; ++c) {
            const double* dy = grad_out.data.data() + (n * d.c + c) * d.spatial;
            const double* xh = xhat.data.data() + (n * d.c + c) * d.spatial;
            double* dx = grad_in.data.data() + (n * d.c + c) * d.spatial;
            const double g = gamma.data[c], is = cache.inv_std[c];
            if (cache.train_mode) {
                const double k1 = sum_dy[c] / count, k2 = sum_dy_xhat[c] / count;
                for (long i = 0; i < d.spatial; ++i)
                    dx[i] = g * is * (dy[i] - k1 - xh[i] * k2);
            } else {
                for (long i = 0; i < d.spatial; ++i) dx[i] = g * is * dy[i];
            }
        }
    if (param_grads) {
        param_grads->clear();
        param_grads->push_back(std::move(ggamma));
        param_grads->push_back(std::move(gbeta));
    }
    return grad_in;
}

Tensor maxpool_forward(const Tensor& in, LayerCache* cache) {
    const long N = in.shape[0], C = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const long OD = D / 2, OH = H / 2, OW = W / 2;
    if (OD < 1 || OH < 1 || OW < 1) throw DataError("maxpool3d input too small");
    Tensor out({N, C, OD, OH, OW});
    std::vector<long> argmax(static_cast<std::size_t>(out.size()));
    long o = 0;
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            const double* x = in.data.data() + (n * C + c) * D * H * W;
            const long base = (n * C + c) * D * H * W;
            for (long od = 0; od < OD; ++od)
                for (long oh = 0; oh < OH; ++oh)
                    for (long ow = 0; ow < OW; ++ow) {
                        double best = -HUGE_VAL;
                        long best_i = -1;
                        for (long kd = 0; kd < 2; ++kd)
                            for (long kh = 0; kh < 2; ++kh)
                                for (long kw = 0; kw < 2; ++kw) {
                                    const long i =
                                        ((od * 2 + kd) * H + oh * 2 + kh) * W + ow * 2 + kw;
                                    if (x[i] > best) {
                                        best = x[i];
                                        best_i = i;
                                    }
                                }
                        out.data[o] = best;
                        argmax[o] = base + best_i;
                        ++o;
                    }
        }
    if (cache) cache->argmax = std::move(argmax);
    return out;
}

Tensor maxpool_backward(const LayerCache& cache, const Tensor& grad_out) {
    Tensor grad_in(cache.input.shape);
    for (long i = 0; i < grad_out.size(); ++i)
        grad_in.data[cache.argmax[i]] += grad_out.data[i];
    return grad_in;
}

Tensor linear_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& in) {
    Tensor out(output_shape(spec, in.shape));
    const long N = in.shape[0], F = spec.in_features, O = spec.out_features;
    const Tensor& wt = params.learnable[0];
    const Tensor& bias = params.learnable[1];
    for (long n = 0; n < N; ++n) {
        const double* x = in.data.data() + n * F;
        double* y = out.data.data() + n * O;
        for (long o = 0; o < O; ++o) {
            const double* w = wt.data.data() + o * F;
            double acc = bias.data[o];
            for (long f = 0; f < F; ++f) acc += w[f] * x[f];
            y[o] = acc;
        }
    }
    return out;
}

Tensor linear_backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                       const Tensor& grad_out, std::vector<Tensor>* param_grads) {
    const Tensor& in = cache.input;
    const long N = in.shape[0], F = spec.in_features, O = spec.out_features;
    const Tensor& wt = params.learnable[0];
    Tensor grad_in(in.shape), gw(wt.shape), gb({O});
    for (long n = 0; n < N; ++n) {
        const double* x = in.data.data() + n * F;
        const double* dy = grad_out.data.data() + n * O;
        double* dx = grad_in.data.data() + n * F;
        for (long o = 0; o < O; ++o) {
            const double g = dy[o];
            gb.data[o] += g;
            const double* w = wt.data.data() + o * F;
            double* gwr = gw.data.data() + o * F;
            for (long f = 0; f < F; ++f) {
                gwr[f] += g * x[f];
                dx[f] += g * w[f];
            }
        }
    }
    if (param_grads) {
        param_grads->clear();
        param_grads->push_back(std::move(gw));
        param_grads->push_back(std::move(gb));
    }
    return grad_in;
}

}  // namespace

Tensor layer_forward(const LayerSpec& spec, LayerParams& params, const Tensor& input, Mode mode,
                     std::uint64_t rng_seed, LayerCache* cache) {
    output_shape(spec, input.shape);  // validates
    if (cache) {
        *cache = LayerCache{};
        cache->train_mode = (mode == Mode::Train);
    }
    Tensor out;
    switch (spec.kind) {
        case LayerKind::Conv3d:
            out = conv3d_forward(spec, params, input);
            break;
        case LayerKind::BatchNorm3d:
            out = batchnorm_forward(spec, params, input, mode, cache);
            break;
        case LayerKind::Relu: {
            out = input;
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
            break;
        }
        case LayerKind::MaxPool3d:
            out = maxpool_forward(input, cache);
            break;
        case LayerKind::Linear:
            out = linear_forward(spec, params, input);
            break;
        case LayerKind::Dropout: {
            out = input;
            if (mode == Mode::Train && spec.p > 0.0) {
                Rng rng(rng_seed);
                const double scale = 1.0 / (1.0 - spec.p);
                std::vector<double> mask(static_cast<std::size_t>(input.size()));
                for (std::size_t i = 0; i < mask.size(); ++i) {
                    mask[i] = rng.uniform() < spec.p ? 0.0 : scale;
                    out.data[i] *= mask[i];
                }
                if (cache) cache->mask = std::move(mask);
            }
            break;
        }
        case LayerKind::GlobalAvgPool: {
            const long N = input.shape[0], C = input.shape[1];
            const long S = input.shape[2] * input.shape[3] * input.shape[4];
            out = Tensor({N, C});
            for (long n = 0; n < N; ++n)
                for (long c = 0; c < C; ++c) {
                    const double* x = input.data.data() + (n * C + c) * S;
                    double acc = 0.0;
                    for (long i = 0; i < S; ++i) acc += x[i];
                    out.data[n * C + c] = acc / static_cast<double>(S);
                }
            break;
        }
    }
    if (cache) {
        switch (spec.kind) {
            case LayerKind::Conv3d:
            case LayerKind::Relu:
            case LayerKind::Linear:
            case LayerKind::MaxPool3d:
            case LayerKind::GlobalAvgPool:
                cache->input = input;
                break;
            default: break;
        }
        if (spec.kind == LayerKind::MaxPool3d || spec.kind == LayerKind::GlobalAvgPool)
            cache->input.data.clear();  // only the shape is needed downstream
    }
    return out;
}

Tensor layer_backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                      const Tensor& grad_out, std::vector<Tensor>* param_grads) {
    if (param_grads) param_grads->clear();
    switch (spec.kind) {
        case LayerKind::Conv3d: return conv3d_backward(spec, params, cache, grad_out, param_grads);
        case LayerKind::BatchNorm3d: return batchnorm_backward(params, cache, grad_out, param_grads);
        case LayerKind::Relu: {
            Tensor grad_in = grad_out;
            for (long i = 0; i < grad_in.size(); ++i)
                if (cache.input.data[i] <= 0.0) grad_in.data[i] = 0.0;
            return grad_in;
        }
        case LayerKind::MaxPool3d: return maxpool_backward(cache, grad_out);
        case LayerKind::Linear: return linear_backward(spec, params, cache, grad_out, param_grads);
        case LayerKind::Dropout: {
            Tensor grad_in = grad_out;
            if (!cache.mask.empty())
                for (long i = 0; i < grad_in.size(); ++i) grad_in.data[i] *= cache.mask[i];
            return grad_in;
        }
        case LayerKind::GlobalAvgPool: {
            const auto& shape = cache.input.shape;
            const long N = shape[0], C = shape[1];
            const long S = shape[2] * shape[3] * shape[4];
            Tensor grad_in(shape);
            for (long n = 0; n < N; ++n)
                for (long c = 0; c < C; ++c) {
                    const double g = grad_out.data[n * C + c] / static_cast<double>(S);
                    double* dx = grad_in.data.data() + (n * C + c) * S;
                    for (long i = 0; i < S; ++i) dx[i] = g;
                }
            return grad_in;
        }
    }
    throw ConfigError("unknown layer kind");
}

void Sequential::init(std::uint64_t seed) {
    for (std::size_t i = 0; i < specs.size(); ++i)
        init_params(specs[i], params[i], mix_seed(seed, static_cast<std::uint64_t>(i)));
}

Tensor Sequential::forward(const Tensor& input, Mode mode, std::uint64_t rng_seed,
                           std::vector<LayerCache>* caches) {
    if (caches) caches->assign(specs.size(), LayerCache{});
    Tensor x = input;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        LayerCache* cache = caches ? &(*caches)[i] : nullptr;
        x = layer_forward(specs[i], params[i], x,
                          mode, mix_seed(rng_seed, static_cast<std::uint64_t>(i)), cache);
    }
    return x;
}

Tensor Sequential::backward(const Tensor& grad_out, const std::vector<LayerCache>& caches,
                            std::vector<std::vector<Tensor>>* grads) {
    if (caches.size() != specs.size()) throw DataError("cache list does not match layer count");
    if (grads) grads->assign(specs.size(), {});
    Tensor g = grad_out;
    for (std::size_t i = specs.size(); i-- > 0;) {
        std::vector<Tensor>* pg = grads ? &(*grads)[i] : nullptr;
        g = layer_backward(specs[i], params[i], caches[i], g, pg);
    }
    return g;
}

std::vector<Tensor*> Sequential::learnable() {
    std::vector<Tensor*> out;
    for (auto& p : params)
        for (auto& t : p.learnable) out.push_back(&t);
    return out;
}

std::vector<LayerKind> Sequential::kind_sequence() const {
    std::vector<LayerKind> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(s.kind);
    return out;
}

long Sequential::learnable_count() const {
    long n = 0;
    for (const auto& p : params)
        for (const auto& t : p.learnable) n += t.size();
    return n;
}

void AdamState::init_like(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    for (const Tensor* t : params) {
        m.push_back(Tensor(t->shape));
        v.push_back(Tensor(t->shape));
    }
    step = 0;
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DataError("adam_step: parameter/gradient list mismatch");
    state.step += 1;
    const AdamConfig& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g)) throw DataError("adam_step: gradient shape mismatch");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (long j = 0; j < p.size(); ++j) {
            const double gj = g.data[j];
            if (!std::isfinite(gj)) throw ConvergenceError("non-finite gradient in optimizer step");
            m.data[j] = c.beta1 * m.data[j] + (1.0 - c.beta1) * gj;
            v.data[j] = c.beta2 * v.data[j] + (1.0 - c.beta2) * gj * gj;
            const double mhat = m.data[j] / bc1;
            const double vhat = v.data[j] / bc2;
            p.data[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

double fd_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    return std::fabs(analytic - numeric) / denom;
}

GradCheckReport grad_check_against(Sequential& net, const Tensor& input, const LossFn& loss,
                                   Mode mode, std::uint64_t rng_seed,
                                   const std::vector<std::vector<Tensor>>& analytic, double h,
                                   long max_params) {
    struct Site {
        long layer, param, index;
    };
    std::vector<Site> sites;
    for (std::size_t li = 0; li < net.params.size(); ++li)
        for (std::size_t pi = 0; pi < net.params[li].learnable.size(); ++pi)
            for (long j = 0; j < net.params[li].learnable[pi].size(); ++j)
                sites.push_back({static_cast<long>(li), static_cast<long>(pi), j});
    if (max_params > 0 && static_cast<long>(sites.size()) > max_params) {
        Rng rng(mix_seed(rng_seed, 0x5eedULL));
        rng.shuffle(sites);
        sites.resize(static_cast<std::size_t>(max_params));
    }
    auto eval_loss = [&]() {
        Tensor out = net.forward(input, mode, rng_seed, nullptr);
        return loss(out, nullptr);
    };
    GradCheckReport report;
    for (const Site& s : sites) {
        double& ref = net.params[s.layer].learnable[s.param].data[s.index];
        const double keep = ref;
        ref = keep + h;
        const double up = eval_loss();
        ref = keep - h;
        const double down = eval_loss();
        ref = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[s.layer][s.param].data[s.index];
        const double err = fd_rel_err(a, numeric);
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_layer = s.layer;
            report.worst_param = s.param;
            report.worst_index = s.index;
        }
        report.checked += 1;
    }
    return report;
}

GradCheckReport grad_check(Sequential& net, const Tensor& input, const LossFn& loss, Mode mode,
                           std::uint64_t rng_seed, double h, long max_params) {
    std::vector<LayerCache> caches;
    Tensor out = net.forward(input, mode, rng_seed, &caches);
    Tensor grad_out(out.shape);
    loss(out, &grad_out);
    std::vector<std::vector<Tensor>> analytic;
    net.backward(grad_out, caches, &analytic);
    for (std::size_t li = 0; li < analytic.size(); ++li)
        if (analytic[li].empty())
            for (const Tensor& t : net.params[li].learnable) analytic[li].push_back(Tensor(t.shape));
    return grad_check_against(net, input, loss, mode, rng_seed, analytic, h, max_params);
}

}  // namespace survfuse::nn
