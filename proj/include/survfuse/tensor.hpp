#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace survfuse::nn {

// Dense double tensor, row-major with the last index fastest.
// Volumes are (N, C, D, H, W); feature matrices are (N, F).
struct Tensor {
    std::vector<long> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<long> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(size_of(shape)), 0.0);
    }

    static long size_of(const std::vector<long>& s) {
        long n = 1;
        for (long v : s) n *= v;
        return n;
    }
    long size() const { return static_cast<long>(data.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

enum class LayerKind { Conv3d, BatchNorm3d, Relu, MaxPool3d, Linear, Dropout, GlobalAvgPool };

// cubic kernel, stride 1, padding floor(k/2) for conv; window 2 stride 2 pool
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int in_ch = 0, out_ch = 0, kernel = 0;       // conv3d
    int channels = 0;                            // batchnorm3d
    double eps = 1e-5, momentum = 0.1;           // batchnorm3d
    int in_features = 0, out_features = 0;       // linear
    double p = 0.0;                              // dropout

    static LayerSpec conv3d(int in_ch, int out_ch, int kernel);
    static LayerSpec batchnorm3d(int channels);
    static LayerSpec relu();
    static LayerSpec maxpool3d();
    static LayerSpec linear(int in_features, int out_features);
    static LayerSpec dropout(double p);
    static LayerSpec global_avg_pool();
};

std::string layer_kind_name(LayerKind kind);

// learnable tensors plus running buffers (batchnorm running mean/var)
struct LayerParams {
    std::vector<Tensor> learnable;
    std::vector<Tensor> buffers;
};

struct LayerCache {
    Tensor input;
    Tensor normalized;               // batchnorm xhat
    std::vector<double> batch_mean;  // batchnorm, per channel
    std::vector<double> inv_std;
    std::vector<long> argmax;        // maxpool routing
    std::vector<double> mask;        // dropout keep mask, already scaled
    bool train_mode = false;
};

enum class Mode { Train, Eval };

// Allocates parameters of the right shapes (zeros; see init_params for the
// seeded initialization).
LayerParams make_params(const LayerSpec& spec);
void init_params(const LayerSpec& spec, LayerParams& params, std::uint64_t seed);

std::vector<long> output_shape(const LayerSpec& spec, const std::vector<long>& input);

// Forward pass. Batchnorm updates running stats in train mode, hence
// params is non-const. cache may be null in pure inference.
Tensor layer_forward(const LayerSpec& spec, LayerParams& params, const Tensor& input, Mode mode,
                     std::uint64_t rng_seed, LayerCache* cache);

// Reverse-mode gradients; param_grads (if non-null) receives one tensor per
// learnable parameter. Maxpool routes to the first argmax on ties.
Tensor layer_backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                      const Tensor& grad_out, std::vector<Tensor>* param_grads);

// A plain layer pipeline: specs, params, and helpers to run both passes.
struct Sequential {
    std::vector<LayerSpec> specs;
    std::vector<LayerParams> params;

    void add(const LayerSpec& spec) {
        specs.push_back(spec);
        params.push_back(make_params(spec));
    }
    void init(std::uint64_t seed);

    Tensor forward(const Tensor& input, Mode mode, std::uint64_t rng_seed,
                   std::vector<LayerCache>* caches);
    // grads gets one vector of tensors per layer (possibly empty)
    Tensor backward(const Tensor& grad_out, const std::vector<LayerCache>& caches,
                    std::vector<std::vector<Tensor>>* grads);

    std::vector<Tensor*> learnable();            // flat list over layers
    std::vector<LayerKind> kind_sequence() const;
    long learnable_count() const;
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> m, v;
    long step = 0;

    void init_like(const std::vector<Tensor*>& params);
};

// standard bias-corrected update; throws ConvergenceError on non-finite grads
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads);

struct GradCheckReport {
    double max_rel_err = 0.0;
    long worst_layer = -1;
    long worst_param = -1;   // index of the learnable tensor within the layer
    long worst_index = -1;   // flat element index within that tensor
    long checked = 0;
};

// loss(output, grad_out) returns the scalar loss and fills d(loss)/d(output)
using LossFn = std::function<double(const Tensor& output, Tensor* grad_out)>;

// Central finite differences (h per parameter) against the analytic backward
// pass. max_params > 0 checks a seed-chosen sample instead of every entry.
GradCheckReport grad_check(Sequential& net, const Tensor& input, const LossFn& loss, Mode mode,
                           std::uint64_t rng_seed, double h = 1e-5, long max_params = 0);

// compare externally supplied analytic gradients against finite differences
GradCheckReport grad_check_against(Sequential& net, const Tensor& input, const LossFn& loss,
                                   Mode mode, std::uint64_t rng_seed,
                                   const std::vector<std::vector<Tensor>>& analytic, double h = 1e-5,
                                   long max_params = 0);

double fd_rel_err(double analytic, double numeric);

}  // namespace survfuse::nn
