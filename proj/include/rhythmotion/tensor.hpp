#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rhythmotion/io.hpp"
#include "rhythmotion/rng.hpp"

namespace rhythmotion::nn {

// Dense row-major tensor, up to 4 axes. All math runs in double; float32 only
// appears at the checkpoint boundary.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor from(std::vector<int> s, std::vector<double> d);

    size_t size() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& at(int i) { return data[static_cast<size_t>(i)]; }
    const double& at(int i) const { return data[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    const double& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    const double& at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    const double& at(int i, int j, int k, int l) const {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
};

void check_finite(const Tensor& t, const char* what);

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng);

// --------------------------------------------------------------------------
// Parameter store with Adam moments. Name order is insertion order and fixes
// the checkpoint payload layout.

using GradMap = std::map<std::string, Tensor>;

struct ParamStore {
    std::vector<std::string> names;
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> m, v;
    int64_t step = 0;

    Tensor& add(const std::string& name, Tensor init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return params.count(name) > 0; }

    // Digest of all parameter bytes, for frozen-model assertions.
    uint64_t hash() const;
};

void accumulate(GradMap& grads, const std::string& name, const Tensor& g);

void adam_step(ParamStore& store, const GradMap& grads, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// --------------------------------------------------------------------------
// Layer primitives. Forward ops validate finiteness and shapes; backward ops
// return exact analytic gradients.

Tensor dense_forward(const Tensor& x, const Tensor& W, const Tensor& b);
struct DenseGrads {
    Tensor dx, dW, db;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& W, const Tensor& dy);

// Valid (no padding) strided cross-correlation. x:[B,C,H,W] k:[F,C,kh,kw]
Tensor conv2d_forward(const Tensor& x, const Tensor& k, const Tensor& b, int stride);
struct ConvGrads {
    Tensor dx, dk, db;
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& k, int stride, const Tensor& dy);

// tanh-approximation GELU, elementwise
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

struct LayerNormCache {
    std::vector<double> mean, rstd;
};
Tensor layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias,
                          LayerNormCache* cache);
struct LayerNormGrads {
    Tensor dx, dgain, dbias;
};
LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gain,
                                   const LayerNormCache& cache, const Tensor& dy);

Tensor softmax_rows(const Tensor& x);

Tensor sinusoidal_positions(int length, int dim);

// --------------------------------------------------------------------------
// Single pre-norm transformer block, one attention head. Sinusoidal positions
// are added at the input. Parameters live in a ParamStore under `prefix`.

struct AttentionCache {
    Tensor x1, a, q, k, v, probs, att, r1, n2, z1, m1;
    LayerNormCache ln1, ln2;
};

void attention_init(ParamStore& ps, const std::string& prefix, int dim, int hidden, Rng& rng);
Tensor attention_forward(const ParamStore& ps, const std::string& prefix, const Tensor& x,
                         AttentionCache* cache);
// Returns dL/dx and accumulates parameter gradients into `grads`.
Tensor attention_backward(const ParamStore& ps, const std::string& prefix,
                          const AttentionCache& cache, const Tensor& dy, GradMap& grads);

// --------------------------------------------------------------------------
// Central finite differences vs a supplied analytic gradient; returns the max
// per-coordinate relative error.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> theta, std::span<const double> analytic,
                  double h = 1e-4);

// --------------------------------------------------------------------------
// NNCK checkpoint container: JSON manifest + float32 payloads in name order.

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const io::json& meta, uint64_t seed);
struct Checkpoint {
    ParamStore store;
    io::json meta;
    uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rhythmotion::nn
