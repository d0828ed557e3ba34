#include "rhythmotion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rhythmotion/common.hpp"

namespace rhythmotion::nn {

namespace {

size_t shape_product(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
        require(d > 0, "tensor axis must be positive");
        n *= static_cast<size_t>(d);
    }
    return n;
}

constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687;
constexpr double kGeluC = 0.044715;

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(shape_product(shape), 0.0) {
    require(!shape.empty() && shape.size() <= 4, "tensor rank must be 1..4");
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> d) {
    Tensor t(std::move(s));
    require(t.data.size() == d.size(), "tensor data size mismatch");
    t.data = std::move(d);
    return t;
}

void check_finite(const Tensor& t, const char* what) {
    for (double x : t.data)
        if (!std::isfinite(x)) throw RuntimeFault(std::string("non-finite values in ") + what);
}

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& x : t.data) x = rng.uniform(-limit, limit);
    return t;
}

// --------------------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    require(!params.count(name), "duplicate parameter: " + name);
    names.push_back(name);
    m[name] = Tensor::zeros(init.shape);
    v[name] = Tensor::zeros(init.shape);
    return params[name] = std::move(init);
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params.find(name);
    require(it != params.end(), "unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params.find(name);
    require(it != params.end(), "unknown parameter: " + name);
    return it->second;
}

uint64_t ParamStore::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& n : names) {
        h = fnv1a64(n.data(), n.size(), h);
        const auto& t = params.at(n);
        h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
    }
    return h;
}

void accumulate(GradMap& grads, const std::string& name, const Tensor& g) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        grads.emplace(name, g);
        return;
    }
    require(it->second.data.size() == g.data.size(), "gradient shape mismatch: " + name);
    for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
}

void adam_step(ParamStore& store, const GradMap& grads, double lr, double beta1, double beta2,
               double eps) {
    store.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(store.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(store.step));
    for (const auto& [name, g] : grads) {
        auto pit = store.params.find(name);
        require(pit != store.params.end(), "adam: unknown parameter " + name);
        Tensor& p = pit->second;
        require(p.data.size() == g.data.size(), "adam: gradient shape mismatch " + name);
        for (double x : g.data)
            if (!std::isfinite(x)) throw RuntimeFault("adam: non-finite gradient for " + name);
        Tensor& mm = store.m[name];
        Tensor& vv = store.v[name];
        for (size_t i = 0; i < p.data.size(); ++i) {
            mm.data[i] = beta1 * mm.data[i] + (1.0 - beta1) * g.data[i];
            vv.data[i] = beta2 * vv.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            const double mhat = mm.data[i] / bc1;
            const double vhat = vv.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// --------------------------------------------------------------------------

Tensor dense_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
    require(x.ndim() == 2 && W.ndim() == 2 && b.ndim() == 1, "dense: bad ranks");
    require(x.dim(1) == W.dim(0) && W.dim(1) == b.dim(0), "dense: shape mismatch");
    check_finite(x, "dense input");
    const int B = x.dim(0), I = x.dim(1), O = W.dim(1);
    Tensor y({B, O});
    for (int r = 0; r < B; ++r) {
        double* yr = &y.at(r, 0);
        for (int o = 0; o < O; ++o) yr[o] = b.at(o);
        const double* xr = &x.at(r, 0);
        for (int i = 0; i < I; ++i) {
            const double xi = xr[i];
            const double* wr = &W.at(i, 0);
            for (int o = 0; o < O; ++o) yr[o] += xi * wr[o];
        }
    }
    return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& W, const Tensor& dy) {
    require(dy.ndim() == 2 && dy.dim(0) == x.dim(0) && dy.dim(1) == W.dim(1),
            "dense backward: shape mismatch");
    const int B = x.dim(0), I = x.dim(1), O = W.dim(1);
    DenseGrads g{Tensor({B, I}), Tensor({I, O}), Tensor({O})};
    for (int r = 0; r < B; ++r) {
        const double* dyr = &dy.at(r, 0);
        const double* xr = &x.at(r, 0);
        for (int o = 0; o < O; ++o) g.db.at(o) += dyr[o];
        for (int i = 0; i < I; ++i) {
            const double* wr = &W.at(i, 0);
            double acc = 0;
            double* dwr = &g.dW.at(i, 0);
            const double xi = xr[i];
            for (int o = 0; o < O; ++o) {
                acc += dyr[o] * wr[o];
                dwr[o] += xi * dyr[o];
            }
            g.dx.at(r, i) = acc;
        }
    }
    return g;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& k, const Tensor& b, int stride) {
    require(x.ndim() == 4 && k.ndim() == 4 && b.ndim() == 1, "conv2d: bad ranks");
    require(stride >= 1, "conv2d: stride must be >= 1");
    require(x.dim(1) == k.dim(1) && k.dim(0) == b.dim(0), "conv2d: channel mismatch");
    require(x.dim(2) >= k.dim(2) && x.dim(3) >= k.dim(3), "conv2d: kernel larger than input");
    check_finite(x, "conv2d input");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int F = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const int oh = (H - kh) / stride + 1, ow = (W - kw) / stride + 1;
    Tensor y({B, F, oh, ow});
    for (int n = 0; n < B; ++n)
        for (int f = 0; f < F; ++f)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = b.at(f);
                    for (int c = 0; c < C; ++c)
                        for (int u = 0; u < kh; ++u) {
                            const double* xr = &x.at(n, c, i * stride + u, j * stride);
                            const double* kr = &k.at(f, c, u, 0);
                            for (int vv = 0; vv < kw; ++vv) acc += xr[vv] * kr[vv];
                        }
                    y.at(n, f, i, j) = acc;
                }
    return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& k, int stride, const Tensor& dy) {
    const int B = x.dim(0), C = x.dim(1);
    const int F = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const int oh = dy.dim(2), ow = dy.dim(3);
    require(dy.ndim() == 4 && dy.dim(0) == B && dy.dim(1) == F, "conv2d backward: shape mismatch");
    ConvGrads g{Tensor(x.shape), Tensor(k.shape), Tensor({F})};
    for (int n = 0; n < B; ++n)
        for (int f = 0; f < F; ++f)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    const double d = dy.at(n, f, i, j);
                    g.db.at(f) += d;
                    for (int c = 0; c < C; ++c)
                        for (int u = 0; u < kh; ++u) {
                            double* dxr = &g.dx.at(n, c, i * stride + u, j * stride);
                            double* dkr = &g.dk.at(f, c, u, 0);
                            const double* xr = &x.at(n, c, i * stride + u, j * stride);
                            const double* kr = &k.at(f, c, u, 0);
                            for (int vv = 0; vv < kw; ++vv) {
                                dxr[vv] += d * kr[vv];
                                dkr[vv] += d * xr[vv];
                            }
                        }
                }
    return g;
}

Tensor gelu(const Tensor& x) {
    check_finite(x, "gelu input");
    Tensor y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
        y.data[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
    require(x.data.size() == dy.data.size(), "gelu backward: size mismatch");
    Tensor dx(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
        const double t = std::tanh(u);
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
        dx.data[i] = dy.data[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
    return dx;
}

Tensor layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias,
                          LayerNormCache* cache) {
    require(x.ndim() == 2, "layer_norm: rank-2 input expected");
    const int T = x.dim(0), d = x.dim(1);
    require(gain.dim(0) == d && bias.dim(0) == d, "layer_norm: param dim mismatch");
    check_finite(x, "layer_norm input");
    Tensor y({T, d});
    if (cache) {
        cache->mean.assign(static_cast<size_t>(T), 0.0);
        cache->rstd.assign(static_cast<size_t>(T), 0.0);
    }
    constexpr double eps = 1e-5;
    for (int t = 0; t < T; ++t) {
        double mu = 0;
        for (int i = 0; i < d; ++i) mu += x.at(t, i);
        mu /= d;
        double var = 0;
        for (int i = 0; i < d; ++i) {
            const double c = x.at(t, i) - mu;
            var += c * c;
        }
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (int i = 0; i < d; ++i)
            y.at(t, i) = gain.at(i) * (x.at(t, i) - mu) * rstd + bias.at(i);
        if (cache) {
            cache->mean[static_cast<size_t>(t)] = mu;
            cache->rstd[static_cast<size_t>(t)] = rstd;
        }
    }
    return y;
}

LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gain,
                                   const LayerNormCache& cache, const Tensor& dy) {
    const int T = x.dim(0), d = x.dim(1);
    LayerNormGrads g{Tensor({T, d}), Tensor({d}), Tensor({d})};
    for (int t = 0; t < T; ++t) {
        const double mu = cache.mean[static_cast<size_t>(t)];
        const double rstd = cache.rstd[static_cast<size_t>(t)];
        double sum_dh = 0, sum_dh_xhat = 0;
        for (int i = 0; i < d; ++i) {
            const double xhat = (x.at(t, i) - mu) * rstd;
            const double dh = dy.at(t, i) * gain.at(i);
            sum_dh += dh;
            sum_dh_xhat += dh * xhat;
            g.dgain.at(i) += dy.at(t, i) * xhat;
            g.dbias.at(i) += dy.at(t, i);
        }
        for (int i = 0; i < d; ++i) {
            const double xhat = (x.at(t, i) - mu) * rstd;
            const double dh = dy.at(t, i) * gain.at(i);
            g.dx.at(t, i) = rstd * (dh - sum_dh / d - xhat * sum_dh_xhat / d);
        }
    }
    return g;
}

Tensor softmax_rows(const Tensor& x) {
    require(x.ndim() == 2, "softmax: rank-2 input expected");
    check_finite(x, "softmax input");
    const int T = x.dim(0), d = x.dim(1);
    Tensor y({T, d});
    for (int t = 0; t < T; ++t) {
        double mx = x.at(t, 0);
        for (int i = 1; i < d; ++i) mx = std::max(mx, x.at(t, i));
        double z = 0;
        for (int i = 0; i < d; ++i) z += std::exp(x.at(t, i) - mx);
        for (int i = 0; i < d; ++i) y.at(t, i) = std::exp(x.at(t, i) - mx) / z;
    }
    return y;
}

Tensor sinusoidal_positions(int length, int dim) {
    Tensor pe({length, dim});
    for (int t = 0; t < length; ++t)
        for (int i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -2.0 * (i / 2) / dim);
            pe.at(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
        }
    return pe;
}

// --------------------------------------------------------------------------

namespace {

std::string pname(const std::string& prefix, const std::string& field) {
    return prefix + "." + field;
}

}  // namespace

void attention_init(ParamStore& ps, const std::string& prefix, int dim, int hidden, Rng& rng) {
    Tensor ones({dim});
    std::fill(ones.data.begin(), ones.data.end(), 1.0);
    ps.add(pname(prefix, "ln1.g"), ones);
    ps.add(pname(prefix, "ln1.b"), Tensor({dim}));
    for (const char* w : {"wq", "wk", "wv", "wo"})
        ps.add(pname(prefix, w), kaiming_uniform({dim, dim}, dim, rng));
    for (const char* b : {"bq", "bk", "bv", "bo"}) ps.add(pname(prefix, b), Tensor({dim}));
    ps.add(pname(prefix, "ln2.g"), ones);
    ps.add(pname(prefix, "ln2.b"), Tensor({dim}));
    ps.add(pname(prefix, "w1"), kaiming_uniform({dim, hidden}, dim, rng));
    ps.add(pname(prefix, "b1"), Tensor({hidden}));
    ps.add(pname(prefix, "w2"), kaiming_uniform({hidden, dim}, hidden, rng));
    ps.add(pname(prefix, "b2"), Tensor({dim}));
}

Tensor attention_forward(const ParamStore& ps, const std::string& prefix, const Tensor& x,
                         AttentionCache* cc) {
    require(x.ndim() == 2, "attention: rank-2 input expected");
    const int T = x.dim(0), d = x.dim(1);
    AttentionCache local;
    AttentionCache& c = cc ? *cc : local;

    c.x1 = x;
    const Tensor pe = sinusoidal_positions(T, d);
    for (size_t i = 0; i < c.x1.data.size(); ++i) c.x1.data[i] += pe.data[i];

    c.a = layer_norm_forward(c.x1, ps.get(pname(prefix, "ln1.g")), ps.get(pname(prefix, "ln1.b")),
                             &c.ln1);
    c.q = dense_forward(c.a, ps.get(pname(prefix, "wq")), ps.get(pname(prefix, "bq")));
    c.k = dense_forward(c.a, ps.get(pname(prefix, "wk")), ps.get(pname(prefix, "bk")));
    c.v = dense_forward(c.a, ps.get(pname(prefix, "wv")), ps.get(pname(prefix, "bv")));

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor scores({T, T});
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            double acc = 0;
            for (int e = 0; e < d; ++e) acc += c.q.at(i, e) * c.k.at(j, e);
            scores.at(i, j) = acc * scale;
        }
    c.probs = softmax_rows(scores);

    c.att = Tensor({T, d});
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            const double p = c.probs.at(i, j);
            for (int e = 0; e < d; ++e) c.att.at(i, e) += p * c.v.at(j, e);
        }

    const Tensor o = dense_forward(c.att, ps.get(pname(prefix, "wo")), ps.get(pname(prefix, "bo")));
    c.r1 = c.x1;
    for (size_t i = 0; i < c.r1.data.size(); ++i) c.r1.data[i] += o.data[i];

    c.n2 = layer_norm_forward(c.r1, ps.get(pname(prefix, "ln2.g")), ps.get(pname(prefix, "ln2.b")),
                              &c.ln2);
    c.z1 = dense_forward(c.n2, ps.get(pname(prefix, "w1")), ps.get(pname(prefix, "b1")));
    c.m1 = gelu(c.z1);
    const Tensor m2 = dense_forward(c.m1, ps.get(pname(prefix, "w2")), ps.get(pname(prefix, "b2")));

    Tensor y = c.r1;
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += m2.data[i];
    return y;
}

Tensor attention_backward(const ParamStore& ps, const std::string& prefix,
                          const AttentionCache& c, const Tensor& dy, GradMap& grads) {
    const int T = c.x1.dim(0), d = c.x1.dim(1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    // y = r1 + m2
    DenseGrads g2 = dense_backward(c.m1, ps.get(pname(prefix, "w2")), dy);
    accumulate(grads, pname(prefix, "w2"), g2.dW);
    accumulate(grads, pname(prefix, "b2"), g2.db);
    const Tensor dz1 = gelu_backward(c.z1, g2.dx);
    DenseGrads g1 = dense_backward(c.n2, ps.get(pname(prefix, "w1")), dz1);
    accumulate(grads, pname(prefix, "w1"), g1.dW);
    accumulate(grads, pname(prefix, "b1"), g1.db);
    LayerNormGrads gl2 =
        layer_norm_backward(c.r1, ps.get(pname(prefix, "ln2.g")), c.ln2, g1.dx);
    accumulate(grads, pname(prefix, "ln2.g"), gl2.dgain);
    accumulate(grads, pname(prefix, "ln2.b"), gl2.dbias);

    Tensor dr1 = dy;  // residual branch
    for (size_t i = 0; i < dr1.data.size(); ++i) dr1.data[i] += gl2.dx.data[i];

    // r1 = x1 + att*Wo + bo
    DenseGrads go = dense_backward(c.att, ps.get(pname(prefix, "wo")), dr1);
    accumulate(grads, pname(prefix, "wo"), go.dW);
    accumulate(grads, pname(prefix, "bo"), go.db);
    const Tensor& datt = go.dx;

    // att = P v
    Tensor dprobs({T, T});
    Tensor dv({T, d});
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            double acc = 0;
            for (int e = 0; e < d; ++e) acc += datt.at(i, e) * c.v.at(j, e);
            dprobs.at(i, j) = acc;
            const double p = c.probs.at(i, j);
            for (int e = 0; e < d; ++e) dv.at(j, e) += p * datt.at(i, e);
        }

    // softmax rows
    Tensor dscores({T, T});
    for (int i = 0; i < T; ++i) {
        double dot = 0;
        for (int j = 0; j < T; ++j) dot += dprobs.at(i, j) * c.probs.at(i, j);
        for (int j = 0; j < T; ++j)
            dscores.at(i, j) = c.probs.at(i, j) * (dprobs.at(i, j) - dot);
    }

    // scores = q k^T * scale
    Tensor dq({T, d}), dk({T, d});
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            const double ds = dscores.at(i, j) * scale;
            for (int e = 0; e < d; ++e) {
                dq.at(i, e) += ds * c.k.at(j, e);
                dk.at(j, e) += ds * c.q.at(i, e);
            }
        }

    DenseGrads gq = dense_backward(c.a, ps.get(pname(prefix, "wq")), dq);
    DenseGrads gk = dense_backward(c.a, ps.get(pname(prefix, "wk")), dk);
    DenseGrads gv = dense_backward(c.a, ps.get(pname(prefix, "wv")), dv);
    accumulate(grads, pname(prefix, "wq"), gq.dW);
    accumulate(grads, pname(prefix, "bq"), gq.db);
    accumulate(grads, pname(prefix, "wk"), gk.dW);
    accumulate(grads, pname(prefix, "bk"), gk.db);
    accumulate(grads, pname(prefix, "wv"), gv.dW);
    accumulate(grads, pname(prefix, "bv"), gv.db);

    Tensor da = gq.dx;
    for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += gk.dx.data[i] + gv.dx.data[i];

    LayerNormGrads gl1 = layer_norm_backward(c.x1, ps.get(pname(prefix, "ln1.g")), c.ln1, da);
    accumulate(grads, pname(prefix, "ln1.g"), gl1.dgain);
    accumulate(grads, pname(prefix, "ln1.b"), gl1.dbias);

    Tensor dx = dr1;  // x1 = x + pe feeds both residual and ln1 paths
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += gl1.dx.data[i];
    return dx;
}

// --------------------------------------------------------------------------

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> theta, std::span<const double> analytic, double h) {
    require(theta.size() == analytic.size(), "grad_check: size mismatch");
    std::vector<double> work(theta.begin(), theta.end());
    double worst = 0;
    for (size_t i = 0; i < work.size(); ++i) {
        const double orig = work[i];
        work[i] = orig + h;
        const double fp = f(work);
        work[i] = orig - h;
        const double fm = f(work);
        work[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double g = analytic[i];
        const double denom = std::max({std::abs(fd), std::abs(g), 1e-4});
        worst = std::max(worst, std::abs(fd - g) / denom);
    }
    return worst;
}

// --------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const io::json& meta, uint64_t seed) {
    io::json header;
    header["magic"] = "NNCK";
    header["version"] = 1;
    header["names"] = store.names;
    io::json shapes = io::json::object();
    for (const auto& n : store.names) shapes[n] = store.params.at(n).shape;
    header["shapes"] = std::move(shapes);
    header["step"] = store.step;
    header["seed"] = seed;
    header["meta"] = meta;
    std::vector<unsigned char> payload;
    for (const auto& n : store.names) io::append_f32(payload, store.params.at(n).data);
    io::write_json_blob(path, header, payload);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto blob = io::read_json_blob(path, "NNCK", 1);
    Checkpoint ck;
    ck.meta = blob.header.value("meta", io::json::object());
    ck.seed = blob.header.value("seed", uint64_t{0});
    ck.store.step = blob.header.value("step", int64_t{0});
    const auto all = io::from_f32_bytes(blob.payload);
    size_t off = 0;
    for (const auto& name : blob.header.at("names")) {
        const std::string n = name.get<std::string>();
        std::vector<int> shape = blob.header.at("shapes").at(n).get<std::vector<int>>();
        Tensor t(shape);
        require_input(off + t.size() <= all.size(), "checkpoint payload too short");
        std::copy(all.begin() + static_cast<long>(off),
                  all.begin() + static_cast<long>(off + t.size()), t.data.begin());
        off += t.size();
        ck.store.add(n, std::move(t));
    }
    require_input(off == all.size(), "checkpoint payload size mismatch");
    return ck;
}

}  // namespace rhythmotion::nn
