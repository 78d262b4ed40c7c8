#pragma once

#include <cstdint>
#include <vector>

#include "privdfs/flops.hpp"
#include "privdfs/rng.hpp"
#include "privdfs/tensor.hpp"

namespace privdfs {

// Standard 2-D convolution, zero same-padding, stride 1.
struct Conv2d {
    int in_c = 0, out_c = 0, k = 3;
    std::vector<float> w;  // [out][in][k][k]
    std::vector<float> b;  // [out]

    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel, Rng& rng)
        : in_c(in_channels), out_c(out_channels), k(kernel),
          w(static_cast<std::size_t>(in_channels) * out_channels * kernel * kernel),
          b(out_channels, 0.0f) {
        const double scale = std::sqrt(2.0 / (in_channels * kernel * kernel));
        for (auto& v : w) v = static_cast<float>(scale * rng.gaussian());
    }

    FeatureMap forward(const FeatureMap& in) const {
        require(in.channels == in_c, "Conv2d: input channel mismatch");
        const int r = k / 2;
        FeatureMap out(out_c, in.height, in.width);
        for (int oc = 0; oc < out_c; ++oc) {
            for (int y = 0; y < in.height; ++y) {
                for (int x = 0; x < in.width; ++x) {
                    double acc = b[oc];
                    for (int ic = 0; ic < in_c; ++ic) {
                        const float* wk =
                            w.data() +
                            ((static_cast<std::size_t>(oc) * in_c + ic) * k) * k;
                        for (int i = 0; i < k; ++i) {
                            const int yy = y + i - r;
                            if (yy < 0 || yy >= in.height) continue;
                            for (int j = 0; j < k; ++j) {
                                const int xx = x + j - r;
                                if (xx < 0 || xx >= in.width) continue;
                                acc += static_cast<double>(wk[i * k + j]) *
                                       in.at(ic, yy, xx);
                            }
                        }
                    }
                    out.at(oc, y, x) = static_cast<float>(acc);
                    add_flops(2LL * in_c * k * k);
                }
            }
        }
        return out;
    }

    // grad wrt input; grad_w / grad_b accumulated into the given buffers.
    FeatureMap backward(const FeatureMap& in, const FeatureMap& grad_out,
                        std::vector<float>& grad_w, std::vector<float>& grad_b) const {
        const int r = k / 2;
        FeatureMap grad_in(in_c, in.height, in.width);
        for (int oc = 0; oc < out_c; ++oc) {
            for (int y = 0; y < in.height; ++y) {
                for (int x = 0; x < in.width; ++x) {
                    const float go = grad_out.at(oc, y, x);
                    if (go == 0.0f) continue;
                    grad_b[oc] += go;
                    for (int ic = 0; ic < in_c; ++ic) {
                        const std::size_t base =
                            (static_cast<std::size_t>(oc) * in_c + ic) * k * k;
                        for (int i = 0; i < k; ++i) {
                            const int yy = y + i - r;
                            if (yy < 0 || yy >= in.height) continue;
                            for (int j = 0; j < k; ++j) {
                                const int xx = x + j - r;
                                if (xx < 0 || xx >= in.width) continue;
                                grad_in.at(ic, yy, xx) += go * w[base + i * k + j];
                                grad_w[base + i * k + j] += go * in.at(ic, yy, xx);
                            }
                        }
                    }
                }
            }
        }
        return grad_in;
    }
};

struct Dense {
    int in_n = 0, out_n = 0;
    std::vector<float> w;  // [out][in]
    std::vector<float> b;  // [out]

    Dense() = default;
    Dense(int in, int out, Rng& rng)
        : in_n(in), out_n(out), w(static_cast<std::size_t>(in) * out),
          b(out, 0.0f) {
        const double scale = std::sqrt(2.0 / in);
        for (auto& v : w) v = static_cast<float>(scale * rng.gaussian());
    }

    std::vector<float> forward(const std::vector<float>& in) const {
        require(static_cast<int>(in.size()) == in_n, "Dense: input size mismatch");
        std::vector<float> out(out_n);
        for (int o = 0; o < out_n; ++o) {
            double acc = b[o];
            const float* row = w.data() + static_cast<std::size_t>(o) * in_n;
            for (int i = 0; i < in_n; ++i) acc += static_cast<double>(row[i]) * in[i];
            out[o] = static_cast<float>(acc);
            add_flops(2LL * in_n);
        }
        return out;
    }

    std::vector<float> backward(const std::vector<float>& in,
                                const std::vector<float>& grad_out,
                                std::vector<float>& grad_w,
                                std::vector<float>& grad_b) const {
        std::vector<float> grad_in(in_n, 0.0f);
        for (int o = 0; o < out_n; ++o) {
            const float go = grad_out[o];
            grad_b[o] += go;
            const float* row = w.data() + static_cast<std::size_t>(o) * in_n;
            float* grow = grad_w.data() + static_cast<std::size_t>(o) * in_n;
            for (int i = 0; i < in_n; ++i) {
                grad_in[i] += go * row[i];
                grow[i] += go * in[i];
            }
        }
        return grad_in;
    }
};

inline FeatureMap relu(const FeatureMap& in) {
    FeatureMap out = in;
    for (auto& v : out.data)
        if (v < 0.0f) v = 0.0f;
    return out;
}

inline FeatureMap relu_backward(const FeatureMap& pre_act,
                                const FeatureMap& grad_out) {
    FeatureMap g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (pre_act.data[i] <= 0.0f) g.data[i] = 0.0f;
    return g;
}

inline std::vector<float> relu_vec(const std::vector<float>& in) {
    std::vector<float> out = in;
    for (auto& v : out)
        if (v < 0.0f) v = 0.0f;
    return out;
}

inline std::vector<float> global_avg_pool(const FeatureMap& in) {
    std::vector<float> out(in.channels);
    const int plane = in.plane();
    for (int c = 0; c < in.channels; ++c) {
        double acc = 0.0;
        const float* src = in.data.data() + static_cast<std::size_t>(c) * plane;
        for (int p = 0; p < plane; ++p) acc += src[p];
        out[c] = static_cast<float>(acc / plane);
        add_flops(2LL * plane);
    }
    return out;
}

inline FeatureMap global_avg_pool_backward(int channels, int h, int w,
                                           const std::vector<float>& grad_out) {
    FeatureMap g(channels, h, w);
    const int plane = h * w;
    for (int c = 0; c < channels; ++c) {
        const float v = grad_out[c] / static_cast<float>(plane);
        float* dst = g.data.data() + static_cast<std::size_t>(c) * plane;
        for (int p = 0; p < plane; ++p) dst[p] = v;
    }
    return g;
}

// Numerically stable softmax.
inline std::vector<float> softmax(const std::vector<float>& logits) {
    float mx = logits[0];
    for (float v : logits)
        if (v > mx) mx = v;
    double sum = 0.0;
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += e[i];
    }
    std::vector<float> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        p[i] = static_cast<float>(e[i] / sum);
    return p;
}

inline double cross_entropy(const std::vector<float>& probs, int label) {
    const double p = std::max(static_cast<double>(probs[label]), 1e-12);
    return -std::log(p);
}

// d CE / d logits = p - onehot(label)
inline std::vector<float> softmax_ce_grad(const std::vector<float>& probs,
                                          int label) {
    std::vector<float> g = probs;
    g[label] -= 1.0f;
    return g;
}

// Momentum SGD on one parameter blob: v <- m v + g; w <- w - lr v.
inline void sgd_update(std::vector<float>& params, const std::vector<float>& grads,
                       std::vector<float>& velocity, float lr, float momentum) {
    if (velocity.size() != params.size()) velocity.assign(params.size(), 0.0f);
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grads[i];
        params[i] -= lr * velocity[i];
    }
}

}  // namespace privdfs
