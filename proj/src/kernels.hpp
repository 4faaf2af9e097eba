#pragma once

// Dense kernels shared by inference and training. Every reduction runs in a
// fixed index order so results do not depend on scheduling.

#include <cmath>
#include <cstddef>

namespace langsteer::detail {

constexpr float kLayerNormEps = 1e-5f;
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2 / pi)

// y[m x out] = x[m x in] * w[in x out] + bias
inline void linear(const float* x, std::size_t m, std::size_t in, const float* w, std::size_t out,
                   const float* bias, float* y) {
    for (std::size_t i = 0; i < m; ++i) {
        float* yr = y + i * out;
        for (std::size_t j = 0; j < out; ++j) yr[j] = bias ? bias[j] : 0.0f;
        const float* xr = x + i * in;
        for (std::size_t k = 0; k < in; ++k) {
            const float xv = xr[k];
            const float* wr = w + k * out;
            for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
        }
    }
}

// Normalises each of m rows; optionally records mean and 1/std per row.
inline void layer_norm(const float* x, std::size_t m, std::size_t d, const float* gamma, const float* beta,
                       float* y, float* mean_out = nullptr, float* rstd_out = nullptr) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* xr = x + i * d;
        float mean = 0.0f;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<float>(d);
        float var = 0.0f;
        for (std::size_t j = 0; j < d; ++j) {
            const float c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float rstd = 1.0f / std::sqrt(var + kLayerNormEps);
        float* yr = y + i * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] = (xr[j] - mean) * rstd * gamma[j] + beta[j];
        if (mean_out) mean_out[i] = mean;
        if (rstd_out) rstd_out[i] = rstd;
    }
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::tanh(kGeluC * (x + 0.044715f * x * x * x)));
}

inline float gelu_grad(float x) {
    const float inner = kGeluC * (x + 0.044715f * x * x * x);
    const float t = std::tanh(inner);
    const float dinner = kGeluC * (1.0f + 3.0f * 0.044715f * x * x);
    return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * dinner;
}

}  // namespace langsteer::detail
