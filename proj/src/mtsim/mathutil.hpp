#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace mtsim {

inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

// softplus(x) = ln(1 + e^x), overflow-safe; -ln(sigmoid(z)) == softplus(-z).
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double logsumexp(std::span<const double> v) {
    double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline void softmax_into(std::span<const double> logits, double temperature, std::vector<double>& out) {
    out.resize(logits.size());
    double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - m) / temperature);
        s += out[i];
    }
    for (double& p : out) p /= s;
}

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
    std::vector<double> out;
    softmax_into(logits, temperature, out);
    return out;
}

}  // namespace mtsim
