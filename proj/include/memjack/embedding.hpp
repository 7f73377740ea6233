#pragma once

#include <cmath>
#include <vector>

#include "memjack/errors.hpp"

namespace memjack {

// Fixed-length real vector; the dimension is the length of `values` and must
// stay constant within one campaign.
struct EmbeddingVector {
    std::vector<double> values;

    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}
    explicit EmbeddingVector(int dim) : values(static_cast<size_t>(dim), 0.0) {}

    int dim() const { return static_cast<int>(values.size()); }
    double& operator[](size_t i) { return values[i]; }
    double operator[](size_t i) const { return values[i]; }
};

inline void check_dim(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw DimMismatchError("embedding dimension mismatch: " + std::to_string(a.dim()) +
                               " vs " + std::to_string(b.dim()));
}

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    check_dim(a, b);
    double s = 0;
    for (size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

inline double l2_norm(const EmbeddingVector& a) {
    double s = 0;
    for (double v : a.values) s += v * v;
    return std::sqrt(s);
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0 || nb == 0) return 0;
    return dot(a, b) / (na * nb);
}

inline void normalize(EmbeddingVector& a) {
    double n = l2_norm(a);
    if (n == 0) {
        if (!a.values.empty()) a.values[0] = 1.0;
        return;
    }
    for (double& v : a.values) v /= n;
}

}  // namespace memjack
