#include "valent/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace valent {

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, ErrorKind::shape,
            "matmul: inner dimensions differ (" + std::to_string(a.cols) +
                " vs " + std::to_string(b.rows) + ")");
    Matrix out(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < a.cols; ++k) {
                acc += static_cast<double>(a.at(i, k)) * static_cast<double>(b.at(k, j));
            }
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

Vector matvec_left(const Vector& v, const Matrix& m) {
    require(v.size() == m.rows, ErrorKind::shape,
            "matvec_left: vector dim " + std::to_string(v.size()) +
                " vs matrix rows " + std::to_string(m.rows));
    Vector out(m.cols, 0.0f);
    std::vector<double> acc(m.cols, 0.0);
    for (size_t k = 0; k < m.rows; ++k) {
        double vk = v[k];
        const float* row = m.data.data() + k * m.cols;
        for (size_t j = 0; j < m.cols; ++j) acc[j] += vk * row[j];
    }
    for (size_t j = 0; j < m.cols; ++j) out[j] = static_cast<float>(acc[j]);
    return out;
}

void softmax_row(std::span<float> row) {
    float mx = kMasked;
    for (float x : row) mx = std::max(mx, x);
    require(mx != kMasked, ErrorKind::input, "empty attention row");
    double denom = 0.0;
    for (float x : row) {
        if (x != kMasked) denom += std::exp(static_cast<double>(x) - mx);
    }
    for (float& x : row) {
        x = (x == kMasked) ? 0.0f
                           : static_cast<float>(std::exp(static_cast<double>(x) - mx) / denom);
    }
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out = m;
    for (size_t r = 0; r < out.rows; ++r) softmax_row(out.row(r));
    return out;
}

Vector rms_norm(const Vector& v, const Vector& gain, float eps) {
    require(v.size() == gain.size(), ErrorKind::shape, "rms_norm: dim mismatch");
    double ms = 0.0;
    for (float x : v) ms += static_cast<double>(x) * x;
    ms /= static_cast<double>(v.size());
    double inv = 1.0 / std::sqrt(ms + eps);
    Vector out(v.size());
    for (size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(v[i]) * inv * gain[i]);
    return out;
}

Vector layer_norm(const Vector& v, const Vector& gain, float eps) {
    require(v.size() == gain.size(), ErrorKind::shape, "layer_norm: dim mismatch");
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (float x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    double inv = 1.0 / std::sqrt(var + eps);
    Vector out(v.size());
    for (size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>((v[i] - mean) * inv * gain[i]);
    return out;
}

void rope_apply_row(std::span<float> row, size_t position, float theta_base) {
    require(row.size() % 2 == 0, ErrorKind::config, "rope: head dimension must be even");
    size_t half = row.size() / 2;
    for (size_t i = 0; i < half; ++i) {
        double freq = std::pow(static_cast<double>(theta_base),
                               -2.0 * static_cast<double>(i) / static_cast<double>(row.size()));
        double angle = static_cast<double>(position) * freq;
        double c = std::cos(angle), s = std::sin(angle);
        double x0 = row[2 * i], x1 = row[2 * i + 1];
        row[2 * i] = static_cast<float>(x0 * c - x1 * s);
        row[2 * i + 1] = static_cast<float>(x0 * s + x1 * c);
    }
}

Matrix rope_apply(const Matrix& q_or_k, size_t position, float theta_base) {
    Matrix out = q_or_k;
    for (size_t r = 0; r < out.rows; ++r) rope_apply_row(out.row(r), position, theta_base);
    return out;
}

float cosine(const Vector& a, const Vector& b, bool* zero_flag) {
    require(a.size() == b.size(), ErrorKind::shape, "cosine: dim mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        if (zero_flag) *zero_flag = true;
        return 0.0f;
    }
    if (zero_flag) *zero_flag = false;
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return static_cast<float>(std::clamp(c, -1.0, 1.0));
}

std::vector<size_t> stable_rank_desc(std::span<const float> scores) {
    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    return idx;
}

float gelu(float x) {
    // exact (erf-based) GeLU
    double xd = x;
    return static_cast<float>(0.5 * xd * (1.0 + std::erf(xd / std::sqrt(2.0))));
}

float silu(float x) {
    double xd = x;
    return static_cast<float>(xd / (1.0 + std::exp(-xd)));
}

} // namespace valent
