#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "valent/errors.hpp"

namespace valent {

// Row-major f32 matrix. Accumulation happens in double inside the kernels;
// storage stays f32 so traces and archives remain small.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float& at(size_t r, size_t c) { return data[r * cols + c]; }
    float at(size_t r, size_t c) const { return data[r * cols + c]; }
    std::span<const float> row(size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<float> row(size_t r) { return {data.data() + r * cols, cols}; }
};

using Vector = std::vector<float>;

// Sentinel marking a masked attention entry on input to softmax_rows.
inline constexpr float kMasked = -std::numeric_limits<float>::infinity();

Matrix matmul(const Matrix& a, const Matrix& b);

// vec (1 x n) * m (n x k) -> k, double accumulation.
Vector matvec_left(const Vector& v, const Matrix& m);

// Row-wise softmax with per-row max subtraction. Entries equal to kMasked
// map to exactly 0. A fully masked row is an error.
Matrix softmax_rows(const Matrix& m);

// In-place variant over a single row buffer.
void softmax_row(std::span<float> row);

Vector rms_norm(const Vector& v, const Vector& gain, float eps);

// Mean-subtracting LayerNorm (no bias), for configs that ask for it.
Vector layer_norm(const Vector& v, const Vector& gain, float eps);

// Rotary position embedding applied to each row (one row = one head's
// q or k vector). Pairs (2i, 2i+1) rotate by position * theta^{-2i/d}.
Matrix rope_apply(const Matrix& q_or_k, size_t position, float theta_base);
void rope_apply_row(std::span<float> row, size_t position, float theta_base);

// Cosine similarity clamped to [-1, 1]. A zero vector on either side
// yields 0; *zero_flag (if non-null) is set in that case.
float cosine(const Vector& a, const Vector& b, bool* zero_flag = nullptr);

// Indices sorted by descending score, ties by ascending index.
std::vector<size_t> stable_rank_desc(std::span<const float> scores);

float gelu(float x);
float silu(float x);

} // namespace valent
