// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace texthawk {

// Dense row-major f32 tensor. All math in this project runs on f32 with a
// fixed summation order (sequential along the innermost/contracted axis) so
// results are bit-reproducible across runs.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, std::vector<float> d);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, float value);
    static Tensor scalar(float value);
    static Tensor row(std::vector<float> values);
    // 2-D from nested initializer lists
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);
    static Tensor identity(int64_t n);

    int64_t numel() const;
    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    float& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    float& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    float at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    float& at(int64_t i, int64_t j, int64_t k) {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    float at(int64_t i, int64_t j, int64_t k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    Tensor reshaped(std::vector<int64_t> new_shape) const;
};

// Throws std::runtime_error naming `what` if any element is NaN or Inf.
void check_finite(const Tensor& t, const char* what);

bool shapes_equal(const std::vector<int64_t>& a, const std::vector<int64_t>& b);
std::string shape_str(const std::vector<int64_t>& shape);

// Non-differentiating kernels shared by the tape and by frozen modules.
// matmul accumulates sequentially along the inner axis, one output element at
// a time, so it agrees bit-for-bit with a naive triple loop.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// File format: one UTF-8 header line
//   shape=[d0,d1,...] dtype=f32 order=row-major\n
// followed by raw little-endian f32 payload. Round-trips bit-exactly.
void tensor_dump(const Tensor& t, const std::string& path);
Tensor tensor_load(const std::string& path);

}  // namespace texthawk
