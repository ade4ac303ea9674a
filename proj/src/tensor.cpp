// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace texthawk {

Tensor::Tensor(std::vector<int64_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (numel() != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(data.size()) + " values");
    }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::vector<float> values) {
    int64_t n = static_cast<int64_t>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
    int64_t r = static_cast<int64_t>(rows.size());
    int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    std::vector<float> d;
    d.reserve(static_cast<size_t>(r * c));
    for (const auto& row : rows) {
        if (static_cast<int64_t>(row.size()) != c) {
            throw std::invalid_argument("tensor: ragged matrix literal");
        }
        d.insert(d.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(d));
}

Tensor Tensor::identity(int64_t n) {
    Tensor t = zeros({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
    return t;
}

int64_t Tensor::numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    Tensor t = *this;
    int64_t n = 1;
    for (int64_t d : new_shape) n *= d;
    if (n != numel()) {
        throw std::invalid_argument("tensor: reshape " + shape_str(shape) + " -> " +
                                    shape_str(new_shape));
    }
    t.shape = std::move(new_shape);
    return t;
}

void check_finite(const Tensor& t, const char* what) {
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("non-finite value in ") + what);
        }
    }
}

bool shapes_equal(const std::vector<int64_t>& a, const std::vector<int64_t>& b) { return a == b; }

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape) + " x " +
                                    shape_str(b.shape));
    }
    const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c = Tensor::zeros({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            float acc = 0.0f;  // sequential accumulation along the inner axis
            for (int64_t t = 0; t < k; ++t) acc += a.at(i, t) * b.at(t, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
    Tensor t = Tensor::zeros({a.shape[1], a.shape[0]});
    for (int64_t i = 0; i < a.shape[0]; ++i)
        for (int64_t j = 0; j < a.shape[1]; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

void tensor_dump(const Tensor& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("tensor_dump: cannot open " + path);
    f << "shape=" << shape_str(t.shape) << " dtype=f32 order=row-major\n";
    static_assert(sizeof(float) == 4);
    // assumes little-endian host, as do all supported platforms
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 4));
    if (!f) throw std::runtime_error("tensor_dump: write failed for " + path);
}

Tensor tensor_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("tensor_load: cannot open " + path);
    std::string header;
    std::getline(f, header);
    const std::string prefix = "shape=[";
    const std::string suffix = "] dtype=f32 order=row-major";
    if (header.rfind(prefix, 0) != 0 || header.size() < prefix.size() + suffix.size() ||
        header.compare(header.size() - suffix.size(), suffix.size(), suffix) != 0) {
        throw std::runtime_error("tensor_load: bad header in " + path);
    }
    std::string dims = header.substr(prefix.size(), header.size() - prefix.size() - suffix.size());
    std::vector<int64_t> shape;
    std::stringstream ss(dims);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) shape.push_back(std::stoll(tok));
    }
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    std::vector<float> data(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
    if (f.gcount() != static_cast<std::streamsize>(data.size() * 4)) {
        throw std::runtime_error("tensor_load: truncated payload in " + path);
    }
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace texthawk
