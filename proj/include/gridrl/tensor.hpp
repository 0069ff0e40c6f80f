#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "gridrl/errors.hpp"

namespace gridrl {

// Flat row-major buffer of 64-bit reals with an explicit shape.
// 1-D buffers are vectors, 2-D buffers are matrices (rows = samples).
struct TensorBuffer {
    std::vector<size_t> shape;
    std::vector<double> values;

    TensorBuffer() = default;

    explicit TensorBuffer(std::vector<size_t> s) : shape(std::move(s)) {
        values.assign(element_count(shape), 0.0);
    }

    TensorBuffer(std::vector<size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (values.size() != element_count(shape)) {
            throw UsageError("TensorBuffer: shape does not match value count");
        }
    }

    static TensorBuffer vector(std::vector<double> v) {
        size_t n = v.size();
        return TensorBuffer({n}, std::move(v));
    }

    static TensorBuffer matrix(size_t rows, size_t cols) { return TensorBuffer({rows, cols}); }

    static size_t element_count(const std::vector<size_t>& shape) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    size_t size() const { return values.size(); }
    size_t rows() const { return shape.size() == 2 ? shape[0] : (shape.empty() ? 0 : 1); }
    size_t cols() const { return shape.size() == 2 ? shape[1] : size(); }

    double* row(size_t r) { return values.data() + r * cols(); }
    const double* row(size_t r) const { return values.data() + r * cols(); }

    double& at(size_t r, size_t c) { return values[r * cols() + c]; }
    double at(size_t r, size_t c) const { return values[r * cols() + c]; }

    std::span<double> span() { return {values.data(), values.size()}; }
    std::span<const double> span() const { return {values.data(), values.size()}; }

    void fill(double v) { std::fill(values.begin(), values.end(), v); }
};

// Batch of sparse binary rows: every listed index holds the value 1.0, all
// other entries are 0.0. Rows may have different support sizes.
struct OneHotBatch {
    size_t dim = 0;
    std::vector<std::vector<uint32_t>> rows;

    size_t batch() const { return rows.size(); }

    void to_dense(TensorBuffer& out) const {
        out = TensorBuffer::matrix(batch(), dim);
        for (size_t b = 0; b < rows.size(); ++b) {
            double* r = out.row(b);
            for (uint32_t i : rows[b]) r[i] = 1.0;
        }
    }
};

}  // namespace gridrl
