#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "extra/errors.hpp"

namespace extra {

// Dense row-major matrix of feature rows.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }

    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool operator==(const FeatureMatrix&) const = default;
};

// Labeled source-domain sample: feature rows plus binary utility labels.
struct LabeledDataset {
    FeatureMatrix x;
    std::vector<std::uint8_t> u;

    std::size_t size() const { return x.rows; }
    std::size_t dim() const { return x.cols; }

    void validate() const {
        if (x.rows == 0) throw ShapeError("labeled dataset is empty");
        if (u.size() != x.rows) throw ShapeError("label count does not match feature rows");
        for (auto v : u) {
            if (v > 1) throw DomainError("labels must be 0 or 1");
        }
        if (!x.all_finite()) throw DomainError("non-finite feature value in labeled dataset");
    }

    bool operator==(const LabeledDataset&) const = default;
};

// Unlabeled target-domain sample.
struct UnlabeledDataset {
    FeatureMatrix x;

    std::size_t size() const { return x.rows; }
    std::size_t dim() const { return x.cols; }

    void validate() const {
        if (x.rows == 0) throw ShapeError("unlabeled dataset is empty");
        if (!x.all_finite()) throw DomainError("non-finite feature value in unlabeled dataset");
    }

    bool operator==(const UnlabeledDataset&) const = default;
};

}  // namespace extra
