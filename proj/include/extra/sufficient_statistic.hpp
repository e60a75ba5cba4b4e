#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "extra/errors.hpp"
#include "extra/types.hpp"

namespace extra {

// Declared feature map T through which the tilt acts. Three fixed forms:
// identity, coordinate subset, and affine (A*x + c). The map is pure and its
// output length is constant across inputs.
class SufficientStatistic {
public:
    enum class Kind { identity, subset, affine };

    // default is the 1-dimensional identity map
    SufficientStatistic() = default;

    static SufficientStatistic identity(std::size_t dim) {
        if (dim == 0) throw ShapeError("statistic needs a positive input dimension");
        SufficientStatistic s;
        s.kind_ = Kind::identity;
        s.input_dim_ = dim;
        s.output_dim_ = dim;
        return s;
    }

    static SufficientStatistic subset(std::size_t dim, std::vector<std::size_t> indices) {
        if (indices.empty()) throw ShapeError("subset statistic needs at least one index");
        for (auto i : indices) {
            if (i >= dim) throw ShapeError("subset statistic index out of range");
        }
        SufficientStatistic s;
        s.kind_ = Kind::subset;
        s.input_dim_ = dim;
        s.output_dim_ = indices.size();
        s.indices_ = std::move(indices);
        return s;
    }

    static SufficientStatistic affine(FeatureMatrix a, std::vector<double> c) {
        if (a.rows == 0 || a.cols == 0) throw ShapeError("affine statistic needs a nonempty matrix");
        if (c.size() != a.rows) throw ShapeError("affine offset length must match matrix rows");
        if (!a.all_finite()) throw DomainError("non-finite entry in affine statistic matrix");
        SufficientStatistic s;
        s.kind_ = Kind::affine;
        s.input_dim_ = a.cols;
        s.output_dim_ = a.rows;
        s.a_ = std::move(a);
        s.c_ = std::move(c);
        return s;
    }

    Kind kind() const { return kind_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    const std::vector<std::size_t>& indices() const { return indices_; }
    const FeatureMatrix& matrix() const { return a_; }
    const std::vector<double>& offset() const { return c_; }

    // Writes T(x) into out; out must have length output_dim().
    void apply(std::span<const double> x, std::span<double> out) const {
        if (x.size() != input_dim_) throw ShapeError("statistic input dimension mismatch");
        if (out.size() != output_dim_) throw ShapeError("statistic output length mismatch");
        switch (kind_) {
            case Kind::identity:
                for (std::size_t i = 0; i < output_dim_; ++i) out[i] = x[i];
                break;
            case Kind::subset:
                for (std::size_t i = 0; i < output_dim_; ++i) out[i] = x[indices_[i]];
                break;
            case Kind::affine:
                for (std::size_t i = 0; i < output_dim_; ++i) {
                    double s = c_[i];
                    for (std::size_t j = 0; j < input_dim_; ++j) s += a_(i, j) * x[j];
                    out[i] = s;
                }
                break;
        }
    }

    std::vector<double> operator()(std::span<const double> x) const {
        std::vector<double> out(output_dim_);
        apply(x, out);
        return out;
    }

private:
    Kind kind_ = Kind::identity;
    std::size_t input_dim_ = 1;
    std::size_t output_dim_ = 1;
    std::vector<std::size_t> indices_;
    FeatureMatrix a_;
    std::vector<double> c_;
};

inline std::vector<double> eval_sufficient_statistic(const SufficientStatistic& spec,
                                                     std::span<const double> x) {
    return spec(x);
}

}  // namespace extra
