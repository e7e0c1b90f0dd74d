#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace sense {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Maps between the (batch, h, w) pixel grid and flattened row indices.
// Row index is b*H*W + h*W + w: row-major within an image, images
// concatenated in batch order.
struct LayoutDescriptor {
    Index batch = 0;
    Index height = 0;
    Index width = 0;

    Index rows() const { return batch * height * width; }

    Index row_of(Index b, Index h, Index w) const {
        return b * height * width + h * width + w;
    }

    struct Pixel {
        Index b, h, w;
    };

    Pixel pixel_of(Index row) const {
        const Index hw = height * width;
        return Pixel{row / hw, (row % hw) / width, row % width};
    }

    bool operator==(const LayoutDescriptor&) const = default;
};

// Per-pixel class distributions laid out as (batch, classes, height, width).
// Values in [0,1]; each pixel's class vector sums to 1 within `simplex_tol`.
class ProbTensor {
public:
    ProbTensor(Index batch, Index classes, Index height, Index width,
               std::vector<double> data, double simplex_tol = 1e-6)
        : b_(batch), k_(classes), h_(height), w_(width), data_(std::move(data)) {
        if (b_ < 1 || k_ < 2 || h_ < 1 || w_ < 1)
            throw std::invalid_argument("ProbTensor: every dimension must be positive (k >= 2)");
        if (static_cast<Index>(data_.size()) != b_ * k_ * h_ * w_)
            throw std::invalid_argument("ProbTensor: data size does not match shape");
        validate(simplex_tol);
    }

    Index batch() const { return b_; }
    Index classes() const { return k_; }
    Index height() const { return h_; }
    Index width() const { return w_; }

    double at(Index b, Index j, Index h, Index w) const {
        return data_[((b * k_ + j) * h_ + h) * w_ + w];
    }

    const std::vector<double>& data() const { return data_; }

    LayoutDescriptor layout() const { return LayoutDescriptor{b_, h_, w_}; }

private:
    void validate(double tol) const {
        for (Index b = 0; b < b_; ++b)
            for (Index h = 0; h < h_; ++h)
                for (Index w = 0; w < w_; ++w) {
                    double sum = 0.0;
                    for (Index j = 0; j < k_; ++j) {
                        const double v = at(b, j, h, w);
                        if (!(v >= 0.0 && v <= 1.0))
                            throw std::invalid_argument("ProbTensor: value outside [0,1]");
                        sum += v;
                    }
                    if (std::abs(sum - 1.0) > tol)
                        throw std::invalid_argument("ProbTensor: pixel distribution does not sum to 1");
                }
    }

    Index b_, k_, h_, w_;
    std::vector<double> data_;
};

// Flattens a probability tensor to the n x k matrix used by the transport
// solver, n = b*H*W. Rows follow LayoutDescriptor::row_of.
inline std::pair<Matrix, LayoutDescriptor> flatten_predictions(const ProbTensor& p) {
    const LayoutDescriptor layout = p.layout();
    Matrix out(layout.rows(), p.classes());
    for (Index b = 0; b < p.batch(); ++b)
        for (Index h = 0; h < p.height(); ++h)
            for (Index w = 0; w < p.width(); ++w) {
                const Index row = layout.row_of(b, h, w);
                for (Index j = 0; j < p.classes(); ++j) out(row, j) = p.at(b, j, h, w);
            }
    return {std::move(out), layout};
}

inline ProbTensor unflatten(const Eigen::Ref<const Matrix>& rows, const LayoutDescriptor& layout,
                            double simplex_tol = 1e-6) {
    if (rows.rows() != layout.rows())
        throw std::invalid_argument("unflatten: row count does not match layout");
    const Index k = rows.cols();
    std::vector<double> data(static_cast<std::size_t>(layout.rows() * k));
    for (Index b = 0; b < layout.batch; ++b)
        for (Index h = 0; h < layout.height; ++h)
            for (Index w = 0; w < layout.width; ++w) {
                const Index row = layout.row_of(b, h, w);
                for (Index j = 0; j < k; ++j)
                    data[((b * k + j) * layout.height + h) * layout.width + w] = rows(row, j);
            }
    return ProbTensor(layout.batch, k, layout.height, layout.width, std::move(data), simplex_tol);
}

}  // namespace sense
