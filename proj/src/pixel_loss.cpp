#include "sense/pixel_loss.hpp"

#include <cmath>
#include <stdexcept>

namespace sense {

GateMask confidence_gate(const Eigen::Ref<const Matrix>& p_weak, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("confidence_gate: gamma must be in [0,1]");
    GateMask mask;
    mask.gamma = gamma;
    mask.flags.resize(static_cast<std::size_t>(p_weak.rows()));
    for (Index i = 0; i < p_weak.rows(); ++i)
        mask.flags[static_cast<std::size_t>(i)] = p_weak.row(i).maxCoeff() >= gamma ? 1 : 0;
    return mask;
}

PseudoLabelGrid make_pseudo_labels(const TransportPlan& plan, GateMask gate,
                                   const LayoutDescriptor& layout) {
    if (gate.size() != plan.data.rows())
        throw std::invalid_argument("make_pseudo_labels: gate size does not match plan rows");
    if (layout.rows() != plan.data.rows())
        throw std::invalid_argument("make_pseudo_labels: layout does not match plan rows");
    return PseudoLabelGrid{plan_row_normalize(plan), std::move(gate), layout};
}

void LabelGrid::validate(Index k) const {
    if (static_cast<Index>(labels.size()) != layout.rows())
        throw std::invalid_argument("LabelGrid: label count does not match layout");
    for (const int y : labels)
        if (y != ignore_value && (y < 0 || y >= k))
            throw std::invalid_argument("LabelGrid: label out of range");
}

PixelLossResult synthetic_pixel_loss(const PseudoLabelGrid& pl,
                                     const Eigen::Ref<const Matrix>& p_strong,
                                     double prob_floor) {
    const Index n = pl.q.rows(), k = pl.q.cols();
    if (p_strong.rows() != n || p_strong.cols() != k)
        throw std::invalid_argument("synthetic_pixel_loss: prediction shape mismatch");

    PixelLossResult out;
    out.grad = Matrix::Zero(n, k);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) {
        if (!pl.gate.flags[static_cast<std::size_t>(i)]) continue;
        ++out.active_rows;
        for (Index j = 0; j < k; ++j) {
            out.loss -= inv_n * pl.q(i, j) * std::log(std::max(p_strong(i, j), prob_floor));
            out.grad(i, j) = inv_n * (p_strong(i, j) - pl.q(i, j));
        }
    }
    return out;
}

PixelLossResult real_pixel_loss(const LabelGrid& labels, const Eigen::Ref<const Matrix>& p,
                                double prob_floor) {
    const Index n = p.rows(), k = p.cols();
    labels.validate(k);
    if (labels.layout.rows() != n)
        throw std::invalid_argument("real_pixel_loss: prediction shape mismatch");

    PixelLossResult out;
    out.grad = Matrix::Zero(n, k);
    for (Index i = 0; i < n; ++i)
        if (labels.labels[static_cast<std::size_t>(i)] != labels.ignore_value) ++out.active_rows;
    if (out.active_rows == 0) return out;

    const double inv_m = 1.0 / static_cast<double>(out.active_rows);
    for (Index i = 0; i < n; ++i) {
        const int y = labels.labels[static_cast<std::size_t>(i)];
        if (y == labels.ignore_value) continue;
        out.loss -= inv_m * std::log(std::max(p(i, y), prob_floor));
        for (Index j = 0; j < k; ++j) out.grad(i, j) = inv_m * p(i, j);
        out.grad(i, y) -= inv_m;
    }
    return out;
}

}  // namespace sense
