#pragma once

#include <vector>

#include "sense/layout.hpp"
#include "sense/transport.hpp"

namespace sense {

inline constexpr int kIgnoreLabel = 255;

// Per-row confidence gate: flags[i] = (max_j p_weak(i,j) >= gamma).
struct GateMask {
    std::vector<char> flags;
    double gamma = 0.95;

    Index size() const { return static_cast<Index>(flags.size()); }

    double fraction() const {
        if (flags.empty()) return 0.0;
        double s = 0.0;
        for (const char f : flags) s += f ? 1.0 : 0.0;
        return s / static_cast<double>(flags.size());
    }
};

GateMask confidence_gate(const Eigen::Ref<const Matrix>& p_weak, double gamma);

// Row-normalized transport plan plus the gate that masks the loss.
struct PseudoLabelGrid {
    Matrix q;
    GateMask gate;
    LayoutDescriptor layout;
};

PseudoLabelGrid make_pseudo_labels(const TransportPlan& plan, GateMask gate,
                                   const LayoutDescriptor& layout);

// Integer label map over (b,H,W), flattened in LayoutDescriptor row order.
// Values are class indices < k or kIgnoreLabel.
struct LabelGrid {
    std::vector<int> labels;
    LayoutDescriptor layout;
    int ignore_value = kIgnoreLabel;

    void validate(Index k) const;
};

// Loss value plus gradient with respect to prediction logits under a softmax
// parameterization. `active_rows` counts the rows that contributed (gated-in
// or non-ignored); callers log it.
struct PixelLossResult {
    double loss = 0.0;
    Matrix grad;
    Index active_rows = 0;
};

// Confidence-gated cross-entropy against the pseudo-label rows, averaged over
// all n rows (gated-out rows contribute zero loss and gradient):
//   loss = -(1/n) sum_{i gated} sum_j q(i,j) log max(p_strong(i,j), floor)
//   grad(i,.) = (1/n) gate_i (p_strong(i,.) - q(i,.))
PixelLossResult synthetic_pixel_loss(const PseudoLabelGrid& pl,
                                     const Eigen::Ref<const Matrix>& p_strong,
                                     double prob_floor = 1e-12);

// Mean cross-entropy over non-ignored pixels; all-ignored inputs yield zero
// loss and gradient.
PixelLossResult real_pixel_loss(const LabelGrid& labels, const Eigen::Ref<const Matrix>& p,
                                double prob_floor = 1e-12);

inline double total_pixel_loss(double loss_synthetic, double loss_real) {
    return 0.5 * (loss_synthetic + loss_real);
}

}  // namespace sense
