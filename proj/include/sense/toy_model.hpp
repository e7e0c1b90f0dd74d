#pragma once

#include "sense/toy_world.hpp"

namespace sense {

// Per-pixel feature dimension: RGB, normalized (x,y), 3x3 box mean and
// standard deviation per channel.
inline constexpr Index kToyFeatureDim = 11;

// Feature rows in LayoutDescriptor order for a single image; the 3x3 window
// statistics use edge replication.
Matrix compute_features(const ToyImage& image);

// Multinomial logistic pixel classifier with an EMA teacher shadow. The
// gradient of the cross-entropy losses with respect to logits chains through
// z = F * weights + bias, so grad_weights = F^T * grad_z.
struct LinearSoftmaxModel {
    Matrix weights;      // kToyFeatureDim x k
    Vector bias;         // k
    Matrix ema_weights;
    Vector ema_bias;

    explicit LinearSoftmaxModel(int k);

    int classes() const { return static_cast<int>(bias.size()); }

    // Row-wise softmax probabilities from student / teacher parameters.
    Matrix predict(const Eigen::Ref<const Matrix>& features) const;
    Matrix predict_teacher(const Eigen::Ref<const Matrix>& features) const;

    void apply_gradient(const Eigen::Ref<const Matrix>& grad_weights,
                        const Vector& grad_bias, double lr);

    // ema <- momentum * ema + (1 - momentum) * param
    void ema_update(double momentum);
};

// lr0 * (1 - step/total)^power, the poly decay schedule.
double poly_lr(double lr0, int step, int total_iters, double power);

}  // namespace sense
