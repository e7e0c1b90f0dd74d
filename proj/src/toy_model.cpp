#include "sense/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sense {

namespace {

Matrix softmax_rows(Matrix z) {
    for (Index i = 0; i < z.rows(); ++i) {
        z.row(i).array() -= z.row(i).maxCoeff();
        z.row(i) = z.row(i).array().exp();
        z.row(i) /= z.row(i).sum();
    }
    return z;
}

Matrix box_stat(const Matrix& m, bool want_std) {
    const Index h = m.rows(), w = m.cols();
    Matrix out(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            double s = 0.0, s2 = 0.0;
            for (Index dy = -1; dy <= 1; ++dy)
                for (Index dx = -1; dx <= 1; ++dx) {
                    const Index yy = std::clamp<Index>(y + dy, 0, h - 1);
                    const Index xx = std::clamp<Index>(x + dx, 0, w - 1);
                    const double v = m(yy, xx);
                    s += v;
                    s2 += v * v;
                }
            const double mean = s / 9.0;
            out(y, x) = want_std ? std::sqrt(std::max(s2 / 9.0 - mean * mean, 0.0)) : mean;
        }
    return out;
}

}  // namespace

Matrix compute_features(const ToyImage& image) {
    const Index h = image.height, w = image.width;
    if (h < 2 || w < 2) throw std::invalid_argument("compute_features: image too small");
    Matrix f(h * w, kToyFeatureDim);
    const Matrix mr = box_stat(image.r, false), mg = box_stat(image.g, false),
                 mb = box_stat(image.b, false);
    const Matrix sr = box_stat(image.r, true), sg = box_stat(image.g, true),
                 sb = box_stat(image.b, true);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const Index row = y * w + x;
            f(row, 0) = image.r(y, x);
            f(row, 1) = image.g(y, x);
            f(row, 2) = image.b(y, x);
            f(row, 3) = double(x) / double(w - 1);
            f(row, 4) = double(y) / double(h - 1);
            f(row, 5) = mr(y, x);
            f(row, 6) = mg(y, x);
            f(row, 7) = mb(y, x);
            f(row, 8) = sr(y, x);
            f(row, 9) = sg(y, x);
            f(row, 10) = sb(y, x);
        }
    return f;
}

LinearSoftmaxModel::LinearSoftmaxModel(int k) {
    if (k < 2) throw std::invalid_argument("LinearSoftmaxModel: k must be >= 2");
    weights = Matrix::Zero(kToyFeatureDim, k);
    bias = Vector::Zero(k);
    ema_weights = weights;
    ema_bias = bias;
}

Matrix LinearSoftmaxModel::predict(const Eigen::Ref<const Matrix>& features) const {
    return softmax_rows((features * weights).rowwise() + bias.transpose());
}

Matrix LinearSoftmaxModel::predict_teacher(const Eigen::Ref<const Matrix>& features) const {
    return softmax_rows((features * ema_weights).rowwise() + ema_bias.transpose());
}

void LinearSoftmaxModel::apply_gradient(const Eigen::Ref<const Matrix>& grad_weights,
                                        const Vector& grad_bias, double lr) {
    weights -= lr * grad_weights;
    bias -= lr * grad_bias;
}

void LinearSoftmaxModel::ema_update(double momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw std::invalid_argument("ema_update: momentum must be in [0,1)");
    ema_weights = momentum * ema_weights + (1.0 - momentum) * weights;
    ema_bias = momentum * ema_bias + (1.0 - momentum) * bias;
}

double poly_lr(double lr0, int step, int total_iters, double power) {
    if (total_iters < 1) throw std::invalid_argument("poly_lr: total_iters must be >= 1");
    const double frac = std::clamp(double(step) / double(total_iters), 0.0, 1.0);
    return lr0 * std::pow(1.0 - frac, power);
}

}  // namespace sense
