#include <cmath>
#include <stdexcept>
#include <vector>

#include "sense/query_loss.hpp"

namespace sense {
namespace {

constexpr double kDiceEps = 1e-6;

void check_finite_weights(const MaskLossWeights& w) {
    const double vals[] = {w.lambda_ce, w.lambda_dice, w.lambda_cls_obj, w.lambda_cls_noobj};
    for (double x : vals) {
        if (!std::isfinite(x) || x < 0.0) {
            throw std::invalid_argument("MaskLossWeights: weights must be finite and >= 0");
        }
    }
}

double clamped_log(double x, double floor) { return std::log(std::max(x, floor)); }

// Argmax over all k+1 columns, lowest index on ties.
Index target_class(const Matrix& scores, Index q) {
    Index c = 0;
    scores.row(q).maxCoeff(&c);
    return c;
}

double bce_value(const Eigen::Ref<const Matrix>& m, const Eigen::Ref<const Matrix>& t,
                 double floor) {
    const Index count = m.size();
    double acc = 0.0;
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            acc -= t(r, c) * clamped_log(m(r, c), floor) +
                   (1.0 - t(r, c)) * clamped_log(1.0 - m(r, c), floor);
        }
    }
    return acc / static_cast<double>(count);
}

double dice_value(const Eigen::Ref<const Matrix>& m, const Eigen::Ref<const Matrix>& t) {
    const double inter = m.cwiseProduct(t).sum();
    const double denom = m.sum() + t.sum() + kDiceEps;
    return 1.0 - 2.0 * inter / denom;
}

// Matching cost of prediction p against a target with class c and mask tm.
// The class term reuses the branch's loss weight; mask terms apply to object
// targets only.
double pair_cost(const QuerySet& pred, Index p, Index c, const Matrix* tm,
                 const MaskLossWeights& w, double floor) {
    const bool is_object = c != pred.phi();
    const double lambda_cls = is_object ? w.lambda_cls_obj : w.lambda_cls_noobj;
    double cost = -lambda_cls * clamped_log(pred.scores(p, c), floor);
    if (is_object && tm != nullptr) {
        if (w.lambda_ce > 0.0) cost += w.lambda_ce * bce_value(pred.masks[p], *tm, floor);
        if (w.lambda_dice > 0.0) cost += w.lambda_dice * dice_value(pred.masks[p], *tm);
    }
    return cost;
}

void check_mask_shapes(const QuerySet& z) {
    if (z.masks.size() != static_cast<size_t>(z.num_queries())) {
        throw std::invalid_argument("QuerySet: one mask per query required");
    }
    for (const Matrix& m : z.masks) {
        if (m.rows() != z.masks[0].rows() || m.cols() != z.masks[0].cols()) {
            throw std::invalid_argument("QuerySet: masks must share one shape");
        }
    }
}

}  // namespace

void QuerySet::validate(double simplex_tol) const {
    if (num_queries() < 1) throw std::invalid_argument("QuerySet: need at least one query");
    if (scores.cols() < 2) throw std::invalid_argument("QuerySet: need at least one object class");
    check_mask_shapes(*this);
    if (masks[0].size() < 1) throw std::invalid_argument("QuerySet: masks must be non-empty");
    for (Index q = 0; q < num_queries(); ++q) {
        double total = 0.0;
        for (Index j = 0; j < scores.cols(); ++j) {
            const double s = scores(q, j);
            if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
                throw std::invalid_argument("QuerySet: scores must lie in [0,1]");
            }
            total += s;
        }
        if (std::abs(total - 1.0) > simplex_tol) {
            throw std::invalid_argument("QuerySet: score rows must sum to 1");
        }
        const Matrix& m = masks[static_cast<size_t>(q)];
        if (!m.allFinite() || m.minCoeff() < 0.0 || m.maxCoeff() > 1.0) {
            throw std::invalid_argument("QuerySet: mask values must lie in [0,1]");
        }
    }
}

void MaskLossWeights::validate() const { check_finite_weights(*this); }

std::vector<Matrix> aggregate_semantics(const QuerySet& z) {
    z.validate();
    const Index k = z.num_classes();
    std::vector<Matrix> out(static_cast<size_t>(k),
                            Matrix::Zero(z.masks[0].rows(), z.masks[0].cols()));
    for (Index q = 0; q < z.num_queries(); ++q) {
        for (Index j = 0; j < k; ++j) {
            out[static_cast<size_t>(j)] += z.scores(q, j) * z.masks[static_cast<size_t>(q)];
        }
    }
    return out;
}

ProbTensor normalize_semantics(const std::vector<Matrix>& raw) {
    const Index k = static_cast<Index>(raw.size());
    if (k < 2) throw std::invalid_argument("normalize_semantics: need at least two classes");
    const Index h = raw[0].rows();
    const Index w = raw[0].cols();
    for (const Matrix& plane : raw) {
        if (plane.rows() != h || plane.cols() != w) {
            throw std::invalid_argument("normalize_semantics: planes must share one shape");
        }
    }
    std::vector<double> data(static_cast<size_t>(k * h * w), 0.0);
    const double uniform = 1.0 / static_cast<double>(k);
    for (Index r = 0; r < h; ++r) {
        for (Index c = 0; c < w; ++c) {
            double total = 0.0;
            for (Index j = 0; j < k; ++j) total += raw[static_cast<size_t>(j)](r, c);
            for (Index j = 0; j < k; ++j) {
                const double val =
                    total > 0.0 ? raw[static_cast<size_t>(j)](r, c) / total : uniform;
                data[static_cast<size_t>((j * h + r) * w + c)] = val;
            }
        }
    }
    return ProbTensor(1, k, h, w, std::move(data));
}

QuerySet derive_pseudo_pairs(const QuerySet& teacher, const Eigen::Ref<const Matrix>& plan_q,
                             const LayoutDescriptor& layout, double binarize_tau) {
    teacher.validate();
    if (binarize_tau <= 0.0 || binarize_tau >= 1.0) {
        throw std::invalid_argument("derive_pseudo_pairs: tau must lie in (0,1)");
    }
    const Index k = teacher.num_classes();
    if (plan_q.cols() != k) {
        throw std::invalid_argument("derive_pseudo_pairs: plan class count mismatch");
    }
    if (layout.rows() != plan_q.rows()) {
        throw std::invalid_argument("derive_pseudo_pairs: plan row count mismatch");
    }
    const Index h = teacher.masks[0].rows();
    const Index w = teacher.masks[0].cols();
    if (layout.batch != 1 || layout.height != h || layout.width != w) {
        throw std::invalid_argument("derive_pseudo_pairs: layout does not match masks");
    }

    QuerySet out;
    out.scores = teacher.scores;
    out.masks = teacher.masks;
    for (Index q = 0; q < teacher.num_queries(); ++q) {
        const Matrix& soft = teacher.masks[static_cast<size_t>(q)];
        Matrix hard = (soft.array() >= binarize_tau).cast<double>();
        if (hard.sum() <= 0.0) continue;  // empty mask keeps the teacher pair

        Vector mass = Vector::Zero(k);
        for (Index r = 0; r < h; ++r) {
            for (Index c = 0; c < w; ++c) {
                if (hard(r, c) > 0.0) mass += plan_q.row(layout.row_of(0, r, c)).transpose();
            }
        }
        const double total = mass.sum();
        const double phi_mass = teacher.scores(q, teacher.phi());
        out.scores.row(q).head(k) = (mass / total).transpose() * (1.0 - phi_mass);
        out.scores(q, teacher.phi()) = phi_mass;
        out.masks[static_cast<size_t>(q)] = std::move(hard);
    }
    return out;
}

Vector per_query_confidence(const QuerySet& teacher, const Eigen::Ref<const Matrix>& plan_q,
                            const LayoutDescriptor& layout, double binarize_tau) {
    teacher.validate();
    if (layout.rows() != plan_q.rows()) {
        throw std::invalid_argument("per_query_confidence: plan row count mismatch");
    }
    const Index h = teacher.masks[0].rows();
    const Index w = teacher.masks[0].cols();
    if (layout.batch != 1 || layout.height != h || layout.width != w) {
        throw std::invalid_argument("per_query_confidence: layout does not match masks");
    }

    Vector conf = Vector::Zero(teacher.num_queries());
    for (Index q = 0; q < teacher.num_queries(); ++q) {
        const Matrix& soft = teacher.masks[static_cast<size_t>(q)];
        double acc = 0.0;
        Index count = 0;
        for (Index r = 0; r < h; ++r) {
            for (Index c = 0; c < w; ++c) {
                if (soft(r, c) < binarize_tau) continue;
                acc += plan_q.row(layout.row_of(0, r, c)).maxCoeff();
                ++count;
            }
        }
        conf(q) = count > 0 ? acc / static_cast<double>(count) : 0.0;
    }
    return conf;
}

MatchResult hungarian_match(const QuerySet& pred, const QuerySet& target,
                            const MaskLossWeights& weights) {
    pred.validate();
    target.validate();
    weights.validate();
    if (pred.scores.cols() != target.scores.cols()) {
        throw std::invalid_argument("hungarian_match: class count mismatch");
    }
    if (pred.masks[0].rows() != target.masks[0].rows() ||
        pred.masks[0].cols() != target.masks[0].cols()) {
        throw std::invalid_argument("hungarian_match: mask shape mismatch");
    }
    if (target.num_queries() > pred.num_queries()) {
        throw std::invalid_argument("hungarian_match: more targets than predictions");
    }

    const double floor = 1e-12;
    Matrix cost(target.num_queries(), pred.num_queries());
    for (Index t = 0; t < target.num_queries(); ++t) {
        const Index c = target_class(target.scores, t);
        const Matrix& tm = target.masks[static_cast<size_t>(t)];
        for (Index p = 0; p < pred.num_queries(); ++p) {
            cost(t, p) = pair_cost(pred, p, c, &tm, weights, floor);
        }
    }
    MatchResult result;
    result.total_cost = lex_min_assignment(cost, result.assignment);
    return result;
}

MatchResult hungarian_match(const QuerySet& pred, const std::vector<GtPair>& targets,
                            const MaskLossWeights& weights) {
    pred.validate();
    weights.validate();
    if (targets.empty()) return MatchResult{};
    if (static_cast<Index>(targets.size()) > pred.num_queries()) {
        throw std::invalid_argument("hungarian_match: more targets than predictions");
    }
    for (const GtPair& gt : targets) {
        if (gt.class_id < 0 || gt.class_id >= pred.num_classes()) {
            throw std::invalid_argument("hungarian_match: class id out of range");
        }
        if (gt.mask.rows() != pred.masks[0].rows() || gt.mask.cols() != pred.masks[0].cols()) {
            throw std::invalid_argument("hungarian_match: mask shape mismatch");
        }
    }

    const double floor = 1e-12;
    Matrix cost(static_cast<Index>(targets.size()), pred.num_queries());
    for (Index t = 0; t < cost.rows(); ++t) {
        const GtPair& gt = targets[static_cast<size_t>(t)];
        for (Index p = 0; p < pred.num_queries(); ++p) {
            cost(t, p) = pair_cost(pred, p, gt.class_id, &gt.mask, weights, floor);
        }
    }
    MatchResult result;
    result.total_cost = lex_min_assignment(cost, result.assignment);
    return result;
}

MaskLossResult mask_loss(const Eigen::Ref<const Matrix>& m_pred,
                         const Eigen::Ref<const Matrix>& m_target, const MaskLossWeights& weights,
                         double prob_floor) {
    weights.validate();
    if (m_pred.rows() != m_target.rows() || m_pred.cols() != m_target.cols()) {
        throw std::invalid_argument("mask_loss: shape mismatch");
    }
    if (m_pred.size() < 1) throw std::invalid_argument("mask_loss: empty mask");

    const double inv_count = 1.0 / static_cast<double>(m_pred.size());
    const double inter = m_pred.cwiseProduct(m_target).sum();
    const double denom = m_pred.sum() + m_target.sum() + kDiceEps;

    MaskLossResult result;
    result.loss = 0.0;
    if (weights.lambda_ce > 0.0) {
        result.loss += weights.lambda_ce * bce_value(m_pred, m_target, prob_floor);
    }
    if (weights.lambda_dice > 0.0) {
        result.loss += weights.lambda_dice * (1.0 - 2.0 * inter / denom);
    }

    // Gradient w.r.t. mask logits: chain d/dm through dm/dz = m(1-m).
    result.grad = Matrix::Zero(m_pred.rows(), m_pred.cols());
    for (Index r = 0; r < m_pred.rows(); ++r) {
        for (Index c = 0; c < m_pred.cols(); ++c) {
            const double m = m_pred(r, c);
            const double t = m_target(r, c);
            double dm = 0.0;
            if (weights.lambda_ce > 0.0) {
                dm += weights.lambda_ce * inv_count *
                      (-t / std::max(m, prob_floor) + (1.0 - t) / std::max(1.0 - m, prob_floor));
            }
            if (weights.lambda_dice > 0.0) {
                dm += weights.lambda_dice * 2.0 * (inter - t * denom) / (denom * denom);
            }
            result.grad(r, c) = dm * m * (1.0 - m);
        }
    }
    return result;
}

QueryLossResult synthetic_query_loss(const QuerySet& pred_strong, const QuerySet& pseudo,
                                     const MatchResult& match, const QueryGates& gates,
                                     const MaskLossWeights& weights, double prob_floor) {
    pred_strong.validate();
    pseudo.validate();
    weights.validate();
    const Index n_targets = pseudo.num_queries();
    if (static_cast<Index>(match.assignment.size()) != n_targets) {
        throw std::invalid_argument("synthetic_query_loss: match does not cover the pseudo set");
    }
    if (gates.per_query_conf.size() != n_targets) {
        throw std::invalid_argument("synthetic_query_loss: one confidence per pseudo query");
    }

    QueryLossResult result;
    result.score_grad = Matrix::Zero(pred_strong.num_queries(), pred_strong.scores.cols());
    result.mask_grads.assign(static_cast<size_t>(pred_strong.num_queries()),
                             Matrix::Zero(pred_strong.masks[0].rows(), pred_strong.masks[0].cols()));

    double batch_conf = 0.0;
    for (Index q = 0; q < n_targets; ++q) batch_conf += pseudo.scores.row(q).maxCoeff();
    batch_conf /= static_cast<double>(n_targets);
    result.batch_gate_passed = batch_conf >= gates.delta;
    if (!result.batch_gate_passed) return result;

    for (Index q = 0; q < n_targets; ++q) {
        const Index p = match.assignment[static_cast<size_t>(q)];
        if (p < 0 || p >= pred_strong.num_queries()) {
            throw std::invalid_argument("synthetic_query_loss: assignment out of range");
        }
        const Index c = target_class(pseudo.scores, q);
        const bool is_object = c != pseudo.phi();
        const double lambda_cls = is_object ? weights.lambda_cls_obj : weights.lambda_cls_noobj;

        result.loss -= lambda_cls * clamped_log(pred_strong.scores(p, c), prob_floor);
        // Softmax-logit gradient of -lambda * log s(c).
        result.score_grad.row(p) += lambda_cls * pred_strong.scores.row(p);
        result.score_grad(p, c) -= lambda_cls;

        if (is_object && gates.per_query_conf(q) >= gates.gamma) {
            MaskLossResult ml = mask_loss(pred_strong.masks[static_cast<size_t>(p)],
                                          pseudo.masks[static_cast<size_t>(q)], weights,
                                          prob_floor);
            result.loss += ml.loss;
            result.mask_grads[static_cast<size_t>(p)] += ml.grad;
        }
    }
    return result;
}

QueryLossResult real_query_loss(const QuerySet& pred, const std::vector<GtPair>& gt_pairs,
                                const MaskLossWeights& weights, double prob_floor) {
    pred.validate();
    weights.validate();
    if (static_cast<Index>(gt_pairs.size()) > pred.num_queries()) {
        throw std::invalid_argument("real_query_loss: more ground-truth pairs than queries");
    }

    QueryLossResult result;
    result.batch_gate_passed = true;  // real branch is never gated
    result.score_grad = Matrix::Zero(pred.num_queries(), pred.scores.cols());
    result.mask_grads.assign(static_cast<size_t>(pred.num_queries()),
                             Matrix::Zero(pred.masks[0].rows(), pred.masks[0].cols()));

    std::vector<Index> matched_target(static_cast<size_t>(pred.num_queries()), -1);
    if (!gt_pairs.empty()) {
        const MatchResult match = hungarian_match(pred, gt_pairs, weights);
        for (size_t t = 0; t < match.assignment.size(); ++t) {
            matched_target[static_cast<size_t>(match.assignment[t])] = static_cast<Index>(t);
        }
    }

    for (Index p = 0; p < pred.num_queries(); ++p) {
        const Index t = matched_target[static_cast<size_t>(p)];
        if (t < 0) {
            const Index phi = pred.phi();
            result.loss -= weights.lambda_cls_noobj * clamped_log(pred.scores(p, phi), prob_floor);
            result.score_grad.row(p) += weights.lambda_cls_noobj * pred.scores.row(p);
            result.score_grad(p, phi) -= weights.lambda_cls_noobj;
            continue;
        }
        const GtPair& gt = gt_pairs[static_cast<size_t>(t)];
        result.loss -= weights.lambda_cls_obj * clamped_log(pred.scores(p, gt.class_id), prob_floor);
        result.score_grad.row(p) += weights.lambda_cls_obj * pred.scores.row(p);
        result.score_grad(p, gt.class_id) -= weights.lambda_cls_obj;

        MaskLossResult ml =
            mask_loss(pred.masks[static_cast<size_t>(p)], gt.mask, weights, prob_floor);
        result.loss += ml.loss;
        result.mask_grads[static_cast<size_t>(p)] += ml.grad;
    }
    return result;
}

}  // namespace sense
