#pragma once

#include <vector>

#include "sense/layout.hpp"

namespace sense {

// N (class-scores, soft-mask) pairs. Scores are rows of an N x (k+1) matrix
// whose last column is the no-object class phi; masks are H x W in [0,1].
struct QuerySet {
    Matrix scores;              // N x (k+1), row simplex
    std::vector<Matrix> masks;  // N entries, each H x W

    Index num_queries() const { return scores.rows(); }
    Index num_classes() const { return scores.cols() - 1; }  // object classes
    Index phi() const { return scores.cols() - 1; }

    void validate(double simplex_tol = 1e-6) const;
};

// Ground-truth object: a class index and a hard {0,1} mask.
struct GtPair {
    int class_id = 0;
    Matrix mask;
};

// Injective map from target index to prediction index.
struct MatchResult {
    std::vector<Index> assignment;
    double total_cost = 0.0;
};

struct MaskLossWeights {
    double lambda_ce = 5.0;
    double lambda_dice = 5.0;
    double lambda_cls_obj = 2.0;
    double lambda_cls_noobj = 0.1;

    void validate() const;

    // Real-branch defaults: full BCE + Dice, no-object weight 0.1.
    static MaskLossWeights real_branch() { return MaskLossWeights{5.0, 5.0, 2.0, 0.1}; }
    // Synthetic branch drops Dice and softens no-object to 0.02.
    static MaskLossWeights synthetic_branch() { return MaskLossWeights{5.0, 0.0, 2.0, 0.02}; }
};

// out[j](h,w) = sum_q scores(q,j) * mask_q(h,w) for object classes j < k.
// No normalization; phi is excluded.
std::vector<Matrix> aggregate_semantics(const QuerySet& z);

// Per-pixel normalization of the raw aggregate into a length-1-batch
// ProbTensor; zero-mass pixels fall back to the uniform distribution.
ProbTensor normalize_semantics(const std::vector<Matrix>& raw);

// Pseudo class-mask pairs: masks binarized at tau; object-class scores
// replaced by the plan-rectified mass distribution inside the mask, scaled to
// preserve the teacher's phi mass. Queries whose binarized mask is empty keep
// the teacher's pair unchanged.
QuerySet derive_pseudo_pairs(const QuerySet& teacher, const Eigen::Ref<const Matrix>& plan_q,
                             const LayoutDescriptor& layout, double binarize_tau = 0.5);

// Per-query confidence: mean over the binarized teacher mask of the
// transported distribution's per-pixel maximum; 0 for empty masks.
Vector per_query_confidence(const QuerySet& teacher, const Eigen::Ref<const Matrix>& plan_q,
                            const LayoutDescriptor& layout, double binarize_tau = 0.5);

// Exact min-cost assignment of each row to a distinct column (rows <= cols),
// lexicographically smallest among cost ties (row 0's column first). Fills
// row_to_col and returns the optimal total cost.
double lex_min_assignment(const Eigen::Ref<const Matrix>& cost, std::vector<Index>& row_to_col);

// Exact min-cost injective matching of targets to predictions. Pair cost:
//   -lambda_cls(t) * log s_pred(c_t) + [c_t != phi] * (lambda_ce * BCE + lambda_dice * Dice)
// where c_t is the target's argmax class. Among cost ties the assignment is
// the lexicographically smallest (target 0's prediction first). Targets may
// not outnumber predictions.
MatchResult hungarian_match(const QuerySet& pred, const QuerySet& target,
                            const MaskLossWeights& weights);

// Same matcher against ground-truth pairs (all object targets).
MatchResult hungarian_match(const QuerySet& pred, const std::vector<GtPair>& targets,
                            const MaskLossWeights& weights);

struct MaskLossResult {
    double loss = 0.0;
    Matrix grad;  // d loss / d mask logits, H x W
};

// lambda_ce * BCE + lambda_dice * Dice(eps = 1e-6) of a soft mask against a
// hard target, with the gradient taken through the sigmoid parameterization.
MaskLossResult mask_loss(const Eigen::Ref<const Matrix>& m_pred,
                         const Eigen::Ref<const Matrix>& m_target, const MaskLossWeights& weights,
                         double prob_floor = 1e-12);

struct QueryGates {
    double delta = 0.95;        // batch-level threshold on mean pseudo confidence
    double gamma = 0.95;        // per-query mask-supervision threshold
    Vector per_query_conf;      // from per_query_confidence
};

struct QueryLossResult {
    double loss = 0.0;
    Matrix score_grad;               // N x (k+1), d loss / d score logits
    std::vector<Matrix> mask_grads;  // N entries, d loss / d mask logits
    bool batch_gate_passed = false;
};

// Eq-11-style synthetic set loss over matched (prediction, pseudo) pairs.
// The whole loss is zero when the batch confidence (1/N) sum_q max_j s*_q(j)
// falls below delta. Mask terms require per-query confidence >= gamma and an
// object-class target.
QueryLossResult synthetic_query_loss(const QuerySet& pred_strong, const QuerySet& pseudo,
                                     const MatchResult& match, const QueryGates& gates,
                                     const MaskLossWeights& weights, double prob_floor = 1e-12);

// Matched targets get class + mask losses; unmatched predictions are
// supervised toward phi with lambda_cls_noobj.
QueryLossResult real_query_loss(const QuerySet& pred, const std::vector<GtPair>& gt_pairs,
                                const MaskLossWeights& weights, double prob_floor = 1e-12);

inline double total_query_loss(double loss_synthetic, double loss_real) {
    return 0.5 * (loss_synthetic + loss_real);
}

}  // namespace sense
