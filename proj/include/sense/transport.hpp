#pragma once

#include <Eigen/Dense>

#include "sense/layout.hpp"

namespace sense {

// Settings for the entropy-regularized transport solve. `tolerance` bounds the
// worse of the two L1 marginal violations; `prob_floor` clamps probabilities
// before the -log cost transform.
struct SinkhornSettings {
    double beta = 0.05;
    int max_iters = 1000;
    double tolerance = 1e-6;
    double prob_floor = 1e-12;

    void validate() const;
};

// Prescribed row/column masses. Both sides must be strictly positive and sum
// to 1 (within 1e-9).
struct MarginalPrior {
    Vector row_mass;
    Vector col_mass;

    static MarginalPrior uniform(Index n, Index k);
    void validate() const;
};

// Entropic transport plan pi = diag(u) * exp(-c/beta) * diag(v). The scaling
// vectors are stored as logs so extreme cost ranges cannot overflow them;
// u() and v() exponentiate on demand.
struct TransportPlan {
    Matrix data;
    Vector log_u;
    Vector log_v;
    int iterations_used = 0;
    double final_violation = 0.0;
    bool converged = false;

    Vector u() const { return log_u.array().exp(); }
    Vector v() const { return log_v.array().exp(); }
};

// c[i][j] = -log(max(p[i][j], prob_floor)). Rows of p are per-pixel class
// distributions.
Matrix build_cost_matrix(const Eigen::Ref<const Matrix>& probs, const SinkhornSettings& settings);

// Sinkhorn-Knopp iteration u <- row_mass/(Kv), v <- col_mass/(K^T u) with
// K = exp(-c/beta). Runs plain scaling with per-iteration renormalization
// while the kernel exponent range stays within budget, and switches to
// log-domain updates beyond it, so cost ranges far past 50/beta stay finite.
// Stops at the first iteration whose max L1 marginal violation is within
// settings.tolerance; otherwise returns the flagged last iterate.
TransportPlan sinkhorn_solve(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior,
                             const SinkhornSettings& settings);

// Same iteration started from a column potential guess instead of v = 1.
// The fixed point does not depend on the guess; a good one (e.g. the
// potential of a previous solve against a nearby cost matrix) just reaches
// tolerance in far fewer iterations. The guess is clamped to +-30 so the
// plain kernel products stay finite regardless of what is passed in.
TransportPlan sinkhorn_solve(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior,
                             const SinkhornSettings& settings, const Vector& log_v_init);

// <plan, cost> under matching shapes.
double transport_cost(const Eigen::Ref<const Matrix>& plan, const Eigen::Ref<const Matrix>& cost);

inline double transport_cost(const TransportPlan& plan, const Eigen::Ref<const Matrix>& cost) {
    return transport_cost(plan.data, cost);
}

// Rescales each plan row to a probability distribution. With a uniform row
// prior this equals n * plan row-wise.
Matrix plan_row_normalize(const TransportPlan& plan);

// Row-stochastic assignment built directly from a column potential:
//   q(i,.) proportional to exp(-cost(i,.)/beta + log_v)
// The row scaling drops out under normalization, so this equals
// plan_row_normalize for the solved rows and extends the same assignment to
// rows that were not part of the solve (e.g. a plan solved on a pixel
// subsample applied to the full batch).
Matrix plan_rows_from_potential(const Eigen::Ref<const Matrix>& cost, const Vector& log_v,
                                double beta);

// Exact solution of the transport linear program, for verification. Solved by
// the transportation-simplex method with Bland's rule; capped at n <= 64,
// k <= 16. Row/column duals certify optimality:
//   objective == row_mass . row_duals + col_mass . col_duals
// with row_duals[i] + col_duals[j] <= cost(i,j) everywhere.
struct LpPlan {
    Matrix plan;
    double objective = 0.0;
    Vector row_duals;
    Vector col_duals;
};

LpPlan lp_oracle_solve(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior);

}  // namespace sense
