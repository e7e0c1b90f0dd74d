#include "sense/transport.hpp"

#include <cmath>
#include <stdexcept>

namespace sense {

namespace {

// Kernel exponent range beyond which plain scaling risks flushing exp() to
// zero; e^{+-500} is still comfortably inside double range after the
// per-iteration renormalization below.
constexpr double kPlainExponentBudget = 500.0;

double l1_violation(const Vector& got, const Vector& want) {
    return (got - want).cwiseAbs().sum();
}

TransportPlan solve_plain(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior,
                          const SinkhornSettings& s, double cmin, const Vector& log_v0) {
    const Index n = cost.rows();
    const Matrix kernel = ((-(cost.array() - cmin)) / s.beta).exp();
    const Vector& r = prior.row_mass;
    const Vector& c = prior.col_mass;

    Vector u = Vector::Ones(n), v = log_v0.array().exp();
    Vector kv = kernel * v;
    int iters = 0;
    double violation = std::numeric_limits<double>::infinity();
    bool converged = false;
    while (iters < s.max_iters) {
        ++iters;
        u = r.cwiseQuotient(kv);
        const Vector ktu = kernel.transpose() * u;
        v = c.cwiseQuotient(ktu);
        kv = kernel * v;
        const double row_viol = l1_violation(u.cwiseProduct(kv), r);
        const double col_viol = l1_violation(v.cwiseProduct(ktu), c);
        violation = std::max(row_viol, col_viol);
        if (violation <= s.tolerance) {
            converged = true;
            break;
        }
        // Keep |log u| bounded; the plan only depends on u_i * v_j.
        const double umax = u.maxCoeff(), umin = u.minCoeff();
        const double scale = 1.0 / std::sqrt(umax * umin);
        u *= scale;
        v /= scale;
        kv /= scale;
    }

    TransportPlan plan;
    plan.data = u.asDiagonal() * kernel * v.asDiagonal();
    plan.log_u = u.array().log() + cmin / s.beta;
    plan.log_v = v.array().log();
    plan.iterations_used = iters;
    plan.final_violation = violation;
    plan.converged = converged;
    return plan;
}

TransportPlan solve_log_domain(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior,
                               const SinkhornSettings& s, double cmin, const Vector& log_v0) {
    const Index n = cost.rows(), k = cost.cols();
    const Matrix m = (-(cost.array() - cmin)) / s.beta;  // kernel log, shifted
    const Vector log_r = prior.row_mass.array().log();
    const Vector log_c = prior.col_mass.array().log();

    Vector f = Vector::Zero(n), g = log_v0;  // f = log u, g = log v
    Matrix t(n, k);
    int iters = 0;
    double violation = std::numeric_limits<double>::infinity();
    bool converged = false;
    while (iters < s.max_iters) {
        ++iters;
        // f update: f_i = log r_i - LSE_j(m_ij + g_j)
        t = m.rowwise() + g.transpose();
        Vector row_max = t.rowwise().maxCoeff();
        f = log_r.array() -
            (row_max.array() +
             ((t.colwise() - row_max).array().exp().rowwise().sum()).log());
        // g update: g_j = log c_j - LSE_i(m_ij + f_i)
        t = m.colwise() + f;
        Vector col_max = t.colwise().maxCoeff();
        g = log_c.array() -
            (col_max.array().transpose() +
             ((t.rowwise() - col_max.transpose()).array().exp().colwise().sum()).log())
                .transpose();
        // Materialize the plan to measure both marginals.
        t = ((m.colwise() + f).rowwise() + g.transpose()).array().exp();
        const double row_viol = l1_violation(t.rowwise().sum(), prior.row_mass);
        const double col_viol = l1_violation(t.colwise().sum().transpose(), prior.col_mass);
        violation = std::max(row_viol, col_viol);
        if (violation <= s.tolerance) {
            converged = true;
            break;
        }
    }

    TransportPlan plan;
    plan.data = std::move(t);
    plan.log_u = f.array() + cmin / s.beta;
    plan.log_v = g;
    plan.iterations_used = iters;
    plan.final_violation = violation;
    plan.converged = converged;
    return plan;
}

}  // namespace

void SinkhornSettings::validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("SinkhornSettings: beta must be > 0");
    if (!(tolerance > 0.0)) throw std::invalid_argument("SinkhornSettings: tolerance must be > 0");
    if (max_iters < 1) throw std::invalid_argument("SinkhornSettings: max_iters must be >= 1");
    if (!(prob_floor > 0.0 && prob_floor < 1.0))
        throw std::invalid_argument("SinkhornSettings: prob_floor must be in (0,1)");
}

MarginalPrior MarginalPrior::uniform(Index n, Index k) {
    MarginalPrior p;
    p.row_mass = Vector::Constant(n, 1.0 / static_cast<double>(n));
    p.col_mass = Vector::Constant(k, 1.0 / static_cast<double>(k));
    return p;
}

void MarginalPrior::validate() const {
    if (row_mass.size() < 1 || col_mass.size() < 2)
        throw std::invalid_argument("MarginalPrior: need n >= 1 rows and k >= 2 columns");
    if ((row_mass.array() <= 0.0).any() || (col_mass.array() <= 0.0).any())
        throw std::invalid_argument("MarginalPrior: masses must be strictly positive");
    if (std::abs(row_mass.sum() - 1.0) > 1e-9 || std::abs(col_mass.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("MarginalPrior: masses must sum to 1");
}

Matrix build_cost_matrix(const Eigen::Ref<const Matrix>& probs, const SinkhornSettings& settings) {
    settings.validate();
    if (probs.rows() < 1 || probs.cols() < 2)
        throw std::invalid_argument("build_cost_matrix: need n >= 1, k >= 2");
    return (-probs.array().max(settings.prob_floor).log()).matrix();
}

TransportPlan sinkhorn_solve(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior,
                             const SinkhornSettings& settings) {
    return sinkhorn_solve(cost, prior, settings, Vector::Zero(cost.cols()));
}

TransportPlan sinkhorn_solve(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior,
                             const SinkhornSettings& settings, const Vector& log_v_init) {
    settings.validate();
    prior.validate();
    if (cost.rows() != prior.row_mass.size() || cost.cols() != prior.col_mass.size())
        throw std::invalid_argument("sinkhorn_solve: cost shape does not match prior");
    if (!cost.allFinite()) throw std::invalid_argument("sinkhorn_solve: cost must be finite");
    if (log_v_init.size() != cost.cols())
        throw std::invalid_argument("sinkhorn_solve: potential guess length != columns");
    if (!log_v_init.allFinite())
        throw std::invalid_argument("sinkhorn_solve: potential guess must be finite");
    const Vector log_v0 = log_v_init.cwiseMax(-30.0).cwiseMin(30.0);

    const double cmin = cost.minCoeff();
    const double cmax = cost.maxCoeff();
    if ((cmax - cmin) / settings.beta <= kPlainExponentBudget)
        return solve_plain(cost, prior, settings, cmin, log_v0);
    return solve_log_domain(cost, prior, settings, cmin, log_v0);
}

double transport_cost(const Eigen::Ref<const Matrix>& plan, const Eigen::Ref<const Matrix>& cost) {
    if (plan.rows() != cost.rows() || plan.cols() != cost.cols())
        throw std::invalid_argument("transport_cost: shape mismatch");
    return (plan.array() * cost.array()).sum();
}

Matrix plan_row_normalize(const TransportPlan& plan) {
    const Vector sums = plan.data.rowwise().sum();
    if ((sums.array() <= 0.0).any())
        throw std::invalid_argument("plan_row_normalize: plan has a row with no mass");
    return sums.cwiseInverse().asDiagonal() * plan.data;
}

Matrix plan_rows_from_potential(const Eigen::Ref<const Matrix>& cost, const Vector& log_v,
                                double beta) {
    if (cost.cols() != log_v.size())
        throw std::invalid_argument("plan_rows_from_potential: potential length != columns");
    if (!(beta > 0.0)) throw std::invalid_argument("plan_rows_from_potential: beta must be > 0");
    if (!cost.allFinite() || !log_v.allFinite())
        throw std::invalid_argument("plan_rows_from_potential: non-finite input");
    // Column-sweep form of the per-row softmax; rows are long-strided in
    // column-major storage, so row-at-a-time loops defeat vectorization.
    Matrix z = (-cost / beta).rowwise() + log_v.transpose();
    const Vector row_max = z.rowwise().maxCoeff();
    z = (z.colwise() - row_max).array().exp().matrix();
    const Vector sums = z.rowwise().sum();
    z.array().colwise() /= sums.array();
    return z;
}

}  // namespace sense
