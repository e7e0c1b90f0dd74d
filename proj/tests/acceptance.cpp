// Acceptance harness: end-to-end checks over the solver, the losses, the
// metrics, and the toy trainer. Each check prints one PASS/FAIL line with its
// key measurements; the exit status is nonzero if any line fails. The checks
// only touch released surfaces: the sense_core library plus the sense binary
// named on the command line.
//
// Usage: acceptance <sense-binary> <imbalanced-config>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sense/image_io.hpp"
#include "sense/metrics.hpp"
#include "sense/pixel_loss.hpp"
#include "sense/query_loss.hpp"
#include "sense/rng.hpp"
#include "sense/toy_model.hpp"
#include "sense/toy_train.hpp"
#include "sense/toy_world.hpp"
#include "sense/transport.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sense;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Matrix random_cost(Rng& rng, Index n, Index k, double lo = 0.0, double hi = 1.0) {
    Matrix c(n, k);
    for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < n; ++i) c(i, j) = rng.uniform(lo, hi);
    return c;
}

// L1 distance of the plan's marginals from the prescribed ones, worse side.
double replayed_violation(const Matrix& plan, const MarginalPrior& prior) {
    const double row = (plan.rowwise().sum() - prior.row_mass).cwiseAbs().sum();
    const double col = (plan.colwise().sum().transpose() - prior.col_mass).cwiseAbs().sum();
    return std::max(row, col);
}

constexpr double kBetaCycle[3] = {0.01, 0.05, 0.2};

// ---------------------------------------------------------------------------
// logit-space helpers shared by the gradient checks

Matrix softmax_rows(const Matrix& z) {
    Matrix p(z.rows(), z.cols());
    for (Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        const Eigen::ArrayXd e = (z.row(i).array() - m).exp();
        p.row(i) = (e / e.sum()).matrix();
    }
    return p;
}

Matrix sigmoid(const Matrix& z) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

struct QueryLogits {
    Matrix score_logits;              // N x (k+1)
    std::vector<Matrix> mask_logits;  // N entries, H x W
};

QueryLogits random_query_logits(Rng& rng, Index n, Index k_plus_1, Index h, Index w) {
    QueryLogits out;
    out.score_logits = random_cost(rng, n, k_plus_1, -2.0, 2.0);
    for (Index q = 0; q < n; ++q) out.mask_logits.push_back(random_cost(rng, h, w, -3.0, 3.0));
    return out;
}

QuerySet realize(const QueryLogits& logits) {
    QuerySet z;
    z.scores = softmax_rows(logits.score_logits);
    for (const Matrix& m : logits.mask_logits) z.masks.push_back(sigmoid(m));
    return z;
}

Matrix random_hard_mask(Rng& rng, Index h, Index w) {
    Matrix m(h, w);
    for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < w; ++c) m(r, c) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return m;
}

double oracle_bce(const Matrix& m, const Matrix& t) {
    double acc = 0.0;
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c)
            acc -= t(r, c) * std::log(std::max(m(r, c), 1e-12)) +
                   (1.0 - t(r, c)) * std::log(std::max(1.0 - m(r, c), 1e-12));
    return acc / static_cast<double>(m.size());
}

double oracle_dice(const Matrix& m, const Matrix& t) {
    return 1.0 - 2.0 * m.cwiseProduct(t).sum() / (m.sum() + t.sum() + 1e-6);
}

double oracle_pair_cost(const QuerySet& pred, Index p, Index c, const Matrix& tm,
                        const MaskLossWeights& w) {
    const bool is_object = c != pred.phi();
    const double lambda = is_object ? w.lambda_cls_obj : w.lambda_cls_noobj;
    double cost = -lambda * std::log(std::max(pred.scores(p, c), 1e-12));
    if (is_object) {
        cost += w.lambda_ce * oracle_bce(pred.masks[static_cast<size_t>(p)], tm) +
                w.lambda_dice * oracle_dice(pred.masks[static_cast<size_t>(p)], tm);
    }
    return cost;
}

// Exhaustive injective search keeping the best and runner-up totals.
struct BruteForce {
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    std::vector<Index> assignment;
};

void enumerate_assignments(const Matrix& cost, Index t, std::vector<char>& used,
                           std::vector<Index>& cur, double acc, BruteForce& out) {
    if (t == cost.rows()) {
        if (acc < out.best - 1e-12) {
            out.second = out.best;
            out.best = acc;
            out.assignment = cur;
        } else if (acc < out.second) {
            out.second = acc;
        }
        return;
    }
    for (Index p = 0; p < cost.cols(); ++p) {
        if (used[static_cast<size_t>(p)]) continue;
        used[static_cast<size_t>(p)] = 1;
        cur[static_cast<size_t>(t)] = p;
        enumerate_assignments(cost, t + 1, used, cur, acc + cost(t, p), out);
        used[static_cast<size_t>(p)] = 0;
    }
}

BruteForce brute_force_assignment(const Matrix& cost) {
    BruteForce out;
    std::vector<char> used(static_cast<size_t>(cost.cols()), 0);
    std::vector<Index> cur(static_cast<size_t>(cost.rows()), -1);
    enumerate_assignments(cost, 0, used, cur, 0.0, out);
    return out;
}

// ---------------------------------------------------------------------------
// checks

bool check_feasibility(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng = Rng::stream(90, 1);
    int converged = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Index n = rng.uniform_int(1, 512);
        const Index k = rng.uniform_int(2, 32);
        const Matrix cost = random_cost(rng, n, k);
        SinkhornSettings s;
        s.beta = kBetaCycle[trial % 3];
        s.tolerance = 1e-6;
        s.max_iters = 1000;
        const MarginalPrior prior = MarginalPrior::uniform(n, k);
        const TransportPlan plan = sinkhorn_solve(cost, prior, s);
        if (!plan.converged) continue;
        ++converged;
        worst = std::max(worst, replayed_violation(plan.data, prior));
    }
    const double dt = seconds_since(t0);
    detail = fmt("%d/1000 converged within 1000 iterations, worst replayed violation %.1e, %.1f s",
                 converged, worst, dt);
    return converged >= 990 && worst <= 1e-6 && dt <= 60.0;
}

bool check_lp_agreement(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng = Rng::stream(90, 2);
    int inside = 0;
    double worst_share = 0.0;    // gap as a share of the entropy bound
    double min_gap = std::numeric_limits<double>::infinity();
    double worst_tight_gap = 0.0;
    double worst_viol = 0.0, worst_tight_viol = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = rng.uniform_int(2, 16);
        const Index k = rng.uniform_int(2, 8);
        const Matrix cost = random_cost(rng, n, k);
        const MarginalPrior prior = MarginalPrior::uniform(n, k);
        const LpPlan lp = lp_oracle_solve(cost, prior);

        SinkhornSettings s;
        s.beta = kBetaCycle[trial % 3];
        s.tolerance = 1e-10;
        s.max_iters = 500000;
        const TransportPlan plan = sinkhorn_solve(cost, prior, s);
        const double gap = transport_cost(plan, cost) - lp.objective;
        const double bound = s.beta * std::log(static_cast<double>(n * k));
        min_gap = std::min(min_gap, gap);
        worst_share = std::max(worst_share, gap / bound);
        worst_viol = std::max(worst_viol, plan.final_violation);

        // Near a dominant vertex the true gap sits below double rounding
        // noise, so the lower bound is asserted up to the plan's measured
        // feasibility error rather than at literal zero.
        const double err = plan.final_violation + 1e-13;

        // Near the unregularized limit the same instance must land within
        // 1e-2 of the LP optimum. Stalled solves keep their violation small
        // enough that the measured gap is still good to ~1e-4.
        SinkhornSettings tight;
        tight.beta = 0.001;
        tight.tolerance = 1e-7;
        tight.max_iters = 30000;
        const TransportPlan sharp = sinkhorn_solve(cost, prior, tight);
        const double tight_gap = transport_cost(sharp, cost) - lp.objective;
        worst_tight_gap = std::max(worst_tight_gap, std::abs(tight_gap));
        worst_tight_viol = std::max(worst_tight_viol, sharp.final_violation);

        if (gap >= -err && gap <= bound && std::abs(tight_gap) <= 1e-2) ++inside;
    }
    const double dt = seconds_since(t0);
    detail = fmt("%d/200 in [0, beta log nk], worst share %.3f, min gap %+.1e"
                 " (viol <= %.1e), beta 0.001 worst |gap| %.1e, %.1f s",
                 inside, worst_share, min_gap, worst_viol, worst_tight_gap, dt);
    return inside == 200 && worst_viol <= 1e-5 && worst_tight_viol <= 1e-3 && dt <= 30.0;
}

bool check_shift_invariance(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng = Rng::stream(90, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = rng.uniform_int(4, 64);
        const Index k = rng.uniform_int(2, 8);
        const Matrix cost = random_cost(rng, n, k);
        Vector row_shift(n), col_shift(k);
        for (Index i = 0; i < n; ++i) row_shift(i) = rng.uniform(-1.0, 1.0);
        for (Index j = 0; j < k; ++j) col_shift(j) = rng.uniform(-1.0, 1.0);

        SinkhornSettings s;
        s.beta = kBetaCycle[trial % 3];
        s.tolerance = 1e-10;
        s.max_iters = 50000;
        const MarginalPrior prior = MarginalPrior::uniform(n, k);
        const TransportPlan base = sinkhorn_solve(cost, prior, s);

        const Matrix by_row = cost.colwise() + row_shift;
        const Matrix by_col = cost.rowwise() + col_shift.transpose();
        const Matrix by_both = by_row.rowwise() + col_shift.transpose();
        for (const Matrix& shifted : {by_row, by_col, by_both}) {
            const TransportPlan plan = sinkhorn_solve(shifted, prior, s);
            worst = std::max(worst, (plan.data - base.data).cwiseAbs().maxCoeff());
        }
    }
    const double dt = seconds_since(t0);
    detail = fmt("300 shifted solves, worst elementwise plan change %.1e, %.1f s", worst, dt);
    return worst <= 1e-6;
}

struct FdStats {
    double worst = 0.0;
    bool ok = true;

    void compare(double grad, double fd) {
        const double err = std::abs(grad - fd);
        worst = std::max(worst, err);
        if (err > 1e-4) ok = false;
    }
};

void fd_real_pixel(Rng& rng, FdStats& st) {
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = rng.uniform_int(3, 12);
        const Index k = rng.uniform_int(2, 6);
        const Matrix logits = random_cost(rng, n, k, -2.0, 2.0);
        LabelGrid lg;
        lg.layout = LayoutDescriptor{1, n, 1};
        for (Index i = 0; i < n; ++i)
            lg.labels.push_back(rng.bernoulli(0.15) ? kIgnoreLabel
                                                    : static_cast<int>(rng.uniform_int(0, k - 1)));
        const PixelLossResult res = real_pixel_loss(lg, softmax_rows(logits));
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < k; ++j) {
                Matrix lp = logits, lm = logits;
                lp(i, j) += h;
                lm(i, j) -= h;
                const double fd = (real_pixel_loss(lg, softmax_rows(lp)).loss -
                                   real_pixel_loss(lg, softmax_rows(lm)).loss) /
                                  (2.0 * h);
                st.compare(res.grad(i, j), fd);
            }
    }
}

void fd_synthetic_pixel(Rng& rng, FdStats& st) {
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = rng.uniform_int(3, 12);
        const Index k = rng.uniform_int(2, 6);
        Matrix q(n, k);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < k; ++j) q(i, j) = rng.uniform() + 1e-3;
            q.row(i) /= q.row(i).sum();
        }
        GateMask gate;
        gate.gamma = 0.95;
        for (Index i = 0; i < n; ++i) gate.flags.push_back(rng.bernoulli(0.7) ? 1 : 0);
        const PseudoLabelGrid pl{q, gate, LayoutDescriptor{1, n, 1}};

        const Matrix logits = random_cost(rng, n, k, -2.0, 2.0);
        const PixelLossResult res = synthetic_pixel_loss(pl, softmax_rows(logits));
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < k; ++j) {
                Matrix lp = logits, lm = logits;
                lp(i, j) += h;
                lm(i, j) -= h;
                const double fd = (synthetic_pixel_loss(pl, softmax_rows(lp)).loss -
                                   synthetic_pixel_loss(pl, softmax_rows(lm)).loss) /
                                  (2.0 * h);
                st.compare(res.grad(i, j), fd);
            }
    }
}

void fd_mask(Rng& rng, FdStats& st) {
    const double h = 1e-5;
    const MaskLossWeights w = MaskLossWeights::real_branch();
    for (int trial = 0; trial < 100; ++trial) {
        const Index hw = rng.uniform_int(2, 5);
        const Matrix logits = random_cost(rng, hw, hw, -3.0, 3.0);
        const Matrix target = random_hard_mask(rng, hw, hw);
        const MaskLossResult res = mask_loss(sigmoid(logits), target, w);
        for (Index r = 0; r < hw; ++r)
            for (Index c = 0; c < hw; ++c) {
                Matrix lp = logits, lm = logits;
                lp(r, c) += h;
                lm(r, c) -= h;
                const double fd = (mask_loss(sigmoid(lp), target, w).loss -
                                   mask_loss(sigmoid(lm), target, w).loss) /
                                  (2.0 * h);
                st.compare(res.grad(r, c), fd);
            }
    }
}

void fd_synthetic_query(Rng& rng, FdStats& st) {
    const double h = 1e-5;
    const MaskLossWeights weights = MaskLossWeights::synthetic_branch();
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = rng.uniform_int(2, 4);
        const Index k = rng.uniform_int(2, 3);
        const Index hw = rng.uniform_int(2, 4);
        QueryLogits logits = random_query_logits(rng, n, k + 1, hw, hw);
        QuerySet pseudo = realize(random_query_logits(rng, n, k + 1, hw, hw));
        for (Matrix& m : pseudo.masks) m = (m.array() >= 0.5).cast<double>();

        MatchResult match;
        for (Index q = 0; q < n; ++q) match.assignment.push_back((q + 1) % n);
        QueryGates gates;
        gates.delta = 0.0;
        gates.gamma = 0.5;
        gates.per_query_conf = Vector(n);
        for (Index q = 0; q < n; ++q) gates.per_query_conf(q) = rng.uniform();

        auto eval = [&](const QueryLogits& L) {
            return synthetic_query_loss(realize(L), pseudo, match, gates, weights).loss;
        };
        const QueryLossResult res =
            synthetic_query_loss(realize(logits), pseudo, match, gates, weights);

        for (Index q = 0; q < n; ++q) {
            for (Index j = 0; j <= k; ++j) {
                QueryLogits lp = logits, lm = logits;
                lp.score_logits(q, j) += h;
                lm.score_logits(q, j) -= h;
                st.compare(res.score_grad(q, j), (eval(lp) - eval(lm)) / (2.0 * h));
            }
            for (Index r = 0; r < hw; ++r)
                for (Index c = 0; c < hw; ++c) {
                    QueryLogits lp = logits, lm = logits;
                    lp.mask_logits[static_cast<size_t>(q)](r, c) += h;
                    lm.mask_logits[static_cast<size_t>(q)](r, c) -= h;
                    st.compare(res.mask_grads[static_cast<size_t>(q)](r, c),
                               (eval(lp) - eval(lm)) / (2.0 * h));
                }
        }
    }
}

// The real branch matches internally, so the loss is piecewise in the logits;
// knife-edge instances (runner-up matching within 1e-3) are redrawn because a
// central difference across the seam measures the wrong piece.
int fd_real_query(Rng& rng, FdStats& st) {
    const double h = 1e-5;
    const MaskLossWeights weights = MaskLossWeights::real_branch();
    int checked = 0;
    for (int trial = 0; trial < 400 && checked < 100; ++trial) {
        const Index n = rng.uniform_int(2, 4);
        const Index k = rng.uniform_int(2, 3);
        const Index hw = rng.uniform_int(2, 4);
        const Index t_count = rng.uniform_int(1, n);
        QueryLogits logits = random_query_logits(rng, n, k + 1, hw, hw);
        std::vector<GtPair> gt;
        for (Index t = 0; t < t_count; ++t)
            gt.push_back(
                {static_cast<int>(rng.uniform_int(0, k - 1)), random_hard_mask(rng, hw, hw)});

        const QuerySet pred = realize(logits);
        Matrix cost(t_count, n);
        for (Index t = 0; t < t_count; ++t)
            for (Index p = 0; p < n; ++p)
                cost(t, p) = oracle_pair_cost(pred, p, gt[static_cast<size_t>(t)].class_id,
                                              gt[static_cast<size_t>(t)].mask, weights);
        const BruteForce oracle = brute_force_assignment(cost);
        if (oracle.second - oracle.best < 1e-3) continue;
        ++checked;

        auto eval = [&](const QueryLogits& L) { return real_query_loss(realize(L), gt, weights).loss; };
        const QueryLossResult res = real_query_loss(pred, gt, weights);

        for (Index q = 0; q < n; ++q) {
            for (Index j = 0; j <= k; ++j) {
                QueryLogits lp = logits, lm = logits;
                lp.score_logits(q, j) += h;
                lm.score_logits(q, j) -= h;
                st.compare(res.score_grad(q, j), (eval(lp) - eval(lm)) / (2.0 * h));
            }
            for (Index r = 0; r < hw; ++r)
                for (Index c = 0; c < hw; ++c) {
                    QueryLogits lp = logits, lm = logits;
                    lp.mask_logits[static_cast<size_t>(q)](r, c) += h;
                    lm.mask_logits[static_cast<size_t>(q)](r, c) -= h;
                    st.compare(res.mask_grads[static_cast<size_t>(q)](r, c),
                               (eval(lp) - eval(lm)) / (2.0 * h));
                }
        }
    }
    return checked;
}

bool check_gradients(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng = Rng::stream(90, 4);
    FdStats real_pix, syn_pix, mask, syn_query, real_query;
    fd_real_pixel(rng, real_pix);
    fd_synthetic_pixel(rng, syn_pix);
    fd_mask(rng, mask);
    fd_synthetic_query(rng, syn_query);
    const int checked = fd_real_query(rng, real_query);
    const double dt = seconds_since(t0);
    detail = fmt(
        "worst abs err: pixel %.1e/%.1e, mask %.1e, query %.1e/%.1e (100 instances each), %.1f s",
        real_pix.worst, syn_pix.worst, mask.worst, syn_query.worst, real_query.worst, dt);
    return real_pix.ok && syn_pix.ok && mask.ok && syn_query.ok && real_query.ok &&
           checked == 100 && dt <= 120.0;
}

bool check_matching_oracle(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng = Rng::stream(90, 5);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Index rows = rng.uniform_int(1, 6);
        const Index cols = rng.uniform_int(rows, 6);
        const Matrix cost = random_cost(rng, rows, cols, -1.0, 1.0);
        std::vector<Index> assign;
        const double total = lex_min_assignment(cost, assign);
        const BruteForce oracle = brute_force_assignment(cost);

        double replay = 0.0;
        std::vector<char> used(static_cast<size_t>(cols), 0);
        bool injective = true;
        for (Index t = 0; t < rows; ++t) {
            const Index p = assign[static_cast<size_t>(t)];
            if (p < 0 || p >= cols || used[static_cast<size_t>(p)]) injective = false;
            else used[static_cast<size_t>(p)] = 1;
            replay += cost(t, p);
        }
        if (!injective || std::abs(total - oracle.best) > 1e-9 || std::abs(replay - total) > 1e-9)
            ++mismatches;
    }
    const double dt = seconds_since(t0);
    detail = fmt("%d mismatches in 1000 instances against brute force, %.1f s", mismatches, dt);
    return mismatches == 0;
}

bool check_aggregation(std::string& detail) {
    Rng rng = Rng::stream(90, 6);
    double worst = 0.0;
    int argmax_breaks = 0;
    int zero_pixels = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = rng.uniform_int(1, 8);
        const Index k = rng.uniform_int(2, 6);
        const Index hw = rng.uniform_int(2, 8);
        QuerySet z = realize(random_query_logits(rng, n, k + 1, hw, hw));
        if (trial % 5 == 0)
            for (Matrix& m : z.masks) m.setZero();  // exercises the zero-mass fallback

        const std::vector<Matrix> agg = aggregate_semantics(z);
        for (Index j = 0; j < k; ++j) {
            Matrix direct = Matrix::Zero(hw, hw);
            for (Index q = 0; q < n; ++q) direct += z.scores(q, j) * z.masks[static_cast<size_t>(q)];
            worst = std::max(worst, (direct - agg[static_cast<size_t>(j)]).cwiseAbs().maxCoeff());
        }

        const ProbTensor pt = normalize_semantics(agg);
        for (Index hh = 0; hh < hw; ++hh)
            for (Index ww = 0; ww < hw; ++ww) {
                double mass = 0.0;
                Index raw_best = 0;
                for (Index j = 0; j < k; ++j) {
                    const double v = agg[static_cast<size_t>(j)](hh, ww);
                    mass += v;
                    if (v > agg[static_cast<size_t>(raw_best)](hh, ww)) raw_best = j;
                }
                if (mass <= 0.0) {
                    ++zero_pixels;
                    for (Index j = 0; j < k; ++j)
                        if (std::abs(pt.at(0, j, hh, ww) - 1.0 / static_cast<double>(k)) > 1e-15)
                            ++argmax_breaks;
                    continue;
                }
                Index norm_best = 0;
                for (Index j = 1; j < k; ++j)
                    if (pt.at(0, j, hh, ww) > pt.at(0, norm_best, hh, ww)) norm_best = j;
                if (norm_best != raw_best) ++argmax_breaks;
            }
    }
    detail = fmt("worst aggregate deviation %.1e, %d argmax breaks, %d zero-mass pixels uniform",
                 worst, argmax_breaks, zero_pixels);
    return worst <= 1e-12 && argmax_breaks == 0 && zero_pixels > 0;
}

bool check_ablation(const std::string& config_path, std::string& detail) {
    const auto t0 = Clock::now();
    const TrainConfig cfg = load_train_config(config_path);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < 5; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
    const AblationReport report = run_ablation(ToyWorld::imbalanced(), cfg, seeds);
    const double dt = seconds_since(t0);
    detail = fmt("mean paired delta %+.4f, rare class improved %d/5, %.0f s", report.mean_delta(),
                 report.rare_improved(), dt);
    return report.mean_delta() > 0.0 && report.rare_improved() >= 4 && dt <= 900.0;
}

RgbImage toy_to_rgb(const ToyImage& img) {
    RgbImage out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(static_cast<size_t>(3 * img.height * img.width));
    const auto byte = [](double v) {
        return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    };
    for (Index y = 0; y < img.height; ++y)
        for (Index x = 0; x < img.width; ++x) {
            std::uint8_t* px = out.at(y, x);
            px[0] = byte(img.r(y, x));
            px[1] = byte(img.g(y, x));
            px[2] = byte(img.b(y, x));
        }
    return out;
}

bool check_metric_ordering(std::string& detail) {
    int strict = 0;
    double slimmest_texture = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100; ++i) {
        const ShapesSample s = generate_shapes(WorldConfig::clean(), 900000 + i);
        const GrayImage sharp = to_luma(toy_to_rgb(s.image));
        const GrayImage soft = gaussian_blur(sharp, 1.5);
        const double g_sharp = glcm_score(sharp), g_soft = glcm_score(soft);
        const double r_sharp = compression_ratio(sharp), r_soft = compression_ratio(soft);
        if (g_sharp > g_soft && r_sharp < r_soft) ++strict;
        slimmest_texture = std::min(slimmest_texture, g_sharp - g_soft);
    }
    detail = fmt("%d/100 pairs strictly ordered on both metrics, smallest texture margin %.2e",
                 strict, slimmest_texture);
    return strict == 100;
}

const ToyDatasets& clean_data() {
    static const ToyDatasets data = build_datasets(ToyWorld::clean());
    return data;
}

bool weights_equal(const LinearSoftmaxModel& a, const LinearSoftmaxModel& b) {
    return a.weights == b.weights && a.bias == b.bias && a.ema_weights == b.ema_weights &&
           a.ema_bias == b.ema_bias;
}

bool check_gate_semantics(std::string& detail) {
    TrainConfig supervised;
    supervised.total_iters = 40;
    supervised.batch_labeled = 4;
    supervised.batch_unlabeled = 0;
    supervised.seed = 11;
    TrainConfig gated = supervised;
    gated.batch_unlabeled = 4;
    gated.gamma = 1.0;

    const TrainResult a = run_training(clean_data(), supervised);
    const TrainResult b = run_training(clean_data(), gated);
    bool identical = weights_equal(a.model, b.model) && a.eval.mean_iou == b.eval.mean_iou;
    for (Index c = 0; c < a.eval.per_class_iou.size() && identical; ++c) {
        const double ia = a.eval.per_class_iou[c], ib = b.eval.per_class_iou[c];
        identical = (std::isnan(ia) && std::isnan(ib)) || ia == ib;
    }
    for (std::size_t i = 0; i < a.records.size() && identical; ++i)
        identical = a.records[i].loss_real == b.records[i].loss_real &&
                    b.records[i].loss_syn == 0.0;

    TrainConfig open = gated;
    open.gamma = 0.0;
    open.total_iters = 10;
    const TrainResult c = run_training(clean_data(), open);
    bool all_open = true;
    for (const StepRecord& r : c.records) all_open = all_open && r.gate_fraction == 1.0;

    detail = fmt("gamma 1 %s supervised-only over 40 steps, gamma 0 gate fraction %s 1.0",
                 identical ? "metric-identical to" : "DIVERGES from",
                 all_open ? "exactly" : "NOT");
    return identical && all_open;
}

int run_command(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return status;
}

bool check_determinism(const std::string& bin, const fs::path& tmp, std::string& detail) {
    const auto t0 = Clock::now();
    const fs::path cfg = tmp / "determinism.cfg";
    {
        std::ofstream out(cfg);
        out << "total_iters = 60\nbatch_labeled = 2\nbatch_unlabeled = 2\nseed = 123\n";
    }
    std::string csv[2];
    for (int run = 0; run < 2; ++run) {
        const fs::path dir = tmp / fmt("ablate%d", run);
        const std::string cmd = fmt("\"%s\" ablate --config \"%s\" --out \"%s\""
                                    " --world imbalanced --runs 2 > /dev/null",
                                    bin.c_str(), cfg.string().c_str(), dir.string().c_str());
        if (run_command(cmd) != 0) {
            detail = "ablate invocation failed";
            return false;
        }
        csv[run] = slurp(dir / "ablation.csv");
    }
    const bool equal = !csv[0].empty() && csv[0] == csv[1];
    detail = fmt("two ablate runs, %zu byte csv %s, %.0f s", csv[0].size(),
                 equal ? "byte-identical" : "DIFFERS", seconds_since(t0));
    return equal;
}

bool check_overhead(const std::string& bin, const fs::path& tmp, std::string& detail) {
    const fs::path cfg = tmp / "overhead.cfg";
    {
        // Stock sizes and budget; only the seed is pinned.
        std::ofstream out(cfg);
        out << "seed = 0\n";
    }
    const fs::path dir = tmp / "overhead";
    const std::string cmd = fmt("\"%s\" toy-train --config \"%s\" --out \"%s\""
                                " --world imbalanced > /dev/null",
                                bin.c_str(), cfg.string().c_str(), dir.string().c_str());
    if (run_command(cmd) != 0) {
        detail = "toy-train invocation failed";
        return false;
    }
    std::ifstream in(dir / "manifest.json");
    const json m = json::parse(in);
    const double ot = m["timing"]["ot_seconds_mean"].get<double>();
    const double step = m["timing"]["step_seconds_mean"].get<double>();
    const double share = ot / step;
    detail = fmt("ot %.2f ms of %.2f ms per step at stock sizes, share %.1f%%", ot * 1e3,
                 step * 1e3, share * 100.0);
    return share < 0.20;
}

bool check_supervised_floor(std::string& detail) {
    TrainConfig cfg;
    cfg.batch_unlabeled = 0;
    cfg.total_iters = 800;
    const TrainResult res = run_training(clean_data(), cfg);
    detail = fmt("labeled-only clean-world mIoU %.4f after 800 steps", res.eval.mean_iou);
    return res.eval.mean_iou >= 0.90;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: acceptance <sense-binary> <imbalanced-config>\n");
        return 2;
    }
    const std::string bin = argv[1];
    const std::string config_path = argv[2];
    if (!fs::exists(bin) || !fs::exists(config_path)) {
        std::fprintf(stderr, "acceptance: missing input: %s\n",
                     fs::exists(bin) ? config_path.c_str() : bin.c_str());
        return 2;
    }

    const fs::path tmp =
        fs::temp_directory_path() / fmt("sense-acceptance-%ld", static_cast<long>(getpid()));
    fs::create_directories(tmp);

    struct NamedCheck {
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<NamedCheck> checks = {
        {"sinkhorn feasibility", check_feasibility},
        {"lp oracle agreement", check_lp_agreement},
        {"cost shift invariance", check_shift_invariance},
        {"gradient checks", check_gradients},
        {"matching oracle", check_matching_oracle},
        {"semantic aggregation", check_aggregation},
        {"ablation direction", [&](std::string& d) { return check_ablation(config_path, d); }},
        {"metric ordering", check_metric_ordering},
        {"gate semantics", check_gate_semantics},
        {"ablate determinism", [&](std::string& d) { return check_determinism(bin, tmp, d); }},
        {"ot overhead", [&](std::string& d) { return check_overhead(bin, tmp, d); }},
        {"supervised floor", check_supervised_floor},
    };

    const auto t0 = Clock::now();
    int passed = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        std::string detail;
        bool ok = false;
        try {
            ok = checks[i].run(detail);
        } catch (const std::exception& e) {
            detail = fmt("exception: %s", e.what());
        }
        if (ok) ++passed;
        std::printf("%2zu %-22s %s  %s\n", i + 1, checks[i].name, ok ? "PASS" : "FAIL",
                    detail.c_str());
        std::fflush(stdout);
    }

    std::error_code ec;
    fs::remove_all(tmp, ec);
    std::printf("acceptance: %d/%zu checks passed in %.0f s\n", passed, checks.size(),
                seconds_since(t0));
    return passed == static_cast<int>(checks.size()) ? 0 : 1;
}
