#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sense/transport.hpp"

namespace sense {

namespace {

constexpr Index kMaxRows = 64;
constexpr Index kMaxCols = 16;
constexpr double kReducedCostTol = 1e-11;

struct Basis {
    Index n, k;
    std::vector<char> basic;    // n*k flags
    std::vector<double> alloc;  // n*k allocations

    Index id(Index i, Index j) const { return i * k + j; }
};

// Northwest-corner initial basic feasible solution; ties create a degenerate
// zero-allocation basic cell so the basis always has n + k - 1 members.
Basis northwest_corner(const MarginalPrior& prior) {
    const Index n = prior.row_mass.size(), k = prior.col_mass.size();
    Basis b{n, k, std::vector<char>(n * k, 0), std::vector<double>(n * k, 0.0)};
    Vector a = prior.row_mass, d = prior.col_mass;
    Index i = 0, j = 0;
    while (true) {
        const double t = std::min(a[i], d[j]);
        b.basic[b.id(i, j)] = 1;
        b.alloc[b.id(i, j)] = t;
        if (i == n - 1 && j == k - 1) break;
        if (a[i] < d[j]) {
            d[j] -= a[i];
            a[i] = 0.0;
            ++i;
        } else if (d[j] < a[i]) {
            a[i] -= d[j];
            d[j] = 0.0;
            ++j;
        } else {
            a[i] = d[j] = 0.0;
            if (j < k - 1)
                ++j;
            else
                ++i;
        }
    }
    return b;
}

// Duals on the basis tree: u[0] = 0, u[i] + v[j] = c(i,j) on basic cells.
void compute_duals(const Basis& b, const Eigen::Ref<const Matrix>& cost, Vector& u, Vector& v) {
    const Index n = b.n, k = b.k;
    std::vector<char> have_u(n, 0), have_v(k, 0);
    u.setZero(n);
    v.setZero(k);
    have_u[0] = 1;
    std::vector<Index> queue{0};  // row nodes 0..n-1, col nodes n..n+k-1
    while (!queue.empty()) {
        const Index node = queue.back();
        queue.pop_back();
        if (node < n) {
            for (Index j = 0; j < k; ++j)
                if (b.basic[b.id(node, j)] && !have_v[j]) {
                    v[j] = cost(node, j) - u[node];
                    have_v[j] = 1;
                    queue.push_back(n + j);
                }
        } else {
            const Index j = node - n;
            for (Index i = 0; i < n; ++i)
                if (b.basic[b.id(i, j)] && !have_u[i]) {
                    u[i] = cost(i, j) - v[j];
                    have_u[i] = 1;
                    queue.push_back(i);
                }
        }
    }
    for (Index i = 0; i < n; ++i)
        if (!have_u[i]) throw std::runtime_error("lp_oracle_solve: basis tree disconnected");
    for (Index j = 0; j < k; ++j)
        if (!have_v[j]) throw std::runtime_error("lp_oracle_solve: basis tree disconnected");
}

// Unique path between row node i0 and col node (n + j0) through the basis
// tree, returned as the node sequence from i0 to j0.
std::vector<Index> tree_path(const Basis& b, Index i0, Index j0) {
    const Index n = b.n, k = b.k, total = n + k;
    std::vector<Index> parent(total, -1);
    std::vector<char> seen(total, 0);
    std::vector<Index> queue{i0};
    seen[i0] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const Index node = queue[head];
        if (node == n + j0) break;
        if (node < n) {
            for (Index j = 0; j < k; ++j)
                if (b.basic[b.id(node, j)] && !seen[n + j]) {
                    seen[n + j] = 1;
                    parent[n + j] = node;
                    queue.push_back(n + j);
                }
        } else {
            const Index j = node - n;
            for (Index i = 0; i < n; ++i)
                if (b.basic[b.id(i, j)] && !seen[i]) {
                    seen[i] = 1;
                    parent[i] = node;
                    queue.push_back(i);
                }
        }
    }
    std::vector<Index> path;
    for (Index node = n + j0; node != -1; node = parent[node]) path.push_back(node);
    if (path.back() != i0) throw std::runtime_error("lp_oracle_solve: no basis path");
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

LpPlan lp_oracle_solve(const Eigen::Ref<const Matrix>& cost, const MarginalPrior& prior) {
    prior.validate();
    const Index n = cost.rows(), k = cost.cols();
    if (n != prior.row_mass.size() || k != prior.col_mass.size())
        throw std::invalid_argument("lp_oracle_solve: cost shape does not match prior");
    if (n > kMaxRows || k > kMaxCols)
        throw std::invalid_argument("lp_oracle_solve: instance above the n<=64, k<=16 oracle cap");
    if (!cost.allFinite()) throw std::invalid_argument("lp_oracle_solve: cost must be finite");

    Basis basis = northwest_corner(prior);
    Vector u(n), v(k);

    const long max_pivots = 200000;
    for (long pivot = 0;; ++pivot) {
        if (pivot >= max_pivots) throw std::runtime_error("lp_oracle_solve: pivot cap exceeded");
        compute_duals(basis, cost, u, v);

        // Bland's rule: the lowest-index improving cell enters.
        Index ei = -1, ej = -1;
        for (Index i = 0; i < n && ei < 0; ++i)
            for (Index j = 0; j < k; ++j)
                if (!basis.basic[basis.id(i, j)] &&
                    cost(i, j) - u[i] - v[j] < -kReducedCostTol) {
                    ei = i;
                    ej = j;
                    break;
                }
        if (ei < 0) break;  // optimal

        // The entering cell closes a unique cycle with the basis tree.
        const std::vector<Index> path = tree_path(basis, ei, ej);
        // Cells along the path, starting adjacent to the entering cell's row.
        // Signs alternate -, +, -, ... (the entering cell itself is +).
        std::vector<Index> minus_cells, plus_cells;
        for (std::size_t a = 0; a + 1 < path.size(); ++a) {
            const Index row = std::min(path[a], path[a + 1]);
            const Index col = std::max(path[a], path[a + 1]) - n;
            const Index cell = basis.id(row, col);
            if (a % 2 == 0)
                minus_cells.push_back(cell);
            else
                plus_cells.push_back(cell);
        }
        double theta = std::numeric_limits<double>::infinity();
        Index leaving = -1;
        for (const Index cell : minus_cells)
            if (basis.alloc[cell] < theta ||
                (basis.alloc[cell] == theta && cell < leaving)) {
                theta = basis.alloc[cell];
                leaving = cell;
            }
        for (const Index cell : plus_cells) basis.alloc[cell] += theta;
        for (const Index cell : minus_cells) basis.alloc[cell] -= theta;
        basis.alloc[basis.id(ei, ej)] = theta;
        basis.basic[basis.id(ei, ej)] = 1;
        basis.alloc[leaving] = 0.0;
        basis.basic[leaving] = 0;
    }

    LpPlan out;
    out.plan = Matrix::Zero(n, k);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) out.plan(i, j) = std::max(basis.alloc[basis.id(i, j)], 0.0);
    out.objective = (out.plan.array() * cost.array()).sum();
    out.row_duals = u;
    out.col_duals = v;
    return out;
}

}  // namespace sense
