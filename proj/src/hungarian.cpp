#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sense/query_loss.hpp"

namespace sense {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest augmenting paths with dual potentials (Jonker-Volgenant style).
// Requires rows <= cols; fills row_to_col and returns the optimal total.
double jv_solve(const Eigen::Ref<const Matrix>& cost, std::vector<Index>& row_to_col) {
    const Index rows = cost.rows();
    const Index cols = cost.cols();
    std::vector<double> u(static_cast<size_t>(rows) + 1, 0.0);
    std::vector<double> v(static_cast<size_t>(cols) + 1, 0.0);
    std::vector<Index> match(static_cast<size_t>(cols) + 1, 0);  // column -> 1-based row
    std::vector<Index> way(static_cast<size_t>(cols) + 1, 0);
    std::vector<double> minv(static_cast<size_t>(cols) + 1, 0.0);
    std::vector<char> used(static_cast<size_t>(cols) + 1, 0);

    for (Index i = 1; i <= rows; ++i) {
        match[0] = i;
        Index j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const Index i0 = match[j0];
            double delta = kInf;
            Index j1 = 0;
            for (Index j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const Index j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    row_to_col.assign(static_cast<size_t>(rows), -1);
    double total = 0.0;
    for (Index j = 1; j <= cols; ++j) {
        if (match[j] == 0) continue;
        row_to_col[static_cast<size_t>(match[j]) - 1] = j - 1;
        total += cost(match[j] - 1, j - 1);
    }
    return total;
}

}  // namespace

double lex_min_assignment(const Eigen::Ref<const Matrix>& cost, std::vector<Index>& row_to_col) {
    const Index rows = cost.rows();
    const Index cols = cost.cols();
    if (rows < 1 || rows > cols) {
        throw std::invalid_argument("lex_min_assignment: need 1 <= rows <= cols");
    }
    if (!cost.allFinite()) {
        throw std::invalid_argument("lex_min_assignment: cost must be finite");
    }

    std::vector<Index> scratch;
    const double best = jv_solve(cost, scratch);
    const double tol = 1e-9 * (1.0 + std::abs(best));

    // Fix rows in order; each takes the smallest free column that still admits
    // an optimal completion of the remaining rows.
    row_to_col.assign(static_cast<size_t>(rows), -1);
    std::vector<char> col_used(static_cast<size_t>(cols), 0);
    std::vector<Index> free_cols;
    double fixed_cost = 0.0;
    for (Index i = 0; i < rows; ++i) {
        const Index rem_rows = rows - i - 1;
        bool placed = false;
        for (Index j = 0; j < cols && !placed; ++j) {
            if (col_used[static_cast<size_t>(j)]) continue;
            double completion = 0.0;
            if (rem_rows > 0) {
                free_cols.clear();
                for (Index jj = 0; jj < cols; ++jj) {
                    if (!col_used[static_cast<size_t>(jj)] && jj != j) free_cols.push_back(jj);
                }
                Matrix sub(rem_rows, static_cast<Index>(free_cols.size()));
                for (Index r = 0; r < rem_rows; ++r) {
                    for (size_t c = 0; c < free_cols.size(); ++c) {
                        sub(r, static_cast<Index>(c)) = cost(i + 1 + r, free_cols[c]);
                    }
                }
                std::vector<Index> sub_assign;
                completion = jv_solve(sub, sub_assign);
            }
            if (fixed_cost + cost(i, j) + completion <= best + tol) {
                row_to_col[static_cast<size_t>(i)] = j;
                col_used[static_cast<size_t>(j)] = 1;
                fixed_cost += cost(i, j);
                placed = true;
            }
        }
        if (!placed) throw std::logic_error("lex_min_assignment: no optimal extension found");
    }
    return fixed_cost;
}

}  // namespace sense
