#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/linalg/matrix.hpp"

namespace unlearn {

/// Thin SVD of a d x n matrix: a = u * diag(sigma) * v^T with r = min(d, n)
/// columns. sigma is sorted descending; values below 1e-12 * sigma_max are
/// clamped to exactly 0 (declared rank deficiency). The sign of each column
/// pair is normalized so the first nonzero entry of every u column is
/// non-negative, which makes the decomposition unique and reproducible.
struct SvdResult {
    Matrix u;                   // d x r
    std::vector<double> sigma;  // length r, descending, >= 0
    Matrix v;                   // n x r

    std::size_t rank() const {
        std::size_t k = 0;
        while (k < sigma.size() && sigma[k] > 0.0) ++k;
        return k;
    }
};

namespace detail {

constexpr double kSvdPairTol = 1e-14;    // relative off-diagonal threshold
constexpr double kSvdClampRel = 1e-12;   // sigma clamp, relative to sigma_max
constexpr int kSvdMaxSweeps = 100;

/// One-sided Jacobi in transposed layout: wt row j holds column j of the
/// original tall matrix contiguously, so each rotation streams two rows
/// instead of striding down two columns. vt rows accumulate the rotations;
/// the caller transposes vt back.
///
/// Each sweep visits pairs in descending order of sweep-start column norm,
/// and columns already below the rank clamp are frozen: their residue is
/// rounding noise, the extraction step rebuilds their directions, and
/// rotating them against each other otherwise re-triggers forever on noise
/// and stalls convergence at the sweep cap.
inline void jacobi_orthogonalize(Matrix& wt, Matrix& vt) {
    const std::size_t n = wt.rows(), m = wt.cols();
    vt = Matrix::identity(n);
    std::vector<double> norm2(n);
    std::vector<std::size_t> order(n);
    for (int sweep = 0; sweep < kSvdMaxSweeps; ++sweep) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* row = wt.row(j);
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += row[i] * row[i];
            norm2[j] = s;
        }
        const double max2 = *std::max_element(norm2.begin(), norm2.end());
        const double dead2 = max2 * (kSvdClampRel * kSvdClampRel);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return norm2[x] > norm2[y]; });
        bool rotated = false;
        for (std::size_t a = 0; a + 1 < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                const std::size_t p = order[a], q = order[b];
                double* wp = wt.row(p);
                double* wq = wt.row(q);
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    app += wp[i] * wp[i];
                    aqq += wq[i] * wq[i];
                    apq += wp[i] * wq[i];
                }
                norm2[p] = app;
                norm2[q] = aqq;
                if (app <= dead2 || aqq <= dead2) continue;
                if (std::abs(apq) <= kSvdPairTol * std::sqrt(app) * std::sqrt(aqq)) continue;

                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = wp[i], y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                norm2[p] = app - t * apq;
                norm2[q] = aqq + t * apq;
                double* vp = vt.row(p);
                double* vq = vt.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i], y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
                rotated = true;
            }
        }
        if (!rotated) break;
    }
}

/// Replace column j of u (all-zero so far) with a unit vector orthogonal to
/// every column in `fixed_cols`. Picks the coordinate axis with the largest
/// residual after projection, so the choice is deterministic.
inline void complete_orthonormal_column(Matrix& u, std::size_t j,
                                        const std::vector<std::size_t>& fixed_cols) {
    const std::size_t m = u.rows();
    std::vector<double> best(m, 0.0), cand(m);
    double best_norm2 = -1.0;
    for (std::size_t axis = 0; axis < m; ++axis) {
        std::fill(cand.begin(), cand.end(), 0.0);
        cand[axis] = 1.0;
        for (std::size_t c : fixed_cols) {
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += cand[i] * u(i, c);
            for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, c);
        }
        double n2 = 0.0;
        for (double x : cand) n2 += x * x;
        if (n2 > best_norm2) {
            best_norm2 = n2;
            best = cand;
        }
    }
    // second Gram-Schmidt pass for numerical hygiene
    for (std::size_t c : fixed_cols) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += best[i] * u(i, c);
        for (std::size_t i = 0; i < m; ++i) best[i] -= dot * u(i, c);
    }
    double norm = 0.0;
    for (double x : best) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < m; ++i) u(i, j) = best[i] / norm;
}

/// SVD of a tall matrix (m >= n required by construction of the caller).
inline SvdResult svd_tall(const Matrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Matrix wt = transpose(a), vt;
    jacobi_orthogonalize(wt, vt);

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double* row = wt.row(j);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += row[i] * row[i];
        norms[j] = std::sqrt(s);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    SvdResult r;
    r.sigma.resize(n);
    r.u = Matrix(m, n);
    r.v = Matrix(n, n);
    const double sigma_max = norms[order[0]];
    const double clamp = kSvdClampRel * sigma_max;

    std::vector<std::size_t> unit_cols;
    std::vector<std::size_t> dead_cols;
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t src = order[jj];
        const double s = norms[src];
        r.sigma[jj] = (s < clamp) ? 0.0 : s;
        for (std::size_t i = 0; i < n; ++i) r.v(i, jj) = vt(src, i);
        // Sub-clamp columns hold rotation residue, not directions; rebuild them.
        if (r.sigma[jj] > 0.0) {
            const double* row = wt.row(src);
            for (std::size_t i = 0; i < m; ++i) r.u(i, jj) = row[i] / s;
            unit_cols.push_back(jj);
        } else {
            dead_cols.push_back(jj);
        }
    }
    for (std::size_t jj : dead_cols) {
        complete_orthonormal_column(r.u, jj, unit_cols);
        unit_cols.push_back(jj);
    }
    return r;
}

}  // namespace detail

inline Matrix svd_reconstruct(const SvdResult& r) {
    Matrix us = r.u;
    for (std::size_t j = 0; j < us.cols(); ++j)
        for (std::size_t i = 0; i < us.rows(); ++i) us(i, j) *= r.sigma[j];
    return matmul_trans_b(us, r.v);
}

/// Maximum deviation of m's columns from orthonormality, max|m^T m - I|.
inline double gram_defect(const Matrix& m) {
    Matrix g = matmul_trans_a(m, m);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
    return max_abs(g);
}

inline SvdResult svd(const Matrix& a) {
    if (a.empty()) throw ShapeError("svd: empty input");
    if (!a.all_finite()) throw NumericError("svd: input has non-finite entries");

    SvdResult r;
    if (a.rows() >= a.cols()) {
        r = detail::svd_tall(a);
    } else {
        // Work on the transpose and swap factors back.
        SvdResult t = detail::svd_tall(transpose(a));
        r.u = std::move(t.v);
        r.v = std::move(t.u);
        r.sigma = std::move(t.sigma);
    }

    // Sign convention: first nonzero entry of each u column is non-negative.
    for (std::size_t j = 0; j < r.u.cols(); ++j) {
        double lead = 0.0;
        for (std::size_t i = 0; i < r.u.rows(); ++i) {
            if (r.u(i, j) != 0.0) {
                lead = r.u(i, j);
                break;
            }
        }
        if (lead < 0.0) {
            for (std::size_t i = 0; i < r.u.rows(); ++i) r.u(i, j) = -r.u(i, j);
            for (std::size_t i = 0; i < r.v.rows(); ++i) r.v(i, j) = -r.v(i, j);
        }
    }
    return r;
}

}  // namespace unlearn
