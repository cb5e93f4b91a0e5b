#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "mftg/reduce.hpp"

namespace mftg {

struct DegenerateRegressionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Polynomial regression basis: all monomials of total degree <= degree
// in the selected inputs. Which path quantities feed the inputs matrix
// is the caller's choice.
struct RegressionBasis {
    int degree = 2;
};

// Monomial exponent tuples in a fixed enumeration order.
inline std::vector<std::vector<unsigned>> monomial_exponents(std::size_t vars,
                                                             int degree) {
    std::vector<std::vector<unsigned>> out;
    std::vector<unsigned> cur(vars, 0);
    // Graded enumeration: degree 0, 1, ..., each level in lex order.
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
        if (i == vars) {
            if (left == 0) out.push_back(cur);
            return;
        }
        for (int e = 0; e <= left; ++e) {
            cur[i] = static_cast<unsigned>(e);
            rec(i + 1, left - e);
        }
        cur[i] = 0;
    };
    for (int total = 0; total <= degree; ++total) rec(0, total);
    return out;
}

inline double eval_monomial(const std::vector<unsigned>& expo,
                            const double* x) {
    double v = 1.0;
    for (std::size_t i = 0; i < expo.size(); ++i)
        for (unsigned e = 0; e < expo[i]; ++e) v *= x[i];
    return v;
}

struct RegressionFit {
    std::vector<std::vector<unsigned>> exponents;  // basis structure
    Eigen::MatrixXd coeffs;  // basis_size x m
    Eigen::MatrixXd fitted;  // N x m
    double condition = 0.0;
    bool ridged = false;

    // Evaluate the fitted function at a new input point.
    Eigen::VectorXd predict(const double* x) const {
        Eigen::VectorXd phi(static_cast<Eigen::Index>(exponents.size()));
        for (std::size_t b = 0; b < exponents.size(); ++b)
            phi[static_cast<Eigen::Index>(b)] = eval_monomial(exponents[b], x);
        return coeffs.transpose() * phi;
    }
};

// Least-squares projection of targets (N x m) onto the span of the
// polynomial basis in inputs (N x p). Normal equations are assembled
// with the deterministic tree reduction, so the fit is bit-stable
// under any worker count.
inline RegressionFit regress_conditional(const Eigen::MatrixXd& targets,
                                         const Eigen::MatrixXd& inputs,
                                         const RegressionBasis& basis,
                                         double ridge) {
    const auto n = targets.rows();
    const auto m = targets.cols();
    const auto p = inputs.cols();
    if (inputs.rows() != n)
        throw std::invalid_argument("regress_conditional: row mismatch");

    RegressionFit fit;
    fit.exponents = monomial_exponents(static_cast<std::size_t>(p), basis.degree);
    const auto bsize = static_cast<Eigen::Index>(fit.exponents.size());
    if (n <= bsize)
        throw std::invalid_argument("regress_conditional: more basis functions than samples");

    // Leaf i contributes the upper triangle of phi_i phi_i^T and phi_i y_i^T.
    const std::size_t leaf_len =
        static_cast<std::size_t>(bsize * (bsize + 1) / 2 + bsize * m);
    auto sums = tree_reduce(
        static_cast<std::size_t>(n), leaf_len, [&](std::size_t i, double* out) {
            thread_local std::vector<double> x, phi;
            x.resize(static_cast<std::size_t>(p));
            for (Eigen::Index j = 0; j < p; ++j)
                x[static_cast<std::size_t>(j)] =
                    inputs(static_cast<Eigen::Index>(i), j);
            phi.resize(static_cast<std::size_t>(bsize));
            for (Eigen::Index b = 0; b < bsize; ++b)
                phi[static_cast<std::size_t>(b)] =
                    eval_monomial(fit.exponents[static_cast<std::size_t>(b)], x.data());
            std::size_t pos = 0;
            for (Eigen::Index a = 0; a < bsize; ++a) {
                const double pa = phi[static_cast<std::size_t>(a)];
                for (Eigen::Index b = a; b < bsize; ++b)
                    out[pos++] = pa * phi[static_cast<std::size_t>(b)];
            }
            const double* trow = targets.data() +
                                 static_cast<std::size_t>(i);  // column major
            for (Eigen::Index a = 0; a < bsize; ++a) {
                const double pa = phi[static_cast<std::size_t>(a)];
                for (Eigen::Index c = 0; c < m; ++c)
                    out[pos++] =
                        pa * trow[static_cast<std::size_t>(c) *
                                  static_cast<std::size_t>(targets.rows())];
            }
        });

    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd gram(bsize, bsize), rhs(bsize, m);
    {
        std::size_t pos = 0;
        for (Eigen::Index a = 0; a < bsize; ++a)
            for (Eigen::Index b = a; b < bsize; ++b) {
                gram(a, b) = sums[pos] * inv_n;
                gram(b, a) = sums[pos] * inv_n;
                ++pos;
            }
        for (Eigen::Index a = 0; a < bsize; ++a)
            for (Eigen::Index c = 0; c < m; ++c) rhs(a, c) = sums[pos++] * inv_n;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double emax = es.eigenvalues().maxCoeff();
    const double emin = es.eigenvalues().minCoeff();
    fit.condition = emax / std::max(emin, 1e-300);
    if (ridge <= 0.0 && (emin <= 0.0 || emin < 1e-12 * emax))
        throw DegenerateRegressionError(
            "regress_conditional: rank-deficient design matrix and no ridge");
    if (ridge > 0.0) {
        gram.diagonal().array() += ridge;
        fit.ridged = true;
    }

    fit.coeffs = gram.ldlt().solve(rhs);

    fit.fitted.resize(n, m);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        thread_local std::vector<double> x, phi;
        x.resize(static_cast<std::size_t>(p));
        for (Eigen::Index j = 0; j < p; ++j)
            x[static_cast<std::size_t>(j)] = inputs(static_cast<Eigen::Index>(i), j);
        phi.resize(static_cast<std::size_t>(bsize));
        for (Eigen::Index b = 0; b < bsize; ++b)
            phi[static_cast<std::size_t>(b)] =
                eval_monomial(fit.exponents[static_cast<std::size_t>(b)], x.data());
        for (Eigen::Index c = 0; c < m; ++c) {
            double v = 0.0;
            for (Eigen::Index b = 0; b < bsize; ++b)
                v += fit.coeffs(b, c) * phi[static_cast<std::size_t>(b)];
            fit.fitted(static_cast<Eigen::Index>(i), c) = v;
        }
    });
    return fit;
}

} // namespace mftg
