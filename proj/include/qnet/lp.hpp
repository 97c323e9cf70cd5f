#pragma once

// Dense two-phase tableau simplex for small standard-form programs:
//
//     maximize c.x   subject to   A x = b,  x >= 0
//
// Bland's rule is used in both phases, so the method terminates on degenerate
// flow programs without any randomization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "qnet/error.hpp"

namespace qnet::lp {

struct StandardFormLP {
    std::vector<double> c;               // objective, length N
    std::vector<std::vector<double>> A;  // M rows of length N
    std::vector<double> b;               // length M

    std::size_t num_vars() const { return c.size(); }
    std::size_t num_rows() const { return b.size(); }

    void validate() const {
        if (A.size() != b.size())
            throw DomainError("lp: A has " + std::to_string(A.size()) + " rows but b has " +
                              std::to_string(b.size()));
        for (std::size_t i = 0; i < A.size(); ++i) {
            if (A[i].size() != c.size())
                throw DomainError("lp: row " + std::to_string(i) + " has " +
                                  std::to_string(A[i].size()) + " columns, expected " +
                                  std::to_string(c.size()));
            if (!std::isfinite(b[i])) throw DomainError("lp: b must be finite");
        }
    }
};

enum class Status { Optimal, Infeasible, Unbounded };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
    }
    return "?";
}

struct LPResult {
    Status status = Status::Infeasible;
    double value = 0.0;
    std::vector<double> solution;
    std::size_t iterations = 0;
};

struct SolverOptions {
    double pivot_tol = 1e-10;
    double feasibility_tol = 1e-9;   // relative to 1 + |b|_inf
    double optimality_tol = 1e-10;
    std::size_t max_iterations = 200000;
};

/// Maps the columns of a standard-form program produced by from_inequalities
/// back to the caller's variables.
struct VariableMap {
    std::size_t num_original = 0;
    std::size_t slack_offset = 0;
    std::size_t num_slack = 0;

    std::vector<double> original(const std::vector<double>& x) const {
        return {x.begin(), x.begin() + static_cast<std::ptrdiff_t>(num_original)};
    }
};

struct StandardFormProgram {
    StandardFormLP lp;
    VariableMap map;
};

/// Converts max c.x s.t. A_ineq x <= b_ineq, A_eq x = b_eq, x >= 0 to standard
/// form by appending one slack column per inequality row.
inline StandardFormProgram from_inequalities(const std::vector<double>& c,
                                             const std::vector<std::vector<double>>& A_ineq,
                                             const std::vector<double>& b_ineq,
                                             const std::vector<std::vector<double>>& A_eq,
                                             const std::vector<double>& b_eq) {
    const std::size_t n = c.size();
    if (A_ineq.size() != b_ineq.size() || A_eq.size() != b_eq.size())
        throw DomainError("from_inequalities: row count does not match rhs length");
    for (const auto& row : A_ineq)
        if (row.size() != n) throw DomainError("from_inequalities: inequality row width mismatch");
    for (const auto& row : A_eq)
        if (row.size() != n) throw DomainError("from_inequalities: equality row width mismatch");

    const std::size_t k = A_ineq.size();
    StandardFormProgram out;
    out.map = VariableMap{n, n, k};
    out.lp.c = c;
    out.lp.c.resize(n + k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        auto row = A_ineq[i];
        row.resize(n + k, 0.0);
        row[n + i] = 1.0;
        out.lp.A.push_back(std::move(row));
        out.lp.b.push_back(b_ineq[i]);
    }
    for (std::size_t i = 0; i < A_eq.size(); ++i) {
        auto row = A_eq[i];
        row.resize(n + k, 0.0);
        out.lp.A.push_back(std::move(row));
        out.lp.b.push_back(b_eq[i]);
    }
    return out;
}

namespace detail {

class Tableau {
public:
    // rows x cols coefficient block followed by the rhs column.
    Tableau(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * (cols + 1), 0.0), basis_(rows, 0) {}

    double& at(std::size_t r, std::size_t c) { return data_[r * (cols_ + 1) + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * (cols_ + 1) + c]; }
    double& rhs(std::size_t r) { return at(r, cols_); }
    double rhs(std::size_t r) const { return at(r, cols_); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::vector<std::size_t>& basis() { return basis_; }
    const std::vector<std::size_t>& basis() const { return basis_; }

    void pivot(std::size_t r, std::size_t c) {
        const double inv = 1.0 / at(r, c);
        for (std::size_t j = 0; j <= cols_; ++j) at(r, j) *= inv;
        at(r, c) = 1.0;
        for (std::size_t i = 0; i < rows_; ++i) {
            if (i == r) continue;
            const double f = at(i, c);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= cols_; ++j) at(i, j) -= f * at(r, j);
            at(i, c) = 0.0;
        }
        basis_[r] = c;
    }

    void remove_row(std::size_t r) {
        data_.erase(data_.begin() + static_cast<std::ptrdiff_t>(r * (cols_ + 1)),
                    data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * (cols_ + 1)));
        basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(r));
        --rows_;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
    std::vector<std::size_t> basis_;
};

enum class PhaseOutcome { Optimal, Unbounded };

// Minimizes cost.x over the current tableau, only letting columns with
// allowed[j] enter. Bland: lowest-index improving column, lowest-index basic
// variable among ratio ties.
inline PhaseOutcome run_phase(Tableau& t, const std::vector<double>& cost,
                              const std::vector<char>& allowed, const SolverOptions& opt,
                              std::size_t& iterations) {
    const std::size_t m = t.rows();
    const std::size_t n = t.cols();
    std::vector<double> reduced(n);
    while (true) {
        if (iterations >= opt.max_iterations)
            throw SolverError("lp: iteration limit reached (" + std::to_string(iterations) + ")");
        for (std::size_t j = 0; j < n; ++j) {
            double r = cost[j];
            for (std::size_t i = 0; i < m; ++i) r -= cost[t.basis()[i]] * t.at(i, j);
            reduced[j] = r;
        }
        std::size_t enter = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (allowed[j] && reduced[j] < -opt.optimality_tol) {
                enter = j;
                break;
            }
        }
        if (enter == n) return PhaseOutcome::Optimal;

        std::size_t leave = m;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            const double a = t.at(i, enter);
            if (a <= opt.pivot_tol) continue;
            const double ratio = t.rhs(i) / a;
            if (ratio < best - 1e-12 ||
                (std::abs(ratio - best) <= 1e-12 && leave < m && t.basis()[i] < t.basis()[leave])) {
                best = ratio;
                leave = i;
            }
        }
        if (leave == m) return PhaseOutcome::Unbounded;
        t.pivot(leave, enter);
        ++iterations;
    }
}

}  // namespace detail

/// Solves a standard-form program. Optimal results are re-verified against
/// A x = b before being returned; a residual above tolerance is a numeric
/// failure and raises SolverError.
inline LPResult solve(const StandardFormLP& lp, const SolverOptions& opt = {}) {
    lp.validate();
    const std::size_t m = lp.num_rows();
    const std::size_t n = lp.num_vars();

    double b_norm = 0.0;
    for (double v : lp.b) b_norm = std::max(b_norm, std::abs(v));
    const double feas_tol = opt.feasibility_tol * (1.0 + b_norm);

    LPResult result;
    result.solution.assign(n, 0.0);

    if (m == 0) {
        // Only x >= 0 constrains the problem.
        for (std::size_t j = 0; j < n; ++j) {
            if (lp.c[j] > opt.optimality_tol) {
                result.status = Status::Unbounded;
                result.value = std::numeric_limits<double>::infinity();
                return result;
            }
        }
        result.status = Status::Optimal;
        return result;
    }

    // Phase 1 tableau: original columns followed by one artificial per row.
    detail::Tableau t(m, n + m);
    for (std::size_t i = 0; i < m; ++i) {
        const double sign = lp.b[i] < 0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) t.at(i, j) = sign * lp.A[i][j];
        t.at(i, n + i) = 1.0;
        t.rhs(i) = sign * lp.b[i];
        t.basis()[i] = n + i;
    }

    std::vector<double> cost1(n + m, 0.0);
    for (std::size_t i = 0; i < m; ++i) cost1[n + i] = 1.0;
    std::vector<char> allowed(n + m, 1);
    detail::run_phase(t, cost1, allowed, opt, result.iterations);

    double infeas = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i)
        if (t.basis()[i] >= n) infeas += t.rhs(i);
    if (infeas > feas_tol) {
        result.status = Status::Infeasible;
        result.value = 0.0;
        return result;
    }

    // Drive zero-level artificials out of the basis; rows where that is
    // impossible are linearly dependent and get dropped.
    for (std::size_t i = 0; i < t.rows();) {
        if (t.basis()[i] < n) {
            ++i;
            continue;
        }
        std::size_t col = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(t.at(i, j)) > opt.pivot_tol) {
                col = j;
                break;
            }
        }
        if (col == n) {
            t.remove_row(i);
        } else {
            t.pivot(i, col);
            ++result.iterations;
            ++i;
        }
    }

    // Phase 2: maximize c.x == minimize -c.x; artificials may not re-enter.
    std::vector<double> cost2(n + m, 0.0);
    for (std::size_t j = 0; j < n; ++j) cost2[j] = -lp.c[j];
    for (std::size_t j = n; j < n + m; ++j) allowed[j] = 0;
    if (detail::run_phase(t, cost2, allowed, opt, result.iterations) ==
        detail::PhaseOutcome::Unbounded) {
        result.status = Status::Unbounded;
        result.value = std::numeric_limits<double>::infinity();
        return result;
    }

    for (std::size_t i = 0; i < t.rows(); ++i)
        if (t.basis()[i] < n) result.solution[t.basis()[i]] = t.rhs(i);
    result.value = 0.0;
    for (std::size_t j = 0; j < n; ++j) result.value += lp.c[j] * result.solution[j];
    result.status = Status::Optimal;

    double residual = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double r = -lp.b[i];
        for (std::size_t j = 0; j < n; ++j) r += lp.A[i][j] * result.solution[j];
        residual = std::max(residual, std::abs(r));
    }
    double negativity = 0.0;
    for (double v : result.solution) negativity = std::max(negativity, -v);
    if (residual > feas_tol || negativity > feas_tol)
        throw SolverError("lp: numeric failure, primal residual " + std::to_string(residual));
    return result;
}

}  // namespace qnet::lp
