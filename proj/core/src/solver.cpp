#include "pairdiff/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pairdiff/errors.hpp"
#include "pairdiff/rng.hpp"
#include "pairdiff/threading.hpp"

namespace pairdiff {

void FitConfig::validate() const {
    if (!(tol > 0.0))
        throw DataError("tol must be positive");
    if (max_iter < 1)
        throw DataError("max_iter must be positive");
    if (n_lambda < 1)
        throw DataError("n_lambda must be positive");
    if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
        throw DataError("lambda_min_ratio must lie in (0, 1)");
    if (cv_folds < 2)
        throw DataError("cv_folds must be at least 2");
    if (h && !(*h > 0.0))
        throw DataError("h must be positive");
    if (lambda && !(*lambda > 0.0))
        throw DataError("lambda must be positive");
}

double default_bandwidth(Eigen::Index n, Eigen::Index p) {
    if (n < 2 || p < 2)
        throw DataError("default_bandwidth requires n >= 2 and p >= 2");
    return 2.0 * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

double soft_threshold(double z, double gamma) {
    if (z > gamma)
        return z - gamma;
    if (z < -gamma)
        return z + gamma;
    return 0.0;
}

long g_polish_attempts = 0; // scratch counter for perf experiments

std::vector<double> lambda_grid(double lmax, const FitConfig& cfg) {
    std::vector<double> grid(static_cast<std::size_t>(cfg.n_lambda));
    grid[0] = lmax;
    if (cfg.n_lambda == 1)
        return grid;
    const double step = std::log(cfg.lambda_min_ratio) / static_cast<double>(cfg.n_lambda - 1);
    for (int t = 1; t < cfg.n_lambda; ++t)
        grid[static_cast<std::size_t>(t)] = lmax * std::exp(step * t);
    return grid;
}

namespace {

// ------------------------------------------------------------------
// Problem representations. Both expose the same interface to the
// coordinate-descent engine:
//   dim(), curv[k], set_beta(), partial(k) = 2 sum w x_k r (the negative
//   gradient component), shift(k, delta), full_partial(out), loss().
// ------------------------------------------------------------------

// Pairwise-difference least squares held in observation space. With
// L = sum_m w_m (e_i - e_j)(e_i - e_j)' the weighted pair Laplacian and
// v = X beta, partial gradients reduce to 2 (q_k - X_k' L v), so one
// coordinate update is O(n) through the cached G = L X instead of
// O(#pairs).
struct PairProblem {
    const Eigen::MatrixXd* X = nullptr;
    std::vector<std::int32_t> pi, pj;
    Eigen::VectorXd w;    // training weights (possibly rescaled, possibly zeroed)
    Eigen::VectorXd z;    // pair responses Y_i - Y_j
    Eigen::MatrixXd G;    // n x p
    Eigen::VectorXd q;    // p
    Eigen::VectorXd curv; // p
    Eigen::VectorXd v;    // n, state: X beta

    void init(const Eigen::MatrixXd& Xm, const Eigen::VectorXd& Y,
              std::vector<std::int32_t> i_idx, std::vector<std::int32_t> j_idx, Eigen::VectorXd wts) {
        X = &Xm;
        pi = std::move(i_idx);
        pj = std::move(j_idx);
        w = std::move(wts);
        const Eigen::Index n = Xm.rows();
        const Eigen::Index p = Xm.cols();
        const std::size_t m = pi.size();

        z.resize(static_cast<Eigen::Index>(m));
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        for (std::size_t t = 0; t < m; ++t) {
            z[static_cast<Eigen::Index>(t)] = Y[pi[t]] - Y[pj[t]];
            const double wz = w[static_cast<Eigen::Index>(t)] * z[static_cast<Eigen::Index>(t)];
            s[pi[t]] += wz;
            s[pj[t]] -= wz;
        }
        q.noalias() = Xm.transpose() * s;

        G.setZero(n, p);
        for (Eigen::Index k = 0; k < p; ++k) {
            const double* xk = Xm.col(k).data();
            double* gk = G.col(k).data();
            for (std::size_t t = 0; t < m; ++t) {
                const double d = w[static_cast<Eigen::Index>(t)] * (xk[pi[t]] - xk[pj[t]]);
                gk[pi[t]] += d;
                gk[pj[t]] -= d;
            }
        }
        curv.resize(p);
        for (Eigen::Index k = 0; k < p; ++k)
            curv[k] = std::max(2.0 * Xm.col(k).dot(G.col(k)), 0.0);
        v = Eigen::VectorXd::Zero(n);
    }

    // Fold training problem derived from the full problem by removing the
    // held-out pairs' contribution and rescaling, O(#held * p + n p)
    // instead of a fresh O(#pairs * p) build. train_w must equal
    // scale * base.w on training pairs and 0 on held-out pairs.
    void init_subtract(const PairProblem& base, Eigen::VectorXd train_w, double scale) {
        X = base.X;
        pi = base.pi;
        pj = base.pj;
        z = base.z;
        w = std::move(train_w);
        const Eigen::Index n = X->rows();
        const Eigen::Index p = X->cols();
        const std::size_t m = pi.size();

        Eigen::VectorXd s_excl = Eigen::VectorXd::Zero(n);
        std::vector<std::size_t> held;
        for (std::size_t t = 0; t < m; ++t) {
            if (w[static_cast<Eigen::Index>(t)] != 0.0)
                continue;
            held.push_back(t);
            const double wz = base.w[static_cast<Eigen::Index>(t)] * z[static_cast<Eigen::Index>(t)];
            s_excl[pi[t]] += wz;
            s_excl[pj[t]] -= wz;
        }
        q.noalias() = scale * (base.q - X->transpose() * s_excl);

        G.resize(n, p);
        for (Eigen::Index k = 0; k < p; ++k) {
            const double* xk = X->col(k).data();
            G.col(k) = base.G.col(k);
            double* gk = G.col(k).data();
            for (const std::size_t t : held) {
                const double d = base.w[static_cast<Eigen::Index>(t)] * (xk[pi[t]] - xk[pj[t]]);
                gk[pi[t]] -= d;
                gk[pj[t]] += d;
            }
            G.col(k) *= scale;
        }
        curv.resize(p);
        for (Eigen::Index k = 0; k < p; ++k)
            curv[k] = std::max(2.0 * X->col(k).dot(G.col(k)), 0.0);
        v = Eigen::VectorXd::Zero(n);
    }

    Eigen::Index dim() const { return X->cols(); }
    void set_beta(const Eigen::VectorXd& beta) { v.noalias() = (*X) * beta; }
    double partial(Eigen::Index k) const { return 2.0 * (q[k] - G.col(k).dot(v)); }
    void shift(Eigen::Index k, double delta) { v.noalias() += delta * X->col(k); }
    void full_partial(Eigen::VectorXd& out) const { out.noalias() = 2.0 * (q - G.transpose() * v); }
    double linear_term(Eigen::Index k) const { return q[k]; }
    double gram(Eigen::Index k, Eigen::Index l) const { return X->col(k).dot(G.col(l)); }
    void adopt(const std::vector<Eigen::Index>& coords, const Eigen::VectorXd& values) {
        v.setZero();
        for (std::size_t t = 0; t < coords.size(); ++t)
            v.noalias() += values[static_cast<Eigen::Index>(t)] * X->col(coords[t]);
    }

    double loss() const {
        double acc = 0.0;
        for (std::size_t t = 0; t < pi.size(); ++t) {
            const double r = z[static_cast<Eigen::Index>(t)] - (v[pi[t]] - v[pj[t]]);
            acc += w[static_cast<Eigen::Index>(t)] * r * r;
        }
        return acc;
    }

    // Held-out error against an independent weight vector, normalized by
    // its weight sum; entries with zero weight cost nothing.
    double weighted_error(const Eigen::VectorXd& vw) const {
        double acc = 0.0;
        double wsum = 0.0;
        for (std::size_t t = 0; t < pi.size(); ++t) {
            const double wt = vw[static_cast<Eigen::Index>(t)];
            if (wt == 0.0)
                continue;
            const double r = z[static_cast<Eigen::Index>(t)] - (v[pi[t]] - v[pj[t]]);
            acc += wt * r * r;
            wsum += wt;
        }
        return acc / wsum;
    }
};

// Weighted least squares on observation rows, residual kept explicitly.
struct ObsProblem {
    const Eigen::MatrixXd* X = nullptr;
    const Eigen::VectorXd* y = nullptr;
    Eigen::VectorXd w;
    Eigen::VectorXd r; // y - X beta
    Eigen::VectorXd curv;

    Eigen::VectorXd q; // X' (w .* y)

    void init(const Eigen::MatrixXd& Xm, const Eigen::VectorXd& ym, Eigen::VectorXd wts) {
        X = &Xm;
        y = &ym;
        w = std::move(wts);
        r = ym;
        const Eigen::Index p = Xm.cols();
        curv.resize(p);
        for (Eigen::Index k = 0; k < p; ++k)
            curv[k] = std::max(2.0 * (Xm.col(k).array().square() * w.array()).sum(), 0.0);
        q.noalias() = Xm.transpose() * w.cwiseProduct(ym);
    }

    Eigen::Index dim() const { return X->cols(); }
    void set_beta(const Eigen::VectorXd& beta) { r = *y - (*X) * beta; }
    double partial(Eigen::Index k) const {
        return 2.0 * (X->col(k).array() * w.array() * r.array()).sum();
    }
    void shift(Eigen::Index k, double delta) { r.noalias() -= delta * X->col(k); }
    void full_partial(Eigen::VectorXd& out) const {
        out.noalias() = 2.0 * (X->transpose() * w.cwiseProduct(r));
    }
    double linear_term(Eigen::Index k) const { return q[k]; }
    double gram(Eigen::Index k, Eigen::Index l) const {
        return (X->col(k).array() * w.array() * X->col(l).array()).sum();
    }
    void adopt(const std::vector<Eigen::Index>& coords, const Eigen::VectorXd& values) {
        r = *y;
        for (std::size_t t = 0; t < coords.size(); ++t)
            r.noalias() -= values[static_cast<Eigen::Index>(t)] * X->col(coords[t]);
    }
    double loss() const { return (w.array() * r.array().square()).sum(); }

    double weighted_error(const Eigen::VectorXd& vw) const {
        double acc = 0.0;
        double wsum = 0.0;
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            if (vw[i] == 0.0)
                continue;
            acc += vw[i] * r[i] * r[i];
            wsum += vw[i];
        }
        return acc / wsum;
    }
};

// ------------------------------------------------------------------
// Coordinate-descent engine with active-set iteration.
// ------------------------------------------------------------------

struct CdOutcome {
    std::int64_t iters = 0;
    bool converged = false;
    double kkt = 0.0;
};

inline double sign_of(double x) { return x > 0.0 ? 1.0 : -1.0; }

// Gram entries of every coordinate that has ever been active, grown
// incrementally so warm-started path solves pay for each column once.
// A Cholesky factor of the currently active block is kept in sync by
// rank-one appends and Givens removals; degenerate blocks fall back to
// a dense semidefinite solve.
struct GramCache {
    std::vector<Eigen::Index> members;
    std::vector<Eigen::Index> pos; // p, -1 if absent
    Eigen::MatrixXd A;             // members x members, symmetric

    std::vector<Eigen::Index> forder; // active coords in factor order
    std::vector<Eigen::Index> fslot;  // p -> slot in forder, -1 if absent
    Eigen::MatrixXd L;                // lower-triangular factor, capacity x capacity
    bool factor_ok = true;
    std::vector<char> scratch;

    void reset(Eigen::Index p) {
        members.clear();
        pos.assign(static_cast<std::size_t>(p), -1);
        A.resize(0, 0);
        forder.clear();
        fslot.assign(static_cast<std::size_t>(p), -1);
        L.resize(0, 0);
        factor_ok = true;
        scratch.assign(static_cast<std::size_t>(p), 0);
    }

    double gram_at(Eigen::Index k, Eigen::Index l) const {
        return A(pos[static_cast<std::size_t>(k)], pos[static_cast<std::size_t>(l)]);
    }

    template <class Problem>
    void ensure(const Problem& prob, const std::vector<Eigen::Index>& coords) {
        for (const Eigen::Index k : coords) {
            if (pos[static_cast<std::size_t>(k)] >= 0)
                continue;
            const Eigen::Index m = static_cast<Eigen::Index>(members.size());
            if (A.rows() <= m) {
                const Eigen::Index cap = std::max<Eigen::Index>(64, 2 * A.rows());
                A.conservativeResize(cap, cap);
            }
            for (Eigen::Index t = 0; t < m; ++t) {
                const double val = prob.gram(k, members[static_cast<std::size_t>(t)]);
                A(t, m) = val;
                A(m, t) = val;
            }
            A(m, m) = prob.gram(k, k);
            pos[static_cast<std::size_t>(k)] = m;
            members.push_back(k);
        }
    }

    void factor_remove(Eigen::Index slot) {
        const Eigen::Index a = static_cast<Eigen::Index>(forder.size());
        // Delete row `slot`; rows below shift up, leaving one extra
        // superdiagonal in columns >= slot, cleared by Givens rotations.
        // The shift runs column-wise to stay contiguous.
        for (Eigen::Index c = 0; c < a; ++c) {
            const Eigen::Index len = a - slot - 1;
            if (len > 0)
                L.col(c).segment(slot, len) = L.col(c).segment(slot + 1, len).eval();
        }
        fslot[static_cast<std::size_t>(forder[static_cast<std::size_t>(slot)])] = -1;
        forder.erase(forder.begin() + slot);
        const Eigen::Index a2 = static_cast<Eigen::Index>(forder.size());
        for (Eigen::Index s = slot; s < a2; ++s)
            fslot[static_cast<std::size_t>(forder[static_cast<std::size_t>(s)])] = s;
        for (Eigen::Index j = slot; j < a2; ++j) {
            const double x = L(j, j);
            const double y = L(j, j + 1);
            const double r = std::hypot(x, y);
            if (r <= 0.0) {
                factor_ok = false;
                return;
            }
            const double c = x / r;
            const double s = y / r;
            L(j, j) = r;
            L(j, j + 1) = 0.0;
            for (Eigen::Index i = j + 1; i < a2; ++i) {
                const double xi = L(i, j);
                const double yi = L(i, j + 1);
                L(i, j) = c * xi + s * yi;
                L(i, j + 1) = -s * xi + c * yi;
            }
        }
    }

    bool factor_append(Eigen::Index k) {
        const Eigen::Index a = static_cast<Eigen::Index>(forder.size());
        if (L.rows() <= a) {
            const Eigen::Index cap = std::max<Eigen::Index>(64, 2 * L.rows());
            L.conservativeResize(cap, cap);
        }
        Eigen::VectorXd col(a);
        for (Eigen::Index t = 0; t < a; ++t)
            col[t] = gram_at(k, forder[static_cast<std::size_t>(t)]);
        if (a > 0) {
            L.topLeftCorner(a, a).triangularView<Eigen::Lower>().solveInPlace(col);
            L.row(a).head(a) = col.transpose();
        }
        const double diag = gram_at(k, k);
        const double d2 = diag - col.squaredNorm();
        if (!(d2 > 1e-12 * std::max(diag, 1e-300)))
            return false;
        L(a, a) = std::sqrt(d2);
        fslot[static_cast<std::size_t>(k)] = a;
        forder.push_back(k);
        return true;
    }

    void factor_wipe() {
        for (const Eigen::Index k : forder)
            fslot[static_cast<std::size_t>(k)] = -1;
        forder.clear();
        factor_ok = true;
    }

    // Brings the factor in line with `active`. Coordinates whose Gram
    // column is numerically dependent on the already-factored ones are
    // left out and returned; the polish step holds them fixed.
    template <class Problem>
    std::vector<Eigen::Index> factor_sync(const Problem& prob, const std::vector<Eigen::Index>& active) {
        ensure(prob, active);
        if (!factor_ok)
            factor_wipe();
        for (const Eigen::Index k : active)
            scratch[static_cast<std::size_t>(k)] = 1;
        for (Eigen::Index slot = static_cast<Eigen::Index>(forder.size()); slot-- > 0;) {
            if (!scratch[static_cast<std::size_t>(forder[static_cast<std::size_t>(slot)])])
                factor_remove(slot);
            if (!factor_ok) {
                factor_wipe();
                break;
            }
        }
        std::vector<Eigen::Index> left_out;
        for (const Eigen::Index k : active)
            if (fslot[static_cast<std::size_t>(k)] < 0 && !factor_append(k))
                left_out.push_back(k);
        for (const Eigen::Index k : active)
            scratch[static_cast<std::size_t>(k)] = 0;
        return left_out;
    }

    // Solves Gram_AA x = rhs with rhs/x indexed by factor order.
    void factor_solve(Eigen::VectorXd& rhs_to_x) const {
        const Eigen::Index a = static_cast<Eigen::Index>(forder.size());
        L.topLeftCorner(a, a).triangularView<Eigen::Lower>().solveInPlace(rhs_to_x);
        L.topLeftCorner(a, a).transpose().triangularView<Eigen::Upper>().solveInPlace(rhs_to_x);
    }
};

// Direct solve of the penalized stationarity system restricted to the
// current support and signs:
//   Gram_AA beta_A = q_A - (lambda/2) sign_A.
// When the solution leaves the sign orthant, the step is clipped at the
// first coordinate that crosses zero (which then drops from the
// support); the objective is non-increasing along that segment.
// Coordinate descent remains the globalizer around these jumps.
enum class PolishStatus { rejected, stepped, landed };

template <class Problem>
PolishStatus try_polish(Problem& prob, GramCache& cache, double lambda, Eigen::VectorXd& beta) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index k = 0; k < beta.size(); ++k)
        if (beta[k] != 0.0)
            act.push_back(k);
    if (act.empty())
        return PolishStatus::rejected;

    Eigen::VectorXd cand;
    if (cache.factor_sync(prob, act)) {
        act = cache.forder; // canonical order of the maintained factor
        const Eigen::Index a = static_cast<Eigen::Index>(act.size());
        Eigen::VectorXd rhs(a);
        for (Eigen::Index r = 0; r < a; ++r) {
            const Eigen::Index kr = act[static_cast<std::size_t>(r)];
            rhs[r] = prob.linear_term(kr) - 0.5 * lambda * sign_of(beta[kr]);
        }
        cand = rhs;
        cache.factor_solve(cand);
    } else {
        // Rank-deficient active block: dense semidefinite solve.
        const Eigen::Index a = static_cast<Eigen::Index>(act.size());
        Eigen::MatrixXd A(a, a);
        Eigen::VectorXd rhs(a);
        for (Eigen::Index r = 0; r < a; ++r) {
            const Eigen::Index kr = act[static_cast<std::size_t>(r)];
            rhs[r] = prob.linear_term(kr) - 0.5 * lambda * sign_of(beta[kr]);
            for (Eigen::Index c = 0; c < a; ++c)
                A(r, c) = cache.gram_at(kr, act[static_cast<std::size_t>(c)]);
        }
        cand = A.ldlt().solve(rhs);
    }
    const Eigen::Index a = static_cast<Eigen::Index>(act.size());
    Eigen::VectorXd cur(a);
    for (Eigen::Index r = 0; r < a; ++r)
        cur[r] = beta[act[static_cast<std::size_t>(r)]];
    if (!cand.allFinite())
        return PolishStatus::rejected;

    // Step toward the candidate, stopping where a coordinate changes sign.
    double gamma = 1.0;
    for (Eigen::Index r = 0; r < a; ++r) {
        if (cand[r] * sign_of(cur[r]) <= 0.0) {
            const double g = cur[r] / (cur[r] - cand[r]);
            gamma = std::min(gamma, g);
        }
    }
    if (!(gamma > 0.0))
        return PolishStatus::rejected;
    const bool landed = gamma >= 1.0;
    if (!landed) {
        cand = cur + gamma * (cand - cur);
        for (Eigen::Index r = 0; r < a; ++r)
            if (cand[r] * sign_of(cur[r]) <= 0.0)
                cand[r] = 0.0;
    }

    const double obj_old = prob.loss() + lambda * beta.lpNorm<1>();
    Eigen::VectorXd beta_new = beta;
    for (Eigen::Index r = 0; r < a; ++r)
        beta_new[act[static_cast<std::size_t>(r)]] = cand[r];
    prob.adopt(act, cand);
    const double obj_new = prob.loss() + lambda * beta_new.lpNorm<1>();
    if (!(obj_new <= obj_old + 1e-12 * (1.0 + std::abs(obj_old)))) {
        prob.set_beta(beta); // revert
        return PolishStatus::rejected;
    }
    beta = std::move(beta_new);
    return landed ? PolishStatus::landed : PolishStatus::stepped;
}

template <class Problem>
CdOutcome cd_solve(Problem& prob, double lambda, const FitConfig& cfg, Eigen::VectorXd& beta,
                   GramCache& cache) {
    const Eigen::Index p = prob.dim();

    auto sweep = [&](const std::vector<Eigen::Index>& idx) {
        double maxd = 0.0;
        for (const Eigen::Index k : idx) {
            const double c = prob.curv[k];
            if (c <= 0.0)
                continue; // frozen at zero
            const double g = prob.partial(k);
            const double nb = soft_threshold(c * beta[k] + g, lambda) / c;
            if (nb != beta[k]) {
                prob.shift(k, nb - beta[k]);
                maxd = std::max(maxd, c * std::abs(nb - beta[k]));
                beta[k] = nb;
            }
        }
        return maxd;
    };

    std::vector<Eigen::Index> all(static_cast<std::size_t>(p));
    std::iota(all.begin(), all.end(), Eigen::Index{0});

    CdOutcome out;
    // One full cycle establishes the working active set.
    double maxd = sweep(all);
    ++out.iters;

    std::vector<Eigen::Index> active;
    std::vector<char> in_active(static_cast<std::size_t>(p), 0);
    for (Eigen::Index k = 0; k < p; ++k)
        if (beta[k] != 0.0) {
            active.push_back(k);
            in_active[static_cast<std::size_t>(k)] = 1;
        }

    Eigen::VectorXd g_full(p);
    int backoff = 1;
    while (true) {
        // Iterate the active set to stationarity; when coordinate
        // descent has not settled within a burst, jump with a direct
        // active-set solve. Rejected jumps back off exponentially.
        while (maxd >= cfg.tol && out.iters < cfg.max_iter) {
            int burst = 0;
            while (maxd >= cfg.tol && out.iters < cfg.max_iter && burst < backoff) {
                maxd = sweep(active);
                ++out.iters;
                ++burst;
            }
            if (maxd >= cfg.tol && out.iters < cfg.max_iter) {
                PolishStatus status = try_polish(prob, cache, lambda, beta);
                int chain = 0;
                while (status == PolishStatus::stepped && ++chain < 512)
                    status = try_polish(prob, cache, lambda, beta);
                g_polish_attempts += chain + 1;
                if (status == PolishStatus::rejected && chain == 0) {
                    backoff = std::min(backoff * 2, 64);
                } else {
                    maxd = sweep(active);
                    ++out.iters;
                    backoff = 1;
                }
            }
        }

        // Full KKT certificate; violating inactive coordinates join the
        // active set and iteration resumes.
        prob.full_partial(g_full); // g = -grad(loss)
        double kkt = 0.0;
        bool added = false;
        for (Eigen::Index k = 0; k < p; ++k) {
            if (beta[k] != 0.0) {
                kkt = std::max(kkt, std::abs(-g_full[k] + lambda * sign_of(beta[k])));
            } else {
                const double excess = std::abs(g_full[k]) - lambda;
                if (excess > kkt)
                    kkt = excess;
                if (excess > 0.0 && prob.curv[k] > 0.0 && !in_active[static_cast<std::size_t>(k)]) {
                    active.push_back(k);
                    in_active[static_cast<std::size_t>(k)] = 1;
                    added = true;
                }
            }
        }
        out.kkt = kkt;
        if (kkt <= 10.0 * cfg.tol) {
            out.converged = true;
            return out;
        }
        if (out.iters >= cfg.max_iter)
            return out;
        (void)added;
        maxd = sweep(active);
        ++out.iters;
    }
}

template <class Problem>
FitResult finish_result(Problem& prob, const Eigen::VectorXd& beta, double lambda, double h_used,
                        const CdOutcome& out) {
    FitResult res;
    res.beta = beta;
    res.lambda_used = lambda;
    res.h_used = h_used;
    for (Eigen::Index k = 0; k < beta.size(); ++k)
        if (beta[k] != 0.0)
            res.active_set.push_back(static_cast<int>(k));
    res.n_iterations = out.iters;
    res.converged = out.converged;
    res.kkt_violation = out.kkt;
    res.objective = prob.loss() + lambda * beta.template lpNorm<1>();
    return res;
}

template <class Problem>
FitResult run_solve(Problem& prob, double lambda, const FitConfig& cfg, double h_used,
                    const Eigen::VectorXd* warm) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(prob.dim());
    if (warm) {
        if (warm->size() != prob.dim())
            throw DataError("warm start length differs from p");
        beta = *warm;
        for (Eigen::Index k = 0; k < beta.size(); ++k)
            if (prob.curv[k] <= 0.0)
                beta[k] = 0.0;
        prob.set_beta(beta);
    }
    GramCache cache;
    cache.reset(prob.dim());
    const CdOutcome out = cd_solve(prob, lambda, cfg, beta, cache);
    return finish_result(prob, beta, lambda, h_used, out);
}

// Warm-started sweep down a fixed lambda grid; per_lambda sees the
// problem in its post-solve state.
template <class Problem, class Fn>
void run_path(Problem& prob, const std::vector<double>& grid, const FitConfig& cfg, Fn&& per_lambda) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(prob.dim());
    GramCache cache;
    cache.reset(prob.dim());
    for (std::size_t t = 0; t < grid.size(); ++t) {
        const CdOutcome out = cd_solve(prob, grid[t], cfg, beta, cache);
        per_lambda(t, grid[t], beta, out);
    }
}

PairProblem make_pair_problem(const Dataset& data, const PairSet& pairs) {
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(pairs.weight.data(),
                                                          static_cast<Eigen::Index>(pairs.size()));
    PairProblem prob;
    prob.init(data.X, data.Y, pairs.first, pairs.second, std::move(w));
    return prob;
}

void require_pairs(const PairSet& pairs) {
    if (pairs.empty())
        throw NumericalError("no active pairs: every |W_i - W_j| exceeds the kernel support; "
                             "increase the bandwidth h");
}

} // namespace

double lambda_max(const Dataset& data, const PairSet& pairs) {
    require_pairs(pairs);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(data.n());
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto i = pairs.first[m];
        const auto j = pairs.second[m];
        const double wz = pairs.weight[m] * (data.Y[i] - data.Y[j]);
        s[i] += wz;
        s[j] -= wz;
    }
    return (2.0 * (data.X.transpose() * s)).cwiseAbs().maxCoeff();
}

FitResult solve(const Dataset& data, const PairSet& pairs, double lambda, const FitConfig& cfg,
                const Eigen::VectorXd* warm_start) {
    cfg.validate();
    require_pairs(pairs);
    if (!(lambda > 0.0) && lambda != 0.0)
        throw DataError("lambda must be nonnegative");
    PairProblem prob = make_pair_problem(data, pairs);
    return run_solve(prob, lambda, cfg, pairs.h, warm_start);
}

std::vector<std::pair<double, FitResult>> lambda_path(const Dataset& data, const PairSet& pairs,
                                                      const FitConfig& cfg) {
    cfg.validate();
    require_pairs(pairs);
    const double lmax = lambda_max(data, pairs);
    if (!(lmax > 0.0))
        throw NumericalError("lambda_max vanished: all pairwise response differences are zero");
    const std::vector<double> grid = lambda_grid(lmax, cfg);
    PairProblem prob = make_pair_problem(data, pairs);
    std::vector<std::pair<double, FitResult>> out;
    out.reserve(grid.size());
    run_path(prob, grid, cfg, [&](std::size_t, double lam, const Eigen::VectorXd& beta, const CdOutcome& o) {
        out.emplace_back(lam, finish_result(prob, beta, lam, pairs.h, o));
    });
    return out;
}

namespace {

std::vector<int> shuffled_fold_labels(std::size_t count, int folds, std::uint64_t cv_seed,
                                      std::uint64_t tag) {
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    SplitMix64 rng(derive_stream(cv_seed, tag));
    for (std::size_t t = count; t > 1; --t)
        std::swap(perm[t - 1], perm[rng.below(t)]);
    std::vector<int> fold(count);
    for (std::size_t t = 0; t < count; ++t)
        fold[perm[t]] = static_cast<int>(t % static_cast<std::size_t>(folds));
    return fold;
}

struct FoldWeights {
    Eigen::VectorXd train; // rescaled so the training loss is on the full-data scale
    Eigen::VectorXd val;   // original weights on held-out entries, zero elsewhere
    double scale = 1.0;    // the rescaling factor applied to train
};

FoldWeights split_weights(const Eigen::VectorXd& w, const std::vector<char>& in_val,
                          const std::vector<char>& in_train) {
    FoldWeights fw;
    fw.train = Eigen::VectorXd::Zero(w.size());
    fw.val = Eigen::VectorXd::Zero(w.size());
    double s_all = 0.0, s_train = 0.0;
    for (Eigen::Index t = 0; t < w.size(); ++t) {
        s_all += w[t];
        if (in_train[static_cast<std::size_t>(t)]) {
            fw.train[t] = w[t];
            s_train += w[t];
        } else if (in_val[static_cast<std::size_t>(t)]) {
            fw.val[t] = w[t];
        }
    }
    if (s_train <= 0.0 || fw.val.sum() <= 0.0)
        throw NumericalError("insufficient pairs for folds");
    fw.scale = s_all / s_train;
    fw.train *= fw.scale;
    return fw;
}

} // namespace

CvResult cv_select(const Dataset& data, double h, const Kernel& kernel, const FitConfig& cfg,
                   CvPolicy policy, int threads) {
    cfg.validate();
    if (!(h > 0.0))
        throw DataError("h must be positive");
    const PairSet pairs = build_pairs(data, h, kernel);
    require_pairs(pairs);
    const double lmax = lambda_max(data, pairs);
    if (!(lmax > 0.0))
        throw NumericalError("lambda_max vanished: all pairwise response differences are zero");
    const std::vector<double> grid = lambda_grid(lmax, cfg);

    const std::size_t m = pairs.size();
    const int folds = cfg.cv_folds;
    Eigen::VectorXd w_all = Eigen::Map<const Eigen::VectorXd>(pairs.weight.data(),
                                                              static_cast<Eigen::Index>(m));

    // Fold membership per pair, assigned once up front from cv_seed.
    std::vector<std::vector<char>> val_mask(static_cast<std::size_t>(folds),
                                            std::vector<char>(m, 0));
    std::vector<std::vector<char>> train_mask(static_cast<std::size_t>(folds),
                                              std::vector<char>(m, 0));
    if (policy == CvPolicy::pair) {
        if (m < static_cast<std::size_t>(folds))
            throw NumericalError("insufficient pairs for folds");
        const std::vector<int> fold = shuffled_fold_labels(m, folds, cfg.cv_seed, 0x70617273ull);
        for (std::size_t t = 0; t < m; ++t)
            for (int f = 0; f < folds; ++f) {
                if (fold[t] == f)
                    val_mask[static_cast<std::size_t>(f)][t] = 1;
                else
                    train_mask[static_cast<std::size_t>(f)][t] = 1;
            }
    } else {
        const std::size_t n = static_cast<std::size_t>(data.n());
        if (n < static_cast<std::size_t>(folds))
            throw NumericalError("insufficient observations for folds");
        const std::vector<int> ofold = shuffled_fold_labels(n, folds, cfg.cv_seed, 0x6f627311ull);
        for (std::size_t t = 0; t < m; ++t) {
            const int fi = ofold[static_cast<std::size_t>(pairs.first[t])];
            const int fj = ofold[static_cast<std::size_t>(pairs.second[t])];
            for (int f = 0; f < folds; ++f) {
                if (fi == f && fj == f)
                    val_mask[static_cast<std::size_t>(f)][t] = 1;
                else if (fi != f && fj != f)
                    train_mask[static_cast<std::size_t>(f)][t] = 1;
            }
        }
    }

    // Per-fold validation curves, filled independently. Fold problems
    // derive from the full problem by subtracting held-out pairs.
    PairProblem base = make_pair_problem(data, pairs);
    std::vector<std::vector<double>> fold_err(static_cast<std::size_t>(folds),
                                              std::vector<double>(grid.size(), 0.0));
    parallel_for(static_cast<std::size_t>(folds), threads, [&](std::size_t f) {
        FoldWeights fw = split_weights(w_all, val_mask[f], train_mask[f]);
        PairProblem prob;
        prob.init_subtract(base, std::move(fw.train), fw.scale);
        run_path(prob, grid, cfg, [&](std::size_t t, double, const Eigen::VectorXd&, const CdOutcome&) {
            fold_err[f][t] = prob.weighted_error(fw.val);
        });
    });

    CvResult res;
    res.curve.lambda = grid;
    res.curve.mean_error.assign(grid.size(), 0.0);
    for (std::size_t t = 0; t < grid.size(); ++t) {
        double acc = 0.0;
        for (int f = 0; f < folds; ++f)
            acc += fold_err[static_cast<std::size_t>(f)][t];
        res.curve.mean_error[t] = acc / static_cast<double>(folds);
    }

    // Minimizer; ties within 1e-12 resolve to the largest lambda.
    const double best = *std::min_element(res.curve.mean_error.begin(), res.curve.mean_error.end());
    std::size_t t_star = 0;
    for (std::size_t t = 0; t < grid.size(); ++t)
        if (res.curve.mean_error[t] <= best + 1e-12) {
            t_star = t;
            break;
        }
    res.lambda_star = grid[t_star];

    // Refit on all pairs, warm-started down the path to lambda_star.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(data.p());
    GramCache cache;
    cache.reset(data.p());
    CdOutcome last;
    for (std::size_t t = 0; t <= t_star; ++t)
        last = cd_solve(base, grid[t], cfg, beta, cache);
    res.fit = finish_result(base, beta, grid[t_star], pairs.h, last);
    return res;
}

// ---- plain weighted-least-squares lasso surface --------------------

namespace {

void check_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    if (y.size() != X.rows() || w.size() != X.rows())
        throw DataError("X/y/w row counts disagree");
    if ((w.array() < 0.0).any())
        throw DataError("weights must be nonnegative");
}

} // namespace

double lambda_max_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    check_wls(X, y, w);
    return (2.0 * (X.transpose() * w.cwiseProduct(y))).cwiseAbs().maxCoeff();
}

FitResult solve_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                    double lambda, const FitConfig& cfg, const Eigen::VectorXd* warm_start) {
    cfg.validate();
    check_wls(X, y, w);
    ObsProblem prob;
    prob.init(X, y, w);
    return run_solve(prob, lambda, cfg, 0.0, warm_start);
}

std::vector<std::pair<double, FitResult>> lambda_path_wls(const Eigen::MatrixXd& X,
                                                          const Eigen::VectorXd& y,
                                                          const Eigen::VectorXd& w,
                                                          const FitConfig& cfg) {
    cfg.validate();
    check_wls(X, y, w);
    const double lmax = lambda_max_wls(X, y, w);
    if (!(lmax > 0.0))
        throw NumericalError("lambda_max vanished: weighted response is identically zero");
    const std::vector<double> grid = lambda_grid(lmax, cfg);
    ObsProblem prob;
    prob.init(X, y, w);
    std::vector<std::pair<double, FitResult>> out;
    out.reserve(grid.size());
    run_path(prob, grid, cfg, [&](std::size_t, double lam, const Eigen::VectorXd& beta, const CdOutcome& o) {
        out.emplace_back(lam, finish_result(prob, beta, lam, 0.0, o));
    });
    return out;
}

CvResult cv_select_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                       const FitConfig& cfg, int threads) {
    cfg.validate();
    check_wls(X, y, w);
    const std::size_t n = static_cast<std::size_t>(X.rows());
    const int folds = cfg.cv_folds;
    if (n < static_cast<std::size_t>(folds))
        throw NumericalError("insufficient observations for folds");
    const double lmax = lambda_max_wls(X, y, w);
    if (!(lmax > 0.0))
        throw NumericalError("lambda_max vanished: weighted response is identically zero");
    const std::vector<double> grid = lambda_grid(lmax, cfg);

    const std::vector<int> fold = shuffled_fold_labels(n, folds, cfg.cv_seed, 0x6f627377ull);
    std::vector<std::vector<double>> fold_err(static_cast<std::size_t>(folds),
                                              std::vector<double>(grid.size(), 0.0));
    parallel_for(static_cast<std::size_t>(folds), threads, [&](std::size_t f) {
        std::vector<char> in_val(n, 0), in_train(n, 0);
        for (std::size_t i = 0; i < n; ++i)
            (fold[i] == static_cast<int>(f) ? in_val[i] : in_train[i]) = 1;
        const FoldWeights fw = split_weights(w, in_val, in_train);
        ObsProblem prob;
        prob.init(X, y, fw.train);
        run_path(prob, grid, cfg, [&](std::size_t t, double, const Eigen::VectorXd&, const CdOutcome&) {
            fold_err[f][t] = prob.weighted_error(fw.val);
        });
    });

    CvResult res;
    res.curve.lambda = grid;
    res.curve.mean_error.assign(grid.size(), 0.0);
    for (std::size_t t = 0; t < grid.size(); ++t) {
        double acc = 0.0;
        for (int f = 0; f < folds; ++f)
            acc += fold_err[static_cast<std::size_t>(f)][t];
        res.curve.mean_error[t] = acc / static_cast<double>(folds);
    }
    const double best = *std::min_element(res.curve.mean_error.begin(), res.curve.mean_error.end());
    std::size_t t_star = 0;
    for (std::size_t t = 0; t < grid.size(); ++t)
        if (res.curve.mean_error[t] <= best + 1e-12) {
            t_star = t;
            break;
        }
    res.lambda_star = grid[t_star];

    ObsProblem prob;
    prob.init(X, y, w);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    GramCache cache;
    cache.reset(X.cols());
    CdOutcome last;
    for (std::size_t t = 0; t <= t_star; ++t)
        last = cd_solve(prob, grid[t], cfg, beta, cache);
    res.fit = finish_result(prob, beta, grid[t_star], 0.0, last);
    return res;
}

// ---- one-call PRD fit ----------------------------------------------

namespace {

// Pair-weighted column scales sqrt(sum_m w Xd_k^2 / sum_m w).
Eigen::VectorXd pair_column_scales(const Dataset& data, const PairSet& pairs) {
    const Eigen::Index p = data.p();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto i = pairs.first[m];
        const auto j = pairs.second[m];
        acc += pairs.weight[m] * (data.X.row(i) - data.X.row(j)).array().square().matrix().transpose();
    }
    acc /= pairs.weight_sum();
    Eigen::VectorXd s = acc.cwiseSqrt();
    for (Eigen::Index k = 0; k < p; ++k)
        if (!(s[k] > 0.0))
            s[k] = 1.0;
    return s;
}

} // namespace

FitResult fit_prd(const Dataset& data, const Kernel& kernel, const FitConfig& cfg, CvPolicy policy,
                  int threads) {
    cfg.validate();
    const double h = cfg.h ? *cfg.h : default_bandwidth(data.n(), data.p());

    if (cfg.standardize) {
        const PairSet pairs = build_pairs(data, h, kernel);
        require_pairs(pairs);
        const Eigen::VectorXd s = pair_column_scales(data, pairs);
        Dataset scaled;
        scaled.X = data.X * s.cwiseInverse().asDiagonal();
        scaled.Y = data.Y;
        scaled.W = data.W;
        FitConfig inner = cfg;
        inner.standardize = false;
        inner.h = h;
        FitResult res = fit_prd(scaled, kernel, inner, policy, threads);
        res.beta = res.beta.cwiseQuotient(s);
        return res;
    }

    if (cfg.lambda) {
        const PairSet pairs = build_pairs(data, h, kernel);
        return solve(data, pairs, *cfg.lambda, cfg, nullptr);
    }
    return cv_select(data, h, kernel, cfg, policy, threads).fit;
}

} // namespace pairdiff
