#include "emm/onestep.hpp"

#include "emm/logsumexp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <map>
#include <numbers>

namespace emm {

namespace {
constexpr double kPi = std::numbers::pi;

Vector project_to_ball(const Vector& u) {
    double n = u.norm();
    return n > 1.0 ? Vector(u / n) : u;
}
}  // namespace

void OneStepProblem::check(double tol_mart) const {
    if (q.size() == 0 || w.rows() != q.size() || log_y.size() != q.size())
        throw ConstructionError("BadProblem", atom_id, "inconsistent problem sizes");
    if (q.minCoeff() <= 0.0)
        throw ConstructionError("BadProblem", atom_id, "child probability <= 0");
    if (std::abs(q.sum() - 1.0) > 1e-12)
        throw ConstructionError("BadProblem", atom_id, "child probabilities do not sum to one");
    double scale = 1.0 + max_abs_w();
    if ((q.transpose() * w).cwiseAbs().maxCoeff() > tol_mart * scale)
        throw ConstructionError("BadProblem", atom_id, "increment not conditionally mean zero");
    for (int j = 0; j < log_y.size(); ++j)
        if (std::isnan(log_y[j]) || log_y[j] == std::numeric_limits<double>::infinity())
            throw ConstructionError("BadProblem", atom_id, "log_y must be finite");
}

double ConvexBarrier::f(double a) const {
    return a * (1.0 + (eps / kPi) * (std::atan(a) - kPi / 2.0));
}

double ConvexBarrier::df(double a) const {
    return 1.0 + (eps / kPi) * (std::atan(a) - kPi / 2.0) + (eps / kPi) * a / (1.0 + a * a);
}

double ConvexBarrier::ddf(double a) const {
    double s = 1.0 + a * a;
    return 2.0 * eps / (kPi * s * s);
}

Matrix predictable_range(const OneStepProblem& p, double rank_tol) {
    const int d = p.dimension();
    Eigen::JacobiSVD<Matrix> svd(p.w, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv[0] : 0.0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > rank_tol * smax && sv[i] > 0.0) ++rank;
    Matrix R = Matrix::Identity(d, d);
    if (rank > 0) {
        Matrix Vr = svd.matrixV().leftCols(rank);
        R -= Vr * Vr.transpose();
    }
    return (R + R.transpose()) / 2.0;
}

double field_eval(const OneStepProblem& p, const Matrix& R, const ConvexBarrier& f,
                  const Vector& alpha, const Vector& u) {
    Vector a = p.w * u;
    double acc = 0.0;
    for (int j = 0; j < p.children(); ++j) acc += p.q[j] * f.f(alpha[j] * a[j]);
    return acc + 0.5 * (R * u).squaredNorm();
}

Vector field_grad(const OneStepProblem& p, const Matrix& R, const ConvexBarrier& f,
                  const Vector& alpha, const Vector& u) {
    Vector a = p.w * u;
    Vector g = R * u;
    for (int j = 0; j < p.children(); ++j)
        g += p.q[j] * alpha[j] * f.df(alpha[j] * a[j]) * p.w.row(j).transpose();
    return g;
}

double field_grad_bound(const OneStepProblem& p, const ConvexBarrier&, const Vector& alpha) {
    double b = 1.0;  // |R u| <= 1 on the ball
    for (int j = 0; j < p.children(); ++j) b += p.q[j] * alpha[j] * p.w.row(j).norm();
    return b;
}

MinimizeResult minimize_field_gradient(const OneStepProblem& p, const Matrix& R,
                                       const ConvexBarrier& f, const Vector& alpha,
                                       double tol_grad, int max_iter) {
    const int d = p.dimension();
    // Hessian bound: sum q a^2 f''(0) |w|^2 + 1
    double lip = 1.0;
    for (int j = 0; j < p.children(); ++j)
        lip += p.q[j] * alpha[j] * alpha[j] * f.ddf(0.0) * p.w.row(j).squaredNorm();

    Vector u = Vector::Zero(d);
    double h = field_eval(p, R, f, alpha, u);
    for (int it = 0; it < max_iter; ++it) {
        Vector g = field_grad(p, R, f, alpha, u);
        double un = u.norm();
        if (un < 1.0 - 1e-9 && g.norm() <= tol_grad)
            return {u, g.norm(), true, it};
        // projected-gradient residual for boundary stationarity
        Vector pg = u - project_to_ball(u - g / lip);
        if (pg.norm() * lip <= tol_grad)
            return {u, g.norm(), false, it};

        // Newton step; fall back to a projected gradient step if it fails
        Matrix H = R;
        Vector a = p.w * u;
        for (int j = 0; j < p.children(); ++j) {
            double c = p.q[j] * alpha[j] * alpha[j] * f.ddf(alpha[j] * a[j]);
            if (c > 0.0) H += c * p.w.row(j).transpose() * p.w.row(j);
        }
        Vector dn = H.ldlt().solve(-g);
        bool accepted = false;
        if (dn.allFinite() && dn.dot(g) < 0.0) {
            double t = 1.0;
            for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
                Vector trial = project_to_ball(u + t * dn);
                double ht = field_eval(p, R, f, alpha, trial);
                if (ht < h) {
                    u = trial;
                    h = ht;
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            Vector trial = project_to_ball(u - g / lip);
            double ht = field_eval(p, R, f, alpha, trial);
            if (ht >= h) {
                // Numerical stagnation: no descent direction improves h within
                // double resolution. An interior point with a genuinely large
                // gradient always admits a strict decrease, so a large residual
                // here can only mean the minimizer sits on the boundary.
                return {u, g.norm(), u.norm() < 1.0 - 1e-9 && g.norm() <= tol_grad, it};
            }
            u = trial;
            h = ht;
        }
    }
    throw ConstructionError("MaxIterations", p.atom_id, "field minimizer did not converge");
}

NetMinimizeResult minimize_field_net(const OneStepProblem& p, const Matrix& R,
                                     const ConvexBarrier& f, const Vector& alpha, int n_max) {
    const int d = p.dimension();
    if (d > 3) throw ConstructionError("BadProblem", p.atom_id, "net minimizer supports d <= 3");
    if (n_max < 1 || n_max > 10)
        throw ConstructionError("BadProblem", p.atom_id, "net depth must be in [1,10]");
    const double lip = field_grad_bound(p, f, alpha);
    const double tol = lip * std::ldexp(1.0, -n_max);

    // Branch and bound over dyadic balls centered on a per-level global
    // lattice of spacing r / sqrt(d) (so the balls of radius r centered on
    // it cover space). Convexity gives the lower bound
    //     min over B(c, r) >= h(c) - |grad h(c)| * r,
    // which is what makes pruning effective on flat stretches of h: near a
    // minimizer the gradient itself is small, so only balls within a few
    // radii of the optimum survive a level. A ball is discarded only when
    // that bound certifies it cannot undercut the incumbent by more than
    // `tol`, and the un-refined final level contributes at most lip * r, so
    // the returned value is within lip * 2^{1 - n_max} of the true minimum.
    using Key = std::array<long long, 3>;
    std::map<Key, Vector> centers;  // key -> evaluated (projected) point
    double upper = std::numeric_limits<double>::infinity();
    Vector arg = Vector::Zero(d);
    for (int level = 1; level <= n_max; ++level) {
        const double r = std::ldexp(1.0, -level);  // 2^-level
        const double s = r / std::sqrt(static_cast<double>(d));

        // candidate centers: lattice points within reach of the surviving
        // parent balls (the whole unit ball at the first level)
        std::map<Key, Vector> next;
        auto add_around = [&](const Vector& c, double radius) {
            const int half = static_cast<int>(std::ceil(radius / s)) + 1;
            std::vector<long long> base(d);
            for (int i = 0; i < d; ++i) base[i] = std::llround(c[i] / s);
            std::vector<int> k(d, -half);
            while (true) {
                Key key{0, 0, 0};
                Vector x(d);
                for (int i = 0; i < d; ++i) {
                    key[i] = base[i] + k[i];
                    x[i] = key[i] * s;
                }
                if ((x - c).norm() <= radius + 1e-12) next.emplace(key, std::move(x));
                int i = 0;
                for (; i < d; ++i) {
                    if (++k[i] <= half) break;
                    k[i] = -half;
                }
                if (i == d) break;
            }
        };
        if (level == 1) {
            add_around(Vector::Zero(d), 1.0 + 0.5 * r);
        } else {
            // a point of a parent ball (radius 2r) lies within r/2 of some
            // lattice point at this level; search that far out
            for (const auto& [key, c] : centers) add_around(c, 2.0 * r + 0.5 * r);
        }

        centers.clear();
        for (const auto& [key, x] : next) {
            Vector y = project_to_ball(x);
            double h = field_eval(p, R, f, alpha, y);
            if (h < upper) {
                upper = h;
                arg = y;
            }
            // |v - y| <= |v - x| <= r for feasible v in the ball around x,
            // so the first-order bound below holds at the projected point
            double g = field_grad(p, R, f, alpha, y).norm();
            if (level < n_max && h - g * r < upper - tol) centers.emplace(key, y);
        }
    }
    return {arg, upper, lip};
}

V1dResult construct_V_1d(const OneStepProblem& p, double eps_f, const Vector& alpha) {
    if (p.dimension() != 1)
        throw ConstructionError("BadProblem", p.atom_id, "construct_V_1d requires d == 1");
    double pos = 0.0, neg = 0.0;
    for (int j = 0; j < p.children(); ++j) {
        double v = p.q[j] * alpha[j] * p.w(j, 0);
        if (v >= 0.0)
            pos += v;
        else
            neg -= v;
    }
    V1dResult r;
    if (pos == 0.0 && neg == 0.0)
        r.ratio = 1.0;  // 0/0 := 1
    else if (neg == 0.0)
        r.ratio = std::numeric_limits<double>::infinity();
    else
        r.ratio = pos / neg;
    r.v.resize(p.children());
    double inv = r.ratio > 0.0 ? 1.0 / r.ratio : std::numeric_limits<double>::infinity();
    for (int j = 0; j < p.children(); ++j) {
        double base = p.w(j, 0) >= 0.0 ? std::min(1.0, inv) : std::min(1.0, r.ratio);
        r.v[j] = std::max(1.0 - eps_f, base);
    }
    r.exact = r.ratio >= 1.0 - eps_f && r.ratio <= 1.0 / (1.0 - eps_f);
    return r;
}

VndResult construct_V_nd(const OneStepProblem& p, double eps_f, const Vector& alpha,
                         double tol_grad) {
    ConvexBarrier f{eps_f};
    Matrix R = predictable_range(p);
    MinimizeResult m = minimize_field_gradient(p, R, f, alpha, tol_grad);
    VndResult r;
    r.u = m.u;
    r.interior = m.interior;
    r.v.resize(p.children());
    Vector a = p.w * m.u;
    for (int j = 0; j < p.children(); ++j) r.v[j] = f.df(alpha[j] * a[j]);
    Vector resid = Vector::Zero(p.dimension());
    for (int j = 0; j < p.children(); ++j)
        resid += p.q[j] * r.v[j] * alpha[j] * p.w.row(j).transpose();
    r.residual = resid.norm();
    return r;
}

Vector alpha_log_from_k(const OneStepProblem& p, double log_k) {
    Vector out(p.children());
    for (int j = 0; j < p.children(); ++j) out[j] = p.log_y[j] <= log_k ? 0.0 : -p.log_y[j];
    return out;
}

std::vector<double> default_log_k_grid(int max_exp) {
    std::vector<double> g;
    g.reserve(max_exp + 1);
    for (int i = 0; i <= max_exp; ++i) g.push_back(i * std::numbers::ln2);
    return g;
}

OneStepDensity lemma_L1a(const OneStepProblem& p, double eps,
                         const std::vector<double>& log_k_grid, double tol_z, double tol_grad) {
    p.check();
    if (!(eps > 0.0)) throw ConstructionError("BadProblem", p.atom_id, "eps must be > 0");
    const double eps_f = eps / (2.0 + eps);  // = 1 - 1/(1 + eps/2)
    const double wscale = 1.0 + p.max_abs_w();
    const int m = p.children();
    bool boundary_at_last = false;

    for (size_t ki = 0; ki < log_k_grid.size(); ++ki) {
        const double log_k = log_k_grid[ki];
        Vector log_alpha = alpha_log_from_k(p, log_k);
        double mass_trunc = 0.0;
        for (int j = 0; j < m; ++j)
            if (p.log_y[j] > log_k) mass_trunc += p.q[j];
        if (mass_trunc >= eps) continue;  // K must leave Q[E[Y|H] > K] < eps

        Vector alpha(m);
        for (int j = 0; j < m; ++j) alpha[j] = std::max(std::exp(log_alpha[j]), DBL_MIN);

        Vector V;
        bool feasible = false;
        bool used_gradient = false;
        if (p.dimension() == 1) {
            V1dResult r = construct_V_1d(p, eps_f, alpha);
            V = r.v;
            feasible = r.exact;
        } else {
            VndResult r = construct_V_nd(p, eps_f, alpha, tol_grad * wscale);
            V = r.v;
            used_gradient = true;
            boundary_at_last = !r.interior;
            feasible = r.interior && r.residual <= tol_z * wscale;
        }
        if (!feasible) continue;

        double denom = 0.0;
        for (int j = 0; j < m; ++j) denom += p.q[j] * V[j] * alpha[j];
        if (!(denom > 1.0 / (1.0 + eps))) continue;

        OneStepDensity out;
        out.z.resize(m);
        out.log_z.resize(m);
        double log_denom = std::log(denom);
        for (int j = 0; j < m; ++j) {
            out.log_z[j] = std::log(V[j]) + log_alpha[j] - log_denom;
            out.z[j] = std::max(V[j] * alpha[j] / denom, DBL_MIN);
        }
        out.log_alpha = std::move(log_alpha);
        out.log_K = log_k;
        out.k_index = static_cast<int>(ki);
        out.used_gradient = used_gradient;
        out.mass_truncated = mass_trunc;
        out.sup_z = out.z.maxCoeff();
        out.inf_z = out.z.minCoeff();
        Vector resid = Vector::Zero(p.dimension());
        for (int j = 0; j < m; ++j) resid += p.q[j] * out.z[j] * p.w.row(j).transpose();
        out.residual = resid.norm();
        LogSumExp lse;
        for (int j = 0; j < m; ++j) lse.add(std::log(p.q[j]) + out.log_z[j] + p.log_y[j]);
        out.log_mean_zy = lse.value();

        if (out.sup_z > 1.0 + eps + 1e-12)
            throw ConstructionError("BadProblem", p.atom_id, "one-step density exceeds 1+eps");
        if (out.residual > tol_z * wscale * (1.0 + eps) + 1e-13 * wscale)
            throw ConstructionError("BadProblem", p.atom_id, "one-step density residual too large");
        for (int j = 0; j < m; ++j)
            if (p.log_y[j] <= log_k && out.z[j] <= 1.0 - eps)
                throw ConstructionError("BadProblem", p.atom_id,
                                        "untruncated child fell below 1-eps");
        return out;
    }
    if (boundary_at_last)
        throw ConstructionError("BoundaryMinimizer", p.atom_id,
                                "field minimizer stuck on the ball boundary at the largest k");
    throw ConstructionError("NoFeasibleK", p.atom_id, "k grid exhausted for atom " + p.atom_id);
}

}  // namespace emm
