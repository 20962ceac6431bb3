#include "emm/onestep.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <random>

using namespace emm;

namespace {

OneStepProblem make_problem(Vector q, Matrix w, Vector log_y) {
    OneStepProblem p;
    p.atom_id = "test";
    p.q = std::move(q);
    p.w = std::move(w);
    p.log_y = std::move(log_y);
    return p;
}

OneStepProblem random_problem(std::mt19937_64& rng, int m, int d, double y_span = 5.0) {
    std::uniform_real_distribution<double> uprob(0.5, 1.5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> ly(0.0, y_span);
    Vector q(m);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += q[j] = uprob(rng);
    q /= sum;
    Matrix w(m, d);
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < d; ++k) w(j, k) = gauss(rng);
    Eigen::RowVectorXd mean = q.transpose() * w;
    for (int j = 0; j < m; ++j) w.row(j) -= mean;
    Vector log_y(m);
    for (int j = 0; j < m; ++j) log_y[j] = ly(rng);
    return make_problem(std::move(q), std::move(w), std::move(log_y));
}

}  // namespace

TEST_CASE("barrier closed forms") {
    ConvexBarrier f{0.3};
    CHECK(f.f(0.0) == 0.0);
    CHECK(f.df(0.0) == doctest::Approx(1.0 - 0.3 / 2.0).epsilon(1e-14));
    CHECK(f.ddf(0.0) == doctest::Approx(2.0 * 0.3 / M_PI).epsilon(1e-14));
}

TEST_CASE("barrier derivative bounds and finite differences on a wide grid") {
    for (double eps : {0.05, 0.5, 0.9}) {
        ConvexBarrier f{eps};
        const double h = 1e-4;
        for (double a = -100.0; a <= 100.0; a += 0.01) {
            double d1 = f.df(a);
            CHECK(d1 > 1.0 - eps);
            CHECK(d1 <= 1.0);
            CHECK(f.ddf(a) > 0.0);
            double fd = (f.f(a + h) - f.f(a - h)) / (2.0 * h);
            CHECK(std::abs(fd - d1) <= 1e-6);
        }
    }
}

TEST_CASE("predictable range projection, hand cases") {
    SUBCASE("all increments zero gives the identity") {
        OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(),
                                        Matrix::Zero(2, 3), Vector::Zero(2));
        Matrix R = predictable_range(p);
        CHECK((R - Matrix::Identity(3, 3)).norm() == doctest::Approx(0.0));
    }
    SUBCASE("full span gives zero") {
        Matrix w(3, 2);
        w << 1, 1, 1, -1, -2, 0;
        OneStepProblem p = make_problem((Vector(3) << 0.25, 0.25, 0.5).finished(), w,
                                        Vector::Zero(3));
        CHECK(predictable_range(p).norm() == doctest::Approx(0.0).epsilon(1e-10));
    }
    SUBCASE("increments along e1 leave e2") {
        Matrix w(2, 2);
        w << 1, 0, -1, 0;
        OneStepProblem p =
            make_problem((Vector(2) << 0.5, 0.5).finished(), w, Vector::Zero(2));
        Matrix R = predictable_range(p);
        Matrix expect(2, 2);
        expect << 0, 0, 0, 1;
        CHECK((R - expect).norm() == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("projection invariants on random problems") {
    std::mt19937_64 rng(31);
    for (int d : {1, 2, 3, 5}) {
        for (int rep = 0; rep < 1000; ++rep) {
            int m = 2 + static_cast<int>(rng() % 4);
            OneStepProblem p = random_problem(rng, m, d);
            // occasionally collapse rows to force rank deficiency
            if (rep % 3 == 0 && m > 2) p.w.row(m - 1) = 0.5 * p.w.row(0);
            Matrix R = predictable_range(p);
            double wscale = std::max(1e-300, p.max_abs_w());
            CHECK((R * R - R).norm() <= 1e-10);
            CHECK((R - R.transpose()).norm() <= 1e-12);
            for (int j = 0; j < m; ++j)
                CHECK((R * p.w.row(j).transpose()).norm() <= 1e-10 * wscale);
            Eigen::FullPivLU<Matrix> lu(p.w);
            lu.setThreshold(1e-10);
            int span_rank = lu.rank();
            CHECK(std::lround(R.trace()) == d - span_rank);
        }
    }
}

TEST_CASE("field evaluation") {
    ConvexBarrier f{0.5};
    Matrix w(2, 1);
    w << 1, -1;
    OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(), w, Vector::Zero(2));
    Matrix R = predictable_range(p);
    Vector alpha = Vector::Ones(2);
    SUBCASE("zero point gives zero") {
        CHECK(field_eval(p, R, f, alpha, Vector::Zero(1)) == doctest::Approx(0.0));
    }
    SUBCASE("hand value at u = 0.5") {
        Vector u(1);
        u << 0.5;
        double expect = 0.5 * f.f(0.5) + 0.5 * f.f(-0.5);
        CHECK(field_eval(p, R, f, alpha, u) == doctest::Approx(expect));
        CHECK(expect >= 0.0);  // convexity through f(0) = 0
    }
    SUBCASE("pure projection part when increments vanish") {
        OneStepProblem p0 = make_problem((Vector(2) << 0.5, 0.5).finished(),
                                         Matrix::Zero(2, 2), Vector::Zero(2));
        Matrix R0 = predictable_range(p0);
        Vector u(2);
        u << 0.6, -0.3;
        CHECK(field_eval(p0, R0, f, Vector::Ones(2), u) ==
              doctest::Approx(0.5 * u.squaredNorm()));
    }
}

TEST_CASE("gradient minimizer, hand cases") {
    ConvexBarrier f{0.5};
    SUBCASE("symmetric law has the minimizer at zero") {
        Matrix w(2, 1);
        w << 1, -1;
        OneStepProblem p =
            make_problem((Vector(2) << 0.5, 0.5).finished(), w, Vector::Zero(2));
        MinimizeResult res =
            minimize_field_gradient(p, predictable_range(p), f, Vector::Ones(2), 1e-11);
        CHECK(res.interior);
        CHECK(std::abs(res.u[0]) <= 1e-9);
    }
    SUBCASE("zero increments minimize the quadratic at zero") {
        OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(),
                                        Matrix::Zero(2, 2), Vector::Zero(2));
        MinimizeResult res =
            minimize_field_gradient(p, predictable_range(p), f, Vector::Ones(2), 1e-11);
        CHECK(res.interior);
        CHECK(res.u.norm() <= 1e-10);
    }
    SUBCASE("damped skewed instance stays interior") {
        ConvexBarrier fl{0.9};
        Matrix w(2, 1);
        w << 2, -1;
        OneStepProblem p =
            make_problem((Vector(2) << 1.0 / 3.0, 2.0 / 3.0).finished(), w, Vector::Zero(2));
        Vector alpha(2);
        alpha << 1.0, 0.5;
        MinimizeResult res =
            minimize_field_gradient(p, predictable_range(p), fl, alpha, 1e-11);
        CHECK(res.interior);
        CHECK(field_grad(p, predictable_range(p), fl, alpha, res.u).norm() <= 1e-10);
    }
}

TEST_CASE("net minimizer cross-oracle") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> ueps(0.1, 0.9);
    std::uniform_real_distribution<double> ua(0.1, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
        int d = 1 + static_cast<int>(rng() % 3);
        int m = 2 + static_cast<int>(rng() % 3);
        OneStepProblem p = random_problem(rng, m, d);
        ConvexBarrier f{ueps(rng)};
        Vector alpha(m);
        for (int j = 0; j < m; ++j) alpha[j] = ua(rng);
        Matrix R = predictable_range(p);
        const int n_max = 6;
        MinimizeResult grad = minimize_field_gradient(p, R, f, alpha, 1e-11);
        NetMinimizeResult net = minimize_field_net(p, R, f, alpha, n_max);
        double hg = field_eval(p, R, f, alpha, grad.u);
        CHECK(std::abs(net.value - hg) <=
              net.lipschitz * std::pow(2.0, -n_max + 1) + 1e-10);
        CHECK(net.value >= hg - 1e-10);  // the gradient path is the true minimum
    }
}

TEST_CASE("one-dimensional V construction") {
    SUBCASE("undamped mean-zero increments give the identity") {
        Matrix w(2, 1);
        w << 1, -1;
        OneStepProblem p =
            make_problem((Vector(2) << 0.5, 0.5).finished(), w, Vector::Zero(2));
        V1dResult res = construct_V_1d(p, 0.3, Vector::Ones(2));
        CHECK(res.ratio == doctest::Approx(1.0));
        CHECK(res.exact);
        CHECK((res.v - Vector::Ones(2)).cwiseAbs().maxCoeff() <= 1e-15);
    }
    SUBCASE("hand-computed damped instance") {
        Matrix w(2, 1);
        w << 2, -1;
        OneStepProblem p =
            make_problem((Vector(2) << 1.0 / 3.0, 2.0 / 3.0).finished(), w, Vector::Zero(2));
        Vector alpha(2);
        alpha << 1.0, 0.5;
        V1dResult res = construct_V_1d(p, 0.9, alpha);
        CHECK(res.ratio == doctest::Approx(2.0));
        CHECK(res.v[0] == doctest::Approx(0.5));
        CHECK(res.v[1] == doctest::Approx(1.0));
        CHECK(res.exact);
        double resid = p.q[0] * res.v[0] * alpha[0] * 2.0 - p.q[1] * res.v[1] * alpha[1] * 1.0;
        CHECK(resid == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("ratio outside the band flags inexact") {
        Matrix w(2, 1);
        w << 2, -1;
        OneStepProblem p =
            make_problem((Vector(2) << 1.0 / 3.0, 2.0 / 3.0).finished(), w, Vector::Zero(2));
        Vector alpha(2);
        alpha << 1.0, 0.5;
        V1dResult res = construct_V_1d(p, 0.1, alpha);  // band [0.9, 1/0.9]
        CHECK(res.ratio == doctest::Approx(2.0));
        CHECK_FALSE(res.exact);
    }
}

TEST_CASE("d-dimensional V construction") {
    SUBCASE("zero increments yield the constant f'(0)") {
        OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(),
                                        Matrix::Zero(2, 2), Vector::Zero(2));
        VndResult res = construct_V_nd(p, 0.4, Vector::Ones(2), 1e-11);
        CHECK(res.interior);
        for (int j = 0; j < 2; ++j) CHECK(res.v[j] == doctest::Approx(1.0 - 0.4 / 2.0));
    }
    SUBCASE("mean-zero d=2 instance has small residual") {
        Matrix w(3, 2);
        w << 1, 1, 1, -1, -1, 0;
        OneStepProblem p = make_problem((Vector(3) << 0.25, 0.25, 0.5).finished(), w,
                                        Vector::Zero(3));
        VndResult res = construct_V_nd(p, 0.4, Vector::Ones(3), 1e-11);
        CHECK(res.interior);
        CHECK(res.residual <= 1e-9);
        for (int j = 0; j < 3; ++j) {
            CHECK(res.v[j] > 1.0 - 0.4);
            CHECK(res.v[j] < 1.0);
        }
    }
}

TEST_CASE("alpha damping weights") {
    Matrix w(2, 1);
    w << 1, -1;
    OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(), w,
                                    (Vector(2) << 100.0, std::log(2.0)).finished());
    SUBCASE("large k leaves alpha at one") {
        Vector la = alpha_log_from_k(p, 101.0);
        CHECK(la[0] == 0.0);
        CHECK(la[1] == 0.0);
    }
    SUBCASE("log-domain reciprocal for exceeding targets") {
        Vector la = alpha_log_from_k(p, std::log(10.0));
        CHECK(la[0] == doctest::Approx(-100.0));
        CHECK(la[1] == 0.0);
    }
    SUBCASE("alpha increases to one as k grows") {
        double prev = -1e300;
        for (double lk : {0.0, 1.0, 10.0, 50.0, 200.0}) {
            double cur = alpha_log_from_k(p, lk).minCoeff();
            CHECK(cur >= prev);
            prev = cur;
        }
        CHECK(prev == 0.0);
    }
}

TEST_CASE("one-step density construction") {
    std::vector<double> grid = default_log_k_grid(64);
    SUBCASE("small targets give the degenerate density") {
        Matrix w(2, 1);
        w << 1, -1;
        OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(), w,
                                        (Vector(2) << 0.0, -1.0).finished());
        OneStepDensity z = lemma_L1a(p, 0.2, grid, 1e-10);
        CHECK((z.z - Vector::Ones(2)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(z.mass_truncated == 0.0);
    }
    SUBCASE("zero increments give the degenerate density") {
        OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(),
                                        Matrix::Zero(2, 1), (Vector(2) << 30.0, 0.0).finished());
        OneStepDensity z = lemma_L1a(p, 0.5, grid, 1e-10);
        CHECK((z.z - Vector::Ones(2)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("huge target forces damping with an exact one-step identity") {
        Matrix w(3, 1);
        w << 2, 1, -1.5;
        OneStepProblem p =
            make_problem((Vector(3) << 0.25, 0.25, 0.5).finished(), w,
                         (Vector(3) << 0.3, 0.0, 0.0).finished());
        OneStepDensity z = lemma_L1a(p, 1.0, grid, 1e-10);
        CHECK(z.log_alpha[0] < 0.0);  // the heavy child got damped
        CHECK(z.residual <= 1e-14 * (1.0 + p.max_abs_w()));
        CHECK((p.q.asDiagonal() * z.z).sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (int j = 0; j < 3; ++j) {
            CHECK(z.z[j] > 0.0);
            CHECK(z.z[j] <= 1.0 + 1.0 + 1e-12);
        }
        CHECK(z.sup_z > 1.0);  // mass moved away from the damped child
    }
    SUBCASE("invariants on random problems") {
        std::mt19937_64 rng(51);
        for (int rep = 0; rep < 100; ++rep) {
            int d = 1 + static_cast<int>(rng() % 3);
            int m = 2 + static_cast<int>(rng() % 3);
            OneStepProblem p = random_problem(rng, m, d, 40.0);
            const double eps = 0.4;
            OneStepDensity z = lemma_L1a(p, eps, grid, 1e-10);
            CHECK((p.q.asDiagonal() * z.z).sum() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(z.inf_z > 0.0);
            CHECK(z.sup_z <= 1.0 + eps + 1e-12);
            CHECK(z.residual <= 1e-10 * (1.0 + p.max_abs_w()));
            for (int j = 0; j < m; ++j)
                if (p.log_y[j] <= z.log_K) CHECK(z.z[j] > 1.0 - eps);
        }
    }
    SUBCASE("feasibility is monotone in k") {
        std::mt19937_64 rng(52);
        for (int rep = 0; rep < 50; ++rep) {
            OneStepProblem p = random_problem(rng, 3, 1, 40.0);
            OneStepDensity z = lemma_L1a(p, 0.4, grid, 1e-10);
            // every grid level above the chosen K must also be feasible
            for (size_t i = z.k_index; i < grid.size(); i += 7) {
                std::vector<double> tail(grid.begin() + i, grid.end());
                OneStepDensity z2 = lemma_L1a(p, 0.4, tail, 1e-10);
                CHECK(z2.k_index == 0);
            }
        }
    }
    SUBCASE("grid exhaustion reports the atom") {
        Matrix w(2, 1);
        w << 1, -1;
        OneStepProblem p = make_problem((Vector(2) << 0.5, 0.5).finished(), w,
                                        (Vector(2) << 500.0, 0.0).finished());
        std::vector<double> tiny = default_log_k_grid(4);
        try {
            lemma_L1a(p, 0.001, tiny, 1e-10);
            CHECK(false);
        } catch (const ConstructionError& e) {
            CHECK(e.code == "NoFeasibleK");
            CHECK(e.atom == "test");
        }
    }
}
