#include "learnware/kmedoids.hpp"
#include "learnware/simplex_qp.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace learnware;

namespace {

std::vector<std::vector<double>> to_rows(const Matrix& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out[static_cast<std::size_t>(i)].push_back(m(i, j));
        }
    }
    return out;
}

} // namespace

TEST(SimplexQp, InteriorOptimum) {
    const Matrix C = Matrix::Identity(2, 2);
    Vector c(2);
    c << 0.5, 0.5;
    const auto r = minimize_on_simplex(C, c);
    EXPECT_NEAR(r.w(0), 0.5, 1e-9);
    EXPECT_NEAR(r.w(1), 0.5, 1e-9);
    EXPECT_LE(r.gap, 1e-8);
}

TEST(SimplexQp, VertexOptimum) {
    Matrix C(3, 3);
    C << 1.0, 0.2, 0.1, 0.2, 1.0, 0.3, 0.1, 0.3, 1.0;
    const Vector c = C.col(1);
    const auto r = minimize_on_simplex(C, c);
    EXPECT_NEAR(r.w(1), 1.0, 1e-9);
    EXPECT_NEAR(r.objective, -C(1, 1), 1e-12);
}

TEST(SimplexQp, MatchesGridOracle) {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const Eigen::Index k = 2 + trial % 2;
        const Matrix a = learnware::testing::random_matrix(rng, k, k + 2);
        const Matrix C = a * a.transpose();
        const Vector c = learnware::testing::random_vector(rng, k);
        const auto r = minimize_on_simplex(C, c);
        ASSERT_NEAR(r.w.sum(), 1.0, 1e-12);
        ASSERT_GE(r.w.minCoeff(), 0.0);
        std::vector<double> cv(c.data(), c.data() + c.size());
        const auto [grid_f, grid_w] = oracles::simplex_grid(to_rows(C), cv);
        // the grid is only 1e-3 fine, so it can miss the optimum from above but never beat it
        EXPECT_LE(r.objective, grid_f + 1e-9) << "trial " << trial;
        EXPECT_NEAR(r.objective, grid_f, 1e-3) << "trial " << trial;
    }
}

TEST(SimplexQp, RejectsMismatchedShapes) {
    EXPECT_THROW(minimize_on_simplex(Matrix::Identity(2, 2), Vector::Zero(3)), UsageError);
    EXPECT_THROW(minimize_on_simplex(Matrix(0, 0), Vector(0)), UsageError);
}

TEST(Pam, OneMedoidPerCluster) {
    Rng rng(5);
    Matrix pts(30, 2);
    const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
    for (Eigen::Index i = 0; i < 30; ++i) {
        pts(i, 0) = centers[i % 3][0] + rng.normal(0, 0.5);
        pts(i, 1) = centers[i % 3][1] + rng.normal(0, 0.5);
    }
    Matrix D(30, 30);
    for (Eigen::Index i = 0; i < 30; ++i) {
        for (Eigen::Index j = 0; j < 30; ++j) {
            D(i, j) = (pts.row(i) - pts.row(j)).norm();
        }
    }
    const auto medoids = pam(D, 3);
    ASSERT_EQ(medoids.size(), 3u);
    std::set<std::size_t> clusters;
    for (std::size_t m : medoids) {
        clusters.insert(m % 3);
    }
    EXPECT_EQ(clusters.size(), 3u);
    EXPECT_EQ(pam(D, 3), medoids);
}

TEST(Pam, KAtLeastNReturnsAll) {
    Matrix D(3, 3);
    D << 0, 1, 2, 1, 0, 1, 2, 1, 0;
    EXPECT_EQ(pam(D, 3), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(pam(D, 7), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(pam(D, 1), (std::vector<std::size_t>{1}));
}
