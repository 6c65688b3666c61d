#include "learnware/codec.hpp"
#include "learnware/rkme.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace learnware;
using learnware::testing::random_matrix;
using learnware::testing::random_vector;
using learnware::testing::two_clusters_1d;

namespace {

EmpiricalSketch raw_sketch(Matrix z) {
    EmpiricalSketch s;
    s.layout = Layout{static_cast<std::size_t>(z.cols()), 0};
    s.z = std::move(z);
    return s;
}

FunctionPredictor identity_1d() {
    return FunctionPredictor(1, 1, [](const Vector& x) { return x; });
}

} // namespace

TEST(MakeSketch, IdentityModel) {
    const auto model = identity_1d();
    Matrix x(2, 1);
    x << 1, 2;
    const EmpiricalSketch s = make_sketch(model, x, OutputDesc{OutputKind::regression, 1});
    Matrix expected(2, 2);
    expected << 1, 1, 2, 2;
    EXPECT_EQ(s.z, expected);
    EXPECT_EQ(s.layout, (Layout{1, 1}));
}

TEST(MakeSketch, ConstantZeroRegressor) {
    const FunctionPredictor zero(3, 1, [](const Vector&) { return Vector::Zero(1); });
    Rng rng(1);
    const EmpiricalSketch s = make_sketch(zero, random_matrix(rng, 10, 3), OutputDesc{OutputKind::regression, 1});
    EXPECT_TRUE(s.z.col(3).isZero(0.0));
}

TEST(MakeSketch, ClassifierIsOneHotEncoded) {
    const FunctionPredictor clf(1, 2, [](const Vector&) {
        Vector scores(2);
        scores << 0.2, 0.8;
        return scores;
    });
    Matrix x(1, 1);
    x << 0.0;
    const EmpiricalSketch s = make_sketch(clf, x, OutputDesc{OutputKind::classification, 2});
    Matrix expected(1, 3);
    expected << 0, 0, 1;
    EXPECT_EQ(s.z, expected);
    EXPECT_EQ(s.layout, (Layout{1, 2}));
}

TEST(MakeSketch, NonFiniteOutputIsSubmissionError) {
    const FunctionPredictor bad(1, 1, [](const Vector&) { return Vector::Constant(1, std::nan("")); });
    Matrix x(3, 1);
    x << 1, 2, 3;
    EXPECT_THROW(make_sketch(bad, x, OutputDesc{}), SubmissionError);
    const FunctionPredictor throws(1, 1, [](const Vector&) -> Vector { throw std::runtime_error("boom"); });
    EXPECT_THROW(make_sketch(throws, x, OutputDesc{}), SubmissionError);
}

TEST(Objective, ExactRepresentationIsZero) {
    Rng rng(2);
    const Matrix z = random_matrix(rng, 8, 2);
    const auto sketch = raw_sketch(z);
    const Vector beta = Vector::Constant(8, 1.0 / 8.0);
    EXPECT_NEAR(objective(beta, z, sketch, KernelSpec(0.5)), 0.0, 1e-14);
}

TEST(Objective, ZeroWeightsGiveEmbeddingNorm) {
    Rng rng(3);
    const Matrix z = random_matrix(rng, 6, 2);
    const KernelSpec k(0.7);
    const auto sketch = raw_sketch(z);
    const double norm2 = gram(k, z).sum() / 36.0;
    EXPECT_NEAR(objective(Vector::Zero(2), random_matrix(rng, 2, 2), sketch, k), norm2, 1e-14);
}

TEST(Objective, HandExpandedToyInstance) {
    // z = {0, 1}, one reduced point t = 0.5 with beta = 0.7, gamma = 0.5.
    Matrix z(2, 1);
    z << 0.0, 1.0;
    Matrix t(1, 1);
    t << 0.5;
    const Vector beta = Vector::Constant(1, 0.7);
    const double expected = 0.49 - 0.7 * 2.0 * std::exp(-0.125) + 0.25 * (2.0 + 2.0 * std::exp(-0.5));
    EXPECT_NEAR(objective(beta, t, raw_sketch(z), KernelSpec(0.5)), expected, 1e-14);
}

TEST(Objective, DimensionMismatch) {
    const auto sketch = raw_sketch(Matrix::Zero(3, 2));
    EXPECT_THROW(objective(Vector::Zero(1), Matrix::Zero(1, 3), sketch, KernelSpec(1.0)), UsageError);
    EXPECT_THROW(objective(Vector::Zero(2), Matrix::Zero(1, 2), sketch, KernelSpec(1.0)), UsageError);
}

TEST(SolveBeta, ExactSupportGivesUniformWeights) {
    Matrix z(4, 1);
    z << -3.0, -1.0, 1.0, 3.0;
    const Vector beta = solve_beta(z, raw_sketch(z), KernelSpec(0.5), 1e-12);
    for (Eigen::Index i = 0; i < 4; ++i) {
        EXPECT_NEAR(beta(i), 0.25, 1e-9);
    }
}

TEST(SolveBeta, SinglePointScalarSolve) {
    Matrix z(3, 1);
    z << 0.0, 1.0, 2.5;
    Matrix t(1, 1);
    t << 0.8;
    const double gamma = 0.3;
    const double ridge = 1e-3;
    double mean_k = 0.0;
    for (double v : {0.0, 1.0, 2.5}) {
        mean_k += oracles::gauss(gamma, 0.8, v) / 3.0;
    }
    const Vector beta = solve_beta(t, raw_sketch(z), KernelSpec(gamma), ridge);
    EXPECT_NEAR(beta(0), mean_k / (1.0 + ridge), 1e-14);
}

TEST(SolveBeta, DuplicatedDatasetIsRepresentedExactly) {
    Rng rng(4);
    const Matrix unique = random_matrix(rng, 5, 2);
    Matrix doubled(10, 2);
    doubled << unique, unique;
    const auto sketch = raw_sketch(doubled);
    const KernelSpec k(0.5);
    const Vector beta = solve_beta(unique, sketch, k, 1e-10);
    EXPECT_NEAR(objective(beta, unique, sketch, k), 0.0, 1e-12);
}

TEST(SolveBeta, NormalEquationResidualIsSmall) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto sketch = raw_sketch(random_matrix(rng, 40, 3));
        const Matrix t = random_matrix(rng, 8, 3);
        const KernelSpec k(rng.uniform(0.1, 1.0));
        const double ridge = 1e-8;
        const Vector beta = solve_beta(t, sketch, k, ridge);
        Matrix a = gram(k, t);
        a.diagonal().array() += ridge * a.trace() / 8.0;
        const Matrix ktz = gram(k, t, sketch.z);
        const Vector rhs = ktz.rowwise().sum() / 40.0;
        EXPECT_LE((a * beta - rhs).lpNorm<Eigen::Infinity>(), 1e-8 * (1.0 + ktz.lpNorm<Eigen::Infinity>()));
    }
}

TEST(ObjectiveGradient, MatchesCentralDifferences) {
    Rng rng(6);
    for (int trial = 0; trial < 25; ++trial) {
        const auto d = static_cast<Eigen::Index>(1 + rng.index(3));
        const auto sketch = raw_sketch(random_matrix(rng, 15, d));
        const Matrix t = random_matrix(rng, 4, d);
        const Vector beta = random_vector(rng, 4, 0.5);
        const KernelSpec k(rng.uniform(0.2, 1.0));
        const Matrix g = objective_gradient(beta, t, sketch, k);
        const double h = 1e-6;
        Matrix fd(t.rows(), t.cols());
        for (Eigen::Index j = 0; j < t.rows(); ++j) {
            for (Eigen::Index c = 0; c < d; ++c) {
                Matrix up = t;
                Matrix down = t;
                up(j, c) += h;
                down(j, c) -= h;
                fd(j, c) = (objective(beta, up, sketch, k) - objective(beta, down, sketch, k)) / (2.0 * h);
            }
        }
        const double rel = (g - fd).norm() / std::max(1e-12, fd.norm());
        EXPECT_LE(rel, 1e-4) << "trial " << trial;
    }
}

TEST(Reduce, FullSizeIsExact) {
    Rng rng(7);
    const auto sketch = raw_sketch(random_matrix(rng, 12, 2));
    const Reduction r = reduce_with_trace(sketch, 12, KernelSpec(0.5));
    EXPECT_NEAR(r.objective(), 0.0, 1e-10);
}

TEST(Reduce, RejectsBadSizes) {
    const auto sketch = raw_sketch(Matrix::Zero(5, 1));
    EXPECT_THROW(reduce(sketch, 0, KernelSpec(1.0)), UsageError);
    EXPECT_THROW(reduce(sketch, 6, KernelSpec(1.0)), UsageError);
}

TEST(Reduce, NearGridOracleOnTwoClusters) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(100 + seed);
        const Matrix z = two_clusters_1d(rng, 10);
        const double gamma = 0.5;
        std::vector<double> zs(z.data(), z.data() + z.size());
        const auto oracle = oracles::reduced_set_grid_1d(zs, gamma);
        ReduceOptions opts;
        opts.seed = seed;
        const Reduction r = reduce_with_trace(raw_sketch(z), 2, KernelSpec(gamma), opts);
        EXPECT_LE(r.objective(), 1.05 * oracle.objective) << "seed " << seed;
    }
}

TEST(Reduce, TraceIsNonIncreasing) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(200 + seed);
        ReduceOptions opts;
        opts.seed = seed;
        const Reduction r = reduce_with_trace(raw_sketch(random_matrix(rng, 60, 2)), 6, KernelSpec(0.4), opts);
        for (std::size_t i = 1; i < r.trace.size(); ++i) {
            EXPECT_LE(r.trace[i], r.trace[i - 1]);
        }
    }
}

TEST(Reduce, DeterministicGivenSeed) {
    Rng rng(8);
    const auto sketch = raw_sketch(random_matrix(rng, 50, 3));
    ReduceOptions opts;
    opts.seed = 42;
    EXPECT_EQ(reduce(sketch, 7, KernelSpec(0.3), opts), reduce(sketch, 7, KernelSpec(0.3), opts));
}

TEST(Reduce, NestedSizesAreMonotone) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(300 + seed);
        ReduceOptions opts;
        opts.seed = seed;
        const auto path = reduce_nested(raw_sketch(random_matrix(rng, 80, 2)), {5, 10}, KernelSpec(0.5), opts);
        EXPECT_LE(path[1].objective(), path[0].objective()) << "seed " << seed;
    }
}

TEST(Reduce, SpecCarriesOnlyTheReducedSet) {
    Rng rng(9);
    const auto sketch = raw_sketch(random_matrix(rng, 100, 2));
    const RkmeSpec spec = reduce(sketch, 10, KernelSpec(0.5));
    EXPECT_EQ(spec.points().rows(), 10);
    EXPECT_EQ(spec.n, 10u);
    EXPECT_EQ(spec.source_m, 100u);
    const json doc = to_json(spec);
    EXPECT_EQ(doc.at("points").size(), 10u);
}

TEST(Marginalize, KeepAllIsIdentity) {
    Rng rng(10);
    EmpiricalSketch s;
    s.z = random_matrix(rng, 20, 3);
    s.layout = Layout{2, 1};
    const RkmeSpec spec = reduce(s, 4, KernelSpec(0.5));
    EXPECT_EQ(marginalize(spec, {0, 1, 2}), spec);
}

TEST(Marginalize, MatchesRestrictedKernel) {
    Rng rng(11);
    const KernelSpec k(0.6);
    EmpiricalSketch s1{random_matrix(rng, 30, 3), Layout{2, 1}};
    EmpiricalSketch s2{random_matrix(rng, 30, 3), Layout{2, 1}};
    const RkmeSpec a = reduce(s1, 5, k);
    const RkmeSpec b = reduce(s2, 5, k);
    const RkmeSpec ma = marginalize(a, {0, 2});
    const RkmeSpec mb = marginalize(b, {0, 2});
    // restricted kernel: ignore coordinate 1
    double aa = 0, ab = 0, bb = 0;
    auto kr = [&](const Matrix& p, Eigen::Index i, const Matrix& q, Eigen::Index j) {
        const double d0 = p(i, 0) - q(j, 0);
        const double d2 = p(i, 2) - q(j, 2);
        return std::exp(-k.gamma * (d0 * d0 + d2 * d2));
    };
    for (Eigen::Index i = 0; i < 5; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) {
            aa += a.beta()(i) * a.beta()(j) * kr(a.points(), i, a.points(), j);
            bb += b.beta()(i) * b.beta()(j) * kr(b.points(), i, b.points(), j);
            ab += a.beta()(i) * b.beta()(j) * kr(a.points(), i, b.points(), j);
        }
    }
    EXPECT_NEAR(rkhs_distance(k, ma.reduced, mb.reduced), std::sqrt(std::max(0.0, aa - 2 * ab + bb)), 1e-10);
    EXPECT_EQ(ma.layout, (Layout{1, 1}));
}

TEST(Marginalize, DroppingOneHotOutputs) {
    Rng rng(12);
    EmpiricalSketch s{random_matrix(rng, 20, 5), Layout{2, 3}};
    const RkmeSpec m = marginalize_inputs(reduce(s, 4, KernelSpec(0.5)));
    EXPECT_EQ(m.layout, (Layout{2, 0}));
    EXPECT_THROW(marginalize(m, {}), UsageError);
}

TEST(SpecJson, RoundTripIsBitExact) {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        EmpiricalSketch s{random_matrix(rng, 25, 3, 3.0), Layout{2, 1}};
        ReduceOptions opts;
        opts.seed = static_cast<std::uint64_t>(trial);
        const RkmeSpec spec = reduce(s, 5, KernelSpec(rng.uniform(0.1, 2.0)), opts);
        const RkmeSpec back = spec_from_json(json::parse(to_json(spec).dump()));
        EXPECT_EQ(back, spec);
    }
}

TEST(SpecJson, RejectsMalformedDocuments) {
    Rng rng(14);
    EmpiricalSketch s{random_matrix(rng, 10, 2), Layout{2, 0}};
    json doc = to_json(reduce(s, 3, KernelSpec(0.5)));
    json wrong_version = doc;
    wrong_version["version"] = 2;
    EXPECT_THROW(spec_from_json(wrong_version), CodecError);
    json extra_rows = doc;
    extra_rows["points"].push_back(json::array({0.0, 0.0}));
    EXPECT_THROW(spec_from_json(extra_rows), CodecError);
    json no_kernel = doc;
    no_kernel.erase("kernel");
    EXPECT_THROW(spec_from_json(no_kernel), CodecError);
}
