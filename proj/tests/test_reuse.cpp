#include "learnware/model_zoo.hpp"
#include "learnware/reuse.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace learnware;

namespace {

const OutputDesc kScalar{OutputKind::regression, 1};

PredictorPtr constant(double v, std::size_t in = 1) {
    return std::make_shared<FunctionPredictor>(in, 1, [v](const Vector&) { return Vector::Constant(1, v); });
}

RkmeSpec point_spec(const Matrix& points, const Vector& beta, double gamma = 0.5) {
    RkmeSpec s;
    s.reduced = WeightedPointSet(points, beta);
    s.kernel = KernelSpec(gamma);
    s.layout = Layout{static_cast<std::size_t>(points.cols()), 0};
    s.n = static_cast<std::size_t>(points.rows());
    s.source_m = s.n;
    return s;
}

ReuseMember with_spec(PredictorPtr model, RkmeSpec spec, double weight, LearnwareId id) {
    ReuseMember m = as_member(std::move(model), id);
    m.spec = std::move(spec);
    m.weight = weight;
    return m;
}

Matrix grid_inputs() {
    Matrix x(5, 1);
    x << -2, -1, 0, 1, 2;
    return x;
}

} // namespace

TEST(Ensemble, AveragesRegressors) {
    const Matrix x = grid_inputs();
    const Matrix y = ensemble_average({as_member(constant(0.0)), as_member(constant(2.0))}, x, kScalar);
    EXPECT_TRUE(y.isApprox(Matrix::Ones(5, 1)));
}

TEST(Ensemble, IdenticalMembersAndPermutation) {
    Rng rng(1);
    const Matrix x = learnware::testing::random_matrix(rng, 30, 2);
    const Matrix t = learnware::testing::random_matrix(rng, 30, 1);
    const auto a = train_builtin(ModelKind::builtin_ridge, x, t);
    const auto b = train_builtin(ModelKind::builtin_knn, x, t);
    const auto c = train_builtin(ModelKind::builtin_stump_ensemble, x, t);
    EXPECT_TRUE(ensemble_average({as_member(a), as_member(a), as_member(a)}, x, kScalar).isApprox(a->predict(x)));
    const Matrix abc = ensemble_average({as_member(a), as_member(b), as_member(c)}, x, kScalar);
    const Matrix cab = ensemble_average({as_member(c), as_member(a), as_member(b)}, x, kScalar);
    EXPECT_TRUE(abc.isApprox(cab, 1e-14));
}

TEST(Ensemble, ClassificationVotesOnMeanScores) {
    const OutputDesc three{OutputKind::classification, 3};
    auto scores = [](double a, double b, double c) {
        return std::make_shared<FunctionPredictor>(1, 3, [=](const Vector&) {
            Vector v(3);
            v << a, b, c;
            return v;
        });
    };
    const Matrix y = ensemble_average({as_member(scores(0.9, 0.1, 0.0)), as_member(scores(0.0, 0.6, 0.4))},
                                      grid_inputs(), three);
    ASSERT_EQ(y.cols(), 3);
    // mean scores 0.45, 0.35, 0.2
    EXPECT_EQ(y(0, 0), 1.0);
    EXPECT_EQ(y(0, 1), 0.0);
    EXPECT_EQ(y.col(0).sum(), 5.0);
    const Matrix tie = ensemble_average({as_member(scores(0.5, 0.5, 0.0))}, grid_inputs(), three);
    EXPECT_EQ(tie(0, 0), 1.0);
}

TEST(Ensemble, HeterogeneousOutputsRejected) {
    auto two = std::make_shared<FunctionPredictor>(1, 2, [](const Vector& x) { return Vector::Constant(2, x(0)); });
    EXPECT_THROW(ensemble_average({as_member(constant(1.0)), as_member(two)}, grid_inputs(), kScalar), UsageError);
    EXPECT_THROW(ensemble_average({}, grid_inputs(), kScalar), UsageError);
}

TEST(Ensemble, WithUserModel) {
    const Matrix x = grid_inputs();
    EXPECT_TRUE(ensemble_with_user_model({}, constant(3.0), x, kScalar).isApprox(Matrix::Constant(5, 1, 3.0)));
    const Matrix y = ensemble_with_user_model({as_member(constant(0.0)), as_member(constant(3.0))}, constant(6.0), x,
                                              kScalar);
    EXPECT_TRUE(y.isApprox(Matrix::Constant(5, 1, 3.0)));
}

TEST(Kde, PeaksAtSinglePoint) {
    Matrix t(1, 2);
    t << 1.0, -1.0;
    const auto spec = point_spec(t, Vector::Constant(1, 0.7));
    EXPECT_DOUBLE_EQ(kde_score(spec, Vector(t.row(0).transpose())), 1.0);
    EXPECT_LT(kde_score(spec, Vector::Zero(2)), 1.0);
    EXPECT_THROW(kde_score(spec, Vector::Zero(3)), UsageError);
}

TEST(Kde, InvariantToPositiveBetaScaling) {
    Rng rng(2);
    const Matrix t = learnware::testing::random_matrix(rng, 6, 2);
    Vector beta = learnware::testing::random_vector(rng, 6);
    const Vector x = learnware::testing::random_vector(rng, 2);
    const double base = kde_score(point_spec(t, beta), x);
    EXPECT_NEAR(kde_score(point_spec(t, 3.7 * beta), x), base, 1e-15);
}

TEST(Kde, HeavierClusterScoresHigher) {
    Matrix t(2, 1);
    t << -3.0, 3.0;
    Vector beta(2);
    beta << 0.7, 0.3;
    const auto spec = point_spec(t, beta);
    EXPECT_GT(kde_score(spec, Vector::Constant(1, -3.0)), kde_score(spec, Vector::Constant(1, 3.0)));
    EXPECT_NEAR(kde_score(spec, Vector::Constant(1, -3.0)), 0.7 + 0.3 * std::exp(-0.5 * 36.0), 1e-15);
}

TEST(Kde, NonPositiveWeightsFallBackToFloor) {
    Matrix t(2, 1);
    t << 0.0, 1.0;
    Vector beta(2);
    beta << -1.0, 0.0;
    SelectorConfig cfg;
    cfg.density_floor = 1e-6;
    EXPECT_EQ(kde_score(point_spec(t, beta), Vector::Zero(1), cfg), 1e-6);
    cfg.density_floor = 0.0;
    EXPECT_THROW(kde_score(point_spec(t, beta), Vector::Zero(1), cfg), UsageError);
}

TEST(Selector, SingleMemberIsConstant) {
    Matrix t(1, 1);
    t << 0.0;
    const auto g = selector_assign({with_spec(constant(1.0), point_spec(t, Vector::Ones(1)), 1.0, 1)}, grid_inputs());
    EXPECT_EQ(g, std::vector<std::size_t>(5, 0));
}

TEST(Selector, DisjointSupports) {
    Matrix left(1, 1);
    left << -5.0;
    Matrix right(1, 1);
    right << 5.0;
    const std::vector<ReuseMember> members{with_spec(constant(-1.0), point_spec(left, Vector::Ones(1)), 0.5, 1),
                                           with_spec(constant(1.0), point_spec(right, Vector::Ones(1)), 0.5, 2)};
    Matrix x(3, 1);
    x << 4.5, -4.0, 5.5;
    EXPECT_EQ(selector_assign(members, x), (std::vector<std::size_t>{1, 0, 1}));
    const Matrix y = selector_reuse(members, x);
    EXPECT_EQ(y(0, 0), 1.0);
    EXPECT_EQ(y(1, 0), -1.0);
    EXPECT_EQ(y(2, 0), 1.0);
}

TEST(Selector, ZeroWeightsEliminate) {
    Matrix left(1, 1);
    left << -5.0;
    Matrix right(1, 1);
    right << 5.0;
    const std::vector<ReuseMember> members{with_spec(constant(-1.0), point_spec(left, Vector::Ones(1)), 0.0, 1),
                                           with_spec(constant(1.0), point_spec(right, Vector::Ones(1)), 1.0, 2)};
    Matrix x(2, 1);
    x << -5.0, 5.0;
    EXPECT_EQ(selector_assign(members, x), (std::vector<std::size_t>{1, 1}));
}

TEST(Selector, ArgmaxInvariantUnderPositiveRescaling) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Vector w = learnware::testing::random_vector(rng, 4).cwiseAbs();
        w /= w.sum();
        Matrix density = learnware::testing::random_matrix(rng, 20, 4).cwiseAbs();
        const auto g = weighted_argmax(w, density);
        const double a = 0.01 + 10.0 * rng.uniform();
        const double b = 0.01 + 10.0 * rng.uniform();
        EXPECT_EQ(weighted_argmax(a * w, density), g);
        EXPECT_EQ(weighted_argmax(w, b * density), g);
        EXPECT_EQ(weighted_argmax(a * w, b * density), g);
    }
}

TEST(Selector, RequiresSimplexWeights) {
    Matrix t(1, 1);
    t << 0.0;
    EXPECT_THROW(selector_assign({with_spec(constant(1.0), point_spec(t, Vector::Ones(1)), 0.5, 1)}, grid_inputs()),
                 UsageError);
    EXPECT_THROW(selector_assign({}, grid_inputs()), UsageError);
    EXPECT_THROW(selector_assign({as_member(constant(1.0))}, grid_inputs()), UsageError);
}

TEST(Augment, AppendsMemberOutputs) {
    const Matrix x = grid_inputs();
    EXPECT_EQ(augment_features({}, x), x);
    const Matrix a = augment_features({as_member(constant(7.0))}, x);
    ASSERT_EQ(a.cols(), 2);
    EXPECT_EQ(a.col(1), Matrix::Constant(5, 1, 7.0));
    ReuseMember sub = as_member(constant(1.0));
    sub.columns = {0};
    Rng rng(1);
    EXPECT_EQ(augment_features({sub}, learnware::testing::random_matrix(rng, 5, 3)).cols(), 4);
    EXPECT_THROW(augment_features({as_member(constant(1.0, 2))}, x), UsageError);
}

TEST(Augment, NestedFeaturesNeverRaiseTrainingLoss) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto data = learnware::testing::task_sample(rng, rng.uniform(-2, 2), rng.uniform(-2, 2), 60);
        const auto other = learnware::testing::task_sample(rng, 0, 0, 60);
        const auto helper = train_builtin(ModelKind::builtin_knn, other.x, other.y);
        const std::vector<ReuseMember> members{as_member(helper)};
        const Matrix xa = augment_features(members, data.x);
        const auto plain = RidgePredictor::train(data.x, data.y, 0.0);
        const auto augmented = RidgePredictor::train(xa, data.y, 0.0);
        const double loss_plain = (plain->predict(data.x) - data.y).squaredNorm();
        const double loss_aug = (augmented->predict(xa) - data.y).squaredNorm();
        EXPECT_LE(loss_aug, loss_plain * (1.0 + 1e-9) + 1e-12) << "trial " << trial;
    }
}

TEST(Deploy, PlansDispatch) {
    const Matrix x = grid_inputs();
    ReusePlan plan;
    EXPECT_THROW(deploy(plan, x, kScalar), UsageError);
    plan.members = {as_member(constant(2.0)), as_member(constant(4.0))};
    EXPECT_EQ(deploy(plan, x, kScalar)(0, 0), 2.0);
    plan.mode = ReuseMode::ensemble;
    EXPECT_EQ(deploy(plan, x, kScalar)(0, 0), 3.0);
    plan.mode = ReuseMode::ensemble_plus_user;
    EXPECT_THROW(deploy(plan, x, kScalar), UsageError);
    plan.user_model = constant(6.0);
    EXPECT_EQ(deploy(plan, x, kScalar)(0, 0), 4.0);
    plan.mode = ReuseMode::feature_augment;
    plan.user_model = std::make_shared<FunctionPredictor>(
        3, 1, [](const Vector& v) { return Vector::Constant(1, v(0) + v(1) + v(2)); });
    EXPECT_EQ(deploy(plan, x, kScalar)(0, 0), -2.0 + 2.0 + 4.0);
}
