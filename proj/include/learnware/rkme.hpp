#pragma once

#include "learnware/kernel.hpp"
#include "learnware/predictor.hpp"
#include "learnware/types.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace learnware {

enum class OutputKind { regression, classification };

// Regression: dim output values. Classification: dim classes, models emit one
// score per class and the sketch stores the one-hot argmax.
struct OutputDesc {
    OutputKind kind = OutputKind::regression;
    std::size_t dim = 1;

    friend bool operator==(const OutputDesc&, const OutputDesc&) = default;
};

// Coordinates [0, x_dims) carry inputs, [x_dims, x_dims + y_dims) carry encoded outputs.
struct Layout {
    std::size_t x_dims = 0;
    std::size_t y_dims = 0;

    std::size_t total() const { return x_dims + y_dims; }

    friend bool operator==(const Layout&, const Layout&) = default;
};

// Joint sample z_i = (x_i, encoded y_i). Stays on the developer or user side.
struct EmpiricalSketch {
    Matrix z;
    Layout layout;

    Eigen::Index m() const { return z.rows(); }
};

// The reduced set (beta, t) plus what is needed to compare it with others.
struct RkmeSpec {
    WeightedPointSet reduced;
    KernelSpec kernel;
    Layout layout;
    std::size_t n = 0;
    std::size_t source_m = 0;

    const Vector& beta() const { return reduced.weights; }
    const Matrix& points() const { return reduced.points; }

    void validate() const {
        reduced.validate();
        kernel.validate();
        require(n >= 1, "reduced set must be nonempty");
        require(static_cast<std::size_t>(reduced.size()) == n, "reduced set row count must equal n");
        require(n <= source_m, "reduced set cannot be larger than its source sample");
        require(layout.total() == static_cast<std::size_t>(reduced.dim()), "layout does not match point dimension");
    }

    friend bool operator==(const RkmeSpec& a, const RkmeSpec& b) {
        return a.kernel == b.kernel && a.layout == b.layout && a.n == b.n && a.source_m == b.source_m &&
               a.reduced.points == b.reduced.points && a.reduced.weights == b.reduced.weights;
    }
};

struct ReduceOptions {
    int max_outer_iters = 100;
    int t_steps_per_iter = 5;
    double rel_tol = 1e-6;
    double ridge_scale = 1e-8;
    std::uint64_t seed = 0;

    // Backtracking line search on t.
    double initial_step = 1.0;
    double shrink = 0.5;
    double sufficient_decrease = 1e-4;
    int max_backtracks = 40;

    void validate() const {
        require(max_outer_iters > 0 && t_steps_per_iter > 0, "iteration counts must be positive");
        require(rel_tol > 0.0 && ridge_scale > 0.0, "tolerances must be positive");
    }
};

// A reduction and the objective after initialisation and after every outer iteration.
struct Reduction {
    RkmeSpec spec;
    std::vector<double> trace;

    double objective() const { return trace.back(); }
};

// ---------------------------------------------------------------------------
// Output encoding

// Index of the largest score; ties go to the lowest index.
inline std::size_t argmax_row(const Matrix& scores, Eigen::Index row) {
    std::size_t best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
        if (scores(row, c) > scores(row, static_cast<Eigen::Index>(best))) {
            best = static_cast<std::size_t>(c);
        }
    }
    return best;
}

inline Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(classes));
    for (std::size_t r = 0; r < labels.size(); ++r) {
        require(labels[r] < classes, "class label out of range");
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[r])) = 1.0;
    }
    return out;
}

// Model outputs -> sketch coordinates.
inline Matrix encode_outputs(const Matrix& raw, const OutputDesc& desc) {
    require(static_cast<std::size_t>(raw.cols()) == desc.dim, "model output dimension does not match the island");
    if (desc.kind == OutputKind::regression) {
        return raw;
    }
    std::vector<std::size_t> labels(static_cast<std::size_t>(raw.rows()));
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
        labels[static_cast<std::size_t>(r)] = argmax_row(raw, r);
    }
    return one_hot(labels, desc.dim);
}

// Ground-truth labels -> sketch coordinates. Classification labels are an m x 1
// column of class indices.
inline Matrix encode_labels(const Matrix& y, const OutputDesc& desc) {
    if (desc.kind == OutputKind::regression) {
        require(static_cast<std::size_t>(y.cols()) == desc.dim, "label dimension does not match the island");
        return y;
    }
    require(y.cols() == 1, "classification labels must be a single column of class indices");
    std::vector<std::size_t> labels(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double v = y(r, 0);
        require(v >= 0.0 && v == std::floor(v), "class labels must be nonnegative integers");
        labels[static_cast<std::size_t>(r)] = static_cast<std::size_t>(v);
    }
    return one_hot(labels, desc.dim);
}

inline std::size_t encoded_dims(const OutputDesc& desc) { return desc.dim; }

// Feeds X through the model and concatenates each input with its encoded output.
inline EmpiricalSketch make_sketch(const Predictor& model, const Matrix& x, const OutputDesc& desc) {
    require(x.rows() >= 1, "sketch needs at least one input row");
    require(x.allFinite(), "sketch inputs must be finite");
    Matrix raw;
    try {
        raw = model.predict(x);
    } catch (const std::exception& e) {
        throw SubmissionError(std::string("model failed while sketching: ") + e.what());
    }
    if (raw.rows() != x.rows() || static_cast<std::size_t>(raw.cols()) != desc.dim) {
        throw SubmissionError("model output shape does not match the island output descriptor");
    }
    if (!raw.allFinite()) {
        throw SubmissionError("model produced non-finite outputs while sketching");
    }
    EmpiricalSketch sketch;
    sketch.z = hconcat(x, encode_outputs(raw, desc));
    sketch.layout = Layout{static_cast<std::size_t>(x.cols()), desc.dim};
    return sketch;
}

// Sketch from data the caller already holds; labels optional.
inline EmpiricalSketch sketch_from_data(const Matrix& x, const std::optional<Matrix>& y, const OutputDesc& desc) {
    require(x.rows() >= 1, "sketch needs at least one input row");
    require(x.allFinite(), "sketch inputs must be finite");
    EmpiricalSketch sketch;
    if (y) {
        require(y->rows() == x.rows(), "label row count does not match inputs");
        sketch.z = hconcat(x, encode_labels(*y, desc));
        sketch.layout = Layout{static_cast<std::size_t>(x.cols()), desc.dim};
    } else {
        sketch.z = x;
        sketch.layout = Layout{static_cast<std::size_t>(x.cols()), 0};
    }
    return sketch;
}

// ---------------------------------------------------------------------------
// Reduced-set objective
//
//   F(beta, t) = beta' K_tt beta - (2/m) beta' K_tz 1 + (1/m^2) 1' K_zz 1
//
// i.e. the squared RKHS distance between the empirical embedding of z and
// sum_j beta_j k(t_j, .).

namespace detail {

class ReductionProblem {
public:
    ReductionProblem(const EmpiricalSketch& sketch, const KernelSpec& k) : z_(sketch.z), k_(k) {
        require(z_.rows() >= 1, "sketch is empty");
        const Eigen::Index m = z_.rows();
        const Matrix kzz = gram(k_, z_);
        constant_ = kzz.sum() / static_cast<double>(m * m);
    }

    Eigen::Index m() const { return z_.rows(); }
    Eigen::Index dim() const { return z_.cols(); }
    double constant() const { return constant_; }
    const KernelSpec& kernel() const { return k_; }

    // (1/m) K_tz 1
    Vector mean_embedding_at(const Matrix& t) const {
        check_t(t);
        return gram(k_, t, z_).rowwise().sum() / static_cast<double>(m());
    }

    double objective(const Vector& beta, const Matrix& t) const {
        check_t(t);
        require(beta.size() == t.rows(), "beta length must equal the number of reduced points");
        const Vector kz = mean_embedding_at(t);
        return finish(beta, gram(k_, t), kz);
    }

    // Objective and its gradient with respect to every t_j, for fixed beta.
    double objective_and_gradient(const Vector& beta, const Matrix& t, Matrix* grad) const {
        const Eigen::Index n = t.rows();
        const Eigen::Index d = t.cols();
        const Eigen::Index mm = m();
        const double inv_m = 1.0 / static_cast<double>(mm);
        const double g4 = 4.0 * k_.gamma;
        Matrix ktt = gram(k_, t);
        Vector kz = Vector::Zero(n);
        if (grad != nullptr) {
            grad->setZero(n, d);
        }
        Vector diff(d);
        for (Eigen::Index j = 0; j < n; ++j) {
            double acc = 0.0;
            Vector pull = Vector::Zero(d);
            for (Eigen::Index i = 0; i < mm; ++i) {
                double sq = 0.0;
                for (Eigen::Index c = 0; c < d; ++c) {
                    diff(c) = t(j, c) - z_(i, c);
                    sq += diff(c) * diff(c);
                }
                const double kv = std::exp(-k_.gamma * sq);
                acc += kv;
                if (grad != nullptr) {
                    pull.noalias() += kv * diff;
                }
            }
            kz(j) = acc * inv_m;
            if (grad != nullptr) {
                Vector push = Vector::Zero(d);
                for (Eigen::Index l = 0; l < n; ++l) {
                    if (l != j) {
                        push.noalias() += beta(l) * ktt(j, l) * (t.row(j) - t.row(l)).transpose();
                    }
                }
                grad->row(j) = (beta(j) * g4 * (pull * inv_m - push)).transpose();
            }
        }
        return finish(beta, ktt, kz);
    }

    // (K_tt + lambda I) beta = (1/m) K_tz 1 with lambda = ridge_scale * trace(K_tt) / n.
    Vector solve_beta(const Matrix& t, double ridge_scale, const Vector* kz_cache = nullptr) const {
        check_t(t);
        const Eigen::Index n = t.rows();
        Matrix a = gram(k_, t);
        const double lambda = ridge_scale * a.trace() / static_cast<double>(n);
        a.diagonal().array() += lambda;
        const Vector rhs = kz_cache != nullptr ? *kz_cache : mean_embedding_at(t);
        Eigen::LLT<Matrix> llt(a);
        Vector beta;
        if (llt.info() == Eigen::Success) {
            beta = llt.solve(rhs);
            // one round of iterative refinement
            beta += llt.solve(rhs - a * beta);
        } else {
            Eigen::LDLT<Matrix> ldlt(a);
            beta = ldlt.solve(rhs);
            beta += ldlt.solve(rhs - a * beta);
        }
        return beta;
    }

private:
    void check_t(const Matrix& t) const {
        require(t.rows() >= 1, "reduced set must be nonempty");
        require(t.cols() == z_.cols(), "reduced points and sketch differ in dimension");
        require(t.allFinite(), "reduced points must be finite");
    }

    double finish(const Vector& beta, const Matrix& ktt, const Vector& kz) const {
        const double value = beta.dot(ktt * beta) - 2.0 * beta.dot(kz) + constant_;
        return std::max(0.0, value);
    }

    const Matrix& z_;
    KernelSpec k_;
    double constant_ = 0.0;
};

// Seeded k-means++ seeding over the rows of z. Existing centers (possibly not
// rows of z) are kept and `count` more are appended.
inline Matrix kmeanspp_extend(const Matrix& z, const Matrix& existing, Eigen::Index count, Rng& rng) {
    const Eigen::Index m = z.rows();
    const Eigen::Index d = z.cols();
    Matrix centers(existing.rows() + count, d);
    if (existing.rows() > 0) {
        centers.topRows(existing.rows()) = existing;
    }
    std::vector<bool> taken(static_cast<std::size_t>(m), false);
    Vector d2 = Vector::Constant(m, std::numeric_limits<double>::infinity());
    auto absorb = [&](Eigen::Index c) {
        for (Eigen::Index i = 0; i < m; ++i) {
            const double sq = (z.row(i) - centers.row(c)).squaredNorm();
            d2(i) = std::min(d2(i), sq);
        }
    };
    Eigen::Index filled = existing.rows();
    for (Eigen::Index c = 0; c < filled; ++c) {
        absorb(c);
    }
    while (filled < centers.rows()) {
        Eigen::Index pick = -1;
        if (filled == 0) {
            pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(m)));
        } else {
            double total = 0.0;
            for (Eigen::Index i = 0; i < m; ++i) {
                if (!taken[static_cast<std::size_t>(i)]) {
                    total += d2(i);
                }
            }
            if (total > 0.0) {
                const double r = rng.uniform() * total;
                double cum = 0.0;
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (taken[static_cast<std::size_t>(i)] || d2(i) <= 0.0) {
                        continue;
                    }
                    cum += d2(i);
                    pick = i;
                    if (cum > r) {
                        break;
                    }
                }
            }
            if (pick < 0) {
                // every remaining row coincides with a center: lowest free index
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (!taken[static_cast<std::size_t>(i)]) {
                        pick = i;
                        break;
                    }
                }
            }
        }
        require(pick >= 0, "not enough rows to seed the requested centers");
        taken[static_cast<std::size_t>(pick)] = true;
        centers.row(filled) = z.row(pick);
        absorb(filled);
        ++filled;
    }
    return centers;
}

} // namespace detail

inline double objective(const Vector& beta, const Matrix& t, const EmpiricalSketch& sketch, const KernelSpec& k) {
    return detail::ReductionProblem(sketch, k).objective(beta, t);
}

// d objective / d t for fixed beta; row j is the gradient for t_j.
inline Matrix objective_gradient(const Vector& beta, const Matrix& t, const EmpiricalSketch& sketch,
                                 const KernelSpec& k) {
    require(beta.size() == t.rows(), "beta length must equal the number of reduced points");
    require(t.cols() == sketch.z.cols(), "reduced points and sketch differ in dimension");
    Matrix grad;
    detail::ReductionProblem(sketch, k).objective_and_gradient(beta, t, &grad);
    return grad;
}

inline Vector solve_beta(const Matrix& t, const EmpiricalSketch& sketch, const KernelSpec& k, double ridge_scale) {
    require(ridge_scale > 0.0, "ridge_scale must be positive");
    return detail::ReductionProblem(sketch, k).solve_beta(t, ridge_scale);
}

namespace detail {

inline Reduction run_reduction(const ReductionProblem& problem, const EmpiricalSketch& sketch, Matrix t,
                               std::optional<Vector> warm_beta, const ReduceOptions& opts) {
    const Eigen::Index n = t.rows();
    Vector beta = problem.solve_beta(t, opts.ridge_scale);
    Matrix grad;
    double f = problem.objective_and_gradient(beta, t, &grad);
    if (warm_beta) {
        Matrix warm_grad;
        const double fw = problem.objective_and_gradient(*warm_beta, t, &warm_grad);
        if (fw < f) {
            beta = *warm_beta;
            f = fw;
            grad = std::move(warm_grad);
        }
    }
    std::vector<double> trace{f};

    for (int outer = 0; outer < opts.max_outer_iters && f > 0.0; ++outer) {
        const double f_start = f;
        for (int step = 0; step < opts.t_steps_per_iter; ++step) {
            const double g2 = grad.squaredNorm();
            if (!(g2 > 0.0)) {
                break;
            }
            double alpha = opts.initial_step;
            bool moved = false;
            for (int bt = 0; bt < opts.max_backtracks; ++bt) {
                Matrix trial = t - alpha * grad;
                Matrix trial_grad;
                const double ft = problem.objective_and_gradient(beta, trial, &trial_grad);
                if (ft <= f - opts.sufficient_decrease * alpha * g2) {
                    t = std::move(trial);
                    grad = std::move(trial_grad);
                    f = ft;
                    moved = true;
                    break;
                }
                alpha *= opts.shrink;
            }
            if (!moved) {
                break;
            }
        }
        const Vector candidate = problem.solve_beta(t, opts.ridge_scale);
        Matrix candidate_grad;
        const double fc = problem.objective_and_gradient(candidate, t, &candidate_grad);
        if (fc <= f) {
            beta = candidate;
            f = fc;
            grad = std::move(candidate_grad);
        } else {
            problem.objective_and_gradient(beta, t, &grad);
        }
        trace.push_back(f);
        if (f_start - f < opts.rel_tol * f_start) {
            break;
        }
    }

    Reduction out;
    out.spec.reduced = WeightedPointSet(std::move(t), std::move(beta));
    out.spec.kernel = problem.kernel();
    out.spec.layout = sketch.layout;
    out.spec.n = static_cast<std::size_t>(n);
    out.spec.source_m = static_cast<std::size_t>(sketch.m());
    out.trace = std::move(trace);
    return out;
}

inline void check_reduce_args(const EmpiricalSketch& sketch, Eigen::Index n, const KernelSpec& k,
                              const ReduceOptions& opts) {
    k.validate();
    opts.validate();
    require(sketch.m() >= 1, "sketch is empty");
    require(sketch.layout.total() == static_cast<std::size_t>(sketch.z.cols()), "sketch layout does not match data");
    require(sketch.z.allFinite(), "sketch has non-finite entries");
    require(n >= 1, "reduced set size must be at least 1");
    require(n <= sketch.m(), "reduced set size cannot exceed the sample size");
}

} // namespace detail

// Alternating minimisation: beta in closed form, then gradient steps on t with
// backtracking. The recorded objective never increases.
inline Reduction reduce_with_trace(const EmpiricalSketch& sketch, std::size_t n, const KernelSpec& k,
                                   const ReduceOptions& opts = {}) {
    const auto nn = static_cast<Eigen::Index>(n);
    detail::check_reduce_args(sketch, nn, k, opts);
    const detail::ReductionProblem problem(sketch, k);
    Rng rng(opts.seed);
    Matrix t = detail::kmeanspp_extend(sketch.z, Matrix(0, sketch.z.cols()), nn, rng);
    return detail::run_reduction(problem, sketch, std::move(t), std::nullopt, opts);
}

inline RkmeSpec reduce(const EmpiricalSketch& sketch, std::size_t n, const KernelSpec& k,
                       const ReduceOptions& opts = {}) {
    return reduce_with_trace(sketch, n, k, opts).spec;
}

// Reductions for an increasing list of sizes. Each size starts from the previous
// solution plus extra k-means++ centers, so the objective is non-increasing in n.
inline std::vector<Reduction> reduce_nested(const EmpiricalSketch& sketch, std::vector<std::size_t> sizes,
                                            const KernelSpec& k, const ReduceOptions& opts = {}) {
    require(!sizes.empty(), "no reduced set sizes given");
    require(std::is_sorted(sizes.begin(), sizes.end()), "reduced set sizes must be increasing");
    for (std::size_t s : sizes) {
        detail::check_reduce_args(sketch, static_cast<Eigen::Index>(s), k, opts);
    }
    const detail::ReductionProblem problem(sketch, k);
    Rng rng(opts.seed);
    std::vector<Reduction> out;
    Matrix t(0, sketch.z.cols());
    Vector beta(0);
    for (std::size_t s : sizes) {
        const auto extra = static_cast<Eigen::Index>(s) - t.rows();
        Matrix start = detail::kmeanspp_extend(sketch.z, t, extra, rng);
        std::optional<Vector> warm;
        if (beta.size() > 0) {
            Vector padded = Vector::Zero(static_cast<Eigen::Index>(s));
            padded.head(beta.size()) = beta;
            warm = padded;
        }
        Reduction r = detail::run_reduction(problem, sketch, std::move(start), warm, opts);
        t = r.spec.points();
        beta = r.spec.beta();
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coordinate projection

// Keeps the listed coordinates (sorted, unique) of every reduced point.
inline RkmeSpec marginalize(const RkmeSpec& spec, std::vector<std::size_t> keep) {
    require(!keep.empty(), "marginalize needs at least one coordinate to keep");
    std::sort(keep.begin(), keep.end());
    require(std::adjacent_find(keep.begin(), keep.end()) == keep.end(), "duplicate coordinate in keep set");
    require(keep.back() < spec.layout.total(), "coordinate outside the specification");
    RkmeSpec out = spec;
    out.reduced.points = select_columns(spec.points(), keep);
    const auto x_kept = static_cast<std::size_t>(
        std::count_if(keep.begin(), keep.end(), [&](std::size_t c) { return c < spec.layout.x_dims; }));
    out.layout = Layout{x_kept, keep.size() - x_kept};
    return out;
}

// Input coordinates only.
inline RkmeSpec marginalize_inputs(const RkmeSpec& spec) {
    std::vector<std::size_t> keep(spec.layout.x_dims);
    for (std::size_t c = 0; c < keep.size(); ++c) {
        keep[c] = c;
    }
    return marginalize(spec, std::move(keep));
}

} // namespace learnware
