#include "ebssc/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "ebssc/coder.hpp"
#include "ebssc/conv.hpp"
#include "ebssc/energy.hpp"
#include "ebssc/error.hpp"

namespace ebssc::oracle {

namespace {

constexpr Real kDivergenceSlack = 1e-9;

FeatureTensor random_tensor(const Shape3& shape, std::mt19937_64& rng) {
    std::normal_distribution<Real> n(0, 1);
    FeatureTensor t(shape);
    for (auto& v : t.data()) v = n(rng);
    return t;
}

void project_unit_ball(FeatureTensor& z) {
    const Real n = l2_norm(z);
    if (n > 1) z *= 1 / n;
}

} // namespace

Shape3 code_shape_for(const Shape3& signal, const FilterBank& bank, std::size_t pad) {
    if (signal.height + 2 * pad < bank.kernel_h() || signal.width + 2 * pad < bank.kernel_w()) {
        throw ShapeError("signal " + signal.to_string() + " too small for filter bank " + bank.shape_string());
    }
    return {bank.num_filters(), signal.height + 2 * pad - bank.kernel_h() + 1,
            signal.width + 2 * pad - bank.kernel_w() + 1};
}

Real gram_spectral_norm(const FilterBank& bank, const Shape3& code_shape, std::size_t pad, std::size_t iterations,
                        std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FeatureTensor z = random_tensor(code_shape, rng);
    Real lambda = 0;
    for (std::size_t it = 0; it < iterations; ++it) {
        const Real n = l2_norm(z);
        if (n == 0) return 0;
        z *= 1 / n;
        FeatureTensor next = cross_correlate(reconstruct(z, bank, pad), bank, pad);
        lambda = inner(z, next);
        z = std::move(next);
    }
    return lambda;
}

OracleReport ista_csc(const FeatureTensor& x, const FilterBank& bank, Real beta, std::size_t pad,
                      const IstaOptions& options) {
    const Shape3 zs = code_shape_for(x.shape(), bank, pad);
    // Power iteration approaches λmax from below; the margin keeps the step inside 1/L.
    const Real lipschitz = 2 * gram_spectral_norm(bank, zs, pad) * 1.01;
    const Real max_step = lipschitz > 0 ? 1 / lipschitz : 1;
    const Real step = options.step > 0 ? options.step : max_step;
    if (step > max_step * (1 + 1e-12)) {
        throw ArgumentError("ISTA step " + std::to_string(step) + " exceeds 1/L = " + std::to_string(max_step));
    }
    OracleReport report;
    FeatureTensor z(zs);
    report.objective_trace.push_back(lsq_objective(x, z, bank, beta, pad));
    const ThresholdPair t = ThresholdPair::symmetric(step * beta);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        FeatureTensor residual = x;
        residual -= reconstruct(z, bank, pad);
        FeatureTensor moved = z;
        moved.add_scaled(cross_correlate(residual, bank, pad), 2 * step);
        FeatureTensor next = shrink(moved, t);
        const Real f = lsq_objective(x, next, bank, beta, pad);
        const Real prev = report.objective_trace.back();
        if (f > prev + kDivergenceSlack * std::max(Real{1}, std::abs(prev))) {
            throw OracleError("ISTA objective increased from " + std::to_string(prev) + " to " + std::to_string(f));
        }
        FeatureTensor delta = next;
        delta -= z;
        z = std::move(next);
        report.objective_trace.push_back(f);
        report.iterations = it + 1;
        if (l2_norm(delta) <= options.tolerance * std::max(Real{1}, l2_norm(z))) {
            report.converged = true;
            break;
        }
    }
    report.final_point = std::move(z);
    return report;
}

OracleReport pga_ssc(const FeatureTensor& x, const FilterBank& bank, const ThresholdPair& thresholds,
                     std::size_t pad, const PgaOptions& options) {
    const FeatureTensor v = cross_correlate(x, bank, pad);
    thresholds.require_proper(v.shape());
    const Real vnorm = l2_norm(v);
    const Real step = options.step > 0 ? options.step : (vnorm > 0 ? 0.25 / vnorm : 1);

    std::vector<Real> scaled_plus(thresholds.plus.values()), scaled_minus(thresholds.minus.values());
    for (auto& b : scaled_plus) b *= step;
    for (auto& b : scaled_minus) b *= step;
    const ThresholdPair scaled{ThresholdMap(thresholds.plus.layout(), std::move(scaled_plus)),
                               ThresholdMap(thresholds.minus.layout(), std::move(scaled_minus))};

    std::mt19937_64 rng(options.seed);
    FeatureTensor z = random_tensor(v.shape(), rng);
    z *= 0.5 / std::max(l2_norm(z), Real{1e-300});

    OracleReport report;
    Real current = threshold_energy(v, z, thresholds);
    Real best = current;
    FeatureTensor best_point = z;
    report.objective_trace.push_back(best);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        FeatureTensor moved = z;
        moved.add_scaled(v, step);
        z = shrink(moved, scaled);
        project_unit_ball(z);
        const Real f = threshold_energy(v, z, thresholds);
        if (f < current - kDivergenceSlack * std::max(Real{1}, std::abs(current))) {
            throw OracleError("projected gradient ascent objective decreased from " + std::to_string(current) +
                              " to " + std::to_string(f));
        }
        const Real improvement = f - current;
        current = f;
        if (f > best) {
            best = f;
            best_point = z;
        }
        report.objective_trace.push_back(best);
        report.iterations = it + 1;
        if (improvement <= options.tolerance * std::max(std::abs(f), Real{1e-300}) && it > 0) {
            report.converged = true;
            break;
        }
    }
    report.final_point = std::move(best_point);
    return report;
}

OracleReport unit_recon_solve(const FeatureTensor& x, const FilterBank& bank, Real beta, std::size_t pad,
                              const UnitReconOptions& options) {
    using Matrix = Eigen::MatrixXd;
    using Vector = Eigen::VectorXd;
    const Shape3 zs = code_shape_for(x.shape(), bank, pad);
    const std::size_t n = zs.size();
    if (n > options.max_code_size) {
        throw ArgumentError("unit_recon_solve: code size " + std::to_string(n) + " exceeds " +
                            std::to_string(options.max_code_size));
    }
    const auto ni = static_cast<Eigen::Index>(n);
    const auto mi = static_cast<Eigen::Index>(x.size());

    // Dense synthesis matrix, one column per code coordinate.
    Matrix d(mi, ni);
    for (std::size_t j = 0; j < n; ++j) {
        FeatureTensor e(zs);
        e[j] = 1;
        const FeatureTensor col = reconstruct(e, bank, pad);
        for (std::size_t i = 0; i < x.size(); ++i) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    const Vector xv = Eigen::Map<const Vector>(x.data().data(), mi);
    const Vector c = d.transpose() * xv;
    const Real gamma = beta / 2;
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(d.transpose() * d);
    const Vector lambda = eig.eigenvalues().cwiseMax(0.0);
    const Matrix& q = eig.eigenvectors();

    auto recon_sq = [&](const Vector& z) { return (d * z).squaredNorm(); };
    // Euclidean projection onto {z : ‖Dz‖₂ ≤ 1}.
    auto project = [&](const Vector& w) -> Vector {
        if (recon_sq(w) <= 1) return w;
        const Vector wq = q.transpose() * w;
        auto excess = [&](Real mu) {
            Real s = 0;
            for (Eigen::Index i = 0; i < ni; ++i) {
                const Real r = wq(i) / (1 + mu * lambda(i));
                s += lambda(i) * r * r;
            }
            return s - 1;
        };
        Real lo = 0, hi = 1;
        while (excess(hi) > 0) hi *= 2;
        for (int it = 0; it < 200; ++it) {
            const Real mid = (lo + hi) / 2;
            (excess(mid) > 0 ? lo : hi) = mid;
        }
        Vector scaled = wq;
        for (Eigen::Index i = 0; i < ni; ++i) scaled(i) /= 1 + hi * lambda(i);
        return q * scaled;
    };
    auto objective = [&](const Vector& z) { return c.dot(z) - gamma * z.lpNorm<1>(); };

    const Real cnorm = c.norm();
    const Real t = cnorm > 0 ? 1 / cnorm : 1;
    auto prox = [&](const Vector& u) -> Vector {
        Vector out = u + t * c;
        for (Eigen::Index i = 0; i < ni; ++i) out(i) = shrink(out(i), t * gamma, t * gamma);
        return out;
    };

    OracleReport report;
    Vector w = Vector::Zero(ni);
    Vector best = project(w);
    Real best_value = objective(best);
    report.objective_trace.push_back(best_value);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        const Vector y = project(w);
        const Vector z = prox(2 * y - w);
        const Vector step = z - y;
        w += step;
        const Real f = objective(y);
        if (f > best_value) {
            best_value = f;
            best = y;
        }
        report.objective_trace.push_back(best_value);
        report.iterations = it + 1;
        if (step.norm() <= options.tolerance * std::max(Real{1}, w.norm())) {
            report.converged = true;
            break;
        }
    }
    report.final_point = FeatureTensor(zs, std::vector<Real>(best.data(), best.data() + ni));
    return report;
}

BoundReport bound_check(const FilterBank& bank, const FeatureTensor& z, std::size_t pad) {
    BoundReport r;
    r.reconstruction_norm = l2_norm(reconstruct(z, bank, pad));
    const std::size_t plane = z.shape().plane();
    Real sum_z2 = 0;
    for (std::size_t k = 0; k < bank.num_filters(); ++k) {
        FeatureTensor zk(z.shape());
        std::ranges::copy(z.channel(k), zk.channel(k).begin());
        r.sum_of_norms += l2_norm(reconstruct(zk, bank, pad));
        r.young_bound += l1_norm(bank.filter(k)) * l1_norm(z.channel(k));
        sum_z2 += l2_norm(z.channel(k));
    }
    r.dimension_bound = static_cast<Real>(plane) * sum_z2;
    const Real slack = 1e-12 * std::max(Real{1}, r.young_bound);
    r.triangle_holds = r.reconstruction_norm <= r.sum_of_norms + slack;
    r.young_holds = r.sum_of_norms <= r.young_bound + slack;
    r.dimension_holds = r.young_bound <= r.dimension_bound + slack;
    return r;
}

std::vector<Real> finite_diff(const std::function<Real(std::span<const Real>)>& fn, std::span<const Real> point,
                              Real h) {
    if (!(h > 0)) throw ArgumentError("finite_diff: step must be positive");
    std::vector<Real> p(point.begin(), point.end());
    std::vector<Real> grad(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Real keep = p[i];
        p[i] = keep + h;
        const Real up = fn(p);
        p[i] = keep - h;
        const Real down = fn(p);
        p[i] = keep;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw OracleError("finite_diff: non-finite function value at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2 * h);
    }
    return grad;
}

} // namespace ebssc::oracle
