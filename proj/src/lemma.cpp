#include "sps/lemma.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <utility>

namespace sps {

namespace {

constexpr std::uint64_t kSubsetBudget = 1000000;
constexpr std::uint64_t kPowerStartSalt = 0x517CC1B727220A95ULL;

std::uint64_t binomial_capped(int n, int m, std::uint64_t cap) {
    if (m < 0 || m > n)
        return 0;
    m = std::min(m, n - m);
    std::uint64_t c = 1;
    for (int i = 1; i <= m; ++i) {
        // exact at every step: C(n, i) = C(n, i-1) * (n - i + 1) / i
        c = c * static_cast<std::uint64_t>(n - i + 1) / static_cast<std::uint64_t>(i);
        if (c > cap)
            return cap + 1;
    }
    return c;
}

template <typename Fn>
void for_each_subset(int n, int m, Fn&& fn) {
    std::vector<int> idx(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
        idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        fn(idx);
        int pos = m - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - m + pos)
            --pos;
        if (pos < 0)
            return;
        ++idx[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < m; ++j)
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

void require_exhaustive_budget(int n, int m, const char* who) {
    if (binomial_capped(n, m, kSubsetBudget) > kSubsetBudget)
        throw ParamError(std::string(who) +
                         ": subset count exceeds the exhaustive budget of 10^6; "
                         "estimate the expectation by Monte Carlo sampling instead");
}

void require_projector(const Mat& pi, const char* name) {
    if (pi.rows() != pi.cols() || pi.rows() == 0)
        throw ParamError(std::string("projector_distance: ") + name + " is not square");
    if ((pi - pi.transpose()).cwiseAbs().maxCoeff() > 1e-8)
        throw ContractError(std::string("projector_distance: ") + name + " is not symmetric");
    if ((pi * pi - pi).cwiseAbs().maxCoeff() > 1e-8)
        throw ContractError(std::string("projector_distance: ") + name + " is not idempotent");
}

Mat clip_rows_to_unit_ball(Mat x) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double norm = x.row(i).norm();
        if (norm > 1.0)
            x.row(i) /= norm;
    }
    return x;
}

} // namespace

void LemmaConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ParamError("LemmaConfig: epsilon must lie in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0))
        throw ParamError("LemmaConfig: delta must lie in (0, 1)");
    if (!(constant > 0.0))
        throw ParamError("LemmaConfig: constant must be positive");
    if (trials < 1)
        throw ParamError("LemmaConfig: trials must be positive");
    if (!(rank_tol > 0.0 && rank_tol < 1.0))
        throw ParamError("LemmaConfig: rank tolerance must lie in (0, 1)");
    if (m_override < 0)
        throw ParamError("LemmaConfig: m_override cannot be negative");
}

SamplerMatrix SamplerMatrix::uniform(int n, int m, Rng& rng) {
    if (n < 1 || m < 1 || m > n)
        throw ParamError("SamplerMatrix::uniform: need 1 <= m <= n");
    SamplerMatrix s;
    s.rows = sample_without_replacement(n, m, rng);
    s.n_total = n;
    return s;
}

SamplerMatrix SamplerMatrix::from_indices(std::vector<int> rows, int n) {
    if (rows.empty() || n < 1)
        throw ParamError("SamplerMatrix::from_indices: empty selection");
    std::sort(rows.begin(), rows.end());
    if (rows.front() < 0 || rows.back() >= n)
        throw ParamError("SamplerMatrix::from_indices: index out of range");
    if (std::adjacent_find(rows.begin(), rows.end()) != rows.end())
        throw ParamError("SamplerMatrix::from_indices: duplicate index");
    SamplerMatrix s;
    s.rows = std::move(rows);
    s.n_total = n;
    return s;
}

Mat SamplerMatrix::apply(const Mat& f) const {
    if (f.rows() != n_total)
        throw ParamError("SamplerMatrix::apply: row count mismatch");
    Mat out(m(), f.cols());
    for (int t = 0; t < m(); ++t)
        out.row(t) = f.row(rows[static_cast<std::size_t>(t)]);
    return out;
}

Mat SamplerMatrix::embed(const Mat& f) const {
    if (f.rows() != n_total)
        throw ParamError("SamplerMatrix::embed: row count mismatch");
    Mat out = Mat::Zero(n_total, f.cols());
    for (int i : rows)
        out.row(i) = f.row(i);
    return out;
}

Vec SamplerMatrix::indicator() const {
    Vec c = Vec::Zero(n_total);
    for (int i : rows)
        c[i] = 1.0;
    return c;
}

long long sampling_bound(double mu, int r, double epsilon, double delta, double c) {
    if (!(mu > 0.0) || !std::isfinite(mu))
        throw ParamError("sampling_bound: mu must be positive");
    if (r < 1)
        throw ParamError("sampling_bound: rank must be positive");
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw ParamError("sampling_bound: epsilon must lie in (0, 1]");
    if (!(delta > 0.0 && delta < 1.0))
        throw ParamError("sampling_bound: delta must lie in (0, 1)");
    if (!(c > 0.0))
        throw ParamError("sampling_bound: constant must be positive");

    const double value =
        c * mu * static_cast<double>(r) / (epsilon * epsilon) * std::log(static_cast<double>(r) / delta);
    if (!(value < 9e18))
        throw ParamError("sampling_bound: bound overflows");
    return static_cast<long long>(std::ceil(value));
}

double projector_distance(const Mat& pi_a, const Mat& pi_b, RngSeed seed) {
    require_projector(pi_a, "first argument");
    require_projector(pi_b, "second argument");
    if (pi_a.rows() != pi_b.rows())
        throw ParamError("projector_distance: dimension mismatch");

    const Mat delta = pi_a - pi_b;
    if (delta.cwiseAbs().maxCoeff() == 0.0)
        return 0.0;

    // The difference of projectors has a symmetric +/- spectrum, so plain
    // power iteration can oscillate; iterating on delta^2 (PSD) is stable
    // and the distance is the square root of its top eigenvalue.
    Rng rng({seed.seed ^ kPowerStartSalt, seed.stream_id});
    const auto n = delta.rows();
    Vec v(n);
    double lambda = 0.0;
    for (int restart = 0; restart < 5; ++restart) {
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = rng.normal();
        const double vnorm = v.norm();
        if (vnorm == 0.0)
            continue;
        v /= vnorm;

        double prev = -1.0;
        for (int iter = 0; iter < 10000; ++iter) {
            Vec w = delta * (delta * v);
            const double wnorm = w.norm();
            if (wnorm == 0.0) {
                lambda = 0.0;
                break; // v landed in the kernel, try a fresh start vector
            }
            v = w / wnorm;
            lambda = v.dot(delta * (delta * v));
            if (std::abs(lambda - prev) <= 1e-10 * std::max(1.0, lambda))
                return std::sqrt(std::max(0.0, lambda));
            prev = lambda;
        }
        if (lambda > 0.0)
            return std::sqrt(lambda);
    }
    return std::sqrt(std::max(0.0, lambda));
}

SandwichResult sandwich_check(const Mat& u_r, const SamplerMatrix& sampler, double epsilon) {
    if (!(epsilon > 0.0))
        throw ParamError("sandwich_check: epsilon must be positive");
    const Mat su = sampler.apply(u_r);
    const double scale = static_cast<double>(sampler.n_total) / static_cast<double>(sampler.m());
    const Mat gram = scale * (su.transpose() * su);

    Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
    if (eig.info() != Eigen::Success)
        throw ContractError("sandwich_check: eigendecomposition failed");

    SandwichResult out;
    out.min_eig = eig.eigenvalues()(0);
    out.max_eig = eig.eigenvalues()(eig.eigenvalues().size() - 1);
    out.pass = out.min_eig >= 1.0 - epsilon && out.max_eig <= 1.0 + epsilon;
    return out;
}

LemmaTrialReport run_trial(const DescriptorMatrix& f, int target_rank, int m,
                           const LemmaConfig& config, RngSeed seed) {
    if (!f.centered())
        throw ContractError("run_trial: descriptor matrix is not centered");
    config.validate();
    const int n = static_cast<int>(f.rows());

    const SvdFactors full = thin_svd(f.data(), config.rank_tol);
    if (target_rank < 1 || target_rank > full.rank)
        throw ParamError("run_trial: target rank exceeds the numerical rank");
    if (m < target_rank || m > n)
        throw ParamError("run_trial: need target_rank <= m <= N");

    const Mat u_r = full.u.leftCols(target_rank);
    const Mat v_r = full.v.leftCols(target_rank);

    LemmaTrialReport report;
    report.m = m;
    report.mu = coherence(u_r).mu;

    Rng rng(seed);
    const SamplerMatrix sampler = SamplerMatrix::uniform(n, m, rng);

    const SvdFactors sampled = thin_svd(sampler.apply(f.data()), config.rank_tol);
    const int sample_rank = std::min(target_rank, sampled.rank);
    const Mat pi_full = row_projector(v_r);
    const Mat pi_sample = sampled.rank == 0
                              ? Mat::Zero(f.cols(), f.cols())
                              : row_projector(sampled.v.leftCols(sample_rank));

    report.projector_distance =
        projector_distance(pi_full, pi_sample, {seed.seed ^ kPowerStartSalt, seed.stream_id});
    report.rank_preserved = thin_svd(sampler.apply(u_r), config.rank_tol).rank == target_rank;

    const SandwichResult sandwich = sandwich_check(u_r, sampler, config.epsilon);
    report.sandwich_min = sandwich.min_eig;
    report.sandwich_max = sandwich.max_eig;
    report.pass = report.projector_distance <= config.epsilon;
    return report;
}

double second_moment_exhaustive(const Mat& f, int m) {
    const int n = static_cast<int>(f.rows());
    if (n < 1 || f.cols() < 1)
        throw ParamError("second_moment_exhaustive: empty matrix");
    if (m < 1 || m > n)
        throw ParamError("second_moment_exhaustive: need 1 <= m <= N");
    require_exhaustive_budget(n, m, "second_moment_exhaustive");

    Mat sum = Mat::Zero(f.cols(), f.cols());
    std::uint64_t count = 0;
    for_each_subset(n, m, [&](const std::vector<int>& subset) {
        Mat gram = Mat::Zero(f.cols(), f.cols());
        for (int i : subset)
            gram.noalias() += f.row(i).transpose() * f.row(i);
        sum += gram;
        ++count;
    });

    const Mat avg = sum / static_cast<double>(count);
    const Mat target = (static_cast<double>(m) / static_cast<double>(n)) * (f.transpose() * f);
    return (avg - target).cwiseAbs().maxCoeff();
}

CovarianceScaleResult covariance_scale_check(const Mat& f, int m) {
    const int n = static_cast<int>(f.rows());
    if (n < 2)
        throw ParamError("covariance_scale_check: need at least two rows");
    if (m < 2 || m > n)
        throw ParamError("covariance_scale_check: need 2 <= m <= N");
    require_exhaustive_budget(n, m, "covariance_scale_check");

    CovarianceScaleResult out;
    // single division over exact integer products: m = N collapses to 1.0
    out.alpha = static_cast<double>(static_cast<long long>(n - 1) * m) /
                static_cast<double>(static_cast<long long>(n) * (m - 1));

    Mat sum = Mat::Zero(f.cols(), f.cols());
    std::uint64_t count = 0;
    for_each_subset(n, m, [&](const std::vector<int>& subset) {
        Mat gram = Mat::Zero(f.cols(), f.cols());
        for (int i : subset)
            gram.noalias() += f.row(i).transpose() * f.row(i);
        sum += gram / static_cast<double>(m - 1);
        ++count;
    });

    const Mat expected = sum / static_cast<double>(count);
    const Mat target = out.alpha / static_cast<double>(n - 1) * (f.transpose() * f);
    out.deviation = (expected - target).cwiseAbs().maxCoeff();
    return out;
}

LipschitzReport lipschitz_check(const Mat& f, const SamplerMatrix& sampler, const Mat& w,
                                bool use_normalizer) {
    if (!w.allFinite())
        throw ParamError("lipschitz_check: map matrix must be finite");
    if (w.rows() != f.cols())
        throw ParamError("lipschitz_check: map matrix width does not match descriptors");

    Eigen::JacobiSVD<Mat> svd(w);
    LipschitzReport report;
    report.lipschitz = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;

    const Mat embedded = sampler.embed(f);
    Mat mapped_sample = embedded * w;
    Mat mapped_full = f * w;
    if (use_normalizer) {
        mapped_sample = clip_rows_to_unit_ball(std::move(mapped_sample));
        mapped_full = clip_rows_to_unit_ball(std::move(mapped_full));
    }

    report.lhs = (mapped_sample - mapped_full).norm();
    report.rhs = report.lipschitz * (embedded - f).norm() + 1e-9;
    report.pass = report.lhs <= report.rhs;
    return report;
}

CampaignReport run_campaign(const DescriptorMatrix& f, int target_rank,
                            const LemmaConfig& config) {
    config.validate();
    if (!f.centered())
        throw ContractError("run_campaign: descriptor matrix is not centered");
    const int n = static_cast<int>(f.rows());

    const SvdFactors full = thin_svd(f.data(), config.rank_tol);
    if (target_rank < 1 || target_rank > full.rank)
        throw ParamError("run_campaign: target rank exceeds the numerical rank");

    CampaignReport report;
    report.mu = coherence(full.u.leftCols(target_rank)).mu;
    if (config.m_override > 0) {
        if (config.m_override < target_rank || config.m_override > n)
            throw ParamError("run_campaign: m_override outside [r, N]");
        report.m = config.m_override;
    } else {
        const long long bound =
            sampling_bound(report.mu, target_rank, config.epsilon, config.delta, config.constant);
        report.m = static_cast<int>(std::clamp<long long>(bound, target_rank, n));
    }

    int passes = 0;
    report.trials.reserve(static_cast<std::size_t>(config.trials));
    for (int t = 0; t < config.trials; ++t) {
        const RngSeed trial_seed{config.seed.seed,
                                 config.seed.stream_id + static_cast<std::uint64_t>(t)};
        report.trials.push_back(run_trial(f, target_rank, report.m, config, trial_seed));
        if (report.trials.back().pass)
            ++passes;
    }

    const auto t = static_cast<double>(config.trials);
    report.pass_fraction = static_cast<double>(passes) / t;
    report.margin = 3.0 * std::sqrt(config.delta * (1.0 - config.delta) / t);
    report.passed = report.pass_fraction >= 1.0 - config.delta - report.margin;
    return report;
}

std::string campaign_to_csv(const CampaignReport& report) {
    std::ostringstream out;
    out << "trial_id,m,mu,distance,sandwich_min,sandwich_max,rank_preserved,pass\n";
    char line[256];
    for (std::size_t t = 0; t < report.trials.size(); ++t) {
        const LemmaTrialReport& r = report.trials[t];
        std::snprintf(line, sizeof line, "%zu,%d,%.12g,%.12g,%.12g,%.12g,%d,%d\n", t, r.m, r.mu,
                      r.projector_distance, r.sandwich_min, r.sandwich_max,
                      r.rank_preserved ? 1 : 0, r.pass ? 1 : 0);
        out << line;
    }
    return out.str();
}

} // namespace sps
