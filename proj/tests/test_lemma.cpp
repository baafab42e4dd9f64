#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sps/lemma.hpp"
#include "sps/redundancy.hpp"
#include "sps/rng.hpp"
#include "sps/tensor.hpp"

using namespace sps;

namespace {

Mat seeded_matrix(int rows, int cols, RngSeed seed) {
    Rng rng(seed);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = rng.normal();
    return m;
}

double svd_norm_oracle(const Mat& a) {
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

// hand-rolled power iteration on W^T W, independent of any library solver
double power_norm_oracle(const Mat& w, RngSeed seed) {
    const Mat gram = w.transpose() * w;
    Rng rng(seed);
    Vec v(gram.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = rng.normal();
    v /= v.norm();
    double lambda = 0.0;
    for (int iter = 0; iter < 5000; ++iter) {
        Vec next = gram * v;
        const double norm = next.norm();
        if (norm == 0.0)
            return 0.0;
        v = next / norm;
        const double estimate = v.dot(gram * v);
        if (std::abs(estimate - lambda) <= 1e-14 * std::max(1.0, estimate))
            return std::sqrt(estimate);
        lambda = estimate;
    }
    return std::sqrt(lambda);
}

constexpr double kPi = 3.14159265358979323846;

Mat line_projector(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Mat p(2, 2);
    p << c * c, c * s, c * s, s * s;
    return p;
}

DescriptorMatrix centered_low_rank(const GridShape& shape, int rank, double noise,
                                   CoherenceMode mode, RngSeed seed) {
    return center(gen_low_rank(shape, rank, noise, mode, seed)).first;
}

} // namespace

TEST_CASE("sampling bound reproduces the closed-form examples") {
    // r/delta = e makes the log factor exactly 1
    CHECK(sampling_bound(1.0, 1, 1.0, std::exp(-1.0), 1.0) == 1);
    CHECK(sampling_bound(2.0, 4, 0.5, 0.04, 1.0) == 148); // 32 ln(100) = 147.36...
}

TEST_CASE("sampling bound scales with its knobs") {
    const long long base = sampling_bound(2.0, 4, 0.5, 0.04, 1.0);
    const long long doubled = sampling_bound(2.0, 4, 0.5, 0.04, 2.0);
    CHECK(doubled >= base);
    CHECK(doubled <= 2 * base);
    CHECK(sampling_bound(4.0, 4, 0.5, 0.04, 1.0) >= 2 * base - 1);
    CHECK(sampling_bound(2.0, 4, 0.25, 0.04, 1.0) >= 4 * base - 3); // eps^-2

    CHECK_THROWS_AS(sampling_bound(0.0, 4, 0.5, 0.04, 1.0), ParamError);
    CHECK_THROWS_AS(sampling_bound(2.0, 0, 0.5, 0.04, 1.0), ParamError);
    CHECK_THROWS_AS(sampling_bound(2.0, 4, 0.0, 0.04, 1.0), ParamError);
    CHECK_THROWS_AS(sampling_bound(2.0, 4, 1.5, 0.04, 1.0), ParamError);
    CHECK_THROWS_AS(sampling_bound(2.0, 4, 0.5, 1.0, 1.0), ParamError);
    CHECK_THROWS_AS(sampling_bound(1e20, 4, 0.5, 0.04, 1.0), ParamError); // overflow
}

TEST_CASE("projector distance on hand-constructed subspaces") {
    const Mat e1 = line_projector(0.0);
    CHECK(projector_distance(e1, e1) == 0.0);

    const Mat e2 = line_projector(kPi / 2.0);
    CHECK(projector_distance(e1, e2, {120, 0}) == doctest::Approx(1.0).epsilon(1e-10));

    // sine of the principal angle between lines 30 degrees apart
    const Mat tilted = line_projector(kPi / 6.0);
    CHECK(projector_distance(e1, tilted, {121, 0}) == doctest::Approx(0.5).epsilon(1e-10));

    const Mat full = Mat::Identity(2, 2);
    CHECK(projector_distance(full, e1, {122, 0}) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("projector distance validates its inputs") {
    const Mat good = line_projector(0.3);
    Mat asym = good;
    asym(0, 1) += 1e-3;
    CHECK_THROWS_AS(projector_distance(asym, good), ContractError);
    CHECK_THROWS_AS(projector_distance(0.5 * Mat::Identity(2, 2), good), ContractError);
    CHECK_THROWS_AS(projector_distance(Mat::Identity(3, 3), good), ParamError);
    CHECK_THROWS_AS(projector_distance(Mat::Ones(2, 3), good), ParamError);
}

TEST_CASE("projector distance agrees with a direct svd oracle") {
    Rng rng({123, 0});
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(7));
        const int ka = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        const int kb = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        const SvdFactors a =
            thin_svd(seeded_matrix(n, ka, {200 + static_cast<std::uint64_t>(trial), 0}));
        const SvdFactors b =
            thin_svd(seeded_matrix(n, kb, {300 + static_cast<std::uint64_t>(trial), 0}));
        const Mat pi_a = a.u * a.u.transpose();
        const Mat pi_b = b.u * b.u.transpose();

        const double expect = svd_norm_oracle(pi_a - pi_b);
        const double got =
            projector_distance(pi_a, pi_b, {400 + static_cast<std::uint64_t>(trial), 0});
        CHECK(std::abs(got - expect) <= 1e-9);
    }
}

TEST_CASE("sampler matrix picks, embeds, and indicates rows") {
    const Mat f = seeded_matrix(6, 3, {124, 0});
    const SamplerMatrix s = SamplerMatrix::from_indices({4, 1}, 6);
    CHECK(s.rows == std::vector<int>{1, 4}); // sorted on construction
    CHECK(s.m() == 2);

    const Mat picked = s.apply(f);
    CHECK((picked.row(0) - f.row(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((picked.row(1) - f.row(4)).cwiseAbs().maxCoeff() == 0.0);

    const Mat back = s.embed(f);
    CHECK((back.row(1) - f.row(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.row(5).cwiseAbs().maxCoeff() == 0.0);

    const Vec c = s.indicator();
    CHECK(c.sum() == 2.0);
    CHECK(c[1] == 1.0);
    CHECK(c[4] == 1.0);
    CHECK(c[0] == 0.0);

    Rng rng({125, 0});
    const SamplerMatrix u = SamplerMatrix::uniform(10, 4, rng);
    CHECK(u.m() == 4);
    CHECK(u.rows.front() >= 0);
    CHECK(u.rows.back() < 10);

    CHECK_THROWS_AS(SamplerMatrix::from_indices({}, 6), ParamError);
    CHECK_THROWS_AS(SamplerMatrix::from_indices({0, 0}, 6), ParamError);
    CHECK_THROWS_AS(SamplerMatrix::from_indices({6}, 6), ParamError);
    CHECK_THROWS_AS(SamplerMatrix::uniform(4, 5, rng), ParamError);
    CHECK_THROWS_AS(s.apply(Mat::Ones(5, 3)), ParamError);
    CHECK_THROWS_AS(s.embed(Mat::Ones(5, 3)), ParamError);
}

TEST_CASE("full sampling reproduces the row space exactly") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(4, 4, 6), 3, 0.0, CoherenceMode::kSpread, {126, 0});
    LemmaConfig config;
    config.epsilon = 0.25;
    const LemmaTrialReport report = run_trial(f, 3, 16, config, {127, 0});

    CHECK(report.m == 16);
    CHECK(report.projector_distance <= 1e-12);
    CHECK(report.rank_preserved);
    CHECK(report.pass);
    CHECK(std::abs(report.sandwich_min - 1.0) <= 1e-12);
    CHECK(std::abs(report.sandwich_max - 1.0) <= 1e-12);
}

TEST_CASE("noiseless subsets coincide with the full row space") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(6, 6, 8), 4, 0.0, CoherenceMode::kSpread, {128, 0});
    LemmaConfig config;
    config.epsilon = 0.25;
    for (std::uint64_t t = 0; t < 10; ++t) {
        const LemmaTrialReport report = run_trial(f, 4, 8, config, {129, t});
        CHECK(report.rank_preserved);
        CHECK(report.projector_distance <= 1e-8);
        CHECK(report.pass);
    }
}

TEST_CASE("trial validation guards rank, size, and centering") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(4, 4, 6), 3, 0.0, CoherenceMode::kSpread, {130, 0});
    LemmaConfig config;
    CHECK_THROWS_AS(run_trial(f, 3, 2, config, {131, 0}), ParamError);  // m < r
    CHECK_THROWS_AS(run_trial(f, 3, 17, config, {131, 0}), ParamError); // m > N
    CHECK_THROWS_AS(run_trial(f, 5, 8, config, {131, 0}), ParamError);  // r > rank
    CHECK_THROWS_AS(run_trial(f, 0, 8, config, {131, 0}), ParamError);

    const DescriptorMatrix raw =
        gen_low_rank(GridShape(4, 4, 6), 3, 0.0, CoherenceMode::kSpread, {132, 0});
    CHECK_THROWS_AS(run_trial(raw, 3, 8, config, {131, 0}), ContractError);

    LemmaConfig bad = config;
    bad.trials = 0;
    CHECK_THROWS_AS(bad.validate(), ParamError);
    bad = config;
    bad.epsilon = 1.0;
    CHECK_THROWS_AS(bad.validate(), ParamError);
    bad = config;
    bad.m_override = -1;
    CHECK_THROWS_AS(bad.validate(), ParamError);
}

TEST_CASE("a subset missing the spiky rows loses the row space") {
    // spiky generator: all signal mass sits on the first r rows
    const DescriptorMatrix f =
        gen_low_rank(GridShape(4, 4, 6), 4, 0.0, CoherenceMode::kSpiky, {133, 0});
    const SvdFactors full = thin_svd(f.data());
    REQUIRE(full.rank == 4);
    CHECK(coherence(full.u.leftCols(4)).mu == doctest::Approx(4.0).epsilon(1e-9));

    std::vector<int> off_support;
    for (int i = 4; i < 16; ++i)
        off_support.push_back(i);
    const SamplerMatrix s = SamplerMatrix::from_indices(off_support, 16);

    CHECK(s.apply(f.data()).cwiseAbs().maxCoeff() == 0.0);
    const SvdFactors sampled = thin_svd(s.apply(f.data()));
    CHECK(sampled.rank == 0);

    const Mat pi_full = row_projector(full.v);
    const Mat pi_none = Mat::Zero(6, 6);
    CHECK(projector_distance(pi_full, pi_none, {134, 0}) ==
          doctest::Approx(1.0).epsilon(1e-9));

    CHECK_FALSE(sandwich_check(full.u.leftCols(4), s, 0.25).pass);
    // the off-support rows of U are numerical noise, not exact zeros, so
    // assert magnitude rather than the scale-invariant rank
    CHECK(s.apply(full.u.leftCols(4)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sandwich check matches a scalar accumulation oracle") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(3, 3, 5), 3, 0.0, CoherenceMode::kSpread, {135, 0});
    const SvdFactors svd = thin_svd(f.data());
    const Mat u_r = svd.u.leftCols(3);

    const SamplerMatrix s = SamplerMatrix::from_indices({0, 2, 3, 5, 8}, 9);
    const SandwichResult res = sandwich_check(u_r, s, 0.9);

    Mat gram = Mat::Zero(3, 3);
    for (int i : s.rows)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                gram(a, b) += u_r(i, a) * u_r(i, b) * (9.0 / 5.0);
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
    CHECK(res.min_eig == doctest::Approx(eig.eigenvalues()(0)).epsilon(1e-12));
    CHECK(res.max_eig == doctest::Approx(eig.eigenvalues()(2)).epsilon(1e-12));
    CHECK(res.min_eig >= -1e-12); // PSD up to roundoff

    const SamplerMatrix all = SamplerMatrix::from_indices({0, 1, 2, 3, 4, 5, 6, 7, 8}, 9);
    const SandwichResult ident = sandwich_check(u_r, all, 0.1);
    CHECK(std::abs(ident.min_eig - 1.0) <= 1e-12);
    CHECK(std::abs(ident.max_eig - 1.0) <= 1e-12);
    CHECK(ident.pass);

    CHECK_THROWS_AS(sandwich_check(u_r, s, 0.0), ParamError);
}

TEST_CASE("second moment identity holds exhaustively") {
    const Mat f = seeded_matrix(6, 4, {136, 0});
    const double scale = (f.transpose() * f).cwiseAbs().maxCoeff();
    CHECK(second_moment_exhaustive(f, 3) <= 1e-12 * scale);
    CHECK(second_moment_exhaustive(f, 6) <= 1e-12 * scale); // single full subset
    CHECK(second_moment_exhaustive(f, 1) <= 1e-12 * scale);
}

TEST_CASE("second moment weighting matches the inclusion probability") {
    Mat f = Mat::Zero(5, 3);
    f.row(0) << 1.0, 2.0, 3.0;
    // row 0 appears in C(4,1) of C(5,2) subsets, an m/N = 0.4 fraction
    CHECK(second_moment_exhaustive(f, 2) <= 1e-14);
}

TEST_CASE("second moment budget and validation errors") {
    const Mat big = Mat::Ones(40, 2);
    try {
        second_moment_exhaustive(big, 20);
        FAIL("expected the budget error");
    } catch (const ParamError& e) {
        CHECK(std::string(e.what()).find("Monte Carlo") != std::string::npos);
    }
    CHECK_THROWS_AS(second_moment_exhaustive(Mat::Ones(3, 2), 0), ParamError);
    CHECK_THROWS_AS(second_moment_exhaustive(Mat::Ones(3, 2), 4), ParamError);
    CHECK_THROWS_AS(second_moment_exhaustive(Mat(0, 0), 1), ParamError);
}

TEST_CASE("covariance scale alpha follows the exact formula") {
    const Mat f = seeded_matrix(6, 4, {137, 0});
    const CovarianceScaleResult small = covariance_scale_check(f, 3);
    CHECK(small.alpha == (5.0 * 3.0) / (6.0 * 2.0));
    const double scale = (f.transpose() * f).cwiseAbs().maxCoeff() / 5.0;
    CHECK(small.deviation <= 1e-12 * scale);

    const CovarianceScaleResult full = covariance_scale_check(f, 6);
    CHECK(full.alpha == 1.0); // m = N collapses exactly
    CHECK(full.deviation <= 1e-12 * scale);

    // half sampling at N=16 hits the (N-1)/(N-2) form; the N=256 instance
    // of the same single-division arithmetic gives 255/254
    const Mat g = seeded_matrix(16, 3, {138, 0});
    CHECK(covariance_scale_check(g, 8).alpha == 15.0 / 14.0);
    CHECK(static_cast<double>(255LL * 128) / static_cast<double>(256LL * 127) == 255.0 / 254.0);

    CHECK_THROWS_AS(covariance_scale_check(f, 1), ParamError);
    CHECK_THROWS_AS(covariance_scale_check(f, 7), ParamError);
    CHECK_THROWS_AS(covariance_scale_check(Mat::Ones(1, 2), 1), ParamError);
}

TEST_CASE("identity map saturates the lipschitz inequality") {
    const Mat f = seeded_matrix(8, 4, {139, 0});
    const SamplerMatrix s = SamplerMatrix::from_indices({0, 3, 5}, 8);

    const LipschitzReport ident = lipschitz_check(f, s, Mat::Identity(4, 4), false);
    CHECK(ident.lipschitz == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ident.pass);
    CHECK(ident.rhs - ident.lhs == doctest::Approx(1e-9).epsilon(1e-3));

    const LipschitzReport twice = lipschitz_check(f, s, 2.0 * Mat::Identity(4, 4), false);
    CHECK(twice.lipschitz == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(twice.pass);

    CHECK_THROWS_AS(lipschitz_check(f, s, Mat::Ones(3, 3), false), ParamError);
    Mat bad = Mat::Ones(4, 4);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(lipschitz_check(f, s, bad, false), ParamError);
}

TEST_CASE("lipschitz bound holds across seeded map and sampler triples") {
    Rng rng({140, 0});
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4 + static_cast<int>(rng.below(7));
        const int d = 2 + static_cast<int>(rng.below(5));
        const int p = 1 + static_cast<int>(rng.below(5));
        const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));

        const Mat f =
            3.0 * seeded_matrix(n, d, {500 + static_cast<std::uint64_t>(trial), 0});
        const Mat w = seeded_matrix(d, p, {600 + static_cast<std::uint64_t>(trial), 0});
        SamplerMatrix s = SamplerMatrix::uniform(n, m, rng);

        const LipschitzReport report = lipschitz_check(f, s, w, trial % 2 == 1);
        CHECK(report.pass);
        CHECK(report.lhs <= report.rhs);

        const double oracle =
            power_norm_oracle(w, {700 + static_cast<std::uint64_t>(trial), 0});
        CHECK(report.lipschitz == doctest::Approx(oracle).epsilon(1e-6));
    }
}

TEST_CASE("campaign on exact-rank data passes every trial") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(6, 6, 8), 4, 0.0, CoherenceMode::kSpread, {141, 0});
    LemmaConfig config;
    config.epsilon = 0.25;
    config.delta = 0.05;
    config.trials = 40;
    config.seed = {142, 0};
    config.m_override = 8;

    const CampaignReport report = run_campaign(f, 4, config);
    CHECK(report.m == 8);
    CHECK(report.pass_fraction == 1.0);
    CHECK(report.passed);
    CHECK(report.margin == doctest::Approx(3.0 * std::sqrt(0.05 * 0.95 / 40.0)).epsilon(1e-12));
    CHECK(report.mu >= 1.0);

    // the bound path clamps to [r, N]
    LemmaConfig clamped = config;
    clamped.m_override = 0;
    clamped.constant = 8.0;
    const CampaignReport bound_run = run_campaign(f, 4, clamped);
    CHECK(bound_run.m >= 4);
    CHECK(bound_run.m <= 36);
    CHECK(bound_run.passed);
}

TEST_CASE("campaign trials replay through per-trial streams") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(4, 4, 6), 3, 0.0, CoherenceMode::kSpread, {143, 0});
    LemmaConfig config;
    config.trials = 3;
    config.seed = {144, 9};
    config.m_override = 6;

    const CampaignReport campaign = run_campaign(f, 3, config);
    for (int t = 0; t < 3; ++t) {
        const LemmaTrialReport solo =
            run_trial(f, 3, 6, config, {144, 9 + static_cast<std::uint64_t>(t)});
        const LemmaTrialReport& batch = campaign.trials[static_cast<std::size_t>(t)];
        CHECK(solo.projector_distance == batch.projector_distance);
        CHECK(solo.sandwich_min == batch.sandwich_min);
        CHECK(solo.sandwich_max == batch.sandwich_max);
        CHECK(solo.rank_preserved == batch.rank_preserved);
    }

    const CampaignReport again = run_campaign(f, 3, config);
    CHECK(campaign_to_csv(campaign) == campaign_to_csv(again));
}

TEST_CASE("campaign validation") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(4, 4, 6), 3, 0.0, CoherenceMode::kSpread, {145, 0});
    LemmaConfig config;
    config.m_override = 2; // below r
    CHECK_THROWS_AS(run_campaign(f, 3, config), ParamError);
    config.m_override = 17; // above N
    CHECK_THROWS_AS(run_campaign(f, 3, config), ParamError);
    config.m_override = 0;
    CHECK_THROWS_AS(run_campaign(f, 9, config), ParamError); // r > rank

    const DescriptorMatrix raw =
        gen_low_rank(GridShape(4, 4, 6), 3, 0.0, CoherenceMode::kSpread, {146, 0});
    CHECK_THROWS_AS(run_campaign(raw, 3, config), ContractError);
}

TEST_CASE("mean distance is non-increasing along an m ladder") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(8, 16, 16), 4, 0.05, CoherenceMode::kSpread, {147, 0});
    LemmaConfig config;
    config.trials = 500;
    config.seed = {148, 0};

    double prev_mean = -1.0;
    for (int m : {8, 24, 64, 128}) {
        config.m_override = m;
        const CampaignReport report = run_campaign(f, 4, config);
        double total = 0.0;
        for (const LemmaTrialReport& trial : report.trials)
            total += trial.projector_distance;
        const double mean = total / static_cast<double>(report.trials.size());
        if (prev_mean >= 0.0)
            CHECK(mean <= prev_mean);
        prev_mean = mean;
    }
}

TEST_CASE("campaign csv carries one line per trial") {
    const DescriptorMatrix f =
        centered_low_rank(GridShape(4, 4, 6), 3, 0.0, CoherenceMode::kSpread, {149, 0});
    LemmaConfig config;
    config.trials = 5;
    config.m_override = 8;
    const CampaignReport report = run_campaign(f, 3, config);
    const std::string csv = campaign_to_csv(report);

    CHECK(csv.rfind("trial_id,m,mu,distance,sandwich_min,sandwich_max,rank_preserved,pass\n",
                    0) == 0);
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n')
            ++lines;
    CHECK(lines == 6);
    CHECK(csv.find("\n0,8,") != std::string::npos);
    CHECK(csv.find("\n4,8,") != std::string::npos);
}
