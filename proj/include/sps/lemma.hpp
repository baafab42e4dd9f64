#pragma once

#include <string>
#include <vector>

#include "sps/redundancy.hpp"
#include "sps/rng.hpp"
#include "sps/tensor.hpp"
#include "sps/types.hpp"

namespace sps {

/// Campaign parameters for the subspace-preservation checks.
struct LemmaConfig {
    double epsilon = 0.25;
    double delta = 0.05;
    double constant = 8.0; // the bound's leading constant, calibration knob
    int trials = 200;
    double rank_tol = 1e-9;
    RngSeed seed{};
    int m_override = 0; // > 0 pins the sample count instead of the bound

    void validate() const;
};

/// Row-sampling operator S in {0,1}^{m x N}: m distinct rows, so
/// S^T S = diag(c_i) with 0/1 indicators.
struct SamplerMatrix {
    std::vector<int> rows; // strictly increasing
    int n_total = 0;

    static SamplerMatrix uniform(int n, int m, Rng& rng);
    static SamplerMatrix from_indices(std::vector<int> rows, int n);

    int m() const { return static_cast<int>(rows.size()); }
    Mat apply(const Mat& f) const; // SF, the m selected rows
    Mat embed(const Mat& f) const; // SF padded back to N rows with zeros
    Vec indicator() const;         // c_i
};

/// m = ceil(C * mu * r / eps^2 * ln(r / delta)); callers clamp to [r, N].
long long sampling_bound(double mu, int r, double epsilon, double delta, double c);

/// Spectral norm of the difference of two orthogonal projectors, i.e. the
/// sine of the largest principal angle. Both inputs must be symmetric and
/// idempotent within 1e-8. Power iteration on the squared difference with
/// tolerance 1e-10, capped at 10,000 steps, start vector drawn from seed.
double projector_distance(const Mat& pi_a, const Mat& pi_b, RngSeed seed = {});

struct LemmaTrialReport {
    int m = 0;
    double mu = 0.0;
    double projector_distance = 0.0;
    double sandwich_min = 0.0;
    double sandwich_max = 0.0;
    bool rank_preserved = false;
    bool pass = false; // distance <= epsilon
};

/// One sampled-subset trial on a centered descriptor matrix: draws a
/// uniform m-subset, compares the full rank-r row space against the
/// sample's, and evaluates the spectral sandwich. For noisy data the
/// subspaces are the principal rank-r ones (top right singular vectors),
/// an extension beyond the exact-rank statement.
LemmaTrialReport run_trial(const DescriptorMatrix& f, int target_rank, int m,
                           const LemmaConfig& config, RngSeed seed);

struct SandwichResult {
    double min_eig = 0.0;
    double max_eig = 0.0;
    bool pass = false;
};

/// Eigenvalue range of (N/m) * U_r^T S^T S U_r; passes when contained in
/// [1 - eps, 1 + eps].
SandwichResult sandwich_check(const Mat& u_r, const SamplerMatrix& sampler, double epsilon);

/// Averages (SF)^T (SF) over every m-subset and returns the max-abs
/// deviation from (m/N) F^T F. Exact identity, so the deviation is pure
/// roundoff. Requires C(N, m) <= 10^6; beyond that, throws with a pointer
/// to Monte Carlo estimation.
double second_moment_exhaustive(const Mat& f, int m);

struct CovarianceScaleResult {
    double alpha = 0.0;     // ((N-1)/N) * (m/(m-1))
    double deviation = 0.0; // max-abs gap between E[Sigma_m] and alpha * Sigma_N
};

CovarianceScaleResult covariance_scale_check(const Mat& f, int m);

struct LipschitzReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double lipschitz = 0.0; // operator norm of the map matrix
    bool pass = false;
};

/// Row-wise map phi(x) = x W, optionally followed by clip-to-unit-ball
/// (1-Lipschitz), applied to the zero-embedded sample and the full matrix;
/// checks ||phi(SF) - phi(F)||_F <= L ||SF - F||_F + 1e-9.
LipschitzReport lipschitz_check(const Mat& f, const SamplerMatrix& sampler, const Mat& w,
                                bool use_normalizer);

struct CampaignReport {
    std::vector<LemmaTrialReport> trials;
    int m = 0;         // per-trial sample count actually used
    double mu = 0.0;   // coherence of the full rank-r subspace
    double pass_fraction = 0.0;
    double margin = 0.0; // 3 * sqrt(delta (1 - delta) / T)
    bool passed = false; // pass_fraction >= 1 - delta - margin
};

/// T independent trials with stream ids seed.stream_id + t; m comes from
/// the sampling bound clamped to [r, N] unless m_override pins it.
CampaignReport run_campaign(const DescriptorMatrix& f, int target_rank,
                            const LemmaConfig& config);

/// Per-trial CSV: trial_id, m, mu, distance, sandwich_min, sandwich_max,
/// rank_preserved, pass.
std::string campaign_to_csv(const CampaignReport& report);

} // namespace sps
