#pragma once

#include <cstdint>
#include <vector>

#include "sps/tensor.hpp"
#include "sps/types.hpp"

namespace sps {

/// Covariance normalization: 1/N matches the sampling view, 1/(N-1)
/// the unbiased estimator; both are first-class.
enum class Normalization { kOverN, kOverNMinus1 };

/// Sample covariance of a centered descriptor matrix. Symmetric PSD;
/// its trace is the total variance under the chosen normalization.
/// Throws ContractError when the centered flag is not set.
Mat covariance(const DescriptorMatrix& f, Normalization norm);

/// Eigenvalue spectrum with the cumulative explained-variance curve
/// E(m) = sum_{i<=m} lambda_i / sum_i lambda_i.
struct SpectrumReport {
    Vec eigenvalues;  // descending, clamped at zero
    Vec cumulative;   // E(1..size), non-decreasing, E(size) = 1
    Normalization normalization = Normalization::kOverN;

    int size() const { return static_cast<int>(eigenvalues.size()); }
};

SpectrumReport spectrum(const Mat& sigma, Normalization norm = Normalization::kOverN);

/// E(m) for 1-based m.
double explained_variance(const SpectrumReport& report, int m);

/// Smallest m with E(m) >= tau, tau in (0, 1].
int components_for(const SpectrumReport& report, double tau);

/// N x N Pearson correlation between patch descriptors (rows). Rows with
/// no variance across their D entries get quiet-NaN correlations and are
/// flagged instead of silently zeroed.
struct PearsonResult {
    Mat corr;
    std::vector<bool> degenerate_rows;
    bool any_degenerate = false;
};

PearsonResult pearson_matrix(const DescriptorMatrix& f);

/// Cosine-similarity heatmap from a seed patch, reshaped to the grid,
/// nearest-neighbor upsampled, then min-max normalized to [0, 1]
/// (degenerate frames map to all 0.5).
struct OverlayMap {
    Mat values; // (H'*u) x (W'*u), entries in [0, 1]
    bool had_zero_norm_rows = false;
};

OverlayMap cosine_overlay(const DescriptorMatrix& f, int seed_patch, int upsample);

/// 8-bit binary PGM (P5) encoding, value = round(255 * normalized).
std::vector<std::uint8_t> overlay_to_pgm(const OverlayMap& overlay);

/// Thin SVD truncated at the numerical rank: singular values above
/// rank_tol * sigma_max are kept.
struct SvdFactors {
    Mat u;         // N x r, orthonormal columns
    Vec singulars; // descending, positive
    Mat v;         // D x r, orthonormal columns
    int rank = 0;
};

SvdFactors thin_svd(const Mat& f, double rank_tol = 1e-9);

/// Orthogonal projector V_r V_r^T onto the row space.
Mat row_projector(const Mat& v_r);

/// Row-space coherence mu = (N/r) * max_i ||e_i^T U_r||^2 with the full
/// leverage profile. U_r must have orthonormal columns (Gram deviation
/// <= 1e-8), else ContractError.
struct CoherenceReport {
    double mu = 0.0;
    Vec leverage; // per-row squared norms, in [0, 1], summing to r
    int rank = 0;
};

CoherenceReport coherence(const Mat& u_r);

} // namespace sps
