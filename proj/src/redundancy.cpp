#include "sps/redundancy.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace sps {

namespace {

// Orthonormality gate shared by the projector and coherence paths.
void require_orthonormal_columns(const Mat& u, const char* who) {
    const Mat gram = u.transpose() * u;
    const Mat eye = Mat::Identity(u.cols(), u.cols());
    if ((gram - eye).cwiseAbs().maxCoeff() > 1e-8)
        throw ContractError(std::string(who) + ": columns are not orthonormal");
}

} // namespace

Mat covariance(const DescriptorMatrix& f, Normalization norm) {
    if (!f.centered())
        throw ContractError("covariance: descriptor matrix is not centered");
    const auto n = static_cast<double>(f.rows());
    const double denom = norm == Normalization::kOverN ? n : n - 1.0;
    if (denom <= 0.0)
        throw ParamError("covariance: need at least two rows for the unbiased estimator");
    return (f.data().transpose() * f.data()) / denom;
}

SpectrumReport spectrum(const Mat& sigma, Normalization norm) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
        throw ParamError("spectrum: covariance must be square and non-empty");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + sigma.cwiseAbs().maxCoeff()))
        throw ParamError("spectrum: covariance is not symmetric");

    Eigen::SelfAdjointEigenSolver<Mat> eig(sigma);
    if (eig.info() != Eigen::Success)
        throw ContractError("spectrum: eigendecomposition failed");

    const int d = static_cast<int>(sigma.rows());
    SpectrumReport report;
    report.normalization = norm;
    report.eigenvalues.resize(d);
    for (int i = 0; i < d; ++i) // ascending from Eigen, negatives are roundoff
        report.eigenvalues[i] = std::max(0.0, eig.eigenvalues()[d - 1 - i]);

    report.cumulative.resize(d);
    double run = 0.0;
    for (int i = 0; i < d; ++i) {
        run += report.eigenvalues[i];
        report.cumulative[i] = run;
    }
    const double total = report.cumulative[d - 1];
    if (total <= 0.0)
        throw ParamError("spectrum: total variance is zero");
    report.cumulative /= total; // last entry divides by itself, exactly 1
    return report;
}

double explained_variance(const SpectrumReport& report, int m) {
    if (m < 1 || m > report.size())
        throw ParamError("explained_variance: m out of range");
    return report.cumulative[m - 1];
}

int components_for(const SpectrumReport& report, double tau) {
    if (!(tau > 0.0 && tau <= 1.0))
        throw ParamError("components_for: tau must lie in (0, 1]");
    for (int m = 1; m <= report.size(); ++m)
        if (report.cumulative[m - 1] >= tau)
            return m;
    return report.size(); // E(size) = 1 >= tau, unreachable
}

PearsonResult pearson_matrix(const DescriptorMatrix& f) {
    const auto n = f.rows();
    if (f.cols() < 2)
        throw ParamError("pearson_matrix: need at least two descriptor entries per row");

    Mat centered = f.data();
    const Vec row_means = centered.rowwise().mean();
    centered.colwise() -= row_means;

    PearsonResult out;
    out.corr = Mat::Zero(n, n);
    out.degenerate_rows.assign(static_cast<std::size_t>(n), false);

    Vec norms(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double raw = f.data().row(i).norm();
        norms[i] = centered.row(i).norm();
        // A constant row never centers to exactly zero in floating point,
        // so degeneracy is a relative test against the uncentered scale.
        if (norms[i] <= 1e-12 * raw) {
            out.degenerate_rows[static_cast<std::size_t>(i)] = true;
            out.any_degenerate = true;
        }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            double value;
            if (out.degenerate_rows[static_cast<std::size_t>(i)] ||
                out.degenerate_rows[static_cast<std::size_t>(j)]) {
                value = nan;
            } else if (i == j) {
                value = 1.0;
            } else {
                value = centered.row(i).dot(centered.row(j)) / (norms[i] * norms[j]);
                value = std::clamp(value, -1.0, 1.0);
            }
            out.corr(i, j) = value;
            out.corr(j, i) = value;
        }
    }
    return out;
}

OverlayMap cosine_overlay(const DescriptorMatrix& f, int seed_patch, int upsample) {
    const GridShape& shape = f.shape();
    if (seed_patch < 0 || seed_patch >= shape.n_patches())
        throw ParamError("cosine_overlay: seed patch out of range");
    if (upsample < 1)
        throw ParamError("cosine_overlay: upsample factor must be positive");

    const Vec seed = f.data().row(seed_patch);
    const double seed_norm = seed.norm();
    if (seed_norm == 0.0)
        throw ParamError("cosine_overlay: seed patch has zero norm");

    OverlayMap out;
    const int h = shape.h_patches, w = shape.w_patches;
    Mat coarse(h, w);
    for (int j = 0; j < shape.n_patches(); ++j) {
        const double norm_j = f.data().row(j).norm();
        double s = 0.0; // zero-norm rows (sparse fill) compare as 0, flagged
        if (norm_j == 0.0)
            out.had_zero_norm_rows = true;
        else
            s = seed.dot(f.data().row(j)) / (seed_norm * norm_j);
        coarse(shape.row_of(j), shape.col_of(j)) = s;
    }

    Mat up(h * upsample, w * upsample);
    for (Eigen::Index r = 0; r < up.rows(); ++r)
        for (Eigen::Index c = 0; c < up.cols(); ++c)
            up(r, c) = coarse(r / upsample, c / upsample);

    const double lo = up.minCoeff();
    const double hi = up.maxCoeff();
    if (hi > lo)
        out.values = (up.array() - lo) / (hi - lo);
    else
        out.values = Mat::Constant(up.rows(), up.cols(), 0.5);
    return out;
}

std::vector<std::uint8_t> overlay_to_pgm(const OverlayMap& overlay) {
    const auto h = overlay.values.rows();
    const auto w = overlay.values.cols();
    if (h == 0 || w == 0)
        throw ParamError("overlay_to_pgm: empty overlay");

    char header[64];
    const int len = std::snprintf(header, sizeof header, "P5\n%lld %lld\n255\n",
                                  static_cast<long long>(w), static_cast<long long>(h));
    std::vector<std::uint8_t> bytes(header, header + len);
    bytes.reserve(static_cast<std::size_t>(len) + static_cast<std::size_t>(h * w));
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c)
            bytes.push_back(static_cast<std::uint8_t>(std::llround(255.0 * overlay.values(r, c))));
    return bytes;
}

SvdFactors thin_svd(const Mat& f, double rank_tol) {
    if (f.rows() == 0 || f.cols() == 0)
        throw ParamError("thin_svd: empty matrix");
    if (!(rank_tol > 0.0 && rank_tol < 1.0))
        throw ParamError("thin_svd: rank tolerance must lie in (0, 1)");

    Eigen::JacobiSVD<Mat> svd(f, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& sv = svd.singularValues();
    const double cutoff = rank_tol * (sv.size() > 0 ? sv[0] : 0.0);

    SvdFactors out;
    out.rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > cutoff && sv[i] > 0.0)
            ++out.rank;
    out.u = svd.matrixU().leftCols(out.rank);
    out.singulars = sv.head(out.rank);
    out.v = svd.matrixV().leftCols(out.rank);
    return out;
}

Mat row_projector(const Mat& v_r) {
    if (v_r.rows() == 0)
        throw ParamError("row_projector: empty basis");
    if (v_r.cols() == 0)
        return Mat::Zero(v_r.rows(), v_r.rows()); // rank-zero space projects to 0
    require_orthonormal_columns(v_r, "row_projector");
    return v_r * v_r.transpose();
}

CoherenceReport coherence(const Mat& u_r) {
    if (u_r.rows() == 0 || u_r.cols() == 0)
        throw ParamError("coherence: empty basis");
    if (u_r.cols() > u_r.rows())
        throw ParamError("coherence: more columns than rows");
    require_orthonormal_columns(u_r, "coherence");

    CoherenceReport report;
    report.rank = static_cast<int>(u_r.cols());
    report.leverage = u_r.rowwise().squaredNorm();
    const auto n = static_cast<double>(u_r.rows());
    report.mu = n / static_cast<double>(report.rank) * report.leverage.maxCoeff();
    return report;
}

} // namespace sps
