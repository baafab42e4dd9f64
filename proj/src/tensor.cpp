#include "sps/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace sps {

namespace {

void require_finite(const Mat& m, const char* who) {
    if (!m.allFinite())
        throw ParamError(std::string(who) + ": matrix entries must be finite");
}

// Thin Q factor of a seeded Gaussian block, giving `cols` orthonormal
// columns over `rows` coordinates.
Mat orthonormal_gaussian(int rows, int cols, Rng& rng) {
    Mat g(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            g(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(rows, cols);
    return q;
}

} // namespace

DescriptorMatrix::DescriptorMatrix(GridShape shape, Mat data, bool centered)
    : shape_(shape), data_(std::move(data)), centered_(centered) {
    if (data_.rows() != shape_.n_patches() || data_.cols() != shape_.dim)
        throw ParamError("DescriptorMatrix: data size does not match grid shape");
    require_finite(data_, "DescriptorMatrix");
    if (centered_) {
        const Vec mean = data_.colwise().mean();
        const Vec maxabs = data_.cwiseAbs().colwise().maxCoeff();
        for (int j = 0; j < data_.cols(); ++j)
            if (std::abs(mean(j)) > 1e-9 * maxabs(j))
                throw ContractError("DescriptorMatrix: centered flag set on uncentered data");
    }
}

std::pair<DescriptorMatrix, Vec> center(const DescriptorMatrix& f) {
    const Mat& x = f.data();
    Vec mean = x.colwise().mean();
    Mat out = x.rowwise() - mean.transpose();
    // Second pass removes the summation roundoff of the first mean.
    const Vec residual = out.colwise().mean();
    out.rowwise() -= residual.transpose();
    mean += residual;
    return {DescriptorMatrix(f.shape(), std::move(out), true), std::move(mean)};
}

DescriptorMatrix gen_low_rank(const GridShape& shape, int rank, double noise_sigma,
                              CoherenceMode mode, RngSeed seed, int spiky_rows) {
    const int n = shape.n_patches();
    const int d = shape.dim;
    if (rank < 1 || rank > std::min(n, d))
        throw ParamError("gen_low_rank: rank must satisfy 1 <= rank <= min(N, D)");
    if (noise_sigma < 0.0)
        throw ParamError("gen_low_rank: noise_sigma must be non-negative");

    Rng rng(seed);
    Mat u;
    if (mode == CoherenceMode::kSpread) {
        u = orthonormal_gaussian(n, rank, rng);
    } else {
        const int s = spiky_rows == 0 ? rank : spiky_rows;
        if (s < 1 || s > rank)
            throw ParamError("gen_low_rank: spiky_rows must satisfy 1 <= s <= rank");
        // First s columns are e_0..e_{s-1}; the rest live on rows >= s so the
        // column blocks have disjoint support and stay mutually orthogonal.
        u = Mat::Zero(n, rank);
        for (int i = 0; i < s; ++i)
            u(i, i) = 1.0;
        if (rank > s) {
            if (n - s < rank - s)
                throw ParamError("gen_low_rank: grid too small for requested spiky structure");
            u.block(s, s, n - s, rank - s) = orthonormal_gaussian(n - s, rank - s, rng);
        }
    }
    Mat v = orthonormal_gaussian(d, rank, rng);

    Vec sigma(rank);
    for (int i = 0; i < rank; ++i)
        sigma(i) = static_cast<double>(rank - i);

    Mat out = u * sigma.asDiagonal() * v.transpose();
    if (noise_sigma > 0.0) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                out(i, j) += noise_sigma * rng.normal();
    }
    return DescriptorMatrix(shape, std::move(out));
}

Vec l2_row_norms(const DescriptorMatrix& f) {
    return f.data().rowwise().norm();
}

std::vector<int> top_energy_subset(const DescriptorMatrix& f, int count) {
    const int n = f.n_patches();
    if (count < 1 || count > n)
        throw ParamError("top_energy_subset: count must satisfy 1 <= count <= N");
    const Vec norms = l2_row_norms(f);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return norms(a) > norms(b); });
    order.resize(count);
    return order;
}

} // namespace sps
