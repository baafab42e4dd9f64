#pragma once

#include <utility>
#include <vector>

#include "sps/rng.hpp"
#include "sps/types.hpp"

namespace sps {

/// N x D matrix of patch descriptors: row i is the descriptor of patch i,
/// patches in row-major grid order. Immutable after construction.
class DescriptorMatrix {
public:
    DescriptorMatrix(GridShape shape, Mat data, bool centered = false);

    const GridShape& shape() const { return shape_; }
    const Mat& data() const { return data_; }
    bool centered() const { return centered_; }

    int n_patches() const { return shape_.n_patches(); }
    int dim() const { return shape_.dim; }
    Eigen::Index rows() const { return data_.rows(); }
    Eigen::Index cols() const { return data_.cols(); }

private:
    GridShape shape_;
    Mat data_;
    bool centered_ = false;
};

/// Column-wise centering. Returns the centered matrix (flag set) and the
/// removed per-column mean, which restores the input exactly by addition.
std::pair<DescriptorMatrix, Vec> center(const DescriptorMatrix& f);

/// Coherence profile of the synthetic generator's left factor.
enum class CoherenceMode {
    /// Orthonormalized seeded Gaussian: low row coherence w.h.p.
    kSpread,
    /// Identity-block rows embedded in U: leverage 1 on those rows,
    /// coherence driven to N/r.
    kSpiky,
};

/// Synthetic low-rank test matrix U * diag(r, r-1, ..., 1) * V^T plus
/// optional i.i.d. Gaussian noise. `spiky_rows` is used only in kSpiky
/// mode and must satisfy 1 <= spiky_rows <= rank.
DescriptorMatrix gen_low_rank(const GridShape& shape, int rank, double noise_sigma,
                              CoherenceMode mode, RngSeed seed, int spiky_rows = 0);

/// Per-row Euclidean norms.
Vec l2_row_norms(const DescriptorMatrix& f);

/// Indices of the `count` rows with largest l2 norm, descending-norm
/// order, ties broken by lower index first.
std::vector<int> top_energy_subset(const DescriptorMatrix& f, int count);

} // namespace sps
