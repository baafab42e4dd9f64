#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sps {

// Row-major storage so matrix memory matches the on-disk payload layout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Invalid argument to an operation (bad rate, rank out of range, ...).
class ParamError : public std::invalid_argument {
public:
    explicit ParamError(const std::string& what) : std::invalid_argument(what) {}
};

/// A caller violated an operation's contract (e.g. uncentered input where
/// a centered matrix is required, non-orthonormal basis, non-projector).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Malformed serialized data; the message names the failing field.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Patch grid geometry: H'xW' patches, D channels per descriptor.
struct GridShape {
    int h_patches = 0;
    int w_patches = 0;
    int dim = 0;

    GridShape() = default;
    GridShape(int h, int w, int d) : h_patches(h), w_patches(w), dim(d) {
        if (h < 1 || w < 1 || d < 1)
            throw ParamError("GridShape: h_patches, w_patches and dim must be positive");
    }

    int n_patches() const { return h_patches * w_patches; }

    // Canonical index <-> (x, y) map: patches in row-major grid order.
    int row_of(int index) const { return index / w_patches; }
    int col_of(int index) const { return index % w_patches; }
    int index_of(int row, int col) const { return row * w_patches + col; }

    bool operator==(const GridShape& o) const {
        return h_patches == o.h_patches && w_patches == o.w_patches && dim == o.dim;
    }
};

} // namespace sps
