#include "sps/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace sps {

namespace {

void check_unique_in_range(const std::vector<int>& omega, int n, const char* who) {
    std::unordered_set<int> seen;
    for (int i : omega) {
        if (i < 0 || i >= n)
            throw ParamError(std::string(who) + ": index out of range");
        if (!seen.insert(i).second)
            throw ParamError(std::string(who) + ": duplicate index");
    }
}

} // namespace

SelectionSet sample_fixed(int n, double rate, RngSeed seed) {
    if (n < 1)
        throw ParamError("sample_fixed: need at least one patch");
    if (!(rate > 0.0 && rate <= 1.0))
        throw ParamError("sample_fixed: rate must lie in (0, 1]");
    const int k = static_cast<int>(std::ceil(rate * n));

    Rng rng(seed);
    SelectionSet out;
    out.indices = sample_without_replacement(n, k, rng);
    out.n_total = n;
    out.policy = Policy::kFixed;
    out.rate = rate;
    return out;
}

SelectionSet sample_threshold(int n, double rate, RngSeed seed) {
    if (n < 1)
        throw ParamError("sample_threshold: need at least one patch");
    if (!(rate > 0.0 && rate <= 1.0))
        throw ParamError("sample_threshold: rate must lie in (0, 1]");

    Rng rng(seed);
    SelectionSet out;
    out.n_total = n;
    out.policy = Policy::kThreshold;
    out.rate = rate;
    for (int i = 0; i < n; ++i) {
        // open-interval draw: rate 1 keeps everything, a zero probability
        // entry in the matrix variant below never fires
        if (rng.uniform_open01() <= rate)
            out.indices.push_back(i);
    }
    return out;
}

SelectionSet sample_probability_matrix(const Mat& probability, RngSeed seed) {
    const auto n = probability.size();
    if (n == 0)
        throw ParamError("sample_probability_matrix: empty probability grid");
    if (!probability.allFinite() || probability.minCoeff() < 0.0 || probability.maxCoeff() > 1.0)
        throw ParamError("sample_probability_matrix: entries must lie in [0, 1]");

    Rng rng(seed);
    SelectionSet out;
    out.n_total = static_cast<int>(n);
    out.policy = Policy::kProbabilityMatrix;
    out.rate = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p = probability(i / probability.cols(), i % probability.cols());
        if (rng.uniform_open01() <= p)
            out.indices.push_back(static_cast<int>(i));
    }
    return out;
}

double SparseDescriptorTensor::occupancy_fraction() const {
    if (occupancy.empty())
        return 0.0;
    const auto kept = std::count(occupancy.begin(), occupancy.end(), true);
    return static_cast<double>(kept) / static_cast<double>(occupancy.size());
}

SparseDescriptorTensor build_sparse(const Mat& rows, const std::vector<int>& omega,
                                    const GridShape& shape) {
    if (rows.rows() != static_cast<Eigen::Index>(omega.size()))
        throw ParamError("build_sparse: row count does not match selection size");
    if (rows.rows() > 0 && rows.cols() != shape.dim)
        throw ParamError("build_sparse: descriptor width does not match grid dim");
    check_unique_in_range(omega, shape.n_patches(), "build_sparse");

    SparseDescriptorTensor out;
    out.shape = shape;
    out.data = Mat::Zero(shape.n_patches(), shape.dim);
    out.occupancy.assign(static_cast<std::size_t>(shape.n_patches()), false);
    for (std::size_t t = 0; t < omega.size(); ++t) {
        out.data.row(omega[t]) = rows.row(static_cast<Eigen::Index>(t));
        out.occupancy[static_cast<std::size_t>(omega[t])] = true;
    }
    return out;
}

Mat positional_table(int n, int d, PosScheme scheme, RngSeed seed) {
    if (n < 1 || d < 1)
        throw ParamError("positional_table: dimensions must be positive");

    Mat table(n, d);
    if (scheme == PosScheme::kSeededGaussian) {
        Rng rng(seed);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                table(i, j) = rng.normal();
        return table;
    }
    for (int pos = 0; pos < n; ++pos) {
        for (int j = 0; j < d; ++j) {
            const double freq = std::pow(10000.0, -2.0 * (j / 2) / static_cast<double>(d));
            const double angle = pos * freq;
            table(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return table;
}

Mat PositionAdjustedSequence::tokens() const {
    if (entries.empty())
        return Mat(0, 0);
    const auto d = entries.front().descriptor.size();
    const auto width = mode == CombineMode::kAdd ? d : 2 * d;
    Mat out(static_cast<Eigen::Index>(entries.size()), width);
    for (std::size_t t = 0; t < entries.size(); ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        if (mode == CombineMode::kAdd) {
            out.row(row) = (entries[t].descriptor + entries[t].embedding).transpose();
        } else {
            out.row(row).head(d) = entries[t].descriptor.transpose();
            out.row(row).tail(d) = entries[t].embedding.transpose();
        }
    }
    return out;
}

PositionAdjustedSequence build_position_adjusted(const Mat& rows, const std::vector<int>& omega,
                                                 const Mat& table, CombineMode mode) {
    if (rows.rows() != static_cast<Eigen::Index>(omega.size()))
        throw ParamError("build_position_adjusted: row count does not match selection size");
    if (rows.rows() > 0 && rows.cols() != table.cols())
        throw ParamError("build_position_adjusted: descriptor and table widths differ");
    check_unique_in_range(omega, static_cast<int>(table.rows()), "build_position_adjusted");

    PositionAdjustedSequence out;
    out.mode = mode;
    out.entries.reserve(omega.size());
    for (std::size_t t = 0; t < omega.size(); ++t) {
        PositionEntry entry;
        entry.original_index = omega[t];
        entry.descriptor = rows.row(static_cast<Eigen::Index>(t));
        entry.embedding = table.row(omega[t]);
        out.entries.push_back(std::move(entry));
    }
    std::sort(out.entries.begin(), out.entries.end(),
              [](const PositionEntry& a, const PositionEntry& b) {
                  return a.original_index < b.original_index;
              });
    return out;
}

SelectionOutcome select_and_build(const Backbone& backbone, const Mat& x, const GridShape& shape,
                                  const SelectParams& params, RngSeed seed) {
    const int n = shape.n_patches();
    if (x.rows() != n)
        throw ParamError("select_and_build: grid shape does not match token count");

    SelectionOutcome out;
    if (params.variant == Variant::kMspps) {
        out.selected = params.probability
                           ? sample_probability_matrix(*params.probability, seed)
                           : sample_threshold(n, params.rate, seed);
        if (params.probability && out.selected.n_total != n)
            throw ParamError("select_and_build: probability grid size does not match token count");
        if (out.selected.indices.empty())
            throw ParamError("select_and_build: empty selection, policy needs at least one token");
    } else {
        out.selected = sample_fixed(n, params.rate, seed);
    }

    const Mat rows = backbone.extract_subset(x, shape, out.selected.indices, params.mask);

    if (params.variant == Variant::kSps) {
        out.sparse = build_sparse(rows, out.selected.indices, shape);
    } else {
        const Mat table = positional_table(n, static_cast<int>(rows.cols()), params.table_scheme,
                                           params.table_seed);
        out.sequence = build_position_adjusted(rows, out.selected.indices, table, params.combine);
    }
    return out;
}

std::string selection_to_csv(const SelectionSet& omega) {
    std::ostringstream out;
    out << "index\n";
    for (int i : omega.indices)
        out << i << "\n";
    return out.str();
}

} // namespace sps
