#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sps/backbone.hpp"
#include "sps/rng.hpp"
#include "sps/types.hpp"

namespace sps {

enum class Policy { kFixed, kThreshold, kProbabilityMatrix };

/// The kept-patch index set Omega. Indices are strictly increasing; under
/// the fixed policy the size is exactly ceil(rate * N).
struct SelectionSet {
    std::vector<int> indices;
    int n_total = 0;
    Policy policy = Policy::kFixed;
    double rate = 1.0; // meaningful for fixed and threshold policies

    int size() const { return static_cast<int>(indices.size()); }
};

/// Exactly k = ceil(rate * N) distinct indices, uniform over k-subsets.
SelectionSet sample_fixed(int n, double rate, RngSeed seed);

/// Independent per-patch keeps: Omega = {i : R_i <= rate}, R_i ~ U(0,1).
/// May legitimately return the empty set.
SelectionSet sample_threshold(int n, double rate, RngSeed seed);

/// Per-patch keep probabilities on the grid, row-major flattened.
SelectionSet sample_probability_matrix(const Mat& probability, RngSeed seed);

/// Dense-shaped tensor with unselected rows zeroed (the layout-preserving
/// sparse variant).
struct SparseDescriptorTensor {
    GridShape shape{1, 1, 1};
    Mat data;
    std::vector<bool> occupancy;

    double occupancy_fraction() const;
};

SparseDescriptorTensor build_sparse(const Mat& rows, const std::vector<int>& omega,
                                    const GridShape& shape);

enum class PosScheme { kSinusoidal, kSeededGaussian };
enum class CombineMode { kAdd, kConcat };

/// Deterministic N x D positional-embedding table. Sinusoidal rows follow
/// the usual alternating sin/cos layout, so row 0 is (0, 1, 0, 1, ...).
Mat positional_table(int n, int d, PosScheme scheme, RngSeed seed = {});

/// Pruned token sequence: kept descriptors paired with their original
/// positional embeddings, ordered by original index, no zero filler.
struct PositionEntry {
    int original_index = 0;
    Vec descriptor;
    Vec embedding;
};

struct PositionAdjustedSequence {
    std::vector<PositionEntry> entries;
    CombineMode mode = CombineMode::kAdd;

    int length() const { return static_cast<int>(entries.size()); }
    /// Materialized tokens: descriptor + p_i (add) or [descriptor | p_i] (concat).
    Mat tokens() const;
};

/// `rows` arrive in the same order as `omega`; output is sorted by
/// original index regardless of input order.
PositionAdjustedSequence build_position_adjusted(const Mat& rows, const std::vector<int>& omega,
                                                 const Mat& table, CombineMode mode);

enum class Variant { kSps, kSpps, kMspps };

struct SelectParams {
    Variant variant = Variant::kSps;
    double rate = 0.5;
    std::optional<Mat> probability; // MSPPS per-patch grid; overrides rate
    MaskKind mask = MaskKind::exp2();
    CombineMode combine = CombineMode::kAdd;
    PosScheme table_scheme = PosScheme::kSinusoidal;
    RngSeed table_seed{};
};

struct SelectionOutcome {
    SelectionSet selected;
    std::optional<SparseDescriptorTensor> sparse;     // SPS
    std::optional<PositionAdjustedSequence> sequence; // SPPS / MSPPS
};

/// Full per-frame pipeline: sample Omega, extract descriptors only for the
/// kept patches, assemble the variant's output. Reseed with stream_id =
/// frame counter to get fresh subsets per frame. MSPPS refuses an empty
/// draw since its consumer cannot take zero tokens.
SelectionOutcome select_and_build(const Backbone& backbone, const Mat& x, const GridShape& shape,
                                  const SelectParams& params, RngSeed seed);

/// One index per line under an "index" header.
std::string selection_to_csv(const SelectionSet& omega);

} // namespace sps
