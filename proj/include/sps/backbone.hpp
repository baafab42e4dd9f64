#pragma once

#include <vector>

#include "sps/rng.hpp"
#include "sps/tensor.hpp"
#include "sps/types.hpp"

namespace sps {

/// Locality profile of an attention mask around its seed patch.
struct MaskKind {
    enum class Family { kHard, kExp2, kInverse };

    Family family = Family::kHard;
    double alpha = 0.0; // hard cutoff radius, ignored by the soft decays

    static MaskKind hard(double alpha) {
        if (alpha < 0.0)
            throw ParamError("MaskKind::hard: alpha must be non-negative");
        return {Family::kHard, alpha};
    }
    static MaskKind exp2() { return {Family::kExp2, 0.0}; }
    static MaskKind inverse() { return {Family::kInverse, 0.0}; }
};

/// Per-patch weights in [0, 1] focusing attention around a seed patch;
/// the seed itself always has weight 1.
struct AttentionMask {
    Vec weights;
    int seed_patch = 0;
    MaskKind kind;
};

struct BackboneConfig {
    int dim = 64;        // D
    int key_dim = 64;    // D_k
    int layers = 4;      // L
    int masked_layer = 4; // 1-based layer index where the mask applies
    double suppression = -1e4; // logit shift for fully masked entries, < 0
    bool residual = true;      // add the layer input back after attention
    bool scale_logits = false; // divide logits by sqrt(D_k)
    RngSeed seed;
};

/// Hidden state entering a layer plus that layer's projections.
struct LayerState {
    Mat hidden; // N x D
    Mat q;      // N x D_k
    Mat k;      // N x D_k
    Mat v;      // N x D
};

/// Minimal seeded single-head self-attention stack. Each layer computes
/// SoftMax(Q K^T) V with row-wise softmax plus an optional residual; no
/// feed-forward sublayer, no normalization. Projections are i.i.d.
/// Gaussian scaled by 1/sqrt(D). Immutable after construction.
class Backbone {
public:
    explicit Backbone(const BackboneConfig& config);

    const BackboneConfig& config() const { return config_; }

    /// Applies layers 1..upto_layer-1 and returns the state entering
    /// `upto_layer` together with its Q, K, V.
    LayerState forward_plain(const Mat& x, int upto_layer) const;

    /// Full unmasked forward pass through all L layers.
    Mat forward_full(const Mat& x) const;

    /// Row-stochastic masked attention weights SoftMax(G + (1 - M) r) at
    /// the masked layer, for inspection and extraction alike.
    Mat masked_attention_matrix(const Mat& x, const AttentionMask& mask) const;

    /// Descriptor of patch j: masked attention at layer l, then the
    /// remaining L - l plain layers; row j of the final state. The grid
    /// shape fixes the mask's distance geometry.
    Vec extract_patch_descriptor(const Mat& x, const GridShape& shape, int j,
                                 const MaskKind& kind) const;

    /// Descriptors for every index in omega, one masked pass per selected
    /// patch. Rows are bit-identical to independent
    /// extract_patch_descriptor calls.
    Mat extract_subset(const Mat& x, const GridShape& shape, const std::vector<int>& omega,
                       const MaskKind& kind) const;

private:
    // The masked path and the plain forward must share one code path per
    // floating-point step: a product expression duplicated at two call
    // sites is not guaranteed to round identically, and extraction with
    // an all-ones mask has to reproduce the plain forward bit for bit.
    LayerState project(Mat h, int layer) const;
    Mat state_scores(const LayerState& state, const AttentionMask* mask) const;
    Mat state_attention(const LayerState& state, const AttentionMask* mask) const;
    Mat run_masked_tail(const LayerState& state, const AttentionMask& mask) const;
    Mat attention_layer(const Mat& h, int layer) const;

    BackboneConfig config_;
    std::vector<Mat> w_q_, w_k_, w_v_;
};

/// Euclidean distance between patches i and j in the H'xW' grid under
/// the canonical row-major index map.
double grid_distance(int i, int j, const GridShape& shape);

/// Mask weights for seed patch j: hard(alpha) is the indicator of
/// d <= alpha; exp2 decays as 2^-d; inverse as min(1, 1/d) with the
/// seed fixed at 1.
AttentionMask build_mask(int j, const MaskKind& kind, const GridShape& shape);

/// Eq-style logit suppression: every row of the modification matrix is
/// the mask's weight vector, so entry (i, k) shifts by (1 - m_k) * r_sup.
Mat masked_similarity(const Mat& g, const AttentionMask& mask, double r_sup);

/// Row-wise softmax with max-subtraction; every row sums to 1.
Mat row_softmax(const Mat& logits);

} // namespace sps
