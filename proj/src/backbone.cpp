#include "sps/backbone.hpp"

#include <cmath>

namespace sps {

namespace {

Mat gaussian_matrix(int rows, int cols, double scale, Rng& rng) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = scale * rng.normal();
    return m;
}

} // namespace

double grid_distance(int i, int j, const GridShape& shape) {
    const int n = shape.n_patches();
    if (i < 0 || i >= n || j < 0 || j >= n)
        throw ParamError("grid_distance: patch index out of range");
    const double dx = static_cast<double>(shape.col_of(i) - shape.col_of(j));
    const double dy = static_cast<double>(shape.row_of(i) - shape.row_of(j));
    return std::sqrt(dx * dx + dy * dy);
}

AttentionMask build_mask(int j, const MaskKind& kind, const GridShape& shape) {
    const int n = shape.n_patches();
    if (j < 0 || j >= n)
        throw ParamError("build_mask: seed patch out of range");
    Vec w(n);
    for (int i = 0; i < n; ++i) {
        const double d = grid_distance(i, j, shape);
        switch (kind.family) {
        case MaskKind::Family::kHard:
            w(i) = d <= kind.alpha ? 1.0 : 0.0;
            break;
        case MaskKind::Family::kExp2:
            w(i) = std::exp2(-d);
            break;
        case MaskKind::Family::kInverse:
            // 1/d is undefined at the seed; pin it to 1 and clamp the rest
            // into [0, 1].
            w(i) = i == j ? 1.0 : std::min(1.0, 1.0 / d);
            break;
        }
    }
    w(j) = 1.0;
    return AttentionMask{std::move(w), j, kind};
}

Mat masked_similarity(const Mat& g, const AttentionMask& mask, double r_sup) {
    if (r_sup >= 0.0)
        throw ParamError("masked_similarity: suppression strength must be negative");
    if (g.rows() != g.cols() || g.rows() != mask.weights.size())
        throw ParamError("masked_similarity: similarity matrix and mask sizes differ");
    Mat out = g;
    out.rowwise() += ((1.0 - mask.weights.array()) * r_sup).matrix().transpose();
    return out;
}

Mat row_softmax(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (int i = 0; i < logits.rows(); ++i) {
        const double rowmax = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - rowmax).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

Backbone::Backbone(const BackboneConfig& config) : config_(config) {
    if (config_.dim < 1 || config_.key_dim < 1)
        throw ParamError("Backbone: dim and key_dim must be positive");
    if (config_.layers < 1)
        throw ParamError("Backbone: need at least one layer");
    if (config_.masked_layer < 1 || config_.masked_layer > config_.layers)
        throw ParamError("Backbone: masked_layer must lie in [1, layers]");
    if (config_.suppression >= 0.0)
        throw ParamError("Backbone: suppression strength must be negative");

    Rng rng(config_.seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.dim));
    w_q_.reserve(config_.layers);
    w_k_.reserve(config_.layers);
    w_v_.reserve(config_.layers);
    for (int l = 0; l < config_.layers; ++l) {
        w_q_.push_back(gaussian_matrix(config_.dim, config_.key_dim, scale, rng));
        w_k_.push_back(gaussian_matrix(config_.dim, config_.key_dim, scale, rng));
        w_v_.push_back(gaussian_matrix(config_.dim, config_.dim, scale, rng));
    }
}

LayerState Backbone::project(Mat h, int layer) const {
    LayerState state;
    state.q.noalias() = h * w_q_[layer];
    state.k.noalias() = h * w_k_[layer];
    state.v.noalias() = h * w_v_[layer];
    state.hidden = std::move(h);
    return state;
}

Mat Backbone::state_scores(const LayerState& state, const AttentionMask* mask) const {
    Mat logits;
    logits.noalias() = state.q * state.k.transpose();
    if (config_.scale_logits)
        logits /= std::sqrt(static_cast<double>(config_.key_dim));
    if (mask != nullptr)
        return masked_similarity(logits, *mask, config_.suppression);
    return logits;
}

Mat Backbone::state_attention(const LayerState& state, const AttentionMask* mask) const {
    const Mat weights = row_softmax(state_scores(state, mask));
    Mat y;
    y.noalias() = weights * state.v;
    if (config_.residual)
        y += state.hidden;
    return y;
}

Mat Backbone::attention_layer(const Mat& h, int layer) const {
    return state_attention(project(h, layer), nullptr);
}

LayerState Backbone::forward_plain(const Mat& x, int upto_layer) const {
    if (x.cols() != config_.dim)
        throw ParamError("forward_plain: input width does not match backbone dim");
    if (x.rows() < 1)
        throw ParamError("forward_plain: need at least one token");
    if (!x.allFinite())
        throw ParamError("forward_plain: input entries must be finite");
    if (upto_layer < 1 || upto_layer > config_.layers)
        throw ParamError("forward_plain: layer index out of range");

    Mat h = x;
    for (int l = 0; l < upto_layer - 1; ++l)
        h = attention_layer(h, l);
    return project(std::move(h), upto_layer - 1);
}

Mat Backbone::forward_full(const Mat& x) const {
    return state_attention(forward_plain(x, config_.layers), nullptr);
}

Mat Backbone::masked_attention_matrix(const Mat& x, const AttentionMask& mask) const {
    const LayerState state = forward_plain(x, config_.masked_layer);
    return row_softmax(state_scores(state, &mask));
}

Mat Backbone::run_masked_tail(const LayerState& state, const AttentionMask& mask) const {
    Mat h = state_attention(state, &mask);
    for (int l = config_.masked_layer; l < config_.layers; ++l)
        h = attention_layer(h, l);
    return h;
}

Vec Backbone::extract_patch_descriptor(const Mat& x, const GridShape& shape, int j,
                                       const MaskKind& kind) const {
    if (shape.n_patches() != x.rows())
        throw ParamError("extract_patch_descriptor: grid shape does not match token count");
    const LayerState state = forward_plain(x, config_.masked_layer);
    const AttentionMask mask = build_mask(j, kind, shape);
    return run_masked_tail(state, mask).row(j);
}

Mat Backbone::extract_subset(const Mat& x, const GridShape& shape,
                             const std::vector<int>& omega, const MaskKind& kind) const {
    if (omega.empty())
        throw ParamError("extract_subset: selection must be non-empty");
    if (shape.n_patches() != x.rows())
        throw ParamError("extract_subset: grid shape does not match token count");
    const LayerState state = forward_plain(x, config_.masked_layer);
    Mat out(static_cast<int>(omega.size()), config_.dim);
    for (std::size_t t = 0; t < omega.size(); ++t) {
        const AttentionMask mask = build_mask(omega[t], kind, shape);
        out.row(static_cast<int>(t)) = run_masked_tail(state, mask).row(omega[t]);
    }
    return out;
}

} // namespace sps
