#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pdt/rng.hpp"
#include "pdt/tensor.hpp"

namespace pdt {

using NamedParams = std::vector<std::pair<std::string, TensorPtr>>;

enum class LayerKind { recurrent, attention };

struct EncoderConfig {
    int vocab_size = 30;
    int d_model = 64;
    int max_len = 128;
    int depth = 2;
    LayerKind kind = LayerKind::attention;
    int ffn_mult = 2;
    int d_cond = 0;            // >0 adds a condition projection (d_cond -> d_model)
    bool bidirectional = false;  // recurrent kind only; incompatible with causal
    double dropout = 0.0;        // disabled by default for determinism
};

/// Token-level sequence encoder: embeddings + positional table + a stack of
/// context-mixing layers (masked recurrence or self-attention). Padding
/// positions never influence non-pad rows, which makes masked-mean pooling
/// padding-invariant.
class SequenceEncoder {
public:
    SequenceEncoder(EncoderConfig cfg, Rng& rng);

    // (L x d_model); `real_mask[i]` is true for non-pad positions. `cond`
    // (d_cond) is linearly projected and added at every position. `causal`
    // restricts mixing to positions <= i (attention kind only).
    TensorPtr forward(const std::vector<int>& ids, const std::vector<bool>& real_mask,
                      const TensorPtr& cond = nullptr, bool causal = false,
                      Rng* dropout_rng = nullptr) const;

    const EncoderConfig& config() const { return cfg_; }
    void collect_params(const std::string& prefix, NamedParams& out) const;
    std::vector<TensorPtr> params() const;

private:
    struct AttnLayer {
        TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
        TensorPtr ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
    };
    struct RecLayer {
        TensorPtr w_in, w_rec, b;        // forward direction
        TensorPtr w_in_r, w_rec_r, b_r;  // reverse direction (bidirectional only)
        TensorPtr ln_g, ln_b;
    };

    TensorPtr run_attention(const AttnLayer& l, const TensorPtr& x,
                            const std::vector<bool>& real_mask, bool causal,
                            Rng* dropout_rng) const;
    TensorPtr run_recurrent(const RecLayer& l, const TensorPtr& x,
                            const std::vector<bool>& real_mask) const;

    EncoderConfig cfg_;
    TensorPtr tok_emb_, pos_emb_, cond_proj_;
    std::vector<AttnLayer> attn_layers_;
    std::vector<RecLayer> rec_layers_;
};

/// Masked mean over non-pad token vectors.
TensorPtr pool_mean(const TensorPtr& token_matrix, const std::vector<bool>& real_mask);

enum class Nonlinearity { relu_kind, tanh_kind, identity };

enum class HeadInit {
    random,
    identity_offset,  // near-identity at init (square dims); keeps the projected
                      // space close to the raw pooled space early in training
};

/// Two-layer perceptron d_in -> d_out used as the alignment prediction head.
class ProjectionHead {
public:
    ProjectionHead(int d_in, int d_out, Nonlinearity nl, HeadInit init, Rng& rng);

    TensorPtr forward(const TensorPtr& v) const;  // rank-1 in, rank-1 out
    int d_in() const { return d_in_; }
    int d_out() const { return d_out_; }
    void collect_params(const std::string& prefix, NamedParams& out) const;
    std::vector<TensorPtr> params() const;

    TensorPtr w1, b1, w2, b2;

private:
    int d_in_, d_out_;
    Nonlinearity nl_;
};

// shared initializer helpers
TensorPtr init_weight(Shape shape, Rng& rng, double stddev = 0.08);
TensorPtr init_zeros(Shape shape);
TensorPtr init_ones(Shape shape);

}  // namespace pdt
