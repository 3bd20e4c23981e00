#include "pdt/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace pdt {

TensorPtr init_weight(Shape shape, Rng& rng, double stddev) {
    auto t = Tensor::zeros(shape, true);
    for (auto& v : t->data) v = rng.normal(0.0, stddev);
    return t;
}

TensorPtr init_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

TensorPtr init_ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

namespace {

TensorPtr dropout_mask_mul(const TensorPtr& x, double rate, Rng* rng) {
    if (rate <= 0.0 || rng == nullptr) return x;
    auto mask = Tensor::zeros(x->shape, false);
    const double keep = 1.0 - rate;
    for (auto& v : mask->data) v = (rng->uniform() < keep) ? 1.0 / keep : 0.0;
    return mul(x, mask);
}

}  // namespace

SequenceEncoder::SequenceEncoder(EncoderConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.bidirectional && cfg_.kind != LayerKind::recurrent) {
        throw std::invalid_argument("encoder: bidirectional applies to the recurrent kind only");
    }
    const int d = cfg_.d_model;
    tok_emb_ = init_weight({cfg_.vocab_size, d}, rng, 0.08);
    pos_emb_ = init_weight({cfg_.max_len, d}, rng, 0.08);
    if (cfg_.d_cond > 0) cond_proj_ = init_weight({cfg_.d_cond, d}, rng, 0.08);
    const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < cfg_.depth; ++i) {
        if (cfg_.kind == LayerKind::attention) {
            AttnLayer l;
            l.wq = init_weight({d, d}, rng, w_std);
            l.bq = init_zeros({d});
            l.wk = init_weight({d, d}, rng, w_std);
            l.bk = init_zeros({d});
            l.wv = init_weight({d, d}, rng, w_std);
            l.bv = init_zeros({d});
            l.wo = init_weight({d, d}, rng, w_std);
            l.bo = init_zeros({d});
            l.ln1_g = init_ones({d});
            l.ln1_b = init_zeros({d});
            l.w1 = init_weight({d, d * cfg_.ffn_mult}, rng, w_std);
            l.b1 = init_zeros({d * cfg_.ffn_mult});
            l.w2 = init_weight({d * cfg_.ffn_mult, d}, rng, w_std);
            l.b2 = init_zeros({d});
            l.ln2_g = init_ones({d});
            l.ln2_b = init_zeros({d});
            attn_layers_.push_back(std::move(l));
        } else {
            RecLayer l;
            l.w_in = init_weight({d, d}, rng, w_std);
            l.w_rec = init_weight({d, d}, rng, w_std);
            l.b = init_zeros({d});
            if (cfg_.bidirectional) {
                l.w_in_r = init_weight({d, d}, rng, w_std);
                l.w_rec_r = init_weight({d, d}, rng, w_std);
                l.b_r = init_zeros({d});
            }
            l.ln_g = init_ones({d});
            l.ln_b = init_zeros({d});
            rec_layers_.push_back(std::move(l));
        }
    }
}

TensorPtr SequenceEncoder::run_attention(const AttnLayer& l, const TensorPtr& x,
                                         const std::vector<bool>& real_mask, bool causal,
                                         Rng* dropout_rng) const {
    const auto L = x->rows();
    auto q = add(matmul(x, l.wq), l.bq);
    auto k = add(matmul(x, l.wk), l.bk);
    auto v = add(matmul(x, l.wv), l.bv);
    auto scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(cfg_.d_model)));

    auto mask_add = Tensor::zeros({L, L});
    for (std::int64_t i = 0; i < L; ++i) {
        for (std::int64_t j = 0; j < L; ++j) {
            const bool allowed = real_mask[static_cast<std::size_t>(j)] && (!causal || j <= i);
            if (!allowed) mask_add->data[static_cast<std::size_t>(i * L + j)] = -1e30;
        }
    }
    auto attn = softmax_rows(add(scores, mask_add));
    auto ctx = dropout_mask_mul(matmul(attn, v), cfg_.dropout, dropout_rng);
    auto h1 = layer_norm_rows(add(x, add(matmul(ctx, l.wo), l.bo)), l.ln1_g, l.ln1_b);
    auto ffn = add(matmul(dropout_mask_mul(relu(add(matmul(h1, l.w1), l.b1)), cfg_.dropout,
                                           dropout_rng),
                          l.w2),
                   l.b2);
    return layer_norm_rows(add(h1, ffn), l.ln2_g, l.ln2_b);
}

TensorPtr SequenceEncoder::run_recurrent(const RecLayer& l, const TensorPtr& x,
                                         const std::vector<bool>& real_mask) const {
    const auto L = x->rows();
    const int d = cfg_.d_model;
    // masked recurrence: pad steps carry the state through unchanged so the
    // tail padding cannot leak into real positions
    std::vector<TensorPtr> fwd(static_cast<std::size_t>(L));
    TensorPtr h = Tensor::zeros({1, d});
    for (std::int64_t i = 0; i < L; ++i) {
        if (real_mask[static_cast<std::size_t>(i)]) {
            auto xi = slice_rows(x, i, 1);
            h = tanh_op(add(add(matmul(xi, l.w_in), matmul(h, l.w_rec)), l.b));
        }
        fwd[static_cast<std::size_t>(i)] = h;
    }
    TensorPtr mixed;
    if (cfg_.bidirectional) {
        std::vector<TensorPtr> bwd(static_cast<std::size_t>(L));
        TensorPtr hr = Tensor::zeros({1, d});
        for (std::int64_t i = L - 1; i >= 0; --i) {
            if (real_mask[static_cast<std::size_t>(i)]) {
                auto xi = slice_rows(x, i, 1);
                hr = tanh_op(add(add(matmul(xi, l.w_in_r), matmul(hr, l.w_rec_r)), l.b_r));
            }
            bwd[static_cast<std::size_t>(i)] = hr;
        }
        std::vector<TensorPtr> rows(static_cast<std::size_t>(L));
        for (std::int64_t i = 0; i < L; ++i) {
            rows[static_cast<std::size_t>(i)] = add(fwd[static_cast<std::size_t>(i)],
                                                    bwd[static_cast<std::size_t>(i)]);
        }
        mixed = concat_rows(rows);
    } else {
        mixed = concat_rows(fwd);
    }
    return layer_norm_rows(add(x, mixed), l.ln_g, l.ln_b);
}

TensorPtr SequenceEncoder::forward(const std::vector<int>& ids, const std::vector<bool>& real_mask,
                                   const TensorPtr& cond, bool causal, Rng* dropout_rng) const {
    const auto L = static_cast<std::int64_t>(ids.size());
    if (L == 0) throw std::invalid_argument("encoder: empty token sequence");
    if (L > cfg_.max_len) {
        throw std::invalid_argument("encoder: sequence length " + std::to_string(L) +
                                    " exceeds positional table of " + std::to_string(cfg_.max_len));
    }
    if (real_mask.size() != ids.size()) {
        throw std::invalid_argument("encoder: mask length does not match token length");
    }
    if (causal && cfg_.kind == LayerKind::recurrent && cfg_.bidirectional) {
        throw std::invalid_argument("encoder: causal forward with a bidirectional recurrent stack");
    }
    auto x = add(embedding(tok_emb_, ids), slice_rows(pos_emb_, 0, L));
    if (cond) {
        if (!cond_proj_) throw std::invalid_argument("encoder: condition given but d_cond == 0");
        if (cond->size() != cfg_.d_cond) {
            throw std::invalid_argument("encoder: condition size " + std::to_string(cond->size()) +
                                        " vs configured " + std::to_string(cfg_.d_cond));
        }
        auto projected = matmul(reshape(cond, {1, cfg_.d_cond}), cond_proj_);
        x = add(x, reshape(projected, {cfg_.d_model}));
    }
    for (int i = 0; i < cfg_.depth; ++i) {
        if (cfg_.kind == LayerKind::attention) {
            x = run_attention(attn_layers_[static_cast<std::size_t>(i)], x, real_mask, causal,
                              dropout_rng);
        } else {
            x = run_recurrent(rec_layers_[static_cast<std::size_t>(i)], x, real_mask);
        }
    }
    return x;
}

void SequenceEncoder::collect_params(const std::string& prefix, NamedParams& out) const {
    auto put = [&](const std::string& n, const TensorPtr& t) {
        if (t) out.emplace_back(prefix + "." + n, t->named(prefix + "." + n));
    };
    put("tok_emb", tok_emb_);
    put("pos_emb", pos_emb_);
    put("cond_proj", cond_proj_);
    for (std::size_t i = 0; i < attn_layers_.size(); ++i) {
        const auto& l = attn_layers_[i];
        const std::string p = "layer" + std::to_string(i);
        put(p + ".wq", l.wq); put(p + ".bq", l.bq);
        put(p + ".wk", l.wk); put(p + ".bk", l.bk);
        put(p + ".wv", l.wv); put(p + ".bv", l.bv);
        put(p + ".wo", l.wo); put(p + ".bo", l.bo);
        put(p + ".ln1_g", l.ln1_g); put(p + ".ln1_b", l.ln1_b);
        put(p + ".w1", l.w1); put(p + ".b1", l.b1);
        put(p + ".w2", l.w2); put(p + ".b2", l.b2);
        put(p + ".ln2_g", l.ln2_g); put(p + ".ln2_b", l.ln2_b);
    }
    for (std::size_t i = 0; i < rec_layers_.size(); ++i) {
        const auto& l = rec_layers_[i];
        const std::string p = "layer" + std::to_string(i);
        put(p + ".w_in", l.w_in); put(p + ".w_rec", l.w_rec); put(p + ".b", l.b);
        put(p + ".w_in_r", l.w_in_r); put(p + ".w_rec_r", l.w_rec_r); put(p + ".b_r", l.b_r);
        put(p + ".ln_g", l.ln_g); put(p + ".ln_b", l.ln_b);
    }
}

std::vector<TensorPtr> SequenceEncoder::params() const {
    NamedParams named;
    collect_params("enc", named);
    std::vector<TensorPtr> out;
    out.reserve(named.size());
    for (auto& [n, t] : named) out.push_back(t);
    return out;
}

TensorPtr pool_mean(const TensorPtr& token_matrix, const std::vector<bool>& real_mask) {
    if (token_matrix->rank() != 2) {
        throw std::invalid_argument("pool: expected token matrix, got shape " +
                                    shape_str(token_matrix->shape));
    }
    if (static_cast<std::int64_t>(real_mask.size()) != token_matrix->rows()) {
        throw std::invalid_argument("pool: mask length does not match row count");
    }
    std::int64_t count = 0;
    for (bool m : real_mask) count += m ? 1 : 0;
    if (count == 0) throw std::invalid_argument("pool: all positions are padding");
    std::vector<double> w(real_mask.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (real_mask[i]) w[i] = 1.0 / static_cast<double>(count);
    }
    return weighted_row_sum(token_matrix, w);
}

ProjectionHead::ProjectionHead(int d_in, int d_out, Nonlinearity nl, HeadInit init, Rng& rng)
    : d_in_(d_in), d_out_(d_out), nl_(nl) {
    const int hidden = d_in;
    if (init == HeadInit::identity_offset) {
        if (d_in != d_out) {
            throw std::invalid_argument("projection head: identity init needs square dims");
        }
        // relu(x + c) - c == x for activations above -c
        const double c = (nl == Nonlinearity::relu_kind) ? 3.0 : 0.0;
        w1 = Tensor::zeros({d_in, hidden}, true);
        w2 = Tensor::zeros({hidden, d_out}, true);
        for (int i = 0; i < d_in; ++i) {
            w1->data[static_cast<std::size_t>(i * hidden + i)] = 1.0;
            w2->data[static_cast<std::size_t>(i * d_out + i)] = 1.0;
        }
        for (auto& v : w1->data) v += rng.normal(0.0, 1e-3);
        for (auto& v : w2->data) v += rng.normal(0.0, 1e-3);
        b1 = Tensor::full({hidden}, c, true);
        b2 = Tensor::full({d_out}, -c, true);
    } else {
        const double s = 1.0 / std::sqrt(static_cast<double>(d_in));
        w1 = init_weight({d_in, hidden}, rng, s);
        b1 = init_zeros({hidden});
        w2 = init_weight({hidden, d_out}, rng, s);
        b2 = init_zeros({d_out});
    }
}

TensorPtr ProjectionHead::forward(const TensorPtr& v) const {
    if (v->size() != d_in_) {
        throw std::invalid_argument("projection head: input size " + std::to_string(v->size()) +
                                    " vs expected " + std::to_string(d_in_));
    }
    auto h = add(matmul(reshape(v, {1, d_in_}), w1), b1);
    switch (nl_) {
        case Nonlinearity::relu_kind: h = relu(h); break;
        case Nonlinearity::tanh_kind: h = tanh_op(h); break;
        case Nonlinearity::identity: break;
    }
    return reshape(add(matmul(h, w2), b2), {d_out_});
}

void ProjectionHead::collect_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w1", w1->named(prefix + ".w1"));
    out.emplace_back(prefix + ".b1", b1->named(prefix + ".b1"));
    out.emplace_back(prefix + ".w2", w2->named(prefix + ".w2"));
    out.emplace_back(prefix + ".b2", b2->named(prefix + ".b2"));
}

std::vector<TensorPtr> ProjectionHead::params() const { return {w1, b1, w2, b2}; }

}  // namespace pdt
