#include "pdt/clap.hpp"

#include <cmath>
#include <stdexcept>

#include "pdt/optimizer.hpp"

namespace pdt {

namespace {

std::vector<bool> real_mask(const TokenSequence& t, int pad_id) {
    std::vector<bool> m(t.ids.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = t.ids[i] != pad_id;
    return m;
}

double tau_divisor(double tau) {
    if (tau < 0.0) throw std::invalid_argument("energy: negative temperature");
    return tau > 0.0 ? tau : 1.0;
}

void check_batch(const std::vector<TensorPtr>& a, const std::vector<TensorPtr>& b,
                 const char* op) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(op) + ": modality batch sizes differ");
    }
    if (a.size() < 2) {
        throw std::invalid_argument(std::string(op) +
                                    ": batch must hold at least 2 pairs (no negatives otherwise)");
    }
}

}  // namespace

ClapModel::ClapModel(EncoderConfig text_cfg, EncoderConfig protein_cfg, int d_latent,
                     TextVocabulary vocab, Rng& rng)
    : text_encoder(text_cfg, rng),
      protein_encoder(protein_cfg, rng),
      text_head(text_cfg.d_model, d_latent, Nonlinearity::relu_kind,
                text_cfg.d_model == d_latent ? HeadInit::identity_offset : HeadInit::random, rng),
      protein_head(protein_cfg.d_model, d_latent, Nonlinearity::relu_kind,
                   protein_cfg.d_model == d_latent ? HeadInit::identity_offset : HeadInit::random,
                   rng),
      text_vocab(std::move(vocab)),
      d_latent_(d_latent) {}

TensorPtr ClapModel::text_rep(const std::string& text) const {
    const auto toks = encode_text(text, text_vocab, text_encoder.config().max_len);
    const auto mask = real_mask(toks, TextVocabulary::pad_id);
    return text_head.forward(pool_mean(text_encoder.forward(toks.ids, mask), mask));
}

TensorPtr ClapModel::protein_tokens_rep(const std::string& protein,
                                        std::vector<bool>* mask_out) const {
    const auto toks = encode_protein(protein, protein_encoder.config().max_len, true);
    const auto mask = real_mask(toks, ProteinVocabulary::pad_id);
    if (mask_out) *mask_out = mask;
    return protein_encoder.forward(toks.ids, mask);
}

TensorPtr ClapModel::protein_rep(const std::string& protein) const {
    std::vector<bool> mask;
    auto tokens = protein_tokens_rep(protein, &mask);
    return protein_head.forward(pool_mean(tokens, mask));
}

double ClapModel::similarity(const std::string& text, const std::string& protein) const {
    NoGrad ng;
    return cosine_similarity(text_rep(text), protein_rep(protein))->value();
}

void ClapModel::collect_params(NamedParams& out) const {
    text_encoder.collect_params("clap.text_encoder", out);
    protein_encoder.collect_params("clap.protein_encoder", out);
    text_head.collect_params("clap.text_head", out);
    protein_head.collect_params("clap.protein_head", out);
}

std::vector<TensorPtr> ClapModel::text_params() const {
    auto out = text_encoder.params();
    for (auto& p : text_head.params()) out.push_back(p);
    return out;
}

std::vector<TensorPtr> ClapModel::protein_params() const {
    auto out = protein_encoder.params();
    for (auto& p : protein_head.params()) out.push_back(p);
    return out;
}

TensorPtr energy(const TensorPtr& z_t, const TensorPtr& z_p, double tau) {
    if (z_t->shape != z_p->shape) {
        throw std::invalid_argument("energy: representation shape mismatch (" +
                                    shape_str(z_t->shape) + " vs " + shape_str(z_p->shape) + ")");
    }
    return scale(dot(z_t, z_p), 1.0 / tau_divisor(tau));
}

TensorPtr ebm_nce_loss(const std::vector<TensorPtr>& z_text, const std::vector<TensorPtr>& z_prot,
                       double tau) {
    check_batch(z_text, z_prot, "ebm_nce_loss");
    const std::size_t b = z_text.size();
    // positive terms appear in both directions; negatives are all mismatches
    TensorPtr pos_sum;
    TensorPtr neg_text_sum;  // E(p_i, t_j), j != i
    TensorPtr neg_prot_sum;  // E(p_j, t_i), j != i
    for (std::size_t i = 0; i < b; ++i) {
        auto e_pos = energy(z_text[i], z_prot[i], tau);
        auto pos_term = log_op(sigmoid(e_pos));
        pos_sum = pos_sum ? add(pos_sum, pos_term) : pos_term;
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) continue;
            auto e_tn = energy(z_text[j], z_prot[i], tau);  // text negative for protein i
            auto t_term = log_op(sub(Tensor::scalar(1.0), sigmoid(e_tn)));
            neg_text_sum = neg_text_sum ? add(neg_text_sum, t_term) : t_term;
            auto e_pn = energy(z_text[i], z_prot[j], tau);  // protein negative for text i
            auto p_term = log_op(sub(Tensor::scalar(1.0), sigmoid(e_pn)));
            neg_prot_sum = neg_prot_sum ? add(neg_prot_sum, p_term) : p_term;
        }
    }
    const double nb = static_cast<double>(b);
    const double nneg = nb * (nb - 1.0);
    auto pos_mean = scale(pos_sum, 1.0 / nb);
    auto half_text = scale(add(pos_mean, scale(neg_text_sum, 1.0 / nneg)), -0.5);
    auto half_prot = scale(add(pos_mean, scale(neg_prot_sum, 1.0 / nneg)), -0.5);
    return add(half_text, half_prot);
}

TensorPtr infonce_loss(const std::vector<TensorPtr>& z_text, const std::vector<TensorPtr>& z_prot,
                       double tau) {
    check_batch(z_text, z_prot, "infonce_loss");
    const std::size_t b = z_text.size();
    // B x B energy matrix, rows = proteins, cols = texts
    std::vector<TensorPtr> rows;
    rows.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<TensorPtr> cells;
        cells.reserve(b);
        for (std::size_t j = 0; j < b; ++j) {
            cells.push_back(reshape(energy(z_text[j], z_prot[i], tau), {1, 1}));
        }
        rows.push_back(transpose(concat_rows(cells)));
    }
    auto e = concat_rows(rows);  // (B, B)
    std::vector<int> diag(b);
    for (std::size_t i = 0; i < b; ++i) diag[i] = static_cast<int>(i);
    auto by_protein = cross_entropy_mean(e, diag);             // classify the text per protein
    auto by_text = cross_entropy_mean(transpose(e), diag);     // classify the protein per text
    return add(scale(by_protein, 0.5), scale(by_text, 0.5));
}

TrainTrace train_clap(ClapModel& model, const std::vector<PairRecord>& data,
                      const ClapTrainConfig& cfg, Rng& rng, int max_steps) {
    if (data.empty()) throw std::invalid_argument("train_clap: empty dataset");
    if (cfg.batch_size < 2) throw std::invalid_argument("train_clap: batch size must be >= 2");

    AdamW opt;
    opt.add_group(model.text_params(), cfg.lr_text);
    opt.add_group(model.protein_params(), cfg.lr_protein);

    TrainTrace trace;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int steps = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start + static_cast<std::size_t>(cfg.batch_size) <= order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<TensorPtr> z_text, z_prot;
            for (int k = 0; k < cfg.batch_size; ++k) {
                const auto& rec = data[order[start + static_cast<std::size_t>(k)]];
                z_text.push_back(model.text_rep(rec.text));
                z_prot.push_back(model.protein_rep(rec.sequence));
            }
            auto loss = cfg.loss == ContrastiveLoss::ebm_nce
                            ? ebm_nce_loss(z_text, z_prot, cfg.tau)
                            : infonce_loss(z_text, z_prot, cfg.tau);
            const double lv = loss->value();
            if (!std::isfinite(lv)) {
                throw std::runtime_error("train_clap: non-finite loss at step " +
                                         std::to_string(steps) + " (diverged)");
            }
            trace.losses.push_back(lv);
            opt.zero_grad();
            backward(loss);
            opt.step();
            ++steps;
            if (max_steps > 0 && steps >= max_steps) return trace;
        }
    }
    return trace;
}

}  // namespace pdt
