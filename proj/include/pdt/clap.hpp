#pragma once

#include <string>
#include <vector>

#include "pdt/data_io.hpp"
#include "pdt/encoders.hpp"
#include "pdt/tokenizer.hpp"

namespace pdt {

enum class ContrastiveLoss { ebm_nce, infonce };

struct ClapTrainConfig {
    ContrastiveLoss loss = ContrastiveLoss::infonce;
    double tau = 0.1;  // 0 disables temperature scaling
    int epochs = 10;
    double lr_text = 1e-3;
    double lr_protein = 1e-3;
    int batch_size = 8;
};

/// Dual-encoder alignment model: one encoder + projection head per modality,
/// trained contrastively so matched (text, protein) pairs score high.
class ClapModel {
public:
    ClapModel(EncoderConfig text_cfg, EncoderConfig protein_cfg, int d_latent,
              TextVocabulary vocab, Rng& rng);

    // encode -> masked-mean pool -> projection head
    TensorPtr text_rep(const std::string& text) const;
    TensorPtr protein_rep(const std::string& protein) const;
    // token-level protein encoding and its pooled (unprojected) vector
    TensorPtr protein_tokens_rep(const std::string& protein, std::vector<bool>* mask_out) const;

    // cosine similarity of the projected representations, in [-1, 1]
    double similarity(const std::string& text, const std::string& protein) const;

    void collect_params(NamedParams& out) const;
    std::vector<TensorPtr> text_params() const;
    std::vector<TensorPtr> protein_params() const;

    int d_latent() const { return d_latent_; }

    SequenceEncoder text_encoder;
    SequenceEncoder protein_encoder;
    ProjectionHead text_head;
    ProjectionHead protein_head;
    TextVocabulary text_vocab;

private:
    int d_latent_;
};

/// Scaled dot-product energy. tau = 0 means "no temperature scaling".
TensorPtr energy(const TensorPtr& z_t, const TensorPtr& z_p, double tau);

// Both losses take B >= 2 matched pairs; every mismatched in-batch pair is a
// negative. Symmetric over modalities, averaged, always >= 0.
TensorPtr ebm_nce_loss(const std::vector<TensorPtr>& z_text, const std::vector<TensorPtr>& z_prot,
                       double tau);
TensorPtr infonce_loss(const std::vector<TensorPtr>& z_text, const std::vector<TensorPtr>& z_prot,
                       double tau);

struct TrainTrace {
    std::vector<double> losses;  // one entry per optimization step
};

// Joint training of both encoders and heads; aborts on non-finite loss.
TrainTrace train_clap(ClapModel& model, const std::vector<PairRecord>& data,
                      const ClapTrainConfig& cfg, Rng& rng, int max_steps = -1);

}  // namespace pdt
