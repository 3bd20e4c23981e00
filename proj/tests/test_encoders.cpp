#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "pdt/encoders.hpp"
#include "pdt/rng.hpp"

using namespace pdt;

namespace {

std::vector<bool> mask_of(const std::vector<int>& ids, int pad_id = 0) {
    std::vector<bool> m(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != pad_id;
    return m;
}

}  // namespace

TEST_CASE("zero-initialized recurrent encoder propagates zeros") {
    Rng rng(1);
    EncoderConfig cfg;
    cfg.vocab_size = 30;
    cfg.d_model = 8;
    cfg.max_len = 16;
    cfg.depth = 2;
    cfg.kind = LayerKind::recurrent;
    SequenceEncoder enc(cfg, rng);
    for (auto& p : enc.params()) {
        for (auto& v : p->data) v = 0.0;
    }
    // keep layer-norm gains at one (zero input stays zero either way)
    std::vector<int> ids = {1, 4, 5, 2};
    auto h = enc.forward(ids, mask_of(ids));
    for (double v : h->data) CHECK(v == 0.0);
}

TEST_CASE("encoder output shape is (L, d_model)") {
    Rng rng(2);
    for (LayerKind kind : {LayerKind::attention, LayerKind::recurrent}) {
        EncoderConfig cfg;
        cfg.d_model = 12;
        cfg.max_len = 32;
        cfg.kind = kind;
        SequenceEncoder enc(cfg, rng);
        std::vector<int> ids = {1, 9, 17, 22, 2, 0, 0};
        auto h = enc.forward(ids, mask_of(ids));
        CHECK(h->shape == Shape{7, 12});
    }
}

TEST_CASE("extending the PAD tail never changes non-pad rows or the pooled vector") {
    Rng rng(3);
    for (bool bidir : {false, true}) {
        for (LayerKind kind : {LayerKind::attention, LayerKind::recurrent}) {
            if (bidir && kind != LayerKind::recurrent) continue;
            EncoderConfig cfg;
            cfg.d_model = 16;
            cfg.max_len = 24;
            cfg.kind = kind;
            cfg.bidirectional = bidir;
            SequenceEncoder enc(cfg, rng);
            std::vector<int> short_ids = {1, 5, 8, 11, 2};
            std::vector<int> long_ids = short_ids;
            long_ids.resize(12, 0);
            auto h_short = enc.forward(short_ids, mask_of(short_ids));
            auto h_long = enc.forward(long_ids, mask_of(long_ids));
            for (std::size_t i = 0; i < short_ids.size() * 16; ++i) {
                CHECK(h_long->data[i] == doctest::Approx(h_short->data[i]).epsilon(1e-14));
            }
            auto p_short = pool_mean(h_short, mask_of(short_ids));
            auto p_long = pool_mean(h_long, mask_of(long_ids));
            for (int i = 0; i < 16; ++i) {
                CHECK(p_long->data[static_cast<std::size_t>(i)] ==
                      doctest::Approx(p_short->data[static_cast<std::size_t>(i)]).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("sequence longer than the positional table is an error") {
    Rng rng(4);
    EncoderConfig cfg;
    cfg.max_len = 4;
    SequenceEncoder enc(cfg, rng);
    std::vector<int> ids = {1, 4, 5, 6, 2};
    CHECK_THROWS_WITH_AS(enc.forward(ids, mask_of(ids)), doctest::Contains("positional"),
                         std::invalid_argument);
}

TEST_CASE("pooling examples") {
    auto single = Tensor::create({1, 3}, {0.5, -1.0, 2.0});
    auto p1 = pool_mean(single, {true});
    CHECK(p1->data == std::vector<double>{0.5, -1.0, 2.0});

    auto twice = Tensor::create({2, 3}, {0.5, -1.0, 2.0, 0.5, -1.0, 2.0});
    auto p2 = pool_mean(twice, {true, true});
    for (int i = 0; i < 3; ++i) {
        CHECK(p2->data[static_cast<std::size_t>(i)] ==
              doctest::Approx(single->data[static_cast<std::size_t>(i)]));
    }

    auto m = Tensor::create({2, 2}, {1.0, 3.0, 3.0, 1.0});
    auto pm = pool_mean(m, {true, true});
    CHECK(pm->data == std::vector<double>{2.0, 2.0});

    CHECK_THROWS_AS(pool_mean(m, {false, false}), std::invalid_argument);
}

TEST_CASE("identity projection head with linear path passes input through") {
    Rng rng(5);
    ProjectionHead head(4, 4, Nonlinearity::identity, HeadInit::random, rng);
    for (auto& v : head.w1->data) v = 0.0;
    for (auto& v : head.w2->data) v = 0.0;
    for (int i = 0; i < 4; ++i) {
        head.w1->data[static_cast<std::size_t>(i * 4 + i)] = 1.0;
        head.w2->data[static_cast<std::size_t>(i * 4 + i)] = 1.0;
    }
    head.b1->zero_grad();
    for (auto& v : head.b1->data) v = 0.0;
    for (auto& v : head.b2->data) v = 0.0;
    auto in = Tensor::create({4}, {0.1, -0.7, 2.0, 0.0});
    auto out = head.forward(in);
    CHECK(out->data == in->data);
}

TEST_CASE("identity-offset relu head is near-identity at init") {
    Rng rng(6);
    ProjectionHead head(8, 8, Nonlinearity::relu_kind, HeadInit::identity_offset, rng);
    auto in = Tensor::create({8}, {0.3, -0.9, 1.4, 0.0, -2.1, 0.5, 1.0, -0.2});
    auto out = head.forward(in);
    for (int i = 0; i < 8; ++i) {
        CHECK(out->data[static_cast<std::size_t>(i)] ==
              doctest::Approx(in->data[static_cast<std::size_t>(i)]).epsilon(0.05));
    }
}

TEST_CASE("projection head output dimension is d_latent") {
    Rng rng(7);
    ProjectionHead head(12, 5, Nonlinearity::relu_kind, HeadInit::random, rng);
    auto out = head.forward(Tensor::zeros({12}));
    CHECK(out->shape == Shape{5});
    CHECK_THROWS_AS(head.forward(Tensor::zeros({7})), std::invalid_argument);
}

TEST_CASE("projection head gradients match finite differences") {
    Rng rng(8);
    ProjectionHead head(6, 4, Nonlinearity::tanh_kind, HeadInit::random, rng);
    auto in = Tensor::create({6}, {0.2, -0.4, 0.9, 1.3, -1.1, 0.05}, true);
    auto params = head.params();
    params.push_back(in);
    auto rep = pdt_test::fd_compare(params, [&] { return squared_l2(head.forward(in)); });
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("encode -> pool -> project is deterministic in eval mode") {
    Rng rng(9);
    EncoderConfig cfg;
    cfg.d_model = 16;
    cfg.max_len = 16;
    SequenceEncoder enc(cfg, rng);
    ProjectionHead head(16, 16, Nonlinearity::relu_kind, HeadInit::identity_offset, rng);
    std::vector<int> ids = {1, 4, 9, 2, 0, 0};
    auto run = [&] {
        NoGrad ng;
        return head.forward(pool_mean(enc.forward(ids, mask_of(ids)), mask_of(ids)))->data;
    };
    CHECK(run() == run());
}

TEST_CASE("encoder gradients flow and match finite differences on a tiny stack") {
    Rng rng(10);
    EncoderConfig cfg;
    cfg.vocab_size = 6;
    cfg.d_model = 4;
    cfg.max_len = 6;
    cfg.depth = 1;
    for (LayerKind kind : {LayerKind::attention, LayerKind::recurrent}) {
        cfg.kind = kind;
        SequenceEncoder enc(cfg, rng);
        std::vector<int> ids = {1, 3, 4, 2};
        auto params = enc.params();
        auto rep = pdt_test::fd_compare(params, [&] {
            return squared_l2(pool_mean(enc.forward(ids, mask_of(ids)), mask_of(ids)));
        });
        CHECK(rep.max_rel_err < 1e-4);
    }
}
