#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ea/gradcheck.hpp"
#include "ea/model.hpp"
#include "helpers.hpp"

using namespace ea;
using testutil::random_tensor;

namespace {

std::pair<Vocabulary, EmbeddingTable> tiny_vocab(int dim, std::uint64_t seed) {
    Vocabulary v;
    for (const char* w : {"aa", "bb", "cc", "dd", "ee"}) v.add(w);
    Rng rng(seed);
    EmbeddingTable t;
    t.rows = Tensor({v.size() + 1, dim});
    for (int r = 1; r < t.rows.dim(0); ++r)
        for (int c = 0; c < dim; ++c) t.rows.at(r, c) = rng.uniform(-0.5, 0.5);
    return {v, t};
}

std::vector<Document> tiny_batch(const ModelConfig& cfg, std::uint64_t seed, int n = 3) {
    Rng rng(seed);
    std::vector<Document> batch(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Document& d = batch[static_cast<std::size_t>(i)];
        d.id = "doc" + std::to_string(i);
        d.label = i % 2;
        d.token_ids.assign(static_cast<std::size_t>(cfg.maxlen), 0);
        for (int t = 1; t < cfg.maxlen; ++t)
            d.token_ids[static_cast<std::size_t>(t)] = 2 + static_cast<int>(rng.below(5));
        std::vector<double> probs(kEmojiDim);
        for (double& p : probs) p = rng.uniform();
        d.emoji_probs = probs;
        d.emoji_binary = binarize_top5(probs);
    }
    return batch;
}

std::set<std::string> param_names(const Model& m) {
    std::set<std::string> names;
    for (const auto& [name, p] : m.params.params) names.insert(name);
    return names;
}

bool any_starts_with(const std::set<std::string>& names, const std::string& prefix) {
    for (const auto& n : names)
        if (n.rfind(prefix, 0) == 0) return true;
    return false;
}

}  // namespace

TEST_CASE("feature widths per variant") {
    ModelConfig cfg;
    cfg.variant = Variant::EmojiOnly;
    CHECK(cfg.feature_width() == 64);
    cfg.variant = Variant::Cnn;
    CHECK(cfg.feature_width() == 400);
    cfg.variant = Variant::CnnEmoji;
    CHECK(cfg.feature_width() == 464);
    cfg.variant = Variant::BilstmRa;
    CHECK(cfg.feature_width() == 200);
    cfg.variant = Variant::BilstmEa;
    CHECK(cfg.feature_width() == 200);
    cfg.variant = Variant::CnnBilstmRa;
    CHECK(cfg.feature_width() == 600);
    cfg.variant = Variant::CnnBilstmRaEmoji;
    CHECK(cfg.feature_width() == 664);
    cfg.variant = Variant::CnnBilstmEa;
    CHECK(cfg.feature_width() == 600);
    cfg.variant = Variant::CnnBilstmEaEmoji;
    CHECK(cfg.feature_width() == 664);  // 400 + 2*100 + 64
}

TEST_CASE("variant names round-trip") {
    for (Variant v : all_variants()) CHECK(variant_from_name(variant_name(v)) == v);
    CHECK_THROWS(variant_from_name("NOT_A_VARIANT"));
}

TEST_CASE("build_model allocates exactly the parameters the variant needs") {
    auto [vocab, table] = tiny_vocab(4, 1);
    for (Variant v : all_variants()) {
        ModelConfig cfg = tiny_config(v);
        Model m = build_model(cfg, table, vocab);
        std::set<std::string> names = param_names(m);
        CHECK(any_starts_with(names, "conv.") == has_cnn(v));
        CHECK(any_starts_with(names, "bilstm.") == has_bilstm(v));
        CHECK(any_starts_with(names, "attn.") == has_bilstm(v));
        CHECK(names.count("attn.We") == (is_emotion_aware(v) ? 1u : 0u));
        CHECK(any_starts_with(names, "proj.") == is_emotion_aware(v));
        CHECK(any_starts_with(names, "head.") == true);
        CHECK(names.count("embedding") == 0u);  // frozen by default, lives in buffers
        CHECK(m.params.buffers.count("embedding") == 1u);
    }
}

TEST_CASE("build_model is deterministic in config and seed") {
    auto [vocab, table] = tiny_vocab(4, 2);
    ModelConfig cfg = tiny_config(Variant::CnnBilstmEaEmoji, 13);
    Model a = build_model(cfg, table, vocab);
    Model b = build_model(cfg, table, vocab);
    REQUIRE(param_names(a) == param_names(b));
    for (const auto& [name, p] : a.params.params)
        CHECK(p.value.v == b.params.at(name).value.v);  // bitwise
}

TEST_CASE("forward rows are probability distributions") {
    auto [vocab, table] = tiny_vocab(4, 3);
    for (Variant v : all_variants()) {
        ModelConfig cfg = tiny_config(v);
        Model m = build_model(cfg, table, vocab);
        std::vector<Document> batch = tiny_batch(cfg, 17, 4);
        ForwardResult r = forward(m, batch, Mode::Infer);
        REQUIRE(r.probs.dim(0) == 4);
        for (int b = 0; b < 4; ++b) {
            CHECK(std::abs(r.probs.at(b, 0) + r.probs.at(b, 1) - 1.0) <= 1e-12);
            CHECK(r.probs.at(b, 0) > 0.0);
            CHECK(r.probs.at(b, 1) > 0.0);
        }
    }
}

TEST_CASE("EA reduces to RA when We is zero") {
    auto [vocab, table] = tiny_vocab(4, 4);
    const std::pair<Variant, Variant> pairs[] = {
        {Variant::BilstmEa, Variant::BilstmRa},
        {Variant::CnnBilstmEa, Variant::CnnBilstmRa},
    };
    for (auto [ea_v, ra_v] : pairs) {
        ModelConfig ea_cfg = tiny_config(ea_v, 21);
        ModelConfig ra_cfg = tiny_config(ra_v, 21);
        Model ea_m = build_model(ea_cfg, table, vocab);
        Model ra_m = build_model(ra_cfg, table, vocab);
        ea_m.params.at("attn.We").value.fill(0.0);
        // align every parameter the two structures share
        for (auto& [name, p] : ra_m.params.params)
            p.value = ea_m.params.at(name).value;

        std::vector<Document> batch = tiny_batch(ea_cfg, 23, 5);
        ForwardResult a = forward(ea_m, batch, Mode::Infer);
        ForwardResult b = forward(ra_m, batch, Mode::Infer);
        for (int i = 0; i < 5; ++i)
            for (int c = 0; c < 2; ++c)
                CHECK(std::abs(a.probs.at(i, c) - b.probs.at(i, c)) <= 1e-12);
    }
}

TEST_CASE("infer mode is batch-order independent") {
    auto [vocab, table] = tiny_vocab(4, 5);
    ModelConfig cfg = tiny_config(Variant::CnnBilstmEaEmoji, 31);
    Model m = build_model(cfg, table, vocab);
    std::vector<Document> batch = tiny_batch(cfg, 41, 6);

    ForwardResult together = forward(m, batch, Mode::Infer);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ForwardResult alone = forward(m, {batch[i]}, Mode::Infer);
        for (int c = 0; c < 2; ++c)
            CHECK(alone.probs.at(0, c) == together.probs.at(static_cast<int>(i), c));
    }
}

TEST_CASE("predict labels, ties, scores") {
    auto [vocab, table] = tiny_vocab(4, 6);
    ModelConfig cfg = tiny_config(Variant::EmojiOnly, 7);
    Model m = build_model(cfg, table, vocab);

    // force a tie: zero output layer makes both logits equal
    m.params.at("head.W2").value.fill(0.0);
    m.params.at("head.b2").value.fill(0.0);
    std::vector<Document> docs = tiny_batch(cfg, 51, 3);
    Predictions p = predict(m, docs);
    REQUIRE(p.labels.size() == 3);
    REQUIRE(p.scores.size() == 3);
    for (int label : p.labels) CHECK(label == 0);  // 0.5/0.5 goes to neutral
    for (double s : p.scores) CHECK(s == doctest::Approx(0.5).epsilon(1e-12));

    // bias the offensive logit up: everything flips to 1
    m.params.at("head.b2").value.at(1) = 5.0;
    Predictions q = predict(m, docs);
    for (int label : q.labels) CHECK(label == 1);
    for (double s : q.scores) CHECK(s > 0.9);
}

TEST_CASE("cnn variant forward matches an independent reimplementation") {
    auto [vocab, table] = tiny_vocab(3, 8);
    ModelConfig cfg = tiny_config(Variant::Cnn, 9);
    cfg.embed_dim = 3;
    Model m = build_model(cfg, table, vocab);
    std::vector<Document> batch = tiny_batch(cfg, 61, 2);

    ForwardResult got = forward(m, batch, Mode::Infer);

    // plain-loop re-implementation of embed -> conv -> relu -> max -> head
    for (int b = 0; b < 2; ++b) {
        const Document& doc = batch[static_cast<std::size_t>(b)];
        const int T = cfg.maxlen, d = cfg.embed_dim;
        std::vector<std::vector<double>> E(static_cast<std::size_t>(T),
                                           std::vector<double>(static_cast<std::size_t>(d)));
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < d; ++c)
                E[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)] =
                    table.rows.at(doc.token_ids[static_cast<std::size_t>(t)], c);

        std::vector<double> feats;
        for (int w : cfg.filter_widths) {
            const Tensor& K = m.params.at("conv.w" + std::to_string(w) + ".filters").value;
            const Tensor& bias = m.params.at("conv.w" + std::to_string(w) + ".bias").value;
            for (int f = 0; f < cfg.filters; ++f) {
                double best = -1e300;
                for (int t = 0; t + w <= T; ++t) {
                    double acc = bias.at(f);
                    for (int i = 0; i < w; ++i)
                        for (int c = 0; c < d; ++c)
                            acc += E[static_cast<std::size_t>(t + i)][static_cast<std::size_t>(c)] *
                                   K.at(i, c, f);
                    best = std::max(best, std::max(0.0, acc));
                }
                feats.push_back(best);
            }
        }

        const Tensor& W1 = m.params.at("head.W1").value;
        const Tensor& b1 = m.params.at("head.b1").value;
        const Tensor& gamma = m.params.at("head.gamma").value;
        const Tensor& beta = m.params.at("head.beta").value;
        const Tensor& rm = m.params.buffers.at("head.run_mean");
        const Tensor& rv = m.params.buffers.at("head.run_var");
        std::vector<double> hidden(static_cast<std::size_t>(cfg.dense_hidden));
        for (int o = 0; o < cfg.dense_hidden; ++o) {
            double acc = b1.at(o);
            for (std::size_t f = 0; f < feats.size(); ++f)
                acc += W1.at(o, static_cast<int>(f)) * feats[f];
            acc = std::max(0.0, acc);
            acc = gamma.at(o) * (acc - rm.at(o)) / std::sqrt(rv.at(o) + 1e-5) + beta.at(o);
            hidden[static_cast<std::size_t>(o)] = acc;
        }
        const Tensor& W2 = m.params.at("head.W2").value;
        const Tensor& b2 = m.params.at("head.b2").value;
        double logits[2];
        for (int c = 0; c < 2; ++c) {
            double acc = b2.at(c);
            for (int o = 0; o < cfg.dense_hidden; ++o)
                acc += W2.at(c, o) * hidden[static_cast<std::size_t>(o)];
            logits[c] = acc;
        }
        const double mx = std::max(logits[0], logits[1]);
        const double z = std::exp(logits[0] - mx) + std::exp(logits[1] - mx);
        for (int c = 0; c < 2; ++c)
            CHECK(got.probs.at(b, c) ==
                  doctest::Approx(std::exp(logits[c] - mx) / z).epsilon(1e-12));
    }
}

TEST_CASE("every variant passes the whole-model gradient check") {
    for (Variant v : all_variants()) CHECK(model_gradcheck(v) < 1e-4);
}

TEST_CASE("EA variants require emotion vectors") {
    auto [vocab, table] = tiny_vocab(4, 10);
    ModelConfig cfg = tiny_config(Variant::BilstmEa, 3);
    Model m = build_model(cfg, table, vocab);
    std::vector<Document> batch = tiny_batch(cfg, 71, 1);
    batch[0].emoji_binary.reset();
    batch[0].emoji_probs.reset();
    CHECK_THROWS(forward(m, batch, Mode::Infer));
}
