#include "ea/model.hpp"

#include <stdexcept>

namespace ea {

namespace {
struct VariantInfo {
    Variant v;
    const char* name;
    bool cnn, bilstm, ea, concat;
};
constexpr VariantInfo kVariants[] = {
    {Variant::EmojiOnly, "EMOJI_ONLY", false, false, false, false},
    {Variant::Cnn, "CNN", true, false, false, false},
    {Variant::CnnEmoji, "CNN_EMOJI", true, false, false, true},
    {Variant::BilstmRa, "BILSTM_RA", false, true, false, false},
    {Variant::BilstmEa, "BILSTM_EA", false, true, true, false},
    {Variant::CnnBilstmRa, "CNN_BILSTM_RA", true, true, false, false},
    {Variant::CnnBilstmRaEmoji, "CNN_BILSTM_RA_EMOJI", true, true, false, true},
    {Variant::CnnBilstmEa, "CNN_BILSTM_EA", true, true, true, false},
    {Variant::CnnBilstmEaEmoji, "CNN_BILSTM_EA_EMOJI", true, true, true, true},
};

const VariantInfo& info(Variant v) {
    for (const auto& i : kVariants)
        if (i.v == v) return i;
    throw std::logic_error("unknown variant");
}
}  // namespace

std::string variant_name(Variant v) { return info(v).name; }

Variant variant_from_name(const std::string& name) {
    for (const auto& i : kVariants)
        if (name == i.name) return i.v;
    throw std::invalid_argument("unknown model variant: " + name);
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> vs = [] {
        std::vector<Variant> out;
        for (const auto& i : kVariants) out.push_back(i.v);
        return out;
    }();
    return vs;
}

bool has_cnn(Variant v) { return info(v).cnn; }
bool has_bilstm(Variant v) { return info(v).bilstm; }
bool is_emotion_aware(Variant v) { return info(v).ea; }
bool concats_emoji(Variant v) { return info(v).concat; }
bool needs_emotion(Variant v) {
    return v == Variant::EmojiOnly || is_emotion_aware(v) || concats_emoji(v);
}

int ModelConfig::feature_width() const {
    if (variant == Variant::EmojiOnly) return kEmojiDim;
    int w = 0;
    if (has_cnn(variant)) w += filters * static_cast<int>(filter_widths.size());
    if (has_bilstm(variant)) w += 2 * lstm_hidden;
    if (concats_emoji(variant)) w += kEmojiDim;
    return w;
}

const Tensor& Model::embedding_table() const {
    if (config.finetune_embeddings) return params.at("embedding").value;
    return params.buffers.at("embedding");
}

Model build_model(const ModelConfig& config, const EmbeddingTable& embeddings,
                  const Vocabulary& vocab) {
    if (embeddings.dim() != config.embed_dim)
        throw std::invalid_argument("build_model: embedding dim " +
                                    std::to_string(embeddings.dim()) + " != configured " +
                                    std::to_string(config.embed_dim));
    if (embeddings.rows.dim(0) != vocab.size() + 1)
        throw std::invalid_argument("build_model: embedding table rows do not match vocabulary");
    Model m;
    m.config = config;
    m.vocab = vocab;
    Rng rng(config.seed);
    const Variant v = config.variant;

    if (has_cnn(v))
        init_conv_block(m.params, "conv", config.filter_widths, config.embed_dim, config.filters,
                        rng);
    if (has_bilstm(v)) {
        init_bilstm(m.params, "bilstm", config.embed_dim, config.lstm_hidden, rng);
        init_attention(m.params, "attn", config.attn_dim, 2 * config.lstm_hidden,
                       is_emotion_aware(v), rng);
        if (is_emotion_aware(v))
            init_emoji_projection(m.params, "proj", 2 * config.lstm_hidden, rng);
    }
    init_dense_head(m.params, "head", config.feature_width(), config.dense_hidden, rng);

    if (config.finetune_embeddings)
        m.params.add("embedding", embeddings.rows);
    else
        m.params.buffers["embedding"] = embeddings.rows;
    return m;
}

void encode_documents(const Model& model, std::vector<Document>& docs) {
    for (Document& d : docs) {
        if (d.tokens.empty()) d.tokens = normalize_and_tokenize(d.text);
        d.token_ids = encode(d.tokens, model.vocab, model.config.maxlen,
                             model.config.truncate_tail);
    }
}

NodeId build_forward(Graph& g, Model& model, const std::vector<Document>& batch, Mode mode,
                     Rng& rng, std::vector<std::vector<double>>* attention_out) {
    if (batch.empty()) throw std::invalid_argument("forward: empty batch");
    const ModelConfig& cfg = model.config;
    const Variant v = cfg.variant;
    Binder bind(g, model.params);

    NodeId table = 0;
    if (v != Variant::EmojiOnly) {
        table = cfg.finetune_embeddings
                    ? bind("embedding")
                    : g.leaf(model.params.buffers.at("embedding"));
    }

    std::vector<NodeId> feature_rows;
    feature_rows.reserve(batch.size());
    for (const Document& d : batch) {
        std::vector<NodeId> parts;

        NodeId emoji_binary_node = 0;
        if (needs_emotion(v)) {
            if (!d.emoji_probs && !d.emoji_binary)
                throw std::invalid_argument("forward: document " + d.id +
                                            " has no emotion vector but variant " +
                                            variant_name(v) + " requires one");
            if (cfg.use_probability_emoji && !d.emoji_probs)
                throw std::invalid_argument("forward: document " + d.id +
                                            " has no emoji probabilities");
            const std::vector<double> bin =
                d.emoji_binary ? *d.emoji_binary : binarize_top5(*d.emoji_probs);
            emoji_binary_node = g.leaf(Tensor::vec(bin));
        }

        if (v == Variant::EmojiOnly) {
            if (cfg.use_probability_emoji)
                feature_rows.push_back(g.leaf(Tensor::vec(*d.emoji_probs)));
            else
                feature_rows.push_back(emoji_binary_node);
            continue;
        }

        if (static_cast<int>(d.token_ids.size()) != cfg.maxlen)
            throw std::invalid_argument("forward: document " + d.id +
                                        " is not encoded to maxlen " +
                                        std::to_string(cfg.maxlen));
        NodeId embedded = embedding_forward(g, table, d.token_ids);

        if (has_cnn(v))
            parts.push_back(conv_block_forward(bind, embedded, "conv", cfg.filter_widths,
                                               cfg.dropout, mode, rng));

        if (has_bilstm(v)) {
            NodeId states = bilstm_forward(bind, embedded, "bilstm", cfg.lstm_hidden);
            std::vector<char> mask(d.token_ids.size());
            for (std::size_t t = 0; t < d.token_ids.size(); ++t)
                mask[t] = d.token_ids[t] != Vocabulary::kPadId ? 1 : 0;

            std::vector<NodeId> scores(d.token_ids.size());
            if (is_emotion_aware(v)) {
                NodeId e_proj = emoji_project(bind, emoji_binary_node, "proj");
                NodeId e_term = ea_emotion_term(bind, e_proj, "attn");
                NodeId wa = bind("attn.Wa");
                NodeId vn = bind("attn.v");
                for (int t = 0; t < cfg.maxlen; ++t)
                    scores[static_cast<std::size_t>(t)] =
                        ea_score(g, g.matvec(wa, g.row(states, t)), e_term, vn);
            } else {
                for (int t = 0; t < cfg.maxlen; ++t)
                    scores[static_cast<std::size_t>(t)] = ra_score(bind, g.row(states, t), "attn");
            }
            NodeId alpha = attention_weights(g, g.concat(scores), mask);
            if (attention_out) {
                while (attention_out->size() < feature_rows.size())
                    attention_out->emplace_back();  // keep alignment for prior docs
                attention_out->push_back(g.val(alpha).v);
            }
            parts.push_back(attention_pool(g, alpha, states));
        }

        if (concats_emoji(v)) {
            if (cfg.use_probability_emoji)
                parts.push_back(g.leaf(Tensor::vec(*d.emoji_probs)));
            else
                parts.push_back(emoji_binary_node);
        }
        feature_rows.push_back(g.concat(parts));
    }

    NodeId features = g.stack_rows(feature_rows);
    return dense_head(bind, features, "head", cfg.dropout, mode, rng);
}

ForwardResult forward(Model& model, const std::vector<Document>& batch, Mode mode,
                      bool want_attention) {
    Graph g;
    Rng rng(model.config.seed);
    ForwardResult out;
    std::vector<std::vector<double>>* attn =
        want_attention && has_bilstm(model.config.variant) ? &out.attention : nullptr;
    NodeId logits = build_forward(g, model, batch, mode, rng, attn);
    out.probs = g.val(g.softmax_rows(logits));
    return out;
}

Predictions predict(Model& model, const std::vector<Document>& docs) {
    Predictions out;
    out.labels.reserve(docs.size());
    out.scores.reserve(docs.size());
    // batches keep graphs small; infer mode is batch-order independent
    constexpr std::size_t kBatch = 32;
    for (std::size_t i = 0; i < docs.size(); i += kBatch) {
        std::vector<Document> batch(docs.begin() + static_cast<std::ptrdiff_t>(i),
                                    docs.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min(i + kBatch, docs.size())));
        ForwardResult r = forward(model, batch, Mode::Infer);
        for (int b = 0; b < r.probs.dim(0); ++b) {
            const double p_off = r.probs.at(b, 1);
            out.labels.push_back(p_off > r.probs.at(b, 0) ? 1 : 0);  // tie -> neutral
            out.scores.push_back(p_off);
        }
    }
    return out;
}

}  // namespace ea
