#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ea/graph.hpp"
#include "ea/layers.hpp"
#include "ea/params.hpp"
#include "ea/preprocess.hpp"

namespace ea {

enum class Variant {
    EmojiOnly,
    Cnn,
    CnnEmoji,
    BilstmRa,
    BilstmEa,
    CnnBilstmRa,
    CnnBilstmRaEmoji,
    CnnBilstmEa,
    CnnBilstmEaEmoji,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
const std::vector<Variant>& all_variants();

bool has_cnn(Variant v);
bool has_bilstm(Variant v);
bool is_emotion_aware(Variant v);   // EA attention scoring
bool concats_emoji(Variant v);      // 64-dim emoji vector joined before the dense head
bool needs_emotion(Variant v);      // any use of the emotion vector

struct ModelConfig {
    Variant variant = Variant::CnnBilstmEaEmoji;
    int embed_dim = 200;
    int lstm_hidden = 100;           // H per direction
    int attn_dim = 100;
    std::vector<int> filter_widths = {2, 3, 4, 5};
    int filters = 100;               // per width
    int dense_hidden = 100;
    double dropout = 0.5;
    int maxlen = 200;
    std::uint64_t seed = 42;
    bool finetune_embeddings = false;
    bool use_probability_emoji = false;  // concat probabilities instead of the binary vector
    bool truncate_tail = false;          // keep the last maxlen tokens instead of the first

    int feature_width() const;  // dense-head input width for this variant
};

// The embedding table lives inside the ParameterSet: as the trainable
// parameter "embedding" when fine-tuning, as the frozen buffer "embedding"
// otherwise. Either way it rides along in checkpoints.
struct Model {
    ModelConfig config;
    ParameterSet params;
    Vocabulary vocab;

    const Tensor& embedding_table() const;
};

Model build_model(const ModelConfig& config, const EmbeddingTable& embeddings,
                  const Vocabulary& vocab);

// Builds the variant's forward pass up to the logits node [B,2]. When
// `attention_out` is non-null and the variant has an attention path, it
// receives one full-length weight vector per document (zeros on padding).
NodeId build_forward(Graph& g, Model& model, const std::vector<Document>& batch, Mode mode,
                     Rng& rng, std::vector<std::vector<double>>* attention_out = nullptr);

struct ForwardResult {
    Tensor probs;  // [B,2], rows sum to 1
    std::vector<std::vector<double>> attention;  // empty unless requested and available
};

ForwardResult forward(Model& model, const std::vector<Document>& batch, Mode mode,
                      bool want_attention = false);

struct Predictions {
    std::vector<int> labels;        // argmax, tie -> neutral
    std::vector<double> scores;     // probability of the offensive class
};

Predictions predict(Model& model, const std::vector<Document>& docs);

// Encodes tokens/ids in place with the model's vocabulary and maxlen.
void encode_documents(const Model& model, std::vector<Document>& docs);

}  // namespace ea
