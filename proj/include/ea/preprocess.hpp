#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ea/tensor.hpp"

namespace ea {

constexpr int kEmojiDim = 64;
constexpr int kTopEmojis = 5;

struct Document {
    std::string id;
    std::string text;
    std::vector<std::string> tokens;
    std::vector<int> token_ids;  // fixed length after encode(), left zero-padded
    int label = 0;               // 0 = neutral, 1 = offensive
    std::optional<std::vector<double>> emoji_probs;   // 64 probabilities
    std::optional<std::vector<double>> emoji_binary;  // 64, exactly five ones
};

// id 0 is padding, id 1 the out-of-vocabulary token, 2..V the corpus tokens.
class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kOovId = 1;

    int add(const std::string& token);              // existing id if already present
    int id_of(const std::string& token) const;      // kOovId when unknown
    bool contains(const std::string& token) const { return to_id_.count(token) > 0; }
    int size() const { return static_cast<int>(ordered_.size()) + 1; }  // non-pad ids incl. OOV
    const std::vector<std::string>& tokens() const { return ordered_; }

private:
    std::map<std::string, int> to_id_;
    std::vector<std::string> ordered_;  // index i holds the token with id i+2
};

struct EmbeddingTable {
    Tensor rows;  // [V+1, d]; row 0 all-zero (padding)
    int dim() const { return rows.dim(1); }
};

struct GloveFile {
    std::map<std::string, std::vector<double>> vectors;
    int skipped_lines = 0;
};

struct CorpusStats {
    int total = 0;
    int offensive = 0;
    int neutral = 0;
    double negativity_ratio = 0.0;       // offensive / total
    std::string ratio_percent() const;   // "15.71%"
};

struct SplitRatios {
    double train = 0.56;
    double val = 0.14;
    double test = 0.30;
};

struct Splits {
    std::vector<Document> train, val, test;
};

// lowercase; URLs -> "url"; @mentions -> "@username"; whitespace split with
// leading/trailing punctuation detached (internal apostrophes kept).
std::vector<std::string> normalize_and_tokenize(const std::string& text);

// Keeps the first maxlen tokens (last maxlen if truncate_tail), left-pads with 0.
std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        int maxlen = 200, bool truncate_tail = false);

GloveFile load_glove(const std::string& path, int dim);

// Vocabulary from the training corpus only. Embedding rows come from GloVe when
// available, otherwise a uniform draw in [-0.05, 0.05] deterministic in
// (seed, token). Row 0 stays zero.
std::pair<Vocabulary, EmbeddingTable> build_vocab(const std::vector<Document>& training_docs,
                                                  const GloveFile& glove, int dim,
                                                  std::uint64_t seed);

// Split after runs of '.', '!', '?'; text without a terminator is one sentence.
std::vector<std::string> split_sentences(const std::string& text);

std::vector<double> average_emoji(const std::vector<std::vector<double>>& sentence_vectors);

// Exactly five 1s at the five largest entries; ties go to the lowest index.
std::vector<double> binarize_top5(const std::vector<double>& probs);

// Deterministic substitute for an external emotion encoder: a small keyword
// lexicon plus a hashed fallback, normalized to probabilities.
std::vector<double> stub_emotion_encoder(const std::string& text);

// Sentence-split, encode each sentence, average, binarize. Uses the stub
// unless the document already carries probabilities.
void attach_emotion_vectors(std::vector<Document>& docs, bool overwrite = false);

std::vector<Document> load_dataset(const std::string& path);
void save_dataset(const std::vector<Document>& docs, const std::string& path);

// Sidecar: one record per line, {"id": ..., "emoji": [64 floats]}.
std::map<std::string, std::vector<double>> load_emotion_sidecar(const std::string& path);
void apply_sidecar(std::vector<Document>& docs,
                   const std::map<std::string, std::vector<double>>& sidecar);

// Per-class proportional allocation with largest-remainder rounding.
Splits stratified_split(const std::vector<Document>& docs, const SplitRatios& ratios,
                        std::uint64_t seed);

CorpusStats corpus_stats(const std::vector<Document>& docs);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace ea
