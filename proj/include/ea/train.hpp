#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ea/model.hpp"

namespace ea {

struct TrainConfig {
    double lr = 1e-5;
    int epochs = 150;
    int batch = 32;
    std::uint64_t seed = 42;
    double grad_clip = 0.0;  // 0 disables clipping
};

struct EpochLog {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_macro_f1 = 0.0;
};

struct Checkpoint {
    int version = 1;
    ModelConfig config;
    std::vector<std::string> vocab_tokens;  // ids 2..V in order
    ParameterSet params;                    // values + optimizer state + buffers
    int best_epoch = 0;
    double best_val_macro_f1 = 0.0;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochLog> log;
};

// Epochs of seeded-shuffled minibatches with Adam updates; after each epoch
// the validation macro F1 decides whether to retain the checkpoint (ties keep
// the earlier epoch). A trailing batch of size 1 merges into the previous
// batch so batch norm always sees at least two rows.
TrainResult train(Model& model, std::vector<Document> train_docs,
                  std::vector<Document> val_docs, const TrainConfig& cfg);

Checkpoint make_checkpoint(const Model& model, int best_epoch, double best_val_macro_f1);
Model model_from_checkpoint(const Checkpoint& ckpt);

// Single file: magic "EANNCKP1", 4-byte little-endian header length, JSON
// header (version, config, vocabulary, manifest of {name, shape, kind}),
// then the tensors as little-endian 64-bit floats in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace ea
