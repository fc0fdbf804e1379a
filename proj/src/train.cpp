#include "ea/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ea/eval.hpp"
#include "json.hpp"

namespace ea {

namespace {

double val_macro_f1(Model& model, const std::vector<Document>& val_docs) {
    Predictions p = predict(model, const_cast<std::vector<Document>&>(val_docs));
    std::vector<int> gold;
    gold.reserve(val_docs.size());
    for (const Document& d : val_docs) gold.push_back(d.label);
    return macro_f1(confusion(gold, p.labels));
}

void clip_gradients(ParameterSet& ps, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : ps.params)
        for (double g : p.grad.v) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (auto& [name, p] : ps.params)
        for (double& g : p.grad.v) g *= s;
}

}  // namespace

TrainResult train(Model& model, std::vector<Document> train_docs,
                  std::vector<Document> val_docs, const TrainConfig& cfg) {
    if (train_docs.empty() || val_docs.empty())
        throw std::invalid_argument("train: empty training or validation split");
    encode_documents(model, train_docs);
    encode_documents(model, val_docs);

    AdamConfig adam;
    adam.lr = cfg.lr;
    Rng rng(cfg.seed);

    TrainResult result;
    result.best.best_val_macro_f1 = -1.0;

    std::vector<std::size_t> order(train_docs.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);

        // batch boundaries; a trailing singleton joins the previous batch
        std::vector<std::size_t> starts;
        for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch))
            starts.push_back(i);
        const bool merge_tail =
            starts.size() > 1 && order.size() - starts.back() == 1;
        if (merge_tail) starts.pop_back();

        double loss_sum = 0.0;
        for (std::size_t s = 0; s < starts.size(); ++s) {
            const std::size_t begin = starts[s];
            const std::size_t end =
                s + 1 < starts.size() ? starts[s + 1] : order.size();
            std::vector<Document> batch;
            std::vector<int> labels;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                batch.push_back(train_docs[order[i]]);
                labels.push_back(train_docs[order[i]].label);
            }
            Graph g;
            NodeId logits = build_forward(g, model, batch, Mode::Train, rng);
            NodeId loss = g.softmax_xent(logits, labels);
            g.backward(loss);
            if (cfg.grad_clip > 0.0) clip_gradients(model.params, cfg.grad_clip);
            adam_step(model.params, adam);
            loss_sum += g.val(loss).at(0) * static_cast<double>(end - begin);
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(train_docs.size());
        log.val_macro_f1 = val_macro_f1(model, val_docs);
        result.log.push_back(log);

        if (log.val_macro_f1 > result.best.best_val_macro_f1)
            result.best = make_checkpoint(model, epoch, log.val_macro_f1);
    }
    return result;
}

Checkpoint make_checkpoint(const Model& model, int best_epoch, double best_val_macro_f1) {
    Checkpoint c;
    c.config = model.config;
    c.vocab_tokens = model.vocab.tokens();
    c.params = model.params;
    c.best_epoch = best_epoch;
    c.best_val_macro_f1 = best_val_macro_f1;
    return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model m;
    m.config = ckpt.config;
    m.params = ckpt.params;
    for (const std::string& t : ckpt.vocab_tokens) m.vocab.add(t);
    return m;
}

namespace {

using nlohmann::json;

json config_json(const ModelConfig& c) {
    return json{{"variant", variant_name(c.variant)},
                {"embed_dim", c.embed_dim},
                {"lstm_hidden", c.lstm_hidden},
                {"attn_dim", c.attn_dim},
                {"filter_widths", c.filter_widths},
                {"filters", c.filters},
                {"dense_hidden", c.dense_hidden},
                {"dropout", c.dropout},
                {"maxlen", c.maxlen},
                {"seed", c.seed},
                {"finetune_embeddings", c.finetune_embeddings},
                {"use_probability_emoji", c.use_probability_emoji},
                {"truncate_tail", c.truncate_tail}};
}

ModelConfig config_from(const json& j) {
    ModelConfig c;
    c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.embed_dim = j.at("embed_dim").get<int>();
    c.lstm_hidden = j.at("lstm_hidden").get<int>();
    c.attn_dim = j.at("attn_dim").get<int>();
    c.filter_widths = j.at("filter_widths").get<std::vector<int>>();
    c.filters = j.at("filters").get<int>();
    c.dense_hidden = j.at("dense_hidden").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.maxlen = j.at("maxlen").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.finetune_embeddings = j.at("finetune_embeddings").get<bool>();
    c.use_probability_emoji = j.value("use_probability_emoji", false);
    c.truncate_tail = j.value("truncate_tail", false);
    return c;
}

constexpr char kMagic[8] = {'E', 'A', 'N', 'N', 'C', 'K', 'P', '1'};

void write_tensor(std::ofstream& out, const Tensor& t) {
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
    return config_from(json::parse(text));
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json manifest = json::array();
    auto entry = [&](const std::string& name, const Tensor& t, const char* kind) {
        manifest.push_back(json{{"name", name}, {"shape", t.shape}, {"kind", kind}});
    };
    for (const auto& [name, p] : ckpt.params.params) entry(name, p.value, "param");
    for (const auto& [name, p] : ckpt.params.params) entry(name, p.adam_m, "adam_m");
    for (const auto& [name, p] : ckpt.params.params) entry(name, p.adam_v, "adam_v");
    for (const auto& [name, t] : ckpt.params.buffers) entry(name, t, "buffer");

    json header{{"version", ckpt.version},
                {"config", config_json(ckpt.config)},
                {"vocab", ckpt.vocab_tokens},
                {"step_count", ckpt.params.step_count},
                {"best_epoch", ckpt.best_epoch},
                {"best_val_macro_f1", ckpt.best_val_macro_f1},
                {"manifest", manifest}};
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    char lenbuf[4] = {static_cast<char>(hlen & 0xff), static_cast<char>((hlen >> 8) & 0xff),
                      static_cast<char>((hlen >> 16) & 0xff),
                      static_cast<char>((hlen >> 24) & 0xff)};
    out.write(lenbuf, 4);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, p] : ckpt.params.params) write_tensor(out, p.value);
    for (const auto& [name, p] : ckpt.params.params) write_tensor(out, p.adam_m);
    for (const auto& [name, p] : ckpt.params.params) write_tensor(out, p.adam_v);
    for (const auto& [name, t] : ckpt.params.buffers) write_tensor(out, t);
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    unsigned char lenbuf[4];
    in.read(reinterpret_cast<char*>(lenbuf), 4);
    if (!in) throw std::runtime_error("load_checkpoint: truncated header length");
    const std::uint32_t hlen = static_cast<std::uint32_t>(lenbuf[0]) |
                               (static_cast<std::uint32_t>(lenbuf[1]) << 8) |
                               (static_cast<std::uint32_t>(lenbuf[2]) << 16) |
                               (static_cast<std::uint32_t>(lenbuf[3]) << 24);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw std::runtime_error("load_checkpoint: truncated header");
    json header = json::parse(htext);

    Checkpoint c;
    c.version = header.at("version").get<int>();
    if (c.version != 1)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(c.version));
    c.config = config_from(header.at("config"));
    c.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
    c.params.step_count = header.at("step_count").get<long>();
    c.best_epoch = header.at("best_epoch").get<int>();
    c.best_val_macro_f1 = header.at("best_val_macro_f1").get<double>();

    for (const auto& e : header.at("manifest")) {
        const std::string name = e.at("name").get<std::string>();
        const std::string kind = e.at("kind").get<std::string>();
        Tensor t(e.at("shape").get<std::vector<int>>());
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (!in)
            throw std::runtime_error("load_checkpoint: blob shorter than manifest for " + name);
        if (kind == "param") {
            c.params.add(name, std::move(t));
        } else if (kind == "adam_m") {
            c.params.at(name).adam_m = std::move(t);
        } else if (kind == "adam_v") {
            c.params.at(name).adam_v = std::move(t);
        } else if (kind == "buffer") {
            c.params.buffers[name] = std::move(t);
        } else {
            throw std::runtime_error("load_checkpoint: unknown manifest kind " + kind);
        }
    }
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("load_checkpoint: blob longer than manifest in " + path);
    return c;
}

}  // namespace ea
