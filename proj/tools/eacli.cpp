// Command-line surface for the offensive-language detection pipeline.
// Exit codes: 0 success, 1 usage error, 2 data/runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ea/eval.hpp"
#include "ea/gradcheck.hpp"
#include "ea/model.hpp"
#include "ea/preprocess.hpp"
#include "ea/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t default_seed() {
    if (const char* env = std::getenv("EA_SEED")) return std::strtoull(env, nullptr, 10);
    return 42;
}

struct ModelOpts {
    std::string variant = "CNN_BILSTM_EA_EMOJI";
    std::string config_file;
    ea::ModelConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON config file (flags override it)");
        cmd->add_option("--variant", variant, "model variant name");
        cmd->add_option("--embed-dim", cfg.embed_dim, "embedding dimension");
        cmd->add_option("--hidden", cfg.lstm_hidden, "LSTM hidden size per direction");
        cmd->add_option("--attn-dim", cfg.attn_dim, "attention projection width");
        cmd->add_option("--filters", cfg.filters, "convolution filters per width");
        cmd->add_option("--dense", cfg.dense_hidden, "dense hidden width");
        cmd->add_option("--dropout", cfg.dropout, "dropout rate");
        cmd->add_option("--maxlen", cfg.maxlen, "token sequence length");
        cmd->add_flag("--finetune-embeddings", cfg.finetune_embeddings,
                      "train embedding rows instead of freezing them");
        cmd->add_flag("--truncate-tail", cfg.truncate_tail,
                      "keep the last maxlen tokens instead of the first");
        cmd->add_flag("--probability-emoji", cfg.use_probability_emoji,
                      "concatenate emoji probabilities instead of the binary vector");
    }

    ea::ModelConfig resolve(CLI::App* cmd, std::uint64_t seed) {
        ea::ModelConfig out = cfg;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw std::runtime_error("cannot open config file " + config_file);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            out = ea::model_config_from_json(text);
            // command-line values override the file
            auto keep = [&](const char* flag) { return cmd->count(flag) > 0; };
            if (keep("--embed-dim")) out.embed_dim = cfg.embed_dim;
            if (keep("--hidden")) out.lstm_hidden = cfg.lstm_hidden;
            if (keep("--attn-dim")) out.attn_dim = cfg.attn_dim;
            if (keep("--filters")) out.filters = cfg.filters;
            if (keep("--dense")) out.dense_hidden = cfg.dense_hidden;
            if (keep("--dropout")) out.dropout = cfg.dropout;
            if (keep("--maxlen")) out.maxlen = cfg.maxlen;
            if (keep("--finetune-embeddings")) out.finetune_embeddings = cfg.finetune_embeddings;
            if (keep("--truncate-tail")) out.truncate_tail = cfg.truncate_tail;
            if (keep("--probability-emoji")) out.use_probability_emoji = cfg.use_probability_emoji;
            if (keep("--variant")) out.variant = ea::variant_from_name(variant);
        } else {
            out.variant = ea::variant_from_name(variant);
        }
        out.seed = seed;
        return out;
    }
};

void attach_emotions_as_needed(std::vector<ea::Document>& docs, const std::string& sidecar,
                               ea::Variant v) {
    if (!ea::needs_emotion(v)) return;
    if (!sidecar.empty()) {
        ea::apply_sidecar(docs, ea::load_emotion_sidecar(sidecar));
    } else {
        ea::attach_emotion_vectors(docs);  // inline vectors kept, stub fills the rest
    }
}

ea::Model load_model(const std::string& checkpoint_path) {
    return ea::model_from_checkpoint(ea::load_checkpoint(checkpoint_path));
}

std::vector<ea::Document> load_and_prepare(ea::Model& model, const std::string& data_path,
                                           const std::string& sidecar) {
    std::vector<ea::Document> docs = ea::load_dataset(data_path);
    attach_emotions_as_needed(docs, sidecar, model.config.variant);
    ea::encode_documents(model, docs);
    return docs;
}

json metrics_json(const ea::MetricsReport& r) {
    return json{{"n", r.n},
                {"tp", r.counts.tp},
                {"fp", r.counts.fp},
                {"fn", r.counts.fn},
                {"tn", r.counts.tn},
                {"f1_offensive", r.f1_offensive},
                {"f1_neutral", r.f1_neutral},
                {"precision_offensive", r.precision_offensive},
                {"recall_offensive", r.recall_offensive},
                {"macro_f1", r.macro},
                {"auc", r.auc}};
}

std::map<std::string, int> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open predictions file " + path);
    std::map<std::string, int> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        out[j.at("id").get<std::string>()] = j.at("pred").get<int>();
    }
    return out;
}

void write_resolved_config(const fs::path& dir, const ea::ModelConfig& cfg, json extra) {
    extra["model"] = json::parse(ea::model_config_to_json(cfg));
    std::ofstream out(dir / "resolved_config.json");
    out << extra.dump(2) << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"offensive-language detection pipeline"};
    app.require_subcommand(1);
    std::uint64_t seed = default_seed();
    app.add_option("--seed", seed, "seed for all randomness (env EA_SEED is the fallback)");

    // split
    auto* split = app.add_subcommand("split", "stratified train/val/test split");
    std::string split_data, split_outdir = ".";
    split->add_option("--data", split_data, "dataset (jsonl)")->required();
    split->add_option("--out-dir", split_outdir, "output directory");

    // emoji
    auto* emoji = app.add_subcommand("emoji", "attach emotion vectors (stub or sidecar)");
    std::string emoji_data, emoji_out, emoji_sidecar;
    bool emoji_overwrite = false;
    emoji->add_option("--data", emoji_data, "dataset (jsonl)")->required();
    emoji->add_option("--out", emoji_out, "output dataset (jsonl)")->required();
    emoji->add_option("--sidecar", emoji_sidecar, "emotion sidecar keyed by id");
    emoji->add_flag("--overwrite", emoji_overwrite, "replace existing vectors with the stub");

    // train
    auto* tr = app.add_subcommand("train", "train a model variant");
    std::string tr_train, tr_val, tr_embeddings, tr_outdir = ".", tr_sidecar;
    ea::TrainConfig tr_cfg;
    ModelOpts tr_model;
    tr->add_option("--train", tr_train, "training split (jsonl)")->required();
    tr->add_option("--val", tr_val, "validation split (jsonl)")->required();
    tr->add_option("--embeddings", tr_embeddings, "GloVe text file (optional)");
    tr->add_option("--sidecar", tr_sidecar, "emotion sidecar keyed by id");
    tr->add_option("--out-dir", tr_outdir, "output directory");
    tr->add_option("--lr", tr_cfg.lr, "learning rate");
    tr->add_option("--epochs", tr_cfg.epochs, "training epochs");
    tr->add_option("--batch", tr_cfg.batch, "minibatch size");
    tr->add_option("--grad-clip", tr_cfg.grad_clip, "gradient norm clip (0 = off)");
    tr_model.attach(tr);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "metrics report on a labeled dataset");
    std::string ev_ckpt, ev_data, ev_out, ev_sidecar;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--data", ev_data, "dataset (jsonl)")->required();
    ev->add_option("--sidecar", ev_sidecar, "emotion sidecar keyed by id");
    ev->add_option("--out", ev_out, "write the full report here as JSON");

    // predict
    auto* pr = app.add_subcommand("predict", "labels and offensive-class scores");
    std::string pr_ckpt, pr_data, pr_out, pr_sidecar;
    pr->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
    pr->add_option("--data", pr_data, "dataset (jsonl)")->required();
    pr->add_option("--sidecar", pr_sidecar, "emotion sidecar keyed by id");
    pr->add_option("--out", pr_out, "predictions output (jsonl)")->required();

    // explain
    auto* ex = app.add_subcommand("explain", "attention-weight explanations");
    std::string ex_ckpt, ex_data, ex_out, ex_sidecar;
    int ex_limit = 0;
    ex->add_option("--checkpoint", ex_ckpt, "model checkpoint")->required();
    ex->add_option("--data", ex_data, "dataset (jsonl)")->required();
    ex->add_option("--sidecar", ex_sidecar, "emotion sidecar keyed by id");
    ex->add_option("--out", ex_out, "explanations output (jsonl)")->required();
    ex->add_option("--limit", ex_limit, "explain only the first N documents");

    // compare
    auto* cp = app.add_subcommand("compare", "McNemar test between two prediction files");
    std::string cp_gold, cp_a, cp_b;
    cp->add_option("--gold", cp_gold, "labeled dataset (jsonl)")->required();
    cp->add_option("--a", cp_a, "system A predictions (jsonl)")->required();
    cp->add_option("--b", cp_b, "system B predictions (jsonl)")->required();

    // analyze-emoji
    auto* an = app.add_subcommand("analyze-emoji", "per-class emoji distributions");
    std::string an_data, an_preds, an_out;
    an->add_option("--data", an_data, "dataset with emoji vectors (jsonl)")->required();
    an->add_option("--preds", an_preds, "predictions for correct/incorrect breakdown");
    an->add_option("--out", an_out, "tabular output (csv)")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of a model variant");
    std::string gc_variant = "CNN_BILSTM_EA_EMOJI", gc_dims = "tiny";
    gc->add_option("--variant", gc_variant, "model variant name");
    gc->add_option("--dims", gc_dims, "dimension preset (only 'tiny')");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // collapse CLI11's per-error exit codes: 0 for --help, 1 for misuse
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*split) {
        auto docs = ea::load_dataset(split_data);
        auto splits = ea::stratified_split(docs, ea::SplitRatios{}, seed);
        fs::create_directories(split_outdir);
        fs::path dir(split_outdir);
        ea::save_dataset(splits.train, (dir / "train.jsonl").string());
        ea::save_dataset(splits.val, (dir / "val.jsonl").string());
        ea::save_dataset(splits.test, (dir / "test.jsonl").string());
        std::cout << json{{"command", "split"},
                          {"train", splits.train.size()},
                          {"val", splits.val.size()},
                          {"test", splits.test.size()},
                          {"seed", seed}}
                         .dump()
                  << "\n";
    } else if (*emoji) {
        auto docs = ea::load_dataset(emoji_data);
        if (!emoji_sidecar.empty())
            ea::apply_sidecar(docs, ea::load_emotion_sidecar(emoji_sidecar));
        else
            ea::attach_emotion_vectors(docs, emoji_overwrite);
        ea::save_dataset(docs, emoji_out);
        std::cout << json{{"command", "emoji"},
                          {"documents", docs.size()},
                          {"source", emoji_sidecar.empty() ? "stub" : "sidecar"}}
                         .dump()
                  << "\n";
    } else if (*tr) {
        ea::ModelConfig mcfg = tr_model.resolve(tr, seed);
        tr_cfg.seed = seed;
        auto train_docs = ea::load_dataset(tr_train);
        auto val_docs = ea::load_dataset(tr_val);
        attach_emotions_as_needed(train_docs, tr_sidecar, mcfg.variant);
        attach_emotions_as_needed(val_docs, tr_sidecar, mcfg.variant);

        ea::GloveFile glove;
        if (!tr_embeddings.empty()) glove = ea::load_glove(tr_embeddings, mcfg.embed_dim);
        auto [vocab, table] = ea::build_vocab(train_docs, glove, mcfg.embed_dim, seed);
        ea::Model model = ea::build_model(mcfg, table, vocab);

        ea::TrainResult result = ea::train(model, train_docs, val_docs, tr_cfg);

        fs::create_directories(tr_outdir);
        fs::path dir(tr_outdir);
        ea::save_checkpoint(result.best, (dir / "best.ckpt").string());
        {
            std::ofstream log(dir / "training_log.jsonl");
            for (const auto& e : result.log)
                log << json{{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_macro_f1", e.val_macro_f1}}
                           .dump()
                    << "\n";
        }
        write_resolved_config(dir, mcfg,
                              json{{"lr", tr_cfg.lr},
                                   {"epochs", tr_cfg.epochs},
                                   {"batch", tr_cfg.batch},
                                   {"grad_clip", tr_cfg.grad_clip},
                                   {"seed", seed}});
        std::cout << json{{"command", "train"},
                          {"variant", ea::variant_name(mcfg.variant)},
                          {"best_epoch", result.best.best_epoch},
                          {"best_val_macro_f1", result.best.best_val_macro_f1},
                          {"checkpoint", (dir / "best.ckpt").string()}}
                         .dump()
                  << "\n";
    } else if (*ev) {
        ea::Model model = load_model(ev_ckpt);
        auto docs = load_and_prepare(model, ev_data, ev_sidecar);
        ea::MetricsReport rep = ea::evaluate(model, docs);
        json j = metrics_json(rep);
        if (!ev_out.empty()) {
            std::ofstream out(ev_out);
            out << j.dump(2) << "\n";
        }
        j["command"] = "evaluate";
        std::cout << j.dump() << "\n";
    } else if (*pr) {
        ea::Model model = load_model(pr_ckpt);
        auto docs = load_and_prepare(model, pr_data, pr_sidecar);
        ea::Predictions p = ea::predict(model, docs);
        std::ofstream out(pr_out);
        if (!out) throw std::runtime_error("cannot open output " + pr_out);
        for (std::size_t i = 0; i < docs.size(); ++i)
            out << json{{"id", docs[i].id},
                        {"pred", p.labels[i]},
                        {"score", p.scores[i]}}
                       .dump()
                << "\n";
        std::cout << json{{"command", "predict"}, {"documents", docs.size()}, {"out", pr_out}}
                         .dump()
                  << "\n";
    } else if (*ex) {
        ea::Model model = load_model(ex_ckpt);
        auto docs = load_and_prepare(model, ex_data, ex_sidecar);
        std::ofstream out(ex_out);
        if (!out) throw std::runtime_error("cannot open output " + ex_out);
        std::size_t n = docs.size();
        if (ex_limit > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(ex_limit));
        for (std::size_t i = 0; i < n; ++i) {
            ea::AttentionExplanation e = ea::explain(model, docs[i]);
            out << json{{"id", e.id},
                        {"tokens", e.tokens},
                        {"weights", e.weights},
                        {"top_emoji", e.top_emoji},
                        {"top_emoji_probs", e.top_emoji_probs},
                        {"predicted", e.predicted},
                        {"gold", e.gold}}
                       .dump()
                << "\n";
        }
        std::cout << json{{"command", "explain"}, {"documents", n}, {"out", ex_out}}.dump()
                  << "\n";
    } else if (*cp) {
        auto gold_docs = ea::load_dataset(cp_gold);
        auto pa = load_predictions(cp_a);
        auto pb = load_predictions(cp_b);
        ea::PairedPredictions paired;
        for (const auto& d : gold_docs) {
            auto ia = pa.find(d.id), ib = pb.find(d.id);
            if (ia == pa.end() || ib == pb.end())
                throw std::runtime_error("compare: missing prediction for id " + d.id);
            paired.gold.push_back(d.label);
            paired.system_a.push_back(ia->second);
            paired.system_b.push_back(ib->second);
        }
        ea::McNemarResult r = ea::mcnemar(paired);
        std::cout << json{{"command", "compare"}, {"b", r.b},          {"c", r.c},
                          {"statistic", r.statistic}, {"p", r.p},      {"exact", r.exact}}
                         .dump()
                  << "\n";
    } else if (*an) {
        auto docs = ea::load_dataset(an_data);
        std::ofstream out(an_out);
        if (!out) throw std::runtime_error("cannot open output " + an_out);
        if (an_preds.empty()) {
            ea::ClassEmojiDistribution dist = ea::class_emoji_distribution(docs);
            out << "emoji_index,class,mean_probability\n";
            for (int i = 0; i < ea::kEmojiDim; ++i)
                out << i << ",neutral," << dist.neutral[static_cast<std::size_t>(i)] << "\n";
            for (int i = 0; i < ea::kEmojiDim; ++i)
                out << i << ",offensive," << dist.offensive[static_cast<std::size_t>(i)] << "\n";
        } else {
            auto preds = load_predictions(an_preds);
            std::vector<int> pred_labels;
            for (const auto& d : docs) {
                auto it = preds.find(d.id);
                if (it == preds.end())
                    throw std::runtime_error("analyze-emoji: missing prediction for id " + d.id);
                pred_labels.push_back(it->second);
            }
            ea::ErrorEmojiAnalysis a = ea::error_emoji_analysis(docs, pred_labels);
            out << "emoji_index,class,correctness,mean_probability\n";
            auto dump = [&](const std::vector<double>& v, const char* cls, const char* cor) {
                for (int i = 0; i < ea::kEmojiDim; ++i)
                    out << i << "," << cls << "," << cor << ","
                        << v[static_cast<std::size_t>(i)] << "\n";
            };
            dump(a.correct_neutral, "neutral", "correct");
            dump(a.correct_offensive, "offensive", "correct");
            dump(a.incorrect_neutral, "neutral", "incorrect");
            dump(a.incorrect_offensive, "offensive", "incorrect");
        }
        std::cout << json{{"command", "analyze-emoji"}, {"out", an_out}}.dump() << "\n";
    } else if (*gc) {
        if (gc_dims != "tiny") {
            std::cerr << "gradcheck: unknown dimension preset " << gc_dims << "\n";
            return 1;
        }
        const double err = ea::model_gradcheck(ea::variant_from_name(gc_variant), seed);
        std::cout << json{{"command", "gradcheck"},
                          {"variant", gc_variant},
                          {"max_rel_err", err},
                          {"pass", err < 1e-4}}
                         .dump()
                  << "\n";
        return err < 1e-4 ? 0 : 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error&) {
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
