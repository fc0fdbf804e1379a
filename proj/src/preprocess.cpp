#include "ea/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "ea/rng.hpp"
#include "json.hpp"

namespace ea {

namespace {

const std::regex kUrlRe(R"((?:[a-z][a-z0-9+.\-]*://|www\.)\S+)");
const std::regex kMentionRe(R"(@\w+)");

bool is_mention_token(const std::string& t) {
    if (t.size() < 2 || t[0] != '@') return false;
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!std::isalnum(static_cast<unsigned char>(t[i])) && t[i] != '_') return false;
    return true;
}

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

void emit_token(const std::string& raw, std::vector<std::string>& out) {
    if (raw.empty()) return;
    if (is_mention_token(raw)) {
        out.push_back(raw);
        return;
    }
    std::size_t begin = 0, end = raw.size();
    std::vector<std::string> leading, trailing;
    // a leading '@' followed by a word character stays attached (mention style)
    while (begin < end - 0 && end - begin > 1 && is_punct(raw[begin]) &&
           !(raw[begin] == '@' && std::isalnum(static_cast<unsigned char>(raw[begin + 1])))) {
        leading.push_back(std::string(1, raw[begin]));
        ++begin;
    }
    while (end - begin > 1 && is_punct(raw[end - 1])) {
        trailing.push_back(std::string(1, raw[end - 1]));
        --end;
    }
    std::reverse(trailing.begin(), trailing.end());
    for (auto& t : leading) out.push_back(std::move(t));
    std::string core = raw.substr(begin, end - begin);
    if (is_mention_token(core) && core != "@username") {
        // stripped mention remnants collapse to the canonical token
        out.push_back("@username");
    } else {
        out.push_back(std::move(core));
    }
    for (auto& t : trailing) out.push_back(std::move(t));
}

}  // namespace

std::vector<std::string> normalize_and_tokenize(const std::string& text) {
    std::string s;
    s.reserve(text.size());
    for (char c : text) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    s = std::regex_replace(s, kUrlRe, "url");
    s = std::regex_replace(s, kMentionRe, "@username");

    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) emit_token(tok, out);
    return out;
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        int maxlen, bool truncate_tail) {
    std::vector<int> ids;
    const std::size_t n = tokens.size();
    const std::size_t keep = std::min<std::size_t>(n, static_cast<std::size_t>(maxlen));
    const std::size_t start = truncate_tail ? n - keep : 0;
    ids.reserve(static_cast<std::size_t>(maxlen));
    for (int i = 0; i < maxlen - static_cast<int>(keep); ++i) ids.push_back(Vocabulary::kPadId);
    for (std::size_t i = 0; i < keep; ++i) ids.push_back(vocab.id_of(tokens[start + i]));
    return ids;
}

int Vocabulary::add(const std::string& token) {
    auto it = to_id_.find(token);
    if (it != to_id_.end()) return it->second;
    const int id = static_cast<int>(ordered_.size()) + 2;
    to_id_.emplace(token, id);
    ordered_.push_back(token);
    return id;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = to_id_.find(token);
    return it == to_id_.end() ? kOovId : it->second;
}

GloveFile load_glove(const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_glove: cannot open " + path);
    GloveFile out;
    std::string line;
    int total = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++total;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        std::vector<double> vec;
        vec.reserve(static_cast<std::size_t>(dim));
        double x;
        while (ls >> x) vec.push_back(x);
        if (static_cast<int>(vec.size()) != dim || word.empty()) {
            ++out.skipped_lines;
            continue;
        }
        out.vectors[word] = std::move(vec);
    }
    if (total > 0 && out.skipped_lines * 2 > total)
        throw std::runtime_error("load_glove: " + std::to_string(out.skipped_lines) + " of " +
                                 std::to_string(total) + " lines malformed for dim " +
                                 std::to_string(dim));
    if (out.skipped_lines > 0)
        std::fprintf(stderr, "load_glove: skipped %d malformed lines in %s\n", out.skipped_lines,
                     path.c_str());
    return out;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::pair<Vocabulary, EmbeddingTable> build_vocab(const std::vector<Document>& training_docs,
                                                  const GloveFile& glove, int dim,
                                                  std::uint64_t seed) {
    if (training_docs.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    Vocabulary vocab;
    for (const Document& d : training_docs) {
        const std::vector<std::string>& toks =
            d.tokens.empty() ? normalize_and_tokenize(d.text) : d.tokens;
        for (const std::string& t : toks) vocab.add(t);
    }
    EmbeddingTable table;
    table.rows = Tensor({vocab.size() + 1, dim});
    auto seeded_row = [&](const std::string& token, int row) {
        Rng r(seed ^ fnv1a64(token));
        for (int c = 0; c < dim; ++c) table.rows.at(row, c) = r.uniform(-0.05, 0.05);
    };
    seeded_row("<unk>", Vocabulary::kOovId);
    for (std::size_t i = 0; i < vocab.tokens().size(); ++i) {
        const std::string& tok = vocab.tokens()[i];
        const int row = static_cast<int>(i) + 2;
        auto it = glove.vectors.find(tok);
        if (it != glove.vectors.end()) {
            for (int c = 0; c < dim; ++c) table.rows.at(row, c) = it->second[static_cast<std::size_t>(c)];
        } else {
            seeded_row(tok, row);
        }
    }
    return {std::move(vocab), std::move(table)};
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        std::size_t a = cur.find_first_not_of(" \t\r\n");
        std::size_t b = cur.find_last_not_of(" \t\r\n");
        if (a != std::string::npos) out.push_back(cur.substr(a, b - a + 1));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        cur.push_back(text[i]);
        if (text[i] == '.' || text[i] == '!' || text[i] == '?') {
            while (i + 1 < text.size() &&
                   (text[i + 1] == '.' || text[i + 1] == '!' || text[i + 1] == '?'))
                cur.push_back(text[++i]);
            flush();
        }
    }
    flush();
    return out;
}

std::vector<double> average_emoji(const std::vector<std::vector<double>>& sentence_vectors) {
    if (sentence_vectors.empty()) throw std::invalid_argument("average_emoji: empty list");
    std::vector<double> mean(kEmojiDim, 0.0);
    for (const auto& v : sentence_vectors) {
        if (static_cast<int>(v.size()) != kEmojiDim)
            throw std::invalid_argument("average_emoji: vector is not 64-dimensional");
        for (int i = 0; i < kEmojiDim; ++i) mean[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
    }
    for (double& x : mean) x /= static_cast<double>(sentence_vectors.size());
    return mean;
}

std::vector<double> binarize_top5(const std::vector<double>& probs) {
    if (static_cast<int>(probs.size()) != kEmojiDim)
        throw std::invalid_argument("binarize_top5: expected 64 probabilities");
    std::vector<int> idx(kEmojiDim);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    });  // stable: ties keep the lower index first
    std::vector<double> out(kEmojiDim, 0.0);
    for (int i = 0; i < kTopEmojis; ++i) out[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1.0;
    return out;
}

namespace {

// keyword -> emoji slot for the test stub; rough emotional grouping
const std::map<std::string, int>& stub_lexicon() {
    static const std::map<std::string, int> lex = {
        {"angry", 0},    {"hate", 1},     {"stupid", 2},  {"ugly", 2},    {"die", 3},
        {"kill", 3},     {"annoying", 4}, {"weirdo", 4},  {"trash", 5},   {"idiot", 5},
        {"shut", 6},     {"loser", 6},    {"happy", 10},  {"love", 11},   {"beautiful", 12},
        {"pretty", 12},  {"cute", 13},    {"thanks", 14}, {"great", 14},  {"nice", 15},
        {"sad", 20},     {"cry", 21},     {"sorry", 22},  {"miss", 22},   {"lol", 30},
        {"haha", 30},    {"funny", 31},   {"joke", 31},   {"play", 40},   {"wink", 40},
    };
    return lex;
}

}  // namespace

std::vector<double> stub_emotion_encoder(const std::string& text) {
    const std::vector<std::string> tokens = normalize_and_tokenize(text);
    std::vector<double> score(kEmojiDim, 0.0);
    if (tokens.empty()) {
        std::fill(score.begin(), score.end(), 1.0 / kEmojiDim);
        return score;
    }
    const auto& lex = stub_lexicon();
    for (const std::string& t : tokens) {
        auto it = lex.find(t);
        if (it != lex.end())
            score[static_cast<std::size_t>(it->second)] += 1.0;
        else
            score[fnv1a64(t) % kEmojiDim] += 0.05;
    }
    const double total = std::accumulate(score.begin(), score.end(), 0.0);
    for (double& x : score) x /= total;
    return score;
}

void attach_emotion_vectors(std::vector<Document>& docs, bool overwrite) {
    for (Document& d : docs) {
        if (!d.emoji_probs || overwrite) {
            std::vector<std::vector<double>> per_sentence;
            for (const std::string& s : split_sentences(d.text))
                per_sentence.push_back(stub_emotion_encoder(s));
            if (per_sentence.empty()) per_sentence.push_back(stub_emotion_encoder(""));
            d.emoji_probs = average_emoji(per_sentence);
        }
        d.emoji_binary = binarize_top5(*d.emoji_probs);
    }
}

namespace {

int parse_label(const nlohmann::json& j, int line_no) {
    if (j.is_number_integer()) {
        const int v = j.get<int>();
        if (v == 0 || v == 1) return v;
    } else if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "neutral") return 0;
        if (s == "offensive") return 1;
    }
    throw std::runtime_error("load_dataset: line " + std::to_string(line_no) +
                             ": label must be 0/1 or neutral/offensive");
}

}  // namespace

std::vector<Document> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    std::vector<Document> docs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("load_dataset: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        if (!j.contains("id") || !j.contains("text") || !j.contains("label"))
            throw std::runtime_error("load_dataset: line " + std::to_string(line_no) +
                                     ": missing id/text/label");
        Document d;
        d.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        d.text = j["text"].get<std::string>();
        d.label = parse_label(j["label"], line_no);
        if (j.contains("emoji") && !j["emoji"].is_null()) {
            auto v = j["emoji"].get<std::vector<double>>();
            if (static_cast<int>(v.size()) != kEmojiDim)
                throw std::runtime_error("load_dataset: line " + std::to_string(line_no) +
                                         ": emoji field has " + std::to_string(v.size()) +
                                         " entries, expected 64");
            d.emoji_probs = std::move(v);
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

void save_dataset(const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    for (const Document& d : docs) {
        nlohmann::json j{{"id", d.id}, {"text", d.text}, {"label", d.label}};
        if (d.emoji_probs) j["emoji"] = *d.emoji_probs;
        out << j.dump() << "\n";
    }
}

std::map<std::string, std::vector<double>> load_emotion_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_emotion_sidecar: cannot open " + path);
    std::map<std::string, std::vector<double>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        auto v = j.at("emoji").get<std::vector<double>>();
        if (static_cast<int>(v.size()) != kEmojiDim)
            throw std::runtime_error("load_emotion_sidecar: line " + std::to_string(line_no) +
                                     ": emoji field must have 64 entries");
        out[j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump()] =
            std::move(v);
    }
    return out;
}

void apply_sidecar(std::vector<Document>& docs,
                   const std::map<std::string, std::vector<double>>& sidecar) {
    for (Document& d : docs) {
        auto it = sidecar.find(d.id);
        if (it == sidecar.end())
            throw std::runtime_error("apply_sidecar: no emotion vector for document id " + d.id);
        d.emoji_probs = it->second;
        d.emoji_binary = binarize_top5(it->second);
    }
}

Splits stratified_split(const std::vector<Document>& docs, const SplitRatios& ratios,
                        std::uint64_t seed) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < docs.size(); ++i)
        by_class[docs[i].label == 1 ? 1 : 0].push_back(i);
    for (int c = 0; c < 2; ++c)
        if (by_class[c].size() < 3)
            throw std::invalid_argument("stratified_split: class " + std::to_string(c) +
                                        " has fewer than 3 members");
    Rng rng(seed);
    Splits out;
    const double rs[3] = {ratios.train, ratios.val, ratios.test};
    for (int c = 0; c < 2; ++c) {
        auto& idx = by_class[c];
        rng.shuffle(idx);
        const int n = static_cast<int>(idx.size());
        int counts[3];
        double rema[3];
        int assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double exact = rs[s] * n;
            counts[s] = static_cast<int>(exact);
            rema[s] = exact - counts[s];
            assigned += counts[s];
        }
        while (assigned < n) {  // largest remainder, ties to the earlier split
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (rema[s] > rema[best]) best = s;
            ++counts[best];
            rema[best] = -1.0;
            ++assigned;
        }
        std::size_t pos = 0;
        std::vector<Document>* dests[3] = {&out.train, &out.val, &out.test};
        for (int s = 0; s < 3; ++s)
            for (int k = 0; k < counts[s]; ++k) dests[s]->push_back(docs[idx[pos++]]);
    }
    return out;
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
    CorpusStats s;
    s.total = static_cast<int>(docs.size());
    for (const Document& d : docs) (d.label == 1 ? s.offensive : s.neutral) += 1;
    s.negativity_ratio = s.total > 0 ? static_cast<double>(s.offensive) / s.total : 0.0;
    return s;
}

std::string CorpusStats::ratio_percent() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", negativity_ratio * 100.0);
    return buf;
}

}  // namespace ea
