#include "ea/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ea {

Confusion confusion(const std::vector<int>& gold, const std::vector<int>& pred) {
    if (gold.size() != pred.size())
        throw std::invalid_argument("confusion: gold/pred length mismatch");
    Confusion c;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] != 0 && gold[i] != 1)
            throw std::invalid_argument("confusion: labels must be 0 or 1");
        if (gold[i] == 1)
            (pred[i] == 1 ? c.tp : c.fn) += 1;
        else
            (pred[i] == 1 ? c.fp : c.tn) += 1;
    }
    return c;
}

namespace {
double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace

double precision(const Confusion& c, int cls) {
    return cls == 1 ? safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp))
                    : safe_div(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fn));
}

double recall(const Confusion& c, int cls) {
    return cls == 1 ? safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn))
                    : safe_div(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
}

double f1(const Confusion& c, int cls) {
    const double p = precision(c, cls), r = recall(c, cls);
    return safe_div(2.0 * p * r, p + r);
}

double macro_f1(const Confusion& c) { return 0.5 * (f1(c, 0) + f1(c, 1)); }

double roc_auc(const std::vector<double>& scores, const std::vector<int>& gold) {
    if (scores.size() != gold.size())
        throw std::invalid_argument("roc_auc: scores/gold length mismatch");
    long n_pos = 0, n_neg = 0;
    for (int y : gold) (y == 1 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups, then the Mann-Whitney U statistic
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (gold[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

McNemarResult mcnemar(const PairedPredictions& paired) {
    const std::size_t n = paired.gold.size();
    if (paired.system_a.size() != n || paired.system_b.size() != n)
        throw std::invalid_argument("mcnemar: prediction lists must align with gold");
    McNemarResult r;
    for (std::size_t i = 0; i < n; ++i) {
        const bool a_ok = paired.system_a[i] == paired.gold[i];
        const bool b_ok = paired.system_b[i] == paired.gold[i];
        if (a_ok && !b_ok) ++r.b;
        if (!a_ok && b_ok) ++r.c;
    }
    const long m = r.b + r.c;
    if (m == 0) {
        r.statistic = 0.0;
        r.p = 1.0;
        return r;
    }
    // The continuity-corrected chi-square value is reported either way; the
    // discordant count only decides where the p-value comes from.
    const double d = std::fabs(static_cast<double>(r.b - r.c)) - 1.0;
    r.statistic = d * d / static_cast<double>(m);
    if (m >= 25) {
        // chi-square survival with 1 dof: P(X > x) = erfc(sqrt(x/2))
        r.p = std::erfc(std::sqrt(r.statistic / 2.0));
    } else {
        r.exact = true;
        const long k = std::min(r.b, r.c);
        double coef = 1.0;  // C(m, 0)
        double cdf = 0.0;
        const double scale = std::pow(0.5, static_cast<double>(m));
        for (long j = 0; j <= k; ++j) {
            if (j > 0) coef *= static_cast<double>(m - j + 1) / static_cast<double>(j);
            cdf += coef * scale;
        }
        r.p = std::min(1.0, 2.0 * cdf);
    }
    return r;
}

MetricsReport evaluate(Model& model, const std::vector<Document>& docs) {
    if (docs.empty()) throw std::invalid_argument("evaluate: empty document list");
    Predictions pred = predict(model, docs);
    std::vector<int> gold;
    gold.reserve(docs.size());
    for (const Document& d : docs) gold.push_back(d.label);

    MetricsReport rep;
    rep.counts = confusion(gold, pred.labels);
    rep.precision_offensive = precision(rep.counts, 1);
    rep.recall_offensive = recall(rep.counts, 1);
    rep.f1_offensive = f1(rep.counts, 1);
    rep.precision_neutral = precision(rep.counts, 0);
    rep.recall_neutral = recall(rep.counts, 0);
    rep.f1_neutral = f1(rep.counts, 0);
    rep.macro = macro_f1(rep.counts);
    rep.auc = roc_auc(pred.scores, gold);
    rep.n = static_cast<int>(docs.size());
    return rep;
}

AttentionExplanation explain(Model& model, const Document& doc) {
    if (!has_bilstm(model.config.variant))
        throw std::invalid_argument("explain: variant " + variant_name(model.config.variant) +
                                    " has no attention path");
    std::vector<Document> batch{doc};
    encode_documents(model, batch);
    if (!batch[0].emoji_probs) {
        // the explanation always reports five emojis; fall back to the stub
        batch[0].emoji_probs = stub_emotion_encoder(batch[0].text);
    }
    batch[0].emoji_binary = binarize_top5(*batch[0].emoji_probs);

    ForwardResult r = forward(model, batch, Mode::Infer, /*want_attention=*/true);
    AttentionExplanation ex;
    ex.id = doc.id;
    ex.gold = doc.label;
    ex.predicted = r.probs.at(0, 1) > r.probs.at(0, 0) ? 1 : 0;

    const std::vector<double>& alpha = r.attention.at(0);
    const std::vector<int>& ids = batch[0].token_ids;
    const std::vector<std::string>& toks = batch[0].tokens;
    const std::size_t maxlen = ids.size();
    const std::size_t keep = std::min(toks.size(), maxlen);
    const std::size_t pad = maxlen - keep;
    const std::size_t first = model.config.truncate_tail ? toks.size() - keep : 0;
    for (std::size_t t = pad; t < maxlen; ++t) {
        if (ids[t] == Vocabulary::kPadId) continue;  // a real token never maps to id 0
        ex.tokens.push_back(toks[first + (t - pad)]);
        ex.weights.push_back(alpha[t]);
    }

    const std::vector<double>& probs = *batch[0].emoji_probs;
    std::vector<int> idx(kEmojiDim);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    });
    for (int i = 0; i < kTopEmojis; ++i) {
        ex.top_emoji.push_back(idx[static_cast<std::size_t>(i)]);
        ex.top_emoji_probs.push_back(probs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    }
    return ex;
}

ClassEmojiDistribution class_emoji_distribution(const std::vector<Document>& docs) {
    std::vector<double> sums[2] = {std::vector<double>(kEmojiDim, 0.0),
                                   std::vector<double>(kEmojiDim, 0.0)};
    long counts[2] = {0, 0};
    for (const Document& d : docs) {
        if (!d.emoji_probs)
            throw std::invalid_argument("class_emoji_distribution: document " + d.id +
                                        " has no emoji probabilities");
        const int c = d.label == 1 ? 1 : 0;
        for (int i = 0; i < kEmojiDim; ++i)
            sums[c][static_cast<std::size_t>(i)] += (*d.emoji_probs)[static_cast<std::size_t>(i)];
        ++counts[c];
    }
    if (counts[0] == 0 || counts[1] == 0)
        throw std::invalid_argument("class_emoji_distribution: a class has zero documents");
    for (int c = 0; c < 2; ++c)
        for (double& x : sums[c]) x /= static_cast<double>(counts[c]);
    return {std::move(sums[0]), std::move(sums[1])};
}

ErrorEmojiAnalysis error_emoji_analysis(const std::vector<Document>& docs,
                                        const std::vector<int>& preds) {
    if (docs.size() != preds.size())
        throw std::invalid_argument("error_emoji_analysis: docs/preds length mismatch");
    std::vector<double> sums[4] = {
        std::vector<double>(kEmojiDim, 0.0), std::vector<double>(kEmojiDim, 0.0),
        std::vector<double>(kEmojiDim, 0.0), std::vector<double>(kEmojiDim, 0.0)};
    long counts[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const Document& d = docs[i];
        if (!d.emoji_probs)
            throw std::invalid_argument("error_emoji_analysis: document " + d.id +
                                        " has no emoji probabilities");
        const bool correct = preds[i] == d.label;
        const int cell = (correct ? 0 : 2) + (d.label == 1 ? 1 : 0);
        const std::vector<double> top = binarize_top5(*d.emoji_probs);
        for (int k = 0; k < kEmojiDim; ++k)
            if (top[static_cast<std::size_t>(k)] == 1.0)
                sums[cell][static_cast<std::size_t>(k)] +=
                    (*d.emoji_probs)[static_cast<std::size_t>(k)];
        ++counts[cell];
    }
    for (int c = 0; c < 4; ++c)
        if (counts[c] > 0)
            for (double& x : sums[c]) x /= static_cast<double>(counts[c]);
    ErrorEmojiAnalysis out;
    out.correct_neutral = std::move(sums[0]);
    out.correct_offensive = std::move(sums[1]);
    out.incorrect_neutral = std::move(sums[2]);
    out.incorrect_offensive = std::move(sums[3]);
    out.empty_correct_neutral = counts[0] == 0;
    out.empty_correct_offensive = counts[1] == 0;
    out.empty_incorrect_neutral = counts[2] == 0;
    out.empty_incorrect_offensive = counts[3] == 0;
    return out;
}

}  // namespace ea
