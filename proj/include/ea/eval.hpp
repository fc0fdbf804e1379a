#pragma once

#include <string>
#include <vector>

#include "ea/model.hpp"
#include "ea/preprocess.hpp"

namespace ea {

// Offensive (label 1) is the positive class throughout.
struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    long total() const { return tp + fp + fn + tn; }
};

Confusion confusion(const std::vector<int>& gold, const std::vector<int>& pred);

// F1 of one class; zero-denominator precision/recall/F1 are defined as 0.
double f1(const Confusion& c, int cls);
double precision(const Confusion& c, int cls);
double recall(const Confusion& c, int cls);
double macro_f1(const Confusion& c);

// Mann-Whitney formulation: P(random positive outranks random negative), ties 1/2.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& gold);

struct PairedPredictions {
    std::vector<int> gold;
    std::vector<int> system_a;
    std::vector<int> system_b;
};

struct McNemarResult {
    long b = 0;  // A correct, B wrong
    long c = 0;  // A wrong, B correct
    double statistic = 0.0;
    double p = 1.0;
    bool exact = false;  // exact binomial branch (b + c < 25)
};

McNemarResult mcnemar(const PairedPredictions& paired);

struct MetricsReport {
    Confusion counts;
    double precision_offensive = 0, recall_offensive = 0, f1_offensive = 0;
    double precision_neutral = 0, recall_neutral = 0, f1_neutral = 0;
    double macro = 0;
    double auc = 0;
    int n = 0;
};

MetricsReport evaluate(Model& model, const std::vector<Document>& docs);

struct AttentionExplanation {
    std::string id;
    std::vector<std::string> tokens;   // real (non-padding) tokens
    std::vector<double> weights;       // aligned with tokens, sums to 1
    std::vector<int> top_emoji;        // exactly five indices, descending probability
    std::vector<double> top_emoji_probs;
    int predicted = 0;
    int gold = 0;
};

AttentionExplanation explain(Model& model, const Document& doc);

struct ClassEmojiDistribution {
    std::vector<double> neutral;    // 64 mean probabilities
    std::vector<double> offensive;  // 64 mean probabilities
};

ClassEmojiDistribution class_emoji_distribution(const std::vector<Document>& docs);

// Mean emoji vector per (correctness x class) cell, with all but each
// instance's top-5 probabilities zeroed first.
struct ErrorEmojiAnalysis {
    std::vector<double> correct_neutral, correct_offensive;
    std::vector<double> incorrect_neutral, incorrect_offensive;
    bool empty_correct_neutral = false, empty_correct_offensive = false;
    bool empty_incorrect_neutral = false, empty_incorrect_offensive = false;
};

ErrorEmojiAnalysis error_emoji_analysis(const std::vector<Document>& docs,
                                        const std::vector<int>& preds);

}  // namespace ea
