#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ea/graph.hpp"
#include "ea/params.hpp"

namespace ea {

// Binds named parameters into a graph, one node per parameter per graph.
// Reuse matters for the LSTM, whose weights appear at every timestep.
class Binder {
public:
    Binder(Graph& g, ParameterSet& ps) : g_(&g), ps_(&ps) {}

    NodeId operator()(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        Param& p = ps_->at(name);
        NodeId id = g_->param(p.value, p.grad);
        cache_.emplace(name, id);
        return id;
    }

    Graph& graph() { return *g_; }
    ParameterSet& params() { return *ps_; }

private:
    Graph* g_;
    ParameterSet* ps_;
    std::map<std::string, NodeId> cache_;
};

// ---- parameter allocation (deterministic draw order) ----

// filters "<prefix>.w<width>.filters" [w,d,F], bias "<prefix>.w<width>.bias" [F]
void init_conv_block(ParameterSet& ps, const std::string& prefix, const std::vector<int>& widths,
                     int embed_dim, int filters, Rng& rng);
// per direction dir in {fw,bw}: "<prefix>.<dir>.W" [4H,d], ".U" [4H,H], ".b" [4H]
// Gate order (input, forget, candidate, output); forget bias starts at 1.
void init_bilstm(ParameterSet& ps, const std::string& prefix, int embed_dim, int hidden, Rng& rng);
// "<prefix>.Wa" [A,2H], optional ".We" [A,2H], ".ba" [A], ".v" [A]
void init_attention(ParameterSet& ps, const std::string& prefix, int attn_dim, int state_dim,
                    bool emotion_aware, Rng& rng);
// "<prefix>.Wp" [2H,64], ".bp" [2H]
void init_emoji_projection(ParameterSet& ps, const std::string& prefix, int state_dim, Rng& rng);
// "<prefix>.W1" [hidden,in], ".b1", ".gamma", ".beta", ".W2" [2,hidden], ".b2";
// buffers "<prefix>.run_mean", "<prefix>.run_var" (variance starts at 1)
void init_dense_head(ParameterSet& ps, const std::string& prefix, int in_dim, int hidden, Rng& rng);

// ---- forward builders ----

// Row lookup; table node may be a frozen leaf or a bound parameter.
NodeId embedding_forward(Graph& g, NodeId table, const std::vector<int>& token_ids);

// conv -> relu -> max-over-time per width, concatenated; dropout in train mode.
NodeId conv_block_forward(Binder& b, NodeId embedded, const std::string& prefix,
                          const std::vector<int>& widths, double dropout_rate, Mode mode,
                          Rng& rng);

// Single LSTM cell step; returns (h_t, c_t).
std::pair<NodeId, NodeId> lstm_step(Graph& g, NodeId x_t, NodeId h_prev, NodeId c_prev, NodeId w,
                                    NodeId u, NodeId bias, int hidden);

// [T,d] -> [T,2H]; row t = [forward h_t ; backward h_t].
NodeId bilstm_forward(Binder& b, NodeId embedded, const std::string& prefix, int hidden);

// v . tanh(Wa h + ba)
NodeId ra_score(Binder& b, NodeId h_state, const std::string& prefix);
// v . tanh(Wa h + We e + ba); `emotion_term` = We e_proj + ba, shared across positions.
NodeId ea_score(Graph& g, NodeId h_term, NodeId emotion_term, NodeId v);
// Precomputes We e_proj + ba once per document.
NodeId ea_emotion_term(Binder& b, NodeId e_proj, const std::string& prefix);

// Masked softmax over real tokens; zero on padding.
NodeId attention_weights(Graph& g, NodeId scores, const std::vector<char>& real_mask);

// r = sum_i alpha_i h_i
NodeId attention_pool(Graph& g, NodeId alpha, NodeId states);

// tanh(Wp e + bp); validates that the input vector is binary.
NodeId emoji_project(Binder& b, NodeId e_raw, const std::string& prefix);

// dense(hidden) -> relu -> batchnorm -> dropout -> dense(2); returns logits [B,2].
NodeId dense_head(Binder& b, NodeId features, const std::string& prefix, double dropout_rate,
                  Mode mode, Rng& rng);

}  // namespace ea
