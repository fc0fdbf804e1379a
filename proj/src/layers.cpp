#include "ea/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ea {

void init_conv_block(ParameterSet& ps, const std::string& prefix, const std::vector<int>& widths,
                     int embed_dim, int filters, Rng& rng) {
    for (int w : widths) {
        const std::string base = prefix + ".w" + std::to_string(w);
        ps.add(base + ".filters",
               glorot_uniform({w, embed_dim, filters}, w * embed_dim, filters, rng));
        ps.add(base + ".bias", Tensor({filters}));
    }
}

void init_bilstm(ParameterSet& ps, const std::string& prefix, int embed_dim, int hidden,
                 Rng& rng) {
    for (const std::string dir : {"fw", "bw"}) {
        const std::string base = prefix + "." + dir;
        ps.add(base + ".W", glorot_uniform({4 * hidden, embed_dim}, embed_dim, hidden, rng));
        Tensor u({4 * hidden, hidden});
        for (int gate = 0; gate < 4; ++gate) {
            Tensor q = orthogonal(hidden, rng);
            for (int r = 0; r < hidden; ++r)
                for (int c = 0; c < hidden; ++c) u.at(gate * hidden + r, c) = q.at(r, c);
        }
        ps.add(base + ".U", std::move(u));
        Tensor bias({4 * hidden});
        for (int i = hidden; i < 2 * hidden; ++i) bias.at(i) = 1.0;  // forget gate
        ps.add(base + ".b", std::move(bias));
    }
}

void init_attention(ParameterSet& ps, const std::string& prefix, int attn_dim, int state_dim,
                    bool emotion_aware, Rng& rng) {
    ps.add(prefix + ".Wa", glorot_uniform({attn_dim, state_dim}, state_dim, attn_dim, rng));
    if (emotion_aware)
        ps.add(prefix + ".We", glorot_uniform({attn_dim, state_dim}, state_dim, attn_dim, rng));
    ps.add(prefix + ".ba", Tensor({attn_dim}));
    ps.add(prefix + ".v", glorot_uniform({attn_dim}, attn_dim, 1, rng));
}

void init_emoji_projection(ParameterSet& ps, const std::string& prefix, int state_dim, Rng& rng) {
    ps.add(prefix + ".Wp", glorot_uniform({state_dim, 64}, 64, state_dim, rng));
    ps.add(prefix + ".bp", Tensor({state_dim}));
}

void init_dense_head(ParameterSet& ps, const std::string& prefix, int in_dim, int hidden,
                     Rng& rng) {
    ps.add(prefix + ".W1", glorot_uniform({hidden, in_dim}, in_dim, hidden, rng));
    ps.add(prefix + ".b1", Tensor({hidden}));
    ps.add(prefix + ".gamma", Tensor({hidden}, 1.0));
    ps.add(prefix + ".beta", Tensor({hidden}));
    ps.add(prefix + ".W2", glorot_uniform({2, hidden}, hidden, 2, rng));
    ps.add(prefix + ".b2", Tensor({2}));
    ps.buffers[prefix + ".run_mean"] = Tensor({hidden});
    ps.buffers[prefix + ".run_var"] = Tensor({hidden}, 1.0);
}

NodeId embedding_forward(Graph& g, NodeId table, const std::vector<int>& token_ids) {
    return g.lookup(table, token_ids);
}

NodeId conv_block_forward(Binder& b, NodeId embedded, const std::string& prefix,
                          const std::vector<int>& widths, double dropout_rate, Mode mode,
                          Rng& rng) {
    Graph& g = b.graph();
    const int T = g.val(embedded).dim(0);
    for (int w : widths)
        if (T < w)
            throw std::invalid_argument("conv_block_forward: sequence length " +
                                        std::to_string(T) + " shorter than filter width " +
                                        std::to_string(w));
    std::vector<NodeId> pooled;
    for (int w : widths) {
        const std::string base = prefix + ".w" + std::to_string(w);
        NodeId conv = g.conv1d_valid(embedded, b(base + ".filters"), b(base + ".bias"));
        pooled.push_back(g.max_over_time(g.activation(conv, Act::Relu)));
    }
    return g.dropout(g.concat(pooled), dropout_rate, mode, rng);
}

std::pair<NodeId, NodeId> lstm_step(Graph& g, NodeId x_t, NodeId h_prev, NodeId c_prev, NodeId w,
                                    NodeId u, NodeId bias, int hidden) {
    NodeId z = g.add(g.add(g.matvec(w, x_t), g.matvec(u, h_prev)), bias);
    NodeId gi = g.activation(g.slice(z, 0, hidden), Act::Sigmoid);
    NodeId gf = g.activation(g.slice(z, hidden, hidden), Act::Sigmoid);
    NodeId gg = g.activation(g.slice(z, 2 * hidden, hidden), Act::Tanh);
    NodeId go = g.activation(g.slice(z, 3 * hidden, hidden), Act::Sigmoid);
    NodeId c_t = g.add(g.mul(gf, c_prev), g.mul(gi, gg));
    NodeId h_t = g.mul(go, g.activation(c_t, Act::Tanh));
    return {h_t, c_t};
}

NodeId bilstm_forward(Binder& b, NodeId embedded, const std::string& prefix, int hidden) {
    Graph& g = b.graph();
    const int T = g.val(embedded).dim(0);
    std::vector<NodeId> fw(static_cast<std::size_t>(T)), bw(static_cast<std::size_t>(T));

    NodeId h = g.leaf(Tensor({hidden}));
    NodeId c = g.leaf(Tensor({hidden}));
    NodeId w_fw = b(prefix + ".fw.W"), u_fw = b(prefix + ".fw.U"), b_fw = b(prefix + ".fw.b");
    for (int t = 0; t < T; ++t) {
        auto [hn, cn] = lstm_step(g, g.row(embedded, t), h, c, w_fw, u_fw, b_fw, hidden);
        h = hn;
        c = cn;
        fw[static_cast<std::size_t>(t)] = h;
    }

    h = g.leaf(Tensor({hidden}));
    c = g.leaf(Tensor({hidden}));
    NodeId w_bw = b(prefix + ".bw.W"), u_bw = b(prefix + ".bw.U"), b_bw = b(prefix + ".bw.b");
    for (int t = T - 1; t >= 0; --t) {
        auto [hn, cn] = lstm_step(g, g.row(embedded, t), h, c, w_bw, u_bw, b_bw, hidden);
        h = hn;
        c = cn;
        bw[static_cast<std::size_t>(t)] = h;
    }

    std::vector<NodeId> rows(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        rows[static_cast<std::size_t>(t)] =
            g.concat({fw[static_cast<std::size_t>(t)], bw[static_cast<std::size_t>(t)]});
    return g.stack_rows(rows);
}

NodeId ra_score(Binder& b, NodeId h_state, const std::string& prefix) {
    Graph& g = b.graph();
    NodeId z = g.activation(g.add(g.matvec(b(prefix + ".Wa"), h_state), b(prefix + ".ba")),
                            Act::Tanh);
    return g.sum(g.mul(b(prefix + ".v"), z));
}

NodeId ea_emotion_term(Binder& b, NodeId e_proj, const std::string& prefix) {
    Graph& g = b.graph();
    return g.add(g.matvec(b(prefix + ".We"), e_proj), b(prefix + ".ba"));
}

NodeId ea_score(Graph& g, NodeId h_term, NodeId emotion_term, NodeId v) {
    NodeId z = g.activation(g.add(h_term, emotion_term), Act::Tanh);
    return g.sum(g.mul(v, z));
}

NodeId attention_weights(Graph& g, NodeId scores, const std::vector<char>& real_mask) {
    return g.softmax_masked(scores, real_mask);
}

NodeId attention_pool(Graph& g, NodeId alpha, NodeId states) {
    return g.attn_pool(alpha, states);
}

NodeId emoji_project(Binder& b, NodeId e_raw, const std::string& prefix) {
    Graph& g = b.graph();
    const Tensor& e = g.val(e_raw);
    for (double x : e.v)
        if (x != 0.0 && x != 1.0)
            throw std::invalid_argument("emoji_project: input vector must be binary");
    return g.activation(g.add(g.matvec(b(prefix + ".Wp"), e_raw), b(prefix + ".bp")), Act::Tanh);
}

NodeId dense_head(Binder& b, NodeId features, const std::string& prefix, double dropout_rate,
                  Mode mode, Rng& rng) {
    Graph& g = b.graph();
    const Tensor& X = g.val(features);
    if (X.rank() != 2 || X.dim(1) != g.val(b(prefix + ".W1")).dim(1))
        throw std::invalid_argument("dense_head: feature width " + shape_str(X.shape) +
                                    " does not match configured input width");
    NodeId hidden = g.activation(g.linear_rows(features, b(prefix + ".W1"), b(prefix + ".b1")),
                                 Act::Relu);
    NodeId bn = g.batchnorm(hidden, b(prefix + ".gamma"), b(prefix + ".beta"),
                            b.params().buffers.at(prefix + ".run_mean"),
                            b.params().buffers.at(prefix + ".run_var"), mode);
    NodeId dropped = g.dropout(bn, dropout_rate, mode, rng);
    return g.linear_rows(dropped, b(prefix + ".W2"), b(prefix + ".b2"));
}

}  // namespace ea
