#include "ea/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ea {

NodeId Graph::push(Tensor value, bool rg, std::function<void(Graph&)> back) {
    Node n;
    n.own_grad = Tensor(value.shape);
    n.value = std::move(value);
    n.requires_grad = rg;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Graph::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

NodeId Graph::param(const Tensor& value, Tensor& grad_sink) {
    if (!grad_sink.same_shape(value))
        throw std::invalid_argument("param: gradient sink shape " + shape_str(grad_sink.shape) +
                                    " does not match value " + shape_str(value.shape));
    NodeId id = push(value, true, nullptr);
    nodes_[id].ext_grad = &grad_sink;
    return id;
}

const Tensor& Graph::val(NodeId id) const { return nodes_[id].value; }

Tensor& Graph::grad(NodeId id) {
    Node& n = nodes_[id];
    return n.ext_grad ? *n.ext_grad : n.own_grad;
}

bool Graph::requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(A.shape) + " x " +
                                    shape_str(B.shape));
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor C({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double aip = A.at(i, p);
            if (aip == 0.0) continue;
            for (int j = 0; j < n; ++j) C.at(i, j) += aip * B.at(p, j);
        }
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(C), rg, nullptr);
    nodes_[id].back = [a, b, id, m, k, n](Graph& g) {
        const Tensor& dC = g.grad(id);
        if (g.requires_grad(a)) {
            Tensor& dA = g.grad(a);
            const Tensor& B = g.val(b);
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += dC.at(i, j) * B.at(p, j);
                    dA.at(i, p) += acc;
                }
        }
        if (g.requires_grad(b)) {
            Tensor& dB = g.grad(b);
            const Tensor& A = g.val(a);
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i) acc += A.at(i, p) * dC.at(i, j);
                    dB.at(p, j) += acc;
                }
        }
    };
    return id;
}

NodeId Graph::matvec(NodeId w, NodeId x) {
    const Tensor& W = val(w);
    const Tensor& X = val(x);
    if (W.rank() != 2 || X.rank() != 1 || W.dim(1) != X.dim(0))
        throw std::invalid_argument("matvec: incompatible shapes " + shape_str(W.shape) + " x " +
                                    shape_str(X.shape));
    const int o = W.dim(0), i = W.dim(1);
    Tensor y({o});
    for (int r = 0; r < o; ++r) {
        double acc = 0.0;
        for (int c = 0; c < i; ++c) acc += W.at(r, c) * X.at(c);
        y.at(r) = acc;
    }
    bool rg = requires_grad(w) || requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [w, x, id, o, i](Graph& g) {
        const Tensor& dy = g.grad(id);
        if (g.requires_grad(w)) {
            Tensor& dW = g.grad(w);
            const Tensor& X = g.val(x);
            for (int r = 0; r < o; ++r)
                for (int c = 0; c < i; ++c) dW.at(r, c) += dy.at(r) * X.at(c);
        }
        if (g.requires_grad(x)) {
            Tensor& dX = g.grad(x);
            const Tensor& W = g.val(w);
            for (int r = 0; r < o; ++r)
                for (int c = 0; c < i; ++c) dX.at(c) += dy.at(r) * W.at(r, c);
        }
    };
    return id;
}

NodeId Graph::conv1d_valid(NodeId seq, NodeId filters, NodeId bias) {
    const Tensor& S = val(seq);
    const Tensor& K = val(filters);
    const Tensor& B = val(bias);
    if (S.rank() != 2 || K.rank() != 3 || B.rank() != 1)
        throw std::invalid_argument("conv1d_valid: expected seq [T,d], filters [w,d,F], bias [F]");
    const int T = S.dim(0), d = S.dim(1), w = K.dim(0), F = K.dim(2);
    if (K.dim(1) != d || B.dim(0) != F)
        throw std::invalid_argument("conv1d_valid: incompatible shapes " + shape_str(S.shape) +
                                    ", " + shape_str(K.shape) + ", " + shape_str(B.shape));
    if (T < w)
        throw std::invalid_argument("conv1d_valid: sequence too short, T=" + std::to_string(T) +
                                    " < filter width " + std::to_string(w));
    const int To = T - w + 1;
    Tensor Y({To, F});
    for (int t = 0; t < To; ++t)
        for (int f = 0; f < F; ++f) {
            double acc = B.at(f);
            for (int i = 0; i < w; ++i)
                for (int c = 0; c < d; ++c) acc += S.at(t + i, c) * K.at(i, c, f);
            Y.at(t, f) = acc;
        }
    bool rg = requires_grad(seq) || requires_grad(filters) || requires_grad(bias);
    NodeId id = push(std::move(Y), rg, nullptr);
    nodes_[id].back = [seq, filters, bias, id, To, F, w, d](Graph& g) {
        const Tensor& dY = g.grad(id);
        const Tensor& S = g.val(seq);
        const Tensor& K = g.val(filters);
        if (g.requires_grad(seq)) {
            Tensor& dS = g.grad(seq);
            for (int t = 0; t < To; ++t)
                for (int f = 0; f < F; ++f) {
                    const double dy = dY.at(t, f);
                    if (dy == 0.0) continue;
                    for (int i = 0; i < w; ++i)
                        for (int c = 0; c < d; ++c) dS.at(t + i, c) += dy * K.at(i, c, f);
                }
        }
        if (g.requires_grad(filters)) {
            Tensor& dK = g.grad(filters);
            for (int t = 0; t < To; ++t)
                for (int f = 0; f < F; ++f) {
                    const double dy = dY.at(t, f);
                    if (dy == 0.0) continue;
                    for (int i = 0; i < w; ++i)
                        for (int c = 0; c < d; ++c) dK.at(i, c, f) += dy * S.at(t + i, c);
                }
        }
        if (g.requires_grad(bias)) {
            Tensor& dB = g.grad(bias);
            for (int t = 0; t < To; ++t)
                for (int f = 0; f < F; ++f) dB.at(f) += dY.at(t, f);
        }
    };
    return id;
}

NodeId Graph::max_over_time(NodeId x) {
    const Tensor& X = val(x);
    if (X.rank() != 2 || X.dim(0) < 1)
        throw std::invalid_argument("max_over_time: expected non-empty [T,F], got " +
                                    shape_str(X.shape));
    const int T = X.dim(0), F = X.dim(1);
    Tensor y({F});
    std::vector<int> arg(static_cast<std::size_t>(F), 0);
    for (int f = 0; f < F; ++f) {
        double best = X.at(0, f);
        int bi = 0;
        for (int t = 1; t < T; ++t)
            if (X.at(t, f) > best) {  // strict: ties stay at the lowest index
                best = X.at(t, f);
                bi = t;
            }
        y.at(f) = best;
        arg[static_cast<std::size_t>(f)] = bi;
    }
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id, F, arg](Graph& g) {
        if (!g.requires_grad(x)) return;
        const Tensor& dy = g.grad(id);
        Tensor& dX = g.grad(x);
        for (int f = 0; f < F; ++f) dX.at(arg[static_cast<std::size_t>(f)], f) += dy.at(f);
    };
    return id;
}

NodeId Graph::activation(NodeId x, Act kind) {
    const Tensor& X = val(x);
    Tensor y = X;
    switch (kind) {
        case Act::Relu:
            for (double& e : y.v) e = e > 0.0 ? e : 0.0;
            break;
        case Act::Tanh:
            for (double& e : y.v) e = std::tanh(e);
            break;
        case Act::Sigmoid:
            for (double& e : y.v) e = 1.0 / (1.0 + std::exp(-e));
            break;
    }
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id, kind](Graph& g) {
        if (!g.requires_grad(x)) return;
        const Tensor& Y = g.val(id);
        const Tensor& dy = g.grad(id);
        Tensor& dX = g.grad(x);
        const Tensor& X = g.val(x);
        for (int i = 0; i < Y.numel(); ++i) {
            double d = 0.0;
            switch (kind) {
                case Act::Relu:
                    d = X.at(i) > 0.0 ? 1.0 : 0.0;  // subgradient at 0 is 0
                    break;
                case Act::Tanh:
                    d = 1.0 - Y.at(i) * Y.at(i);
                    break;
                case Act::Sigmoid:
                    d = Y.at(i) * (1.0 - Y.at(i));
                    break;
            }
            dX.at(i) += d * dy.at(i);
        }
    };
    return id;
}

NodeId Graph::softmax_masked(NodeId scores, const std::vector<char>& mask) {
    const Tensor& S = val(scores);
    if (S.rank() != 1 || static_cast<std::size_t>(S.numel()) != mask.size())
        throw std::invalid_argument("softmax_masked: scores/mask length mismatch");
    const int n = S.numel();
    bool any = false;
    double mx = 0.0;
    for (int i = 0; i < n; ++i)
        if (mask[static_cast<std::size_t>(i)]) {
            mx = any ? std::max(mx, S.at(i)) : S.at(i);
            any = true;
        }
    if (!any) throw std::invalid_argument("softmax_masked: all positions masked");
    Tensor y({n});
    double z = 0.0;
    for (int i = 0; i < n; ++i)
        if (mask[static_cast<std::size_t>(i)]) {
            y.at(i) = std::exp(S.at(i) - mx);
            z += y.at(i);
        }
    for (int i = 0; i < n; ++i)
        if (mask[static_cast<std::size_t>(i)]) y.at(i) /= z;
    bool rg = requires_grad(scores);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [scores, id, mask, n](Graph& g) {
        if (!g.requires_grad(scores)) return;
        const Tensor& Y = g.val(id);
        const Tensor& dy = g.grad(id);
        Tensor& dS = g.grad(scores);
        double dot = 0.0;
        for (int i = 0; i < n; ++i)
            if (mask[static_cast<std::size_t>(i)]) dot += dy.at(i) * Y.at(i);
        for (int i = 0; i < n; ++i)
            if (mask[static_cast<std::size_t>(i)]) dS.at(i) += Y.at(i) * (dy.at(i) - dot);
    };
    return id;
}

NodeId Graph::concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty part list");
    int total = 0;
    bool rg = false;
    for (NodeId p : parts) {
        if (val(p).rank() != 1) throw std::invalid_argument("concat: parts must be vectors");
        total += val(p).numel();
        rg = rg || requires_grad(p);
    }
    Tensor y({total});
    int off = 0;
    for (NodeId p : parts) {
        const Tensor& P = val(p);
        std::copy(P.v.begin(), P.v.end(), y.v.begin() + off);
        off += P.numel();
    }
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [parts, id](Graph& g) {
        const Tensor& dy = g.grad(id);
        int off = 0;
        for (NodeId p : parts) {
            const int n = g.val(p).numel();
            if (g.requires_grad(p)) {
                Tensor& dP = g.grad(p);
                for (int i = 0; i < n; ++i) dP.at(i) += dy.at(off + i);
            }
            off += n;
        }
    };
    return id;
}

NodeId Graph::slice(NodeId x, int start, int len) {
    const Tensor& X = val(x);
    if (X.rank() != 1 || start < 0 || len <= 0 || start + len > X.numel())
        throw std::invalid_argument("slice: out of range");
    Tensor y({len});
    for (int i = 0; i < len; ++i) y.at(i) = X.at(start + i);
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id, start, len](Graph& g) {
        if (!g.requires_grad(x)) return;
        const Tensor& dy = g.grad(id);
        Tensor& dX = g.grad(x);
        for (int i = 0; i < len; ++i) dX.at(start + i) += dy.at(i);
    };
    return id;
}

NodeId Graph::row(NodeId x, int r) {
    const Tensor& X = val(x);
    if (X.rank() != 2 || r < 0 || r >= X.dim(0)) throw std::invalid_argument("row: out of range");
    const int d = X.dim(1);
    Tensor y({d});
    for (int c = 0; c < d; ++c) y.at(c) = X.at(r, c);
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id, r, d](Graph& g) {
        if (!g.requires_grad(x)) return;
        const Tensor& dy = g.grad(id);
        Tensor& dX = g.grad(x);
        for (int c = 0; c < d; ++c) dX.at(r, c) += dy.at(c);
    };
    return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("add: shape mismatch " + shape_str(A.shape) + " vs " +
                                    shape_str(B.shape));
    Tensor y = A;
    for (int i = 0; i < y.numel(); ++i) y.at(i) += B.at(i);
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [a, b, id](Graph& g) {
        const Tensor& dy = g.grad(id);
        if (g.requires_grad(a)) {
            Tensor& dA = g.grad(a);
            for (int i = 0; i < dy.numel(); ++i) dA.at(i) += dy.at(i);
        }
        if (g.requires_grad(b)) {
            Tensor& dB = g.grad(b);
            for (int i = 0; i < dy.numel(); ++i) dB.at(i) += dy.at(i);
        }
    };
    return id;
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("mul: shape mismatch " + shape_str(A.shape) + " vs " +
                                    shape_str(B.shape));
    Tensor y = A;
    for (int i = 0; i < y.numel(); ++i) y.at(i) *= B.at(i);
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [a, b, id](Graph& g) {
        const Tensor& dy = g.grad(id);
        if (g.requires_grad(a)) {
            Tensor& dA = g.grad(a);
            const Tensor& B = g.val(b);
            for (int i = 0; i < dy.numel(); ++i) dA.at(i) += dy.at(i) * B.at(i);
        }
        if (g.requires_grad(b)) {
            Tensor& dB = g.grad(b);
            const Tensor& A = g.val(a);
            for (int i = 0; i < dy.numel(); ++i) dB.at(i) += dy.at(i) * A.at(i);
        }
    };
    return id;
}

NodeId Graph::scale(NodeId x, double c) {
    Tensor y = val(x);
    for (double& e : y.v) e *= c;
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id, c](Graph& g) {
        if (!g.requires_grad(x)) return;
        const Tensor& dy = g.grad(id);
        Tensor& dX = g.grad(x);
        for (int i = 0; i < dy.numel(); ++i) dX.at(i) += c * dy.at(i);
    };
    return id;
}

NodeId Graph::sum(NodeId x) {
    const Tensor& X = val(x);
    Tensor y({1});
    for (double e : X.v) y.at(0) += e;
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id](Graph& g) {
        if (!g.requires_grad(x)) return;
        const double dy = g.grad(id).at(0);
        Tensor& dX = g.grad(x);
        for (int i = 0; i < dX.numel(); ++i) dX.at(i) += dy;
    };
    return id;
}

NodeId Graph::dropout(NodeId x, double rate, Mode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (mode == Mode::Infer || rate == 0.0) {
        // identity; still a node so gradients pass through unchanged
        return scale(x, 1.0);
    }
    const Tensor& X = val(x);
    const double keep = 1.0 - rate;
    std::vector<double> m(static_cast<std::size_t>(X.numel()));
    for (double& e : m) e = rng.uniform() < keep ? 1.0 / keep : 0.0;
    Tensor y = X;
    for (int i = 0; i < y.numel(); ++i) y.at(i) *= m[static_cast<std::size_t>(i)];
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id, m](Graph& g) {
        if (!g.requires_grad(x)) return;
        const Tensor& dy = g.grad(id);
        Tensor& dX = g.grad(x);
        for (int i = 0; i < dy.numel(); ++i) dX.at(i) += dy.at(i) * m[static_cast<std::size_t>(i)];
    };
    return id;
}

NodeId Graph::batchnorm(NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean,
                        Tensor& running_var, Mode mode, double momentum, double eps) {
    const Tensor& X = val(x);
    if (X.rank() != 2) throw std::invalid_argument("batchnorm: expected [B,F]");
    const int B = X.dim(0), F = X.dim(1);
    if (val(gamma).numel() != F || val(beta).numel() != F || running_mean.numel() != F ||
        running_var.numel() != F)
        throw std::invalid_argument("batchnorm: feature-size mismatch");
    if (mode == Mode::Train && B < 2)
        throw std::invalid_argument("batchnorm: train mode needs batch size >= 2, got " +
                                    std::to_string(B));

    const Tensor& G = val(gamma);
    const Tensor& Bt = val(beta);
    Tensor y({B, F});
    std::vector<double> mean(static_cast<std::size_t>(F)), var(static_cast<std::size_t>(F));
    if (mode == Mode::Train) {
        for (int f = 0; f < F; ++f) {
            double mu = 0.0;
            for (int b = 0; b < B; ++b) mu += X.at(b, f);
            mu /= B;
            double s2 = 0.0;
            for (int b = 0; b < B; ++b) {
                const double d = X.at(b, f) - mu;
                s2 += d * d;
            }
            s2 /= B;  // biased batch variance, also used for the running estimate
            mean[static_cast<std::size_t>(f)] = mu;
            var[static_cast<std::size_t>(f)] = s2;
            running_mean.at(f) = momentum * running_mean.at(f) + (1.0 - momentum) * mu;
            running_var.at(f) = momentum * running_var.at(f) + (1.0 - momentum) * s2;
        }
    } else {
        for (int f = 0; f < F; ++f) {
            mean[static_cast<std::size_t>(f)] = running_mean.at(f);
            var[static_cast<std::size_t>(f)] = running_var.at(f);
        }
    }
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) {
            const double xhat = (X.at(b, f) - mean[static_cast<std::size_t>(f)]) /
                                std::sqrt(var[static_cast<std::size_t>(f)] + eps);
            y.at(b, f) = G.at(f) * xhat + Bt.at(f);
        }
    bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, gamma, beta, id, B, F, mean, var, mode, eps](Graph& g) {
        const Tensor& dy = g.grad(id);
        const Tensor& X = g.val(x);
        const Tensor& G = g.val(gamma);
        for (int f = 0; f < F; ++f) {
            const double mu = mean[static_cast<std::size_t>(f)];
            const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(f)] + eps);
            double dgamma = 0.0, dbeta = 0.0;
            for (int b = 0; b < B; ++b) {
                const double xhat = (X.at(b, f) - mu) * inv;
                dgamma += dy.at(b, f) * xhat;
                dbeta += dy.at(b, f);
            }
            if (g.requires_grad(gamma)) g.grad(gamma).at(f) += dgamma;
            if (g.requires_grad(beta)) g.grad(beta).at(f) += dbeta;
            if (!g.requires_grad(x)) continue;
            Tensor& dX = g.grad(x);
            if (mode == Mode::Infer) {
                for (int b = 0; b < B; ++b) dX.at(b, f) += dy.at(b, f) * G.at(f) * inv;
            } else {
                // batch statistics depend on x; full train-mode pullback
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double dxhat = dy.at(b, f) * G.at(f);
                    const double xhat = (X.at(b, f) - mu) * inv;
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                for (int b = 0; b < B; ++b) {
                    const double dxhat = dy.at(b, f) * G.at(f);
                    const double xhat = (X.at(b, f) - mu) * inv;
                    dX.at(b, f) +=
                        inv * (dxhat - sum_dxhat / B - xhat * sum_dxhat_xhat / B);
                }
            }
        }
    };
    return id;
}

NodeId Graph::stack_rows(const std::vector<NodeId>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty row list");
    const int F = val(rows[0]).numel();
    bool rg = false;
    for (NodeId r : rows) {
        if (val(r).rank() != 1 || val(r).numel() != F)
            throw std::invalid_argument("stack_rows: rows must be equal-length vectors");
        rg = rg || requires_grad(r);
    }
    const int B = static_cast<int>(rows.size());
    Tensor y({B, F});
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) y.at(b, f) = val(rows[static_cast<std::size_t>(b)]).at(f);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [rows, id, F](Graph& g) {
        const Tensor& dy = g.grad(id);
        for (std::size_t b = 0; b < rows.size(); ++b) {
            if (!g.requires_grad(rows[b])) continue;
            Tensor& dR = g.grad(rows[b]);
            for (int f = 0; f < F; ++f) dR.at(f) += dy.at(static_cast<int>(b), f);
        }
    };
    return id;
}

NodeId Graph::linear_rows(NodeId x, NodeId w, NodeId b) {
    const Tensor& X = val(x);
    const Tensor& W = val(w);
    const Tensor& Bv = val(b);
    if (X.rank() != 2 || W.rank() != 2 || Bv.rank() != 1 || X.dim(1) != W.dim(1) ||
        W.dim(0) != Bv.dim(0))
        throw std::invalid_argument("linear_rows: incompatible shapes " + shape_str(X.shape) +
                                    ", " + shape_str(W.shape) + ", " + shape_str(Bv.shape));
    const int B = X.dim(0), F = X.dim(1), O = W.dim(0);
    Tensor y({B, O});
    for (int i = 0; i < B; ++i)
        for (int o = 0; o < O; ++o) {
            double acc = Bv.at(o);
            for (int f = 0; f < F; ++f) acc += X.at(i, f) * W.at(o, f);
            y.at(i, o) = acc;
        }
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, w, b, id, B, F, O](Graph& g) {
        const Tensor& dy = g.grad(id);
        if (g.requires_grad(x)) {
            Tensor& dX = g.grad(x);
            const Tensor& W = g.val(w);
            for (int i = 0; i < B; ++i)
                for (int o = 0; o < O; ++o) {
                    const double d = dy.at(i, o);
                    if (d == 0.0) continue;
                    for (int f = 0; f < F; ++f) dX.at(i, f) += d * W.at(o, f);
                }
        }
        if (g.requires_grad(w)) {
            Tensor& dW = g.grad(w);
            const Tensor& X = g.val(x);
            for (int i = 0; i < B; ++i)
                for (int o = 0; o < O; ++o) {
                    const double d = dy.at(i, o);
                    if (d == 0.0) continue;
                    for (int f = 0; f < F; ++f) dW.at(o, f) += d * X.at(i, f);
                }
        }
        if (g.requires_grad(b)) {
            Tensor& dB = g.grad(b);
            for (int i = 0; i < B; ++i)
                for (int o = 0; o < O; ++o) dB.at(o) += dy.at(i, o);
        }
    };
    return id;
}

NodeId Graph::softmax_rows(NodeId x) {
    const Tensor& X = val(x);
    if (X.rank() != 2) throw std::invalid_argument("softmax_rows: expected [B,C]");
    const int B = X.dim(0), C = X.dim(1);
    Tensor y({B, C});
    for (int b = 0; b < B; ++b) {
        double mx = X.at(b, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, X.at(b, c));
        double z = 0.0;
        for (int c = 0; c < C; ++c) {
            y.at(b, c) = std::exp(X.at(b, c) - mx);
            z += y.at(b, c);
        }
        for (int c = 0; c < C; ++c) y.at(b, c) /= z;
    }
    bool rg = requires_grad(x);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [x, id, B, C](Graph& g) {
        if (!g.requires_grad(x)) return;
        const Tensor& Y = g.val(id);
        const Tensor& dy = g.grad(id);
        Tensor& dX = g.grad(x);
        for (int b = 0; b < B; ++b) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += dy.at(b, c) * Y.at(b, c);
            for (int c = 0; c < C; ++c) dX.at(b, c) += Y.at(b, c) * (dy.at(b, c) - dot);
        }
    };
    return id;
}

NodeId Graph::attn_pool(NodeId alpha, NodeId h) {
    const Tensor& A = val(alpha);
    const Tensor& H = val(h);
    if (A.rank() != 1 || H.rank() != 2 || A.numel() != H.dim(0))
        throw std::invalid_argument("attn_pool: incompatible shapes " + shape_str(A.shape) +
                                    ", " + shape_str(H.shape));
    const int T = H.dim(0), K = H.dim(1);
    Tensor r({K});
    for (int t = 0; t < T; ++t) {
        const double a = A.at(t);
        if (a == 0.0) continue;
        for (int k = 0; k < K; ++k) r.at(k) += a * H.at(t, k);
    }
    bool rg = requires_grad(alpha) || requires_grad(h);
    NodeId id = push(std::move(r), rg, nullptr);
    nodes_[id].back = [alpha, h, id, T, K](Graph& g) {
        const Tensor& dr = g.grad(id);
        if (g.requires_grad(alpha)) {
            Tensor& dA = g.grad(alpha);
            const Tensor& H = g.val(h);
            for (int t = 0; t < T; ++t)
                for (int k = 0; k < K; ++k) dA.at(t) += dr.at(k) * H.at(t, k);
        }
        if (g.requires_grad(h)) {
            Tensor& dH = g.grad(h);
            const Tensor& A = g.val(alpha);
            for (int t = 0; t < T; ++t) {
                const double a = A.at(t);
                for (int k = 0; k < K; ++k) dH.at(t, k) += a * dr.at(k);
            }
        }
    };
    return id;
}

NodeId Graph::lookup(NodeId table, const std::vector<int>& ids) {
    const Tensor& Tb = val(table);
    if (Tb.rank() != 2) throw std::invalid_argument("lookup: table must be [V+1,d]");
    const int V1 = Tb.dim(0), d = Tb.dim(1);
    for (int idx : ids)
        if (idx < 0 || idx >= V1)
            throw std::out_of_range("lookup: token id " + std::to_string(idx) +
                                    " outside table of " + std::to_string(V1) + " rows");
    const int T = static_cast<int>(ids.size());
    Tensor y({T, d});
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < d; ++c) y.at(t, c) = Tb.at(ids[static_cast<std::size_t>(t)], c);
    bool rg = requires_grad(table);
    NodeId id = push(std::move(y), rg, nullptr);
    nodes_[id].back = [table, id, ids, d](Graph& g) {
        if (!g.requires_grad(table)) return;
        const Tensor& dy = g.grad(id);
        Tensor& dT = g.grad(table);
        for (std::size_t t = 0; t < ids.size(); ++t) {
            if (ids[t] == 0) continue;  // padding row stays untrained
            for (int c = 0; c < d; ++c) dT.at(ids[t], c) += dy.at(static_cast<int>(t), c);
        }
    };
    return id;
}

NodeId Graph::cross_entropy(NodeId probs, const std::vector<int>& labels) {
    const Tensor& P = val(probs);
    if (P.rank() != 2 || P.dim(0) != static_cast<int>(labels.size()))
        throw std::invalid_argument("cross_entropy: probs/labels size mismatch");
    const int B = P.dim(0), C = P.dim(1);
    for (int y : labels)
        if (y < 0 || y >= C)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                        " outside [0," + std::to_string(C) + ")");
    constexpr double kClamp = 1e-12;
    Tensor loss({1});
    for (int b = 0; b < B; ++b)
        loss.at(0) -= std::log(std::max(P.at(b, labels[static_cast<std::size_t>(b)]), kClamp));
    loss.at(0) /= B;
    bool rg = requires_grad(probs);
    NodeId id = push(std::move(loss), rg, nullptr);
    nodes_[id].back = [probs, id, labels, B](Graph& g) {
        if (!g.requires_grad(probs)) return;
        const double dl = g.grad(id).at(0);
        const Tensor& P = g.val(probs);
        Tensor& dP = g.grad(probs);
        for (int b = 0; b < B; ++b) {
            const int y = labels[static_cast<std::size_t>(b)];
            const double p = P.at(b, y);
            if (p > kClamp) dP.at(b, y) -= dl / (p * B);
        }
    };
    return id;
}

NodeId Graph::softmax_xent(NodeId logits, const std::vector<int>& labels) {
    const Tensor& L = val(logits);
    if (L.rank() != 2 || L.dim(0) != static_cast<int>(labels.size()))
        throw std::invalid_argument("softmax_xent: logits/labels size mismatch");
    const int B = L.dim(0), C = L.dim(1);
    for (int y : labels)
        if (y < 0 || y >= C)
            throw std::invalid_argument("softmax_xent: label " + std::to_string(y) +
                                        " outside [0," + std::to_string(C) + ")");
    Tensor loss({1});
    Tensor P({B, C});  // kept for the pullback
    for (int b = 0; b < B; ++b) {
        double mx = L.at(b, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, L.at(b, c));
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(L.at(b, c) - mx);
        const double lse = mx + std::log(z);
        loss.at(0) += lse - L.at(b, labels[static_cast<std::size_t>(b)]);
        for (int c = 0; c < C; ++c) P.at(b, c) = std::exp(L.at(b, c) - lse);
    }
    loss.at(0) /= B;
    bool rg = requires_grad(logits);
    NodeId id = push(std::move(loss), rg, nullptr);
    nodes_[id].back = [logits, id, labels, B, C, P](Graph& g) {
        if (!g.requires_grad(logits)) return;
        const double dl = g.grad(id).at(0);
        Tensor& dL = g.grad(logits);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const double ind = c == labels[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
                dL.at(b, c) += dl * (P.at(b, c) - ind) / B;
            }
    };
    return id;
}

void Graph::backward(NodeId loss_node) {
    if (loss_node >= nodes_.size()) throw std::out_of_range("backward: bad node id");
    if (val(loss_node).numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(val(loss_node).shape));
    // Intermediate gradients are pass-local; only leaves and external parameter
    // sinks accumulate across repeated backward calls.
    for (std::size_t i = 0; i <= loss_node; ++i) {
        Node& n = nodes_[i];
        if (n.back) n.own_grad.fill(0.0);
    }
    grad(loss_node).at(0) += 1.0;
    for (std::size_t i = loss_node + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back && n.requires_grad) n.back(*this);
    }
}

}  // namespace ea
