#pragma once

// Shared helpers for the test binaries: random tensor filling and an
// op-level finite-difference harness built on the library checker.

#include <functional>
#include <string>
#include <vector>

#include "ea/graph.hpp"
#include "ea/params.hpp"
#include "ea/rng.hpp"
#include "ea/tensor.hpp"

namespace testutil {

inline ea::Tensor random_tensor(std::vector<int> shape, ea::Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
    ea::Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

// Checks one op in isolation: `build` receives a graph plus nodes bound to the
// named inputs (in map order) and must return the scalar loss node. Returns
// the max relative error between analytic and central-difference gradients.
inline double op_gradcheck(
    const std::vector<std::pair<std::string, ea::Tensor>>& inputs,
    const std::function<ea::NodeId(ea::Graph&, std::vector<ea::NodeId>&)>& build) {
    ea::ParameterSet ps;
    for (const auto& [name, t] : inputs) ps.add(name, t);
    auto f = [&](ea::ParameterSet& p) {
        ea::Graph g;
        std::vector<ea::NodeId> nodes;
        for (const auto& [name, t] : inputs) {
            ea::Param& prm = p.at(name);
            nodes.push_back(g.param(prm.value, prm.grad));
        }
        ea::NodeId loss = build(g, nodes);
        g.backward(loss);
        return g.val(loss).at(0);
    };
    return ea::finite_diff_check(f, ps);
}

}  // namespace testutil
