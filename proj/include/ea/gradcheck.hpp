#pragma once

#include "ea/model.hpp"

namespace ea {

// Tiny-dimension configuration used for whole-model gradient checks:
// maxlen 6, embed 4, hidden 3, attention 3, 2 filters of widths 2 and 3,
// dense hidden 8, dropout off.
ModelConfig tiny_config(Variant v, std::uint64_t seed = 7);

// Builds a tiny model plus a 3-document synthetic batch and returns the max
// relative error of analytic vs central-finite-difference gradients over all
// parameters (train-mode batch norm, dropout disabled).
double model_gradcheck(Variant v, std::uint64_t seed = 7);

}  // namespace ea
