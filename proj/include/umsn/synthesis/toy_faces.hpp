#pragma once

#include <cstdint>
#include <string>

#include "umsn/core/tensor.hpp"

namespace umsn::synthesis {

/// Procedurally drawn face-like test card: colored geometric regions for
/// background / skin / inner parts / hair with matching 11-label parsing map.
/// Used as a stand-in corpus for demos and desk-scale training runs.
struct ToyFace {
    Tensor image;    // {3,H,W} in [0,1]
    Tensor labels;   // {H,W} values 0..10
};

ToyFace make_toy_face(std::uint64_t seed, int height, int width);

/// Writes `count` faces as <dir>/clean/face%03d.png + <dir>/labels/face%03d.png.
void write_toy_corpus(const std::string& dir, int count, int height, int width, std::uint64_t seed);

}  // namespace umsn::synthesis
