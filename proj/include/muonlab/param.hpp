#pragma once

#include <string>

#include "muonlab/matrix.hpp"

namespace muonlab {

enum class BlockFamily {
    QKV,
    OutProj,
    MlpUp,
    MlpDown,
    PatchEmbed,
    Head,
    Norm,
    Bias,
    PosEmbed,
    ClsToken,
    Other,
};

BlockFamily block_family_from_string(const std::string& s);
std::string to_string(BlockFamily family);

/// True for the four transformer matrix families the spectral analysis is
/// organized around.
bool is_matrix_family(BlockFamily family);

/// A named trainable tensor. 1-D tensors are carried as 1 x n matrices; the
/// `matrix_shaped` flag records the logical rank.
struct ParamBlock {
    std::string name;
    BlockFamily family = BlockFamily::Other;
    int depth = 0;
    bool matrix_shaped = false;  // logically 2-D (eligible for Muon routing)
    Matrix tensor;
    Matrix grad;
};

}  // namespace muonlab
