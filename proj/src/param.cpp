#include "muonlab/param.hpp"

#include "muonlab/errors.hpp"

namespace muonlab {

BlockFamily block_family_from_string(const std::string& s) {
    if (s == "qkv") return BlockFamily::QKV;
    if (s == "out_proj") return BlockFamily::OutProj;
    if (s == "mlp_up") return BlockFamily::MlpUp;
    if (s == "mlp_down") return BlockFamily::MlpDown;
    if (s == "patch_embed") return BlockFamily::PatchEmbed;
    if (s == "head") return BlockFamily::Head;
    if (s == "norm") return BlockFamily::Norm;
    if (s == "bias") return BlockFamily::Bias;
    if (s == "pos_embed") return BlockFamily::PosEmbed;
    if (s == "cls_token") return BlockFamily::ClsToken;
    if (s == "other") return BlockFamily::Other;
    throw ConfigError("unknown block family: " + s);
}

std::string to_string(BlockFamily family) {
    switch (family) {
        case BlockFamily::QKV: return "qkv";
        case BlockFamily::OutProj: return "out_proj";
        case BlockFamily::MlpUp: return "mlp_up";
        case BlockFamily::MlpDown: return "mlp_down";
        case BlockFamily::PatchEmbed: return "patch_embed";
        case BlockFamily::Head: return "head";
        case BlockFamily::Norm: return "norm";
        case BlockFamily::Bias: return "bias";
        case BlockFamily::PosEmbed: return "pos_embed";
        case BlockFamily::ClsToken: return "cls_token";
        case BlockFamily::Other: return "other";
    }
    return "?";
}

bool is_matrix_family(BlockFamily family) {
    return family == BlockFamily::QKV || family == BlockFamily::OutProj ||
           family == BlockFamily::MlpUp || family == BlockFamily::MlpDown;
}

}  // namespace muonlab
