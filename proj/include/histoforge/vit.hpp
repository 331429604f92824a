#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "histoforge/augment.hpp"
#include "histoforge/tensor_file.hpp"

namespace histoforge {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;

/// Encoder hyperparameters. Defaults are ViT-Base; toy configurations shrink
/// embed_dim / n_blocks / n_heads while keeping the structural constraints
/// n_patches = (image_size / patch_size)^2, embed_dim = n_heads * head_dim,
/// mlp_dim = 4 * embed_dim.
struct VitConfig {
    int image_size = 224;
    int patch_size = 16;
    int embed_dim = 768;
    int n_blocks = 12;
    int n_heads = 12;
    int mlp_dim = 3072;
    bool use_class_token = true;
    float layernorm_eps = 1e-6f;

    int n_patches() const {
        int g = image_size / patch_size;
        return g * g;
    }
    int head_dim() const { return embed_dim / n_heads; }
    int n_tokens() const { return n_patches() + (use_class_token ? 1 : 0); }

    void validate() const;
};

struct BlockWeights {
    VectorF ln1_g, ln1_b;
    MatrixF qkv_w;  // D x 3D, output laid out [Q_all | K_all | V_all]
    VectorF qkv_b;
    MatrixF out_w;  // D x D
    VectorF out_b;
    VectorF ln2_g, ln2_b;
    MatrixF mlp1_w;  // D x mlp_dim
    VectorF mlp1_b;
    MatrixF mlp2_w;  // mlp_dim x D
    VectorF mlp2_b;
};

struct VitWeights {
    VitConfig config;
    MatrixF patch_proj_w;  // D x 3*p*p
    VectorF patch_proj_b;
    VectorF cls;        // D
    MatrixF pos;        // n_tokens x D
    std::vector<BlockWeights> blocks;
    VectorF final_ln_g, final_ln_b;
};

/// Assemble VitWeights from a container, shape-checking every tensor against
/// `config`; a missing or mis-shaped tensor raises an error naming it.
VitWeights load_vit_weights(const std::filesystem::path& path, const VitConfig& config);
/// As above but with the config taken from the container's __meta__ entries.
VitWeights load_vit_weights(const std::filesystem::path& path);
void save_vit_weights(const VitWeights& weights, const std::filesystem::path& path);

/// Deterministic small-scale random weights for smoke runs and tests.
VitWeights random_vit_weights(const VitConfig& config, std::uint64_t seed);

// Encoder operations. Token matrices are N x D, one row per token.

MatrixF layer_norm(const MatrixF& x, const VectorF& gamma, const VectorF& beta, float eps);

/// softmax(Q K^T / sqrt(D_k)) V with row-wise, max-subtracted softmax.
MatrixF sdpa(const MatrixF& q, const MatrixF& k, const MatrixF& v);

MatrixF multi_head_attention(const MatrixF& tokens, const BlockWeights& bw, const VitConfig& cfg);

float gelu(float x);

/// Pre-norm block: R1 = x + MHA(LN1(x)); out = R1 + MLP(LN2(R1)).
MatrixF encoder_block(const MatrixF& tokens, const BlockWeights& bw, const VitConfig& cfg);

/// Patches scanned left-to-right, top-to-bottom, flattened channel-major
/// (c, then y, then x within the patch), projected to D; class token
/// prepended, positional embeddings added.
MatrixF patch_embed(const NormalizedTensor& input, const VitWeights& w);

/// Full forward pass; returns the class-token row after the final layer norm
/// (or the first patch token when the class token is disabled).
VectorF encode(const NormalizedTensor& input, const VitWeights& w);

}  // namespace histoforge
