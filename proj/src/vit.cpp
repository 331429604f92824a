#include "histoforge/vit.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "histoforge/rng.hpp"

namespace histoforge {

void VitConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        throw std::invalid_argument("image_size must be a positive multiple of patch_size");
    if (embed_dim <= 0 || n_blocks <= 0 || n_heads <= 0)
        throw std::invalid_argument("embed_dim, n_blocks and n_heads must be positive");
    if (embed_dim % n_heads != 0)
        throw std::invalid_argument("embed_dim must be divisible by n_heads");
    if (mlp_dim != 4 * embed_dim)
        throw std::invalid_argument("mlp_dim must equal 4 * embed_dim");
}

namespace {

MatrixF as_matrix(const NamedTensor& t, int rows, int cols) {
    return Eigen::Map<const MatrixF>(t.values.data(), rows, cols);
}

VectorF as_vector(const NamedTensor& t, int n) {
    return Eigen::Map<const VectorF>(t.values.data(), n);
}

std::vector<float> flat(const MatrixF& m) {
    return {m.data(), m.data() + m.size()};
}
std::vector<float> flat(const VectorF& v) {
    return {v.data(), v.data() + v.size()};
}

std::string block_name(int i, const char* suffix) {
    return "block." + std::to_string(i) + "." + suffix;
}

}  // namespace

VitWeights load_vit_weights(const std::filesystem::path& path, const VitConfig& config) {
    config.validate();
    TensorFile file = TensorFile::read(path);

    const int d = config.embed_dim;
    const int p = config.patch_size;
    const int nt = config.n_tokens();
    const int mlp = config.mlp_dim;

    std::set<std::string> expected = {"patch.proj.w", "patch.proj.b", "pos", "final_ln.g",
                                      "final_ln.b"};
    if (config.use_class_token) expected.insert("cls");
    for (int i = 0; i < config.n_blocks; ++i)
        for (const char* s : {"ln1.g", "ln1.b", "qkv.w", "qkv.b", "out.w", "out.b", "ln2.g",
                              "ln2.b", "mlp1.w", "mlp1.b", "mlp2.w", "mlp2.b"})
            expected.insert(block_name(i, s));
    for (const auto& [name, _] : file.tensors)
        if (!expected.count(name)) throw TensorFileError("unknown tensor name: " + name);

    VitWeights w;
    w.config = config;
    w.patch_proj_w = as_matrix(file.require("patch.proj.w", {d, 3ll * p * p}), d, 3 * p * p);
    w.patch_proj_b = as_vector(file.require("patch.proj.b", {d}), d);
    if (config.use_class_token) w.cls = as_vector(file.require("cls", {d}), d);
    w.pos = as_matrix(file.require("pos", {nt, d}), nt, d);
    w.blocks.resize(config.n_blocks);
    for (int i = 0; i < config.n_blocks; ++i) {
        BlockWeights& b = w.blocks[i];
        b.ln1_g = as_vector(file.require(block_name(i, "ln1.g"), {d}), d);
        b.ln1_b = as_vector(file.require(block_name(i, "ln1.b"), {d}), d);
        b.qkv_w = as_matrix(file.require(block_name(i, "qkv.w"), {d, 3ll * d}), d, 3 * d);
        b.qkv_b = as_vector(file.require(block_name(i, "qkv.b"), {3ll * d}), 3 * d);
        b.out_w = as_matrix(file.require(block_name(i, "out.w"), {d, d}), d, d);
        b.out_b = as_vector(file.require(block_name(i, "out.b"), {d}), d);
        b.ln2_g = as_vector(file.require(block_name(i, "ln2.g"), {d}), d);
        b.ln2_b = as_vector(file.require(block_name(i, "ln2.b"), {d}), d);
        b.mlp1_w = as_matrix(file.require(block_name(i, "mlp1.w"), {d, mlp}), d, mlp);
        b.mlp1_b = as_vector(file.require(block_name(i, "mlp1.b"), {mlp}), mlp);
        b.mlp2_w = as_matrix(file.require(block_name(i, "mlp2.w"), {mlp, d}), mlp, d);
        b.mlp2_b = as_vector(file.require(block_name(i, "mlp2.b"), {d}), d);
    }
    w.final_ln_g = as_vector(file.require("final_ln.g", {d}), d);
    w.final_ln_b = as_vector(file.require("final_ln.b", {d}), d);
    return w;
}

VitWeights load_vit_weights(const std::filesystem::path& path) {
    TensorFile file = TensorFile::read(path);
    VitConfig config;
    auto get_int = [&](const char* key, int fallback) {
        auto it = file.meta.find(key);
        return it == file.meta.end() ? fallback : std::stoi(it->second);
    };
    config.image_size = get_int("image_size", config.image_size);
    config.patch_size = get_int("patch_size", config.patch_size);
    config.embed_dim = get_int("embed_dim", config.embed_dim);
    config.n_blocks = get_int("n_blocks", config.n_blocks);
    config.n_heads = get_int("n_heads", config.n_heads);
    config.mlp_dim = get_int("mlp_dim", config.mlp_dim);
    config.use_class_token = get_int("use_class_token", config.use_class_token ? 1 : 0) != 0;
    if (auto it = file.meta.find("layernorm_eps"); it != file.meta.end())
        config.layernorm_eps = std::stof(it->second);
    return load_vit_weights(path, config);
}

void save_vit_weights(const VitWeights& w, const std::filesystem::path& path) {
    const VitConfig& c = w.config;
    const int d = c.embed_dim;
    const int p = c.patch_size;
    TensorFile file;
    file.add("patch.proj.w", {d, 3ll * p * p}, flat(w.patch_proj_w));
    file.add("patch.proj.b", {d}, flat(w.patch_proj_b));
    if (c.use_class_token) file.add("cls", {d}, flat(w.cls));
    file.add("pos", {c.n_tokens(), d}, flat(w.pos));
    for (int i = 0; i < c.n_blocks; ++i) {
        const BlockWeights& b = w.blocks[i];
        file.add(block_name(i, "ln1.g"), {d}, flat(b.ln1_g));
        file.add(block_name(i, "ln1.b"), {d}, flat(b.ln1_b));
        file.add(block_name(i, "qkv.w"), {d, 3ll * d}, flat(b.qkv_w));
        file.add(block_name(i, "qkv.b"), {3ll * d}, flat(b.qkv_b));
        file.add(block_name(i, "out.w"), {d, d}, flat(b.out_w));
        file.add(block_name(i, "out.b"), {d}, flat(b.out_b));
        file.add(block_name(i, "ln2.g"), {d}, flat(b.ln2_g));
        file.add(block_name(i, "ln2.b"), {d}, flat(b.ln2_b));
        file.add(block_name(i, "mlp1.w"), {d, c.mlp_dim}, flat(b.mlp1_w));
        file.add(block_name(i, "mlp1.b"), {c.mlp_dim}, flat(b.mlp1_b));
        file.add(block_name(i, "mlp2.w"), {c.mlp_dim, d}, flat(b.mlp2_w));
        file.add(block_name(i, "mlp2.b"), {d}, flat(b.mlp2_b));
    }
    file.add("final_ln.g", {d}, flat(w.final_ln_g));
    file.add("final_ln.b", {d}, flat(w.final_ln_b));
    file.meta = {{"image_size", std::to_string(c.image_size)},
                 {"patch_size", std::to_string(c.patch_size)},
                 {"embed_dim", std::to_string(c.embed_dim)},
                 {"n_blocks", std::to_string(c.n_blocks)},
                 {"n_heads", std::to_string(c.n_heads)},
                 {"mlp_dim", std::to_string(c.mlp_dim)},
                 {"use_class_token", c.use_class_token ? "1" : "0"},
                 {"layernorm_eps", std::to_string(c.layernorm_eps)}};
    file.write(path);
}

VitWeights random_vit_weights(const VitConfig& config, std::uint64_t seed) {
    config.validate();
    RngStream rng = RngStream(seed).derive("vit-init");
    const int d = config.embed_dim;
    auto rand_mat = [&](int rows, int cols, float scale) {
        MatrixF m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                m(i, j) = static_cast<float>(rng.uniform(-scale, scale));
        return m;
    };
    auto rand_vec = [&](int n, float scale) {
        VectorF v(n);
        for (int i = 0; i < n; ++i) v(i) = static_cast<float>(rng.uniform(-scale, scale));
        return v;
    };

    VitWeights w;
    w.config = config;
    float s = 1.0f / std::sqrt(static_cast<float>(d));
    w.patch_proj_w = rand_mat(d, 3 * config.patch_size * config.patch_size,
                              1.0f / std::sqrt(3.0f * config.patch_size * config.patch_size));
    w.patch_proj_b = VectorF::Zero(d);
    if (config.use_class_token) w.cls = rand_vec(d, 0.02f);
    w.pos = rand_mat(config.n_tokens(), d, 0.02f);
    w.blocks.resize(config.n_blocks);
    for (auto& b : w.blocks) {
        b.ln1_g = VectorF::Ones(d);
        b.ln1_b = VectorF::Zero(d);
        b.qkv_w = rand_mat(d, 3 * d, s);
        b.qkv_b = VectorF::Zero(3 * d);
        b.out_w = rand_mat(d, d, s);
        b.out_b = VectorF::Zero(d);
        b.ln2_g = VectorF::Ones(d);
        b.ln2_b = VectorF::Zero(d);
        b.mlp1_w = rand_mat(d, config.mlp_dim, s);
        b.mlp1_b = VectorF::Zero(config.mlp_dim);
        b.mlp2_w = rand_mat(config.mlp_dim, d, 1.0f / std::sqrt(static_cast<float>(config.mlp_dim)));
        b.mlp2_b = VectorF::Zero(d);
    }
    w.final_ln_g = VectorF::Ones(d);
    w.final_ln_b = VectorF::Zero(d);
    return w;
}

MatrixF layer_norm(const MatrixF& x, const VectorF& gamma, const VectorF& beta, float eps) {
    MatrixF out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        float mean = x.row(i).mean();
        float var = (x.row(i).array() - mean).square().mean();
        float inv = 1.0f / std::sqrt(var + eps);
        out.row(i) = ((x.row(i).array() - mean) * inv) * gamma.transpose().array() +
                     beta.transpose().array();
    }
    return out;
}

MatrixF sdpa(const MatrixF& q, const MatrixF& k, const MatrixF& v) {
    const float scale = 1.0f / std::sqrt(static_cast<float>(k.cols()));
    MatrixF logits = (q * k.transpose()) * scale;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        float mx = logits.row(i).maxCoeff();
        Eigen::Array<float, 1, Eigen::Dynamic> e = (logits.row(i).array() - mx).exp();
        logits.row(i) = e / e.sum();
    }
    return logits * v;
}

MatrixF multi_head_attention(const MatrixF& tokens, const BlockWeights& bw,
                             const VitConfig& cfg) {
    const int d = cfg.embed_dim;
    const int dk = cfg.head_dim();
    MatrixF qkv = (tokens * bw.qkv_w).rowwise() + bw.qkv_b.transpose();
    MatrixF concat(tokens.rows(), d);
    for (int h = 0; h < cfg.n_heads; ++h) {
        MatrixF q = qkv.middleCols(h * dk, dk);
        MatrixF k = qkv.middleCols(d + h * dk, dk);
        MatrixF v = qkv.middleCols(2 * d + h * dk, dk);
        concat.middleCols(h * dk, dk) = sdpa(q, k, v);
    }
    return (concat * bw.out_w).rowwise() + bw.out_b.transpose();
}

float gelu(float x) {
    constexpr float kSqrt2OverPi = 0.7978845608028654f;
    return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

MatrixF encoder_block(const MatrixF& tokens, const BlockWeights& bw, const VitConfig& cfg) {
    MatrixF r1 = tokens + multi_head_attention(layer_norm(tokens, bw.ln1_g, bw.ln1_b,
                                                          cfg.layernorm_eps),
                                               bw, cfg);
    MatrixF hidden = (layer_norm(r1, bw.ln2_g, bw.ln2_b, cfg.layernorm_eps) * bw.mlp1_w)
                         .rowwise() +
                     bw.mlp1_b.transpose();
    hidden = hidden.unaryExpr([](float x) { return gelu(x); });
    return r1 + ((hidden * bw.mlp2_w).rowwise() + bw.mlp2_b.transpose());
}

MatrixF patch_embed(const NormalizedTensor& input, const VitWeights& w) {
    const VitConfig& c = w.config;
    const int p = c.patch_size;
    const int grid = c.image_size / p;
    const int np = c.n_patches();
    if (static_cast<int>(input.data.size()) != 3 * c.image_size * c.image_size)
        throw std::invalid_argument("input tensor does not match the configured image size");

    // Patch pixels flatten channel-major (c, then y, then x within the patch).
    MatrixF patches(np, 3 * p * p);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            int row = py * grid + px;
            int idx = 0;
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < p; ++y)
                    for (int x = 0; x < p; ++x)
                        patches(row, idx++) =
                            input.data[(ch * c.image_size + py * p + y) * c.image_size +
                                       px * p + x];
        }

    MatrixF tokens(c.n_tokens(), c.embed_dim);
    MatrixF projected = (patches * w.patch_proj_w.transpose()).rowwise() +
                        w.patch_proj_b.transpose();
    if (c.use_class_token) {
        tokens.row(0) = w.cls.transpose();
        tokens.bottomRows(np) = projected;
    } else {
        tokens = projected;
    }
    return tokens + w.pos;
}

VectorF encode(const NormalizedTensor& input, const VitWeights& w) {
    MatrixF tokens = patch_embed(input, w);
    for (const auto& block : w.blocks) tokens = encoder_block(tokens, block, w.config);
    tokens = layer_norm(tokens, w.final_ln_g, w.final_ln_b, w.config.layernorm_eps);
    return tokens.row(0).transpose();
}

}  // namespace histoforge
