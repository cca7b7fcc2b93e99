#include "muonlab/tinyvit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>

namespace muonlab {
namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028653559;  // sqrt(2/pi)

double gelu_inner_tanh(double x) { return std::tanh(kGeluC * (x + 0.044715 * x * x * x)); }

double gelu_tanh(double x) { return 0.5 * x * (1.0 + gelu_inner_tanh(x)); }

/// Gradient in terms of the pre-activation and its cached inner tanh, so the
/// backward pass reuses the forward transcendentals bit-for-bit.
double gelu_tanh_grad(double x, double t) {
    const double dinner = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

double trunc_normal(Rng& rng, double std_dev) {
    double z = rng.normal();
    while (std::fabs(z) > 2.0) z = rng.normal();
    return z * std_dev;
}

/// Y = X W^T + b (b is 1 x out or empty).
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = matmul_nt(x, w);
    if (!b.empty()) {
        for (std::size_t r = 0; r < y.rows(); ++r)
            for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b(0, c);
    }
    return y;
}

/// Row-wise layer norm; returns y = hat * g + b and fills hat / inv-std.
Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, Matrix& hat,
                  std::vector<double>& inv) {
    const std::size_t n = x.rows(), d = x.cols();
    hat = Matrix::uninitialized(n, d);
    inv.assign(n, 0.0);
    Matrix y = Matrix::uninitialized(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < d; ++c) mean += x(r, c);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dv = x(r, c) - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        const double istd = 1.0 / std::sqrt(var + kLnEps);
        inv[r] = istd;
        for (std::size_t c = 0; c < d; ++c) {
            hat(r, c) = (x(r, c) - mean) * istd;
            y(r, c) = hat(r, c) * g(0, c) + b(0, c);
        }
    }
    return y;
}

/// Given dY for y = hat * g + b, accumulates dg/db and returns dX.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& hat, const std::vector<double>& inv,
                           const Matrix& g, Matrix& dg, Matrix& db) {
    const std::size_t n = dy.rows(), d = dy.cols();
    Matrix dx = Matrix::uninitialized(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        double sum_dh = 0.0, sum_dh_hat = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dh = dy(r, c) * g(0, c);
            sum_dh += dh;
            sum_dh_hat += dh * hat(r, c);
            dg(0, c) += dy(r, c) * hat(r, c);
            db(0, c) += dy(r, c);
        }
        const double m1 = sum_dh / static_cast<double>(d);
        const double m2 = sum_dh_hat / static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
            const double dh = dy(r, c) * g(0, c);
            dx(r, c) = inv[r] * (dh - m1 - hat(r, c) * m2);
        }
    }
    return dx;
}

std::uint64_t batch_tag(const ImageBatch& batch) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ batch.n;
    auto mix = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        h = (h ^ bits) * 0x100000001b3ULL;
    };
    if (!batch.pixels.empty()) {
        mix(batch.pixels.front());
        mix(batch.pixels.back());
        mix(batch.pixels[batch.pixels.size() / 2]);
    }
    if (!batch.labels.empty()) mix(batch.labels.data()[0]);
    return h;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p = Matrix::uninitialized(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double mx = logits(r, 0);
        for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            p(r, c) = std::exp(logits(r, c) - mx);
            z += p(r, c);
        }
        for (std::size_t c = 0; c < logits.cols(); ++c) p(r, c) /= z;
    }
    return p;
}

}  // namespace

void VitConfig::validate() const {
    if (image_size == 0 || patch_size == 0 || embed_dim == 0 || heads == 0 || num_classes == 0)
        throw ConfigError("vit dimensions must be positive");
    if (image_size % patch_size != 0)
        throw ConfigError("image_size must be divisible by patch_size");
    if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
    if (mlp_ratio <= 0.0) throw ConfigError("mlp_ratio must be positive");
}

void TapSchedule::validate(long total_steps) const {
    for (long s : steps)
        if (s < 0 || s > total_steps)
            throw ConfigError("tap step " + std::to_string(s) + " outside [0, total_steps]");
    if (kinds.empty()) throw ConfigError("tap schedule needs at least one snapshot kind");
}

bool TapSchedule::wants_family(BlockFamily family) const {
    if (families.empty()) return is_matrix_family(family);
    return families.count(family) > 0;
}

VitModel::VitModel(VitConfig cfg, std::size_t channels, std::uint64_t seed)
    : cfg_(cfg), channels_(channels) {
    cfg_.validate();
    if (channels_ == 0) throw ConfigError("channels must be positive");
    Rng rng(mix_seed(seed, 0x5eed, 0));
    const std::size_t e = cfg_.embed_dim;
    const std::size_t pd = channels_ * cfg_.patch_size * cfg_.patch_size;
    const std::size_t md = cfg_.mlp_dim();

    auto add = [&](const std::string& name, BlockFamily family, int depth, bool matrix_shaped,
                   std::size_t rows, std::size_t cols, double init_std, double fill) {
        ParamBlock b;
        b.name = name;
        b.family = family;
        b.depth = depth;
        b.matrix_shaped = matrix_shaped;
        b.tensor = Matrix(rows, cols);
        if (init_std > 0.0)
            for (double& v : b.tensor.raw()) v = trunc_normal(rng, init_std);
        else if (fill != 0.0)
            for (double& v : b.tensor.raw()) v = fill;
        b.grad = Matrix(rows, cols);
        blocks_.push_back(std::move(b));
    };

    add("patch_embed", BlockFamily::PatchEmbed, -1, true, e, pd, 0.02, 0.0);
    add("patch_bias", BlockFamily::Bias, -1, false, 1, e, 0.0, 0.0);
    add("cls_token", BlockFamily::ClsToken, -1, false, 1, e, 0.02, 0.0);
    add("pos_embed", BlockFamily::PosEmbed, -1, true, cfg_.tokens(), e, 0.02, 0.0);
    for (std::size_t d = 0; d < cfg_.depth; ++d) {
        const std::string p = "blk" + std::to_string(d) + ".";
        const int depth = static_cast<int>(d);
        add(p + "norm1_g", BlockFamily::Norm, depth, false, 1, e, 0.0, 1.0);
        add(p + "norm1_b", BlockFamily::Norm, depth, false, 1, e, 0.0, 0.0);
        add(p + "qkv", BlockFamily::QKV, depth, true, 3 * e, e, 0.02, 0.0);
        add(p + "qkv_b", BlockFamily::Bias, depth, false, 1, 3 * e, 0.0, 0.0);
        add(p + "out_proj", BlockFamily::OutProj, depth, true, e, e, 0.02, 0.0);
        add(p + "out_b", BlockFamily::Bias, depth, false, 1, e, 0.0, 0.0);
        add(p + "norm2_g", BlockFamily::Norm, depth, false, 1, e, 0.0, 1.0);
        add(p + "norm2_b", BlockFamily::Norm, depth, false, 1, e, 0.0, 0.0);
        add(p + "mlp_up", BlockFamily::MlpUp, depth, true, md, e, 0.02, 0.0);
        add(p + "mlp_up_b", BlockFamily::Bias, depth, false, 1, md, 0.0, 0.0);
        add(p + "mlp_down", BlockFamily::MlpDown, depth, true, e, md, 0.02, 0.0);
        add(p + "mlp_down_b", BlockFamily::Bias, depth, false, 1, e, 0.0, 0.0);
    }
    add("final_norm_g", BlockFamily::Norm, -1, false, 1, e, 0.0, 1.0);
    add("final_norm_b", BlockFamily::Norm, -1, false, 1, e, 0.0, 0.0);
    add("head", BlockFamily::Head, -1, true, cfg_.num_classes, e, 0.02, 0.0);
    add("head_b", BlockFamily::Bias, -1, false, 1, cfg_.num_classes, 0.0, 0.0);
}

ParamBlock& VitModel::block(const std::string& name) {
    for (auto& b : blocks_)
        if (b.name == name) return b;
    throw ConfigError("no such block: " + name);
}

const ParamBlock& VitModel::block(const std::string& name) const {
    return const_cast<VitModel*>(this)->block(name);
}

Matrix VitModel::forward(const ImageBatch& batch, Cache* cache) const {
    if (batch.c != channels_ || batch.h != cfg_.image_size || batch.w != cfg_.image_size)
        throw DimensionError("batch shape does not match the model config");
    if (batch.n == 0) throw DimensionError("empty batch");
    const std::size_t n = batch.n, e = cfg_.embed_dim, t = cfg_.tokens();
    const std::size_t ps = cfg_.patch_size, pps = cfg_.patches_per_side();
    const std::size_t np = cfg_.num_patches(), pd = channels_ * ps * ps;

    Matrix patches = Matrix::uninitialized(n * np, pd);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t py = 0; py < pps; ++py)
            for (std::size_t px = 0; px < pps; ++px) {
                const std::size_t row = i * np + py * pps + px;
                std::size_t k = 0;
                for (std::size_t ch = 0; ch < channels_; ++ch)
                    for (std::size_t y = 0; y < ps; ++y)
                        for (std::size_t x = 0; x < ps; ++x)
                            patches(row, k++) = batch.at(i, ch, py * ps + y, px * ps + x);
            }

    const Matrix& w_pe = block("patch_embed").tensor;
    const Matrix& b_pe = block("patch_bias").tensor;
    const Matrix& cls = block("cls_token").tensor;
    const Matrix& pos = block("pos_embed").tensor;
    const Matrix embed = linear(patches, w_pe, b_pe);

    Matrix h = Matrix::uninitialized(n * t, e);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < e; ++c) h(i * t, c) = cls(0, c) + pos(0, c);
        for (std::size_t p = 0; p < np; ++p)
            for (std::size_t c = 0; c < e; ++c)
                h(i * t + p + 1, c) = embed(i * np + p, c) + pos(p + 1, c);
    }

    if (cache) {
        *cache = Cache{};
        cache->batch_tag = batch_tag(batch);
        cache->patches = patches;
        cache->block_caches.resize(cfg_.depth);
    }

    const std::size_t heads = cfg_.heads, dh = cfg_.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t d = 0; d < cfg_.depth; ++d) {
        const std::string p = "blk" + std::to_string(d) + ".";
        Cache::BlockCache local;
        Cache::BlockCache& bc = cache ? cache->block_caches[d] : local;

        const Matrix a = layer_norm(h, block(p + "norm1_g").tensor, block(p + "norm1_b").tensor,
                                    bc.norm1_hat, bc.norm1_inv);
        bc.qkv = linear(a, block(p + "qkv").tensor, block(p + "qkv_b").tensor);

        bc.attn.assign(n * heads, Matrix());
        bc.attn_concat = Matrix::uninitialized(n * t, e);
        Matrix q(t, dh), k(t, dh), v(t, dh);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t hd = 0; hd < heads; ++hd) {
                for (std::size_t r = 0; r < t; ++r)
                    for (std::size_t c = 0; c < dh; ++c) {
                        q(r, c) = bc.qkv(i * t + r, hd * dh + c);
                        k(r, c) = bc.qkv(i * t + r, e + hd * dh + c);
                        v(r, c) = bc.qkv(i * t + r, 2 * e + hd * dh + c);
                    }
                Matrix s = matmul_nt(q, k);
                s *= scale;
                Matrix& prob = bc.attn[i * heads + hd];
                prob = softmax_rows(s);
                const Matrix o = matmul(prob, v);
                for (std::size_t r = 0; r < t; ++r)
                    for (std::size_t c = 0; c < dh; ++c)
                        bc.attn_concat(i * t + r, hd * dh + c) = o(r, c);
            }

        const Matrix u = linear(bc.attn_concat, block(p + "out_proj").tensor,
                                block(p + "out_b").tensor);
        h += u;

        const Matrix b2 = layer_norm(h, block(p + "norm2_g").tensor, block(p + "norm2_b").tensor,
                                     bc.norm2_hat, bc.norm2_inv);
        bc.mlp_pre = linear(b2, block(p + "mlp_up").tensor, block(p + "mlp_up_b").tensor);
        bc.mlp_tanh = Matrix::uninitialized(bc.mlp_pre.rows(), bc.mlp_pre.cols());
        bc.mlp_act = Matrix::uninitialized(bc.mlp_pre.rows(), bc.mlp_pre.cols());
        for (std::size_t idx = 0; idx < bc.mlp_pre.raw().size(); ++idx) {
            const double x = bc.mlp_pre.raw()[idx];
            const double th = gelu_inner_tanh(x);
            bc.mlp_tanh.raw()[idx] = th;
            bc.mlp_act.raw()[idx] = 0.5 * x * (1.0 + th);
        }
        const Matrix down = linear(bc.mlp_act, block(p + "mlp_down").tensor,
                                   block(p + "mlp_down_b").tensor);
        h += down;
    }

    Matrix final_hat;
    std::vector<double> final_inv;
    const Matrix f = layer_norm(h, block("final_norm_g").tensor, block("final_norm_b").tensor,
                                final_hat, final_inv);
    Matrix z = Matrix::uninitialized(n, e);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < e; ++c) z(i, c) = f(i * t, c);
    Matrix logits = linear(z, block("head").tensor, block("head_b").tensor);
    if (cache) {
        cache->final_hat = final_hat;
        cache->final_inv = final_inv;
        cache->cls_features = z;
        cache->logits = logits;
    }
    return logits;
}

double VitModel::loss_and_backward(const ImageBatch& batch, const Cache& cache) {
    if (cache.batch_tag != batch_tag(batch))
        throw NumericError("stale forward cache for this batch");
    if (batch.labels.rows() != batch.n || batch.labels.cols() != cfg_.num_classes)
        throw DimensionError("label shape does not match the model config");
    const std::size_t n = batch.n, e = cfg_.embed_dim, t = cfg_.tokens();
    const std::size_t np = cfg_.num_patches();

    for (auto& b : blocks_) b.grad = Matrix(b.tensor.rows(), b.tensor.cols());

    const Matrix prob = softmax_rows(cache.logits);
    double loss = 0.0;
    Matrix dlogits = Matrix::uninitialized(n, cfg_.num_classes);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
            const double y = batch.labels(i, c);
            if (y > 0.0) loss -= y * std::log(std::max(prob(i, c), 1e-300));
            dlogits(i, c) = (prob(i, c) - y) / static_cast<double>(n);
        }
    loss /= static_cast<double>(n);

    block("head").grad = matmul_tn(dlogits, cache.cls_features);
    Matrix& dhead_b = block("head_b").grad;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cfg_.num_classes; ++c) dhead_b(0, c) += dlogits(i, c);
    const Matrix dz = matmul(dlogits, block("head").tensor);

    Matrix df(n * t, e);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < e; ++c) df(i * t, c) = dz(i, c);
    Matrix dh = layer_norm_backward(df, cache.final_hat, cache.final_inv,
                                    block("final_norm_g").tensor, block("final_norm_g").grad,
                                    block("final_norm_b").grad);

    const std::size_t heads = cfg_.heads, dh_dim = cfg_.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh_dim));
    for (std::size_t d = cfg_.depth; d-- > 0;) {
        const std::string p = "blk" + std::to_string(d) + ".";
        const Cache::BlockCache& bc = cache.block_caches[d];

        ParamBlock& mlp_down = block(p + "mlp_down");
        ParamBlock& mlp_down_b = block(p + "mlp_down_b");
        ParamBlock& mlp_up = block(p + "mlp_up");
        ParamBlock& mlp_up_b = block(p + "mlp_up_b");
        ParamBlock& norm2_g = block(p + "norm2_g");
        ParamBlock& norm2_b = block(p + "norm2_b");
        ParamBlock& out_proj = block(p + "out_proj");
        ParamBlock& out_b = block(p + "out_b");
        ParamBlock& qkv_blk = block(p + "qkv");
        ParamBlock& qkv_b = block(p + "qkv_b");
        ParamBlock& norm1_g = block(p + "norm1_g");
        ParamBlock& norm1_b = block(p + "norm1_b");

        // MLP branch: h_out = h_mid + W_down^T-applied MLP on norm2(h_mid).
        Matrix dact = matmul(dh, mlp_down.tensor);
        mlp_down.grad += matmul_tn(dh, bc.mlp_act);
        for (std::size_t r = 0; r < dh.rows(); ++r)
            for (std::size_t c = 0; c < e; ++c) mlp_down_b.grad(0, c) += dh(r, c);
        Matrix dup = std::move(dact);
        for (std::size_t idx = 0; idx < dup.raw().size(); ++idx)
            dup.raw()[idx] *= gelu_tanh_grad(bc.mlp_pre.raw()[idx], bc.mlp_tanh.raw()[idx]);
        Matrix b2 = Matrix::uninitialized(bc.norm2_hat.rows(), e);
        for (std::size_t r = 0; r < b2.rows(); ++r)
            for (std::size_t c = 0; c < e; ++c)
                b2(r, c) = bc.norm2_hat(r, c) * norm2_g.tensor(0, c) + norm2_b.tensor(0, c);
        mlp_up.grad += matmul_tn(dup, b2);
        for (std::size_t r = 0; r < dup.rows(); ++r)
            for (std::size_t c = 0; c < dup.cols(); ++c) mlp_up_b.grad(0, c) += dup(r, c);
        const Matrix db2 = matmul(dup, mlp_up.tensor);
        dh += layer_norm_backward(db2, bc.norm2_hat, bc.norm2_inv, norm2_g.tensor, norm2_g.grad,
                                  norm2_b.grad);

        // Attention branch; dh is not touched again until the norm1 backward,
        // so the out-proj gradient can read it in place.
        const Matrix& du = dh;
        out_proj.grad += matmul_tn(du, bc.attn_concat);
        for (std::size_t r = 0; r < du.rows(); ++r)
            for (std::size_t c = 0; c < e; ++c) out_b.grad(0, c) += du(r, c);
        const Matrix dconcat = matmul(du, out_proj.tensor);

        Matrix dqkv = Matrix::uninitialized(n * t, 3 * e);
        Matrix q(t, dh_dim), k(t, dh_dim), v(t, dh_dim), dout(t, dh_dim), ds(t, t);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t hd = 0; hd < heads; ++hd) {
                for (std::size_t r = 0; r < t; ++r)
                    for (std::size_t c = 0; c < dh_dim; ++c) {
                        q(r, c) = bc.qkv(i * t + r, hd * dh_dim + c);
                        k(r, c) = bc.qkv(i * t + r, e + hd * dh_dim + c);
                        v(r, c) = bc.qkv(i * t + r, 2 * e + hd * dh_dim + c);
                        dout(r, c) = dconcat(i * t + r, hd * dh_dim + c);
                    }
                const Matrix& prob_m = bc.attn[i * heads + hd];
                const Matrix dprob = matmul_nt(dout, v);
                const Matrix dv = matmul_tn(prob_m, dout);
                for (std::size_t r = 0; r < t; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < t; ++c) dot += dprob(r, c) * prob_m(r, c);
                    for (std::size_t c = 0; c < t; ++c)
                        ds(r, c) = prob_m(r, c) * (dprob(r, c) - dot);
                }
                ds *= scale;
                const Matrix dq = matmul(ds, k);
                const Matrix dk = matmul_tn(ds, q);
                for (std::size_t r = 0; r < t; ++r)
                    for (std::size_t c = 0; c < dh_dim; ++c) {
                        dqkv(i * t + r, hd * dh_dim + c) = dq(r, c);
                        dqkv(i * t + r, e + hd * dh_dim + c) = dk(r, c);
                        dqkv(i * t + r, 2 * e + hd * dh_dim + c) = dv(r, c);
                    }
            }

        Matrix a = Matrix::uninitialized(bc.norm1_hat.rows(), e);
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t c = 0; c < e; ++c)
                a(r, c) = bc.norm1_hat(r, c) * norm1_g.tensor(0, c) + norm1_b.tensor(0, c);
        qkv_blk.grad += matmul_tn(dqkv, a);
        for (std::size_t r = 0; r < dqkv.rows(); ++r)
            for (std::size_t c = 0; c < 3 * e; ++c) qkv_b.grad(0, c) += dqkv(r, c);
        const Matrix da = matmul(dqkv, qkv_blk.tensor);
        dh += layer_norm_backward(da, bc.norm1_hat, bc.norm1_inv, norm1_g.tensor, norm1_g.grad,
                                  norm1_b.grad);
    }

    // Embedding layer: token 0 is cls + pos row 0, token p+1 is embed + pos row p+1.
    Matrix& dpos = block("pos_embed").grad;
    Matrix& dcls = block("cls_token").grad;
    Matrix demb = Matrix::uninitialized(n * np, e);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < e; ++c) {
            dpos(0, c) += dh(i * t, c);
            dcls(0, c) += dh(i * t, c);
        }
        for (std::size_t pch = 0; pch < np; ++pch)
            for (std::size_t c = 0; c < e; ++c) {
                dpos(pch + 1, c) += dh(i * t + pch + 1, c);
                demb(i * np + pch, c) = dh(i * t + pch + 1, c);
            }
    }
    block("patch_embed").grad = matmul_tn(demb, cache.patches);
    Matrix& dpbias = block("patch_bias").grad;
    for (std::size_t r = 0; r < demb.rows(); ++r)
        for (std::size_t c = 0; c < e; ++c) dpbias(0, c) += demb(r, c);

    return loss;
}

void VitModel::save_checkpoint(const std::string& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory: " + dir);
    std::ostringstream manifest;
    manifest << "format_version = 1\n";
    manifest << "image_size = " << cfg_.image_size << "\n";
    manifest << "patch_size = " << cfg_.patch_size << "\n";
    manifest << "embed_dim = " << cfg_.embed_dim << "\n";
    manifest << "depth = " << cfg_.depth << "\n";
    manifest << "heads = " << cfg_.heads << "\n";
    manifest << "mlp_ratio = " << cfg_.mlp_ratio << "\n";
    manifest << "num_classes = " << cfg_.num_classes << "\n";
    manifest << "channels = " << channels_ << "\n";
    manifest << "blocks = " << blocks_.size() << "\n";
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const ParamBlock& b = blocks_[i];
        char file[32];
        std::snprintf(file, sizeof(file), "blk_%03zu.mlab", i);
        manifest << "block " << b.name << " " << to_string(b.family) << " " << b.depth << " "
                 << (b.matrix_shaped ? 1 : 0) << " " << b.tensor.rows() << " " << b.tensor.cols()
                 << " " << file << "\n";
        save_matrix(b.tensor, dir + "/" + file, MatrixDtype::F64);
    }
    std::ofstream out(dir + "/manifest.txt", std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint manifest in " + dir);
    out << manifest.str();
}

VitModel VitModel::load_checkpoint(const std::string& dir) {
    std::ifstream in(dir + "/manifest.txt");
    if (!in) throw IoError("cannot open checkpoint manifest in " + dir);
    VitConfig cfg;
    std::size_t channels = 3, block_count = 0;
    struct Entry {
        std::string name, family_str, file;
        int depth;
        int matrix_shaped;
        std::size_t rows, cols;
    };
    std::vector<Entry> entries;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "block") {
            Entry e;
            ls >> e.name >> e.family_str >> e.depth >> e.matrix_shaped >> e.rows >> e.cols >> e.file;
            if (!ls) throw IoError("malformed checkpoint block line: " + line);
            entries.push_back(e);
            continue;
        }
        std::string eq, value;
        ls >> eq >> value;
        if (key.empty()) continue;
        if (eq != "=") throw IoError("malformed checkpoint manifest line: " + line);
        if (key == "format_version") {
            if (value != "1") throw IoError("unsupported checkpoint version");
        } else if (key == "image_size") cfg.image_size = std::stoul(value);
        else if (key == "patch_size") cfg.patch_size = std::stoul(value);
        else if (key == "embed_dim") cfg.embed_dim = std::stoul(value);
        else if (key == "depth") cfg.depth = std::stoul(value);
        else if (key == "heads") cfg.heads = std::stoul(value);
        else if (key == "mlp_ratio") cfg.mlp_ratio = std::stod(value);
        else if (key == "num_classes") cfg.num_classes = std::stoul(value);
        else if (key == "channels") channels = std::stoul(value);
        else if (key == "blocks") block_count = std::stoul(value);
        else throw IoError("unknown checkpoint manifest key: " + key);
    }
    if (entries.size() != block_count) throw IoError("checkpoint block count mismatch");
    VitModel model(cfg, channels, 0);
    if (entries.size() != model.blocks_.size())
        throw IoError("checkpoint does not match the model architecture");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Entry& e = entries[i];
        ParamBlock& b = model.blocks_[i];
        if (b.name != e.name || to_string(b.family) != e.family_str)
            throw IoError("checkpoint block order mismatch at " + e.name);
        const Matrix m = load_matrix(dir + "/" + e.file);
        if (m.rows() != e.rows || m.cols() != e.cols || !b.tensor.same_shape(m))
            throw IoError("checkpoint block shape mismatch at " + e.name);
        b.tensor = m;
        b.grad = Matrix(m.rows(), m.cols());
    }
    return model;
}

std::string to_string(RunStatus status) {
    switch (status) {
        case RunStatus::Completed: return "completed";
        case RunStatus::Diverged: return "diverged";
        case RunStatus::Aborted: return "aborted";
    }
    return "aborted";
}

RunStatus run_status_from_string(const std::string& s) {
    if (s == "completed") return RunStatus::Completed;
    if (s == "diverged") return RunStatus::Diverged;
    if (s == "aborted") return RunStatus::Aborted;
    throw ConfigError("unknown run status: '" + s + "'");
}

EvalResult evaluate(const VitModel& model, const Dataset& data, std::size_t batch_size) {
    const std::size_t n_val = data.split_size(Split::Val);
    if (n_val == 0) throw DimensionError("validation split is empty");
    const std::size_t classes = model.config().num_classes;
    std::vector<std::size_t> class_total(classes, 0), class_correct(classes, 0);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n_val; start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(start + batch_size, n_val); ++i) idx.push_back(i);
        const ImageBatch batch = data.load_batch(Split::Val, idx);
        const Matrix logits = model.forward(batch);
        const Matrix prob = softmax_rows(logits);
        for (std::size_t i = 0; i < batch.n; ++i) {
            std::size_t truth = 0, pred = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                if (batch.labels(i, c) > batch.labels(i, truth)) truth = c;
                if (logits(i, c) > logits(i, pred)) pred = c;
            }
            loss_sum -= std::log(std::max(prob(i, truth), 1e-300));
            ++class_total[truth];
            if (pred == truth) {
                ++correct;
                ++class_correct[truth];
            }
        }
    }
    std::string missing;
    for (std::size_t c = 0; c < classes; ++c)
        if (class_total[c] == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
    if (!missing.empty())
        throw NumericError("macro top-1 undefined: classes with no validation samples: " + missing);
    EvalResult res;
    res.top1 = static_cast<double>(correct) / static_cast<double>(n_val);
    double macro = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
        macro += static_cast<double>(class_correct[c]) / static_cast<double>(class_total[c]);
    res.macro_top1 = macro / static_cast<double>(classes);
    res.loss = loss_sum / static_cast<double>(n_val);
    return res;
}

RunRecord train(VitModel& model, const Dataset& data, OptimizerBank& bank,
                const TrainOptions& options, std::uint64_t seed, SnapshotStore* store,
                const std::string& run_id) {
    options.recipe.validate();
    options.tap.validate(options.total_steps);
    if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (options.total_steps < 0) throw ConfigError("total_steps must be non-negative");
    const std::size_t train_n = data.split_size(Split::Train);

    RunRecord rec;
    rec.name = run_id;
    rec.seed = seed;
    rec.total_steps = options.total_steps;

    const auto t_start = std::chrono::steady_clock::now();
    auto push_eval = [&](long step, double train_loss) {
        const EvalResult ev = evaluate(model, data);
        rec.metrics.push_back({step, std::isfinite(train_loss) ? train_loss : ev.loss,
                               ev.top1, ev.macro_top1});
    };
    push_eval(0, std::numeric_limits<double>::quiet_NaN());

    double last_loss = 0.0;
    for (long step = 0; step < options.total_steps; ++step) {
        Rng batch_rng(mix_seed(seed, static_cast<std::uint64_t>(step), 0xA));
        std::vector<std::size_t> idx(options.batch_size);
        for (auto& i : idx) i = batch_rng.below(train_n);
        ImageBatch batch = data.load_batch(Split::Train, idx);
        Rng recipe_rng(mix_seed(seed, static_cast<std::uint64_t>(step), 0xB));
        batch = apply_recipe(batch, options.recipe, recipe_rng);

        VitModel::Cache cache;
        model.forward(batch, &cache);
        last_loss = model.loss_and_backward(batch, cache);
        if (!std::isfinite(last_loss)) {
            rec.status = RunStatus::Diverged;
            rec.final_train_loss = last_loss;
            break;
        }

        if (store && options.tap.wants_step(step)) {
            for (const ParamBlock& b : model.blocks()) {
                if (!b.matrix_shaped || !options.tap.wants_family(b.family)) continue;
                if (options.tap.wants_kind(SnapshotKind::Gradient)) {
                    store->append(snapshot_from_matrix(b.grad, run_id, step, b.family, b.depth,
                                                       SnapshotKind::Gradient));
                    ++rec.snapshots_written;
                }
                if (options.tap.wants_kind(SnapshotKind::Momentum) && bank.routes_to_muon(b)) {
                    const MuonState* st = bank.muon_state(b.name);
                    MuonState fresh;
                    const Matrix m = muon_momentum_preview(b.grad, st ? *st : fresh,
                                                           bank.muon_config());
                    store->append(snapshot_from_matrix(m, run_id, step, b.family, b.depth,
                                                       SnapshotKind::Momentum));
                    ++rec.snapshots_written;
                }
            }
        }

        const double lr_scale =
            cosine_lr(step, options.total_steps, 1.0, options.lr_min_ratio);
        bank.step(model.blocks(), lr_scale);

        if (options.eval_every > 0 && (step + 1) % options.eval_every == 0 &&
            step + 1 < options.total_steps)
            push_eval(step + 1, last_loss);
    }

    if (rec.status == RunStatus::Completed) {
        rec.final_train_loss = options.total_steps > 0 ? last_loss : 0.0;
        if (rec.metrics.empty() || rec.metrics.back().step != options.total_steps)
            push_eval(options.total_steps, last_loss);
    }
    const auto t_end = std::chrono::steady_clock::now();
    rec.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();
    const double images = static_cast<double>(options.batch_size) *
                          static_cast<double>(options.total_steps);
    rec.images_per_second = rec.wall_seconds > 0.0 ? images / rec.wall_seconds : 0.0;
    return rec;
}

}  // namespace muonlab
