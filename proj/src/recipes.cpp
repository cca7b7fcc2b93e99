#include "muonlab/recipes.hpp"

#include <algorithm>
#include <cmath>

namespace muonlab {

void ImageBatch::check_labels() const {
    for (std::size_t i = 0; i < labels.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < labels.cols(); ++j) {
            if (labels(i, j) < 0.0)
                throw NumericError("label row " + std::to_string(i) + " has negative entry");
            sum += labels(i, j);
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw NumericError("label row " + std::to_string(i) + " sums to " +
                               std::to_string(sum));
    }
}

RecipeVariant recipe_variant_from_string(const std::string& s) {
    if (s == "full") return RecipeVariant::Full;
    if (s == "no_rand") return RecipeVariant::NoRand;
    if (s == "no_mix") return RecipeVariant::NoMix;
    if (s == "no_mix_no_rand") return RecipeVariant::NoMixNoRand;
    throw ConfigError("unknown recipe variant: " + s);
}

std::string to_string(RecipeVariant variant) {
    switch (variant) {
        case RecipeVariant::Full: return "full";
        case RecipeVariant::NoRand: return "no_rand";
        case RecipeVariant::NoMix: return "no_mix";
        case RecipeVariant::NoMixNoRand: return "no_mix_no_rand";
    }
    return "?";
}

RecipeConfig RecipeConfig::preset(RecipeVariant variant) {
    RecipeConfig cfg;
    cfg.variant = variant;
    const bool no_mix = variant == RecipeVariant::NoMix || variant == RecipeVariant::NoMixNoRand;
    const bool no_rand = variant == RecipeVariant::NoRand || variant == RecipeVariant::NoMixNoRand;
    if (no_mix) {
        // Mixup, CutMix and label smoothing are one coupled component.
        cfg.mix_prob = 0.0;
        cfg.label_smoothing = 0.0;
    }
    if (no_rand) {
        cfg.randaug_ops = 0;
        cfg.erase_prob = 0.0;
    }
    return cfg;
}

void RecipeConfig::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (mixup_alpha < 0.0 || cutmix_alpha < 0.0)
        throw ConfigError("recipe: mix alphas must be non-negative");
    if (!in01(mix_prob) || !in01(switch_prob) || !in01(erase_prob))
        throw ConfigError("recipe: probabilities must lie in [0,1]");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw ConfigError("recipe: label_smoothing must lie in [0,1)");
    if (randaug_ops < 0) throw ConfigError("recipe: randaug_ops must be >= 0");
    if (randaug_magnitude < 0 || randaug_magnitude > 30)
        throw ConfigError("recipe: randaug_magnitude must lie in [0,30]");
    const bool no_mix = variant == RecipeVariant::NoMix || variant == RecipeVariant::NoMixNoRand;
    const bool no_rand = variant == RecipeVariant::NoRand || variant == RecipeVariant::NoMixNoRand;
    if (no_mix && (mix_prob != 0.0 || label_smoothing != 0.0))
        throw ConfigError("recipe: variant disables mixing but mixing knobs are set");
    if (no_rand && (randaug_ops != 0 || erase_prob != 0.0))
        throw ConfigError("recipe: variant disables augmentation but knobs are set");
}

namespace {

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
    return perm;
}

}  // namespace

ImageBatch mixup(const ImageBatch& batch, double alpha, Rng& rng) {
    if (batch.n < 2) throw Error("mixup: batch size must be >= 2");
    if (alpha <= 0.0) throw ConfigError("mixup: alpha must be positive");
    const double lambda = rng.beta(alpha, alpha);
    const auto perm = random_permutation(batch.n, rng);
    ImageBatch out = batch;
    out.last_mix_lambda = lambda;
    const std::size_t stride = batch.c * batch.h * batch.w;
    for (std::size_t i = 0; i < batch.n; ++i) {
        const std::size_t j = perm[i];
        for (std::size_t k = 0; k < stride; ++k)
            out.pixels[i * stride + k] =
                lambda * batch.pixels[i * stride + k] + (1.0 - lambda) * batch.pixels[j * stride + k];
        for (std::size_t cls = 0; cls < batch.labels.cols(); ++cls)
            out.labels(i, cls) =
                lambda * batch.labels(i, cls) + (1.0 - lambda) * batch.labels(j, cls);
    }
    return out;
}

ImageBatch cutmix(const ImageBatch& batch, double alpha, Rng& rng) {
    if (batch.n < 2) throw Error("cutmix: batch size must be >= 2");
    if (batch.h < 2 || batch.w < 2) throw Error("cutmix: images must be at least 2x2");
    if (alpha <= 0.0) throw ConfigError("cutmix: alpha must be positive");
    const double lambda = rng.beta(alpha, alpha);
    const auto perm = random_permutation(batch.n, rng);
    // One shared rectangle per batch, area ratio (1 - lambda), clipped at the
    // boundary; label weights use the realized pasted fraction.
    const double cut = std::sqrt(1.0 - lambda);
    const auto rh = static_cast<long>(std::floor(cut * static_cast<double>(batch.h)));
    const auto rw = static_cast<long>(std::floor(cut * static_cast<double>(batch.w)));
    const long cy = static_cast<long>(rng.below(batch.h));
    const long cx = static_cast<long>(rng.below(batch.w));
    const long y0 = std::clamp(cy - rh / 2, 0L, static_cast<long>(batch.h));
    const long y1 = std::clamp(cy + (rh + 1) / 2, 0L, static_cast<long>(batch.h));
    const long x0 = std::clamp(cx - rw / 2, 0L, static_cast<long>(batch.w));
    const long x1 = std::clamp(cx + (rw + 1) / 2, 0L, static_cast<long>(batch.w));
    const double pasted = static_cast<double>((y1 - y0) * (x1 - x0)) /
                          static_cast<double>(batch.h * batch.w);

    ImageBatch out = batch;
    out.last_mix_lambda = 1.0 - pasted;
    for (std::size_t i = 0; i < batch.n; ++i) {
        const std::size_t j = perm[i];
        for (std::size_t ch = 0; ch < batch.c; ++ch)
            for (long y = y0; y < y1; ++y)
                for (long x = x0; x < x1; ++x)
                    out.at(i, ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                        batch.at(j, ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        for (std::size_t cls = 0; cls < batch.labels.cols(); ++cls)
            out.labels(i, cls) =
                (1.0 - pasted) * batch.labels(i, cls) + pasted * batch.labels(j, cls);
    }
    return out;
}

Matrix label_smooth(const Matrix& labels, double eps, std::size_t num_classes) {
    if (eps < 0.0 || eps >= 1.0) throw ConfigError("label_smooth: eps must lie in [0,1)");
    if (labels.cols() != num_classes)
        throw DimensionError("label_smooth: label width does not match num_classes");
    Matrix out = labels;
    const double fill = eps / static_cast<double>(num_classes);
    for (double& v : out.raw()) v = (1.0 - eps) * v + fill;
    return out;
}

ImageBatch random_erase(const ImageBatch& batch, double prob, Rng& rng) {
    if (batch.h < 4 || batch.w < 4) throw Error("random_erase: images must be at least 4x4");
    if (prob < 0.0 || prob > 1.0) throw ConfigError("random_erase: prob outside [0,1]");
    ImageBatch out = batch;
    for (std::size_t i = 0; i < batch.n; ++i) {
        if (rng.uniform() >= prob) continue;
        for (int attempt = 0; attempt < 10; ++attempt) {
            const double area = rng.uniform(0.02, 0.33) * static_cast<double>(batch.h * batch.w);
            const double aspect = std::exp(rng.uniform(std::log(0.3), std::log(3.3)));
            const auto eh = static_cast<long>(std::lround(std::sqrt(area * aspect)));
            const auto ew = static_cast<long>(std::lround(std::sqrt(area / aspect)));
            if (eh < 1 || ew < 1 || eh >= static_cast<long>(batch.h) ||
                ew >= static_cast<long>(batch.w))
                continue;
            const long y0 = static_cast<long>(rng.below(batch.h - eh + 1));
            const long x0 = static_cast<long>(rng.below(batch.w - ew + 1));
            for (std::size_t ch = 0; ch < batch.c; ++ch)
                for (long y = y0; y < y0 + eh; ++y)
                    for (long x = x0; x < x0 + ew; ++x)
                        out.at(i, ch, static_cast<std::size_t>(y),
                               static_cast<std::size_t>(x)) = rng.uniform(-1.0, 1.0);
            break;
        }
    }
    return out;
}

namespace {

constexpr double kPixelClip = 3.0;  // standardized pixel range

enum class AugOp {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    Brightness,
    Contrast,
    Posterize,
    Solarize,
};
constexpr int kAugPoolSize = 9;

void geometric(ImageBatch& batch, std::size_t img, double m00, double m01, double m10,
               double m11, double tx, double ty) {
    // Inverse-map with nearest neighbor, zero fill outside.
    const double cy = (static_cast<double>(batch.h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(batch.w) - 1.0) / 2.0;
    std::vector<double> src(batch.c * batch.h * batch.w);
    for (std::size_t ch = 0; ch < batch.c; ++ch)
        for (std::size_t y = 0; y < batch.h; ++y)
            for (std::size_t x = 0; x < batch.w; ++x)
                src[(ch * batch.h + y) * batch.w + x] = batch.at(img, ch, y, x);
    for (std::size_t ch = 0; ch < batch.c; ++ch)
        for (std::size_t y = 0; y < batch.h; ++y)
            for (std::size_t x = 0; x < batch.w; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                const long sy = std::lround(m10 * dx + m11 * dy + cy + ty);
                const long sx = std::lround(m00 * dx + m01 * dy + cx + tx);
                double v = 0.0;
                if (sy >= 0 && sy < static_cast<long>(batch.h) && sx >= 0 &&
                    sx < static_cast<long>(batch.w))
                    v = src[(ch * batch.h + static_cast<std::size_t>(sy)) * batch.w +
                            static_cast<std::size_t>(sx)];
                batch.at(img, ch, y, x) = v;
            }
}

void apply_aug_op(ImageBatch& batch, std::size_t img, AugOp op, double level, Rng& rng) {
    // level in [0,1] = magnitude/30; random sign where the op is directional.
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    switch (op) {
        case AugOp::ShearX:
            geometric(batch, img, 1.0, sign * 0.3 * level, 0.0, 1.0, 0.0, 0.0);
            break;
        case AugOp::ShearY:
            geometric(batch, img, 1.0, 0.0, sign * 0.3 * level, 1.0, 0.0, 0.0);
            break;
        case AugOp::TranslateX:
            geometric(batch, img, 1.0, 0.0, 0.0, 1.0,
                      sign * 0.45 * level * static_cast<double>(batch.w), 0.0);
            break;
        case AugOp::TranslateY:
            geometric(batch, img, 1.0, 0.0, 0.0, 1.0, 0.0,
                      sign * 0.45 * level * static_cast<double>(batch.h));
            break;
        case AugOp::Rotate: {
            const double theta = sign * level * 30.0 * 3.14159265358979323846 / 180.0;
            geometric(batch, img, std::cos(theta), -std::sin(theta), std::sin(theta),
                      std::cos(theta), 0.0, 0.0);
            break;
        }
        case AugOp::Brightness: {
            const double delta = sign * 0.9 * level;
            for (std::size_t ch = 0; ch < batch.c; ++ch)
                for (std::size_t y = 0; y < batch.h; ++y)
                    for (std::size_t x = 0; x < batch.w; ++x)
                        batch.at(img, ch, y, x) =
                            std::clamp(batch.at(img, ch, y, x) + delta, -kPixelClip, kPixelClip);
            break;
        }
        case AugOp::Contrast: {
            const double factor = 1.0 + sign * 0.9 * level;
            double mean = 0.0;
            const std::size_t count = batch.c * batch.h * batch.w;
            for (std::size_t ch = 0; ch < batch.c; ++ch)
                for (std::size_t y = 0; y < batch.h; ++y)
                    for (std::size_t x = 0; x < batch.w; ++x) mean += batch.at(img, ch, y, x);
            mean /= static_cast<double>(count);
            for (std::size_t ch = 0; ch < batch.c; ++ch)
                for (std::size_t y = 0; y < batch.h; ++y)
                    for (std::size_t x = 0; x < batch.w; ++x)
                        batch.at(img, ch, y, x) = std::clamp(
                            (batch.at(img, ch, y, x) - mean) * factor + mean, -kPixelClip,
                            kPixelClip);
            break;
        }
        case AugOp::Posterize: {
            // Quantize the standardized range to 2^bits levels; 8 bits is the
            // defined no-op so magnitude 0 is an exact identity.
            const int bits = 8 - static_cast<int>(std::floor(4.0 * level));
            if (bits >= 8) break;
            const double levels = static_cast<double>(1 << bits);
            for (std::size_t ch = 0; ch < batch.c; ++ch)
                for (std::size_t y = 0; y < batch.h; ++y)
                    for (std::size_t x = 0; x < batch.w; ++x) {
                        const double v01 =
                            (batch.at(img, ch, y, x) + kPixelClip) / (2.0 * kPixelClip);
                        const double q = std::floor(v01 * levels) / levels;
                        batch.at(img, ch, y, x) = q * 2.0 * kPixelClip - kPixelClip;
                    }
            break;
        }
        case AugOp::Solarize: {
            // Invert values above the threshold around zero; the threshold at
            // magnitude 0 sits at the top of the pixel range.
            const double threshold = kPixelClip * (1.0 - level);
            for (std::size_t ch = 0; ch < batch.c; ++ch)
                for (std::size_t y = 0; y < batch.h; ++y)
                    for (std::size_t x = 0; x < batch.w; ++x)
                        if (batch.at(img, ch, y, x) > threshold)
                            batch.at(img, ch, y, x) = -batch.at(img, ch, y, x);
            break;
        }
    }
}

}  // namespace

ImageBatch rand_augment_lite(const ImageBatch& batch, int ops, int magnitude, Rng& rng) {
    if (magnitude < 0 || magnitude > 30)
        throw ConfigError("rand_augment_lite: magnitude outside [0,30]");
    ImageBatch out = batch;
    const double level = static_cast<double>(magnitude) / 30.0;
    for (std::size_t i = 0; i < batch.n; ++i)
        for (int k = 0; k < ops; ++k) {
            const auto op = static_cast<AugOp>(rng.below(kAugPoolSize));
            apply_aug_op(out, i, op, level, rng);
        }
    return out;
}

ImageBatch apply_recipe(const ImageBatch& batch, const RecipeConfig& cfg, Rng& rng) {
    cfg.validate();
    ImageBatch out = batch;
    if (cfg.randaug_ops > 0)
        out = rand_augment_lite(out, cfg.randaug_ops, cfg.randaug_magnitude, rng);
    if (cfg.erase_prob > 0.0) out = random_erase(out, cfg.erase_prob, rng);
    if (cfg.mix_prob > 0.0 && rng.uniform() < cfg.mix_prob) {
        if (rng.uniform() < cfg.switch_prob)
            out = cutmix(out, cfg.cutmix_alpha, rng);
        else
            out = mixup(out, cfg.mixup_alpha, rng);
    }
    if (cfg.label_smoothing > 0.0)
        out.labels = label_smooth(out.labels, cfg.label_smoothing, out.labels.cols());
    return out;
}

}  // namespace muonlab
