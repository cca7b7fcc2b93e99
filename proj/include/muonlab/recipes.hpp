#pragma once

#include <string>
#include <vector>

#include "muonlab/matrix.hpp"
#include "muonlab/rng.hpp"

namespace muonlab {

/// A minibatch of images with soft labels (each label row on the simplex).
struct ImageBatch {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<double> pixels;  // n * c * h * w, image-major then channel
    Matrix labels;               // n x num_classes

    double& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) {
        return pixels[((i * c + ch) * h + y) * w + x];
    }
    double at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const {
        return pixels[((i * c + ch) * h + y) * w + x];
    }

    double last_mix_lambda = 1.0;  // realized label weight of the last mix op

    void check_labels() const;  // simplex rows within 1e-6
};

enum class RecipeVariant { Full, NoRand, NoMix, NoMixNoRand };

RecipeVariant recipe_variant_from_string(const std::string& s);
std::string to_string(RecipeVariant variant);

struct RecipeConfig {
    double mixup_alpha = 0.8;
    double cutmix_alpha = 1.0;
    double mix_prob = 1.0;
    double switch_prob = 0.5;
    double label_smoothing = 0.1;
    int randaug_ops = 2;
    int randaug_magnitude = 9;
    double erase_prob = 0.25;
    RecipeVariant variant = RecipeVariant::Full;

    /// The four named variants with the default hyperparameters.
    static RecipeConfig preset(RecipeVariant variant);

    /// Enforces the coupling rules (NoMix disables smoothing, NoRand zeroes
    /// the augmentation knobs) and the field ranges.
    void validate() const;
};

ImageBatch mixup(const ImageBatch& batch, double alpha, Rng& rng);
ImageBatch cutmix(const ImageBatch& batch, double alpha, Rng& rng);
Matrix label_smooth(const Matrix& labels, double eps, std::size_t num_classes);
ImageBatch random_erase(const ImageBatch& batch, double prob, Rng& rng);
ImageBatch rand_augment_lite(const ImageBatch& batch, int ops, int magnitude, Rng& rng);

/// Pipeline: rand_augment_lite -> random_erase -> (mixup | cutmix) ->
/// label_smooth, with components gated by the variant flags.
ImageBatch apply_recipe(const ImageBatch& batch, const RecipeConfig& cfg, Rng& rng);

}  // namespace muonlab
