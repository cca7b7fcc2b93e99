#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "muonlab/linalg.hpp"
#include "muonlab/recipes.hpp"
#include "muonlab/rng.hpp"

using namespace muonlab;

namespace {

ImageBatch make_batch(std::size_t n, std::size_t classes, std::size_t hw = 8,
                      std::size_t channels = 1) {
    ImageBatch b;
    b.n = n;
    b.c = channels;
    b.h = b.w = hw;
    b.pixels.assign(n * channels * hw * hw, 0.0);
    b.labels = Matrix(n, classes);
    return b;
}

// Constant-valued image per example; the value doubles as an identity tag.
ImageBatch tagged_batch(std::size_t n, std::size_t classes) {
    ImageBatch b = make_batch(n, classes);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t y = 0; y < b.h; ++y)
            for (std::size_t x = 0; x < b.w; ++x) b.at(i, 0, y, x) = static_cast<double>(i);
        b.labels(i, i % classes) = 1.0;
    }
    return b;
}

ImageBatch random_batch(std::size_t n, std::size_t classes, Rng& rng) {
    ImageBatch b = make_batch(n, classes);
    for (double& v : b.pixels) v = rng.uniform(-2.5, 2.5);
    for (std::size_t i = 0; i < n; ++i) b.labels(i, rng.below(classes)) = 1.0;
    return b;
}

double max_pixel_diff(const ImageBatch& a, const ImageBatch& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        worst = std::max(worst, std::abs(a.pixels[i] - b.pixels[i]));
    return worst;
}

}  // namespace

TEST_CASE("mixup mixes two one-hot labels with complementary weights") {
    ImageBatch b = make_batch(2, 10);
    b.labels(0, 3) = 1.0;
    b.labels(1, 7) = 1.0;
    Rng rng(5);
    const ImageBatch out = mixup(b, 0.5, rng);
    const double lambda = out.last_mix_lambda;
    CHECK(lambda > 0.0);
    CHECK(lambda < 1.0);
    // Whatever the permutation, each row's mass stays on classes {3, 7}.
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(out.labels(i, 3) + out.labels(i, 7) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t c = 0; c < 10; ++c)
            if (c != 3 && c != 7) CHECK(out.labels(i, c) == 0.0);
    }
}

TEST_CASE("mixup preserves batch sums and the label simplex") {
    Rng rng(7);
    for (int rep = 0; rep < 100; ++rep) {
        const ImageBatch b = random_batch(6, 4, rng);
        const ImageBatch out = mixup(b, 0.8, rng);
        out.check_labels();
        double sum_in = 0.0, sum_out = 0.0;
        for (double v : b.pixels) sum_in += v;
        for (double v : out.pixels) sum_out += v;
        // The permutation shuffles, mixing is convex: total pixel mass is
        // conserved.
        CHECK(std::abs(sum_in - sum_out) < 1e-9 * b.pixels.size());
        for (std::size_t c = 0; c < 4; ++c) {
            double col_in = 0.0, col_out = 0.0;
            for (std::size_t i = 0; i < 6; ++i) {
                col_in += b.labels(i, c);
                col_out += out.labels(i, c);
            }
            CHECK(std::abs(col_in - col_out) < 1e-9);
        }
    }
}

TEST_CASE("mixup rejects degenerate inputs") {
    Rng rng(9);
    CHECK_THROWS_AS(mixup(make_batch(1, 2), 0.5, rng), Error);
    CHECK_THROWS_AS(mixup(make_batch(4, 2), 0.0, rng), ConfigError);
}

TEST_CASE("cutmix label weights equal the realized pasted fraction") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const ImageBatch b = tagged_batch(6, 6);
        const ImageBatch out = cutmix(b, 1.0, rng);
        out.check_labels();
        for (std::size_t i = 0; i < 6; ++i) {
            std::size_t pasted_pixels = 0;
            for (std::size_t y = 0; y < b.h; ++y)
                for (std::size_t x = 0; x < b.w; ++x)
                    if (out.at(i, 0, y, x) != static_cast<double>(i)) ++pasted_pixels;
            const double fraction =
                static_cast<double>(pasted_pixels) / static_cast<double>(b.h * b.w);
            // Constant distinct tags: counted foreign pixels are exactly the
            // pasted rectangle unless the partner happens to be the image
            // itself, in which case the label stays one-hot.
            const double own = out.labels(i, i);
            if (own == 1.0) continue;
            CHECK(own == doctest::Approx(1.0 - fraction).epsilon(1e-12));
        }
    }
}

TEST_CASE("cutmix rejects degenerate inputs") {
    Rng rng(13);
    CHECK_THROWS_AS(cutmix(make_batch(1, 2), 1.0, rng), Error);
    CHECK_THROWS_AS(cutmix(make_batch(4, 2), 0.0, rng), ConfigError);
}

TEST_CASE("label smoothing hand examples") {
    Matrix onehot(1, 100);
    onehot(0, 17) = 1.0;
    const Matrix same = label_smooth(onehot, 0.0, 100);
    for (std::size_t c = 0; c < 100; ++c) CHECK(same(0, c) == onehot(0, c));

    const Matrix smoothed = label_smooth(onehot, 0.1, 100);
    const double hot = (1.0 - 0.1) * 1.0 + 0.1 / 100.0;
    const double cold = 0.1 / 100.0;
    CHECK(smoothed(0, 17) == hot);
    CHECK(smoothed(0, 0) == cold);
    double sum = 0.0;
    for (std::size_t c = 0; c < 100; ++c) sum += smoothed(0, c);
    CHECK(std::abs(sum - 1.0) < 1e-9);

    CHECK_THROWS_AS(label_smooth(onehot, 1.0, 100), ConfigError);
    CHECK_THROWS_AS(label_smooth(onehot, -0.1, 100), ConfigError);
    CHECK_THROWS_AS(label_smooth(onehot, 0.1, 50), DimensionError);
}

TEST_CASE("random erase with probability zero is the identity") {
    Rng rng(17);
    const ImageBatch b = random_batch(4, 3, rng);
    const ImageBatch out = random_erase(b, 0.0, rng);
    CHECK(max_pixel_diff(b, out) == 0.0);
}

TEST_CASE("random erase hits roughly the configured fraction of images") {
    Rng rng(19);
    std::size_t touched = 0;
    const std::size_t total = 1000;
    for (std::size_t i = 0; i < total; ++i) {
        ImageBatch b = make_batch(1, 2);
        for (double& v : b.pixels) v = 2.0;  // outside the erase fill range
        b.labels(0, 0) = 1.0;
        const ImageBatch out = random_erase(b, 0.25, rng);
        if (max_pixel_diff(b, out) > 0.0) ++touched;
        // Labels are never modified.
        CHECK(out.labels(0, 0) == 1.0);
    }
    const double fraction = static_cast<double>(touched) / static_cast<double>(total);
    CHECK(fraction > 0.20);
    CHECK(fraction < 0.30);
}

TEST_CASE("rand augment identity cases") {
    Rng rng(23);
    const ImageBatch b = random_batch(3, 2, rng);
    Rng r1(99);
    CHECK(max_pixel_diff(b, rand_augment_lite(b, 0, 9, r1)) == 0.0);
    Rng r2(99);
    // Magnitude zero: every op degenerates to (numerically) the identity.
    CHECK(max_pixel_diff(b, rand_augment_lite(b, 2, 0, r2)) < 1e-12);
    Rng r3(99);
    CHECK_THROWS_AS(rand_augment_lite(b, 2, 31, r3), ConfigError);
}

TEST_CASE("rand augment replays deterministically") {
    Rng data_rng(29);
    const ImageBatch b = random_batch(4, 3, data_rng);
    Rng r1(1234);
    Rng r2(1234);
    const ImageBatch a1 = rand_augment_lite(b, 2, 9, r1);
    const ImageBatch a2 = rand_augment_lite(b, 2, 9, r2);
    CHECK(max_pixel_diff(a1, a2) == 0.0);
    Rng r3(5678);
    const ImageBatch a3 = rand_augment_lite(b, 2, 9, r3);
    CHECK(max_pixel_diff(a1, a3) > 0.0);
}

TEST_CASE("full recipe keeps pixels in the standardized range") {
    Rng rng(31);
    const RecipeConfig cfg = RecipeConfig::preset(RecipeVariant::Full);
    for (int rep = 0; rep < 200; ++rep) {
        const ImageBatch b = random_batch(4, 5, rng);
        Rng recipe_rng(mix_seed(7, rep));
        const ImageBatch out = apply_recipe(b, cfg, recipe_rng);
        for (double v : out.pixels) {
            CHECK(v <= 3.0 + 1e-9);
            CHECK(v >= -3.0 - 1e-9);
        }
    }
}

TEST_CASE("full recipe emits simplex labels across seeded batches") {
    Rng rng(37);
    const RecipeConfig cfg = RecipeConfig::preset(RecipeVariant::Full);
    for (int rep = 0; rep < 1000; ++rep) {
        const ImageBatch b = random_batch(4, 6, rng);
        Rng recipe_rng(mix_seed(11, rep));
        const ImageBatch out = apply_recipe(b, cfg, recipe_rng);
        for (std::size_t i = 0; i < out.labels.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t c = 0; c < out.labels.cols(); ++c) {
                CHECK(out.labels(i, c) >= 0.0);
                sum += out.labels(i, c);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("ablated recipe variants") {
    Rng rng(41);
    const ImageBatch b = random_batch(5, 4, rng);

    Rng r1(3);
    const ImageBatch none = apply_recipe(b, RecipeConfig::preset(RecipeVariant::NoMixNoRand), r1);
    CHECK(max_pixel_diff(b, none) == 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 4; ++c) CHECK(none.labels(i, c) == b.labels(i, c));

    Rng r2(3);
    const ImageBatch nomix = apply_recipe(b, RecipeConfig::preset(RecipeVariant::NoMix), r2);
    for (std::size_t i = 0; i < 5; ++i) {
        // Augmentation only: labels stay exactly one-hot.
        double sum = 0.0;
        std::size_t ones = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            sum += nomix.labels(i, c);
            if (nomix.labels(i, c) == 1.0) ++ones;
        }
        CHECK(sum == 1.0);
        CHECK(ones == 1);
    }
}

TEST_CASE("recipe validation enforces the variant coupling") {
    RecipeConfig cfg = RecipeConfig::preset(RecipeVariant::NoMix);
    cfg.label_smoothing = 0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    RecipeConfig cfg2 = RecipeConfig::preset(RecipeVariant::NoRand);
    cfg2.erase_prob = 0.25;
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);

    RecipeConfig cfg3 = RecipeConfig::preset(RecipeVariant::Full);
    cfg3.mix_prob = 1.5;
    CHECK_THROWS_AS(cfg3.validate(), ConfigError);

    CHECK(recipe_variant_from_string("no_mix_no_rand") == RecipeVariant::NoMixNoRand);
    CHECK_THROWS_AS(recipe_variant_from_string("half"), ConfigError);
}

namespace {

Matrix softmax_rows(const Matrix& z) {
    Matrix p = z;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double mx = z(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            p(i, j) = std::exp(z(i, j) - mx);
            sum += p(i, j);
        }
        for (std::size_t j = 0; j < z.cols(); ++j) p(i, j) /= sum;
    }
    return p;
}

std::size_t numerical_rank(const Matrix& m) {
    const std::vector<double> sv = singular_values(m);
    std::size_t rank = 0;
    for (double s : sv)
        if (s > 1e-8 * sv.front()) ++rank;
    return rank;
}

// Softmax cross-entropy gradient of a linear layer: sum_i (p_i - y_i) x_i^T.
Matrix linear_gradient(const Matrix& w, const Matrix& x, const Matrix& y) {
    const Matrix p = softmax_rows(matmul_nt(x, w));
    Matrix g(w.rows(), w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t c = 0; c < w.rows(); ++c)
            for (std::size_t d = 0; d < w.cols(); ++d)
                g(c, d) += (p(i, c) - y(i, c)) * x(i, d);
    return g;
}

}  // namespace

TEST_CASE("mixup does not reduce minibatch gradient rank") {
    // Fixed random linear layer; batches built from duplicated examples so
    // the plain gradient collapses onto few directions.
    Rng wrng(99);
    const std::size_t C = 5, D = 12, distinct = 3, copies = 2;
    Matrix w(C, D);
    for (double& v : w.raw()) v = 0.3 * wrng.normal();

    int ge = 0;
    const int seeds = 200;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(mix_seed(1000, seed));
        ImageBatch b = make_batch(distinct * copies, C, 4, 1);  // 4x4 = 16 >= D unused tail
        for (std::size_t k = 0; k < distinct; ++k) {
            std::vector<double> img(b.h * b.w);
            for (double& v : img) v = rng.normal();
            const std::size_t cls = rng.below(C);
            for (std::size_t cp = 0; cp < copies; ++cp) {
                const std::size_t i = k * copies + cp;
                for (std::size_t px = 0; px < img.size(); ++px) b.pixels[i * img.size() + px] = img[px];
                b.labels(i, cls) = 1.0;
            }
        }
        auto features = [&](const ImageBatch& batch) {
            Matrix x(batch.n, D);
            for (std::size_t i = 0; i < batch.n; ++i)
                for (std::size_t d = 0; d < D; ++d) x(i, d) = batch.pixels[i * b.h * b.w + d];
            return x;
        };
        const std::size_t plain = numerical_rank(linear_gradient(w, features(b), b.labels));
        const ImageBatch mixed = mixup(b, 0.8, rng);
        const std::size_t enriched =
            numerical_rank(linear_gradient(w, features(mixed), mixed.labels));
        if (enriched >= plain) ++ge;
    }
    CHECK(ge >= seeds * 95 / 100);
}
