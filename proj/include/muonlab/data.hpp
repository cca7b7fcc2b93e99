#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muonlab/recipes.hpp"

namespace muonlab {

enum class DataGenerator { GaussianBlobs, TexturePatches };

DataGenerator data_generator_from_string(const std::string& s);
std::string to_string(DataGenerator generator);

/// Synthetic dataset specification; balanced or Zipf long-tail profile.
struct DatasetSpec {
    std::size_t num_classes = 10;
    bool balanced = true;
    std::size_t samples_per_class = 500;  // balanced profile
    double zipf_s = 1.2;                  // long-tail profile
    std::size_t total = 5000;             // long-tail profile target size
    std::size_t image_size = 32;
    std::size_t channels = 3;
    DataGenerator generator = DataGenerator::GaussianBlobs;
    std::uint64_t seed = 1;

    /// "in-mini" (10 x 500 balanced) or "lt-mini" (50 classes, Zipf 1.2).
    static DatasetSpec preset(const std::string& name);

    /// Parses a key = value spec file, with optional "preset" base.
    static DatasetSpec parse_file(const std::string& path);

    void validate() const;
    /// Per-class record counts implied by the profile.
    std::vector<std::size_t> class_counts() const;
};

enum class Split { Train, Val };

struct SplitIndex {
    std::vector<std::pair<std::size_t, std::size_t>> train;  // (record, class)
    std::vector<std::pair<std::size_t, std::size_t>> val;
};

/// Writes manifest.txt, images.bin, labels.mlab and split.txt; deterministic
/// bytes for a fixed (spec, seed).
void generate_dataset(const DatasetSpec& spec, const std::string& dir);

class Dataset {
public:
    static Dataset open(const std::string& dir);

    const DatasetSpec& spec() const { return spec_; }
    const SplitIndex& split() const { return split_; }
    std::size_t split_size(Split split) const;

    /// Batch of images by position within a split, one-hot labels; pixels
    /// standardized with the per-channel stats recorded at generation.
    ImageBatch load_batch(Split split, const std::vector<std::size_t>& indices,
                          bool standardize = true) const;

    /// Per-class train counts.
    std::vector<std::size_t> class_histogram() const;

private:
    DatasetSpec spec_;
    SplitIndex split_;
    std::vector<float> images_;  // all records, contiguous
    std::vector<std::size_t> record_class_;
    std::vector<double> channel_mean_, channel_std_;
};

}  // namespace muonlab
