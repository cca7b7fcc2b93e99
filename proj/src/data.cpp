#include "muonlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace muonlab {
namespace {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& who) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(who + ": expected key = value, got '" + line + "'");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        const long long n = std::stoll(v);
        if (n < 0) throw ConfigError(key + " must be non-negative");
        return static_cast<std::size_t>(n);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
}

double parse_real(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError("bad real for " + key + ": '" + v + "'");
    }
}

// Class signature plus per-record draw for the GaussianBlobs generator.
struct Blob {
    double cx, cy, sigma, amp;
};

std::vector<Blob> blob_signature(Rng& rng, std::size_t size) {
    std::vector<Blob> blobs(3);
    for (auto& b : blobs) {
        b.cx = rng.uniform(0.2, 0.8) * static_cast<double>(size);
        b.cy = rng.uniform(0.2, 0.8) * static_cast<double>(size);
        b.sigma = rng.uniform(0.08, 0.2) * static_cast<double>(size);
        b.amp = rng.uniform(0.5, 1.0);
    }
    return blobs;
}

struct Wave {
    double fx, fy, phase, amp;
};

std::vector<Wave> wave_signature(Rng& rng) {
    std::vector<Wave> waves(3);
    for (auto& w : waves) {
        w.fx = static_cast<double>(rng.below(4) + 1);
        w.fy = static_cast<double>(rng.below(4) + 1);
        w.phase = rng.uniform(0.0, 6.283185307179586477);
        w.amp = rng.uniform(0.3, 1.0);
    }
    return waves;
}

constexpr double kNoiseStd = 0.25;

Matrix render_record(const DatasetSpec& spec, std::size_t cls, std::size_t sample_idx) {
    const std::size_t sz = spec.image_size;
    Matrix rec(spec.channels * sz, sz);
    Rng sig_rng(mix_seed(spec.seed, cls, 0));
    Rng rec_rng(mix_seed(spec.seed, cls * 1000003 + 1, sample_idx + 1));
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        if (spec.generator == DataGenerator::GaussianBlobs) {
            const auto blobs = blob_signature(sig_rng, sz);
            for (std::size_t y = 0; y < sz; ++y) {
                for (std::size_t x = 0; x < sz; ++x) {
                    double v = 0.0;
                    for (const auto& b : blobs) {
                        const double dx = static_cast<double>(x) - b.cx;
                        const double dy = static_cast<double>(y) - b.cy;
                        v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                    }
                    rec(ch * sz + y, x) = v;
                }
            }
        } else {
            const auto waves = wave_signature(sig_rng);
            const double jitter = rec_rng.uniform(0.0, 0.5);
            for (std::size_t y = 0; y < sz; ++y) {
                for (std::size_t x = 0; x < sz; ++x) {
                    double v = 0.0;
                    for (const auto& w : waves) {
                        const double arg = 6.283185307179586477 *
                                               (w.fx * static_cast<double>(x) +
                                                w.fy * static_cast<double>(y)) /
                                               static_cast<double>(sz) +
                                           w.phase + jitter;
                        v += w.amp * std::sin(arg);
                    }
                    rec(ch * sz + y, x) = v;
                }
            }
        }
        for (std::size_t y = 0; y < sz; ++y)
            for (std::size_t x = 0; x < sz; ++x)
                rec(ch * sz + y, x) += kNoiseStd * rec_rng.normal();
    }
    return rec;
}

}  // namespace

DataGenerator data_generator_from_string(const std::string& s) {
    if (s == "gaussian_blobs") return DataGenerator::GaussianBlobs;
    if (s == "texture_patches") return DataGenerator::TexturePatches;
    throw ConfigError("unknown generator: '" + s + "'");
}

std::string to_string(DataGenerator generator) {
    return generator == DataGenerator::GaussianBlobs ? "gaussian_blobs" : "texture_patches";
}

DatasetSpec DatasetSpec::preset(const std::string& name) {
    DatasetSpec spec;
    if (name == "in-mini") {
        spec.num_classes = 10;
        spec.balanced = true;
        spec.samples_per_class = 500;
    } else if (name == "lt-mini") {
        spec.num_classes = 50;
        spec.balanced = false;
        spec.zipf_s = 1.2;
        spec.total = 5000;
    } else {
        throw ConfigError("unknown dataset preset: '" + name + "'");
    }
    return spec;
}

DatasetSpec DatasetSpec::parse_file(const std::string& path) {
    auto kv = parse_kv(read_file(path), path);
    DatasetSpec spec;
    if (auto it = kv.find("preset"); it != kv.end()) {
        spec = preset(it->second);
        kv.erase(it);
    }
    for (const auto& [key, value] : kv) {
        if (key == "num_classes") spec.num_classes = parse_size(value, key);
        else if (key == "profile") {
            if (value == "balanced") spec.balanced = true;
            else if (value == "zipf") spec.balanced = false;
            else throw ConfigError("profile must be balanced or zipf, got '" + value + "'");
        } else if (key == "samples_per_class") spec.samples_per_class = parse_size(value, key);
        else if (key == "zipf_s") spec.zipf_s = parse_real(value, key);
        else if (key == "total") spec.total = parse_size(value, key);
        else if (key == "image_size") spec.image_size = parse_size(value, key);
        else if (key == "channels") spec.channels = parse_size(value, key);
        else if (key == "generator") spec.generator = data_generator_from_string(value);
        else if (key == "seed") spec.seed = parse_size(value, key);
        else throw ConfigError("unknown dataset key: '" + key + "'");
    }
    spec.validate();
    return spec;
}

void DatasetSpec::validate() const {
    if (num_classes == 0) throw ConfigError("num_classes must be positive");
    if (image_size == 0 || channels == 0) throw ConfigError("image dimensions must be positive");
    if (balanced) {
        if (samples_per_class < 3)
            throw ConfigError("samples_per_class must be >= 3 for a stratified 75/25 split");
    } else {
        if (zipf_s <= 0.0) throw ConfigError("zipf_s must be positive");
        if (total == 0) throw ConfigError("total must be positive");
        for (std::size_t n : class_counts())
            if (n < 3)
                throw ConfigError("long-tail profile leaves a class with fewer than 3 samples; "
                                  "raise total or lower zipf_s");
    }
}

std::vector<std::size_t> DatasetSpec::class_counts() const {
    std::vector<std::size_t> counts(num_classes);
    if (balanced) {
        std::fill(counts.begin(), counts.end(), samples_per_class);
        return counts;
    }
    double z = 0.0;
    for (std::size_t c = 1; c <= num_classes; ++c) z += std::pow(static_cast<double>(c), -zipf_s);
    for (std::size_t c = 1; c <= num_classes; ++c) {
        const double share = static_cast<double>(total) * std::pow(static_cast<double>(c), -zipf_s) / z;
        counts[c - 1] = static_cast<std::size_t>(std::ceil(share));
    }
    return counts;
}

void generate_dataset(const DatasetSpec& spec, const std::string& dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory: " + dir);

    const auto counts = spec.class_counts();
    std::size_t total_records = 0;
    for (std::size_t n : counts) total_records += n;

    std::string images;
    std::vector<std::size_t> record_class;
    record_class.reserve(total_records);
    SplitIndex split;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const std::size_t n = counts[c];
        const std::size_t val_n = std::max<std::size_t>(1, n / 4);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t rec = record_class.size();
            write_matrix_stream(render_record(spec, c, i), images, MatrixDtype::F32);
            record_class.push_back(c);
            // Per-class tail goes to validation so the split is stratified.
            if (i < n - val_n) split.train.emplace_back(rec, c);
            else split.val.emplace_back(rec, c);
        }
    }

    // Per-channel standardization stats over the train split.
    const std::size_t plane = spec.image_size * spec.image_size;
    std::vector<double> mean(spec.channels, 0.0), var(spec.channels, 0.0);
    {
        std::vector<double> sum(spec.channels, 0.0), sumsq(spec.channels, 0.0);
        const std::size_t rec_bytes = images.size() / total_records;
        for (const auto& [rec, cls] : split.train) {
            std::size_t offset = rec * rec_bytes;
            const Matrix m = read_matrix_stream(images, offset);
            for (std::size_t ch = 0; ch < spec.channels; ++ch) {
                for (std::size_t j = 0; j < plane; ++j) {
                    const double v = m.data()[ch * plane + j];
                    sum[ch] += v;
                    sumsq[ch] += v * v;
                }
            }
        }
        const double n = static_cast<double>(split.train.size() * plane);
        for (std::size_t ch = 0; ch < spec.channels; ++ch) {
            mean[ch] = sum[ch] / n;
            var[ch] = std::max(sumsq[ch] / n - mean[ch] * mean[ch], 1e-12);
        }
    }

    std::ostringstream manifest;
    manifest << "format_version = 1\n";
    manifest << "generator = " << to_string(spec.generator) << "\n";
    manifest << "num_classes = " << spec.num_classes << "\n";
    manifest << "profile = " << (spec.balanced ? "balanced" : "zipf") << "\n";
    if (spec.balanced) {
        manifest << "samples_per_class = " << spec.samples_per_class << "\n";
    } else {
        manifest << "zipf_s = " << fmt_g17(spec.zipf_s) << "\n";
        manifest << "total = " << spec.total << "\n";
    }
    manifest << "image_size = " << spec.image_size << "\n";
    manifest << "channels = " << spec.channels << "\n";
    manifest << "seed = " << spec.seed << "\n";
    manifest << "total_records = " << total_records << "\n";
    manifest << "train_records = " << split.train.size() << "\n";
    manifest << "val_records = " << split.val.size() << "\n";
    manifest << "head_count = " << counts.front() << "\n";
    manifest << "tail_count = " << counts.back() << "\n";
    manifest << "head_to_tail_ratio = "
             << fmt_g17(static_cast<double>(counts.front()) / static_cast<double>(counts.back()))
             << "\n";
    manifest << "class_counts =";
    for (std::size_t n : counts) manifest << " " << n;
    manifest << "\n";
    manifest << "channel_mean =";
    for (double v : mean) manifest << " " << fmt_g17(v);
    manifest << "\n";
    manifest << "channel_std =";
    for (double v : var) manifest << " " << fmt_g17(std::sqrt(v));
    manifest << "\n";

    std::ostringstream split_text;
    for (const auto& [rec, cls] : split.train) split_text << "train " << rec << " " << cls << "\n";
    for (const auto& [rec, cls] : split.val) split_text << "val " << rec << " " << cls << "\n";

    Matrix labels(1, total_records);
    for (std::size_t i = 0; i < total_records; ++i)
        labels(0, i) = static_cast<double>(record_class[i]);

    write_file(dir + "/images.bin", images);
    std::string labels_bytes;
    write_matrix_stream(labels, labels_bytes, MatrixDtype::F64);
    write_file(dir + "/labels.mlab", labels_bytes);
    write_file(dir + "/split.txt", split_text.str());
    write_file(dir + "/manifest.txt", manifest.str());
}

Dataset Dataset::open(const std::string& dir) {
    Dataset ds;
    const auto kv = parse_kv(read_file(dir + "/manifest.txt"), dir + "/manifest.txt");
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw IoError("manifest missing key: " + key);
        return it->second;
    };
    if (need("format_version") != "1") throw IoError("unsupported dataset format version");
    DatasetSpec& spec = ds.spec_;
    spec.generator = data_generator_from_string(need("generator"));
    spec.num_classes = parse_size(need("num_classes"), "num_classes");
    spec.balanced = need("profile") == "balanced";
    if (spec.balanced) {
        spec.samples_per_class = parse_size(need("samples_per_class"), "samples_per_class");
    } else {
        spec.zipf_s = parse_real(need("zipf_s"), "zipf_s");
        spec.total = parse_size(need("total"), "total");
    }
    spec.image_size = parse_size(need("image_size"), "image_size");
    spec.channels = parse_size(need("channels"), "channels");
    spec.seed = parse_size(need("seed"), "seed");

    auto parse_reals = [](const std::string& text) {
        std::vector<double> out;
        std::istringstream in(text);
        double v;
        while (in >> v) out.push_back(v);
        return out;
    };
    ds.channel_mean_ = parse_reals(need("channel_mean"));
    ds.channel_std_ = parse_reals(need("channel_std"));
    if (ds.channel_mean_.size() != spec.channels || ds.channel_std_.size() != spec.channels)
        throw IoError("manifest standardization stats do not match channel count");

    const std::size_t total = parse_size(need("total_records"), "total_records");
    const std::string labels_bytes = read_file(dir + "/labels.mlab");
    std::size_t offset = 0;
    const Matrix labels = read_matrix_stream(labels_bytes, offset);
    if (labels.rows() != 1 || labels.cols() != total) throw IoError("labels file does not match manifest");
    ds.record_class_.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double c = labels(0, i);
        if (c < 0 || c >= static_cast<double>(spec.num_classes) || c != std::floor(c))
            throw IoError("labels file contains an invalid class id");
        ds.record_class_[i] = static_cast<std::size_t>(c);
    }

    const std::string images = read_file(dir + "/images.bin");
    const std::size_t plane = spec.image_size * spec.image_size;
    ds.images_.reserve(total * spec.channels * plane);
    offset = 0;
    for (std::size_t i = 0; i < total; ++i) {
        const Matrix rec = read_matrix_stream(images, offset);
        if (rec.rows() != spec.channels * spec.image_size || rec.cols() != spec.image_size)
            throw IoError("record shape does not match manifest");
        for (double v : rec.raw()) ds.images_.push_back(static_cast<float>(v));
    }
    if (offset != images.size()) throw IoError("trailing bytes in images file");

    std::istringstream split_in(read_file(dir + "/split.txt"));
    std::string tag;
    std::size_t rec, cls;
    while (split_in >> tag >> rec >> cls) {
        if (rec >= total || cls != ds.record_class_[rec]) throw IoError("split entry inconsistent with labels");
        if (tag == "train") ds.split_.train.emplace_back(rec, cls);
        else if (tag == "val") ds.split_.val.emplace_back(rec, cls);
        else throw IoError("bad split tag: '" + tag + "'");
    }
    if (ds.split_.train.empty() || ds.split_.val.empty()) throw IoError("split file has an empty split");
    if (ds.split_.train.size() + ds.split_.val.size() != total)
        throw IoError("split does not cover every record exactly once");
    return ds;
}

std::size_t Dataset::split_size(Split split) const {
    return split == Split::Train ? split_.train.size() : split_.val.size();
}

ImageBatch Dataset::load_batch(Split split, const std::vector<std::size_t>& indices,
                               bool standardize) const {
    if (indices.empty()) throw DimensionError("load_batch: empty index list");
    const auto& entries = split == Split::Train ? split_.train : split_.val;
    ImageBatch batch;
    batch.n = indices.size();
    batch.c = spec_.channels;
    batch.h = spec_.image_size;
    batch.w = spec_.image_size;
    batch.pixels.resize(batch.n * batch.c * batch.h * batch.w);
    batch.labels = Matrix(batch.n, spec_.num_classes);
    const std::size_t rec_len = batch.c * batch.h * batch.w;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= entries.size())
            throw DimensionError("load_batch: index " + std::to_string(indices[i]) +
                                 " out of split bounds");
        const auto [rec, cls] = entries[indices[i]];
        const float* src = images_.data() + rec * rec_len;
        for (std::size_t ch = 0; ch < batch.c; ++ch) {
            const std::size_t plane = batch.h * batch.w;
            for (std::size_t j = 0; j < plane; ++j) {
                double v = src[ch * plane + j];
                if (standardize) v = (v - channel_mean_[ch]) / channel_std_[ch];
                batch.pixels[(i * batch.c + ch) * plane + j] = v;
            }
        }
        batch.labels(i, cls) = 1.0;
    }
    return batch;
}

std::vector<std::size_t> Dataset::class_histogram() const {
    std::vector<std::size_t> counts(spec_.num_classes, 0);
    for (const auto& [rec, cls] : split_.train) ++counts[cls];
    return counts;
}

}  // namespace muonlab
