#include "muonlab/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "muonlab/data.hpp"

namespace muonlab {
namespace {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

// Sectioned key = value document, keys stored as "section.key".
std::map<std::string, std::string> parse_sections(const std::string& text, const std::string& who) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(who + ":" + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(who + ":" + std::to_string(line_no) + ": expected key = value, got '" +
                              line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.count(full))
            throw ConfigError(who + ":" + std::to_string(line_no) + ": duplicate key " + full);
        kv[full] = trim(line.substr(eq + 1));
    }
    return kv;
}

long to_long(const std::string& v, const std::string& key) {
    try {
        return std::stol(v);
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
}

double to_real(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError("bad real for " + key + ": '" + v + "'");
    }
}

}  // namespace

OptimizerSection optimizer_preset(const std::string& name) {
    OptimizerSection opt;
    if (name == "muon-1e-3") {
        opt.policy = DispatchPolicy::MatrixToMuon;
        opt.muon.lr = 1e-3;
    } else if (name == "adamw-3e-4") {
        opt.policy = DispatchPolicy::AllAdamW;
        opt.adamw.lr = 3e-4;
    } else {
        throw ConfigError("unknown optimizer preset: '" + name + "'");
    }
    return opt;
}

RunConfig RunConfig::parse_text(const std::string& text, const std::string& who) {
    auto kv = parse_sections(text, who);
    RunConfig cfg;
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };

    if (auto v = take("version"); v && *v != "1")
        throw ConfigError(who + ": unsupported config version " + *v);
    if (auto v = take("name")) cfg.name = *v;
    if (auto v = take("seed")) cfg.seed = to_u64(*v, "seed");

    if (auto v = take("dataset.path")) cfg.dataset_path = *v;

    if (auto v = take("model.image_size")) cfg.model.image_size = to_long(*v, "image_size");
    if (auto v = take("model.patch_size")) cfg.model.patch_size = to_long(*v, "patch_size");
    if (auto v = take("model.embed_dim")) cfg.model.embed_dim = to_long(*v, "embed_dim");
    if (auto v = take("model.depth")) cfg.model.depth = to_long(*v, "depth");
    if (auto v = take("model.heads")) cfg.model.heads = to_long(*v, "heads");
    if (auto v = take("model.mlp_ratio")) cfg.model.mlp_ratio = to_real(*v, "mlp_ratio");
    if (auto v = take("model.num_classes")) cfg.model.num_classes = to_long(*v, "num_classes");

    if (auto v = take("recipe.preset")) cfg.recipe = RecipeConfig::preset(recipe_variant_from_string(*v));
    if (auto v = take("recipe.mixup_alpha")) cfg.recipe.mixup_alpha = to_real(*v, "mixup_alpha");
    if (auto v = take("recipe.cutmix_alpha")) cfg.recipe.cutmix_alpha = to_real(*v, "cutmix_alpha");
    if (auto v = take("recipe.mix_prob")) cfg.recipe.mix_prob = to_real(*v, "mix_prob");
    if (auto v = take("recipe.switch_prob")) cfg.recipe.switch_prob = to_real(*v, "switch_prob");
    if (auto v = take("recipe.label_smoothing")) cfg.recipe.label_smoothing = to_real(*v, "label_smoothing");
    if (auto v = take("recipe.randaug_ops")) cfg.recipe.randaug_ops = static_cast<int>(to_long(*v, "randaug_ops"));
    if (auto v = take("recipe.randaug_magnitude"))
        cfg.recipe.randaug_magnitude = static_cast<int>(to_long(*v, "randaug_magnitude"));
    if (auto v = take("recipe.erase_prob")) cfg.recipe.erase_prob = to_real(*v, "erase_prob");

    if (auto v = take("optimizer.preset")) cfg.optimizer = optimizer_preset(*v);
    if (auto v = take("optimizer.policy")) cfg.optimizer.policy = dispatch_policy_from_string(*v);
    if (auto v = take("optimizer.muon_lr")) cfg.optimizer.muon.lr = to_real(*v, "muon_lr");
    if (auto v = take("optimizer.muon_beta")) cfg.optimizer.muon.beta = to_real(*v, "muon_beta");
    if (auto v = take("optimizer.muon_weight_decay"))
        cfg.optimizer.muon.weight_decay = to_real(*v, "muon_weight_decay");
    if (auto v = take("optimizer.rms_scale")) cfg.optimizer.muon.rms_scale = to_real(*v, "rms_scale");
    if (auto v = take("optimizer.ns_schedule")) cfg.optimizer.ns_schedule = *v;
    if (auto v = take("optimizer.adamw_lr")) cfg.optimizer.adamw.lr = to_real(*v, "adamw_lr");
    if (auto v = take("optimizer.adamw_beta1")) cfg.optimizer.adamw.beta1 = to_real(*v, "adamw_beta1");
    if (auto v = take("optimizer.adamw_beta2")) cfg.optimizer.adamw.beta2 = to_real(*v, "adamw_beta2");
    if (auto v = take("optimizer.adamw_eps")) cfg.optimizer.adamw.eps = to_real(*v, "adamw_eps");
    if (auto v = take("optimizer.adamw_weight_decay"))
        cfg.optimizer.adamw.weight_decay = to_real(*v, "adamw_weight_decay");
    if (auto v = take("optimizer.lr_min_ratio")) cfg.optimizer.lr_min_ratio = to_real(*v, "lr_min_ratio");

    if (auto v = take("train.total_steps")) cfg.total_steps = to_long(*v, "total_steps");
    if (auto v = take("train.batch_size")) cfg.batch_size = to_long(*v, "batch_size");
    if (auto v = take("train.eval_every")) cfg.eval_every = to_long(*v, "eval_every");

    if (auto v = take("tap.every")) cfg.tap_every = to_long(*v, "tap.every");
    if (auto v = take("tap.steps")) {
        std::istringstream in(*v);
        long s;
        while (in >> s) cfg.tap.steps.insert(s);
    }
    if (auto v = take("tap.families")) {
        std::istringstream in(*v);
        std::string f;
        while (in >> f) cfg.tap.families.insert(block_family_from_string(f));
    }
    if (auto v = take("tap.kinds")) {
        cfg.tap.kinds.clear();
        std::istringstream in(*v);
        std::string k;
        while (in >> k) cfg.tap.kinds.insert(snapshot_kind_from_string(k));
    }

    if (!kv.empty()) throw ConfigError(who + ": unknown key '" + kv.begin()->first + "'");
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    return parse_text(read_file(path), path);
}

void RunConfig::validate() const {
    if (name.empty()) throw ConfigError("run name must be non-empty");
    for (char c : name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
            throw ConfigError("run name may only use alphanumerics, '-' and '_'");
    if (dataset_path.empty()) throw ConfigError("dataset.path is required");
    model.validate();
    recipe.validate();
    if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
    if (tap_every < 0) throw ConfigError("tap.every must be non-negative");
    if (optimizer.muon.lr < 0 || optimizer.adamw.lr < 0) throw ConfigError("learning rates must be non-negative");
    if (optimizer.lr_min_ratio < 0.0 || optimizer.lr_min_ratio > 1.0)
        throw ConfigError("lr_min_ratio must lie in [0, 1]");
    TapSchedule expanded = tap;
    if (tap_every > 0)
        for (long s = 0; s < total_steps; s += tap_every) expanded.steps.insert(s);
    expanded.validate(total_steps);
}

std::string RunConfig::serialize() const {
    std::ostringstream out;
    out << "version = 1\n";
    out << "name = " << name << "\n";
    out << "seed = " << seed << "\n\n";
    out << "[dataset]\n";
    out << "path = " << dataset_path << "\n\n";
    out << "[model]\n";
    out << "image_size = " << model.image_size << "\n";
    out << "patch_size = " << model.patch_size << "\n";
    out << "embed_dim = " << model.embed_dim << "\n";
    out << "depth = " << model.depth << "\n";
    out << "heads = " << model.heads << "\n";
    out << "mlp_ratio = " << fmt_g17(model.mlp_ratio) << "\n";
    out << "num_classes = " << model.num_classes << "\n\n";
    out << "[recipe]\n";
    out << "preset = " << to_string(recipe.variant) << "\n";
    out << "mixup_alpha = " << fmt_g17(recipe.mixup_alpha) << "\n";
    out << "cutmix_alpha = " << fmt_g17(recipe.cutmix_alpha) << "\n";
    out << "mix_prob = " << fmt_g17(recipe.mix_prob) << "\n";
    out << "switch_prob = " << fmt_g17(recipe.switch_prob) << "\n";
    out << "label_smoothing = " << fmt_g17(recipe.label_smoothing) << "\n";
    out << "randaug_ops = " << recipe.randaug_ops << "\n";
    out << "randaug_magnitude = " << recipe.randaug_magnitude << "\n";
    out << "erase_prob = " << fmt_g17(recipe.erase_prob) << "\n\n";
    out << "[optimizer]\n";
    out << "policy = " << to_string(optimizer.policy) << "\n";
    out << "muon_lr = " << fmt_g17(optimizer.muon.lr) << "\n";
    out << "muon_beta = " << fmt_g17(optimizer.muon.beta) << "\n";
    out << "muon_weight_decay = " << fmt_g17(optimizer.muon.weight_decay) << "\n";
    out << "rms_scale = " << fmt_g17(optimizer.muon.rms_scale) << "\n";
    out << "ns_schedule = " << optimizer.ns_schedule << "\n";
    out << "adamw_lr = " << fmt_g17(optimizer.adamw.lr) << "\n";
    out << "adamw_beta1 = " << fmt_g17(optimizer.adamw.beta1) << "\n";
    out << "adamw_beta2 = " << fmt_g17(optimizer.adamw.beta2) << "\n";
    out << "adamw_eps = " << fmt_g17(optimizer.adamw.eps) << "\n";
    out << "adamw_weight_decay = " << fmt_g17(optimizer.adamw.weight_decay) << "\n";
    out << "lr_min_ratio = " << fmt_g17(optimizer.lr_min_ratio) << "\n\n";
    out << "[train]\n";
    out << "total_steps = " << total_steps << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "eval_every = " << eval_every << "\n\n";
    out << "[tap]\n";
    out << "every = " << tap_every << "\n";
    if (!tap.steps.empty()) {
        out << "steps =";
        for (long s : tap.steps) out << " " << s;
        out << "\n";
    }
    if (!tap.families.empty()) {
        out << "families =";
        for (BlockFamily f : tap.families) out << " " << to_string(f);
        out << "\n";
    }
    out << "kinds =";
    for (SnapshotKind k : tap.kinds) out << " " << to_string(k);
    out << "\n";
    return out.str();
}

std::string RunConfig::hash8() const {
    const std::string text = serialize();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x",
                  static_cast<unsigned>((h >> 32) ^ (h & 0xffffffffULL)));
    return buf;
}

std::string run_root() {
    if (const char* env = std::getenv("MUONLAB_RUN_ROOT"); env && *env) return env;
    return "runs";
}

std::string create_run_dir(const RunConfig& cfg) {
    const std::string dir = run_root() + "/" + cfg.name + "-" + cfg.hash8();
    if (std::filesystem::exists(dir))
        throw IoError("run directory already exists, refusing to overwrite: " + dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory: " + dir);
    return dir;
}

std::string serialize_record(const RunRecord& rec) {
    std::ostringstream out;
    out << "record_version = 1\n";
    out << "name = " << rec.name << "\n";
    out << "seed = " << rec.seed << "\n";
    out << "total_steps = " << rec.total_steps << "\n";
    out << "status = " << to_string(rec.status) << "\n";
    out << "snapshots = " << rec.snapshots_written << "\n";
    out << "final_train_loss = " << fmt_g17(rec.final_train_loss) << "\n";
    out << "metrics = " << rec.metrics.size() << "\n";
    for (const MetricRow& m : rec.metrics)
        out << "metric " << m.step << " " << fmt_g17(m.loss) << " " << fmt_g17(m.top1) << " "
            << fmt_g17(m.macro_top1) << "\n";
    return out.str();
}

RunRecord parse_record(const std::string& text) {
    RunRecord rec;
    std::istringstream in(text);
    std::string line;
    std::size_t declared_metrics = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "metric") {
            MetricRow m;
            ls >> m.step >> m.loss >> m.top1 >> m.macro_top1;
            if (!ls) throw IoError("malformed metric line: " + line);
            if (!rec.metrics.empty() && m.step <= rec.metrics.back().step)
                throw IoError("metric steps are not strictly increasing");
            rec.metrics.push_back(m);
            continue;
        }
        std::string eq, value;
        ls >> eq;
        std::getline(ls, value);
        value = trim(value);
        if (key.empty()) continue;
        if (eq != "=") throw IoError("malformed record line: " + line);
        if (key == "record_version") {
            if (value != "1") throw IoError("unsupported record version");
        } else if (key == "name") rec.name = value;
        else if (key == "seed") rec.seed = to_u64(value, key);
        else if (key == "total_steps") rec.total_steps = to_long(value, key);
        else if (key == "status") rec.status = run_status_from_string(value);
        else if (key == "snapshots") rec.snapshots_written = to_long(value, key);
        else if (key == "final_train_loss") rec.final_train_loss = to_real(value, key);
        else if (key == "metrics") declared_metrics = static_cast<std::size_t>(to_long(value, key));
        else throw IoError("unknown record key: " + key);
    }
    if (rec.metrics.size() != declared_metrics) throw IoError("record metric count mismatch");
    return rec;
}

std::string execute_run(const RunConfig& cfg) {
    cfg.validate();
    const Dataset data = Dataset::open(cfg.dataset_path);
    if (data.spec().num_classes != cfg.model.num_classes)
        throw ConfigError("model num_classes does not match the dataset");
    if (data.spec().image_size != cfg.model.image_size)
        throw ConfigError("model image_size does not match the dataset");

    const std::string dir = create_run_dir(cfg);
    write_file(dir + "/config.txt", cfg.serialize());

    VitModel model(cfg.model, data.spec().channels, cfg.seed);
    MuonConfig muon_cfg = cfg.optimizer.muon;
    muon_cfg.schedule = get_schedule(cfg.optimizer.ns_schedule);
    OptimizerBank bank(cfg.optimizer.policy, muon_cfg, cfg.optimizer.adamw);

    TrainOptions options;
    options.total_steps = cfg.total_steps;
    options.batch_size = cfg.batch_size;
    options.eval_every = cfg.eval_every;
    options.recipe = cfg.recipe;
    options.lr_min_ratio = cfg.optimizer.lr_min_ratio;
    options.tap = cfg.tap;
    if (cfg.tap_every > 0)
        for (long s = 0; s < cfg.total_steps; s += cfg.tap_every) options.tap.steps.insert(s);

    SnapshotStore store(dir + "/snapshots");
    const std::string run_id = cfg.name + "-" + cfg.hash8();
    const RunRecord rec = train(model, data, bank, options, cfg.seed, &store, run_id);

    write_file(dir + "/record.txt", serialize_record(rec));
    std::ostringstream timing;
    timing << "wall_seconds = " << fmt_g17(rec.wall_seconds) << "\n";
    timing << "images_per_second = " << fmt_g17(rec.images_per_second) << "\n";
    write_file(dir + "/timing.txt", timing.str());
    model.save_checkpoint(dir + "/checkpoint");

    if (rec.status == RunStatus::Diverged)
        throw DivergenceError("training diverged; run-failure record written to " + dir);
    return dir;
}

}  // namespace muonlab
