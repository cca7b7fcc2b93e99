#include "muonlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "muonlab/linalg.hpp"

namespace muonlab {

namespace fs = std::filesystem;

SnapshotKind snapshot_kind_from_string(const std::string& s) {
    if (s == "gradient") return SnapshotKind::Gradient;
    if (s == "momentum") return SnapshotKind::Momentum;
    throw ConfigError("unknown snapshot kind: " + s);
}

std::string to_string(SnapshotKind kind) {
    return kind == SnapshotKind::Gradient ? "gradient" : "momentum";
}

double SpectrumSnapshot::total_energy() const {
    double acc = 0.0;
    for (double s : sigma) acc += s * s;
    return acc;
}

namespace {

void check_spectrum(const std::vector<double>& sigma) {
    if (sigma.empty()) throw NumericError("spectrum: empty singular value vector");
    double total = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (sigma[i] < 0.0) throw NumericError("spectrum: negative singular value");
        if (i > 0 && sigma[i] > sigma[i - 1] * (1.0 + 1e-12))
            throw NumericError("spectrum: singular values not non-increasing");
        total += sigma[i] * sigma[i];
    }
    if (total <= 0.0) throw NumericError("spectrum: degenerate (zero total energy)");
}

}  // namespace

double cumulative_energy(const std::vector<double>& sigma, double mu) {
    if (mu < 0.0 || mu > 1.0) throw ConfigError("cumulative_energy: mu outside [0,1]");
    check_spectrum(sigma);
    const std::size_t r = sigma.size();
    const auto k = static_cast<std::size_t>(
        std::floor(mu * static_cast<double>(r) + 1e-9));
    double head = 0.0, total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        total += sigma[i] * sigma[i];
        if (i < k) head += sigma[i] * sigma[i];
    }
    return head / total;
}

double energy_quantile_rank(const std::vector<double>& sigma, double p) {
    if (p <= 0.0 || p > 1.0) throw ConfigError("energy_quantile_rank: p outside (0,1]");
    check_spectrum(sigma);
    const std::size_t r = sigma.size();
    double total = 0.0;
    for (double s : sigma) total += s * s;
    double head = 0.0;
    for (std::size_t k = 1; k <= r; ++k) {
        head += sigma[k - 1] * sigma[k - 1];
        if (head >= p * total)
            return static_cast<double>(k) / static_cast<double>(r);
    }
    return 1.0;  // accumulated rounding; all modes needed
}

SpectrumSnapshot snapshot_from_matrix(const Matrix& m, const std::string& run_id, long step,
                                      BlockFamily family, int depth, SnapshotKind kind) {
    require_finite(m, "snapshot_from_matrix");
    SpectrumSnapshot snap;
    snap.run_id = run_id;
    snap.step = step;
    snap.family = family;
    snap.depth = depth;
    snap.kind = kind;
    snap.sigma = singular_values(m);
    return snap;
}

namespace {

using LatticeKey = std::tuple<int, int, long, int>;  // family, depth, step, kind

LatticeKey key_of(const SpectrumSnapshot& s) {
    return {static_cast<int>(s.family), s.depth, s.step, static_cast<int>(s.kind)};
}

}  // namespace

AtlasResult rank_ratio_atlas(const std::vector<SpectrumSnapshot>& run_a,
                             const std::vector<SpectrumSnapshot>& run_b, double p) {
    if (p <= 0.0 || p >= 1.0) throw ConfigError("rank_ratio_atlas: p outside (0,1)");
    std::map<LatticeKey, const SpectrumSnapshot*> a, b;
    for (const auto& s : run_a) a.emplace(key_of(s), &s);
    for (const auto& s : run_b) b.emplace(key_of(s), &s);

    AtlasResult result;
    result.p = p;
    std::set<LatticeKey> all_keys;
    for (const auto& [k, v] : a) all_keys.insert(k);
    for (const auto& [k, v] : b) all_keys.insert(k);
    for (const auto& key : all_keys) {
        auto ia = a.find(key);
        auto ib = b.find(key);
        if (ia == a.end() || ib == b.end() ||
            ia->second->total_energy() < kQuarantineEnergy ||
            ib->second->total_energy() < kQuarantineEnergy) {
            ++result.omitted;
            continue;
        }
        AtlasCell cell;
        cell.family = ia->second->family;
        cell.depth = ia->second->depth;
        cell.step = ia->second->step;
        cell.ratio = energy_quantile_rank(ia->second->sigma, p) /
                     energy_quantile_rank(ib->second->sigma, p);
        result.cells.push_back(cell);
    }
    if (result.cells.empty())
        throw Error("rank_ratio_atlas: snapshot lattices have empty intersection");
    return result;
}

CurveSummary curve_summary(const std::vector<SpectrumSnapshot>& snapshots,
                           const std::vector<double>& grid) {
    if (snapshots.empty()) throw Error("curve_summary: empty snapshot selection");
    if (grid.empty()) throw ConfigError("curve_summary: empty mu grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] <= 0.0 || grid[i] > 1.0)
            throw ConfigError("curve_summary: grid values must lie in (0,1]");
        if (i > 0 && grid[i] <= grid[i - 1])
            throw ConfigError("curve_summary: grid must be strictly increasing");
    }
    const std::size_t n = snapshots.size();
    CurveSummary out;
    out.median.grid = out.q25.grid = out.q75.grid = grid;
    out.median.values.resize(grid.size());
    out.q25.values.resize(grid.size());
    out.q75.values.resize(grid.size());
    std::vector<double> column(n);
    auto nearest_rank = [n](std::vector<double>& sorted, double q) {
        const auto rank = static_cast<std::size_t>(
            std::ceil(q * static_cast<double>(n) - 1e-12));
        return sorted[std::max<std::size_t>(rank, 1) - 1];
    };
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        for (std::size_t si = 0; si < n; ++si)
            column[si] = cumulative_energy(snapshots[si].sigma, grid[gi]);
        std::sort(column.begin(), column.end());
        out.q25.values[gi] = nearest_rank(column, 0.25);
        out.median.values[gi] = nearest_rank(column, 0.5);
        out.q75.values[gi] = nearest_rank(column, 0.75);
    }
    return out;
}

bool SnapshotFilter::matches(const SpectrumSnapshot& s) const {
    if (family && *family != s.family) return false;
    if (depth_min && s.depth < *depth_min) return false;
    if (depth_max && s.depth > *depth_max) return false;
    if (step_min && s.step < *step_min) return false;
    if (step_max && s.step > *step_max) return false;
    if (kind && *kind != s.kind) return false;
    return true;
}

SnapshotFilter parse_filter(const std::string& text) {
    SnapshotFilter filter;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos)
            throw ConfigError("filter: expected key=value, got '" + part + "'");
        const std::string key = part.substr(0, eq);
        const std::string value = part.substr(eq + 1);
        if (key == "family") filter.family = block_family_from_string(value);
        else if (key == "depth_min") filter.depth_min = std::stoi(value);
        else if (key == "depth_max") filter.depth_max = std::stoi(value);
        else if (key == "step_min") filter.step_min = std::stol(value);
        else if (key == "step_max") filter.step_max = std::stol(value);
        else if (key == "kind") filter.kind = snapshot_kind_from_string(value);
        else throw ConfigError("filter: unknown key '" + key + "'");
    }
    return filter;
}

std::vector<SpectrumSnapshot> select_snapshots(const std::vector<SpectrumSnapshot>& store,
                                               const SnapshotFilter& filter) {
    std::vector<SpectrumSnapshot> out;
    for (const auto& s : store)
        if (filter.matches(s)) out.push_back(s);
    return out;
}

SnapshotStore::SnapshotStore(std::string dir) : dir_(std::move(dir)) {}

void SnapshotStore::append(const SpectrumSnapshot& snapshot) {
    if (snapshot.run_id.find_first_of(" \t\n") != std::string::npos)
        throw ConfigError("snapshot store: run_id must not contain whitespace");
    if (snapshot.sigma.empty()) throw NumericError("snapshot store: empty sigma");
    fs::create_directories(dir_);
    const fs::path index = fs::path(dir_) / "index.txt";
    std::size_t count = 0;
    {
        std::ifstream in(index);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) ++count;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "rec_%06zu.mlab", count);
    Matrix payload(1, snapshot.sigma.size());
    for (std::size_t i = 0; i < snapshot.sigma.size(); ++i) payload(0, i) = snapshot.sigma[i];
    save_matrix(payload, (fs::path(dir_) / name).string());
    std::ofstream out(index, std::ios::app);
    if (!out) throw IoError("snapshot store: cannot append to " + index.string());
    out << snapshot.run_id << ' ' << snapshot.step << ' ' << to_string(snapshot.family) << ' '
        << snapshot.depth << ' ' << to_string(snapshot.kind) << ' ' << snapshot.sigma.size()
        << ' ' << name << '\n';
}

std::vector<SpectrumSnapshot> SnapshotStore::load_all() const {
    const fs::path index = fs::path(dir_) / "index.txt";
    std::ifstream in(index);
    if (!in) throw IoError("snapshot store: cannot open " + index.string());
    std::vector<SpectrumSnapshot> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        SpectrumSnapshot snap;
        std::string family, kind, file;
        std::size_t r = 0;
        if (!(ss >> snap.run_id >> snap.step >> family >> snap.depth >> kind >> r >> file))
            throw IoError("snapshot store: malformed index line " + std::to_string(lineno));
        snap.family = block_family_from_string(family);
        snap.kind = snapshot_kind_from_string(kind);
        Matrix payload = load_matrix((fs::path(dir_) / file).string());
        if (payload.rows() != 1 || payload.cols() != r)
            throw IoError("snapshot store: payload shape mismatch in " + file);
        snap.sigma.assign(payload.data(), payload.data() + payload.size());
        out.push_back(std::move(snap));
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_atlas_csv(const AtlasResult& atlas, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "family,depth,step,ratio,p\n";
    for (const auto& cell : atlas.cells)
        out << to_string(cell.family) << ',' << cell.depth << ',' << cell.step << ','
            << fmt(cell.ratio) << ',' << fmt(atlas.p) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

void write_atlas_pgm(const AtlasResult& atlas, const std::string& path) {
    std::set<std::pair<int, int>> row_keys;  // (family, depth)
    std::set<long> col_keys;
    for (const auto& cell : atlas.cells) {
        row_keys.insert({static_cast<int>(cell.family), cell.depth});
        col_keys.insert(cell.step);
    }
    std::map<std::pair<int, int>, int> row_of;
    std::map<long, int> col_of;
    int i = 0;
    for (const auto& k : row_keys) row_of[k] = i++;
    i = 0;
    for (long s : col_keys) col_of[s] = i++;

    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& cell : atlas.cells) {
        const double v = std::log2(cell.ratio);
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
    }
    const double span = hi > lo ? hi - lo : 1.0;

    std::vector<std::vector<int>> img(row_keys.size(),
                                      std::vector<int>(col_keys.size(), 0));
    for (const auto& cell : atlas.cells) {
        const double v = std::clamp(std::log2(cell.ratio), lo, hi);
        img[row_of[{static_cast<int>(cell.family), cell.depth}]][col_of[cell.step]] =
            static_cast<int>(std::lround((v - lo) / span * 255.0));
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << col_keys.size() << ' ' << row_keys.size() << "\n255\n";
    for (const auto& row : img)
        for (int v : row) out.put(static_cast<char>(v));

    std::ofstream meta(path + ".meta");
    if (!meta) throw IoError("cannot write " + path + ".meta");
    meta << "encoding log2_ratio\n";
    meta << "p " << fmt(atlas.p) << '\n';
    meta << "log2_min " << fmt(lo) << '\n';
    meta << "log2_max " << fmt(hi) << '\n';
    meta << "rows";
    for (const auto& [fam, depth] : row_keys)
        meta << ' ' << to_string(static_cast<BlockFamily>(fam)) << ':' << depth;
    meta << "\ncols";
    for (long s : col_keys) meta << ' ' << s;
    meta << '\n';
}

void write_curves_csv(const std::vector<std::pair<std::string, CurveSummary>>& labeled,
                      const std::string& path) {
    if (labeled.empty()) throw Error("write_curves_csv: nothing to write");
    const auto& grid = labeled.front().second.median.grid;
    for (const auto& [label, summary] : labeled)
        if (summary.median.grid != grid)
            throw Error("write_curves_csv: runs do not share a mu grid");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "mu";
    for (const auto& [label, summary] : labeled)
        out << ',' << label << "_median," << label << "_q25," << label << "_q75";
    out << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << fmt(grid[i]);
        for (const auto& [label, summary] : labeled)
            out << ',' << fmt(summary.median.values[i]) << ',' << fmt(summary.q25.values[i])
                << ',' << fmt(summary.q75.values[i]);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace muonlab
