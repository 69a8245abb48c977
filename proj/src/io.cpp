#include "rfplan/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rfplan/error.hpp"

namespace rfplan {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw ValidationError(where + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view b, std::size_t& pos) {
    if (pos + 4 > b.size()) throw ValidationError("checkpoint is truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(b[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

template <class T>
void read_key(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ValidationError(std::string("unknown ") + what + " key '" + it.key() + "'");
    }
}

json stage_to_json(const StageConfig& s) {
    return json{{"lambda1", s.lambda1}, {"lambda2", s.lambda2}, {"epochs", s.epochs}};
}

StageConfig stage_from_json(const json& j, StageConfig s) {
    reject_unknown(j, {"lambda1", "lambda2", "epochs"}, "stage config");
    read_key(j, "lambda1", s.lambda1);
    read_key(j, "lambda2", s.lambda2);
    read_key(j, "epochs", s.epochs);
    return s;
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw ValidationError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json floorplan_to_json(const Floorplan& fp) {
    json segs = json::array();
    for (const auto& s : fp.segments) segs.push_back({s.a.x, s.a.y, s.b.x, s.b.y, s.reflectance});
    json rooms = json::array();
    for (const auto& r : fp.rooms) {
        json poly = json::array();
        for (Vec2 v : r.polygon) poly.push_back({v.x, v.y});
        rooms.push_back(poly);
    }
    return json{{"grid_size", fp.grid_size},
                {"scale", fp.scale},
                {"wall_thickness", fp.wall_thickness},
                {"segments", segs},
                {"rooms", rooms}};
}

Floorplan floorplan_from_json(const json& j) {
    try {
        std::vector<WallSegment> segs;
        for (const auto& s : j.at("segments")) {
            if (s.size() != 5) throw ValidationError("segment entries need 5 numbers [x1, y1, x2, y2, reflectance]");
            segs.push_back({{s[0].get<double>(), s[1].get<double>()},
                            {s[2].get<double>(), s[3].get<double>()},
                            s[4].get<double>()});
        }
        std::vector<Room> rooms;
        if (j.contains("rooms")) {
            for (const auto& r : j.at("rooms")) {
                Room room;
                for (const auto& v : r) room.polygon.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
                rooms.push_back(std::move(room));
            }
        }
        const int L = j.at("grid_size").get<int>();
        const double thickness =
            j.contains("wall_thickness") ? j.at("wall_thickness").get<double>() : default_wall_thickness(L);
        return make_floorplan(L, j.value("scale", 0.1), thickness, std::move(segs), std::move(rooms));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed floorplan: ") + e.what());
    }
}

void save_floorplan(const fs::path& path, const Floorplan& fp) {
    write_file_atomic(path, floorplan_to_json(fp).dump(2) + "\n");
}

Floorplan load_floorplan(const fs::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return floorplan_from_json(j);
}

std::string dataset_to_csv(const Dataset& ds) {
    std::string out = "# grid_size=" + std::to_string(ds.grid_size) + " scale=" + fmt(ds.scale) + " K=" + fmt(ds.K) +
                      " max_order=" + std::to_string(ds.max_order) + " seed=" + std::to_string(ds.seed) + "\n";
    out += "tx_id,tx_x,tx_y,rx_x,rx_y,psi_linear\n";
    for (const auto& m : ds.measurements) {
        out += std::to_string(m.tx_id) + "," + fmt(m.tx.x) + "," + fmt(m.tx.y) + "," + fmt(m.rx.x) + "," +
               fmt(m.rx.y) + "," + fmt(m.psi) + "\n";
    }
    return out;
}

Dataset dataset_from_csv(std::string_view text) {
    Dataset ds;
    bool header_seen = false;
    int line_no = 0;
    for (std::string_view line : split(text, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const std::string where = "dataset line " + std::to_string(line_no);
        if (line.front() == '#') {
            for (std::string_view tok : split(line.substr(1), ' ')) {
                const auto eq = tok.find('=');
                if (eq == std::string_view::npos) continue;
                const std::string_view key = tok.substr(0, eq), val = tok.substr(eq + 1);
                if (key == "grid_size") ds.grid_size = int(parse_double(val, where));
                else if (key == "scale") ds.scale = parse_double(val, where);
                else if (key == "K") ds.K = parse_double(val, where);
                else if (key == "max_order") ds.max_order = int(parse_double(val, where));
                else if (key == "seed") ds.seed = std::uint64_t(parse_double(val, where));
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("tx_id", 0) == 0) continue;
        }
        const auto cols = split(line, ',');
        if (cols.size() != 6) throw ValidationError(where + ": expected 6 columns, got " + std::to_string(cols.size()));
        Measurement m;
        m.tx_id = int(parse_double(cols[0], where));
        m.tx = {parse_double(cols[1], where), parse_double(cols[2], where)};
        m.rx = {parse_double(cols[3], where), parse_double(cols[4], where)};
        m.psi = parse_double(cols[5], where);
        ds.measurements.push_back(m);
    }
    if (ds.grid_size <= 0) throw ValidationError("dataset header is missing grid_size");
    return ds;
}

void save_dataset(const fs::path& path, const Dataset& ds) { write_file_atomic(path, dataset_to_csv(ds)); }

Dataset load_dataset(const fs::path& path) {
    try {
        return dataset_from_csv(read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string checkpoint_bytes(const VoxelField& field) {
    std::string out = "VXF1";
    put_u32(out, std::uint32_t(field.size()));
    put_u32(out, std::uint32_t(field.bins()));
    put_u32(out, std::bit_cast<std::uint32_t>(float(field.scale())));
    put_u32(out, field.discretize_delta ? 1u : 0u);
    out.reserve(out.size() + 4 * (field.delta_logits().size() + field.orientation_logits.size()));
    for (float v : field.delta_logits()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    for (float v : field.orientation_logits) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

VoxelField checkpoint_from_bytes(std::string_view b) {
    if (b.size() < 4 || b.substr(0, 4) != "VXF1") throw ValidationError("not a voxel field checkpoint");
    std::size_t pos = 4;
    const std::uint32_t L = get_u32(b, pos);
    const std::uint32_t K = get_u32(b, pos);
    const float scale = std::bit_cast<float>(get_u32(b, pos));
    const std::uint32_t flags = get_u32(b, pos);
    if (L < 2 || L > 65536 || K < 2 || K > 1024) throw ValidationError("checkpoint header is implausible");
    const std::size_t expected = pos + 4 * (std::size_t(L) * L * (1 + K));
    if (b.size() != expected) {
        throw ValidationError("checkpoint has " + std::to_string(b.size()) + " bytes, expected " +
                              std::to_string(expected));
    }
    VoxelField f(static_cast<int>(L), static_cast<int>(K), static_cast<double>(scale));
    f.discretize_delta = flags & 1u;
    std::vector<float> logits(f.voxels());
    for (auto& v : logits) v = std::bit_cast<float>(get_u32(b, pos));
    f.set_delta_logits(std::move(logits));
    for (auto& v : f.orientation_logits) v = std::bit_cast<float>(get_u32(b, pos));
    return f;
}

void save_checkpoint(const fs::path& path, const VoxelField& field, const json& metadata) {
    write_file_atomic(path, checkpoint_bytes(field));
    fs::path side = path;
    side += ".json";
    write_file_atomic(side, metadata.dump(2) + "\n");
}

VoxelField load_checkpoint(const fs::path& path) {
    try {
        return checkpoint_from_bytes(read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string pgm_from_bitmap(const Bitmap& b) {
    std::string out = "P5 " + std::to_string(b.width()) + " " + std::to_string(b.height()) + " 255\n";
    for (auto v : b.data()) out.push_back(v ? char(255) : char(0));
    return out;
}

Bitmap bitmap_from_pgm(std::string_view bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    if (token() != "P5") throw ValidationError("not a binary PGM");
    const int w = int(parse_double(token(), "pgm width"));
    const int h = int(parse_double(token(), "pgm height"));
    const int maxval = int(parse_double(token(), "pgm maxval"));
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw ValidationError("unsupported PGM header");
    ++pos;  // single whitespace before the raster
    if (bytes.size() < pos + std::size_t(w) * h) throw ValidationError("PGM raster is truncated");
    Bitmap b(w, h, 0);
    for (std::size_t i = 0; i < b.data().size(); ++i) b.data()[i] = std::uint8_t(bytes[pos + i]) >= 128 ? 1 : 0;
    return b;
}

std::string pgm_from_power(const Grid<double>& p, std::size_t* nonfinite) {
    constexpr double lo = -120.0, hi = -30.0;
    std::size_t bad = 0;
    std::string out = "P5 " + std::to_string(p.width()) + " " + std::to_string(p.height()) + " 255\n";
    for (double v : p.data()) {
        double db = v > 0.0 ? 10.0 * std::log10(v) : -INFINITY;
        if (!std::isfinite(db)) {
            ++bad;
            db = lo;
        }
        const double t = std::clamp((db - lo) / (hi - lo), 0.0, 1.0);
        out.push_back(char(std::lround(255.0 * t)));
    }
    if (nonfinite) *nonfinite = bad;
    return out;
}

std::string svg_rays(const Bitmap& walls, const std::vector<std::vector<Vec2>>& polylines) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << walls.width() * 4 << "\" height=\""
      << walls.height() * 4 << "\" viewBox=\"-0.5 -0.5 " << walls.width() << " " << walls.height() << "\">\n";
    s << "<rect x=\"-0.5\" y=\"-0.5\" width=\"" << walls.width() << "\" height=\"" << walls.height()
      << "\" fill=\"white\"/>\n<g fill=\"black\">\n";
    for (int y = 0; y < walls.height(); ++y)
        for (int x = 0; x < walls.width(); ++x)
            if (walls(x, y)) s << "<rect x=\"" << x - 0.5 << "\" y=\"" << y - 0.5 << "\" width=\"1\" height=\"1\"/>\n";
    s << "</g>\n<g fill=\"none\" stroke=\"red\" stroke-width=\"0.3\">\n";
    for (const auto& line : polylines) {
        s << "<polyline points=\"";
        for (std::size_t i = 0; i < line.size(); ++i) s << (i ? " " : "") << fmt(line[i].x) << "," << fmt(line[i].y);
        s << "\"/>\n";
    }
    s << "</g>\n</svg>\n";
    return s.str();
}

json sim_config_to_json(const SimConfig& c) {
    return json{{"max_order", c.max_order},           {"K", c.K},
                {"cos_exponent", c.cos_exponent},     {"num_subcarriers", c.num_subcarriers},
                {"bandwidth", c.bandwidth},           {"center_frequency", c.center_frequency},
                {"prune_fraction", c.prune_fraction}};
}

SimConfig sim_config_from_json(const json& j, SimConfig c) {
    try {
        reject_unknown(j, {"max_order", "K", "cos_exponent", "num_subcarriers", "bandwidth", "center_frequency",
                           "prune_fraction"},
                       "simulation config");
        read_key(j, "max_order", c.max_order);
        read_key(j, "K", c.K);
        read_key(j, "cos_exponent", c.cos_exponent);
        read_key(j, "num_subcarriers", c.num_subcarriers);
        read_key(j, "bandwidth", c.bandwidth);
        read_key(j, "center_frequency", c.center_frequency);
        read_key(j, "prune_fraction", c.prune_fraction);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("simulation config: ") + e.what());
    }
    if (c.max_order < 0) throw ValidationError("max_order must be >= 0");
    if (!(c.K > 0.0)) throw ValidationError("K must be positive");
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"stage1", stage_to_json(c.stage1)},
                {"stage2", stage_to_json(c.stage2)},
                {"lr", c.lr},
                {"batch_size", c.batch_size},
                {"top_k", c.top_k},
                {"n_r", c.n_r},
                {"num_bins", c.num_bins},
                {"discretize", c.discretize},
                {"rx_noise_sigma", c.rx_noise_sigma},
                {"seed", c.seed},
                {"K", c.K},
                {"init_delta", c.init_delta},
                {"g_min", c.g_min},
                {"gamma", c.gain.gamma},
                {"beta_tol", c.gain.beta_tol},
                {"sigma_beta", c.gain.sigma_beta},
                {"aperture", c.gain.aperture},
                {"self_exclusion", c.self_exclusion},
                {"gumbel", c.gumbel},
                {"gumbel_temperature", c.gumbel_temperature},
                {"chunk_size", c.chunk_size}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    try {
        reject_unknown(j, {"stage1", "stage2", "lr", "batch_size", "top_k", "n_r", "num_bins", "discretize",
                           "rx_noise_sigma", "seed", "K", "init_delta", "g_min", "gamma", "beta_tol", "sigma_beta",
                           "aperture", "self_exclusion", "gumbel", "gumbel_temperature", "chunk_size", "threads"},
                       "training config");
        if (j.contains("stage1")) c.stage1 = stage_from_json(j.at("stage1"), c.stage1);
        if (j.contains("stage2")) c.stage2 = stage_from_json(j.at("stage2"), c.stage2);
        read_key(j, "lr", c.lr);
        read_key(j, "batch_size", c.batch_size);
        read_key(j, "top_k", c.top_k);
        read_key(j, "n_r", c.n_r);
        read_key(j, "num_bins", c.num_bins);
        read_key(j, "discretize", c.discretize);
        read_key(j, "rx_noise_sigma", c.rx_noise_sigma);
        read_key(j, "seed", c.seed);
        read_key(j, "K", c.K);
        read_key(j, "init_delta", c.init_delta);
        read_key(j, "g_min", c.g_min);
        read_key(j, "gamma", c.gain.gamma);
        read_key(j, "beta_tol", c.gain.beta_tol);
        read_key(j, "sigma_beta", c.gain.sigma_beta);
        read_key(j, "aperture", c.gain.aperture);
        read_key(j, "self_exclusion", c.self_exclusion);
        read_key(j, "gumbel", c.gumbel);
        read_key(j, "gumbel_temperature", c.gumbel_temperature);
        read_key(j, "chunk_size", c.chunk_size);
        read_key(j, "threads", c.threads);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("training config: ") + e.what());
    }
    if (c.lr <= 0.0) throw ValidationError("lr must be positive");
    if (c.n_r < 2) throw ValidationError("n_r must be >= 2");
    if (c.num_bins < 2) throw ValidationError("num_bins must be >= 2");
    if (c.rx_noise_sigma < 0.0) throw ValidationError("rx_noise_sigma must be >= 0");
    return c;
}

}  // namespace rfplan
