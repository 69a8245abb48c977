#include "rfplan/app.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "rfplan/baselines.hpp"
#include "rfplan/error.hpp"
#include "rfplan/field.hpp"
#include "rfplan/metrics.hpp"
#include "rfplan/parallel.hpp"
#include "rfplan/training.hpp"
#include "rfplan/txloc.hpp"

#ifndef RFPLAN_VERSION
#define RFPLAN_VERSION "dev"
#endif

namespace rfplan {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 0;
    std::string out;
};

struct LoadedConfig {
    SimConfig sim;
    TrainConfig train;
};

LoadedConfig load_config(const std::string& path) {
    LoadedConfig c;
    if (path.empty()) return c;
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError(path + ": config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "simulation" && it.key() != "training") {
            throw ValidationError(path + ": unknown section '" + it.key() + "' (expected simulation, training)");
        }
    }
    try {
        if (j.contains("simulation")) c.sim = sim_config_from_json(j.at("simulation"));
        if (j.contains("training")) c.train = train_config_from_json(j.at("training"));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return c;
}

Vec2 parse_point(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw ValidationError("expected a point as x,y, got '" + s + "'");
    try {
        return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
    } catch (const std::exception&) {
        throw ValidationError("expected a point as x,y, got '" + s + "'");
    }
}

std::vector<Vec2> parse_points(const std::string& s) {
    std::vector<Vec2> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (!item.empty()) out.push_back(parse_point(item));
    }
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            if constexpr (std::is_integral_v<T>) out.push_back(T(std::stoll(item)));
            else out.push_back(T(std::stod(item)));
        } catch (const std::exception&) {
            throw ValidationError("cannot parse list item '" + item + "'");
        }
    }
    if (out.empty()) throw ValidationError("empty list '" + s + "'");
    return out;
}

std::vector<std::string> parse_words(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void require_out(const Common& c) {
    if (c.out.empty()) throw ValidationError("--out is required");
}

fs::path manifest_path(const std::string& out) { return fs::path(out + ".manifest.json"); }

class Run {
public:
    Run(std::string command, const Common& common)
        : start_(std::chrono::steady_clock::now()) {
        m_.command = std::move(command);
        m_.config_path = common.config;
        m_.seed = common.seed;
        m_.deterministic = common.deterministic;
        m_.threads = common.threads > 0 ? common.threads : default_thread_count();
        out_ = common.out;
    }

    RunManifest& manifest() { return m_; }
    void input(const std::string& p) { m_.inputs.push_back(p); }
    void output(const std::string& p) { m_.outputs.push_back(p); }

    void finish() {
        m_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_file_atomic(manifest_path(out_), m_.to_json().dump(2) + "\n");
    }

private:
    RunManifest m_;
    std::string out_;
    std::chrono::steady_clock::time_point start_;
};

TrainConfig training_config(const LoadedConfig& cfg, const Common& common, bool seed_given) {
    TrainConfig t = cfg.train;
    if (seed_given) t.seed = common.seed;
    if (common.threads > 0) t.threads = common.threads;
    return t;
}

json metrics_json(const WallMetrics& m) {
    return json{{"wall_iou", m.iou}, {"f1", m.f1},  {"precision", m.precision},
                {"recall", m.recall}, {"tp", m.tp}, {"fp", m.fp},
                {"fn", m.fn}};
}

void check_grid(const VoxelField& field, int grid_size, const std::string& what) {
    if (field.size() != grid_size) {
        throw ValidationError("grid size mismatch: checkpoint is " + std::to_string(field.size()) + "x" +
                              std::to_string(field.size()) + ", " + what + " is " + std::to_string(grid_size) + "x" +
                              std::to_string(grid_size));
    }
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
    Dataset out = d;
    out.measurements.clear();
    for (std::size_t i : idx) out.measurements.push_back(d.measurements[i]);
    return out;
}

// ---- subcommands ----

int cmd_gen(const Common& c, int grid, int rooms, double thickness, double reflectance, const std::string& pgm) {
    require_out(c);
    Run run("gen", c);
    ApartmentParams ap;
    ap.num_rooms = rooms;
    ap.wall_thickness = thickness;
    ap.reflectance = reflectance;
    const Floorplan fp = generate_apartment(grid, ap, c.seed);
    save_floorplan(c.out, fp);
    run.output(c.out);
    if (!pgm.empty()) {
        write_file_atomic(pgm, pgm_from_bitmap(fp.raster));
        run.output(pgm);
    }
    run.manifest().extra["rooms"] = fp.rooms.size();
    run.manifest().extra["segments"] = fp.segments.size();
    run.finish();
    std::printf("floorplan %dx%d with %zu rooms -> %s\n", grid, grid, fp.rooms.size(), c.out.c_str());
    return 0;
}

int cmd_simulate(const Common& c, const std::string& floorplan, int receivers, const std::string& tx_list) {
    require_out(c);
    Run run("simulate", c);
    const LoadedConfig cfg = load_config(c.config);
    const Floorplan fp = load_floorplan(floorplan);
    run.input(floorplan);
    if (!c.config.empty()) run.input(c.config);
    std::vector<Vec2> txs = tx_list.empty() ? place_transmitters(fp, fp.rooms, c.seed) : parse_points(tx_list);
    if (txs.empty()) throw ValidationError("no transmitters: the floorplan has no rooms and --tx is empty");
    std::vector<Pixel> rx;
    for (Pixel p : sample_receivers(fp, receivers, c.seed)) {
        if (std::none_of(txs.begin(), txs.end(), [&](Vec2 t) { return t == p.center(); })) rx.push_back(p);
    }
    const Dataset ds = simulate_dataset(fp, txs, rx, cfg.sim, c.seed, c.threads);
    save_dataset(c.out, ds);
    run.output(c.out);
    run.manifest().extra["simulation"] = sim_config_to_json(cfg.sim);
    run.manifest().extra["transmitters"] = txs.size();
    run.manifest().extra["receivers"] = rx.size();
    run.finish();
    std::printf("%zu measurements (%zu tx x %zu rx) -> %s\n", ds.measurements.size(), txs.size(), rx.size(),
                c.out.c_str());
    return 0;
}

int cmd_train(const Common& c, bool seed_given, const std::string& data, int stage2_epochs) {
    require_out(c);
    Run run("train", c);
    const LoadedConfig cfg = load_config(c.config);
    TrainConfig tc = training_config(cfg, c, seed_given);
    if (stage2_epochs >= 0) tc.stage2.epochs = stage2_epochs;
    const Dataset ds = load_dataset(data);
    run.input(data);
    if (!c.config.empty()) run.input(c.config);

    TrainReport rep;
    const VoxelField field = run_training(ds, tc, &rep);
    json meta{{"grid_size", field.size()},
              {"num_bins", field.bins()},
              {"scale", field.scale()},
              {"seed", tc.seed},
              {"training", train_config_to_json(tc)}};
    save_checkpoint(c.out, field, meta);
    run.output(c.out);
    run.output(c.out + ".json");

    json trace = json::object();
    for (auto [name, stage] : {std::pair{"stage1", &rep.stage1}, std::pair{"stage2", &rep.stage2}}) {
        json rows = json::array();
        for (const auto& e : stage->trace) rows.push_back({{"data", e.data}, {"prior", e.prior}});
        trace[name] = rows;
    }
    const std::string report = c.out + ".report.json";
    const Bitmap walls = binarize_field(field);
    json rj{{"losses", trace},
            {"seconds_stage1", rep.seconds_stage1},
            {"seconds_stage2", rep.seconds_stage2},
            {"opaque_voxels", std::count(walls.data().begin(), walls.data().end(), 1)}};
    // Timings vary run to run; keep them out of the report in deterministic mode.
    if (c.deterministic) {
        rj.erase("seconds_stage1");
        rj.erase("seconds_stage2");
    }
    write_file_atomic(report, rj.dump(2) + "\n");
    run.output(report);
    run.finish();
    std::printf("trained %dx%d field, final data loss %.6g -> %s\n", field.size(), field.size(),
                (rep.stage2.trace.empty() ? rep.stage1.trace : rep.stage2.trace).back().data, c.out.c_str());
    return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& floorplan, const std::string& data,
             int tolerance) {
    require_out(c);
    Run run("eval", c);
    const LoadedConfig cfg = load_config(c.config);
    const VoxelField field = load_checkpoint(checkpoint);
    run.input(checkpoint);
    json report{{"checkpoint", checkpoint}};
    if (!floorplan.empty()) {
        const Floorplan fp = load_floorplan(floorplan);
        run.input(floorplan);
        check_grid(field, fp.grid_size, "floorplan");
        const Bitmap pred = binarize_field(field);
        report["walls"] = metrics_json(wall_metrics(pred, fp.raster));
        if (tolerance > 0) report["walls_tolerant"] = metrics_json(wall_metrics_tolerant(pred, fp.raster, tolerance));
    }
    if (!data.empty()) {
        const Dataset ds = load_dataset(data);
        run.input(data);
        check_grid(field, ds.grid_size, "dataset");
        ForwardConfig fwd = cfg.train.forward();
        fwd.K = ds.K;
        std::vector<double> pred(ds.measurements.size()), truth(ds.measurements.size());
        parallel_for(ds.measurements.size(), c.threads, [&](std::size_t i) {
            const auto& m = ds.measurements[i];
            pred[i] = predict_power(field, m.tx, m.rx, fwd);
            truth[i] = m.psi;
        });
        const RpeResult r = rpe(pred, truth);
        report["rpe_db"] = r.rpe;
        report["rpe_excluded"] = r.excluded;
    }
    if (floorplan.empty() && data.empty()) throw ValidationError("eval needs --floorplan and/or --data");
    write_file_atomic(c.out, report.dump(2) + "\n");
    run.output(c.out);
    run.finish();
    std::printf("%s\n", report.dump().c_str());
    return 0;
}

int cmd_predict(const Common& c, const std::string& checkpoint, const std::string& tx, int stride,
                const std::string& floorplan) {
    require_out(c);
    Run run("predict", c);
    const LoadedConfig cfg = load_config(c.config);
    const VoxelField field = load_checkpoint(checkpoint);
    run.input(checkpoint);
    Bitmap walls = binarize_field(field);
    if (!floorplan.empty()) {
        const Floorplan fp = load_floorplan(floorplan);
        run.input(floorplan);
        check_grid(field, fp.grid_size, "floorplan");
        walls = fp.raster;
    }
    const Grid<double> h = heatmap(field, parse_point(tx), stride, cfg.train.forward(), walls);
    std::size_t nonfinite = 0;
    write_file_atomic(c.out, pgm_from_power(h, &nonfinite));
    run.output(c.out);
    run.manifest().extra["nonfinite_cells"] = nonfinite;
    run.finish();
    std::printf("heatmap -> %s (%zu cells without a value)\n", c.out.c_str(), nonfinite);
    return 0;
}

int cmd_trace(const Common& c, const std::string& checkpoint, const std::string& tx_s, const std::string& rx_s,
              double fraction) {
    require_out(c);
    Run run("trace", c);
    const LoadedConfig cfg = load_config(c.config);
    const VoxelField field = load_checkpoint(checkpoint);
    run.input(checkpoint);
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("--fraction must be in (0, 1]");
    const Vec2 tx = parse_point(tx_s), rx = parse_point(rx_s);
    const auto refl = trace_learned_reflections(field, tx, rx, fraction, cfg.train.forward());
    std::vector<std::vector<Vec2>> lines{{tx, rx}};
    json rows = json::array();
    for (const auto& r : refl) {
        const Vec2 v = field.pixel(r.voxel).center();
        lines.push_back({tx, v, rx});
        rows.push_back({{"x", v.x}, {"y", v.y}, {"bin", r.bin}, {"contribution", r.contribution}});
    }
    write_file_atomic(c.out, svg_rays(binarize_field(field), lines));
    run.output(c.out);
    run.manifest().extra["reflections"] = rows;
    run.finish();
    std::printf("%zu reflections -> %s\n", refl.size(), c.out.c_str());
    return 0;
}

int cmd_estimate_tx(const Common& c, const std::string& data, int P, bool fit_K) {
    require_out(c);
    Run run("estimate-tx", c);
    const Dataset ds = load_dataset(data);
    run.input(data);
    std::map<int, std::vector<Measurement>> by_tx;
    for (const auto& m : ds.measurements) by_tx[m.tx_id].push_back(m);
    json rows = json::array();
    double err_sum = 0.0;
    for (const auto& [id, ms] : by_tx) {
        TxlocConfig tc;
        tc.P = std::min<int>(P, int(ms.size()));
        tc.K = ds.K;
        tc.scale = ds.scale;
        tc.seed = c.seed;
        tc.fit_K = fit_K;
        tc.grid_size = ds.grid_size;
        const TxEstimate e = estimate_tx(ms, tc);
        const double err = (e.position - ms.front().tx).norm();
        err_sum += err;
        rows.push_back({{"tx_id", id},
                        {"x", e.position.x},
                        {"y", e.position.y},
                        {"K", e.K},
                        {"residual", e.residual},
                        {"iterations", e.iterations},
                        {"collinear", e.collinear},
                        {"error_px", err}});
    }
    json out{{"estimates", rows}, {"mean_error_px", err_sum / double(by_tx.size())}};
    write_file_atomic(c.out, out.dump(2) + "\n");
    run.output(c.out);
    run.finish();
    std::printf("%zu transmitters, mean error %.3f px -> %s\n", by_tx.size(), err_sum / double(by_tx.size()),
                c.out.c_str());
    return 0;
}

int cmd_baseline(const Common& c, const std::string& method, const std::string& data, const std::string& test,
                 const std::string& floorplan, int k) {
    require_out(c);
    Run run("baseline", c);
    const Dataset ds = load_dataset(data);
    run.input(data);
    if (method == "seg") {
        const Segmentation seg = heatmap_segmentation(ds.measurements, ds.grid_size, {});
        write_file_atomic(c.out, pgm_from_bitmap(seg.walls));
        run.output(c.out);
        run.manifest().extra["warnings"] = seg.warnings;
        if (!floorplan.empty()) {
            const Floorplan fp = load_floorplan(floorplan);
            run.input(floorplan);
            if (fp.grid_size != ds.grid_size) {
                throw ValidationError("grid size mismatch: dataset is " + std::to_string(ds.grid_size) +
                                      ", floorplan is " + std::to_string(fp.grid_size));
            }
            const WallMetrics m = wall_metrics(seg.walls, fp.raster);
            run.manifest().extra["walls"] = metrics_json(m);
            std::printf("segmentation Wall_IoU %.4f\n", m.iou);
        }
        for (const auto& w : seg.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    } else if (method == "knn") {
        if (test.empty()) throw ValidationError("knn baseline needs --test");
        const Dataset td = load_dataset(test);
        run.input(test);
        std::vector<double> pred, truth;
        std::string csv = "tx_id,rx_x,rx_y,psi_pred,psi_true\n";
        for (const auto& m : td.measurements) {
            pred.push_back(knn_rssi_predict(ds.measurements, m.tx_id, m.rx, k));
            truth.push_back(m.psi);
            char buf[160];
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", m.tx_id, m.rx.x, m.rx.y, pred.back(),
                          m.psi);
            csv += buf;
        }
        write_file_atomic(c.out, csv);
        run.output(c.out);
        const RpeResult r = rpe(pred, truth);
        run.manifest().extra["rpe_db"] = r.rpe;
        std::printf("knn RPE %.4f dB\n", r.rpe);
    } else {
        throw ValidationError("unknown baseline method '" + method + "' (expected seg or knn)");
    }
    run.finish();
    return 0;
}

struct SweepArgs {
    int floorplans = 3;
    int grid = 128;
    int rooms = 3;
    std::string receivers = "500";
    std::string noise = "0";
    std::string methods = "los,echo,seg,knn";
    double test_fraction = 0.1;
};

int cmd_sweep(const Common& c, bool seed_given, const SweepArgs& a) {
    require_out(c);
    const fs::path dir = c.out;
    fs::create_directories(dir);
    Common mc = c;
    mc.out = (dir / "report.json").string();
    Run run("sweep", mc);
    const LoadedConfig cfg = load_config(c.config);
    if (!c.config.empty()) run.input(c.config);
    const auto Ns = parse_list<int>(a.receivers);
    const auto sigmas = parse_list<double>(a.noise);
    const auto methods = parse_words(a.methods);
    for (const auto& m : methods) {
        if (m != "los" && m != "echo" && m != "seg" && m != "knn") {
            throw ValidationError("unknown method '" + m + "' (expected los, echo, seg, knn)");
        }
    }
    auto wants = [&](const char* m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };

    json rows = json::array();
    std::map<std::string, std::vector<double>> iou_acc, rpe_acc;
    for (int f = 0; f < a.floorplans; ++f) {
        const std::uint64_t seed = c.seed + std::uint64_t(f);
        for (int N : Ns) {
            const Scenario sc = make_scenario(a.grid, a.rooms, N, cfg.sim, seed);
            std::vector<Vec2> rx_pos;
            for (const auto& m : sc.data.measurements) rx_pos.push_back(m.rx);
            const Split split = split_by_receiver(rx_pos, a.test_fraction, seed);
            const Dataset train = subset(sc.data, split.train), test = subset(sc.data, split.test);
            for (double sigma : sigmas) {
                char name[64];
                std::snprintf(name, sizeof name, "fp%d_n%d_sigma%g", f, N, sigma);
                const fs::path cell = dir / name;
                fs::create_directories(cell);
                auto record = [&](const std::string& method, const Bitmap* walls, const std::vector<double>* pred) {
                    json row{{"floorplan", f}, {"seed", seed}, {"N", N}, {"sigma", sigma}, {"method", method}};
                    const std::string key = "N=" + std::to_string(N) + " sigma=" + json(sigma).dump() + " " + method;
                    if (walls) {
                        const WallMetrics m = wall_metrics(*walls, sc.floorplan.raster);
                        row["wall_iou"] = m.iou;
                        row["f1"] = m.f1;
                        iou_acc[key].push_back(m.iou);
                        const std::string img = (cell / (method + "_walls.pgm")).string();
                        write_file_atomic(img, pgm_from_bitmap(*walls));
                        run.output(img);
                    }
                    if (pred) {
                        std::vector<double> truth;
                        for (const auto& m : test.measurements) truth.push_back(m.psi);
                        const double r = rpe(*pred, truth).rpe;
                        row["rpe_db"] = r;
                        rpe_acc[key].push_back(r);
                    }
                    rows.push_back(row);
                    std::printf("%s %s\n", name, row.dump().c_str());
                    std::fflush(stdout);
                };
                auto predict_all = [&](const VoxelField& field, const TrainConfig& tc) {
                    std::vector<double> pred(test.measurements.size());
                    parallel_for(pred.size(), tc.threads, [&](std::size_t i) {
                        const auto& m = test.measurements[i];
                        pred[i] = predict_power(field, m.tx, m.rx, tc.forward());
                    });
                    return pred;
                };
                if (wants("los") || wants("echo")) {
                    TrainConfig tc = training_config(cfg, c, seed_given);
                    tc.seed = seed;
                    tc.rx_noise_sigma = sigma;
                    tc.K = train.K;
                    if (!wants("echo")) tc.stage2.epochs = 0;
                    TrainReport rep;
                    const VoxelField echo = run_training(train, tc, &rep);
                    if (wants("los")) {
                        const Bitmap b = binarize_field(rep.stage1_field);
                        const auto p = predict_all(rep.stage1_field, tc);
                        record("los", &b, &p);
                    }
                    if (wants("echo")) {
                        const Bitmap b = binarize_field(echo);
                        const auto p = predict_all(echo, tc);
                        record("echo", &b, &p);
                    }
                }
                if (wants("seg")) {
                    const Segmentation seg = heatmap_segmentation(train.measurements, a.grid, {});
                    record("seg", &seg.walls, nullptr);
                }
                if (wants("knn")) {
                    std::vector<double> p;
                    for (const auto& m : test.measurements) p.push_back(knn_rssi_predict(train.measurements, m.tx_id, m.rx, 5));
                    record("knn", nullptr, &p);
                }
            }
        }
    }
    json summary = json::array();
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / double(v.size());
    };
    std::map<std::string, json> by_key;
    for (const auto& [k, v] : iou_acc) by_key[k]["wall_iou"] = mean(v);
    for (const auto& [k, v] : rpe_acc) by_key[k]["rpe_db"] = mean(v);
    for (auto& [k, v] : by_key) {
        v["cell"] = k;
        summary.push_back(v);
    }
    write_file_atomic(mc.out, json{{"rows", rows}, {"summary", summary}}.dump(2) + "\n");
    run.output(mc.out);
    run.finish();
    for (const auto& s : summary) std::printf("%s\n", s.dump().c_str());
    return 0;
}

}  // namespace

json RunManifest::to_json() const {
    return json{{"command", command},   {"config", config_path},     {"seed", seed},
                {"deterministic", deterministic}, {"threads", threads}, {"inputs", inputs},
                {"outputs", outputs},   {"tool_version", tool_version()}, {"wall_clock_seconds", seconds},
                {"extra", extra}};
}

std::string tool_version() { return RFPLAN_VERSION; }

Scenario make_scenario(int grid_size, int num_rooms, int receivers, const SimConfig& sim, std::uint64_t seed) {
    Scenario s;
    ApartmentParams ap;
    ap.num_rooms = num_rooms;
    s.floorplan = generate_apartment(grid_size, ap, seed);
    s.transmitters = place_transmitters(s.floorplan, s.floorplan.rooms, seed);
    for (Pixel p : sample_receivers(s.floorplan, receivers, seed)) {
        const bool on_tx =
            std::any_of(s.transmitters.begin(), s.transmitters.end(), [&](Vec2 t) { return t == p.center(); });
        if (!on_tx) s.receivers.push_back(p);
    }
    s.data = simulate_dataset(s.floorplan, s.transmitters, s.receivers, sim, seed);
    return s;
}

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"rfplan: floorplan reconstruction from received signal power"};
    app.require_subcommand(1);
    app.footer("Environment: RFPLAN_THREADS sets the default worker count (default: hardware concurrency).\n"
               "Exit codes: 0 success, 1 invalid input, 2 runtime failure.");

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON config with optional 'simulation' and 'training' sections");
        sub->add_option("--seed", common.seed, "random seed");
        sub->add_flag("--deterministic", common.deterministic,
                      "leave timings out of reports so identical runs give identical files");
        sub->add_option("--threads", common.threads, "worker threads (0: RFPLAN_THREADS or hardware)");
        sub->add_option("--out", common.out, "output path")->required();
    };

    int grid = 128, rooms = 3, receivers = 500, stride = 1, P = 20, k = 5, tolerance = 0, stage2_epochs = -1;
    double thickness = 0.0, reflectance = 0.7, fraction = 0.9;
    bool fit_K = false;
    std::string floorplan, data, test, checkpoint, tx, rx, pgm, method = "seg";
    SweepArgs sweep;

    auto* gen = app.add_subcommand("gen", "generate a random apartment floorplan (JSON)");
    add_common(gen);
    gen->add_option("--grid", grid, "grid size L");
    gen->add_option("--rooms", rooms, "number of rooms");
    gen->add_option("--thickness", thickness, "wall thickness in px (0: default for the grid size)");
    gen->add_option("--reflectance", reflectance, "wall reflectance");
    gen->add_option("--pgm", pgm, "also write the wall bitmap as PGM");

    auto* sim = app.add_subcommand("simulate", "simulate received power along a receiver trajectory (CSV)");
    add_common(sim);
    sim->add_option("--floorplan", floorplan, "floorplan JSON")->required();
    sim->add_option("--receivers", receivers, "number of receivers");
    sim->add_option("--tx", tx, "transmitters 'x,y;x,y' (default: one per room)");

    auto* train = app.add_subcommand("train", "fit a voxel field to a dataset (checkpoint)");
    add_common(train);
    train->add_option("--data", data, "dataset CSV")->required();
    train->add_option("--stage2-epochs", stage2_epochs, "override Stage 2 epochs (0: LoS-only model)");

    auto* eval = app.add_subcommand("eval", "score a checkpoint against a floorplan and/or a dataset (JSON)");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint")->required();
    eval->add_option("--floorplan", floorplan, "ground-truth floorplan JSON");
    eval->add_option("--data", data, "dataset CSV for power prediction error");
    eval->add_option("--tolerance", tolerance, "also report metrics with this pixel tolerance");

    auto* pred = app.add_subcommand("predict", "render a predicted power heatmap (PGM)");
    add_common(pred);
    pred->add_option("--checkpoint", checkpoint, "checkpoint")->required();
    pred->add_option("--tx", tx, "transmitter x,y")->required();
    pred->add_option("--stride", stride, "evaluate every stride-th pixel");
    pred->add_option("--floorplan", floorplan, "mask walls of this floorplan instead of the learned ones");

    auto* trace = app.add_subcommand("trace", "draw the strongest learned reflections for a pair (SVG)");
    add_common(trace);
    trace->add_option("--checkpoint", checkpoint, "checkpoint")->required();
    trace->add_option("--tx", tx, "transmitter x,y")->required();
    trace->add_option("--rx", rx, "receiver x,y")->required();
    trace->add_option("--fraction", fraction, "cumulative share of reflected power to show");

    auto* est = app.add_subcommand("estimate-tx", "estimate transmitter positions from a dataset (JSON)");
    add_common(est);
    est->add_option("--data", data, "dataset CSV")->required();
    est->add_option("--P", P, "strongest measurements used per transmitter");
    est->add_flag("--fit-K", fit_K, "fit the transmit constant as well");

    auto* base = app.add_subcommand("baseline", "heatmap segmentation (seg) or nearest-neighbor power (knn)");
    add_common(base);
    base->add_option("--method", method, "seg or knn");
    base->add_option("--data", data, "dataset CSV")->required();
    base->add_option("--test", test, "test dataset CSV (knn)");
    base->add_option("--floorplan", floorplan, "ground truth for wall metrics (seg)");
    base->add_option("--k", k, "neighbors (knn)");

    auto* sw = app.add_subcommand("sweep", "floorplans x receivers x noise x method grid into one report");
    add_common(sw);
    sw->add_option("--floorplans", sweep.floorplans, "number of generated floorplans");
    sw->add_option("--grid", sweep.grid, "grid size L");
    sw->add_option("--rooms", sweep.rooms, "rooms per floorplan");
    sw->add_option("--receivers", sweep.receivers, "comma-separated receiver counts");
    sw->add_option("--noise", sweep.noise, "comma-separated receiver position noise sigmas (m)");
    sw->add_option("--methods", sweep.methods, "comma-separated subset of los,echo,seg,knn");
    sw->add_option("--test-fraction", sweep.test_fraction, "held-out receiver share for power error");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        const bool seed_given = [&] {
            for (auto* s : app.get_subcommands()) {
                if (s->count("--seed") > 0) return true;
            }
            return false;
        }();
        if (common.threads < 0) throw ValidationError("--threads must be >= 0");
        if (*gen) return cmd_gen(common, grid, rooms, thickness, reflectance, pgm);
        if (*sim) return cmd_simulate(common, floorplan, receivers, tx);
        if (*train) return cmd_train(common, seed_given, data, stage2_epochs);
        if (*eval) return cmd_eval(common, checkpoint, floorplan, data, tolerance);
        if (*pred) return cmd_predict(common, checkpoint, tx, stride, floorplan);
        if (*trace) return cmd_trace(common, checkpoint, tx, rx, fraction);
        if (*est) return cmd_estimate_tx(common, data, P, fit_K);
        if (*base) return cmd_baseline(common, method, data, test, floorplan, k);
        if (*sw) return cmd_sweep(common, seed_given, sweep);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace rfplan
