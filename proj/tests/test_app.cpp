#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "rfplan/app.hpp"
#include "rfplan/error.hpp"
#include "rfplan/io.hpp"

using namespace rfplan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("rfplan_test_" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int run(std::vector<std::string> args) { return run_command(args); }

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_CASE("PGM bytes of a 2x2 bitmap") {
    Bitmap b(2, 2, 0);
    b(0, 0) = 1;
    b(1, 1) = 1;
    const std::string bytes = pgm_from_bitmap(b);
    CHECK(bytes == std::string("P5 2 2 255\n\xff\x00\x00\xff", 15));
    CHECK(pgm_from_bitmap(b) == bytes);
}

TEST_CASE("PGM round trip of random bitmaps") {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution p(0.3);
    for (int i = 0; i < 20; ++i) {
        Bitmap b(7 + i, 11, 0);
        for (auto& v : b.data()) v = p(rng);
        CHECK(bitmap_from_pgm(pgm_from_bitmap(b)).data() == b.data());
    }
}

TEST_CASE("power PGM maps non-finite cells to the floor and counts them") {
    Grid<double> g(3, 1, 1e-6);
    g(1, 0) = std::nan("");
    g(2, 0) = 1e-15;  // -150 dB, below the window
    std::size_t nonfinite = 0;
    const std::string bytes = pgm_from_power(g, &nonfinite);
    CHECK(nonfinite == 1);
    const std::string px = bytes.substr(bytes.size() - 3);
    CHECK(static_cast<unsigned char>(px[1]) == 0);
    CHECK(static_cast<unsigned char>(px[2]) == 0);
    CHECK(static_cast<unsigned char>(px[0]) == 170);  // -60 dB in -120..-30
}

TEST_CASE("checkpoint bytes round trip and reject truncation") {
    VoxelField f(8, 4, 0.05);
    std::mt19937_64 rng(2);
    std::normal_distribution<float> n(0.0f, 2.0f);
    std::vector<float> logits(f.voxels());
    for (auto& v : logits) v = n(rng);
    f.set_delta_logits(logits);
    for (auto& v : f.orientation_logits) v = n(rng);
    f.discretize_delta = true;
    const std::string bytes = checkpoint_bytes(f);
    const VoxelField g = checkpoint_from_bytes(bytes);
    CHECK(g.size() == 8);
    CHECK(g.scale() == doctest::Approx(0.05));
    CHECK(g.discretize_delta);
    CHECK(g.delta_logits() == f.delta_logits());
    CHECK(g.orientation_logits == f.orientation_logits);
    CHECK(checkpoint_bytes(g) == bytes);
    CHECK_THROWS_AS(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 1)), ValidationError);
}

TEST_CASE("dataset CSV round trip is exact") {
    Dataset d;
    d.grid_size = 64;
    d.scale = 0.1;
    d.K = 1.5;
    d.max_order = 2;
    d.seed = 9;
    d.measurements = {{0, {3.5, 4}, {10, 11}, 1.0 / 3.0}, {1, {20, 20}, {1, 2}, 1e-300}};
    const Dataset e = dataset_from_csv(dataset_to_csv(d));
    REQUIRE(e.measurements.size() == 2);
    CHECK(e.measurements[0].psi == d.measurements[0].psi);
    CHECK(e.measurements[1].psi == d.measurements[1].psi);
    CHECK(e.measurements[0].tx.x == 3.5);
    CHECK(e.K == 1.5);
    CHECK(dataset_to_csv(e) == dataset_to_csv(d));
}

TEST_CASE("CLI: gen, simulate, train, eval, predict, trace, estimate-tx, baseline") {
    TempDir dir;
    const std::string fp = dir / "fp.json", data = dir / "d.csv", ckpt = dir / "m.vxf", cfg = dir / "c.json";
    write_text(cfg, R"({"training": {"stage1": {"epochs": 3}, "stage2": {"epochs": 1}, "n_r": 16}})");

    REQUIRE(run({"gen", "--grid", "96", "--rooms", "2", "--seed", "1", "--out", fp, "--pgm", dir / "fp.pgm"}) == 0);
    CHECK(fs::exists(fp));
    CHECK(fs::exists(fp + ".manifest.json"));
    CHECK(fs::exists(dir / "fp.pgm"));

    REQUIRE(run({"simulate", "--floorplan", fp, "--config", cfg, "--receivers", "40", "--out", data}) == 0);
    CHECK(fs::exists(data));
    const Dataset ds = load_dataset(data);
    CHECK(ds.grid_size == 96);
    CHECK(!ds.measurements.empty());

    REQUIRE(run({"train", "--data", data, "--config", cfg, "--deterministic", "--out", ckpt}) == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(ckpt + ".report.json"));
    const json manifest = json::parse(read_file(ckpt + ".manifest.json"));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("deterministic") == true);

    CHECK(run({"eval", "--checkpoint", ckpt, "--floorplan", fp, "--data", data, "--out", dir / "e.json"}) == 0);
    const json ev = json::parse(read_file(dir / "e.json"));
    CHECK(ev.at("walls").contains("wall_iou"));
    CHECK(ev.contains("rpe_db"));

    const auto& m = ds.measurements.front();
    const std::string txs = std::to_string(m.tx.x) + "," + std::to_string(m.tx.y);
    const std::string rxs = std::to_string(m.rx.x) + "," + std::to_string(m.rx.y);
    CHECK(run({"predict", "--checkpoint", ckpt, "--tx", txs, "--stride", "4", "--out", dir / "h.pgm"}) == 0);
    CHECK(read_file(dir / "h.pgm").rfind("P5", 0) == 0);
    CHECK(run({"trace", "--checkpoint", ckpt, "--tx", txs, "--rx", rxs, "--out", dir / "t.svg"}) == 0);
    CHECK(read_file(dir / "t.svg").find("<svg") != std::string::npos);
    CHECK(run({"estimate-tx", "--data", data, "--out", dir / "tx.json"}) == 0);
    CHECK(run({"baseline", "--method", "seg", "--data", data, "--floorplan", fp, "--out", dir / "seg.pgm"}) == 0);
}

TEST_CASE("CLI: bad input exits 1") {
    TempDir dir;
    CHECK(run({"simulate", "--floorplan", dir / "missing.json", "--out", dir / "d.csv"}) == 1);
    CHECK_FALSE(fs::exists(dir / "d.csv"));
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({}) == 1);
    CHECK(run({"train", "--out", dir / "x"}) == 1);  // --data missing

    const std::string cfg = dir / "c.json";
    write_text(cfg, R"({"training": {"learning_rate": 1}})");
    const std::string fp = dir / "fp.json";
    REQUIRE(run({"gen", "--grid", "96", "--rooms", "2", "--out", fp}) == 0);
    CHECK(run({"simulate", "--floorplan", fp, "--config", cfg, "--out", dir / "d.csv"}) == 1);
}

TEST_CASE("CLI: eval on mismatched grid sizes exits 1") {
    TempDir dir;
    const std::string fp = dir / "fp.json", ckpt = dir / "m.vxf";
    REQUIRE(run({"gen", "--grid", "96", "--rooms", "2", "--out", fp}) == 0);
    save_checkpoint(ckpt, VoxelField(64, 4), json::object());
    CHECK(run({"eval", "--checkpoint", ckpt, "--floorplan", fp, "--out", dir / "e.json"}) == 1);
    CHECK_FALSE(fs::exists(dir / "e.json"));
}

TEST_CASE("CLI: identical runs give identical bytes") {
    TempDir dir;
    const std::string cfg = dir / "c.json";
    write_text(cfg, R"({"training": {"stage1": {"epochs": 2}, "stage2": {"epochs": 1}, "n_r": 16}})");
    REQUIRE(run({"gen", "--grid", "96", "--rooms", "2", "--seed", "3", "--out", dir / "a.json"}) == 0);
    REQUIRE(run({"gen", "--grid", "96", "--rooms", "2", "--seed", "3", "--out", dir / "b.json"}) == 0);
    CHECK(read_file(dir / "a.json") == read_file(dir / "b.json"));
    REQUIRE(run({"simulate", "--floorplan", dir / "a.json", "--receivers", "30", "--out", dir / "a.csv"}) == 0);
    REQUIRE(run({"simulate", "--floorplan", dir / "a.json", "--receivers", "30", "--out", dir / "b.csv"}) == 0);
    CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
    for (const char* out : {"a.vxf", "b.vxf"}) {
        REQUIRE(run({"train", "--data", dir / "a.csv", "--config", cfg, "--deterministic", "--threads", "2", "--out",
                     dir / out}) == 0);
    }
    CHECK(read_file(dir / "a.vxf") == read_file(dir / "b.vxf"));
    CHECK(read_file(dir / "a.vxf.report.json") == read_file(dir / "b.vxf.report.json"));
}
