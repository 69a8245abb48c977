#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rfplan/field.hpp"
#include "rfplan/geometry.hpp"
#include "rfplan/simulator.hpp"
#include "rfplan/training.hpp"

namespace rfplan {

using json = nlohmann::ordered_json;

// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
// Throws ValidationError naming the path when it cannot be read.
std::string read_file(const std::filesystem::path& path);

json floorplan_to_json(const Floorplan& fp);
Floorplan floorplan_from_json(const json& j);
void save_floorplan(const std::filesystem::path& path, const Floorplan& fp);
Floorplan load_floorplan(const std::filesystem::path& path);

// First line "# grid_size=.. scale=.. K=.. max_order=.. seed=..", then the
// column header and one row per measurement.
std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(std::string_view text);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

// "VXF1", u32 L, u32 K_omega, f32 scale, u32 flags, then little-endian f32
// delta logits and orientation logits.
std::string checkpoint_bytes(const VoxelField& field);
VoxelField checkpoint_from_bytes(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const VoxelField& field, const json& metadata);
VoxelField load_checkpoint(const std::filesystem::path& path);

// Binary P5, 0 free and 255 wall.
std::string pgm_from_bitmap(const Bitmap& b);
Bitmap bitmap_from_pgm(std::string_view bytes);
// Power in dB over a fixed -120..-30 window; non-finite cells go to the
// floor and are counted.
std::string pgm_from_power(const Grid<double>& linear_power, std::size_t* nonfinite = nullptr);
// Wall bitmap with ray polylines drawn over it.
std::string svg_rays(const Bitmap& walls, const std::vector<std::vector<Vec2>>& polylines);

json sim_config_to_json(const SimConfig& c);
SimConfig sim_config_from_json(const json& j, SimConfig base = {});
json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});

}  // namespace rfplan
