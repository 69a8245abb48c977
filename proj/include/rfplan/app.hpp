#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfplan/geometry.hpp"
#include "rfplan/io.hpp"
#include "rfplan/simulator.hpp"

namespace rfplan {

// Parses argv (without the program name) and runs one subcommand.
// Returns 0 on success, 1 on bad input or usage, 2 on runtime failure.
int run_command(const std::vector<std::string>& args);

// A generated apartment with one transmitter per room and a receiver
// trajectory, simulated. Receivers that coincide with a transmitter are
// dropped.
struct Scenario {
    Floorplan floorplan;
    std::vector<Vec2> transmitters;
    std::vector<Pixel> receivers;
    Dataset data;
};

Scenario make_scenario(int grid_size, int num_rooms, int receivers, const SimConfig& sim, std::uint64_t seed);

// Written next to every command output as "<output>.manifest.json".
struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double seconds = 0.0;
    json extra = json::object();

    json to_json() const;
};

std::string tool_version();

}  // namespace rfplan
