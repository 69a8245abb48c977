#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace rfplan {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator-() const { return {-x, -y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    bool operator==(const Vec2&) const = default;

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double norm2() const { return x * x + y * y; }
    Vec2 normalized() const { double n = norm(); return {x / n, y / n}; }
    Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// Integer pixel coordinate. Pixel (x, y) has its center at the continuous
// point (x, y); x is the column, y the row.
struct Pixel {
    int x = 0;
    int y = 0;
    bool operator==(const Pixel&) const = default;
    Vec2 center() const { return {double(x), double(y)}; }
};

// Dense row-major 2D array.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(std::size_t(width) * std::size_t(height), fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    std::size_t index(int x, int y) const { return std::size_t(y) * std::size_t(width_) + std::size_t(x); }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using Bitmap = Grid<std::uint8_t>;

struct WallSegment {
    Vec2 a;
    Vec2 b;
    double reflectance = 0.7;
};

struct Room {
    std::vector<Vec2> polygon;
};

struct Floorplan {
    int grid_size = 0;
    double scale = 0.1;          // meters per pixel
    double wall_thickness = 1.0; // pixels
    std::vector<WallSegment> segments;
    std::vector<Room> rooms;
    Bitmap raster;

    bool is_wall(Pixel p) const { return raster.in_bounds(p.x, p.y) && raster(p.x, p.y) != 0; }
    bool is_free(Vec2 p) const;
};

// Default wall thickness: 2 px at L=512, scaled with L, never below 1 px.
double default_wall_thickness(int grid_size);

// Sets every pixel whose center lies within thickness/2 of a segment.
// Throws ValidationError on out-of-bounds endpoints or thickness < 1.
Bitmap rasterize_floorplan(std::span<const WallSegment> segments, int grid_size, double wall_thickness);

// Validates the vector form and attaches its raster.
Floorplan make_floorplan(int grid_size, double scale, double wall_thickness,
                         std::vector<WallSegment> segments, std::vector<Room> rooms);

// Distance from p to the closed segment [a, b].
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

// Parameters (t, u) of the proper intersection of p + t(q-p) and a + u(b-a),
// or nullopt when the segments are parallel or miss each other.
struct SegmentHit {
    double t;
    double u;
};
std::optional<SegmentHit> intersect_segments(Vec2 p, Vec2 q, Vec2 a, Vec2 b);

bool point_in_polygon(Vec2 p, std::span<const Vec2> polygon);
Vec2 polygon_centroid(std::span<const Vec2> polygon);

struct Trajectory {
    std::vector<Pixel> points;
    int sample_interval = 1;
};

struct TrajectoryResult {
    Trajectory trajectory;
    std::vector<Pixel> rx_positions;
};

// Shortest 8-connected path (fewest moves; ties broken by Euclidean length)
// avoiding wall pixels. Diagonal moves may not cut wall corners.
// Throws ConnectivityError when no path exists.
std::vector<Pixel> astar_path(const Bitmap& walls, Pixel start, Pixel goal);

// Walks the anchors in order with A* legs and samples every
// sample_interval-th point. The seed picks the sampling phase.
TrajectoryResult generate_trajectory(const Floorplan& floorplan, std::span<const Pixel> anchors,
                                     int sample_interval, std::uint64_t seed);

// Nearest free pixel to each room centroid.
std::vector<Pixel> room_anchor_points(const Floorplan& floorplan);

// Centroid plus four inset corners per room, giving a trajectory that sweeps
// each room instead of passing through its middle only.
std::vector<Pixel> room_coverage_anchors(const Floorplan& floorplan, double inset_fraction = 0.25);

// About `count` receivers spread evenly along a coverage trajectory through
// every room (fewer when the trajectory is shorter than count).
std::vector<Pixel> sample_receivers(const Floorplan& floorplan, int count, std::uint64_t seed);

// One transmitter per room, uniform over the room's free pixels.
std::vector<Vec2> place_transmitters(const Floorplan& floorplan, std::span<const Room> rooms,
                                     std::uint64_t seed);

struct ApartmentParams {
    int num_rooms = 3;
    double scale = 0.1;
    double wall_thickness = 0.0;  // 0 selects default_wall_thickness
    double reflectance = 0.7;
    int margin_min = 6;
    int margin_max = 14;
    int door_width = 10;
    int min_room_side = 24;
};

// Random rectangular apartment: an outer box recursively split by interior
// walls, each with one door gap.
Floorplan generate_apartment(int grid_size, const ApartmentParams& params, std::uint64_t seed);

}  // namespace rfplan
