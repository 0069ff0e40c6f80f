#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridrl/rng.hpp"

namespace gridrl::env {

// Object taxonomy, index k. The order is load-bearing: it fixes the binary
// observation encoding.
enum class ObjectKind : uint8_t {
    Unseen = 0,
    Empty = 1,
    Wall = 2,
    Floor = 3,
    Door = 4,
    Key = 5,
    Ball = 6,
    Box = 7,
    Goal = 8,
    Lava = 9,
    Agent = 10,
};
constexpr int kNumObjectKinds = 11;

// Door state, index l. Non-door cells always carry Open (= 0).
enum class DoorState : uint8_t { Open = 0, Closed = 1, Locked = 2 };
constexpr int kNumDoorStates = 3;

struct Cell {
    ObjectKind kind = ObjectKind::Empty;
    DoorState state = DoorState::Open;

    bool operator==(const Cell&) const = default;
};

enum class Action : uint8_t {
    TurnLeft = 0,
    TurnRight = 1,
    MoveForward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
};
constexpr int kNumActions = 7;

enum class Heading : uint8_t { Right = 0, Down = 1, Left = 2, Up = 3 };

struct AgentPose {
    int x = 0;
    int y = 0;
    Heading heading = Heading::Right;
};

enum class EnvKind { MultiRoomN3S4, DoorKey8x8, KeyCorridorS3R1 };

EnvKind env_kind_from_name(std::string_view name);  // throws ConfigError on unknown names
std::string_view env_kind_name(EnvKind kind);

struct Grid {
    int width = 0;
    int height = 0;
    std::vector<Cell> cells;

    Grid() = default;
    Grid(int w, int h, Cell fill) : width(w), height(h), cells(static_cast<size_t>(w) * h, fill) {}

    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    Cell& at(int x, int y) { return cells[static_cast<size_t>(y) * width + x]; }
    const Cell& at(int x, int y) const { return cells[static_cast<size_t>(y) * width + x]; }
};

constexpr int kViewSize = 7;
constexpr int kBinaryObsLen = kViewSize * kViewSize * kNumObjectKinds * kNumDoorStates;  // 1617

// Egocentric 7x7 view. Column i grows to the agent's right, row j grows
// toward the agent; the agent sits at (i=3, j=6) facing j = 0.
struct Observation {
    std::array<Cell, kViewSize * kViewSize> cells;

    Cell& at(int i, int j) { return cells[static_cast<size_t>(i) * kViewSize + j]; }
    const Cell& at(int i, int j) const { return cells[static_cast<size_t>(i) * kViewSize + j]; }

    bool operator==(const Observation&) const = default;
};

// One-hot binary form of an observation: bit [i, j, k, l] set iff view cell
// (i, j) holds object kind k in state l. Flattened as ((i*7 + j)*11 + k)*3 + l.
struct BinaryObs {
    std::array<uint8_t, kBinaryObsLen> bits;

    static constexpr size_t index(int i, int j, int k, int l) {
        return ((static_cast<size_t>(i) * kViewSize + j) * kNumObjectKinds + k) * kNumDoorStates +
               l;
    }

    // Indices of the 49 set bits, view cells in (i, j) order.
    std::vector<uint32_t> hot_indices() const;
    void to_doubles(double* out) const;  // out[kBinaryObsLen]
};

struct EnvState {
    Grid grid;
    AgentPose agent;
    std::optional<Cell> carried;
    int step_count = 0;
    int max_steps = 0;
    EnvKind kind = EnvKind::MultiRoomN3S4;
    bool terminated = false;
};

struct StepResult {
    Observation obs;
    double extrinsic_reward = 0.0;
    bool done = false;
};

// Fresh layout for the requested environment. Layouts are a deterministic
// function of (kind, seed) built from integer-only SplitMix64 draws, so they
// are identical across platforms.
EnvState reset(EnvKind kind, uint64_t seed);

// Applies one action. Throws UsageError when the episode already terminated.
StepResult step(EnvState& state, Action action);

// The transition rule alone, without rendering the observation; step() is
// apply_action + egocentric_view. The solver and load tests use this.
struct TransitionResult {
    double extrinsic_reward = 0.0;
    bool done = false;
};
TransitionResult apply_action(EnvState& state, Action action);

// Layout generators, exposed for tests. All retry internally and throw
// GenerationError after 1000 failed attempts.
EnvState generate_multiroom(SplitMix64& rng);
EnvState generate_doorkey(SplitMix64& rng);
EnvState generate_keycorridor(SplitMix64& rng);

// 7x7 egocentric window, rotated so the agent faces up. Visibility is an
// 8-neighbour flood fill from the agent cell within the window: it spreads
// through transparent cells (anything but walls and closed or locked doors),
// and an opaque cell is visible when it touches a visible transparent cell.
// Cells outside the grid or not reached by the fill are Unseen. The agent's
// own cell shows the carried item, or Empty.
Observation egocentric_view(const EnvState& state);

BinaryObs encode_binary(const Observation& obs);

// ASCII debug rendering, one character per cell.
std::string render_grid(const EnvState& state);
std::string render_view(const Observation& obs);

// Walkability shared by step() and the solver/tests.
bool is_walkable(const Cell& c);

}  // namespace gridrl::env
