#include "gridrl/grid_env.hpp"

#include <algorithm>
#include <deque>

#include "gridrl/errors.hpp"

namespace gridrl::env {

namespace {

constexpr int kMaxGenerationAttempts = 1000;

// Heading unit vectors; y grows downward.
constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};

int heading_dx(Heading h) { return kDx[static_cast<int>(h)]; }
int heading_dy(Heading h) { return kDy[static_cast<int>(h)]; }

struct Box {
    int x, y, w, h;  // top-left + extents
    int x1() const { return x + w - 1; }
    int y1() const { return y + h - 1; }
};

bool boxes_intersect(const Box& a, const Box& b, Box& out) {
    int x0 = std::max(a.x, b.x);
    int y0 = std::max(a.y, b.y);
    int x1 = std::min(a.x1(), b.x1());
    int y1 = std::min(a.y1(), b.y1());
    if (x0 > x1 || y0 > y1) return false;
    out = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    return true;
}

}  // namespace

EnvKind env_kind_from_name(std::string_view name) {
    if (name == "multiroom-n3-s4") return EnvKind::MultiRoomN3S4;
    if (name == "doorkey-8x8") return EnvKind::DoorKey8x8;
    if (name == "keycorridor-s3r1") return EnvKind::KeyCorridorS3R1;
    throw ConfigError("unknown environment: " + std::string(name));
}

std::string_view env_kind_name(EnvKind kind) {
    switch (kind) {
        case EnvKind::MultiRoomN3S4:
            return "multiroom-n3-s4";
        case EnvKind::DoorKey8x8:
            return "doorkey-8x8";
        case EnvKind::KeyCorridorS3R1:
            return "keycorridor-s3r1";
    }
    return "?";
}

bool is_walkable(const Cell& c) {
    switch (c.kind) {
        case ObjectKind::Empty:
        case ObjectKind::Floor:
        case ObjectKind::Goal:
            return true;
        case ObjectKind::Door:
            return c.state == DoorState::Open;
        default:
            return false;
    }
}

// --- generators ---

EnvState generate_multiroom(SplitMix64& rng) {
    constexpr int kCanvas = 11;
    constexpr int kRoom = 4;  // box side including walls, 2x2 interior

    for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
        Box rooms[3];
        int door_x[2], door_y[2];
        rooms[0] = {rng.next_int(0, kCanvas - kRoom + 1), rng.next_int(0, kCanvas - kRoom + 1),
                    kRoom, kRoom};
        bool ok = true;
        for (int k = 1; k < 3 && ok; ++k) {
            int dir = rng.next_int(0, 4);
            int jitter = rng.next_int(-1, 2);
            const Box& prev = rooms[k - 1];
            Box cur{};
            switch (dir) {
                case 0:  // right
                    cur = {prev.x + kRoom - 1, prev.y + jitter, kRoom, kRoom};
                    break;
                case 1:  // down
                    cur = {prev.x + jitter, prev.y + kRoom - 1, kRoom, kRoom};
                    break;
                case 2:  // left
                    cur = {prev.x - kRoom + 1, prev.y + jitter, kRoom, kRoom};
                    break;
                default:  // up
                    cur = {prev.x + jitter, prev.y - kRoom + 1, kRoom, kRoom};
                    break;
            }
            if (cur.x < 0 || cur.y < 0 || cur.x1() >= kCanvas || cur.y1() >= kCanvas) {
                ok = false;
                break;
            }
            // Adjacent rooms may share exactly their common wall line; any
            // other overlap merges interiors and is rejected.
            Box inter{};
            if (!boxes_intersect(prev, cur, inter) || (inter.w != 1 && inter.h != 1)) {
                ok = false;
                break;
            }
            for (int j = 0; j < k - 1; ++j) {
                Box unused{};
                if (boxes_intersect(rooms[j], cur, unused)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) break;

            // Door on the shared wall, at a row/column interior to both rooms.
            if (dir == 0 || dir == 2) {
                int lo = std::max(prev.y, cur.y) + 1;
                int hi = std::min(prev.y, cur.y) + kRoom - 2;
                door_x[k - 1] = (dir == 0) ? cur.x : prev.x;
                door_y[k - 1] = rng.next_int(lo, hi + 1);
            } else {
                int lo = std::max(prev.x, cur.x) + 1;
                int hi = std::min(prev.x, cur.x) + kRoom - 2;
                door_y[k - 1] = (dir == 1) ? cur.y : prev.y;
                door_x[k - 1] = rng.next_int(lo, hi + 1);
            }
            rooms[k] = cur;
        }
        if (!ok) continue;
        int agent_cell = rng.next_int(0, 4);
        int agent_heading = rng.next_int(0, 4);
        int goal_cell = rng.next_int(0, 4);

        EnvState s;
        s.kind = EnvKind::MultiRoomN3S4;
        s.grid = Grid(kCanvas, kCanvas, Cell{ObjectKind::Wall, DoorState::Open});
        for (const Box& r : rooms) {
            for (int y = r.y + 1; y <= r.y1() - 1; ++y) {
                for (int x = r.x + 1; x <= r.x1() - 1; ++x) {
                    s.grid.at(x, y) = Cell{ObjectKind::Empty, DoorState::Open};
                }
            }
        }
        for (int d = 0; d < 2; ++d) {
            s.grid.at(door_x[d], door_y[d]) = Cell{ObjectKind::Door, DoorState::Closed};
        }
        s.agent = {rooms[0].x + 1 + agent_cell % 2, rooms[0].y + 1 + agent_cell / 2,
                   static_cast<Heading>(agent_heading)};
        int gx = rooms[2].x + 1 + goal_cell % 2;
        int gy = rooms[2].y + 1 + goal_cell / 2;
        s.grid.at(gx, gy) = Cell{ObjectKind::Goal, DoorState::Open};
        s.max_steps = 60;  // 20 steps per room
        return s;
    }
    throw GenerationError("multiroom generation exhausted retries");
}

EnvState generate_doorkey(SplitMix64& rng) {
    constexpr int kSize = 8;
    EnvState s;
    s.kind = EnvKind::DoorKey8x8;
    s.grid = Grid(kSize, kSize, Cell{ObjectKind::Empty, DoorState::Open});
    for (int i = 0; i < kSize; ++i) {
        s.grid.at(i, 0) = s.grid.at(i, kSize - 1) = Cell{ObjectKind::Wall, DoorState::Open};
        s.grid.at(0, i) = s.grid.at(kSize - 1, i) = Cell{ObjectKind::Wall, DoorState::Open};
    }

    int split = rng.next_int(2, kSize - 2);
    for (int y = 0; y < kSize; ++y) s.grid.at(split, y) = Cell{ObjectKind::Wall, DoorState::Open};
    int door_y = rng.next_int(1, kSize - 1);
    s.grid.at(split, door_y) = Cell{ObjectKind::Door, DoorState::Locked};

    s.agent.x = rng.next_int(1, split);
    s.agent.y = rng.next_int(1, kSize - 1);
    s.agent.heading = static_cast<Heading>(rng.next_int(0, 4));
    for (int attempt = 0;; ++attempt) {
        if (attempt >= kMaxGenerationAttempts) {
            throw GenerationError("doorkey key placement exhausted retries");
        }
        int kx = rng.next_int(1, split);
        int ky = rng.next_int(1, kSize - 1);
        if (kx == s.agent.x && ky == s.agent.y) continue;
        s.grid.at(kx, ky) = Cell{ObjectKind::Key, DoorState::Open};
        break;
    }
    int gx = rng.next_int(split + 1, kSize - 1);
    int gy = rng.next_int(1, kSize - 1);
    s.grid.at(gx, gy) = Cell{ObjectKind::Goal, DoorState::Open};
    s.max_steps = 640;  // 10 * size^2
    return s;
}

EnvState generate_keycorridor(SplitMix64& rng) {
    constexpr int kW = 11, kH = 7;
    constexpr int kCorridorRow = 3;
    EnvState s;
    s.kind = EnvKind::KeyCorridorS3R1;
    s.grid = Grid(kW, kH, Cell{ObjectKind::Wall, DoorState::Open});
    for (int x = 3; x <= 7; ++x) {
        s.grid.at(x, kCorridorRow) = Cell{ObjectKind::Empty, DoorState::Open};
    }

    // Locked door at one end of the corridor with the ball behind it.
    bool ball_right = rng.next_int(0, 2) == 0;
    if (ball_right) {
        s.grid.at(8, kCorridorRow) = Cell{ObjectKind::Door, DoorState::Locked};
        s.grid.at(9, kCorridorRow) = Cell{ObjectKind::Ball, DoorState::Open};
    } else {
        s.grid.at(2, kCorridorRow) = Cell{ObjectKind::Door, DoorState::Locked};
        s.grid.at(1, kCorridorRow) = Cell{ObjectKind::Ball, DoorState::Open};
    }

    // Side room with the key, behind a closed (unlocked) door above or below
    // the corridor.
    int key_col = rng.next_int(3, 8);
    bool key_up = rng.next_int(0, 2) == 0;
    if (key_up) {
        s.grid.at(key_col, kCorridorRow - 1) = Cell{ObjectKind::Door, DoorState::Closed};
        s.grid.at(key_col, kCorridorRow - 2) = Cell{ObjectKind::Key, DoorState::Open};
    } else {
        s.grid.at(key_col, kCorridorRow + 1) = Cell{ObjectKind::Door, DoorState::Closed};
        s.grid.at(key_col, kCorridorRow + 2) = Cell{ObjectKind::Key, DoorState::Open};
    }

    s.agent = {5, kCorridorRow, static_cast<Heading>(rng.next_int(0, 4))};
    s.max_steps = 270;  // 30 * room_size^2
    return s;
}

EnvState reset(EnvKind kind, uint64_t seed) {
    SplitMix64 rng(derive_stream(seed, static_cast<uint64_t>(kind)));
    switch (kind) {
        case EnvKind::MultiRoomN3S4:
            return generate_multiroom(rng);
        case EnvKind::DoorKey8x8:
            return generate_doorkey(rng);
        case EnvKind::KeyCorridorS3R1:
            return generate_keycorridor(rng);
    }
    throw ConfigError("unknown environment kind");
}

// --- transition ---

StepResult step(EnvState& state, Action action) {
    TransitionResult t = apply_action(state, action);
    StepResult result;
    result.obs = egocentric_view(state);
    result.extrinsic_reward = t.extrinsic_reward;
    result.done = t.done;
    return result;
}

TransitionResult apply_action(EnvState& state, Action action) {
    if (state.terminated) throw UsageError("step: episode already terminated");

    int fx = state.agent.x + heading_dx(state.agent.heading);
    int fy = state.agent.y + heading_dy(state.agent.heading);
    bool front_ok = state.grid.in_bounds(fx, fy);
    bool goal_event = false;

    switch (action) {
        case Action::TurnLeft:
            state.agent.heading = static_cast<Heading>((static_cast<int>(state.agent.heading) + 3) % 4);
            break;
        case Action::TurnRight:
            state.agent.heading = static_cast<Heading>((static_cast<int>(state.agent.heading) + 1) % 4);
            break;
        case Action::MoveForward:
            if (front_ok && is_walkable(state.grid.at(fx, fy))) {
                state.agent.x = fx;
                state.agent.y = fy;
                if (state.grid.at(fx, fy).kind == ObjectKind::Goal) goal_event = true;
            }
            break;
        case Action::Pickup:
            if (front_ok && !state.carried.has_value()) {
                Cell& c = state.grid.at(fx, fy);
                if (c.kind == ObjectKind::Key || c.kind == ObjectKind::Ball ||
                    c.kind == ObjectKind::Box) {
                    state.carried = c;
                    if (c.kind == ObjectKind::Ball && state.kind == EnvKind::KeyCorridorS3R1) {
                        goal_event = true;
                    }
                    c = Cell{ObjectKind::Empty, DoorState::Open};
                }
            }
            break;
        case Action::Drop:
            if (front_ok && state.carried.has_value() &&
                state.grid.at(fx, fy).kind == ObjectKind::Empty) {
                state.grid.at(fx, fy) = *state.carried;
                state.carried.reset();
            }
            break;
        case Action::Toggle:
            if (front_ok) {
                Cell& c = state.grid.at(fx, fy);
                if (c.kind == ObjectKind::Door) {
                    switch (c.state) {
                        case DoorState::Closed:
                            c.state = DoorState::Open;
                            break;
                        case DoorState::Locked:
                            if (state.carried.has_value() &&
                                state.carried->kind == ObjectKind::Key) {
                                c.state = DoorState::Open;
                            }
                            break;
                        case DoorState::Open:
                            c.state = DoorState::Closed;
                            break;
                    }
                }
            }
            break;
        case Action::Done:
            break;
    }

    state.step_count += 1;
    bool done = goal_event || state.step_count >= state.max_steps;
    state.terminated = done;
    return {goal_event ? 1.0 : 0.0, done};
}

// --- observation ---

Observation egocentric_view(const EnvState& state) {
    int h = static_cast<int>(state.agent.heading);
    int fx = kDx[h], fy = kDy[h];
    int rx = kDx[(h + 1) % 4], ry = kDy[(h + 1) % 4];

    Cell win[kViewSize][kViewSize];
    bool transparent[kViewSize][kViewSize];
    for (int i = 0; i < kViewSize; ++i) {
        for (int j = 0; j < kViewSize; ++j) {
            int ahead = kViewSize - 1 - j;
            int side = i - kViewSize / 2;
            int wx = state.agent.x + fx * ahead + rx * side;
            int wy = state.agent.y + fy * ahead + ry * side;
            if (!state.grid.in_bounds(wx, wy)) {
                win[i][j] = Cell{ObjectKind::Unseen, DoorState::Open};
                transparent[i][j] = false;
                continue;
            }
            const Cell& c = state.grid.at(wx, wy);
            win[i][j] = c;
            transparent[i][j] =
                !(c.kind == ObjectKind::Wall ||
                  (c.kind == ObjectKind::Door && c.state != DoorState::Open));
        }
    }
    // The agent's own cell shows what it is carrying, and seeds the fill.
    win[kViewSize / 2][kViewSize - 1] =
        state.carried.value_or(Cell{ObjectKind::Empty, DoorState::Open});
    transparent[kViewSize / 2][kViewSize - 1] = true;

    bool visible[kViewSize][kViewSize] = {};
    std::deque<std::pair<int, int>> queue;
    visible[kViewSize / 2][kViewSize - 1] = true;
    queue.emplace_back(kViewSize / 2, kViewSize - 1);
    while (!queue.empty()) {
        auto [ci, cj] = queue.front();
        queue.pop_front();
        if (!transparent[ci][cj]) continue;  // visible but does not spread
        for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
                int ni = ci + di, nj = cj + dj;
                if (ni < 0 || ni >= kViewSize || nj < 0 || nj >= kViewSize) continue;
                if (!visible[ni][nj]) {
                    visible[ni][nj] = true;
                    queue.emplace_back(ni, nj);
                }
            }
        }
    }

    Observation obs;
    for (int i = 0; i < kViewSize; ++i) {
        for (int j = 0; j < kViewSize; ++j) {
            obs.at(i, j) = visible[i][j] ? win[i][j] : Cell{ObjectKind::Unseen, DoorState::Open};
        }
    }
    return obs;
}

BinaryObs encode_binary(const Observation& obs) {
    BinaryObs b;
    b.bits.fill(0);
    for (int i = 0; i < kViewSize; ++i) {
        for (int j = 0; j < kViewSize; ++j) {
            const Cell& c = obs.at(i, j);
            b.bits[BinaryObs::index(i, j, static_cast<int>(c.kind), static_cast<int>(c.state))] = 1;
        }
    }
    return b;
}

std::vector<uint32_t> BinaryObs::hot_indices() const {
    std::vector<uint32_t> idx;
    idx.reserve(kViewSize * kViewSize);
    for (uint32_t i = 0; i < kBinaryObsLen; ++i) {
        if (bits[i]) idx.push_back(i);
    }
    return idx;
}

void BinaryObs::to_doubles(double* out) const {
    for (size_t i = 0; i < kBinaryObsLen; ++i) out[i] = bits[i] ? 1.0 : 0.0;
}

// --- rendering ---

namespace {

char cell_char(const Cell& c) {
    switch (c.kind) {
        case ObjectKind::Unseen:
            return '?';
        case ObjectKind::Empty:
            return '.';
        case ObjectKind::Wall:
            return '#';
        case ObjectKind::Floor:
            return ',';
        case ObjectKind::Door:
            return c.state == DoorState::Open ? '_' : (c.state == DoorState::Closed ? '+' : 'L');
        case ObjectKind::Key:
            return 'K';
        case ObjectKind::Ball:
            return 'O';
        case ObjectKind::Box:
            return 'B';
        case ObjectKind::Goal:
            return 'G';
        case ObjectKind::Lava:
            return '~';
        case ObjectKind::Agent:
            return '@';
    }
    return '?';
}

char agent_char(Heading h) {
    constexpr char c[4] = {'>', 'v', '<', '^'};
    return c[static_cast<int>(h)];
}

}  // namespace

std::string render_grid(const EnvState& state) {
    std::string out;
    out.reserve(static_cast<size_t>(state.grid.height) * (state.grid.width + 1));
    for (int y = 0; y < state.grid.height; ++y) {
        for (int x = 0; x < state.grid.width; ++x) {
            if (x == state.agent.x && y == state.agent.y) {
                out += agent_char(state.agent.heading);
            } else {
                out += cell_char(state.grid.at(x, y));
            }
        }
        out += '\n';
    }
    return out;
}

std::string render_view(const Observation& obs) {
    std::string out;
    for (int j = 0; j < kViewSize; ++j) {
        for (int i = 0; i < kViewSize; ++i) out += cell_char(obs.at(i, j));
        out += '\n';
    }
    return out;
}

}  // namespace gridrl::env
