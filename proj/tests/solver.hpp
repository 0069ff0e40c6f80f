#pragma once

// Brute-force solvability oracle: breadth-first search over full environment
// states (grid contents + pose + carried item), expanding every action
// through the real transition rule. Independent of any learned component.

#include <cstring>
#include <deque>
#include <string>
#include <unordered_set>

#include "gridrl/grid_env.hpp"

namespace solver {

inline std::string state_key(const gridrl::env::EnvState& s) {
    std::string key;
    key.reserve(s.grid.cells.size() * 2 + 4);
    for (const auto& c : s.grid.cells) {
        key.push_back(static_cast<char>(c.kind));
        key.push_back(static_cast<char>(c.state));
    }
    key.push_back(static_cast<char>(s.agent.x));
    key.push_back(static_cast<char>(s.agent.y));
    key.push_back(static_cast<char>(s.agent.heading));
    key.push_back(s.carried ? static_cast<char>(s.carried->kind) : '\0');
    return key;
}

struct SolveResult {
    bool solvable = false;
    int steps = 0;  // length of the shortest goal-reaching action sequence
};

inline SolveResult solve_bfs(const gridrl::env::EnvState& start, int max_depth = 100000) {
    using gridrl::env::Action;
    using gridrl::env::EnvState;

    std::unordered_set<std::string> visited;
    std::deque<std::pair<EnvState, int>> queue;

    EnvState s0 = start;
    s0.step_count = 0;
    s0.terminated = false;
    visited.insert(state_key(s0));
    queue.emplace_back(std::move(s0), 0);

    while (!queue.empty()) {
        auto [s, depth] = std::move(queue.front());
        queue.pop_front();
        if (depth >= max_depth) continue;
        for (int a = 0; a < gridrl::env::kNumActions; ++a) {
            EnvState next = s;
            auto t = gridrl::env::apply_action(next, static_cast<Action>(a));
            if (t.extrinsic_reward == 1.0) return {true, depth + 1};
            if (t.done) continue;
            next.step_count = 0;
            next.terminated = false;
            std::string key = state_key(next);
            if (visited.insert(std::move(key)).second) {
                queue.emplace_back(std::move(next), depth + 1);
            }
        }
    }
    return {false, 0};
}

}  // namespace solver
