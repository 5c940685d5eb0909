#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>

namespace mslca {

using Rng = std::mt19937_64;

// Independent generator for task `path` under `seed`. The same (seed, path)
// always yields the same stream, whatever thread runs the task.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
// Tasks must write only to their own preallocated output slot.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace mslca
