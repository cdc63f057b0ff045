#pragma once

#include <cstdint>
#include <string_view>

namespace dfa {

std::uint64_t splitmix64(std::uint64_t x);

// Every random stream in a run descends from one top-level seed:
// derive_seed(seed, "stage1.init") or derive_seed(seed, "sample", i).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component, std::uint64_t index = 0);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace dfa
