#pragma once

#include <cstdint>
#include <string_view>

#include <ATen/core/Generator.h>

namespace pathopaint {

/// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

/// Stable per-item seed: hash(global_seed, key). Independent of platform and std::hash.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// A fresh CPU generator. All tensor randomness in the library flows through one of these.
at::Generator make_generator(std::uint64_t seed);

}  // namespace pathopaint
