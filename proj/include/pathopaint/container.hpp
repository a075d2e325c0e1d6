#pragma once

// Little-endian binary container shared by every model checkpoint.
//
// Layout:
//   magic        4 bytes ("PPDM", "PPVC", "PPFX", "PPSG")
//   version      u32
//   n_header     u32, followed by n_header i64 header fields (meaning fixed per magic)
//   n_arrays     u32, followed by n_arrays records:
//     name_len u32, name bytes, ndim u32, ndim x i64 dims, prod(dims) x f32 values

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace pathopaint {

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

struct ParamContainer {
  std::array<char, 4> magic{};
  std::uint32_t version = kContainerVersion;
  std::vector<std::int64_t> header;
  std::vector<NamedArray> arrays;
};

std::array<char, 4> make_magic(std::string_view four_chars);

void write_container(const std::filesystem::path& path, const ParamContainer& c);
ParamContainer read_container(const std::filesystem::path& path, std::string_view expected_magic);

/// Collects parameters and buffers of a module (sorted by name) into a container.
ParamContainer module_to_container(std::string_view magic, std::vector<std::int64_t> header,
                                   const torch::nn::Module& module);

/// Copies arrays back into a module's parameters/buffers. Every module tensor must be present
/// with a matching shape.
void load_module_state(const ParamContainer& c, torch::nn::Module& module);

namespace le {

void put_u32(std::ostream& os, std::uint32_t v);
void put_i32(std::ostream& os, std::int32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_i64(std::ostream& os, std::int64_t v);
void put_f32(std::ostream& os, float v);
void put_f64(std::ostream& os, double v);
void put_bytes(std::ostream& os, std::string_view s);

std::uint32_t get_u32(std::istream& is);
std::int32_t get_i32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
std::int64_t get_i64(std::istream& is);
float get_f32(std::istream& is);
double get_f64(std::istream& is);
std::string get_bytes(std::istream& is, std::size_t n);

}  // namespace le

}  // namespace pathopaint
