#include "pathopaint/container.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>

#include "pathopaint/errors.hpp"

namespace pathopaint {

namespace le {

namespace {

template <typename U>
void put_unsigned(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <typename U>
U get_unsigned(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put_unsigned(os, v); }
void put_i32(std::ostream& os, std::int32_t v) { put_unsigned(os, static_cast<std::uint32_t>(v)); }
void put_u64(std::ostream& os, std::uint64_t v) { put_unsigned(os, v); }
void put_i64(std::ostream& os, std::int64_t v) { put_unsigned(os, static_cast<std::uint64_t>(v)); }
void put_f32(std::ostream& os, float v) { put_unsigned(os, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& os, double v) { put_unsigned(os, std::bit_cast<std::uint64_t>(v)); }
void put_bytes(std::ostream& os, std::string_view s) {
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is) { return get_unsigned<std::uint32_t>(is); }
std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_unsigned<std::uint32_t>(is)); }
std::uint64_t get_u64(std::istream& is) { return get_unsigned<std::uint64_t>(is); }
std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_unsigned<std::uint64_t>(is)); }
float get_f32(std::istream& is) { return std::bit_cast<float>(get_unsigned<std::uint32_t>(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_unsigned<std::uint64_t>(is)); }
std::string get_bytes(std::istream& is, std::size_t n) {
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("unexpected end of file");
  return s;
}

}  // namespace le

std::array<char, 4> make_magic(std::string_view four_chars) {
  if (four_chars.size() != 4) throw ParameterError("magic must be exactly four bytes");
  return {four_chars[0], four_chars[1], four_chars[2], four_chars[3]};
}

void write_container(const std::filesystem::path& path, const ParamContainer& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling file and rename, so a killed process never leaves a truncated checkpoint.
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    os.write(c.magic.data(), 4);
    le::put_u32(os, c.version);
    le::put_u32(os, static_cast<std::uint32_t>(c.header.size()));
    for (auto h : c.header) le::put_i64(os, h);
    le::put_u32(os, static_cast<std::uint32_t>(c.arrays.size()));
    for (const auto& a : c.arrays) {
      le::put_u32(os, static_cast<std::uint32_t>(a.name.size()));
      le::put_bytes(os, a.name);
      le::put_u32(os, static_cast<std::uint32_t>(a.shape.size()));
      for (auto d : a.shape) le::put_i64(os, d);
      for (float v : a.values) le::put_f32(os, v);
    }
    if (!os) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParamContainer read_container(const std::filesystem::path& path, std::string_view expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  ParamContainer c;
  if (!is.read(c.magic.data(), 4)) throw FormatError("truncated container " + path.string());
  if (std::string_view(c.magic.data(), 4) != expected_magic) {
    throw FormatError(path.string() + ": expected magic '" + std::string(expected_magic) + "', found '" +
                      std::string(c.magic.data(), 4) + "'");
  }
  c.version = le::get_u32(is);
  if (c.version != kContainerVersion) {
    throw FormatError(path.string() + ": unsupported container version " + std::to_string(c.version));
  }
  const auto n_header = le::get_u32(is);
  c.header.resize(n_header);
  for (auto& h : c.header) h = le::get_i64(is);
  const auto n_arrays = le::get_u32(is);
  c.arrays.resize(n_arrays);
  for (auto& a : c.arrays) {
    a.name = le::get_bytes(is, le::get_u32(is));
    a.shape.resize(le::get_u32(is));
    std::int64_t numel = 1;
    for (auto& d : a.shape) {
      d = le::get_i64(is);
      if (d < 0) throw FormatError("negative dimension in " + a.name);
      numel *= d;
    }
    a.values.resize(static_cast<std::size_t>(numel));
    for (auto& v : a.values) v = le::get_f32(is);
  }
  return c;
}

namespace {

std::map<std::string, torch::Tensor> module_tensors(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : module.named_parameters(true)) out.emplace("param:" + p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) out.emplace("buffer:" + b.key(), b.value());
  return out;
}

}  // namespace

ParamContainer module_to_container(std::string_view magic, std::vector<std::int64_t> header,
                                   const torch::nn::Module& module) {
  ParamContainer c;
  c.magic = make_magic(magic);
  c.header = std::move(header);
  for (const auto& [name, tensor] : module_tensors(module)) {
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    NamedArray a;
    a.name = name;
    a.shape.assign(t.sizes().begin(), t.sizes().end());
    a.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    c.arrays.push_back(std::move(a));
  }
  return c;
}

void load_module_state(const ParamContainer& c, torch::nn::Module& module) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : c.arrays) by_name.emplace(a.name, &a);
  torch::NoGradGuard no_grad;
  for (auto& [name, tensor] : module_tensors(module)) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing array '" + name + "'");
    const auto& a = *it->second;
    if (!std::equal(a.shape.begin(), a.shape.end(), tensor.sizes().begin(), tensor.sizes().end())) {
      throw FormatError("shape mismatch for array '" + name + "'");
    }
    auto src = torch::from_blob(const_cast<float*>(a.values.data()), a.shape, torch::kFloat32);
    tensor.copy_(src);
  }
}

}  // namespace pathopaint
