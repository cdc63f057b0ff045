#include "dfa/checkpoint.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

#include "dfa/binary_io.hpp"

namespace dfa::ad {

namespace {
constexpr std::array<char, 8> kMagic{'D', 'F', 'A', 'C', 'K', 'P', 'T', '\0'};
}

void write_checkpoint(std::ostream& os, const StageNetwork& net) {
  os.write(kMagic.data(), kMagic.size());
  io::put_u32(os, kCheckpointVersion);
  io::put_string(os, net.arch().to_string());
  io::put_u32(os, static_cast<std::uint32_t>(net.parameters().size()));
  for (const auto& [name, t] : net.parameters()) {
    io::put_string(os, name);
    io::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) io::put_u64(os, e);
    for (double v : t.values()) io::put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

StageNetwork read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  io::read_exact(is, magic.data(), magic.size());
  if (magic != kMagic) throw std::runtime_error("checkpoint: bad magic");
  const std::uint32_t version = io::get_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const ArchDescriptor arch = ArchDescriptor::parse(io::get_string(is));
  const auto expected = parameter_shapes(arch);
  const std::uint32_t count = io::get_u32(is);
  if (count != expected.size()) throw std::runtime_error("checkpoint: parameter count does not match architecture");
  ParameterSet params;
  for (std::uint32_t p = 0; p < count; ++p) {
    std::string name = io::get_string(is);
    const std::uint32_t rank = io::get_u32(is);
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = io::get_u64(is);
    auto it = expected.find(name);
    if (it == expected.end() || it->second != shape)
      throw std::runtime_error("checkpoint: unexpected parameter " + name + " " + shape_string(shape));
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = io::get_f64(is);
    params.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return StageNetwork(arch, std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const StageNetwork& net) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(os, net);
}

StageNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  try {
    return read_checkpoint(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace dfa::ad
