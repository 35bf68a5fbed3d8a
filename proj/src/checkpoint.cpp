#include <cstdint>
#include <cstring>
#include <fstream>

#include "deepicp/autodiff.hpp"

namespace deepicp::ad {

namespace {

constexpr char kMagic[4] = {'D', 'I', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated value data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  // std::map iterates in name order.
  for (const auto& [name, entry] : store.entries()) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = entry.tensor.shape();
    write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (int e : shape) write_u32(os, static_cast<std::uint32_t>(e));
    for (double v : entry.tensor.values()) write_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

void load_checkpoint(ParameterStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  }

  const bool fresh = store.entries().empty();
  std::size_t loaded = 0;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint: truncated name");
    const std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32(is));
    const int count = shape_size(shape);
    std::vector<double> values(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) values[static_cast<std::size_t>(i)] = read_f64(is);

    if (fresh) {
      Tensor t(shape, std::move(values));
      store.entries()[name] = ParameterStore::Entry{t, true};
    } else {
      if (!store.contains(name)) {
        throw std::runtime_error("checkpoint: unknown parameter '" + name +
                                 "' (model/config mismatch)");
      }
      ParameterStore::Entry& e = store.entry(name);
      if (e.tensor.shape() != shape) {
        throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                                 shape_str(shape) + " vs model " +
                                 shape_str(e.tensor.shape()));
      }
      e.tensor.values() = std::move(values);
    }
    ++loaded;
  }
  if (!fresh && loaded != store.entries().size()) {
    throw std::runtime_error("checkpoint: file holds " + std::to_string(loaded) +
                             " entries, model expects " +
                             std::to_string(store.entries().size()));
  }
}

}  // namespace deepicp::ad
