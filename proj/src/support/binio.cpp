#include "difflab/binio.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace difflab::binio {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint read: unexpected end of file");
  return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_raw(os, v); }
void write_i32(std::ostream& os, std::int32_t v) { write_raw(os, v); }
void write_f64(std::ostream& os, double v) { write_raw(os, v); }

void write_f64_array(std::ostream& os, const std::vector<double>& v) {
  write_u64(os, v.size());
  if (!v.empty())
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint32_t read_u32(std::istream& is) { return read_raw<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return read_raw<std::uint64_t>(is); }
std::int32_t read_i32(std::istream& is) { return read_raw<std::int32_t>(is); }
double read_f64(std::istream& is) { return read_raw<double>(is); }

std::vector<double> read_f64_array(std::istream& is) {
  const std::uint64_t n = read_u64(is);
  if (n > (1ull << 32))
    throw std::runtime_error("checkpoint read: implausible array length");
  std::vector<double> v(n);
  if (n) {
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint read: unexpected end of file");
  }
  return v;
}

void write_magic(std::ostream& os, const char magic[8]) { os.write(magic, 8); }

void expect_magic(std::istream& is, const char magic[8], const std::string& what) {
  char buf[8] = {};
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0)
    throw std::runtime_error("not a " + what + " file (bad magic)");
}

}  // namespace difflab::binio
