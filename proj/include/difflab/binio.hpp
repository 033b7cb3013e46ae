#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

// Little helpers for the binary checkpoint formats.  Everything is written
// little-endian with fixed-width fields so a saved model reloads bit-exactly.

namespace difflab::binio {

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_i32(std::ostream& os, std::int32_t v);
void write_f64(std::ostream& os, double v);
void write_f64_array(std::ostream& os, const std::vector<double>& v);

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::int32_t read_i32(std::istream& is);
double read_f64(std::istream& is);
std::vector<double> read_f64_array(std::istream& is);

// Reads and checks an 8-byte magic tag; throws std::runtime_error on mismatch.
void write_magic(std::ostream& os, const char magic[8]);
void expect_magic(std::istream& is, const char magic[8], const std::string& what);

}  // namespace difflab::binio
