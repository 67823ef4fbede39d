#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semcom {

// FNV-1a, used for artifact payload checksums.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t state = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64_file(const std::string& path);

// Little-endian codec for the model container format.
void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v);
void append_u64_le(std::vector<unsigned char>& out, std::uint64_t v);
void append_f64_le(std::vector<unsigned char>& out, double v);
std::uint32_t read_u32_le(const unsigned char* p);
std::uint64_t read_u64_le(const unsigned char* p);
double read_f64_le(const unsigned char* p);

// Shortest round-trip decimal form. All report files are written through this
// so reruns are byte-identical.
std::string format_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace semcom
