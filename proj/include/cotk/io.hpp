#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "cotk/types.hpp"

namespace cotk {

// CSV with header `i,t,f1..fd`, one row per (path, time step).
// Values are written with 17 significant digits so a round trip is exact.
void write_batch_csv(const PathBatch& batch, std::ostream& out);
void write_batch_csv(const PathBatch& batch, const std::string& path);
PathBatch read_batch_csv(std::istream& in);
PathBatch read_batch_csv(const std::string& path);

// Columnar binary format: magic "COTK1", then m, T, d as little-endian
// uint64, then m*T*d doubles (path-major, then time, then feature).
void write_batch_binary(const PathBatch& batch, std::ostream& out);
void write_batch_binary(const PathBatch& batch, const std::string& path);
PathBatch read_batch_binary(std::istream& in);
PathBatch read_batch_binary(const std::string& path);

// FNV-1a over a canonical string; used to stamp emitted files with the
// configuration they came from.
std::uint64_t fnv1a64(const std::string& text);
std::string hash_hex(std::uint64_t h);

// 17-significant-digit decimal rendering (shortest round-trippable).
std::string format_double(double v);

}  // namespace cotk
