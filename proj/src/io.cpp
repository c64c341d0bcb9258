#include "cotk/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace cotk {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_batch_csv(const PathBatch& batch, std::ostream& out) {
  out << "i,t";
  for (int f = 1; f <= batch.features(); ++f) out << ",f" << f;
  out << "\n";
  for (int i = 0; i < batch.size(); ++i)
    for (int t = 0; t < batch.steps(); ++t) {
      out << i << ',' << t;
      for (int f = 0; f < batch.features(); ++f)
        out << ',' << format_double(batch[i].values()(t, f));
      out << "\n";
    }
}

void write_batch_csv(const PathBatch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_batch_csv(batch, out);
  if (!out) throw IoError("write failed: " + path);
}

PathBatch read_batch_csv(std::istream& in) {
  std::string line;
  // allow `# key=value` annotation lines ahead of the header
  do {
    if (!std::getline(in, line)) throw IoError("empty CSV");
  } while (!line.empty() && line[0] == '#');
  if (line.rfind("i,t", 0) != 0) throw IoError("bad CSV header, expected `i,t,f1..`");

  struct Row {
    int i, t;
    std::vector<double> f;
  };
  std::vector<Row> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Row r;
    if (!std::getline(ss, cell, ',')) throw IoError("short row at line " + std::to_string(lineno));
    r.i = std::stoi(cell);
    if (!std::getline(ss, cell, ',')) throw IoError("short row at line " + std::to_string(lineno));
    r.t = std::stoi(cell);
    while (std::getline(ss, cell, ',')) r.f.push_back(std::stod(cell));
    if (r.f.empty()) throw IoError("row without features at line " + std::to_string(lineno));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw IoError("CSV has no data rows");

  int m = 0, steps = 0;
  const int d = static_cast<int>(rows.front().f.size());
  for (const Row& r : rows) {
    m = std::max(m, r.i + 1);
    steps = std::max(steps, r.t + 1);
    if (static_cast<int>(r.f.size()) != d) throw IoError("ragged feature columns");
  }
  std::vector<Matrix> vals(m, Matrix::Constant(steps, d, std::nan("")));
  for (const Row& r : rows)
    for (int f = 0; f < d; ++f) vals[r.i](r.t, f) = r.f[f];
  std::vector<Path> paths;
  paths.reserve(m);
  for (Matrix& v : vals) {
    if (!v.allFinite()) throw IoError("CSV is missing (i,t) rows");
    paths.emplace_back(std::move(v));
  }
  return PathBatch(std::move(paths));
}

PathBatch read_batch_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  return read_batch_csv(in);
}

namespace {

constexpr char kBatchMagic[5] = {'C', 'O', 'T', 'K', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated binary stream");
  return v;
}

}  // namespace

void write_batch_binary(const PathBatch& batch, std::ostream& out) {
  out.write(kBatchMagic, sizeof(kBatchMagic));
  put_u64(out, static_cast<std::uint64_t>(batch.size()));
  put_u64(out, static_cast<std::uint64_t>(batch.steps()));
  put_u64(out, static_cast<std::uint64_t>(batch.features()));
  for (int i = 0; i < batch.size(); ++i)
    for (int t = 0; t < batch.steps(); ++t)
      for (int f = 0; f < batch.features(); ++f) {
        const double v = batch[i].values()(t, f);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
}

void write_batch_binary(const PathBatch& batch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_batch_binary(batch, out);
  if (!out) throw IoError("write failed: " + path);
}

PathBatch read_batch_binary(std::istream& in) {
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBatchMagic, sizeof(magic)) != 0)
    throw IoError("bad magic, not a COTK1 stream");
  const auto m = get_u64(in), steps = get_u64(in), d = get_u64(in);
  if (m < 1 || steps < 1 || d < 1 || m > (1u << 24) || steps > (1u << 20) || d > (1u << 20))
    throw IoError("implausible COTK1 dimensions");
  std::vector<Path> paths;
  paths.reserve(m);
  for (std::uint64_t i = 0; i < m; ++i) {
    Matrix v(steps, d);
    for (std::uint64_t t = 0; t < steps; ++t)
      for (std::uint64_t f = 0; f < d; ++f) {
        double x;
        in.read(reinterpret_cast<char*>(&x), sizeof(x));
        if (!in) throw IoError("truncated COTK1 stream");
        v(t, f) = x;
      }
    paths.emplace_back(std::move(v));
  }
  return PathBatch(std::move(paths));
}

PathBatch read_batch_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return read_batch_binary(in);
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cotk
