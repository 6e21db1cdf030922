#include "ckge/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ckge/errors.hpp"

namespace ckge {

namespace {

constexpr char kMagic[8] = {'C', 'K', 'G', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError(file_ + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    bytes(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    bytes(reinterpret_cast<char*>(&v), 8);
    return v;
  }
  std::string str() {
    const auto n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  const std::string& file() const { return file_; }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace

void Checkpoint::set(std::string key, std::string value) {
  for (auto& [k, v] : attributes_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  attributes_.emplace_back(std::move(key), std::move(value));
}

bool Checkpoint::has(const std::string& key) const {
  for (const auto& [k, v] : attributes_)
    if (k == key) return true;
  return false;
}

const std::string& Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : attributes_)
    if (k == key) return v;
  throw DataError("checkpoint attribute '" + key + "' missing");
}

std::size_t Checkpoint::get_size(const std::string& key) const {
  const auto& v = get(key);
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw DataError("checkpoint attribute '" + key + "' is not an integer: " + v);
  }
}

void Checkpoint::add_tensor(std::string name, Matrix value) {
  tensors_.emplace_back(std::move(name), std::move(value));
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors_)
    if (n == name) return true;
  return false;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors_)
    if (n == name) return m;
  throw DataError("checkpoint tensor '" + name + "' missing");
}

void Checkpoint::write(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  // Write to a sibling temp file and rename, so an interrupted run never
  // leaves a half-written checkpoint behind.
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(attributes_.size()));
    for (const auto& [k, v] : attributes_) {
      put_str(out, k);
      put_str(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [name, m] : tensors_) {
      put_str(out, name);
      put_u64(out, static_cast<std::uint64_t>(m.rows()));
      put_u64(out, static_cast<std::uint64_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    }
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

Checkpoint Checkpoint::read(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw DataError("missing checkpoint " + file.string());
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  Reader r(in, file.string());
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError(file.string() + ": bad magic");
  const auto version = r.u32();
  if (version != kVersion) {
    throw DataError(file.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto n_attr = r.u32();
  for (std::uint32_t i = 0; i < n_attr; ++i) {
    auto k = r.str();
    auto v = r.str();
    ckpt.attributes_.emplace_back(std::move(k), std::move(v));
  }
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str();
    const auto rows = r.u64();
    const auto cols = r.u64();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.bytes(reinterpret_cast<char*>(m.data()), sizeof(double) * rows * cols);
    ckpt.tensors_.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

}  // namespace ckge
