#include "truncnet/arch/weights.hpp"

#include <cstring>

#include "truncnet/core/io.hpp"

namespace truncnet {
namespace {

constexpr char kMagic[4] = {'T', 'N', 'W', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::string& buf, V v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename V>
  V get() {
    V v;
    take(&v, sizeof(V));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError(source_ + ": truncated weight archive");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_weights(const std::filesystem::path& path, const WeightMap& weights) {
  std::string buf(kMagic, sizeof(kMagic));
  put(buf, kVersion);
  put(buf, static_cast<std::uint64_t>(weights.size()));
  for (const auto& [name, t] : weights) {
    put(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put(buf, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put(buf, static_cast<std::int64_t>(d));
    buf.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(float));
  }
  write_file_atomic(path, buf);
}

WeightMap load_weights(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes, path.string());
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": not a weight archive");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw IoError(path.string() + ": unsupported archive version " + std::to_string(v));
  }
  const auto count = r.get<std::uint64_t>();
  WeightMap out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.get<std::uint32_t>(), '\0');
    r.take(name.data(), name.size());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw IoError(path.string() + ": corrupt entry '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::int64_t>();
    TensorF t(shape);
    r.take(t.data(), t.numel() * sizeof(float));
    out.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw IoError(path.string() + ": trailing bytes in weight archive");
  return out;
}

}  // namespace truncnet
