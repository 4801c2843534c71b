#include "extax/numerics/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "extax/errors.hpp"
#include "extax/io.hpp"

namespace extax {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw TruncatedRecord(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_parameters(const ParameterSet& params) {
  std::string out = "EXTX";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) put<std::uint64_t>(out, d);
    for (double x : e.value.data()) put<double>(out, x);
  }
  return out;
}

ParameterSet parse_parameters(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "EXTX") throw BadMagic("not an EXTX checkpoint");
  Reader r(bytes.substr(4));
  auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw BadMagic("unsupported checkpoint version " + std::to_string(version));
  }
  auto count = r.get<std::uint32_t>("entry count");
  ParameterSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = r.get<std::uint32_t>("name length");
    std::string name(r.bytes(name_len, "name"));
    auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw TruncatedRecord("implausible rank in checkpoint entry " + name);
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>("dims"));
      n *= d;
    }
    auto raw = r.bytes(n * sizeof(double), "data");
    std::vector<double> data(n);
    if (n > 0) std::memcpy(data.data(), raw.data(), raw.size());
    out.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw TruncatedRecord("trailing bytes after checkpoint entries");
  return out;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& params) {
  write_file_atomic(path, serialize_parameters(params));
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  return parse_parameters(read_file(path));
}

}  // namespace extax
