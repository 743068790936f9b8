#include "iolab/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string_view>

namespace iolab {
namespace {

constexpr std::string_view kMagic = "IOLAB";

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u32(std::uint32_t v) { bytes(v, 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  void bytes(std::uint64_t v, int n) {
    std::array<char, 8> buf{};
    for (int i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf.data(), n);
  }
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string name) : in_(in), name_(std::move(name)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) fail();
    return s;
  }

 private:
  std::uint64_t bytes(int n) {
    std::array<unsigned char, 8> buf{};
    in_.read(reinterpret_cast<char*>(buf.data()), n);
    if (!in_) fail();
    std::uint64_t v = 0;
    for (int i = n; i-- > 0;) v = (v << 8) | buf[static_cast<std::size_t>(i)];
    return v;
  }
  [[noreturn]] void fail() { throw CheckpointError("truncated checkpoint " + name_); }
  std::ifstream& in_;
  std::string name_;
};

}  // namespace

void check_layout(const ModelConfig& config, const Parameters<float>& params) {
  const auto layout = ParameterLayout::build(config);
  if (params.names != layout.names || params.arrays.size() != layout.shapes.size()) {
    throw CheckpointError("parameter names do not match the model configuration");
  }
  for (std::size_t i = 0; i < params.arrays.size(); ++i) {
    const auto [rows, cols] = layout.shapes[i];
    if (params.arrays[i].rows() != rows || params.arrays[i].cols() != cols) {
      throw CheckpointError("shape mismatch for " + params.names[i]);
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters<float>& params) {
  check_layout(config, params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  Writer w(out);
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  for (int v : {config.d_model, config.n_layers, config.n_heads, config.d_ffn, config.vocab_size, config.max_len}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(config.dropout);
  w.u64(config.seed);
  w.u32(static_cast<std::uint32_t>(params.arrays.size()));
  for (std::size_t i = 0; i < params.arrays.size(); ++i) {
    const auto& name = params.names[i];
    const auto& a = params.arrays[i];
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(a.rows()));
    w.u32(static_cast<std::uint32_t>(a.cols()));
    for (Eigen::Index k = 0; k < a.size(); ++k) w.f32(a.data()[k]);
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  Reader r(in, path.string());
  if (r.raw(kMagic.size()) != kMagic) throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  auto& c = ck.config;
  c.d_model = static_cast<int>(r.u32());
  c.n_layers = static_cast<int>(r.u32());
  c.n_heads = static_cast<int>(r.u32());
  c.d_ffn = static_cast<int>(r.u32());
  c.vocab_size = static_cast<int>(r.u32());
  c.max_len = static_cast<int>(r.u32());
  c.dropout = r.f64();
  c.seed = r.u64();
  c.validate();

  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ck.params.names.push_back(r.raw(r.u32()));
    const auto rows = r.u32();
    const auto cols = r.u32();
    Matrix<float> a(rows, cols);
    for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = r.f32();
    ck.params.arrays.push_back(std::move(a));
  }
  check_layout(c, ck.params);
  return ck;
}

}  // namespace iolab
