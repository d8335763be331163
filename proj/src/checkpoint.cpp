#include "quantart/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "quantart/hash.hpp"

namespace quantart {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u16(std::uint16_t v) { u8(std::uint8_t(v)), u8(std::uint8_t(v >> 8)); }
  void u32(std::uint32_t v) { u16(std::uint16_t(v)), u16(std::uint16_t(v >> 16)); }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u32(u);
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : buf_(b), end_(end) {}
  const std::uint8_t* take(std::size_t n) {
    if (n > end_ - pos_) throw IoError("checkpoint is truncated");
    const auto* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint16_t u16() {
    const auto* p = take(2);
    return std::uint16_t(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
  }
  float f32() {
    const std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

template <class T>
std::vector<std::uint8_t> serialize_bundle(ModelBundle<T>& bundle) {
  Writer w;
  w.bytes("QART", 4);
  w.u16(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(bundle.stage));
  nlohmann::json meta = {{"model", to_json(bundle.config)},
                         {"provenance", bundle.provenance},
                         {"stage1_hash", bundle.stage1_hash}};
  const std::string blob = meta.dump();
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob.data(), blob.size());
  const auto params = bundle.all_params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u8(static_cast<std::uint8_t>(p.tensor->ndim()));
    for (auto d : p.tensor->shape()) w.u32(static_cast<std::uint32_t>(d));
    for (T v : p.tensor->data()) w.f32(static_cast<float>(v));
  }
  w.u32(crc32(w.buf));
  return std::move(w.buf);
}

template <class T>
ModelBundle<T> deserialize_bundle(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 2 + 1 + 4 + 4 + 4) throw IoError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), "QART", 4) != 0) throw IoError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 4;
  {
    Reader tail(bytes, bytes.size());
    tail.take(body);
    if (tail.u32() != crc32(std::span(bytes.data(), body))) throw IoError("checkpoint CRC mismatch");
  }
  Reader r(bytes, body);
  r.take(4);
  const auto version = r.u16();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const int stage = r.u8();
  const auto blob_len = r.u32();
  const auto* blob = r.take(blob_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(blob, blob + blob_len);
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(meta.at("model"));
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint config: ") + e.what());
  }
  ModelBundle<T> bundle(cfg, 0);
  bundle.stage = stage;
  bundle.stage1_hash = meta.value("stage1_hash", std::string());
  bundle.provenance = meta.value("provenance", nlohmann::json::object());

  std::map<std::string, Tensor<T>*> expected;
  for (auto& p : bundle.all_params()) expected[p.name] = p.tensor;
  const auto count = r.u32();
  if (count != expected.size())
    throw IoError("checkpoint holds " + std::to_string(count) + " parameters, config needs " +
                  std::to_string(expected.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u16();
    const auto* name_p = r.take(name_len);
    const std::string name(reinterpret_cast<const char*>(name_p), name_len);
    auto it = expected.find(name);
    if (it == expected.end()) throw IoError("checkpoint parameter '" + name + "' is not part of the model");
    const auto ndim = r.u8();
    Shape shape(ndim);
    for (auto& d : shape) d = r.u32();
    if (shape != it->second->shape())
      throw IoError("checkpoint parameter '" + name + "' has shape " + to_string(shape) + ", model expects " +
                    to_string(it->second->shape()));
    std::vector<T> values(numel(shape));
    for (auto& v : values) v = static_cast<T>(r.f32());
    it->second->assign(std::move(values));
    expected.erase(it);
  }
  if (r.pos() != body) throw IoError("checkpoint has trailing bytes");
  return bundle;
}

template <class T>
void save_checkpoint(ModelBundle<T>& bundle, const fs::path& path) {
  write_file(path, serialize_bundle(bundle));
}

template <class T>
ModelBundle<T> load_checkpoint(const fs::path& path) {
  try {
    return deserialize_bundle<T>(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

#define QUANTART_INSTANTIATE_CKPT(T)                                                 \
  template std::vector<std::uint8_t> serialize_bundle(ModelBundle<T>&);              \
  template ModelBundle<T> deserialize_bundle(const std::vector<std::uint8_t>&);      \
  template void save_checkpoint(ModelBundle<T>&, const fs::path&);                   \
  template ModelBundle<T> load_checkpoint(const fs::path&);

QUANTART_INSTANTIATE_CKPT(float)
QUANTART_INSTANTIATE_CKPT(double)

}  // namespace quantart
