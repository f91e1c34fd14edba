#include "segsr/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "segsr/errors.hpp"

namespace segsr {

namespace {

void put_u32(std::string& b, uint32_t v) {
  char c[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  b.append(c, 4);
}

uint32_t get_u32(const std::string& b, size_t& pos) {
  require(pos + 4 <= b.size(), "checkpoint truncated");
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + pos);
  pos += 4;
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

static_assert(sizeof(float) == 4, "f32 payload assumes 4-byte float");

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& nt) {
  std::string body;
  body += "SGSR";
  put_u32(body, 1);  // format version
  put_u32(body, uint32_t(nt.tag.size()));
  body += nt.tag;
  for (const auto& [name, t] : nt.tensors) {
    put_u32(body, uint32_t(name.size()));
    body += name;
    body.push_back(char(0));  // dtype f32
    put_u32(body, uint32_t(t.shape.size()));
    for (int d : t.shape) put_u32(body, uint32_t(d));
    // payload: little-endian f32 (bit-copy; this project targets LE hosts)
    const size_t bytes = t.v.size() * 4;
    const size_t off = body.size();
    body.resize(off + bytes);
    std::memcpy(body.data() + off, t.v.data(), bytes);
  }
  const uint32_t crc =
      uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(body.data()), uInt(body.size())));
  put_u32(body, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) fail_runtime("cannot write checkpoint: " + path);
  out.write(body.data(), std::streamsize(body.size()));
  if (!out) fail_runtime("checkpoint write failed: " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("missing checkpoint: " + path);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(body.size() >= 16, "checkpoint too small: " + path);

  size_t tail = body.size() - 4;
  const uint32_t stored = [&] {
    size_t p = tail;
    return get_u32(body, p);
  }();
  const uint32_t computed =
      uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(body.data()), uInt(tail)));
  if (stored != computed) fail_validation("checkpoint CRC mismatch: " + path);

  size_t pos = 0;
  require(body.compare(0, 4, "SGSR") == 0, "bad checkpoint magic: " + path);
  pos = 4;
  const uint32_t version = get_u32(body, pos);
  require(version == 1, "unsupported checkpoint version " + std::to_string(version));
  const uint32_t tag_len = get_u32(body, pos);
  require(pos + tag_len <= tail, "checkpoint truncated");
  NamedTensors nt;
  nt.tag = body.substr(pos, tag_len);
  pos += tag_len;

  while (pos < tail) {
    const uint32_t name_len = get_u32(body, pos);
    require(pos + name_len <= tail, "checkpoint truncated");
    std::string name = body.substr(pos, name_len);
    pos += name_len;
    require(pos < tail, "checkpoint truncated");
    const uint8_t dtype = uint8_t(body[pos++]);
    require(dtype == 0, "unsupported tensor dtype in " + path);
    const uint32_t ndim = get_u32(body, pos);
    require(ndim <= 8, "implausible tensor rank");
    std::vector<int> shape;
    int64_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      const uint32_t d = get_u32(body, pos);
      shape.push_back(int(d));
      numel *= d;
    }
    const size_t bytes = size_t(numel) * 4;
    require(pos + bytes <= tail, "tensor payload exceeds file size in " + path);
    TensorF t(shape);
    std::memcpy(t.v.data(), body.data() + pos, bytes);
    pos += bytes;
    nt.tensors.emplace_back(std::move(name), std::move(t));
  }
  require(pos == tail, "trailing bytes in checkpoint " + path);
  return nt;
}

void save_params(const std::string& path, const ParamStore& ps) {
  NamedTensors nt;
  nt.tag = role_name(ps.role);
  nt.tensors = ps.params;
  save_checkpoint(path, nt);
}

ParamStore load_params(const std::string& path, Role expect) {
  NamedTensors nt = load_checkpoint(path);
  require(nt.tag == role_name(expect), path + ": role tag '" + nt.tag + "' does not match " +
                                           role_name(expect));
  ParamStore ps;
  ps.role = expect;
  for (auto& [name, t] : nt.tensors) ps.add(name, std::move(t));
  return ps;
}

}  // namespace segsr
