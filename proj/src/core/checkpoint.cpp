#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "csv.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace lab {

namespace {

void put_u16(std::string& out, std::uint16_t v) { out.append(reinterpret_cast<char*>(&v), 2); }
void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); }

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n, const std::string& what) {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated while reading " + what);
  }
  std::uint16_t u16() {
    need(2, "u16");
    std::uint16_t v;
    std::memcpy(&v, buf.data() + pos, 2);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::string bytes(size_t n, const std::string& what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void append_entry(std::string& out, const std::string& name, const Shape& shape,
                  const std::vector<real>& data) {
  if (name.size() > 0xffff) throw IoError("checkpoint entry name too long: " + name);
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  out.push_back(sizeof(real) == 8 ? 0 : 1);
  out.push_back(static_cast<char>(shape.size()));
  for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(real));
}

struct Entry {
  Shape shape;
  std::vector<real> data;
};

std::map<std::string, Entry> read_entries(const std::string& path, const char tag[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(buf);
  if (r.bytes(4, "magic") != std::string(kCheckpointMagic, 4))
    throw DataError("not a checkpoint file (bad magic): " + path);
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  std::string file_tag = r.bytes(4, "tag");
  if (tag && file_tag != std::string(tag, 4))
    throw DataError("checkpoint section tag '" + file_tag + "' does not match expected '" +
                    std::string(tag, 4) + "': " + path);
  std::uint32_t count = r.u32();
  std::map<std::string, Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u16(), "name");
    std::uint8_t dtype = r.u8();
    if (dtype != (sizeof(real) == 8 ? 0 : 1))
      throw DataError("checkpoint dtype does not match this build: " + path);
    std::uint8_t rank = r.u8();
    Entry e;
    std::int64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      e.shape.push_back(static_cast<int>(r.u32()));
      n *= e.shape.back();
    }
    std::string payload = r.bytes(static_cast<size_t>(n) * sizeof(real), "payload of " + name);
    e.data.resize(static_cast<size_t>(n));
    std::memcpy(e.data.data(), payload.data(), payload.size());
    entries.emplace(std::move(name), std::move(e));
  }
  return entries;
}

}  // namespace

void save_checkpoint(const std::string& path, const char tag[4], const NamedState& state) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  out.append(tag, 4);
  put_u32(out, static_cast<std::uint32_t>(state.params.size() + state.buffers.size()));
  for (const auto& p : state.params) {
    if (p.name().empty()) throw Error("cannot checkpoint an unnamed parameter");
    append_entry(out, p.name(), p.shape(), p.value());
  }
  for (const auto& [name, vec] : state.buffers)
    append_entry(out, name, {static_cast<int>(vec->size())}, *vec);
  write_text_file(path, out);
}

void load_checkpoint(const std::string& path, const char tag[4], NamedState& state) {
  auto entries = read_entries(path, tag);
  auto take = [&](const std::string& name) -> Entry& {
    auto it = entries.find(name);
    if (it == entries.end()) throw DataError("checkpoint missing entry '" + name + "': " + path);
    return it->second;
  };
  for (auto& p : state.params) {
    Entry& e = take(p.name());
    if (e.shape != p.shape())
      throw DataError("checkpoint entry '" + p.name() + "' has shape " + shape_str(e.shape) +
                      ", expected " + shape_str(p.shape()));
    p.value() = e.data;
  }
  for (auto& [name, vec] : state.buffers) {
    Entry& e = take(name);
    if (e.data.size() != vec->size())
      throw DataError("checkpoint buffer '" + name + "' has length " +
                      std::to_string(e.data.size()) + ", expected " + std::to_string(vec->size()));
    *vec = e.data;
  }
}

std::string checkpoint_tag(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char head[12];
  in.read(head, 12);
  if (!in || std::memcmp(head, kCheckpointMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  return std::string(head + 8, 4);
}

}  // namespace lab
