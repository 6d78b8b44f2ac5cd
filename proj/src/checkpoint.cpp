#include "geotext/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "geotext/binio.hpp"
#include "geotext/error.hpp"
#include "geotext/rng.hpp"

namespace geotext {

namespace {

constexpr std::string_view kMagic{"GTXCKPT\0", 8};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;

void write_tensor(binio::Writer& w, const std::string& name, const Tensor& t) {
  w.str32(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  for (double v : t.data()) w.f64(v);
}

std::pair<std::string, Tensor> read_tensor(binio::Reader& r) {
  std::string name = r.str32();
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw FormatError("checkpoint: tensor " + name + " has implausible rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t n = 1;
  for (auto& d : shape) {
    d = r.u64();
    if (d == 0 || d > (1ULL << 32)) throw FormatError("checkpoint: tensor " + name + " has invalid dimension");
    n *= d;
    if (n * 8 > r.remaining()) throw FormatError("checkpoint: tensor " + name + " data exceeds payload (truncated)");
  }
  std::vector<double> data(n);
  for (auto& v : data) v = r.f64();
  try {
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
  } catch (const ContractError& e) {
    throw FormatError("checkpoint: tensor " + name + ": " + e.what());
  }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate(ckpt.config);
  binio::Writer payload;
  const std::string cfg = ckpt.config.to_text();
  payload.u64(cfg.size());
  payload.bytes(cfg);
  payload.u8(ckpt.optimizer ? 1 : 0);
  const auto named = ckpt.params.named();
  std::uint32_t count = static_cast<std::uint32_t>(named.size());
  if (ckpt.optimizer) {
    require(ckpt.optimizer->m.size() == named.size() && ckpt.optimizer->v.size() == named.size(),
            "checkpoint: optimizer state does not match the parameter list");
    payload.u64(ckpt.optimizer->steps_taken);
    count *= 3;
  }
  payload.u32(count);
  for (const auto& [name, t] : named) write_tensor(payload, name, *t);
  if (ckpt.optimizer) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      write_tensor(payload, "optim.m." + named[i].first, ckpt.optimizer->m[i]);
      write_tensor(payload, "optim.v." + named[i].first, ckpt.optimizer->v[i]);
    }
  }

  binio::Writer out;
  out.bytes(kMagic);
  out.u32(kCheckpointVersion);
  out.u64(payload.size());
  out.bytes(payload.buffer());
  out.u64(hash_string(out.buffer()));
  return std::move(out.buffer());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kHeaderSize) throw FormatError("checkpoint: file too short for header (truncated)");
  if (bytes.substr(0, 8) != kMagic) throw FormatError("checkpoint: bad magic bytes");
  binio::Reader header(bytes.substr(8, kHeaderSize - 8), "checkpoint header");
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t payload_len = header.u64();
  const std::uint64_t expected = kHeaderSize + payload_len + 8;
  if (payload_len > bytes.size() || bytes.size() < expected) {
    throw FormatError("checkpoint: file is " + std::to_string(bytes.size()) + " bytes, header declares " +
                      std::to_string(expected) + " (truncated)");
  }
  if (bytes.size() > expected) throw FormatError("checkpoint: trailing bytes after checksum");
  binio::Reader tail(bytes.substr(expected - 8), "checkpoint checksum");
  if (tail.u64() != hash_string(bytes.substr(0, expected - 8))) throw IntegrityError("checkpoint: checksum mismatch");

  binio::Reader r(bytes.substr(kHeaderSize, payload_len), "checkpoint payload");
  Checkpoint ck;
  const std::uint64_t cfg_len = r.u64();
  if (cfg_len > r.remaining()) throw FormatError("checkpoint: config block exceeds payload");
  ck.config = ModelConfig::from_text(r.bytes(cfg_len));
  const bool has_optim = r.u8() != 0;
  std::uint64_t steps = 0;
  if (has_optim) steps = r.u64();
  const std::uint32_t count = r.u32();

  ck.params.layers.resize(ck.config.layers);
  auto named = ck.params.named();
  const std::size_t expected_count = named.size() * (has_optim ? 3 : 1);
  if (count != expected_count) {
    throw FormatError("checkpoint: tensor table has " + std::to_string(count) + " entries, config implies " +
                      std::to_string(expected_count));
  }
  for (auto& [name, slot] : named) {
    auto [got, t] = read_tensor(r);
    if (got != name) throw FormatError("checkpoint: expected tensor " + name + ", found " + got);
    *slot = std::move(t);
  }
  if (has_optim) {
    AdamState st;
    st.steps_taken = steps;
    for (auto& [name, slot] : named) {
      auto [mn, m] = read_tensor(r);
      auto [vn, v] = read_tensor(r);
      if (mn != "optim.m." + name || vn != "optim.v." + name) throw FormatError("checkpoint: optimizer tensor order mismatch at " + name);
      if (m.shape() != slot->shape() || v.shape() != slot->shape()) throw FormatError("checkpoint: optimizer tensor shape mismatch at " + name);
      st.m.push_back(std::move(m));
      st.v.push_back(std::move(v));
    }
    ck.optimizer = std::move(st);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: unread bytes in payload");
  try {
    ck.params.validate(ck.config);
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  // requires_grad is not stored; it follows from the modality switches.
  for (auto* t : ck.params.tensors()) t->set_requires_grad(true);
  if (!ck.config.use_layout) {
    ck.params.table_x.set_requires_grad(false);
    ck.params.table_y.set_requires_grad(false);
  }
  return ck;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace geotext
