#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "geotext/checkpoint.hpp"
#include "geotext/error.hpp"
#include "model_fixtures.hpp"

using namespace geotext;
using namespace geotext::testing;
namespace fs = std::filesystem;

namespace {

Checkpoint sample(bool with_optimizer) {
  auto c = tiny_config(1, 8);
  c.use_image = true;
  Checkpoint k{c, random_params(c, 31), std::nullopt};
  if (with_optimizer) {
    auto ts = k.params.tensors();
    AdamState st = AdamState::zeros_like(ts);
    st.steps_taken = 7;
    st.m[0].data()[0] = 0.25;
    st.v[3].data()[1] = 1e-9;
    k.optimizer = st;
  }
  return k;
}

void put_u32(std::string& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_CASE("round trip") {
  for (bool opt : {false, true}) {
    const Checkpoint k = sample(opt);
    const std::string bytes = serialize_checkpoint(k);
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back == k);
    CHECK(serialize_checkpoint(back) == bytes);
  }
}

TEST_CASE("frozen flags follow the layout switch after loading") {
  auto c = tiny_config(1, 8);
  c.use_layout = false;
  const Checkpoint k{c, init_params(c, 2), std::nullopt};
  const Checkpoint back = deserialize_checkpoint(serialize_checkpoint(k));
  CHECK(!back.params.table_x.requires_grad());
  CHECK(back.params.word_table.requires_grad());
}

TEST_CASE("golden checkpoint bytes") {
  auto c = tiny_config(1, 8);
  const Checkpoint k{c, init_params(c, 2024), std::nullopt};
  std::ifstream in(GEOTEXT_TEST_DATA "/golden_checkpoint.bin", std::ios::binary);
  REQUIRE(in.good());
  const std::string golden((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(serialize_checkpoint(k) == golden);
  // Header read by hand: magic, version, payload length.
  REQUIRE(golden.size() > 28);
  CHECK(golden.substr(0, 8) == std::string("GTXCKPT\0", 8));
  auto le = [&](std::size_t at, int n) {
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(golden[at + i]);
    return v;
  };
  CHECK(le(8, 4) == kCheckpointVersion);
  CHECK(le(12, 8) == golden.size() - 8 - 4 - 8 - 8);
  CHECK(deserialize_checkpoint(golden) == k);
}

TEST_CASE("distinct error kinds") {
  const std::string good = serialize_checkpoint(sample(true));

  std::string flipped = good;
  flipped[good.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), IntegrityError);

  std::string version = good;
  put_u32(version, 8, 999);
  CHECK_THROWS_AS(deserialize_checkpoint(version), VersionError);

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), FormatError);

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{20}, good.size() / 3,
                          good.size() - 1}) {
    CHECK_THROWS_AS(deserialize_checkpoint(std::string_view(good).substr(0, cut)), FormatError);
  }
}

TEST_CASE("atomic save and load") {
  const fs::path dir = fs::temp_directory_path() / "geotext_ckpt_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Checkpoint k = sample(true);
  save_checkpoint(k, dir / "a.ckpt");
  CHECK(load_checkpoint(dir / "a.ckpt") == k);
  save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file();
  CHECK(files == 2);  // no temp leftovers
  CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
  fs::remove_all(dir);
}
