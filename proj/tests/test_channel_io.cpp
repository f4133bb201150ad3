#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "icsim/channel_io.hpp"
#include "icsim/core.hpp"
#include "icsim/errors.hpp"

using namespace icsim;

namespace {

ChannelSet sample() {
  SystemConfig c;
  c.users = 2;
  c.tx_antennas = {2, 3};
  c.rx_antennas = {4, 1};
  c.streams = {1, 1};
  c.master_seed = 17;
  return generate_channels(c, 3);
}

std::size_t offset_of(const std::vector<std::uint8_t>& bytes) {
  try {
    io::decode_channels(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected FormatError");
  return 0;
}

}  // namespace

TEST_CASE("binary channel round trip is exact") {
  const auto ch = sample();
  const auto bytes = io::encode_channels(ch);
  CHECK(bytes[0] == 'I');
  CHECK(bytes[3] == 'H');
  const auto back = io::decode_channels(bytes);
  REQUIRE(back.users() == 2);
  CHECK(back.seed == ch.seed);
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) CHECK(back.H[k][l] == ch.H[k][l]);
  CHECK(channel_hash(back) == channel_hash(ch));
}

TEST_CASE("file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "icsim_io_test";
  std::filesystem::create_directories(dir);
  const auto ch = sample();
  io::write_channels(dir / "c.icch", ch);
  const auto back = io::read_channels(dir / "c.icch");
  CHECK(channel_hash(back) == channel_hash(ch));

  const std::vector<CMatrix> f = {CMatrix::Identity(3, 2), CMatrix::Constant(2, 1, cplx(0.5, -1))};
  io::write_filters(dir / "f.icbf", f);
  const auto g = io::read_filters(dir / "f.icbf");
  REQUIRE(g.size() == 2);
  CHECK(g[0] == f[0]);
  CHECK(g[1] == f[1]);
  CHECK(filters_hash(g) == filters_hash(f));
  CHECK_THROWS_AS(io::read_channels(dir / "missing.icch"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt channel files report the byte offset") {
  const auto good = io::encode_channels(sample());

  SUBCASE("bad magic") {
    auto b = good;
    b[1] = 'X';
    CHECK(offset_of(b) == 0);
  }
  SUBCASE("bad version") {
    auto b = good;
    b[4] = 9;
    CHECK(offset_of(b) == 4);
  }
  SUBCASE("zero users") {
    auto b = good;
    std::memset(&b[8], 0, 4);
    CHECK(offset_of(b) == 8);
  }
  SUBCASE("inconsistent header shape") {
    // Header entry (k=0, l=1) holds N[0], M[1]; change its row count.
    auto b = good;
    b[12 + 8] = 7;
    CHECK(offset_of(b) == 12 + 8);
  }
  SUBCASE("truncated payload") {
    auto b = good;
    // Drops the seed and half of the last f64, whose read starts 16 bytes from the end.
    b.resize(b.size() - 12);
    CHECK(offset_of(b) == good.size() - 16);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK(offset_of(b) == good.size());
  }
  SUBCASE("non-finite entry") {
    auto b = good;
    const std::size_t at = 12 + 8 * 4;  // first f64 of H[0][0]
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::memcpy(&b[at], &nan, 8);
    CHECK(offset_of(b) == at);
  }
}

TEST_CASE("corrupt filter files") {
  auto b = io::encode_filters({CMatrix::Identity(2, 1)});
  b.pop_back();
  CHECK_THROWS_AS(io::decode_filters(b), FormatError);
  CHECK_THROWS_AS(io::decode_filters(io::encode_channels(sample())), FormatError);
}

TEST_CASE("JSON mirror round trip") {
  const auto ch = sample();
  const auto back = io::channels_from_json(io::channels_to_json(ch));
  CHECK(back.seed == ch.seed);
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) CHECK((back.H[k][l] - ch.H[k][l]).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(io::channels_from_json("{not json"), FormatError);
}
