#include "icsim/channel_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "icsim/errors.hpp"

namespace icsim::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary containers are written in native little-endian order");

constexpr char kChannelMagic[4] = {'I', 'C', 'C', 'H'};
constexpr char kFilterMagic[4] = {'I', 'C', 'B', 'F'};
constexpr std::uint32_t kFilterFormatVersion = 1;
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxDim = 4096;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void matrix(const CMatrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        f64(m(r, c).real());
        f64(m(r, c).imag());
      }
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  void raw(void* p, std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw FormatError(std::string("truncated input while reading ") + what, pos);
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, sizeof v, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    raw(&v, sizeof v, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    raw(&v, sizeof v, what);
    return v;
  }
  CMatrix matrix(std::uint32_t rows, std::uint32_t cols) {
    CMatrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        const std::size_t at = pos;
        const double re = f64("matrix entry");
        const double im = f64("matrix entry");
        if (!std::isfinite(re) || !std::isfinite(im))
          throw FormatError("non-finite matrix entry", at);
        m(r, c) = {re, im};
      }
    return m;
  }
  void magic(const char (&expected)[4]) {
    char m[4];
    raw(m, 4, "magic");
    if (std::memcmp(m, expected, 4) != 0) throw FormatError("bad magic", 0);
  }
  std::uint32_t dim(const char* what) {
    const std::size_t at = pos;
    const auto v = u32(what);
    if (v > kMaxDim) throw FormatError(std::string("implausible ") + what, at);
    return v;
  }

  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_channels(const ChannelSet& ch) {
  Writer w;
  w.raw(kChannelMagic, 4);
  w.u32(kChannelFormatVersion);
  const int K = ch.users();
  w.u32(static_cast<std::uint32_t>(K));
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) {
      w.u32(static_cast<std::uint32_t>(ch.H[k][l].rows()));
      w.u32(static_cast<std::uint32_t>(ch.H[k][l].cols()));
    }
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) w.matrix(ch.H[k][l]);
  w.u64(ch.seed);
  return std::move(w.out);
}

ChannelSet decode_channels(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic(kChannelMagic);
  const std::size_t version_at = r.pos;
  if (r.u32("version") != kChannelFormatVersion)
    throw FormatError("unsupported channel format version", version_at);
  const std::size_t k_at = r.pos;
  const auto K = r.dim("user count");
  if (K == 0) throw FormatError("user count is zero", k_at);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(static_cast<std::size_t>(K) * K);
  for (auto& [n, m] : dims) {
    n = r.dim("row count");
    m = r.dim("column count");
  }
  // Shapes must be N[k] x M[l] consistently across the grid.
  for (std::uint32_t k = 0; k < K; ++k)
    for (std::uint32_t l = 0; l < K; ++l) {
      const auto& d = dims[k * K + l];
      if (d.first != dims[k * K + k].first || d.second != dims[l * K + l].second)
        throw FormatError("inconsistent matrix shapes in header", 12 + 8 * (k * K + l));
    }
  ChannelSet ch;
  ch.H.resize(K);
  for (std::uint32_t k = 0; k < K; ++k) {
    ch.H[k].resize(K);
    for (std::uint32_t l = 0; l < K; ++l)
      ch.H[k][l] = r.matrix(dims[k * K + l].first, dims[k * K + l].second);
  }
  ch.seed = r.u64("seed");
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after seed", r.pos);
  return ch;
}

std::vector<std::uint8_t> encode_filters(const std::vector<CMatrix>& filters) {
  Writer w;
  w.raw(kFilterMagic, 4);
  w.u32(kFilterFormatVersion);
  w.u32(static_cast<std::uint32_t>(filters.size()));
  for (const auto& f : filters) {
    w.u32(static_cast<std::uint32_t>(f.rows()));
    w.u32(static_cast<std::uint32_t>(f.cols()));
  }
  for (const auto& f : filters) w.matrix(f);
  return std::move(w.out);
}

std::vector<CMatrix> decode_filters(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic(kFilterMagic);
  const std::size_t version_at = r.pos;
  if (r.u32("version") != kFilterFormatVersion)
    throw FormatError("unsupported filter format version", version_at);
  const auto K = r.dim("user count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(K);
  for (auto& [rows, cols] : dims) {
    rows = r.dim("row count");
    cols = r.dim("column count");
  }
  std::vector<CMatrix> filters;
  filters.reserve(K);
  for (const auto& [rows, cols] : dims) filters.push_back(r.matrix(rows, cols));
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after filters", r.pos);
  return filters;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void write_channels(const std::filesystem::path& path, const ChannelSet& ch) {
  write_file(path, encode_channels(ch));
}

ChannelSet read_channels(const std::filesystem::path& path) {
  try {
    return decode_channels(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_filters(const std::filesystem::path& path, const std::vector<CMatrix>& filters) {
  write_file(path, encode_filters(filters));
}

std::vector<CMatrix> read_filters(const std::filesystem::path& path) {
  try {
    return decode_filters(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

std::string channels_to_json(const ChannelSet& ch) {
  using nlohmann::json;
  json j;
  j["format"] = "ICCH-json";
  j["version"] = kChannelFormatVersion;
  j["seed"] = ch.seed;
  j["K"] = ch.users();
  json mats = json::array();
  for (int k = 0; k < ch.users(); ++k)
    for (int l = 0; l < ch.users(); ++l) {
      const auto& m = ch.H[k][l];
      json entry;
      entry["rx"] = k + 1;
      entry["tx"] = l + 1;
      entry["rows"] = m.rows();
      entry["cols"] = m.cols();
      json data = json::array();
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back({m(r, c).real(), m(r, c).imag()});
      entry["data"] = std::move(data);
      mats.push_back(std::move(entry));
    }
  j["H"] = std::move(mats);
  return j.dump(1);
}

ChannelSet channels_from_json(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid channel JSON: ") + e.what(), e.byte);
  }
  try {
    ChannelSet ch;
    ch.seed = j.at("seed").get<std::uint64_t>();
    const int K = j.at("K").get<int>();
    if (K < 1) throw FormatError("channel JSON: K < 1", 0);
    ch.H.assign(K, std::vector<CMatrix>(K));
    for (const auto& e : j.at("H")) {
      const int k = e.at("rx").get<int>() - 1;
      const int l = e.at("tx").get<int>() - 1;
      if (k < 0 || k >= K || l < 0 || l >= K) throw FormatError("channel JSON: bad index", 0);
      const auto rows = e.at("rows").get<Eigen::Index>();
      const auto cols = e.at("cols").get<Eigen::Index>();
      const auto& data = e.at("data");
      if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw FormatError("channel JSON: entry count mismatch", 0);
      CMatrix m(rows, cols);
      for (Eigen::Index i = 0; i < rows * cols; ++i)
        m(i / cols, i % cols) = {data[i].at(0).get<double>(), data[i].at(1).get<double>()};
      ch.H[k][l] = std::move(m);
    }
    return ch;
  } catch (const json::exception& e) {
    throw FormatError(std::string("channel JSON: ") + e.what(), 0);
  }
}

}  // namespace icsim::io
