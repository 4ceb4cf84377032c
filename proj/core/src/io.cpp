#include "sct/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>
#include <vector>

#include "sct/errors.hpp"

namespace sct::io {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }
  void magic(const char* m) { out_.write(m, 4); }
  template <typename T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void text(const std::string& s) {
    put<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  void magic(const char* m) {
    need(4);
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0) {
      fail(std::string("bad magic, expected ") + m);
    }
    pos_ += 4;
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::string text() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  void version(std::uint32_t supported) {
    const auto v = get<std::uint32_t>();
    if (v > supported || v == 0) {
      std::ostringstream os;
      os << "format version " << v << " is not supported (reader knows up to " << supported << ")";
      fail(os.str());
    }
  }
  /// Guard against absurd counts before allocating.
  void expect_bytes(std::uint64_t count, std::uint64_t width) {
    if (width != 0 && count > (buf_.size() - pos_) / width) fail("truncated payload");
  }
  void end() {
    if (pos_ != buf_.size()) fail("trailing bytes after payload");
  }
  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream os;
    os << "'" << path_ << "' at offset " << pos_ << ": " << what;
    throw IoError(os.str());
  }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) fail("unexpected end of file");
  }
  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

void put_locations(Writer& w, const geo::LocationSet& locs) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(locs.metric()));
  w.put<std::uint64_t>(locs.size());
  for (const auto& c : locs.coords()) {
    w.put(c.x);
    w.put(c.y);
  }
}

geo::LocationSet get_locations(Reader& r) {
  const auto metric = r.get<std::uint8_t>();
  if (metric > 1) r.fail("unknown metric tag");
  const auto L = r.get<std::uint64_t>();
  r.expect_bytes(L, 16);
  std::vector<geo::Coord> coords(static_cast<std::size_t>(L));
  for (auto& c : coords) {
    c.x = r.get<double>();
    c.y = r.get<double>();
  }
  try {
    return geo::LocationSet(std::move(coords), static_cast<geo::Metric>(metric));
  } catch (const DomainError& e) {
    r.fail(std::string("invalid location table: ") + e.what());
  }
}

void put_matrix(Writer& w, const Eigen::MatrixXd& A) {
  w.put<std::uint64_t>(static_cast<std::uint64_t>(A.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(A.cols()));
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) w.put(A(i, j));
  }
}

Eigen::MatrixXd get_matrix(Reader& r) {
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  if (cols != 0) r.expect_bytes(rows, 8 * cols);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = r.get<double>();
  }
  return A;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_ensemble(const std::string& path, const Ensemble& e) {
  e.validate();
  Writer w(path);
  w.magic("SCTE");
  w.put<std::uint32_t>(kEnsembleVersion);
  w.put<std::uint64_t>(e.locations());
  w.put<std::uint64_t>(e.replicates());
  w.put<std::uint8_t>(static_cast<std::uint8_t>(e.locs.metric()));
  for (const auto& c : e.locs.coords()) {
    w.put(c.x);
    w.put(c.y);
  }
  for (Eigen::Index j = 0; j < e.Y.rows(); ++j) {
    for (Eigen::Index l = 0; l < e.Y.cols(); ++l) w.put(e.Y(j, l));
  }
  w.finish();
}

Ensemble read_ensemble(const std::string& path) {
  Reader r(path);
  r.magic("SCTE");
  r.version(kEnsembleVersion);
  const auto L = r.get<std::uint64_t>();
  const auto N = r.get<std::uint64_t>();
  const auto metric = r.get<std::uint8_t>();
  if (metric > 1) r.fail("unknown metric tag");
  r.expect_bytes(L, 16);
  std::vector<geo::Coord> coords(static_cast<std::size_t>(L));
  for (auto& c : coords) {
    c.x = r.get<double>();
    c.y = r.get<double>();
  }
  if (L != 0) r.expect_bytes(N, 8 * L);
  Ensemble e;
  e.Y.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(L));
  for (Eigen::Index j = 0; j < e.Y.rows(); ++j) {
    for (Eigen::Index l = 0; l < e.Y.cols(); ++l) e.Y(j, l) = r.get<double>();
  }
  r.end();
  try {
    e.locs = geo::LocationSet(std::move(coords), static_cast<geo::Metric>(metric));
    e.validate();
  } catch (const DomainError& err) {
    throw DomainError("'" + path + "': " + err.what());
  }
  return e;
}

void write_model(const std::string& path, const FittedModel& m) {
  Writer w(path);
  w.magic("SCTM");
  w.put<std::uint32_t>(kModelVersion);
  w.text(render_config(m.config()));
  put_locations(w, m.locations());
  w.put(m.standardization().mean);
  w.put(m.standardization().scale);
  w.put<std::uint64_t>(m.location_scale().size());
  for (double v : m.location_scale()) w.put(v);
  w.put<std::uint64_t>(m.stage1_parameters().size());
  for (double v : m.stage1_parameters()) w.put(v);
  for (double v : m.transport().hyper().theta) w.put(v);
  w.put<std::uint64_t>(m.transport().structure().m);
  put_matrix(w, m.transport().training());
  w.finish();
}

FittedModel read_model(const std::string& path) {
  Reader r(path);
  r.magic("SCTM");
  r.version(kModelVersion);
  ModelConfig cfg;
  try {
    cfg = parse_config(r.text());
  } catch (const DomainError& e) {
    r.fail(std::string("embedded config: ") + e.what());
  }
  geo::LocationSet locs = get_locations(r);
  Standardization pre;
  pre.mean = r.get<double>();
  pre.scale = r.get<double>();
  const auto ns = r.get<std::uint64_t>();
  r.expect_bytes(ns, 8);
  std::vector<double> loc_scale(static_cast<std::size_t>(ns));
  for (double& v : loc_scale) v = r.get<double>();
  const auto nx = r.get<std::uint64_t>();
  r.expect_bytes(nx, 8);
  std::vector<double> x(static_cast<std::size_t>(nx));
  for (double& v : x) v = r.get<double>();
  tm::TMHyper h;
  for (double& v : h.theta) v = r.get<double>();
  const auto m = r.get<std::uint64_t>();
  Eigen::MatrixXd pseudo = get_matrix(r);
  r.end();
  if (static_cast<std::size_t>(pseudo.cols()) != locs.size()) r.fail("pseudo-data width mismatch");
  try {
    return FittedModel::assemble(cfg, std::move(locs), pre, std::move(loc_scale), std::move(x), h,
                                 static_cast<std::size_t>(m), std::move(pseudo));
  } catch (const DomainError& e) {
    r.fail(std::string("inconsistent model: ") + e.what());
  }
}

void write_noise(const std::string& path, const Eigen::MatrixXd& noise) {
  Writer w(path);
  w.magic("SCTN");
  w.put<std::uint32_t>(kNoiseVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(noise.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(noise.cols()));
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    for (Eigen::Index j = 0; j < noise.cols(); ++j) w.put(noise(i, j));
  }
  w.finish();
}

Eigen::MatrixXd read_noise(const std::string& path) {
  Reader r(path);
  r.magic("SCTN");
  r.version(kNoiseVersion);
  const auto count = r.get<std::uint64_t>();
  const auto L = r.get<std::uint64_t>();
  if (L != 0) r.expect_bytes(count, 8 * L);
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(L));
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      Z(i, j) = r.get<double>();
      if (!std::isfinite(Z(i, j))) r.fail("non-finite noise value");
    }
  }
  r.end();
  return Z;
}

Ensemble ingest_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DomainError("'" + path + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  const auto header = split_csv(line);
  if (header.size() < 3) throw DomainError("'" + path + "': need lon, lat and at least one replicate column");
  const std::size_t N = header.size() - 2;

  std::vector<geo::Coord> coords;
  std::vector<std::vector<double>> values;
  bool seen_north = false, seen_south = false;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << "'" << path << "' row " << row << ": expected " << header.size() << " columns, found "
         << cells.size();
      throw DomainError(os.str());
    }
    std::vector<double> v(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double x = std::numeric_limits<double>::quiet_NaN();
      std::size_t used = 0;
      try {
        x = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size() || !std::isfinite(x)) {
        std::ostringstream os;
        os << "'" << path << "' row " << row << " column " << c + 1 << " (" << header[c];
        if (c >= 2) os << " at lon " << cells[0] << ", lat " << cells[1];
        os << "): missing or non-finite value '" << cells[c] << "'";
        throw DomainError(os.str());
      }
      v[c] = x;
    }
    if (options.collapse_poles && options.metric == geo::Metric::chordal_sphere) {
      if (v[1] == 90.0) {
        if (seen_north) continue;
        seen_north = true;
      } else if (v[1] == -90.0) {
        if (seen_south) continue;
        seen_south = true;
      }
    }
    coords.push_back({v[0], v[1]});
    values.emplace_back(v.begin() + 2, v.end());
  }
  if (coords.empty()) throw DomainError("'" + path + "' has no data rows");
  Ensemble e;
  e.locs = geo::LocationSet(std::move(coords), options.metric);
  e.Y.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(values.size()));
  for (std::size_t l = 0; l < values.size(); ++l) {
    for (std::size_t j = 0; j < N; ++j) e.Y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = values[l][j];
  }
  return e;
}

}  // namespace sct::io
