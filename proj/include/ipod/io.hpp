/**
 * @file
 * @brief File formats: snapshot streams, weight matrices, SVD checkpoints and CSV reports.
 *
 * Snapshot stream (little endian):
 *   "PODS" | u32 version = 1 | u64 m | u64 count (0 = unterminated)
 *   then per column: f64 time | f64 weight | m x f64 values
 *
 * Checkpoint (little endian):
 *   "PODC" | u32 version = 1 | u64 m | u64 n | u64 k | f64 e | f64 e_carry
 *   | u64 T_p | u64 T_sv | f64 tol | f64 tol_sv | u32 flags (bit 0: W present)
 *   | V (m*k f64, column major) | sigma (k f64) | W (n*k f64 if present)
 *   | u32 CRC-32 of every preceding byte
 *
 * Weight matrix (text): "%%WeightMatrix symmetric", "m m nnz", then nnz lines
 * "i j value" (1-based, one triangle, values with 17 significant digits).
 */
#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <zlib.h>

#include "ipod/incremental_svd.hpp"
#include "ipod/oracle.hpp"
#include "ipod/perturbation.hpp"

namespace ipod {

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void f64s(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }

  std::vector<unsigned char>& bytes() noexcept { return bytes_; }
  void clear() { bytes_.clear(); }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  bool has(std::size_t n) const noexcept { return size_ - pos_ >= n; }
  std::size_t position() const noexcept { return pos_; }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view raw(std::size_t n) {
    std::string_view s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FormatError(context + ": bad number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, const std::string& context) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FormatError(context + ": bad integer '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Snapshot streams

inline constexpr std::uint32_t kStreamVersion = 1;
inline constexpr std::size_t kStreamHeaderBytes = 24;

struct StreamColumn {
  double time = 0.0;
  double weight = 0.0;
  Vector values;
};

class StreamWriter {
 public:
  /// @p declared_count = 0 writes an unterminated stream; close() then records
  /// the number of columns written if @p patch_count is set.
  StreamWriter(const std::filesystem::path& path, std::uint64_t m, std::uint64_t declared_count = 0,
               bool patch_count = true)
      : out_(path, std::ios::binary | std::ios::trunc),
        path_(path),
        m_(m),
        declared_(declared_count),
        patch_(patch_count) {
    if (!out_) throw FormatError("cannot open '" + path.string() + "' for writing");
    if (m == 0) throw InvalidInput("stream dimension must be positive");
    detail::ByteWriter w;
    w.raw("PODS");
    w.u32(kStreamVersion);
    w.u64(m);
    w.u64(declared_count);
    put(w);
  }

  StreamWriter(const StreamWriter&) = delete;
  StreamWriter& operator=(const StreamWriter&) = delete;

  ~StreamWriter() {
    try {
      close();
    } catch (...) {
    }
  }

  void write(double time, double weight, const Vector& values) {
    detail::require_same_size(values.size(), static_cast<Index>(m_), "StreamWriter::write");
    buf_.clear();
    buf_.f64(time);
    buf_.f64(weight);
    buf_.f64s(values.data(), static_cast<std::size_t>(values.size()));
    put(buf_);
    ++written_;
  }

  std::uint64_t written() const noexcept { return written_; }

  void close() {
    if (closed_) return;
    closed_ = true;
    if (declared_ != 0 && written_ != declared_) {
      out_.close();
      throw FormatError("stream '" + path_.string() + "' declared " + std::to_string(declared_) +
                        " columns but " + std::to_string(written_) + " were written");
    }
    if (declared_ == 0 && patch_) {
      detail::ByteWriter w;
      w.u64(written_);
      out_.seekp(16);
      put(w);
    }
    out_.close();
  }

 private:
  void put(detail::ByteWriter& w) {
    out_.write(reinterpret_cast<const char*>(w.bytes().data()),
               static_cast<std::streamsize>(w.bytes().size()));
    if (!out_) throw FormatError("write to '" + path_.string() + "' failed");
  }

  std::ofstream out_;
  std::filesystem::path path_;
  std::uint64_t m_;
  std::uint64_t declared_;
  bool patch_;
  std::uint64_t written_ = 0;
  bool closed_ = false;
  detail::ByteWriter buf_;
};

/// Reads one column at a time; memory use is O(m).
class StreamReader {
 public:
  explicit StreamReader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw FormatError("cannot open '" + path.string() + "'");
    unsigned char header[kStreamHeaderBytes];
    in_.read(reinterpret_cast<char*>(header), kStreamHeaderBytes);
    if (in_.gcount() != static_cast<std::streamsize>(kStreamHeaderBytes)) {
      throw FormatError("'" + path.string() + "' is too short to be a snapshot stream");
    }
    detail::ByteReader r(header, kStreamHeaderBytes);
    if (r.raw(4) != "PODS") throw FormatError("'" + path.string() + "' has bad magic");
    const std::uint32_t version = r.u32();
    if (version != kStreamVersion) {
      throw FormatError("unsupported stream version " + std::to_string(version));
    }
    m_ = r.u64();
    count_ = r.u64();
    if (m_ == 0) throw FormatError("stream declares zero rows");
    record_.resize(16 + 8 * m_);
    offset_ = kStreamHeaderBytes;
  }

  std::uint64_t dim() const noexcept { return m_; }
  /// Declared column count, 0 if unterminated.
  std::uint64_t declared_count() const noexcept { return count_; }
  std::uint64_t consumed() const noexcept { return read_; }

  /// Next column, or nullopt at a clean end of stream.
  /// @throws CorruptStream on a partial record or a short terminated stream.
  std::optional<StreamColumn> next() {
    if (count_ != 0 && read_ == count_) return std::nullopt;
    in_.read(reinterpret_cast<char*>(record_.data()), static_cast<std::streamsize>(record_.size()));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) {
      if (count_ != 0) {
        throw CorruptStream("stream ended after " + std::to_string(read_) + " of " +
                                std::to_string(count_) + " columns",
                            offset_);
      }
      return std::nullopt;
    }
    if (got != record_.size()) throw CorruptStream("truncated column record", offset_);
    detail::ByteReader r(record_.data(), record_.size());
    StreamColumn col;
    col.time = r.f64();
    col.weight = r.f64();
    col.values.resize(static_cast<Index>(m_));
    for (Index i = 0; i < col.values.size(); ++i) col.values(i) = r.f64();
    offset_ += record_.size();
    ++read_;
    return col;
  }

  /// Skips @p columns records without decoding them.
  void skip(std::uint64_t columns) {
    for (std::uint64_t i = 0; i < columns; ++i) {
      if (!next()) throw CorruptStream("cannot skip past end of stream", offset_);
    }
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
  std::uint64_t m_ = 0;
  std::uint64_t count_ = 0;
  std::uint64_t read_ = 0;
  std::uint64_t offset_ = 0;
  std::vector<unsigned char> record_;
};

inline void write_stream(const std::filesystem::path& path, const Matrix& columns,
                         const std::vector<double>& times, const std::vector<double>& weights) {
  if (times.size() != static_cast<std::size_t>(columns.cols()) || weights.size() != times.size()) {
    throw SizeError("write_stream: times/weights must have one entry per column");
  }
  StreamWriter w(path, static_cast<std::uint64_t>(columns.rows()),
                 static_cast<std::uint64_t>(columns.cols()));
  for (Index j = 0; j < columns.cols(); ++j) {
    w.write(times[static_cast<std::size_t>(j)], weights[static_cast<std::size_t>(j)], columns.col(j));
  }
  w.close();
}

struct LoadedStream {
  Matrix columns;
  std::vector<double> times;
  std::vector<double> weights;
};

/// Materializes a whole stream (verification paths only); refuses more than @p max_columns.
inline LoadedStream read_stream(const std::filesystem::path& path,
                                std::uint64_t max_columns = std::numeric_limits<std::uint64_t>::max()) {
  StreamReader reader(path);
  std::vector<StreamColumn> cols;
  while (auto c = reader.next()) {
    if (cols.size() >= max_columns) {
      throw InvalidInput("stream '" + path.string() + "' has more than " +
                         std::to_string(max_columns) + " columns");
    }
    cols.push_back(std::move(*c));
  }
  LoadedStream out;
  out.columns.resize(static_cast<Index>(reader.dim()), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.columns.col(static_cast<Index>(j)) = cols[j].values;
    out.times.push_back(cols[j].time);
    out.weights.push_back(cols[j].weight);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weight matrices

inline void write_weight_matrix(std::ostream& out, const WeightMatrix& m) {
  const SparseMatrix& a = m.entries();
  std::vector<std::pair<std::pair<Index, Index>, double>> lower;
  for (Index col = 0; col < a.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
      if (it.row() >= it.col()) lower.push_back({{it.row(), it.col()}, it.value()});
    }
  }
  std::sort(lower.begin(), lower.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  out << "%%WeightMatrix symmetric\n" << m.dim() << ' ' << m.dim() << ' ' << lower.size() << '\n';
  for (const auto& [ij, v] : lower) {
    out << ij.first + 1 << ' ' << ij.second + 1 << ' ' << detail::format_double(v) << '\n';
  }
  if (!out) throw FormatError("failed writing weight matrix");
}

inline void write_weight_matrix(const std::filesystem::path& path, const WeightMatrix& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_weight_matrix(out, m);
}

/**
 * @brief Parses the triplet format. Either triangle may be used; an entry whose
 *        mirror is also present with a different value is rejected.
 */
inline WeightMatrix read_weight_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("weight matrix: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "%%WeightMatrix symmetric") throw FormatError("weight matrix: bad header '" + line + "'");

  auto split = [](const std::string& s) {
    std::vector<std::string> toks;
    std::istringstream ss(s);
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
  };

  if (!std::getline(in, line)) throw FormatError("weight matrix: missing dimension line");
  auto dims = split(line);
  if (dims.size() != 3) throw FormatError("weight matrix: dimension line needs 'm m nnz'");
  const auto rows = detail::parse_uint(dims[0], "weight matrix rows");
  const auto cols = detail::parse_uint(dims[1], "weight matrix cols");
  const auto nnz = detail::parse_uint(dims[2], "weight matrix nnz");
  if (rows != cols || rows == 0) throw FormatError("weight matrix must be square and non-empty");

  std::map<std::pair<std::uint64_t, std::uint64_t>, std::pair<double, bool>> entries;  // key (hi, lo)
  for (std::uint64_t e = 0; e < nnz; ++e) {
    if (!std::getline(in, line)) {
      throw FormatError("weight matrix: expected " + std::to_string(nnz) + " entries, found " +
                        std::to_string(e));
    }
    auto toks = split(line);
    if (toks.size() != 3) throw FormatError("weight matrix: bad entry line '" + line + "'");
    const auto i = detail::parse_uint(toks[0], "row index");
    const auto j = detail::parse_uint(toks[1], "column index");
    const double v = detail::parse_double(toks[2], "entry value");
    if (i < 1 || j < 1 || i > rows || j > rows) throw FormatError("weight matrix: index out of range");
    const bool is_lower = i >= j;
    const auto key = std::make_pair(std::max(i, j) - 1, std::min(i, j) - 1);
    auto [it, inserted] = entries.try_emplace(key, v, is_lower);
    if (!inserted) {
      if (it->second.second == is_lower || i == j) {
        throw FormatError("weight matrix: duplicate entry (" + toks[0] + ", " + toks[1] + ")");
      }
      if (it->second.first != v) {
        throw FormatError("weight matrix: asymmetric entry (" + toks[0] + ", " + toks[1] + ")");
      }
    }
  }

  std::vector<Eigen::Triplet<double>> t;
  for (const auto& [key, val] : entries) {
    const auto r = static_cast<Index>(key.first), c = static_cast<Index>(key.second);
    t.emplace_back(r, c, val.first);
    if (r != c) t.emplace_back(c, r, val.first);
  }
  SparseMatrix a(static_cast<Index>(rows), static_cast<Index>(rows));
  a.setFromTriplets(t.begin(), t.end());
  return WeightMatrix(std::move(a));
}

inline WeightMatrix read_weight_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_weight_matrix(in);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SvdState state;
  Tolerances tols;
};

inline std::vector<unsigned char> encode_checkpoint(const SvdState& s, const Tolerances& tols) {
  const auto m = static_cast<std::uint64_t>(s.modes.rows());
  const auto k = static_cast<std::uint64_t>(s.sigma.size());
  if (static_cast<std::uint64_t>(s.modes.cols()) != k) throw SizeError("checkpoint: V and sigma disagree");
  if (s.tracks_right && static_cast<std::uint64_t>(s.right.rows()) != s.columns) {
    throw SizeError("checkpoint: W row count does not match n");
  }
  detail::ByteWriter w;
  w.raw("PODC");
  w.u32(kCheckpointVersion);
  w.u64(m);
  w.u64(s.columns);
  w.u64(k);
  w.f64(s.error_bound);
  w.f64(s.error_compensation);
  w.u64(s.p_truncations);
  w.u64(s.sv_truncations);
  w.f64(tols.tol);
  w.f64(tols.tol_sv);
  w.u32(s.tracks_right ? 1u : 0u);
  w.f64s(s.modes.data(), static_cast<std::size_t>(s.modes.size()));
  w.f64s(s.sigma.data(), static_cast<std::size_t>(s.sigma.size()));
  if (s.tracks_right) w.f64s(s.right.data(), static_cast<std::size_t>(s.right.size()));
  w.u32(detail::crc32_of(w.bytes().data(), w.bytes().size()));
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  constexpr std::size_t kFixed = 4 + 4 + 3 * 8 + 2 * 8 + 2 * 8 + 2 * 8 + 4;
  if (bytes.size() < kFixed + 4) throw CorruptCheckpoint("checkpoint is truncated");
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader tail(bytes.data() + body, 4);
  if (tail.u32() != detail::crc32_of(bytes.data(), body)) throw CorruptCheckpoint("checkpoint CRC mismatch");

  detail::ByteReader r(bytes.data(), body);
  if (r.raw(4) != "PODC") throw FormatError("checkpoint has bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint out;
  SvdState& s = out.state;
  const std::uint64_t m = r.u64();
  s.columns = r.u64();
  const std::uint64_t k = r.u64();
  s.error_bound = r.f64();
  s.error_compensation = r.f64();
  s.p_truncations = r.u64();
  s.sv_truncations = r.u64();
  out.tols.tol = r.f64();
  out.tols.tol_sv = r.f64();
  s.tracks_right = (r.u32() & 1u) != 0;
  const std::uint64_t w_rows = s.tracks_right ? s.columns : 0;
  const std::uint64_t payload = 8 * (m * k + k + w_rows * k);
  if (!r.has(payload) || body - r.position() != payload) {
    throw CorruptCheckpoint("checkpoint payload size does not match its header");
  }
  s.modes.resize(static_cast<Index>(m), static_cast<Index>(k));
  for (Index i = 0; i < s.modes.size(); ++i) s.modes.data()[i] = r.f64();
  s.sigma.resize(static_cast<Index>(k));
  for (Index i = 0; i < s.sigma.size(); ++i) s.sigma(i) = r.f64();
  s.right.resize(static_cast<Index>(w_rows), static_cast<Index>(k));
  for (Index i = 0; i < s.right.size(); ++i) s.right.data()[i] = r.f64();
  return out;
}

/// Writes atomically (temporary file, then rename).
inline void checkpoint(const SvdState& state, const Tolerances& tols, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(state, tols);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint restore(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// CSV

using CsvValue = std::variant<std::string, double, std::int64_t, std::uint64_t, bool, std::monostate>;

/// RFC 4180 CSV: CRLF line ends, quoting when needed, doubles at 17 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void row(const std::vector<CsvValue>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << field(cells[i]);
    }
    out_ << "\r\n";
  }

  void header(const std::vector<std::string>& names) {
    std::vector<CsvValue> cells(names.begin(), names.end());
    row(cells);
  }

  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + '"';
  }

 private:
  static std::string field(const CsvValue& v) {
    struct Visitor {
      std::string operator()(const std::string& s) const { return quote(s); }
      std::string operator()(double d) const { return detail::format_double(d); }
      std::string operator()(std::int64_t i) const { return std::to_string(i); }
      std::string operator()(std::uint64_t i) const { return std::to_string(i); }
      std::string operator()(bool b) const { return b ? "true" : "false"; }
      std::string operator()(std::monostate) const { return {}; }
    };
    return std::visit(Visitor{}, v);
  }

  std::ostream& out_;
};

inline CsvValue optional_cell(const std::optional<double>& v) {
  return v ? CsvValue(*v) : CsvValue(std::monostate{});
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  CsvWriter csv(out);
  csv.header({"tol", "tol_sv", "rank", "exact_error", "incr_error_bound"});
  for (const auto& r : rows) {
    csv.row({r.tols.tol, r.tols.tol_sv, static_cast<std::int64_t>(r.rank), r.exact_error,
             r.incr_error_bound});
  }
}

inline void write_vector_bound_csv(std::ostream& out, const std::vector<VectorBoundRow>& rows) {
  CsvWriter csv(out);
  csv.header({"j", "sigma_j", "eps_j", "E_j", "gap_ok", "v_err", "v_bound", "w_err", "w_bound"});
  for (const auto& r : rows) {
    csv.row({static_cast<std::int64_t>(r.j), r.sigma, optional_cell(r.eps_j), optional_cell(r.e_j),
             r.gap_ok, r.v_err, r.gap_ok ? CsvValue(r.v_bound) : CsvValue(std::monostate{}), r.w_err,
             r.gap_ok ? CsvValue(r.w_bound) : CsvValue(std::monostate{})});
  }
}

}  // namespace ipod
