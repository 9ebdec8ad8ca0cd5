#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

namespace ipod {
namespace {

using testing::Rng;
using testing::TempDir;

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void dump(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Matrix awkward_columns(Index m, Index n) {
  Rng rng(61);
  Matrix a = testing::random_matrix(rng, m, n);
  a(0, 0) = -0.0;
  a(1, 0) = std::numeric_limits<double>::denorm_min();
  a(2, 0) = std::numeric_limits<double>::max();
  a(0, 1) = 0.1;
  a(1, 1) = 1.0 / 3.0;
  return a;
}

TEST(Crc, StandardCheckValue) {
  const std::string s = "123456789";
  EXPECT_EQ(detail::crc32_of(reinterpret_cast<const unsigned char*>(s.data()), s.size()), 0xCBF43926u);
}

TEST(Stream, RoundTripIsBitwise) {
  TempDir dir("stream");
  const Matrix cols = awkward_columns(5, 3);
  const std::vector<double> times{0.1, 0.2, 0.35}, weights{std::sqrt(0.1), std::sqrt(0.1), std::sqrt(0.15)};
  write_stream(dir / "a.pods", cols, times, weights);
  const LoadedStream back = read_stream(dir / "a.pods");
  EXPECT_TRUE(bitwise_equal(back.columns, cols));
  EXPECT_EQ(back.times, times);
  EXPECT_EQ(back.weights, weights);
  EXPECT_TRUE(std::signbit(back.columns(0, 0)));
}

TEST(Stream, HeaderLayout) {
  TempDir dir("stream");
  write_stream(dir / "a.pods", Matrix::Ones(2, 3), {1, 2, 3}, {1, 1, 1});
  const auto bytes = slurp(dir / "a.pods");
  ASSERT_EQ(bytes.size(), 24u + 3u * (16u + 16u));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PODS");
  const std::vector<unsigned char> version{1, 0, 0, 0}, m{2, 0, 0, 0, 0, 0, 0, 0}, n{3, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_TRUE(std::equal(version.begin(), version.end(), bytes.begin() + 4));
  EXPECT_TRUE(std::equal(m.begin(), m.end(), bytes.begin() + 8));
  EXPECT_TRUE(std::equal(n.begin(), n.end(), bytes.begin() + 16));
  // 1.0 little endian: 00 .. 00 f0 3f
  EXPECT_EQ(bytes[24 + 7], 0x3f);
  EXPECT_EQ(bytes[24 + 6], 0xf0);
}

TEST(Stream, ReaderIsIncremental) {
  TempDir dir("stream");
  const Matrix cols = awkward_columns(4, 6);
  write_stream(dir / "a.pods", cols, {1, 2, 3, 4, 5, 6}, {1, 1, 1, 1, 1, 1});
  StreamReader r(dir / "a.pods");
  EXPECT_EQ(r.dim(), 4u);
  EXPECT_EQ(r.declared_count(), 6u);
  r.skip(2);
  auto c = r.next();
  ASSERT_TRUE(c);
  EXPECT_EQ(c->time, 3.0);
  EXPECT_TRUE(bitwise_equal(c->values, cols.col(2)));
  EXPECT_EQ(r.consumed(), 3u);
  r.skip(3);
  EXPECT_FALSE(r.next());
  EXPECT_THROW(r.skip(1), CorruptStream);
}

TEST(Stream, UnterminatedStreamReadsToEof) {
  TempDir dir("stream");
  {
    StreamWriter w(dir / "live.pods", 3, 0, false);
    w.write(0.5, 1.0, Vector::Ones(3));
    w.write(1.0, 1.0, Vector::Zero(3));
  }
  StreamReader r(dir / "live.pods");
  EXPECT_EQ(r.declared_count(), 0u);
  int n = 0;
  while (r.next()) ++n;
  EXPECT_EQ(n, 2);
}

TEST(Stream, CloseRecordsCount) {
  TempDir dir("stream");
  {
    StreamWriter w(dir / "a.pods", 2);
    for (int i = 0; i < 4; ++i) w.write(i, 1.0, Vector::Ones(2));
  }
  EXPECT_EQ(StreamReader(dir / "a.pods").declared_count(), 4u);
}

TEST(Stream, DeclaredCountMismatch) {
  TempDir dir("stream");
  StreamWriter w(dir / "a.pods", 2, 3);
  w.write(0, 1, Vector::Ones(2));
  EXPECT_THROW(w.close(), FormatError);
}

TEST(Stream, EmptyAndBadHeaders) {
  TempDir dir("stream");
  dump(dir / "empty", std::string());
  EXPECT_THROW(StreamReader(dir / "empty"), FormatError);
  EXPECT_THROW(StreamReader(dir / "missing"), FormatError);

  write_stream(dir / "a.pods", Matrix::Ones(2, 1), {1}, {1});
  auto bytes = slurp(dir / "a.pods");
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  dump(dir / "magic", bad_magic);
  EXPECT_THROW(StreamReader(dir / "magic"), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  dump(dir / "version", bad_version);
  EXPECT_THROW(StreamReader(dir / "version"), FormatError);
}

TEST(Stream, TruncatedRecordOffset) {
  TempDir dir("stream");
  const Index m = 7;
  write_stream(dir / "a.pods", Matrix::Ones(m, 3), {1, 2, 3}, {1, 1, 1});
  auto bytes = slurp(dir / "a.pods");
  const std::size_t record = 16 + 8 * m;
  bytes.resize(24 + 2 * record + 20);  // cut inside the third column
  dump(dir / "cut", bytes);
  StreamReader r(dir / "cut");
  ASSERT_TRUE(r.next());
  ASSERT_TRUE(r.next());
  try {
    r.next();
    FAIL() << "expected CorruptStream";
  } catch (const CorruptStream& e) {
    EXPECT_EQ(e.offset(), 24 + 2 * record);
  }
}

TEST(Stream, TerminatedStreamEndingEarly) {
  TempDir dir("stream");
  write_stream(dir / "a.pods", Matrix::Ones(3, 3), {1, 2, 3}, {1, 1, 1});
  auto bytes = slurp(dir / "a.pods");
  bytes.resize(24 + 2 * (16 + 24));
  dump(dir / "short", bytes);
  EXPECT_THROW(read_stream(dir / "short"), CorruptStream);
}

TEST(Stream, ColumnCap) {
  TempDir dir("stream");
  write_stream(dir / "a.pods", Matrix::Ones(3, 5), {1, 2, 3, 4, 5}, {1, 1, 1, 1, 1});
  EXPECT_THROW(read_stream(dir / "a.pods", 4), InvalidInput);
  EXPECT_EQ(read_stream(dir / "a.pods", 5).columns.cols(), 5);
}

TEST(Stream, WriterRejectsWrongLength) {
  TempDir dir("stream");
  StreamWriter w(dir / "a.pods", 3);
  EXPECT_THROW(w.write(0, 1, Vector::Ones(2)), SizeError);
}

TEST(WeightFile, IdentityRoundTrip) {
  std::stringstream ss;
  write_weight_matrix(ss, WeightMatrix::identity(3));
  EXPECT_EQ(ss.str(), "%%WeightMatrix symmetric\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n");
  const WeightMatrix back = read_weight_matrix(ss);
  EXPECT_TRUE(Matrix(back.entries()).isIdentity(0.0));
}

TEST(WeightFile, FhnMassRoundTripIsBitwise) {
  const Index n = 500;
  const WeightMatrix m = build_weight_matrix(Mesh1D(n));
  std::stringstream ss;
  write_weight_matrix(ss, m);
  std::string header, dims;
  std::getline(ss, header);
  std::getline(ss, dims);
  EXPECT_EQ(dims, "1000 1000 " + std::to_string(2 * (2 * n - 1)));
  ss.seekg(0);
  const WeightMatrix back = read_weight_matrix(ss);
  EXPECT_TRUE(bitwise_equal(Matrix(back.entries()), Matrix(m.entries())));
  EXPECT_GT(Vector(Matrix(back.chol().diagonal())).minCoeff(), 0.0);
}

TEST(WeightFile, RandomValuesRoundTripBitwise) {
  Rng rng(62);
  const WeightMatrix m = testing::random_spd(rng, 25);
  TempDir dir("weights");
  write_weight_matrix(dir / "m.txt", m);
  EXPECT_TRUE(bitwise_equal(Matrix(read_weight_matrix(dir / "m.txt").entries()), Matrix(m.entries())));
}

TEST(WeightFile, UpperTriangleIsMirrored) {
  std::stringstream ss("%%WeightMatrix symmetric\n2 2 3\n1 1 1\n1 2 0.5\n2 2 1\n");
  const Matrix m = Matrix(read_weight_matrix(ss).entries());
  EXPECT_EQ(m(0, 1), 0.5);
  EXPECT_EQ(m(1, 0), 0.5);
}

TEST(WeightFile, Rejections) {
  auto read = [](const std::string& text) {
    std::stringstream ss(text);
    return read_weight_matrix(ss);
  };
  EXPECT_THROW(read(""), FormatError);
  EXPECT_THROW(read("%%MatrixMarket matrix\n1 1 1\n1 1 1\n"), FormatError);
  EXPECT_THROW(read("%%WeightMatrix symmetric\n2 3 1\n1 1 1\n"), FormatError);
  EXPECT_THROW(read("%%WeightMatrix symmetric\n2 2 2\n1 1 1\n"), FormatError);
  EXPECT_THROW(read("%%WeightMatrix symmetric\n2 2 2\n1 1 1\n3 3 1\n"), FormatError);
  EXPECT_THROW(read("%%WeightMatrix symmetric\n1 1 1\n1 1 abc\n"), FormatError);
  // Both triangles stored with different values.
  EXPECT_THROW(read("%%WeightMatrix symmetric\n2 2 4\n1 1 1\n2 1 0.5\n1 2 0.25\n2 2 1\n"), FormatError);
  EXPECT_THROW(read("%%WeightMatrix symmetric\n2 2 3\n1 1 1\n1 1 1\n2 2 1\n"), FormatError);
  // Not positive definite.
  EXPECT_THROW(read("%%WeightMatrix symmetric\n2 2 2\n1 1 1\n2 1 2\n"), NotPositiveDefinite);
}

SvdState rank5_state(Rng& rng, const WeightMatrix& m, bool keep_right) {
  UpdateOptions opts;
  opts.keep_right = keep_right;
  Vector s(5);
  s << 5, 4, 3, 2, 1;
  return run_stream(testing::with_weighted_singular_values(rng, m, 9, s), m, {1e-10, 1e-10}, opts);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Rng rng(63);
  const WeightMatrix m = testing::random_spd(rng, 12);
  for (bool keep : {true, false}) {
    SvdState s = rank5_state(rng, m, keep);
    s.error_bound = 1.2345678901234567e-9;
    s.error_compensation = -3e-26;
    s.p_truncations = 17;
    s.sv_truncations = 4;
    ASSERT_EQ(s.rank(), 5);
    TempDir dir("ckpt");
    checkpoint(s, {1e-9, 1e-11}, dir / "s.podc");
    const Checkpoint back = restore(dir / "s.podc");
    EXPECT_TRUE(back.state == s);
    EXPECT_EQ(back.tols.tol, 1e-9);
    EXPECT_EQ(back.tols.tol_sv, 1e-11);
    EXPECT_FALSE(std::filesystem::exists(dir / "s.podc.tmp"));
  }
}

TEST(Checkpoint, FlippedByteIsDetected) {
  Rng rng(64);
  const WeightMatrix m = testing::random_spd(rng, 12);
  const auto bytes = encode_checkpoint(rank5_state(rng, m, true), {});
  for (std::size_t pos : {std::size_t{5}, std::size_t{40}, bytes.size() / 2, bytes.size() - 5, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x10;
    EXPECT_THROW(decode_checkpoint(bad), CorruptCheckpoint) << pos;
  }
  auto cut = bytes;
  cut.resize(cut.size() - 8);
  EXPECT_THROW(decode_checkpoint(cut), CorruptCheckpoint);
  EXPECT_THROW(decode_checkpoint({}), CorruptCheckpoint);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  Rng rng(65);
  const WeightMatrix m = testing::random_spd(rng, 15);
  Vector s(10);
  for (Index i = 0; i < 10; ++i) s(i) = std::pow(0.3, static_cast<double>(i));
  const Matrix u = testing::with_weighted_singular_values(rng, m, 30, s);
  const Tolerances tols{1e-6, 1e-6};
  const SvdState full = run_stream(u, m, tols);

  TempDir dir("ckpt");
  IncrementalPod first(m, tols);
  for (Index j = 0; j < 13; ++j) first.push(u.col(j));
  checkpoint(first.state(), tols, dir / "mid.podc");
  const Checkpoint c = restore(dir / "mid.podc");
  IncrementalPod second(m, c.tols, c.state);
  for (Index j = 13; j < 30; ++j) second.push(u.col(j));
  EXPECT_TRUE(second.state() == full);
  EXPECT_EQ(encode_checkpoint(second.state(), tols), encode_checkpoint(full, tols));
}

TEST(Csv, QuotingAndLineEnds) {
  std::stringstream ss;
  CsvWriter csv(ss);
  csv.header({"a", "b,c", "d\"e"});
  csv.row({0.1, std::int64_t{-3}, std::uint64_t{7}, true, std::monostate{}, std::string("x\ny")});
  EXPECT_EQ(ss.str(), "a,\"b,c\",\"d\"\"e\"\r\n0.10000000000000001,-3,7,true,,\"x\ny\"\r\n");
}

TEST(Csv, SweepHeader) {
  std::stringstream ss;
  SweepRow r;
  r.tols = {1e-8, 1e-10};
  r.rank = 3;
  r.exact_error = 1.5e-9;
  r.incr_error_bound = 2e-8;
  write_sweep_csv(ss, {r});
  EXPECT_EQ(ss.str(),
            "tol,tol_sv,rank,exact_error,incr_error_bound\r\n"
            "1e-08,1e-10,3,1.5e-09,2e-08\r\n");
}

TEST(Csv, VectorBoundHeader) {
  std::stringstream ss;
  VectorBoundRow r;
  r.j = 2;
  r.sigma = 0.5;
  write_vector_bound_csv(ss, {r});
  EXPECT_EQ(ss.str(), "j,sigma_j,eps_j,E_j,gap_ok,v_err,v_bound,w_err,w_bound\r\n2,0.5,,,false,0,,0,\r\n");
}

}  // namespace
}  // namespace ipod
