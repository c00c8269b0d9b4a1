#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <stdexcept>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "smoothrl/error.hpp"
#include "smoothrl/io/base64.hpp"
#include "smoothrl/io/csv.hpp"
#include "smoothrl/io/files.hpp"
#include "smoothrl/nn/checkpoint.hpp"
#include "smoothrl/parallel.hpp"
#include "smoothrl/rng.hpp"
#include "test_util.hpp"

namespace smoothrl {
namespace {

namespace fs = std::filesystem;

TEST(Base64, KnownVectors) {
  auto enc = [](std::string_view s) {
    return io::base64_encode({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  const auto dec = io::base64_decode("Zm9vYg==");
  EXPECT_EQ(std::string(dec.begin(), dec.end()), "foob");
}

TEST(Base64, RejectsMalformedInput) {
  EXPECT_THROW(io::base64_decode("abc"), std::invalid_argument);
  EXPECT_THROW(io::base64_decode("ab!d"), std::invalid_argument);
  EXPECT_THROW(io::base64_decode("a=bc"), std::invalid_argument);
}

TEST(Base64, DoublesRoundTripBitExact) {
  const Vector v{0.0, -0.0, 1.0 / 3.0, 1e-310, -std::numeric_limits<double>::max(), 42.5};
  const Vector back = io::decode_doubles(io::encode_doubles(v));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(std::signbit(back[i]), std::signbit(v[i]));
  EXPECT_EQ(back, v);
}

TEST(Base64, DoublesAreLittleEndian) {
  // 1.0 is 0x3FF0000000000000; little-endian bytes 00 00 00 00 00 00 F0 3F.
  const Vector one{1.0};
  EXPECT_EQ(io::encode_doubles(one), "AAAAAAAA8D8=");
}

TEST(Csv, FormatDoubleRoundTrips) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
  EXPECT_EQ(io::format_double(0.5).find(','), std::string::npos);
}

TEST(Csv, WriterEnforcesColumnCount) {
  io::CsvWriter w({"a", "b"});
  w.row({"1", "2"});
  EXPECT_THROW(w.row({"1"}), std::invalid_argument);
  EXPECT_EQ(w.str(), "a,b\n1,2\n");
}

TEST(Files, AtomicWriteReplacesWholeFile) {
  const fs::path dir = fs::temp_directory_path() / "smoothrl_io_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path p = dir / "out.txt";
  io::write_file_atomic(p, "first version, long");
  io::write_file_atomic(p, "second");
  EXPECT_EQ(io::read_file(p), "second");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1u);  // no temporary left behind
  fs::remove_all(dir);
}

nn::Checkpoint sample_checkpoint() {
  Rng rng(12);
  nn::Checkpoint ck;
  ck.kind = "sdqn";
  ck.env_id = "gridreach";
  ck.networks["qnet"] = nn::Mlp::glorot({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  ck.networks["denoiser"] =
      testing::random_net({8, 5, 8}, {nn::Activation::tanh, nn::Activation::identity}, rng, 1.0, true);
  ck.vectors["log_std"] = {-0.5, 0.25};
  ck.metadata.sigma = 0.1;
  ck.metadata.seed = 18446744073709551557ULL;
  ck.metadata.steps = 30000;
  ck.metadata.extra = {{"m", 5}};
  return ck;
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto ck = sample_checkpoint();
  const auto text = nn::encode_checkpoint(ck);
  const auto back = nn::decode_checkpoint(text);
  EXPECT_EQ(back.kind, ck.kind);
  EXPECT_EQ(back.env_id, ck.env_id);
  EXPECT_EQ(back.networks, ck.networks);
  EXPECT_EQ(back.vectors, ck.vectors);
  EXPECT_EQ(back.metadata.sigma, ck.metadata.sigma);
  EXPECT_EQ(back.metadata.seed, ck.metadata.seed);
  EXPECT_EQ(back.metadata.steps, ck.metadata.steps);
  EXPECT_EQ(back.metadata.extra, ck.metadata.extra);
  EXPECT_TRUE(back.network("denoiser").residual());
  EXPECT_EQ(nn::encode_checkpoint(back), text);
}

TEST(Checkpoint, RejectsUnknownVersion) {
  auto doc = nlohmann::json::parse(nn::encode_checkpoint(sample_checkpoint()));
  doc["format_version"] = 2;
  EXPECT_THROW(nn::decode_checkpoint(doc.dump()), CheckpointError);
  doc.erase("format_version");
  EXPECT_THROW(nn::decode_checkpoint(doc.dump()), CheckpointError);
}

TEST(Checkpoint, RejectsCorruptDocuments) {
  EXPECT_THROW(nn::decode_checkpoint("not json"), CheckpointError);
  EXPECT_THROW(nn::decode_checkpoint("{}"), CheckpointError);
  auto doc = nlohmann::json::parse(nn::encode_checkpoint(sample_checkpoint()));
  doc["networks"]["qnet"]["parameters"]["layer0.bias"] = "AAAA";
  EXPECT_THROW(nn::decode_checkpoint(doc.dump()), CheckpointError);
  const auto text = nn::encode_checkpoint(sample_checkpoint());
  EXPECT_THROW(nn::decode_checkpoint(text.substr(0, text.size() / 2)), CheckpointError);
}

TEST(Checkpoint, MissingEntriesReported) {
  const auto ck = sample_checkpoint();
  EXPECT_THROW(ck.network("policy"), CheckpointError);
  EXPECT_THROW(ck.vector("nope"), CheckpointError);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const fs::path p = fs::temp_directory_path() / "smoothrl_ckpt_test.v1";
  nn::save_checkpoint(p, sample_checkpoint());
  EXPECT_EQ(nn::load_checkpoint(p).networks, sample_checkpoint().networks);
  fs::remove(p);
  EXPECT_THROW(nn::load_checkpoint(p), CheckpointError);
}

TEST(Rng, DeriveSeedDependsOnlyOnRootAndName) {
  EXPECT_EQ(derive_seed(7, "env"), derive_seed(7, "env"));
  EXPECT_NE(derive_seed(7, "env"), derive_seed(7, "noise"));
  EXPECT_NE(derive_seed(7, "env"), derive_seed(8, "env"));
  Rng a(7);
  a.next_u64();
  a.normal();
  const Rng b(7);
  // child() is keyed on the root seed, not the stream position.
  EXPECT_EQ(a.child("init").seed(), b.child("init").seed());
}

TEST(Rng, CounterNormalIsPureAndRoughlyStandard) {
  Vector a(4), b(4);
  counter_normal(99, 5, a);
  counter_normal(99, 5, b);
  EXPECT_EQ(a, b);
  counter_normal(99, 6, b);
  EXPECT_NE(a, b);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  Vector x(1);
  for (int i = 0; i < n; ++i) {
    counter_normal(1234, static_cast<std::uint64_t>(i), x);
    sum += x[0];
    sq += x[0] * x[0];
  }
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Parallel, CoversRangeOnceForAnyWorkerCount) {
  for (int threads : {1, 2, 3, 8}) {
    set_num_threads(threads);
    std::vector<std::atomic<int>> hits(101);
    parallel_for(hits.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) hits[i]++;
    });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  set_num_threads(1);
}

TEST(Parallel, RethrowsWorkerExceptions) {
  set_num_threads(3);
  EXPECT_THROW(parallel_for(30,
                            [](std::size_t b, std::size_t) {
                              if (b > 0) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
  set_num_threads(1);
}

}  // namespace
}  // namespace smoothrl
