#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "aupt/checkpoint.hpp"
#include "oracles.hpp"

using namespace aupt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.dims() == b.dims() && std::memcmp(a.data(), b.data(), sizeof(float) * std::size_t(a.size())) == 0;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = oracle::temp_dir("ckpt_roundtrip");
  const auto net = build_vgg13<float>(1, 17, 8);
  save_checkpoint(net, dir / "a.aupt", {"abc123", 8, 4, {{"note", "x"}}});
  const auto loaded = load_checkpoint<float>(dir / "a.aupt");
  ASSERT_EQ(loaded.network.named_parameters().size(), net.named_parameters().size());
  for (const auto& p : net.named_parameters()) {
    EXPECT_TRUE(bitwise_equal(p.tensor, loaded.network.parameter(p.name))) << p.name;
  }
  EXPECT_EQ(loaded.network.layers(), net.layers());
  EXPECT_EQ(loaded.metadata.config_hash, "abc123");
  EXPECT_EQ(loaded.metadata.seed, 8u);
  EXPECT_EQ(loaded.metadata.epoch, 4);
  EXPECT_EQ(loaded.metadata.extra.at("note"), "x");
  EXPECT_FALSE(loaded.optimizer.has_value());

  save_checkpoint(loaded.network, dir / "b.aupt", loaded.metadata);
  EXPECT_EQ(slurp(dir / "a.aupt"), slurp(dir / "b.aupt"));
}

TEST(Checkpoint, ReducedWidthGeometrySurvives) {
  const auto dir = oracle::temp_dir("ckpt_width");
  const auto net = build_vgg13<float>(3, 5, 1, 8);
  save_checkpoint(net, dir / "n.aupt");
  const auto loaded = load_checkpoint<float>(dir / "n.aupt").network;
  EXPECT_EQ(loaded.width_divisor(), 8);
  EXPECT_EQ(loaded.in_channels(), 3);
  EXPECT_EQ(loaded.num_outputs(), 5);
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
  const auto dir = oracle::temp_dir("ckpt_adam");
  auto net = build_vgg13<float>(1, 17, 2, 16);
  auto params = net.parameters();
  auto state = make_adam_state<float>(std::span<const Tensor<float>>(params), {1e-3, 0.9, 0.999, 1e-8});
  for (auto& p : params) p.grad().setConstant(0.5f);
  adam_step<float>(std::span<Tensor<float>>(params), state);
  save_checkpoint(net, dir / "o.aupt", {}, &state);
  const auto loaded = load_checkpoint<float>(dir / "o.aupt");
  ASSERT_TRUE(loaded.optimizer.has_value());
  EXPECT_EQ(loaded.optimizer->step_count, 1);
  EXPECT_EQ(loaded.optimizer->config.lr, 1e-3);
  ASSERT_EQ(loaded.optimizer->m.size(), state.m.size());
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    EXPECT_EQ(loaded.optimizer->m[i], state.m[i]);
    EXPECT_EQ(loaded.optimizer->v[i], state.v[i]);
  }
}

TEST(Checkpoint, TruncationIsFormatError) {
  const auto dir = oracle::temp_dir("ckpt_trunc");
  save_checkpoint(build_vgg13<float>(1, 17, 3, 16), dir / "full.aupt");
  const auto bytes = slurp(dir / "full.aupt");
  for (std::size_t cut : {std::size_t(0), std::size_t(3), std::size_t(9), bytes.size() / 3, bytes.size() / 2,
                          bytes.size() - 1}) {
    spit(dir / "cut.aupt", bytes.substr(0, cut));
    EXPECT_THROW(load_checkpoint<float>(dir / "cut.aupt"), FormatError) << "cut at " << cut;
  }
}

TEST(Checkpoint, BadMagicVersionAndTrailingBytesAreFormatErrors) {
  const auto dir = oracle::temp_dir("ckpt_corrupt");
  save_checkpoint(build_vgg13<float>(1, 17, 3, 16), dir / "full.aupt");
  const auto bytes = slurp(dir / "full.aupt");

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  spit(dir / "m.aupt", bad_magic);
  EXPECT_THROW(load_checkpoint<float>(dir / "m.aupt"), FormatError);

  auto bad_version = bytes;
  bad_version[4] = char(99);
  spit(dir / "v.aupt", bad_version);
  EXPECT_THROW(load_checkpoint<float>(dir / "v.aupt"), FormatError);

  spit(dir / "t.aupt", bytes + "junk");
  EXPECT_THROW(load_checkpoint<float>(dir / "t.aupt"), FormatError);
}

TEST(Checkpoint, MissingFileIsError) {
  EXPECT_ANY_THROW(load_checkpoint<float>("/nonexistent/dir/x.aupt"));
}

// After replace_head, re-saving differs only in the head records and the
// metadata block.
TEST(Checkpoint, HeadSwapChangesOnlyHeadAndMetadataBytes) {
  const auto dir = oracle::temp_dir("ckpt_diff");
  const auto net = build_vgg13<float>(1, 17, 6);
  save_checkpoint(net, dir / "a.aupt");
  save_checkpoint(replace_head(net, 12, 7), dir / "b.aupt");
  const auto a = slurp(dir / "a.aupt");
  const auto b = slurp(dir / "b.aupt");
  const auto ea = inspect_checkpoint(dir / "a.aupt");
  const auto eb = inspect_checkpoint(dir / "b.aupt");
  ASSERT_EQ(ea.size(), eb.size());

  // Metadata occupies the bytes before the first tensor record.
  EXPECT_NE(a.substr(0, ea.front().offset), b.substr(0, eb.front().offset));
  std::uint64_t covered = ea.front().offset;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    ASSERT_EQ(ea[i].name, eb[i].name);
    const auto ra = a.substr(ea[i].offset, ea[i].length);
    const auto rb = b.substr(eb[i].offset, eb[i].length);
    if (ea[i].name == kHeadWeight || ea[i].name == kHeadBias) {
      EXPECT_NE(ra, rb);
    } else {
      EXPECT_EQ(ra, rb) << ea[i].name;
    }
    covered += ea[i].length;
  }
  // Everything after the tensor records is the (absent) optimizer flag.
  EXPECT_EQ(a.substr(covered), b.substr(b.size() - (a.size() - covered)));
}

TEST(Checkpoint, InspectListsEveryParameter) {
  const auto dir = oracle::temp_dir("ckpt_inspect");
  const auto net = build_vgg13<float>(1, 17, 6, 16);
  save_checkpoint(net, dir / "a.aupt");
  const auto entries = inspect_checkpoint(dir / "a.aupt");
  ASSERT_EQ(entries.size(), net.named_parameters().size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    EXPECT_EQ(entries[i].name, net.named_parameters()[i].name);
    EXPECT_EQ(entries[i].dims, net.named_parameters()[i].tensor.dims());
  }
}
