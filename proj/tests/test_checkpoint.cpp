#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "dctnet/checkpoint.hpp"
#include "dctnet/png_io.hpp"

using namespace dctnet;

namespace {

ModelConfig tiny() {
  ModelConfig cfg;
  cfg.encoder_widths = {2, 3, 4, 4};
  cfg.decoder_widths = {3, 2, 2};
  cfg.head_hidden = 5;
  cfg.drag_hidden = 3;
  return cfg;
}

CheckpointErrorKind kind_of(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return CheckpointErrorKind::io;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  SegModel<float> m(tiny(), 11);
  m.param("encoder.0.weight").value[0] = -0.0f;
  m.param("encoder.0.weight").value[1] = 1e-42f;  // denormal
  AdamState<float> opt;
  opt.step = 17;
  for (const auto& p : m.parameters()) {
    opt.m.emplace_back(p.size(), 0.25f);
    opt.v.emplace_back(p.size(), 3e-9f);
  }
  const nlohmann::json meta{{"epochs", 3}, {"note", "x"}};
  const std::string bytes = serialize_checkpoint(m, &opt, meta);
  const Checkpoint c = deserialize_checkpoint(bytes);
  EXPECT_EQ(c.model.config(), m.config());
  ASSERT_EQ(c.model.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& a = m.parameters()[i];
    const auto& b = c.model.parameters()[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.dims, b.dims);
    ASSERT_EQ(std::memcmp(a.value.data(), b.value.data(), a.size() * sizeof(float)), 0) << a.name;
  }
  ASSERT_TRUE(c.optimizer);
  EXPECT_EQ(*c.optimizer, opt);
  EXPECT_EQ(c.metadata, meta);
  EXPECT_EQ(serialize_checkpoint(c.model, &*c.optimizer, c.metadata), bytes);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "dctnet_ckpt_test";
  std::filesystem::create_directories(dir);
  const SegModel<float> m(tiny(), 3);
  save_checkpoint((dir / "a.ckpt").string(), m, nullptr, {{"k", 1}});
  const Checkpoint c = load_checkpoint((dir / "a.ckpt").string());
  EXPECT_FALSE(c.optimizer);
  save_checkpoint((dir / "b.ckpt").string(), c.model, nullptr, c.metadata);
  EXPECT_EQ(png::read_file((dir / "a.ckpt").string()), png::read_file((dir / "b.ckpt").string()));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ErrorKinds) {
  const std::string good = serialize_checkpoint(SegModel<float>(tiny(), 1));
  EXPECT_EQ(kind_of(good.substr(0, good.size() - 3)), CheckpointErrorKind::truncated);
  EXPECT_EQ(kind_of(good.substr(0, 20)), CheckpointErrorKind::truncated);
  EXPECT_EQ(kind_of("XY"), CheckpointErrorKind::bad_magic);
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_EQ(kind_of(magic), CheckpointErrorKind::bad_magic);
  std::string version = good;
  version[4] = 9;
  EXPECT_EQ(kind_of(version), CheckpointErrorKind::unsupported_version);
  EXPECT_EQ(kind_of(good + "junk"), CheckpointErrorKind::malformed);
  try {
    load_checkpoint("/nonexistent/dir/model.ckpt");
    ADD_FAILURE();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointErrorKind::io);
  }
}

TEST(Checkpoint, OptimizerStateMustMatchModel) {
  const SegModel<float> m(tiny(), 1);
  AdamState<float> bad;
  bad.step = 1;
  bad.m.emplace_back(3, 0.0f);
  bad.v.emplace_back(3, 0.0f);
  EXPECT_THROW(serialize_checkpoint(m, &bad), InvalidInput);
}
