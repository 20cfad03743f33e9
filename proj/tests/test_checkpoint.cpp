#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "cndm/checkpoint.hpp"
#include "cndm/config.hpp"

using namespace cndm;

namespace {

Checkpoint sample_checkpoint() {
  TrainConfig cfg;
  cfg.state_size = 5;
  cfg.hidden_size = 7;
  cfg.seed = 123456789012345ull;
  Checkpoint ck;
  ck.params = init_model(cfg.model_shape(), cfg.ring(), cfg.seed);
  ck.config = to_key_values(cfg);
  ck.config_hash = config_fingerprint(cfg);
  ck.norm.control_divisors = {100, 100, 130.5, 129, 250, 251, 260, 6000, 184.2, 354};
  ck.seed = cfg.seed;
  ck.epoch = 17;
  ck.metrics = {{"val_rmse_K", 1.0 / 3.0}, {"loss_total", 2e-5}};
  return ck;
}

Error error_of(const std::string& bytes, const ModelShape* shape = nullptr) {
  try {
    deserialize_checkpoint(bytes, shape);
  } catch (const Error& e) {
    return e;
  }
  return Error(ErrorCategory::io, "no error");
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint ck = sample_checkpoint();
  const Checkpoint back = deserialize_checkpoint(serialize_checkpoint(ck));
  EXPECT_EQ(flatten(back.params), flatten(ck.params));
  EXPECT_EQ(back.params.shape.state, 5u);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  EXPECT_EQ(back.norm.control_divisors, ck.norm.control_divisors);
  EXPECT_EQ(back.norm.temperature_divisor, 100.0);
  EXPECT_EQ(back.seed, ck.seed);
  EXPECT_EQ(back.epoch, 17u);
  EXPECT_EQ(back.metrics, ck.metrics);
  EXPECT_EQ(config_fingerprint(checkpoint_config(back)), ck.config_hash);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cndm_test_checkpoint.cndm";
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(ck, path.string());
  const Checkpoint back = load_checkpoint(path.string());
  EXPECT_EQ(flatten(back.params), flatten(ck.params));
  std::filesystem::remove(path);
  EXPECT_EQ(error_of("").category(), ErrorCategory::checkpoint);
  try {
    load_checkpoint(path.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::io);
  }
}

TEST(Checkpoint, TruncationAndCorruptionAreDetected) {
  const std::string bytes = serialize_checkpoint(sample_checkpoint());
  EXPECT_EQ(error_of(bytes.substr(0, bytes.size() - 8)).category(), ErrorCategory::checkpoint);
  EXPECT_EQ(error_of(bytes.substr(0, bytes.size() / 4)).category(), ErrorCategory::checkpoint);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  const Error e = error_of(flipped);
  EXPECT_EQ(e.category(), ErrorCategory::checkpoint);
  EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(error_of(bad_magic).category(), ErrorCategory::checkpoint);
  std::string bad_count = bytes;
  const auto pos = bad_count.find("tensor=readout ");
  bad_count.insert(pos + 15, "x");
  EXPECT_EQ(error_of(bad_count).category(), ErrorCategory::checkpoint);
}

TEST(Checkpoint, ShapeMismatchNamesTheField) {
  const std::string bytes = serialize_checkpoint(sample_checkpoint());
  ModelShape want = sample_checkpoint().params.shape;
  want.state = 16;
  const Error e = error_of(bytes, &want);
  EXPECT_EQ(e.category(), ErrorCategory::shape);
  EXPECT_NE(std::string(e.what()).find("shape.state"), std::string::npos);
  want.state = 5;
  EXPECT_NO_THROW(deserialize_checkpoint(bytes, &want));
}

TEST(Checkpoint, VersionMismatchIsRejected) {
  std::string bytes = serialize_checkpoint(sample_checkpoint());
  bytes.replace(bytes.find("schema_version=1"), 16, "schema_version=2");
  const Error e = error_of(bytes);
  EXPECT_EQ(e.category(), ErrorCategory::checkpoint);
  EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
}
