#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cdgmae/checkpoint.hpp"
#include "cdgmae/errors.hpp"
#include "cdgmae/records.hpp"
#include "cdgmae/tensor_io.hpp"
#include "test_support.hpp"

namespace cdgmae {
namespace {

std::vector<float> flatten(const ModelParams& p) {
  std::vector<float> all;
  p.visit([&](const std::string&, const Tensor& t) { all.insert(all.end(), t.data().begin(), t.data().end()); });
  return all;
}

TEST(Records, FormatAndParseRoundTrip) {
  Record r = {{"step", "3"}, {"loss", format_number(0.0123456789)}, {"id", "a b"}};
  const std::string line = format_record(r);
  EXPECT_EQ(line, "step=3\tloss=0.0123457\tid=a b");
  EXPECT_EQ(parse_record(line), r);
  EXPECT_EQ(record_field(r, "id"), "a b");
  EXPECT_THROW(record_field(r, "missing"), ContractError);
  EXPECT_THROW(parse_record("novalue"), ContractError);
}

TEST(Records, NumberFormatting) {
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(1.5e-4), "0.00015");
  EXPECT_EQ(format_number(123456789.0), "1.23457e+08");
}

TEST(Records, ReadSkipsBlankLines) {
  test::TempDir dir("records");
  write_text_atomic(dir.path() / "r.txt", "a=1\n\nb=2\tc=3\n");
  std::vector<Record> rs = read_records(dir.path() / "r.txt");
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(record_field(rs[1], "c"), "3");
}

TEST(Config, CommentsWhitespaceAndLineNumbers) {
  auto entries = parse_config_text("# header\n  steps = 10  \n\nlr=1e-3 # trailing\n", "cfg");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].key, "steps");
  EXPECT_EQ(entries[0].value, "10");
  EXPECT_EQ(entries[0].line, 2u);
  EXPECT_EQ(entries[1].value, "1e-3");
  try {
    parse_config_text("ok = 1\nbroken line\n", "file.cfg");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("file.cfg:2"), std::string::npos);
  }
}

TEST(Config, StrictValueParsers) {
  EXPECT_EQ(parse_size_value("k", "42"), 42u);
  EXPECT_THROW(parse_size_value("k", "-1"), ContractError);
  EXPECT_THROW(parse_size_value("k", "4x"), ContractError);
  EXPECT_DOUBLE_EQ(parse_double_value("k", "0.25"), 0.25);
  EXPECT_THROW(parse_double_value("k", "0.25abc"), ContractError);
  EXPECT_TRUE(parse_bool_value("k", "true"));
  EXPECT_FALSE(parse_bool_value("k", "0"));
  EXPECT_THROW(parse_bool_value("k", "yes"), ContractError);
}

TEST(ModelConfigText, ItemsRoundTrip) {
  ModelConfig c = ModelConfig::preset("toy");
  c.target_mask = 0.85;
  c.anchor_mask = 1.0 / 3.0;
  c.norm_pix = true;
  ModelConfig back;
  for (const auto& [k, v] : model_config_items(c)) ASSERT_TRUE(apply_model_key(back, k, v)) << k;
  EXPECT_EQ(model_config_items(back), model_config_items(c));
  EXPECT_EQ(back.anchor_mask, c.anchor_mask);
  EXPECT_FALSE(apply_model_key(back, "no_such_key", "1"));
  EXPECT_THROW(apply_model_key(back, "enc_dim", "wide"), ContractError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  test::TempDir dir("ckpt");
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.anchor_mask = 0.5;
  ModelParams p = init_params(cfg, 17);
  save_checkpoint(dir.path() / "c", p, 123);
  Checkpoint back = load_checkpoint(dir.path() / "c");
  EXPECT_EQ(back.step, 123u);
  EXPECT_EQ(model_config_items(back.params.config), model_config_items(cfg));
  EXPECT_EQ(flatten(back.params), flatten(p));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "c" / "manifest.txt"));
}

TEST(Checkpoint, OverwriteReplacesPrevious) {
  test::TempDir dir("ckpt_over");
  ModelConfig cfg = ModelConfig::preset("tiny");
  save_checkpoint(dir.path() / "c", init_params(cfg, 1), 1);
  ModelParams second = init_params(cfg, 2);
  save_checkpoint(dir.path() / "c", second, 2);
  Checkpoint back = load_checkpoint(dir.path() / "c");
  EXPECT_EQ(back.step, 2u);
  EXPECT_EQ(flatten(back.params), flatten(second));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "c.tmp"));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "c.old"));
}

TEST(Checkpoint, CorruptionDetected) {
  test::TempDir dir("ckpt_bad");
  ModelConfig cfg = ModelConfig::preset("tiny");
  save_checkpoint(dir.path() / "c", init_params(cfg, 1), 0);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing"), IoError);
  std::filesystem::remove(dir.path() / "c" / "head.bias.cdgt");
  EXPECT_THROW(load_checkpoint(dir.path() / "c"), IoError);
  write_text_atomic(dir.path() / "c" / "manifest.txt", "something else\n");
  EXPECT_THROW(load_checkpoint(dir.path() / "c"), IoError);
}

TEST(FileIo, AtomicTextWrite) {
  test::TempDir dir("atomic");
  write_text_atomic(dir.path() / "x.txt", "one");
  write_text_atomic(dir.path() / "x.txt", "two");
  EXPECT_EQ(read_text(dir.path() / "x.txt"), "two");
  EXPECT_THROW(read_text(dir.path() / "nope.txt"), IoError);
}

}  // namespace
}  // namespace cdgmae
