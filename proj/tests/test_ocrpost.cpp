#include <gtest/gtest.h>

#include "spamdam/ocrpost.hpp"

using namespace spamdam::ocr;

namespace {

GrayImage image_with_dark(std::size_t total, std::size_t dark) {
  GrayImage g{total, 1, std::vector<std::uint8_t>(total, 200)};
  for (std::size_t i = 0; i < dark; ++i) g.pixels[i] = 10;
  return g;
}

WordCell cell(std::string t, std::int64_t left, std::int64_t top, double conf = 95.0,
              std::int64_t w = 20, std::int64_t h = 10) {
  return {std::move(t), left, top, w, h, conf};
}

}  // namespace

TEST(Inversion, Extremes) {
  const auto black = detect_and_invert({4, 2, std::vector<std::uint8_t>(8, 0)});
  EXPECT_TRUE(black.inverted);
  EXPECT_EQ(black.image.pixels, std::vector<std::uint8_t>(8, 255));
  const auto white = detect_and_invert({4, 2, std::vector<std::uint8_t>(8, 255)});
  EXPECT_FALSE(white.inverted);
  EXPECT_EQ(white.image.pixels, std::vector<std::uint8_t>(8, 255));
}

TEST(Inversion, ThresholdIsStrict) {
  EXPECT_FALSE(detect_and_invert(image_with_dark(1000, 700)).inverted);
  EXPECT_TRUE(detect_and_invert(image_with_dark(1000, 701)).inverted);
  // pixel value 30 is not dark, 29 is
  GrayImage g{10, 1, std::vector<std::uint8_t>(10, 30)};
  EXPECT_FALSE(detect_and_invert(g).inverted);
  g.pixels.assign(10, 29);
  EXPECT_TRUE(detect_and_invert(g).inverted);
}

TEST(Inversion, InvolutionOnPixels) {
  GrayImage g{16, 16, {}};
  for (int i = 0; i < 256; ++i) g.pixels.push_back(std::uint8_t(i));
  auto once = g;
  for (auto& p : once.pixels) p = std::uint8_t(255 - p);
  auto twice = once;
  for (auto& p : twice.pixels) p = std::uint8_t(255 - p);
  EXPECT_EQ(twice, g);
  EXPECT_THROW(detect_and_invert({2, 2, {1, 2, 3}}), OcrError);
}

TEST(Merge, GapRule) {
  EXPECT_EQ(merge_cells({cell("a", 0, 0), cell("b", 30, 0)}), (std::vector<std::string>{"a b"}));
  EXPECT_EQ(merge_cells({cell("a", 0, 0), cell("b", 40, 0)}), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(merge_cells({cell("a", 0, 0), cell("b", 35, 0)}), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(merge_cells({cell("a", 0, 0), cell("b", 0, 20)}), (std::vector<std::string>{"a\nb"}));
  EXPECT_EQ(merge_cells({cell("a", 0, 0), cell("b", 0, 30)}), (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(merge_cells({}).empty());
}

TEST(Merge, ReadingOrder) {
  EXPECT_EQ(merge_cells({cell("two", 30, 1), cell("one", 0, 0), cell("three", 0, 20)}),
            (std::vector<std::string>{"one two\nthree"}));
}

TEST(Mask, ConfidenceBoundary) {
  const auto m = mask_low_confidence({cell("lo", 0, 0, 64.9), cell("hi", 0, 0, 65.0)});
  EXPECT_EQ(m[0].text, " ");
  EXPECT_EQ(m[1].text, "hi");
}

TEST(Strip, MetadataLines) {
  const auto r = strip_non_message({"+1 415 555 0100\n10:31 AM", "Your parcel is waiting"});
  EXPECT_EQ(r.spam_text, "Your parcel is waiting");
  EXPECT_EQ(r.removed, (std::vector<std::string>{"+1 415 555 0100", "10:31 AM"}));
  EXPECT_TRUE(is_metadata_line("2024-01-31"));
  EXPECT_TRUE(is_metadata_line("23:59"));
  EXPECT_FALSE(is_metadata_line("call 555 now"));
  EXPECT_FALSE(is_metadata_line("24:00"));
}

TEST(Extract, GoldenFixture) {
  const std::vector<WordCell> cells = {
      cell("+1", 0, 0),     cell("415", 25, 0), cell("555", 50, 0), cell("0100", 75, 0),
      cell("10:31", 0, 20), cell("AM", 25, 20),
      cell("You", 0, 60),   cell("won", 25, 60), cell("a", 50, 60), cell("prize", 75, 60),
      cell("claim", 0, 75), cell("n0w", 25, 75, 40.0),
  };
  GrayImage dark{10, 10, std::vector<std::uint8_t>(100, 5)};
  const auto e = extract(&dark, cells);
  EXPECT_TRUE(e.inverted);
  EXPECT_EQ(e.spam_text, "You won a prize\nclaim  ");
  EXPECT_EQ(e.removed, (std::vector<std::string>{"+1 415 555 0100", "10:31 AM"}));
  EXPECT_EQ(to_json(e).dump(),
            R"({"inverted":true,"removed":["+1 415 555 0100","10:31 AM"],"spam_text":"You won a prize\nclaim  "})");
}

TEST(Extract, AllMaskedIsWhitespace) {
  const auto e = extract(nullptr, {cell("a", 0, 0, 0.0), cell("b", 25, 0, 0.0)});
  EXPECT_EQ(e.spam_text.find_first_not_of(" \n"), std::string::npos);
  EXPECT_FALSE(e.inverted);
}

TEST(Extract, SingleCell) {
  EXPECT_EQ(extract(nullptr, {cell("hello", 3, 4)}).spam_text, "hello");
}

TEST(Config, Defaults) {
  const StrConfig c;
  EXPECT_EQ(c.dark_pixel, 30);
  EXPECT_DOUBLE_EQ(c.dark_ratio, 0.70);
  EXPECT_DOUBLE_EQ(c.merge_factor, 1.5);
  EXPECT_DOUBLE_EQ(c.min_conf, 65.0);
}

TEST(Json, CellsParse) {
  const auto j = nlohmann::json::parse(R"([{"text":"hi","left":1,"top":2,"width":3,"height":4,"conf":70}])");
  const auto cells = cells_from_json(j);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0], (WordCell{"hi", 1, 2, 3, 4, 70.0}));
  EXPECT_THROW(cells_from_json(nlohmann::json::parse(R"([{"text":"hi"}])")), OcrError);
  EXPECT_THROW(cells_from_json(nlohmann::json::parse(R"([{"text":"x","left":0,"top":0,"width":0,"height":4,"conf":70}])")), OcrError);
}
