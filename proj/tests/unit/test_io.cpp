#include <gtest/gtest.h>

#include <fstream>

#include "roicodec/io/image.hpp"
#include "temp_dir.hpp"

using namespace roicodec;
using namespace roicodec::io;
using roicodec::testing::TempDir;

namespace {

Image pattern(std::size_t w, std::size_t h, std::size_t c) {
  Image img{w, h, c, {}};
  for (std::size_t i = 0; i < w * h * c; ++i) img.pixels.push_back(static_cast<std::uint8_t>((i * 37 + 11) % 256));
  return img;
}

}  // namespace

TEST(ImageIo, RoundTripsAllFormats) {
  TempDir dir("io");
  for (auto [name, channels] : {std::pair<const char*, std::size_t>{"a.png", 3}, {"b.png", 1}, {"c.ppm", 3},
                                {"d.pgm", 1}}) {
    auto img = pattern(13, 7, channels);
    write_image(dir / name, img);
    auto back = read_image(dir / name);
    EXPECT_EQ(back.width, 13u);
    EXPECT_EQ(back.height, 7u);
    EXPECT_EQ(back.channels, channels);
    EXPECT_EQ(back.pixels, img.pixels) << name;
  }
}

TEST(ImageIo, SixteenBitPgmIsScaled) {
  TempDir dir("io16");
  {
    std::ofstream f(dir / "x.pgm", std::ios::binary);
    f << "P5\n# comment\n2 1\n65535\n";
    const unsigned char raw[] = {0xff, 0xff, 0x80, 0x00};
    f.write(reinterpret_cast<const char*>(raw), 4);
  }
  auto img = read_image(dir / "x.pgm");
  EXPECT_EQ(img.pixels[0], 255);
  EXPECT_EQ(img.pixels[1], 128);
}

TEST(ImageIo, ErrorsNameThePath) {
  TempDir dir("ioerr");
  {
    std::ofstream(dir / "junk.png") << "garbage";
    std::ofstream(dir / "short.ppm") << "P6\n4 4\n255\nabc";
  }
  for (const char* name : {"junk.png", "short.ppm", "missing.png"}) {
    try {
      read_image(dir / name);
      ADD_FAILURE() << name;
    } catch (const IoError& e) {
      EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(write_image(dir / "x.bmp", pattern(2, 2, 3)), IoError);
  EXPECT_THROW(write_image(dir / "x.pgm", pattern(2, 2, 3)), IoError);
}

TEST(ImageIo, TensorConversions) {
  auto gray = pattern(4, 3, 1);
  auto t = image_to_tensor<double>(gray);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 3, 4}));
  EXPECT_DOUBLE_EQ(t.at({0, 2, 1, 2}), gray.at(1, 2, 0) / 255.0);
  auto back = tensor_to_image(t);
  EXPECT_EQ(back.channels, 3u);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(back.at(y, x, 1), gray.at(y, x, 0));

  Image mask{2, 1, 1, {255, 128}};
  auto m = mask_to_tensor<float>(mask);
  EXPECT_EQ(m.data()[0], 1.0f);
  EXPECT_NEAR(m.data()[1], 0.502f, 1e-3);
  EXPECT_THROW(mask_to_tensor<float>(Image{1, 1, 3, {1, 2, 3}}), ValidationError);
  EXPECT_NO_THROW(mask_to_tensor<float>(Image{1, 1, 3, {9, 9, 9}}));
}
