#include "doctest.h"
#include "helpers.hpp"

#include "figret/error.hpp"
#include "figret/image.hpp"
#include "figret/random.hpp"

using namespace figret;

TEST_CASE("pgm round trip is exact for 8-bit values") {
  Rng rng(3);
  Image img(13, 7);
  for (auto& p : img.pixels) p = static_cast<float>(rng.below(256)) / 255.0f;
  const std::string bytes = encode_pgm(img);
  CHECK(bytes.rfind("P5\n13 7\n255\n", 0) == 0);
  CHECK(decode_pgm(bytes) == img);
  CHECK(encode_pgm(decode_pgm(bytes)) == bytes);
}

TEST_CASE("pgm header comments and lower maxval") {
  std::string bytes = "P5\n# made by hand\n2 1\n# another\n3\n";
  bytes += std::string{'\x00', '\x03'};
  const Image img = decode_pgm(bytes);
  CHECK(img.width == 2);
  CHECK(img.pixels[0] == 0.0f);
  CHECK(img.pixels[1] == 1.0f);
}

TEST_CASE("malformed pgm is a format error") {
  CHECK_THROWS_AS(decode_pgm("P6\n1 1\n255\n\x01"), FormatError);
  CHECK_THROWS_AS(decode_pgm("P5\n2 2\n255\n\x01"), FormatError);
  CHECK_THROWS_AS(decode_pgm("P5\n1 1\n65535\n\x01\x01"), FormatError);
  CHECK_THROWS_AS(decode_pgm("P5\nx 1\n255\n\x01"), FormatError);
  CHECK_THROWS_AS(decode_pgm(""), FormatError);
}

TEST_CASE("pgm file io") {
  testing::TempDir dir("img");
  Image img(4, 4, 0.5f);
  quantize_to_8bit(img);
  write_pgm(dir / "a.pgm", img);
  CHECK(read_pgm(dir / "a.pgm") == img);
  CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), IoError);
}

TEST_CASE("area resize averages whole blocks") {
  Image img(4, 2);
  const float v[] = {0, 1, 0.5f, 0.5f, 1, 0, 0.25f, 0.75f};
  std::copy(std::begin(v), std::end(v), img.pixels.begin());
  const Image out = resize_area(img, 2, 1);
  CHECK(out.pixels[0] == doctest::Approx(0.5));
  CHECK(out.pixels[1] == doctest::Approx(0.5));
  CHECK(resize_area(img, 4, 2) == img);
  const Image up = resize_area(Image(3, 3, 0.2f), 7, 5);
  for (float p : up.pixels) CHECK(p == doctest::Approx(0.2f));
}

TEST_CASE("crop bounds") {
  Image img(5, 5, 1.0f);
  img.at(3, 2) = 0.0f;
  const Image c = crop(img, 2, 1, 3, 3);
  CHECK(c.at(1, 1) == 0.0f);
  CHECK_THROWS_AS(crop(img, 3, 3, 3, 3), ParameterError);
}

TEST_CASE("validate rejects out-of-range pixels") {
  Image img(2, 2);
  img.pixels[0] = 1.5f;
  CHECK_THROWS_AS(img.validate(), ParameterError);
  CHECK_THROWS_AS(Image(0, 3), ParameterError);
}
