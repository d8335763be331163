#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include <jpeglib.h>

#include "quantart/adam.hpp"
#include "quantart/checkpoint.hpp"
#include "quantart/dataset.hpp"
#include "quantart/hash.hpp"
#include "support.hpp"

using namespace quantart;
namespace fs = std::filesystem;

namespace {

Image gradient_image(std::size_t w, std::size_t h) {
  Image img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      auto* px = &img.rgb[(y * w + x) * 3];
      px[0] = static_cast<std::uint8_t>(x * 255 / std::max<std::size_t>(1, w - 1));
      px[1] = static_cast<std::uint8_t>(y * 255 / std::max<std::size_t>(1, h - 1));
      px[2] = static_cast<std::uint8_t>((x + y) % 256);
    }
  return img;
}

std::vector<std::uint8_t> encode_jpeg(const Image& img) {
  jpeg_compress_struct c{};
  jpeg_error_mgr err{};
  c.err = jpeg_std_error(&err);
  jpeg_create_compress(&c);
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&c, &buf, &size);
  c.image_width = static_cast<JDIMENSION>(img.width);
  c.image_height = static_cast<JDIMENSION>(img.height);
  c.input_components = 3;
  c.in_color_space = JCS_RGB;
  jpeg_set_defaults(&c);
  jpeg_set_quality(&c, 95, TRUE);
  jpeg_start_compress(&c, TRUE);
  while (c.next_scanline < c.image_height) {
    auto* row = const_cast<JSAMPROW>(&img.rgb[c.next_scanline * img.width * 3]);
    jpeg_write_scanlines(&c, &row, 1);
  }
  jpeg_finish_compress(&c);
  std::vector<std::uint8_t> out(buf, buf + size);
  jpeg_destroy_compress(&c);
  std::free(buf);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// hashing and encoding

TEST(Hash, KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string()), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string s = "123456789";
  EXPECT_EQ(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())), 0xCBF43926u);
  const std::vector<std::uint8_t> foo{'f', 'o', 'o', 'b', 'a', 'r'};
  EXPECT_EQ(base64_encode(foo), "Zm9vYmFy");
  EXPECT_EQ(base64_encode(std::span(foo.data(), 4)), "Zm9vYg==");
  EXPECT_EQ(base64_decode("Zm9v\nYmFy"), foo);
  EXPECT_EQ(base64_decode("Zm9vYg=="), std::vector<std::uint8_t>(foo.begin(), foo.begin() + 4));
  EXPECT_THROW(base64_decode("Zm9"), ValueError);
  EXPECT_THROW(base64_decode("Zm9*"), ValueError);
}

TEST(Hash, Base64RoundTripRandom) {
  Rng rng(1);
  std::uniform_int_distribution<int> byte(0, 255);
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = static_cast<std::uint8_t>(byte(rng));
    EXPECT_EQ(base64_decode(base64_encode(v)), v) << n;
  }
}

// ---------------------------------------------------------------------------
// images

TEST(ImageIo, PngRoundTripIsLossless) {
  const auto img = gradient_image(13, 7);
  const auto png = encode_png(img);
  EXPECT_EQ(decode_image(png), img);
  EXPECT_EQ(encode_png(img), png);
}

TEST(ImageIo, JpegDecodes) {
  const auto img = gradient_image(24, 16);
  const auto out = decode_image(encode_jpeg(img));
  ASSERT_EQ(out.width, 24u);
  ASSERT_EQ(out.height, 16u);
  double err = 0;
  for (std::size_t i = 0; i < img.rgb.size(); ++i) err += std::abs(int(img.rgb[i]) - int(out.rgb[i]));
  EXPECT_LT(err / static_cast<double>(img.rgb.size()), 6.0);
}

TEST(ImageIo, RejectsBadData) {
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_THROW(decode_image(junk), IoError);
  auto png = encode_png(gradient_image(4, 4));
  png.resize(png.size() / 2);
  EXPECT_THROW(decode_image(png), IoError);
  EXPECT_THROW(decode_image(encode_png(gradient_image(4097, 1))), ValueError);
  EXPECT_THROW(read_image("/nonexistent/x.png"), IoError);
  EXPECT_THROW(encode_png(Image{2, 2, {1, 2, 3}}), ShapeError);
}

TEST(ImageIo, ResizeProperties) {
  const auto img = gradient_image(8, 6);
  EXPECT_EQ(resize(img, 8, 6), img);
  Image flat{5, 3, std::vector<std::uint8_t>(45, 77)};
  const auto up = resize(flat, 11, 9), down = resize(flat, 2, 1);
  for (auto v : up.rgb) EXPECT_EQ(v, 77);
  for (auto v : down.rgb) EXPECT_EQ(v, 77);
  // Halving by area averages 2x2 blocks.
  Image checker{2, 2, {0, 0, 0, 200, 200, 200, 100, 100, 100, 60, 60, 60}};
  EXPECT_EQ(resize(checker, 1, 1).rgb, (std::vector<std::uint8_t>{90, 90, 90}));
}

TEST(ImageIo, TensorConversionAndFlip) {
  const auto img = gradient_image(6, 4);
  const auto t = to_tensor<float>({img, img});
  EXPECT_EQ(t.shape(), (Shape{2, 3, 4, 6}));
  for (float v : t.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(to_image(t, 1), img);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_EQ(flip_horizontal(img).rgb[0], img.rgb[(6 - 1) * 3]);
  EXPECT_THROW(to_tensor<float>({img, gradient_image(5, 4)}), ShapeError);
  // Out-of-range values are clamped.
  const auto clamp = to_image(TensorF::full({1, 3, 1, 1}, 5.0f));
  EXPECT_EQ(clamp.rgb, (std::vector<std::uint8_t>{255, 255, 255}));
}

TEST(ImageIo, MosaicPlacesTilesRowMajor) {
  std::vector<Image> tiles;
  for (std::uint8_t k = 0; k < 6; ++k) tiles.push_back(Image{2, 3, std::vector<std::uint8_t>(18, k)});
  const auto m = mosaic(tiles, 2, 3);
  EXPECT_EQ(m.width, 6u);
  EXPECT_EQ(m.height, 6u);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(m.rgb[((r * 3) * 6 + c * 2) * 3], r * 3 + c);
  EXPECT_THROW(mosaic(tiles, 2, 2), ValueError);
}

// ---------------------------------------------------------------------------
// datasets

TEST(Dataset, LoadsSortedSquareImages) {
  qt_test::TempDir dir("dataset");
  write_png(dir / "b.png", gradient_image(20, 10));
  write_png(dir / "a.png", gradient_image(8, 8));
  const auto jpg = encode_jpeg(gradient_image(16, 16));
  write_file(dir / "c.JPG", jpg);
  std::ofstream(dir / "notes.txt") << "skip";
  const auto ds = load_image_dir(dir.path(), 8);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.names, (std::vector<std::string>{"a.png", "b.png", "c.JPG"}));
  for (const auto& im : ds.images) EXPECT_EQ(im.width * 100 + im.height, 808u);
  EXPECT_EQ(ds.images[1], square_resize(gradient_image(20, 10), 8));
}

TEST(Dataset, ErrorsNameThePath) {
  qt_test::TempDir dir("dataset_err");
  auto expect_io = [](const fs::path& p, const std::string& needle) {
    try {
      load_image_dir(p, 8);
      FAIL() << "expected IoError for " << p;
    } catch (const IoError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_io(dir / "missing", "missing");
  expect_io(dir.path(), dir.path().string());
  write_file(dir / "broken.png", {0x89, 'P', 'N', 'G', 0, 0});
  expect_io(dir.path(), "broken.png");
}

TEST(Dataset, SyntheticTexturesAreDeterministicAndDistinct) {
  const auto a = synthetic_textures(Domain::art, 4, 16, 5), b = synthetic_textures(Domain::art, 4, 16, 5);
  const auto c = synthetic_textures(Domain::art, 4, 16, 6), p = synthetic_textures(Domain::photo, 4, 16, 5);
  EXPECT_EQ(a.images, b.images);
  EXPECT_NE(a.images, c.images);
  EXPECT_NE(a.images, p.images);
  EXPECT_EQ(a.images[0].width, 16u);
  EXPECT_THROW(synthetic_textures(Domain::art, 1, 0, 1), ValueError);
}

TEST(Dataset, SamplerCoversEachEpoch) {
  BatchSampler s(10, 4, 3, false);
  std::multiset<std::size_t> seen;
  // Five batches of four cover exactly two epochs.
  for (int i = 0; i < 5; ++i)
    for (auto [idx, flip] : s.next()) {
      seen.insert(idx);
      EXPECT_FALSE(flip);
    }
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 2u);
  EXPECT_EQ(s.epoch(), 1u);
  BatchSampler small(3, 8, 3, true);
  EXPECT_EQ(small.next().size(), 3u);
  BatchSampler x(10, 4, 9, true), y(10, 4, 9, true);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(x.next(), y.next());
  EXPECT_THROW(BatchSampler(0, 1, 0, false), ValueError);
}

// ---------------------------------------------------------------------------
// checkpoints

class Checkpoint : public ::testing::Test {
 protected:
  Checkpoint() : bundle(qt_test::tiny_model_config(), 21) {
    bundle.stage = 1;
    bundle.stage1_hash = parameter_hash(bundle.stage1_params());
    bundle.provenance = {{"seed", 21}};
  }
  ModelBundle<float> bundle;
};

TEST_F(Checkpoint, RoundTripIsByteIdentical) {
  const auto bytes = serialize_bundle(bundle);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "QART");
  auto back = deserialize_bundle<float>(bytes);
  EXPECT_EQ(back.stage, 1);
  EXPECT_EQ(back.stage1_hash, bundle.stage1_hash);
  EXPECT_EQ(back.provenance, bundle.provenance);
  EXPECT_EQ(to_json(back.config), to_json(bundle.config));
  EXPECT_EQ(snapshot(back.all_params()), snapshot(bundle.all_params()));
  EXPECT_EQ(serialize_bundle(back), bytes);
}

TEST_F(Checkpoint, FileRoundTripAndDoublePrecision) {
  qt_test::TempDir dir("ckpt");
  const auto path = dir / "sub" / "m.qart";
  save_checkpoint(bundle, path);
  EXPECT_EQ(read_file(path), serialize_bundle(bundle));
  auto back = load_checkpoint<float>(path);
  EXPECT_EQ(parameter_hash(back.all_params()), parameter_hash(bundle.all_params()));
  // Double bundles store float32 values, so a float bundle reloads them exactly.
  ModelBundle<double> d(qt_test::tiny_model_config(), 22);
  const auto db = serialize_bundle(d);
  auto f = deserialize_bundle<float>(db);
  EXPECT_EQ(parameter_hash(f.all_params()), parameter_hash(d.all_params()));
  EXPECT_THROW(load_checkpoint<float>(dir / "none.qart"), IoError);
}

TEST_F(Checkpoint, CorruptionIsDetected) {
  const auto bytes = serialize_bundle(bundle);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_bundle<float>(bad_magic), IoError);
  for (std::size_t at : {std::size_t{8}, bytes.size() / 2, bytes.size() - 5}) {
    auto flipped = bytes;
    flipped[at] ^= 0x10;
    EXPECT_THROW(deserialize_bundle<float>(flipped), IoError) << at;
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(deserialize_bundle<float>(truncated), IoError);
  EXPECT_THROW(deserialize_bundle<float>(std::vector<std::uint8_t>(6, 0)), IoError);
}

TEST_F(Checkpoint, VersionAndConfigMismatchAreRejected) {
  auto bytes = serialize_bundle(bundle);
  auto reseal = [](std::vector<std::uint8_t> b) {
    b.resize(b.size() - 4);
    const auto c = crc32(b);
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(c >> (8 * i)));
    return b;
  };
  auto v2 = bytes;
  v2[4] = 2;
  EXPECT_THROW(deserialize_bundle<float>(reseal(v2)), IoError);
  // A config that needs more parameters than the file holds.
  auto other = bundle;
  other.config.sga.modules = 2;
  ModelBundle<float> bigger(other.config, 21);
  auto big = serialize_bundle(bigger);
  const std::uint32_t len_small = bytes[7] | bytes[8] << 8 | bytes[9] << 16 | std::uint32_t(bytes[10]) << 24;
  const std::uint32_t len_big = big[7] | big[8] << 8 | big[9] << 16 | std::uint32_t(big[10]) << 24;
  std::vector<std::uint8_t> spliced(big.begin(), big.begin() + 11 + len_big);
  spliced.insert(spliced.end(), bytes.begin() + 11 + len_small, bytes.end());
  try {
    deserialize_bundle<float>(reseal(spliced));
    FAIL() << "expected a parameter mismatch";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// optimizer

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0, 1.0, -2.0};
  AdamState<double> s;
  adam_step(p, {1.0, -3.0, 1e-3}, s, AdamHyper{0.1});
  EXPECT_NEAR(p[0], -0.1, 1e-6);
  EXPECT_NEAR(p[1], 1.1, 1e-6);
  EXPECT_NEAR(p[2], -2.1, 1e-4);
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<float> p{0.5f, -0.25f};
  AdamState<float> s;
  for (int i = 0; i < 5; ++i) adam_step(p, {0.0f, 0.0f}, s, AdamHyper{0.1});
  EXPECT_EQ(p, (std::vector<float>{0.5f, -0.25f}));
  EXPECT_THROW(adam_step(p, {0.0f}, s, AdamHyper{}), ShapeError);
}

TEST(Adam, MatchesReferenceRecurrence) {
  const AdamHyper h{0.01, 0.8, 0.9, 1e-8};
  std::vector<double> p{1.0};
  AdamState<double> s;
  double m = 0, v = 0, ref = 1.0;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2 * ref - std::sin(t);
    adam_step(p, {2 * p[0] - std::sin(t)}, s, h);
    m = 0.8 * m + 0.2 * g;
    v = 0.9 * v + 0.1 * g * g;
    ref -= 0.01 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.9, t))) + 1e-8);
    EXPECT_NEAR(p[0], ref, 1e-12);
  }
}

TEST(Adam, OptimizerStepsEveryParameterDeterministically) {
  auto run = [] {
    ModelBundle<float> b(qt_test::tiny_model_config(), 3);
    Rng rng(4);
    const auto x = TensorF::uniform({1, 3, 16, 16}, rng, -1, 1);
    Adam<float> opt(nn::parameters(b.photo.decoder), AdamHyper{1e-2});
    for (int i = 0; i < 3; ++i) opt.step(backward(mean(abs(sub(reconstruct(b.photo, x).x_rec, x)))));
    return parameter_hash(nn::parameters(b.photo.decoder)) + parameter_hash(nn::parameters(b.photo.encoder));
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  ModelBundle<float> fresh(qt_test::tiny_model_config(), 3);
  // Decoder moved, encoder (not in the optimizer) did not.
  EXPECT_NE(a.substr(0, 64), parameter_hash(nn::parameters(fresh.photo.decoder)));
  EXPECT_EQ(a.substr(64), parameter_hash(nn::parameters(fresh.photo.encoder)));
}
