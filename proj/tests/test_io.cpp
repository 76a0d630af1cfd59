#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "fgr/appearance.hpp"
#include "fgr/io.hpp"

using namespace fgr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fgr_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static inline int counter = 0;
};

std::vector<FerRecord> fer_fixture() {
  std::vector<FerRecord> records;
  SeededRng rng(1);
  for (int i = 0; i < 3; ++i) {
    FerRecord rec;
    rec.image = Tensorf(Shape{48, 48});
    if (i > 0)
      for (long long p = 0; p < rec.image.size(); ++p)
        rec.image[p] = float(rng.below(256));
    rec.emotion = i * 2;
    rec.usage = i == 0   ? FerUsage::Training
                : i == 1 ? FerUsage::PublicTest
                         : FerUsage::PrivateTest;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("crc32 matches the standard check value") {
  const char* msg = "123456789";
  CHECK(crc32(reinterpret_cast<const std::uint8_t*>(msg), 9) == 0xCBF43926u);
}

TEST_CASE("fer csv: zero row parses to a zero image") {
  TempDir dir;
  auto records = fer_fixture();
  write_fer_csv(records, dir.file("fer.csv"));
  auto parsed = parse_fer_csv(dir.file("fer.csv"));
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[0].emotion == 0);
  CHECK(parsed[0].usage == FerUsage::Training);
  for (long long p = 0; p < parsed[0].image.size(); ++p)
    CHECK(parsed[0].image[p] == 0.0f);
  CHECK(parsed[1].usage == FerUsage::PublicTest);
  CHECK(parsed[2].usage == FerUsage::PrivateTest);
}

TEST_CASE("fer csv round-trips byte-identically") {
  TempDir dir;
  write_fer_csv(fer_fixture(), dir.file("a.csv"));
  auto parsed = parse_fer_csv(dir.file("a.csv"));
  write_fer_csv(parsed, dir.file("b.csv"));
  CHECK(read_text_file(dir.file("a.csv")) == read_text_file(dir.file("b.csv")));
}

TEST_CASE("fer csv rejects malformed rows with the line number") {
  TempDir dir;
  std::string csv = "emotion,pixels,Usage\n0,";
  for (int i = 0; i < 2303; ++i) csv += (i ? " 0" : "0");
  csv += ",Training\n";
  write_text_file(dir.file("bad.csv"), csv);
  try {
    parse_fer_csv(dir.file("bad.csv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  write_text_file(dir.file("badlabel.csv"),
                  "emotion,pixels,Usage\n9,0,Training\n");
  CHECK_THROWS_AS(parse_fer_csv(dir.file("badlabel.csv")), ParseError);
  write_text_file(dir.file("badhdr.csv"), "foo,bar\n");
  CHECK_THROWS_AS(parse_fer_csv(dir.file("badhdr.csv")), ParseError);
}

TEST_CASE("manifest write/read is the identity on a mixed fixture") {
  TempDir dir;
  std::vector<ManifestRow> rows(3);
  rows[0].image = "faces/a.pgm";
  rows[0].eyes = FaceAnnotation{30.5f, 20.25f, 17.0f, 20.0f};
  rows[0].emotion = 3;
  rows[0].age = 16;
  rows[1].image = "faces/b.pgm";
  rows[1].gender = 1;
  rows[1].ethnicity = 4;
  rows[1].glasses = 0;
  rows[1].beard = 2;
  rows[1].mustache = 1;
  rows[2].image = "faces/c.pgm";
  rows[2].target = std::vector<float>{0.5f, -1.25f, 2.0f, 12.5f, -3.0f};

  write_manifest(rows, dir.file("m.tsv"));
  auto parsed = read_manifest(dir.file("m.tsv"));
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[0].image == rows[0].image);
  CHECK(parsed[0].eyes->left_x == 30.5f);
  CHECK(parsed[0].eyes->right_y == 20.0f);
  CHECK(*parsed[0].emotion == 3);
  CHECK(*parsed[0].age == 16);
  CHECK(!parsed[0].gender.has_value());
  CHECK(*parsed[1].beard == 2);
  CHECK(!parsed[1].eyes.has_value());
  REQUIRE(parsed[2].target.has_value());
  CHECK(parsed[2].target->size() == 5);
  CHECK((*parsed[2].target)[1] == -1.25f);

  // writing the parse reproduces the file byte-identically
  write_manifest(parsed, dir.file("m2.tsv"));
  CHECK(read_text_file(dir.file("m.tsv")) == read_text_file(dir.file("m2.tsv")));
}

TEST_CASE("manifest range and schema violations carry locations") {
  TempDir dir;
  write_text_file(dir.file("age.tsv"), "image\tage\nfaces/x.pgm\t17\n");
  try {
    read_manifest(dir.file("age.tsv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("age") != std::string::npos);
  }

  write_text_file(dir.file("unknown.tsv"), "image\tfoo\nx.pgm\t1\n");
  try {
    read_manifest(dir.file("unknown.tsv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("column 2") != std::string::npos);
    CHECK(msg.find("foo") != std::string::npos);
  }

  write_text_file(dir.file("eyes.tsv"),
                  "image\teye_left_x\teye_left_y\teye_right_x\teye_right_y\n"
                  "x.pgm\t1.0\t2.0\t-\t-\n");
  CHECK_THROWS_AS(read_manifest(dir.file("eyes.tsv")), ParseError);

  // a row missing eye landmarks parses fine; alignment failures belong
  // downstream
  write_text_file(dir.file("noeyes.tsv"), "image\temotion\nx.pgm\t4\n");
  auto rows = read_manifest(dir.file("noeyes.tsv"));
  CHECK(!rows[0].eyes.has_value());
}

TEST_CASE("model save/load round-trips weights bitwise and evals identically") {
  TempDir dir;
  std::vector<LayerSpec> specs = {ConvSpec{3, 3, 3, 1}, ReluSpec{},
                                  LcnSpec{3, 1e-4f}, MaxPoolSpec{2, 2},
                                  FullyConnectedSpec{8}, ReluSpec{},
                                  DropoutSpec{0.1f}, OutputSoftmaxSpec{4}};
  auto net = init_network<float>(specs, Shape{1, 10, 10}, 91);
  // make momentum non-zero to verify it is not persisted
  for (long long i = 0; i < net.vel_weights[0].size(); ++i)
    net.vel_weights[0][i] = 1.0f;
  save_model(net, dir.file("net.fgr"));
  auto loaded = load_model(dir.file("net.fgr"));

  REQUIRE(loaded.num_layers() == net.num_layers());
  CHECK(loaded.input_shape == net.input_shape);
  for (int l = 0; l < net.num_layers(); ++l) {
    REQUIRE(loaded.weights[l].shape() == net.weights[l].shape());
    for (long long i = 0; i < net.weights[l].size(); ++i)
      CHECK(loaded.weights[l][i] == net.weights[l][i]);
    for (long long i = 0; i < net.biases[l].size(); ++i)
      CHECK(loaded.biases[l][i] == net.biases[l][i]);
    for (long long i = 0; i < loaded.vel_weights[l].size(); ++i)
      CHECK(loaded.vel_weights[l][i] == 0.0f);
  }

  SeededRng rng(5);
  Tensorf batch = rng_uniform(rng, 0.0, 1.0, Shape{2, 1, 10, 10});
  net.mode = Mode::Eval;
  auto a = network_forward(net, batch);
  auto b = network_forward(loaded, batch);
  for (long long i = 0; i < a.output.size(); ++i)
    CHECK(a.output[i] == b.output[i]);

  // saving the loaded net reproduces the file byte-for-byte
  save_model(loaded, dir.file("net2.fgr"));
  CHECK(read_text_file(dir.file("net.fgr")) ==
        read_text_file(dir.file("net2.fgr")));
}

TEST_CASE("model loader failure modes are distinct") {
  TempDir dir;
  auto net = init_network<float>({ConvSpec{2, 3, 3, 1}, OutputSoftmaxSpec{2}},
                                 Shape{1, 6, 6}, 3);
  save_model(net, dir.file("ok.fgr"));
  std::string bytes = read_text_file(dir.file("ok.fgr"));

  // truncation: checksum error, not a crash
  write_text_file(dir.file("trunc.fgr"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_model(dir.file("trunc.fgr")), ChecksumError);

  // flipped payload byte: checksum error
  std::string corrupted = bytes;
  corrupted[10] = char(corrupted[10] ^ 0x40);
  write_text_file(dir.file("corrupt.fgr"), corrupted);
  CHECK_THROWS_AS(load_model(dir.file("corrupt.fgr")), ChecksumError);

  // wrong magic: format error even with a repaired checksum
  std::string badmagic = bytes.substr(0, bytes.size() - 4);
  badmagic[0] = 'X';
  write_text_file(dir.file("badmagic.fgr"), badmagic);
  CHECK_THROWS_AS(load_model(dir.file("badmagic.fgr")), FormatError);

  // unsupported version with a valid checksum: version error
  std::string version0 = bytes.substr(0, bytes.size() - 4);
  version0[4] = 0;
  version0[5] = 0;
  const std::uint32_t crc = crc32(
      reinterpret_cast<const std::uint8_t*>(version0.data()), version0.size());
  for (int i = 0; i < 4; ++i)
    version0 += char((crc >> (8 * i)) & 0xFF);
  write_text_file(dir.file("v0.fgr"), version0);
  try {
    load_model(dir.file("v0.fgr"));
    FAIL("expected VersionError");
  } catch (const VersionError& e) {
    CHECK(std::string(e.what()).find("supported") != std::string::npos);
  }
}

TEST_CASE("pgm round-trip preserves a gradient image exactly") {
  TempDir dir;
  Tensorf img(Shape{32, 20});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 20; ++x) img.at(y, x) = float((y * 20 + x) % 256);
  write_pgm(img, dir.file("g.pgm"));
  auto back = read_pgm(dir.file("g.pgm"));
  REQUIRE(back.shape() == img.shape());
  for (long long i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);

  // write-read-write is byte-stable
  write_pgm(back, dir.file("g2.pgm"));
  CHECK(read_text_file(dir.file("g.pgm")) == read_text_file(dir.file("g2.pgm")));
}

TEST_CASE("pgm rejects wrong magic and maxval") {
  TempDir dir;
  write_text_file(dir.file("p2.pgm"), "P2\n2 2\n255\n0 0 0 0\n");
  CHECK_THROWS_AS(read_pgm(dir.file("p2.pgm")), FormatError);
  write_text_file(dir.file("max.pgm"),
                  std::string("P5\n2 2\n128\n") + std::string(4, '\0'));
  CHECK_THROWS_AS(read_pgm(dir.file("max.pgm")), FormatError);
}

TEST_CASE("pixel stats sidecar round-trips bitwise") {
  TempDir dir;
  SeededRng rng(17);
  PixelStats stats{rng_uniform(rng, -1.0, 1.0, Shape{6, 6}),
                   rng_uniform(rng, 0.5, 2.0, Shape{6, 6}), "train-set-a"};
  save_pixel_stats(stats, dir.file("s.fst"));
  auto back = load_pixel_stats(dir.file("s.fst"));
  CHECK(back.source == "train-set-a");
  for (long long i = 0; i < stats.mean.size(); ++i) {
    CHECK(back.mean[i] == stats.mean[i]);
    CHECK(back.std[i] == stats.std[i]);
  }
  // bad magic is a format error
  write_text_file(dir.file("bad.fst"), "XXXX????");
  CHECK_THROWS_AS(load_pixel_stats(dir.file("bad.fst")), FormatError);
}

TEST_CASE("appearance model round-trips") {
  TempDir dir;
  SeededRng rng(19);
  std::vector<Tensorf> imgs;
  for (int i = 0; i < 4; ++i)
    imgs.push_back(rng_uniform(rng, 0.0, 255.0, Shape{8, 8}));
  auto model = fit_pca(imgs, 0.99);
  save_appearance_model(model, dir.file("m.fam"));
  auto back = load_appearance_model(dir.file("m.fam"));
  CHECK(back.k == model.k);
  CHECK(back.image_size == model.image_size);
  for (long long i = 0; i < model.mean_face.size(); ++i)
    CHECK(back.mean_face[i] == model.mean_face[i]);
  for (long long i = 0; i < model.components.size(); ++i)
    CHECK(back.components[i] == model.components[i]);
  for (int i = 0; i < model.k; ++i)
    CHECK(back.component_stds[i] == model.component_stds[i]);
}

TEST_CASE("train log csv format") {
  TempDir dir;
  TrainLog log;
  log.best_epoch = 1;
  log.rows = {{0, 1.5, 0.4, 0.0025}, {1, 1.0, 0.3, 0.002}};
  write_train_log_csv(log, dir.file("log.csv"), {"stack: Conv -> FC"});
  const std::string text = read_text_file(dir.file("log.csv"));
  CHECK(text.find("# stack: Conv -> FC\n") == 0);
  CHECK(text.find("# best_epoch: 1\n") != std::string::npos);
  CHECK(text.find("epoch,train_loss,valid_criterion,lr\n") != std::string::npos);
  CHECK(text.find("0,1.5,0.4,0.0025\n") != std::string::npos);
}

}  // TEST_SUITE
