#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "knights/errors.hpp"
#include "knights/io/codecs.hpp"
#include "knights/io/config.hpp"
#include "knights/io/manifest.hpp"
#include "knights/io/reports.hpp"
#include "reference.hpp"

using namespace knights;
using namespace knights::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("knights_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

flow::FlowField random_flow(std::size_t w, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-5.0f, 5.0f);
    flow::FlowField f(w, h);
    for (double& v : f.u1.data()) v = u(rng);
    for (double& v : f.u2.data()) v = u(rng);
    return f;
}

// Little-endian encoding written independently of the codec.
void put_le32(Bytes& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

TEST_CASE("flo round trip is bitwise") {
    TempDir tmp;
    const auto f = random_flow(13, 7, 0);
    write_flo(tmp.path / "a.flo", f);
    CHECK(read_flo(tmp.path / "a.flo") == f);
    const Bytes bytes = read_file(tmp.path / "a.flo");
    CHECK(bytes.size() == 12 + 13 * 7 * 8);
    CHECK(encode_flo(decode_flo(bytes)) == bytes);
}

TEST_CASE("flo header bytes") {
    const Bytes bytes = encode_flo(random_flow(5, 3, 1));
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PIEH");
    float tag;
    std::memcpy(&tag, bytes.data(), 4);
    CHECK(tag == 202021.25f);
    CHECK(bytes[4] == 5);
    CHECK(bytes[8] == 3);

    // Hand-built file with one pixel (1.5, -2).
    Bytes hand{'P', 'I', 'E', 'H'};
    put_le32(hand, 1);
    put_le32(hand, 1);
    float vals[2] = {1.5f, -2.0f};
    std::uint32_t bits;
    for (float v : vals) {
        std::memcpy(&bits, &v, 4);
        put_le32(hand, bits);
    }
    const auto f = decode_flo(hand);
    CHECK(f.u1.at(0, 0) == 1.5);
    CHECK(f.u2.at(0, 0) == -2.0);
}

TEST_CASE("flo format errors carry offsets") {
    Bytes bad = encode_flo(random_flow(2, 2, 2));
    bad[0] = 'X';
    try {
        decode_flo(bad);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
    Bytes short_body = encode_flo(random_flow(2, 2, 2));
    short_body.resize(short_body.size() - 3);
    CHECK_THROWS_AS(decode_flo(short_body), FormatError);
}

TEST_CASE("emb1 round trip is bitwise") {
    TempDir tmp;
    Matrix m = ref::gaussian_matrix(6, 5, 3);
    m(0, 0) = -0.0;
    m(1, 1) = 1e-308;
    write_emb1(tmp.path / "m.emb1", m);
    const Matrix back = read_emb1(tmp.path / "m.emb1");
    CHECK(std::memcmp(back.data().data(), m.data().data(), m.size() * sizeof(double)) == 0);
    CHECK(back.rows() == 6);
    const Bytes bytes = encode_emb1(m);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EMB1");
    CHECK(bytes.size() == 12 + 30 * 8);
}

TEST_CASE("truncated emb1 names both lengths") {
    Bytes bytes = encode_emb1(ref::gaussian_matrix(2, 3, 4));
    bytes.resize(bytes.size() - 8);
    try {
        decode_emb1(bytes);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("60") != std::string::npos);  // expected 12 + 48
        CHECK(msg.find("52") != std::string::npos);  // actual
    }
    CHECK_THROWS_AS(decode_emb1(Bytes{'E', 'M', 'B'}), FormatError);
    CHECK_THROWS_AS(decode_emb1(Bytes{'E', 'M', 'B', '2', 0, 0, 0, 0, 0, 0, 0, 0}), FormatError);
}

TEST_CASE("pgm codec") {
    TempDir tmp;
    flow::GrayImage img(4, 3);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = static_cast<double>(i * 20) / 255.0;
    write_pgm(tmp.path / "a.pgm", img);
    const auto back = read_pgm(tmp.path / "a.pgm");
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-12));

    const std::string header = "P5\n# comment\n2 1\n255\n";
    Bytes raw(header.begin(), header.end());
    raw.push_back(0);
    raw.push_back(255);
    const auto px = decode_pnm(raw);
    CHECK(px.at(0, 0) == 0.0);
    CHECK(px.at(1, 0) == 1.0);

    const std::string ppm = "P6 1 1 255\n";
    Bytes rgb(ppm.begin(), ppm.end());
    rgb.insert(rgb.end(), {255, 0, 0});
    CHECK(decode_pnm(rgb).at(0, 0) == doctest::Approx(0.299).epsilon(1e-12));

    CHECK_THROWS_AS(decode_pnm(Bytes{'P', '2'}), FormatError);
    CHECK_THROWS_AS(read_pgm(tmp.path / "missing.pgm"), IoError);
}

TEST_CASE("prediction csv") {
    const auto plain = parse_csv_preds("a,b,c\n0.2,0.3,0.5\n0.1,0.1,0.8\n");
    CHECK(plain.class_ids == std::vector<std::string>{"a", "b", "c"});
    CHECK(plain.video_ids.empty());
    CHECK(plain.probs.rows() == 2);
    CHECK(plain.probs(1, 2) == 0.8);

    const auto keyed = parse_csv_preds("video_id,x,y\nv1,0.5,0.5\nv2,1,0\n");
    CHECK(keyed.video_ids == std::vector<std::string>{"v1", "v2"});
    CHECK(keyed.probs.cols() == 2);

    CHECK_THROWS_AS(parse_csv_preds("a,b\n0.5\n"), FormatError);
    CHECK_THROWS_AS(parse_csv_preds("a,b\n0.5,zz\n"), FormatError);
}

TEST_CASE("key value config") {
    const auto cfg = KeyValueConfig::parse("# header\nlambda = 0.2\n\nname=run one\n; other comment\n");
    CHECK(cfg.get_double("lambda") == 0.2);
    CHECK(cfg.get("name") == "run one");
    CHECK(cfg.get_or("missing", "x") == "x");
    CHECK(cfg.entries().size() == 2);
    CHECK_THROWS_AS(cfg.get("missing"), ParameterError);
    CHECK_THROWS_AS(KeyValueConfig::parse("a=1\na=2\n"), FormatError);
    CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), FormatError);
    CHECK_THROWS_AS(cfg.get_double("name"), ParameterError);
}

TEST_CASE("schedule and ensemble configs") {
    const auto cfg = KeyValueConfig::parse(
        "grid = 2x4x4\nclass_token = true\nstages = 1\n"
        "stage.0.heads = 2\nstage.0.dim_in = 4\nstage.0.dim_out = 8\n"
        "stage.0.q_stride = 1x2x2\nstage.0.kv_stride = 1x1x1\nstage.0.pooling = strided\n");
    const auto s = schedule_from_config(cfg);
    CHECK(s.grid == mhpa::Grid{2, 4, 4});
    CHECK(s.class_token);
    REQUIRE(s.stages.size() == 1);
    CHECK(s.stages[0].heads == 2);
    CHECK(s.stages[0].q_stride == mhpa::Grid{1, 2, 2});
    CHECK(s.stages[0].pooling == mhpa::PoolingKind::strided);

    const auto e = ensemble_from_config(KeyValueConfig::parse("model.rgb = 2\nmodel.flow = 1\n"));
    REQUIRE(e.size() == 2);
    CHECK(e.members()[0].model_id == "rgb");
    CHECK(e.members()[1].weight == 1.0);
}

TEST_CASE("manifest digests inputs") {
    TempDir tmp;
    const std::string text = "abc";
    write_file(tmp.path / "in.txt", Bytes(text.begin(), text.end()));
    CHECK(sha256_file(tmp.path / "in.txt") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    RunManifest m;
    m.command = "energy";
    m.params = {{"lambda", 0.15}};
    m.inputs = {tmp.path / "in.txt"};
    const auto j = m.to_json();
    CHECK(j["tool"] == "knights");
    CHECK(j["version"] == kToolVersion);
    CHECK(j["inputs"][0]["sha256"] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("reports use round-trip decimals") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    const auto csv = trace_csv({{0, 1.5, 2.0}, {1, 0.25, 1.0}});
    CHECK(csv == "step,loss,grad_norm\n0,1.5,2\n1,0.25,1\n");
}
