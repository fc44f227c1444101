#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lensless/csv.hpp"
#include "lensless/io.hpp"
#include "lensless/rng.hpp"
#include "lensless/tensor.hpp"

using namespace lensless;
namespace fs = std::filesystem;

static std::string tmpdir() {
    static std::string d = [] {
        std::string p = (fs::temp_directory_path() / "lensless_tensor_io").string();
        fs::create_directories(p);
        return p;
    }();
    return d;
}

TEST_CASE("tensor basics") {
    Tensor t(2, 3, 2, 0.5);
    REQUIRE(t.size() == 12);
    REQUIRE(t(1, 2, 1) == 0.5);
    t(1, 2, 1) = -2.0;
    REQUIRE(t[((size_t)1 * 3 + 2) * 2 + 1] == -2.0);
    REQUIRE(max_abs(t) == 2.0);

    Tensor a(1, 1, 2);
    a[0] = 3;
    a[1] = 4;
    REQUIRE(norm2(a) == 5.0);
    REQUIRE(dot(a, a) == 25.0);

    Tensor c = clamp01(t);
    REQUIRE(c(1, 2, 1) == 0.0);
    REQUIRE(c(0, 0, 0) == 0.5);

    REQUIRE_THROWS_AS(Tensor(0, 3, 1), ConfigError);
}

TEST_CASE("concat_channels layout") {
    Tensor a(2, 2, 1), b(2, 2, 2);
    a(0, 1, 0) = 1;
    b(0, 1, 0) = 2;
    b(0, 1, 1) = 3;
    Tensor c = concat_channels(a, b);
    REQUIRE(c.channels() == 3);
    REQUIRE(c(0, 1, 0) == 1);
    REQUIRE(c(0, 1, 1) == 2);
    REQUIRE(c(0, 1, 2) == 3);
}

TEST_CASE("tensor file round trip float64") {
    SeededRng rng(7);
    Tensor t(5, 4, 3);
    for (size_t k = 0; k < t.size(); ++k) t[k] = rng.normal();
    std::string p = tmpdir() + "/rt64.tf";
    write_tensor(p, t);
    Tensor u = read_tensor(p);
    REQUIRE(u.same_shape(t));
    for (size_t k = 0; k < t.size(); ++k) REQUIRE(u[k] == t[k]);
}

TEST_CASE("tensor file round trip float32 quantizes") {
    Tensor t(2, 2, 1);
    t[0] = 1.0 / 3.0;
    std::string p = tmpdir() + "/rt32.tf";
    write_tensor(p, t, true);
    Tensor u = read_tensor(p);
    REQUIRE(u[0] == Catch::Approx(t[0]).margin(1e-7));
    REQUIRE(u[0] != t[0]);
    REQUIRE((double)(float)t[0] == u[0]);
}

TEST_CASE("tensor file header and errors") {
    std::string p = tmpdir() + "/bad.tf";
    {
        std::ofstream f(p, std::ios::binary);
        f << "NOTMAGIC";
    }
    REQUIRE_THROWS_AS(read_tensor(p), FormatError);
    REQUIRE_THROWS_AS(read_tensor(tmpdir() + "/does_not_exist.tf"), FormatError);

    // truncated payload
    Tensor t(4, 4, 1, 1.0);
    std::string q = tmpdir() + "/trunc.tf";
    write_tensor(q, t);
    fs::resize_file(q, fs::file_size(q) - 8);
    REQUIRE_THROWS_AS(read_tensor(q), FormatError);
}

TEST_CASE("tensor file writes are byte-stable") {
    Tensor t(3, 3, 1);
    for (size_t k = 0; k < t.size(); ++k) t[k] = std::sin((double)k);
    std::string p1 = tmpdir() + "/a.tf", p2 = tmpdir() + "/b.tf";
    write_tensor(p1, t);
    write_tensor(p2, t);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(s1 == s2);
    REQUIRE(s1.substr(0, 8) == "LTENSR01");
}

TEST_CASE("ppm export") {
    Tensor t(2, 2, 1);
    t(0, 0, 0) = 0.0;
    t(0, 1, 0) = 1.0;
    t(1, 0, 0) = 2.0;  // clamps to 255
    t(1, 1, 0) = -1.0; // clamps to 0
    std::string p = tmpdir() + "/img.pgm";
    ppm_export(t, p);
    std::ifstream f(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(f)), {});
    REQUIRE(s.rfind("P5\n2 2\n255\n", 0) == 0);
    std::string pix = s.substr(s.size() - 4);
    REQUIRE((unsigned char)pix[0] == 0);
    REQUIRE((unsigned char)pix[1] == 255);
    REQUIRE((unsigned char)pix[2] == 255);
    REQUIRE((unsigned char)pix[3] == 0);

    Tensor bad(2, 2, 2);
    REQUIRE_THROWS_AS(ppm_export(bad, tmpdir() + "/bad.pgm"), FormatError);
}

TEST_CASE("csv doubles round trip and infinity sentinel") {
    REQUIRE(csv_double(std::numeric_limits<double>::infinity()) == "inf");
    REQUIRE(csv_double(-std::numeric_limits<double>::infinity()) == "-inf");
    double v = 0.1 + 0.2;
    REQUIRE(std::stod(csv_double(v)) == v);
    REQUIRE(csv_double(1.0) == "1");

    std::string p = tmpdir() + "/t.csv";
    {
        CsvWriter w(p);
        w.header({"a", "b"});
        w.row_strings({"1", csv_double(2.5)});
    }
    std::ifstream f(p);
    std::string line;
    std::getline(f, line);
    REQUIRE(line == "a,b");
    std::getline(f, line);
    REQUIRE(line == "1,2.5");
}
