#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hsemis/hstn.hpp"
#include "hsemis/rng.hpp"

#include "test_util.hpp"

using namespace hsemis;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "hsemis_hstn_test";
    fs::create_directories(dir);
    return dir;
}
} // namespace

TEST_CASE("hstn round trip is bit-exact for f32 payloads") {
    Rng rng(1);
    const fs::path path = temp_dir() / "roundtrip.hstn";
    for (int trial = 0; trial < 10; ++trial) {
        Tensor t = testutil::random_tensor({1 + rng.next_int(4), 1 + rng.next_int(5)}, rng);
        // quantize to f32 first so the round trip is exact by construction
        std::vector<double> q(t.values().size());
        for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<float>(t.values()[i]);
        Tensor tq(t.shape(), q);
        write_hstn(path, tq);
        Tensor back = read_hstn(path);
        CHECK(back.shape() == tq.shape());
        CHECK(back.values() == tq.values());
    }
}

TEST_CASE("hstn rank-0 scalar") {
    const fs::path path = temp_dir() / "scalar.hstn";
    write_hstn(path, Tensor::scalar(2.5));
    Tensor back = read_hstn(path);
    CHECK(back.rank() == 0);
    CHECK(back.item() == 2.5);
    CHECK(fs::file_size(path) == 4 + 4 + 4); // magic + rank + one f32
}

TEST_CASE("hstn bad magic names the offending bytes") {
    const fs::path path = temp_dir() / "bad.hstn";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE" << std::string(8, '\0');
    }
    try {
        read_hstn(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    }
}

TEST_CASE("hstn truncation and dim overflow are rejected") {
    const fs::path path = temp_dir() / "trunc.hstn";
    write_hstn(path, Tensor({2, 2}, {1, 2, 3, 4}));
    // chop the payload
    fs::resize_file(path, fs::file_size(path) - 4);
    CHECK_THROWS_AS(read_hstn(path), DataError);

    const fs::path big = temp_dir() / "big.hstn";
    {
        std::ofstream os(big, std::ios::binary);
        os << "HSTN";
        const std::uint32_t rank = 2;
        const std::uint32_t dims[2] = {0xffffffffu, 0xffffffffu};
        os.write(reinterpret_cast<const char*>(&rank), 4);
        os.write(reinterpret_cast<const char*>(dims), 8);
    }
    CHECK_THROWS_AS(read_hstn(big), DataError);
}

TEST_CASE("atomic write leaves no temp file behind") {
    const fs::path path = temp_dir() / "atomic.hstn";
    write_hstn(path, Tensor({3}, {1, 2, 3}));
    CHECK(fs::exists(path));
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_CASE("checkpoint save/load restores values and checks shapes") {
    const fs::path dir = temp_dir() / "ckpt";
    Rng rng(2);
    Tensor a = testutil::random_tensor({3, 2}, rng);
    Tensor b = testutil::random_tensor({4}, rng);
    save_checkpoint(dir, {{"a", a}, {"b", b}}, {{"note", "x"}});

    Tensor a2 = Tensor::zeros({3, 2});
    Tensor b2 = Tensor::zeros({4});
    load_checkpoint(dir, {{"a", a2}, {"b", b2}});
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        CHECK(a2.values()[i] == doctest::Approx(a.values()[i]).epsilon(1e-7));
    }
    Tensor wrong = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(load_checkpoint(dir, {{"a", wrong}}), DataError);
    const auto meta = read_checkpoint_meta(dir);
    REQUIRE(meta.size() == 1);
    CHECK(meta[0].first == "note");
}
