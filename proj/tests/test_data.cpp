#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "oracles.hpp"
#include "ucl/checkpoint.hpp"
#include "ucl/config.hpp"
#include "ucl/data.hpp"
#include "ucl/serialize.hpp"

using namespace ucl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.decay_start = 1;
    cfg.crop_size = 16;
    cfg.num_patches = 8;
    cfg.nce_dim = 8;
    cfg.generator_base_channels = 4;
    cfg.n_residual_blocks = 1;
    cfg.discriminator_base_channels = 4;
    cfg.vgg_width_mult = 0.0625;
    cfg.save_every = 1;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_CASE("scan_unpaired: sorted lists, non-image files skipped") {
    auto root = fresh_dir("ucl_scan_test");
    fs::create_directories(root / "hazy");
    fs::create_directories(root / "clean");
    Rng rng(71);
    for (int i = 0; i < 3; ++i)
        save_image_png(oracle::random_image(16, 16, rng),
                       (root / "hazy" / ("h" + std::to_string(i) + ".png")).string());
    for (int i = 0; i < 5; ++i)
        save_image_png(oracle::random_image(16, 16, rng),
                       (root / "clean" / ("c" + std::to_string(i) + ".png")).string());
    std::ofstream(root / "hazy" / "notes.txt") << "not an image";

    auto ds = scan_unpaired((root / "hazy").string(), (root / "clean").string());
    CHECK(ds.hazy_paths.size() == 3);
    CHECK(ds.clean_paths.size() == 5);

    auto again = scan_unpaired((root / "hazy").string(), (root / "clean").string());
    CHECK(ds.hazy_paths == again.hazy_paths);  // deterministic ordering
    CHECK(std::is_sorted(ds.clean_paths.begin(), ds.clean_paths.end()));

    fs::remove_all(root / "clean");
    fs::create_directories(root / "clean");
    CHECK_THROWS_AS(scan_unpaired((root / "hazy").string(), (root / "clean").string()), InputError);
    fs::remove_all(root);
}

TEST_CASE("load_image: undecodable file names the path") {
    auto root = fresh_dir("ucl_decode_test");
    std::ofstream(root / "fake.png") << "this is not a png";
    try {
        load_image((root / "fake.png").string());
        FAIL("expected InputError");
    } catch (const InputError& ex) {
        CHECK(std::string(ex.what()).find("fake.png") != std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("png round trip: 8-bit endpoints map exactly") {
    auto root = fresh_dir("ucl_png_test");
    Tensor t({3, 8, 8});
    t.at3(0, 0, 0) = 1.0;  // 255 -> 1.0
    // everything else 0 -> 0.0
    save_image_png(ImageTensor(t, {0.0, 1.0}), (root / "img.png").string());
    auto loaded = load_image((root / "img.png").string());
    CHECK(loaded.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(loaded.at(1, 0, 0) == doctest::Approx(0.0));
    CHECK(loaded.at(2, 7, 7) == doctest::Approx(0.0));
    fs::remove_all(root);
}

TEST_CASE("load_image: 16-bit PNG normalized by bit depth") {
    auto root = fresh_dir("ucl_16bit_test");
    cv::Mat img16(8, 8, CV_16UC3, cv::Scalar(0, 0, 0));
    img16.at<cv::Vec3w>(0, 0) = {65535, 0, 32768};  // BGR
    cv::imwrite((root / "deep.png").string(), img16);
    auto loaded = load_image((root / "deep.png").string());
    CHECK(loaded.at(2, 0, 0) == doctest::Approx(1.0));            // blue channel
    CHECK(loaded.at(1, 0, 0) == doctest::Approx(0.0));            // green
    CHECK(loaded.at(0, 0, 0) == doctest::Approx(32768.0 / 65535));  // red
    fs::remove_all(root);
}

TEST_CASE("preprocess: crop size, range endpoints, eval determinism") {
    Rng rng(72);
    auto big = oracle::random_image(64, 96, rng);
    big.chw().at3(0, 32, 48) = 1.0;
    AugmentFlags aug;

    Rng draw(73);
    auto out = preprocess(big, 32, aug, draw);
    CHECK(out.height() == 32);
    CHECK(out.width() == 32);
    CHECK(out.range().lo == -1.0);
    CHECK(out.chw().min() >= -1.0);
    CHECK(out.chw().max() <= 1.0);

    // value mapping: 255 (1.0) -> 1.0, 0 -> -1.0
    Tensor t({3, 16, 16});
    t.at3(0, 8, 8) = 1.0;
    Rng draw2(74);
    auto mapped = preprocess(ImageTensor(t, {0.0, 1.0}), 16, aug, draw2, /*eval=*/true);
    CHECK(mapped.at(0, 8, 8) == doctest::Approx(1.0));
    CHECK(mapped.at(1, 8, 8) == doctest::Approx(-1.0));

    // eval mode: deterministic center crop, no draws consumed
    Rng draw3(75);
    auto e1 = preprocess(big, 32, aug, draw3, true);
    auto e2 = preprocess(big, 32, aug, draw3, true);
    for (std::int64_t i = 0; i < e1.chw().size(); ++i) CHECK(e1.chw()[i] == e2.chw()[i]);

    // random crops stay within the tight range on repeated draws
    for (int trial = 0; trial < 10; ++trial) {
        auto r = preprocess(big, 32, aug, draw);
        CHECK(r.chw().min() >= -1.0);
        CHECK(r.chw().max() <= 1.0);
    }
}

TEST_CASE("preprocess: small images upscaled with a warning") {
    Rng rng(76);
    auto small = oracle::random_image(12, 20, rng);
    AugmentFlags aug;
    Rng draw(77);
    auto out = preprocess(small, 16, aug, draw, true);
    CHECK(out.height() == 16);
    CHECK(out.width() == 16);
}

TEST_CASE("tensor archive: round trip, truncation, bad version") {
    auto root = fresh_dir("ucl_archive_test");
    const std::string path = (root / "a.bin").string();

    Rng rng(78);
    TensorArchive a;
    a.strings["kind"] = "test";
    a.ints["answer"] = 42;
    for (int i = 0; i < 5; ++i)
        a.tensors["t" + std::to_string(i)] =
            oracle::random_tensor({1 + static_cast<int>(rng.next_below(4)),
                                   1 + static_cast<int>(rng.next_below(6))},
                                  rng);
    a.save(path);
    auto b = TensorArchive::load(path);
    CHECK(b.strings == a.strings);
    CHECK(b.ints == a.ints);
    REQUIRE(b.tensors.size() == a.tensors.size());
    for (const auto& [k, t] : a.tensors) {
        REQUIRE(b.tensors.count(k) == 1);
        const Tensor& u = b.tensors[k];
        REQUIRE(u.shape() == t.shape());
        for (std::int64_t i = 0; i < t.size(); ++i) CHECK(u[i] == t[i]);  // bit-exact
    }

    // truncation -> integrity error
    const auto full_size = fs::file_size(path);
    fs::resize_file(path, full_size - 9);
    CHECK_THROWS_AS(TensorArchive::load(path), IntegrityError);

    // flipped payload byte -> integrity error
    a.save(path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(20);
        char c;
        f.seekg(20);
        f.get(c);
        f.seekp(20);
        f.put(static_cast<char>(c ^ 0x40));
    }
    CHECK_THROWS_AS(TensorArchive::load(path), IntegrityError);
    fs::remove_all(root);
}

TEST_CASE("checkpoint: fresh state round-trips field for field") {
    auto root = fresh_dir("ucl_ckpt_test");
    const std::string path = (root / "state.uclck").string();

    TrainState state(tiny_config());
    state.set_epoch(2);
    state.set_step(7);
    // consume a few draws so the rng state is nontrivial
    for (int i = 0; i < 5; ++i) state.rng().next_u32();
    save_checkpoint(state, path);
    auto loaded = load_checkpoint(path);

    CHECK(loaded->epoch() == 2);
    CHECK(loaded->step() == 7);
    CHECK(loaded->rng().state() == state.rng().state());
    CHECK(loaded->rng().inc() == state.rng().inc());
    CHECK(serialize_train_config(loaded->config()) == serialize_train_config(state.config()));

    auto params_a = state.generator().params();
    auto params_b = loaded->generator().params();
    REQUIRE(params_a.size() == params_b.size());
    for (size_t i = 0; i < params_a.size(); ++i) {
        CHECK(params_a[i].name == params_b[i].name);
        REQUIRE(params_a[i].node->val.size() == params_b[i].node->val.size());
        for (std::int64_t j = 0; j < params_a[i].node->val.size(); ++j)
            CHECK(params_a[i].node->val[j] == params_b[i].node->val[j]);
    }
    auto da = state.discriminator().params();
    auto db = loaded->discriminator().params();
    for (size_t i = 0; i < da.size(); ++i)
        for (std::int64_t j = 0; j < da[i].node->val.size(); ++j)
            CHECK(da[i].node->val[j] == db[i].node->val[j]);

    // a truncated checkpoint reports an integrity error
    fs::resize_file(path, fs::file_size(path) / 2);
    CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);
    fs::remove_all(root);
}

TEST_CASE("checkpoint: property-style round trip over randomized states") {
    auto root = fresh_dir("ucl_ckpt_prop_test");
    Rng meta(79);
    for (int trial = 0; trial < 3; ++trial) {
        TrainConfig cfg = tiny_config();
        cfg.seed = meta.next_u32();
        cfg.n_residual_blocks = 1 + static_cast<int>(meta.next_below(2));
        TrainState state(cfg);
        state.set_step(static_cast<std::int64_t>(meta.next_below(1000)));
        state.set_epoch(1 + static_cast<int>(meta.next_below(2)));
        // randomize a parameter tensor to make sure values travel
        auto params = state.generator().params();
        auto& t = params[meta.next_below(static_cast<std::uint32_t>(params.size()))].node->val;
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = meta.normal();

        const std::string path = (root / ("s" + std::to_string(trial))).string();
        save_checkpoint(state, path);
        auto loaded = load_checkpoint(path);
        CHECK(loaded->step() == state.step());
        CHECK(loaded->epoch() == state.epoch());
        auto pa = state.generator().params();
        auto pb = loaded->generator().params();
        for (size_t i = 0; i < pa.size(); ++i)
            for (std::int64_t j = 0; j < pa[i].node->val.size(); ++j)
                CHECK(pa[i].node->val[j] == pb[i].node->val[j]);
    }
    fs::remove_all(root);
}

TEST_CASE("tensor archive: future version is rejected as such") {
    auto root = fresh_dir("ucl_archive_version_test");
    const std::string path = (root / "v2.bin").string();
    // hand-build an archive with version 2 and a valid hash
    std::vector<char> body;
    const std::uint32_t version = 2;
    body.insert(body.end(), reinterpret_cast<const char*>(&version),
                reinterpret_cast<const char*>(&version) + 4);
    const std::uint64_t zero = 0;
    for (int i = 0; i < 3; ++i)
        body.insert(body.end(), reinterpret_cast<const char*>(&zero),
                    reinterpret_cast<const char*>(&zero) + 8);
    const std::uint64_t hash = fnv1a64(body.data(), body.size());
    std::ofstream out(path, std::ios::binary);
    out.write("UCLTNSR1", 8);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.write(reinterpret_cast<const char*>(&hash), 8);
    out.close();
    CHECK_THROWS_AS(TensorArchive::load(path), VersionError);
    fs::remove_all(root);
}

TEST_CASE("checkpoint: unrelated archives are rejected") {
    auto root = fresh_dir("ucl_ckpt_kind_test");
    const std::string path = (root / "other.bin").string();
    TensorArchive a;
    a.strings["container_kind"] = "vgg_weights";
    a.save(path);
    CHECK_THROWS_AS(load_checkpoint(path), VersionError);
    fs::remove_all(root);
}
