#include "doctest.h"

#include <filesystem>
#include <string>

#include "cr/checkpoint.hpp"
#include "cr/config.hpp"
#include "cr/error.hpp"
#include "cr/io.hpp"
#include "cr/pipeline.hpp"
#include "cr/rng.hpp"

using namespace cr;

namespace {

struct DirGuard {
    std::filesystem::path path;
    explicit DirGuard(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~DirGuard() { std::filesystem::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
};

TrainedModel sample_model(ComposerKind kind, bool with_head) {
    Rng rng(91);
    TrainedModel m;
    m.image_encoder = make_mlp(8, 6, 4, rng);
    m.text_encoder = make_mlp(8, 6, 4, rng);
    if (with_head) m.attr_head = make_attribute_head(5, 4, rng);
    m.composer = make_composer(kind, 4, rng);
    m.tau1_log = -2.65926003693278;
    m.tau2_log = -1.23456789;
    m.provenance.stages = {"stage1:pairs", "stage3:" + to_string(kind)};
    m.provenance.seeds = {11, 12};
    m.provenance.config_digests = {"abc123", "def456"};
    m.provenance.pretrained = {kTagImageEncoder, kTagTextEncoder, kTagTau1};
    return m;
}

}  // namespace

TEST_CASE("checkpoint round-trips bit for bit") {
    const DirGuard dir("cr_test_ckpt");
    Checkpoint ckpt;
    Rng rng(17);
    Matrix W(3, 5);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 5; ++j) W(i, j) = rng.normal();
    Vector b(3);
    b << 0.1 + 0.2, -0.0, 1e-308;
    ckpt.add_matrix("enc.W", W);
    ckpt.add_vector("enc.b", b);
    ckpt.add_scalar("tau_log", -2.65926003693278);

    write_checkpoint(dir.file("m.ckpt"), ckpt);
    const Checkpoint loaded = read_checkpoint(dir.file("m.ckpt"));
    CHECK(loaded.get_matrix("enc.W") == W);
    CHECK(loaded.get_vector("enc.b") == b);
    CHECK(loaded.get_scalar("tau_log") == -2.65926003693278);
    CHECK(loaded.find("missing") == nullptr);
    CHECK_THROWS_AS(loaded.get_scalar("missing"), ValidationError);
    // Scalars and matrices are not interchangeable.
    CHECK_THROWS_AS(loaded.get_scalar("enc.W"), ShapeError);
    CHECK_THROWS_AS(loaded.get_matrix("tau_log"), ShapeError);

    write_checkpoint(dir.file("n.ckpt"), loaded);
    CHECK(read_file(dir.file("n.ckpt")) == read_file(dir.file("m.ckpt")));
}

TEST_CASE("checkpoint rejects corrupt bytes") {
    const DirGuard dir("cr_test_ckpt_bad");
    Checkpoint ckpt;
    ckpt.add_scalar("x", 1.5);
    write_checkpoint(dir.file("m.ckpt"), ckpt);
    std::string bytes = read_file(dir.file("m.ckpt"));
    write_file_atomic(dir.file("bad.ckpt"), "XXXXXXXX" + bytes.substr(8));
    CHECK_THROWS_AS(read_checkpoint(dir.file("bad.ckpt")), ParseError);
    write_file_atomic(dir.file("short.ckpt"), bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(read_checkpoint(dir.file("short.ckpt")), ParseError);
}

TEST_CASE("config documents parse and serialize canonically") {
    const std::string text =
        "# training setup\n"
        "\n"
        "iterations = 200\n"
        "lr =   0.001\n"
        "composer= mean\n";
    const Config cfg = Config::parse(text, "inline");
    CHECK(cfg.get_int("iterations") == 200);
    CHECK(cfg.get_real("lr") == 0.001);
    CHECK(cfg.get_string("composer") == "mean");
    CHECK(cfg.get_int_or("batch_size", 32) == 32);
    CHECK(cfg.has("lr"));
    CHECK(!cfg.has("batch_size"));

    // Canonical form: comments and spacing normalize away, then stay fixed.
    const std::string canon = cfg.serialize();
    CHECK(canon == "iterations = 200\nlr = 0.001\ncomposer = mean\n");
    CHECK(Config::parse(canon, "inline2").serialize() == canon);
}

TEST_CASE("config digest tracks content") {
    const Config a = Config::parse("x = 1\ny = 2\n", "a");
    const Config b = Config::parse("x = 1\n# comment\n\ny =    2\n", "b");
    const Config c = Config::parse("x = 1\ny = 3\n", "c");
    CHECK(a.digest() == b.digest());
    CHECK(a.digest() != c.digest());
    CHECK(a.digest().size() == 16);
}

TEST_CASE("config rejects malformed documents and duplicate keys") {
    CHECK_THROWS_AS(Config::parse("novalue\n", "bad"), ConfigError);
    CHECK_THROWS_AS(Config::parse("= 3\n", "bad"), ConfigError);
    CHECK_THROWS_AS(Config::parse("x = 1\nx = 2\n", "bad"), ConfigError);
    const Config cfg = Config::parse("lr = fast\n", "bad");
    CHECK_THROWS_AS(cfg.get_real("lr"), ParseError);
    CHECK_THROWS_AS(cfg.get_int("lr"), ParseError);
    CHECK_THROWS_AS(cfg.get_string("missing"), ConfigError);
    CHECK_THROWS_AS(Config::parse("flag = maybe\n", "bad").get_bool_or("flag", true),
                    ConfigError);
}

TEST_CASE("unknown keys are rejected fail-closed") {
    const Config cfg = Config::parse("iterations = 5\ntypo_key = 1\n", "run");
    const std::string_view allowed[] = {"iterations", "seed"};
    CHECK_THROWS_WITH_AS(cfg.require_known_keys(allowed), doctest::Contains("typo_key"),
                         ConfigError);
    const Config ok = Config::parse("iterations = 5\n", "run");
    ok.require_known_keys(allowed);
}

TEST_CASE("config files round-trip on disk") {
    const DirGuard dir("cr_test_config");
    Config cfg = Config::parse("alpha = 1\nbeta = two\n", "mem");
    cfg.set("gamma", "3.5");
    cfg.save(dir.file("a.cfg"));
    const Config loaded = Config::load(dir.file("a.cfg"));
    CHECK(loaded.get_real("gamma") == 3.5);
    loaded.save(dir.file("b.cfg"));
    CHECK(read_file(dir.file("a.cfg")) == read_file(dir.file("b.cfg")));
}

TEST_CASE("model files survive save, load, save for every composer") {
    for (const ComposerKind kind :
         {ComposerKind::image_only, ComposerKind::text_only, ComposerKind::mean,
          ComposerKind::concat_mlp, ComposerKind::residual_gating, ComposerKind::adaptive}) {
        const DirGuard dir("cr_test_model_" + to_string(kind));
        const TrainedModel model = sample_model(kind, kind != ComposerKind::text_only);
        save_model(dir.file("m"), model);
        const TrainedModel loaded = load_model(dir.file("m"));
        CHECK(loaded.composer.kind == kind);
        CHECK(loaded.tau1_log == model.tau1_log);
        CHECK(loaded.tau2_log == model.tau2_log);
        CHECK(loaded.provenance.stages == model.provenance.stages);
        CHECK(loaded.provenance.seeds == model.provenance.seeds);
        CHECK(loaded.provenance.config_digests == model.provenance.config_digests);
        CHECK(loaded.provenance.pretrained == model.provenance.pretrained);
        CHECK(loaded.attr_head.has_value() == model.attr_head.has_value());
        CHECK(loaded.image_encoder.layers[0].W == model.image_encoder.layers[0].W);
        CHECK(loaded.image_encoder.layers[0].act == Activation::relu);

        save_model(dir.file("n"), loaded);
        CHECK(read_file(dir.file("n.ckpt")) == read_file(dir.file("m.ckpt")));
        CHECK(read_file(dir.file("n.meta")) == read_file(dir.file("m.meta")));
    }
}

TEST_CASE("model loading fails closed on missing or inconsistent files") {
    const DirGuard dir("cr_test_model_bad");
    const TrainedModel model = sample_model(ComposerKind::mean, true);
    save_model(dir.file("m"), model);
    CHECK_THROWS_AS(load_model(dir.file("nonexistent")), IoError);

    // A meta file with an unknown key must be rejected, not ignored.
    std::string meta = read_file(dir.file("m.meta"));
    write_file_atomic(dir.file("m.meta"), meta + "surprise = 1\n");
    CHECK_THROWS_AS(load_model(dir.file("m")), ConfigError);
}
