#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wsaflow/config.hpp"

using namespace wsaflow;

TEST_CASE("defaults parse and carry the documented values") {
    auto cfg = parse_config_text(default_config_text());
    CHECK(cfg.scene.num_points == 512);
    CHECK(cfg.train.epochs == 200);
    CHECK(cfg.train.lr == doctest::Approx(0.001));
    CHECK(cfg.train.lr_decay == doctest::Approx(0.7));
    CHECK(cfg.train.lr_decay_period == 20);
    CHECK(cfg.train.beta1 == doctest::Approx(0.9));
    CHECK(cfg.train.beta2 == doctest::Approx(0.99));
    CHECK(cfg.train.weight_decay == doctest::Approx(0.0001));
    CHECK(cfg.train.loss.gamma == std::vector<double>{0.02, 0.04, 0.08, 0.16, 0.16});
    CHECK(cfg.train.model.levels() == 5);
}

TEST_CASE("unknown keys and sections are rejected with line numbers") {
    CHECK_THROWS_WITH_AS(parse_config_text("[scene]\nnum_pointz = 5\n"),
                         doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[scenery]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("num_points = 5\n"), ConfigError);   // no section
    CHECK_THROWS_AS(parse_config_text("[scene]\nnum_points: 5\n"), ConfigError);
}

TEST_CASE("values are type checked") {
    CHECK_THROWS_AS(parse_config_text("[scene]\nnum_points = twelve\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[scene]\nnum_points = 12.5x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[scene]\ntarget_resample = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[loss]\ngamma = 0.1,,0.2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[model]\npreset = huge\n"), ConfigError);
}

TEST_CASE("comments, blank lines, and overrides") {
    auto cfg = parse_config_text(
        "# comment\n"
        "[scene]\n"
        "num_points = 64   # trailing comment\n"
        "\n"
        "seed = 9\n"
        "[loss]\n"
        "gamma = 0.5, 0.25\n");
    CHECK(cfg.scene.num_points == 64);
    CHECK(cfg.scene.seed == 9);
    CHECK(cfg.train.loss.gamma == std::vector<double>{0.5, 0.25});
}

TEST_CASE("model preset applies before other model keys regardless of order") {
    auto cfg = parse_config_text(
        "[model]\n"
        "use_dd = false\n"
        "k_up = 5\n"
        "preset = tiny\n");
    CHECK(cfg.train.model.levels() == 2);   // tiny
    CHECK(cfg.train.model.use_dd == false); // override survives the preset line
    CHECK(cfg.train.model.k_up == 5);
}
