#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>
#include <unistd.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlreg::cli::run;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("nlreg_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& text) const {
        std::ofstream(path / name) << text;
        return (path / name).string();
    }
    std::string out(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string last_line(const fs::path& p) {
    std::istringstream is(slurp(p));
    std::string line, last;
    while (std::getline(is, line))
        if (!line.empty()) last = line;
    return last;
}

}  // namespace

TEST_CASE("usage errors exit with the config code") {
    CHECK(run({}) == nlreg::cli::config_error);
    CHECK(run({"no-such-command"}) == nlreg::cli::config_error);
    CHECK(run({"check-kernel", "--bogus"}) == nlreg::cli::config_error);
}

TEST_CASE("bad configs leave no artifacts") {
    TempDir t;
    SUBCASE("malformed JSON") {
        const auto cfg = t.file("bad.json", "{\"params\": ");
        CHECK(run({"check-kernel", "--config", cfg, "--out", t.out("o")}) == nlreg::cli::config_error);
    }
    SUBCASE("unknown key") {
        const auto cfg = t.file("bad.json", R"({"params": {"alpah": 1.5}})");
        CHECK(run({"check-kernel", "--config", cfg, "--out", t.out("o")}) == nlreg::cli::config_error);
    }
    SUBCASE("wrong type") {
        const auto cfg = t.file("bad.json", R"({"params": {"alpha": "big"}})");
        CHECK(run({"check-kernel", "--config", cfg, "--out", t.out("o")}) == nlreg::cli::config_error);
    }
    SUBCASE("missing file") {
        CHECK(run({"check-kernel", "--config", t.out("none.json"), "--out", t.out("o")}) ==
              nlreg::cli::config_error);
    }
    SUBCASE("out-of-range order") {
        const auto cfg = t.file("bad.json", R"({"params": {"alpha": 2.5}})");
        CHECK(run({"check-kernel", "--config", cfg, "--out", t.out("o")}) == nlreg::cli::parameter_error);
    }
    CHECK_FALSE(fs::exists(t.out("o")));
}

TEST_CASE("accuracy failures write no partial tables") {
    TempDir t;
    const auto cfg = t.file("cos.json", R"({"params": {"alpha": 1.0}, "eval": {"function": "cos"},
                                           "quad": {"r_max": 4}})");
    CHECK(run({"eval-op", "--config", cfg, "--out", t.out("o")}) == nlreg::cli::accuracy_error);
    CHECK_FALSE(fs::exists(fs::path(t.out("o")) / "values.csv"));
}

TEST_CASE("check-kernel reports the class pattern") {
    TempDir t;
    REQUIRE(run({"check-kernel", "--out", t.out("frac")}) == nlreg::cli::ok);
    const fs::path frac = t.out("frac");
    for (const char* f : {"assumptions.csv", "moments.csv", "summary.csv", "manifest.json"})
        CHECK(fs::exists(frac / f));
    CHECK(last_line(frac / "summary.csv") == "1,1,1,1,1");

    const auto cfg = t.file("line.json", R"({"kernel": {"type": "line", "d": 2}})");
    REQUIRE(run({"check-kernel", "--config", cfg, "--out", t.out("line")}) == nlreg::cli::ok);
    CHECK(last_line(fs::path(t.out("line")) / "summary.csv") == "1,1,0,1,0");

    const auto m = nlohmann::json::parse(slurp(frac / "manifest.json"));
    CHECK(m["command"] == "check-kernel");
    CHECK(m["config_hash"].get<std::string>().size() == 16);
    CHECK(m.contains("seed"));
    CHECK(m.contains("threads"));
}

TEST_CASE("seed and tolerance flags override the config") {
    TempDir t;
    const auto cfg = t.file("c.json", R"({"seed": 3, "tol": 0.01})");
    REQUIRE(run({"check-kernel", "--config", cfg, "--seed", "9", "--tol", "0.002", "--out", t.out("o")}) ==
            nlreg::cli::ok);
    const auto m = nlohmann::json::parse(slurp(fs::path(t.out("o")) / "manifest.json"));
    CHECK(m["seed"] == 9);
    CHECK(m["tol"] == doctest::Approx(0.002));
}

TEST_CASE("solve writes a trajectory and identical runs agree byte for byte") {
    TempDir t;
    const auto cfg = t.file("s.json", R"({"solve": {"t1": 0.05, "hx": 0.03125}})");
    REQUIRE(run({"solve", "--config", cfg, "--out", t.out("a")}) == nlreg::cli::ok);
    REQUIRE(run({"solve", "--config", cfg, "--out", t.out("b")}) == nlreg::cli::ok);
    for (const char* f : {"trajectory.bin", "summary.csv", "run.csv", "final.csv"}) {
        const fs::path a = fs::path(t.out("a")) / f, b = fs::path(t.out("b")) / f;
        REQUIRE(fs::exists(a));
        CHECK(slurp(a) == slurp(b));
    }
}
