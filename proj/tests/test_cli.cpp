#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string cli_bin() {
    const char* env = std::getenv("TDP_CLI_BIN");
    return env != nullptr ? env : "";
}

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "tdp_cli_out.txt";
    const std::string cmd = cli_bin() + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream is(out);
    r.output.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("tdp_cli_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int count_substr(const std::string& hay, const std::string& needle) {
    int n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

}  // namespace

TEST_CASE("cli binary is wired through the environment") { REQUIRE(!cli_bin().empty()); }

TEST_CASE("--help exits zero for the app and every subcommand") {
    CHECK(run_cli("--help").exit_code == 0);
    for (const char* sub : {"gen-data", "cluster", "train", "plan", "eval", "compare", "plot"})
        CHECK(run_cli(std::string(sub) + " --help").exit_code == 0);
}

TEST_CASE("invalid flags exit 2 and write nothing") {
    TempDir dir;
    const RunResult r = run_cli("gen-data --out " + dir.file("d.bin") + " --difficulty 3.0");
    CHECK(r.exit_code == 2);
    CHECK(!fs::exists(dir.file("d.bin")));
    CHECK(run_cli("definitely-not-a-subcommand").exit_code == 2);
}

TEST_CASE("gen-data --count 0 writes a valid empty dataset") {
    TempDir dir;
    const RunResult r = run_cli("gen-data --out " + dir.file("empty.bin") + " --count 0");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir.file("empty.bin")));
}

TEST_CASE("gen-data is byte-identical across runs with equal seeds") {
    TempDir dir;
    CHECK(run_cli("gen-data --out " + dir.file("a.bin") + " --count 40 --seed 7").exit_code == 0);
    CHECK(run_cli("gen-data --out " + dir.file("b.bin") + " --count 40 --seed 7").exit_code == 0);
    CHECK(slurp(dir.file("a.bin")) == slurp(dir.file("b.bin")));
    CHECK(run_cli("gen-data --out " + dir.file("c.bin") + " --count 40 --seed 8").exit_code == 0);
    CHECK(slurp(dir.file("a.bin")) != slurp(dir.file("c.bin")));
}

TEST_CASE("gen-data at difficulty 0.7 reports zero generation failures") {
    TempDir dir;
    const RunResult r = run_cli("gen-data --out " + dir.file("hard.bin") +
                                " --count 1000 --difficulty 0.7 --seed 3");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("1000 scenes") != std::string::npos);
    CHECK(r.output.find("0 generation failures") != std::string::npos);
}

TEST_CASE("cluster rejects k above the dataset size with exit 2") {
    TempDir dir;
    REQUIRE(run_cli("gen-data --out " + dir.file("d.bin") + " --count 5 --seed 1").exit_code ==
            0);
    const RunResult r = run_cli("cluster --dataset " + dir.file("d.bin") + " --k 10 --out " +
                                dir.file("a.txt"));
    CHECK(r.exit_code == 2);
    CHECK(!fs::exists(dir.file("a.txt")));
}

TEST_CASE("pipeline smoke: gen-data, cluster, train, plan, eval, compare, plot") {
    TempDir dir;
    const std::string data = dir.file("data.bin");
    const std::string anchors = dir.file("anchors.txt");
    const std::string ckpt = dir.file("model.ckpt");
    const std::string planfile = dir.file("plan.txt");

    REQUIRE(run_cli("gen-data --out " + data + " --count 10 --seed 5 --difficulty 0.4")
                .exit_code == 0);
    REQUIRE(run_cli("cluster --dataset " + data + " --k 5 --seed 1 --out " + anchors)
                .exit_code == 0);
    REQUIRE(run_cli("train --dataset " + data + " --anchors " + anchors + " --out " + ckpt +
                    " --epochs 2 --seed 2 --metrics " + dir.file("metrics.txt"))
                .exit_code == 0);
    CHECK(fs::exists(dir.file("metrics.txt")));

    const RunResult planned =
        run_cli("plan --checkpoint " + ckpt + " --dataset " + data +
                " --index 1 --n-infer 10 --steps 2 --seed 3 --out " + planfile);
    CHECK(planned.exit_code == 0);
    CHECK(fs::exists(planfile));

    const RunResult scored =
        run_cli("eval --dataset " + data + " --index 1 --plan " + planfile + " --k 5");
    CHECK(scored.exit_code == 0);
    CHECK(count_substr(scored.output, "\n") >= 6);  // header + 5 rows

    const std::string report = dir.file("report.txt");
    const RunResult compared =
        run_cli("compare --dataset " + data + " --paradigms truncated,extrapolated "
                "--ckpt-truncated " + ckpt + " --n-infer 5 --out " + report);
    CHECK(compared.exit_code == 0);
    std::string rows = slurp(report);
    CHECK(count_substr(rows, "\n") == 3);  // header comment + exactly two rows
    CHECK(rows.find("truncated") != std::string::npos);
    CHECK(rows.find("extrapolated") != std::string::npos);

    // plot with candidates: one polyline per candidate, deterministic bytes
    const std::string svg1 = dir.file("scene1.svg");
    const std::string svg2 = dir.file("scene2.svg");
    REQUIRE(run_cli("plot --dataset " + data + " --index 1 --plan " + planfile + " --out " +
                    svg1).exit_code == 0);
    REQUIRE(run_cli("plot --dataset " + data + " --index 1 --plan " + planfile + " --out " +
                    svg2).exit_code == 0);
    const std::string svg = slurp(svg1);
    CHECK(svg == slurp(svg2));
    CHECK(count_substr(svg, "<polyline") == 10);

    // scene-only plot still succeeds
    const std::string bare = dir.file("bare.svg");
    REQUIRE(run_cli("plot --dataset " + data + " --index 0 --out " + bare).exit_code == 0);
    CHECK(count_substr(slurp(bare), "<polyline") == 0);

    // missing checkpoint for a requested paradigm
    CHECK(run_cli("compare --dataset " + data + " --paradigms truncated,vanilla "
                  "--ckpt-truncated " + ckpt)
              .exit_code == 2);
}

TEST_CASE("config file supplies defaults, flags take precedence") {
    TempDir dir;
    const std::string cfg = dir.file("run.cfg");
    {
        std::ofstream os(cfg);
        os << "[gen-data]\ncount = 3\nseed = 9\n";
    }
    const std::string out = dir.file("cfg_data.bin");
    CHECK(run_cli("--config " + cfg + " gen-data --out " + out).exit_code == 0);

    // the same generation via explicit flags matches
    const std::string ref = dir.file("ref_data.bin");
    CHECK(run_cli("gen-data --out " + ref + " --count 3 --seed 9").exit_code == 0);
    CHECK(slurp(out) == slurp(ref));

    // a flag overrides the file value
    const std::string over = dir.file("over_data.bin");
    CHECK(run_cli("--config " + cfg + " gen-data --out " + over + " --count 1").exit_code == 0);
    CHECK(slurp(over) != slurp(ref));
}
