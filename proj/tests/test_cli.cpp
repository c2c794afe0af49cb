// End-to-end checks through the wseg binary itself.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "wseg/bboxlabels.hpp"
#include "wseg/data.hpp"

using namespace wseg;
namespace fs = std::filesystem;

namespace {

const std::string kCli = WSEG_CLI_PATH;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    std::string cmd = kCli + " " + args + " >/dev/null 2>/dev/null";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string run_stdout(const std::string& args, const fs::path& dir) {
    fs::path out_file = dir / "stdout.txt";
    std::string cmd = kCli + " " + args + " >" + out_file.string() + " 2>/dev/null";
    if (std::system(cmd.c_str()) != 0) return "";
    std::ifstream in(out_file);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool trees_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), a));
    }
    size_t b_count = 0;
    for (const auto& entry : fs::recursive_directory_iterator(b)) {
        if (entry.is_regular_file()) ++b_count;
    }
    if (b_count != rel.size()) return false;
    for (const fs::path& r : rel) {
        if (!fs::exists(b / r)) return false;
        if (slurp(a / r) != slurp(b / r)) return false;
    }
    return true;
}

std::string gen_args(const std::string& out, int seed) {
    return "gen-data --out " + out + " --seed " + std::to_string(seed) +
           " --num-images 8 --height 20 --width 20 --classes 3";
}

}  // namespace

TEST_CASE("cli: gen-data is byte-for-byte reproducible") {
    TempDir dir("wseg_cli_gen");
    REQUIRE(run(gen_args((dir.path / "a").string(), 7)) == 0);
    REQUIRE(run(gen_args((dir.path / "b").string(), 7)) == 0);
    CHECK(trees_identical(dir.path / "a", dir.path / "b"));
    REQUIRE(run(gen_args((dir.path / "c").string(), 8)) == 0);
    CHECK_FALSE(trees_identical(dir.path / "a", dir.path / "c"));
}

TEST_CASE("cli: em-adapt training on image-level data emits a parseable CSV") {
    TempDir dir("wseg_cli_train");
    REQUIRE(run(gen_args((dir.path / "ds").string(), 11)) == 0);
    int rc = run("train --data " + (dir.path / "ds" / "manifest_weak.txt").string() +
                 " --out " + (dir.path / "run").string() +
                 " --weak-mode em-adapt --steps 8 --batch-size 2 --seed 1");
    REQUIRE(rc == 0);
    CHECK(fs::exists(dir.path / "run" / "checkpoint.wseg"));

    std::ifstream csv(dir.path / "run" / "metrics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "step,loss,miou,lr");
    int rows = 0;
    std::string line;
    while (std::getline(csv, line)) {
        ++rows;
        int step;
        double loss, lr;
        CHECK(std::sscanf(line.c_str(), "%d,%lf,%*[^,],%lf", &step, &loss, &lr) >= 2);
    }
    CHECK(rows == 8);
}

TEST_CASE("cli: eval scores ground truth against itself as 1.0000") {
    TempDir dir("wseg_cli_eval");
    REQUIRE(run(gen_args((dir.path / "ds").string(), 13)) == 0);
    // use the gt maps themselves as predictions
    fs::create_directories(dir.path / "preds");
    auto ds = read_manifest((dir.path / "ds" / "manifest_strong.txt").string());
    for (const Sample& s : ds) {
        fs::copy_file(dir.path / "ds" / "gt" / (s.id + ".pgm"), dir.path / "preds" / (s.id + ".pgm"));
    }
    std::string table = run_stdout("eval --gt " + (dir.path / "ds" / "manifest_strong.txt").string() +
                                       " --pred " + (dir.path / "preds").string(),
                                   dir.path);
    CHECK(table.find("mean   1.0000") != std::string::npos);
}

TEST_CASE("cli: gen-labels produces a trainable strong dataset") {
    TempDir dir("wseg_cli_glab");
    REQUIRE(run(gen_args((dir.path / "ds").string(), 17)) == 0);
    int rc = run("gen-labels --data " + (dir.path / "ds" / "manifest_boxes.txt").string() +
                 " --method bbox-rect --out " + (dir.path / "rect").string());
    REQUIRE(rc == 0);
    auto derived = read_manifest((dir.path / "rect" / "manifest.txt").string());
    auto boxes = read_manifest((dir.path / "ds" / "manifest_boxes.txt").string());
    REQUIRE(derived.size() == boxes.size());
    for (size_t i = 0; i < derived.size(); ++i) {
        CHECK(derived[i].kind() == AnnotationKind::Strong);
        CHECK(derived[i].strong() ==
              bbox_rect(boxes[i].boxes(), boxes[i].image.height, boxes[i].image.width));
    }
}

TEST_CASE("cli: estep-debug dumps scores, biases and the map") {
    TempDir dir("wseg_cli_dbg");
    REQUIRE(run(gen_args((dir.path / "ds").string(), 19)) == 0);
    int rc = run("estep-debug --data " + (dir.path / "ds" / "manifest_weak.txt").string() +
                 " --mode em-adapt --out " + (dir.path / "dbg").string());
    REQUIRE(rc == 0);
    CHECK(fs::exists(dir.path / "dbg" / "scores.txt"));
    CHECK(fs::exists(dir.path / "dbg" / "biases.txt"));
    CHECK(fs::exists(dir.path / "dbg" / "estep.pgm"));
}

TEST_CASE("cli: flags override the config file") {
    TempDir dir("wseg_cli_cfg");
    std::ofstream cfg(dir.path / "run.cfg");
    cfg << "seed = 5\ngen.num_images = 4\ngen.height = 20\ngen.width = 20\n";
    cfg.close();
    // flag --num-images should beat the file's 4
    REQUIRE(run("gen-data --config " + (dir.path / "run.cfg").string() + " --out " +
                (dir.path / "out").string() + " --num-images 2") == 0);
    auto ds = read_manifest((dir.path / "out" / "manifest_strong.txt").string());
    CHECK(ds.size() == 2);
}

TEST_CASE("cli: exit codes distinguish config and data errors") {
    TempDir dir("wseg_cli_codes");
    CHECK(run("train --data /nonexistent/manifest.txt --out " + (dir.path / "x").string()) == 2);
    CHECK(run("train --out " + (dir.path / "x").string()) == 1);  // missing --data
    std::ofstream cfg(dir.path / "bad.cfg");
    cfg << "not.a.key = 1\n";
    cfg.close();
    CHECK(run("gen-data --config " + (dir.path / "bad.cfg").string() + " --out " +
              (dir.path / "y").string()) == 1);
    CHECK(run("definitely-not-a-command") == 1);
}
