#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>

#include "test_support.hpp"
#include "umsn/core/fsutil.hpp"
#include "umsn/core/image_io.hpp"
#include "umsn/network/network.hpp"
#include "umsn/synthesis/toy_faces.hpp"
#include "umsn/training/checkpoint.hpp"

using namespace umsn;
using namespace umsn::testsup;

#ifndef UMSN_CLI_PATH
#error "UMSN_CLI_PATH must point at the built binary"
#endif

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args, const TempDir& tmp) {
    const std::string out_file = tmp.sub("cli_stdout.txt");
    const std::string err_file = tmp.sub("cli_stderr.txt");
    const std::string cmd = std::string(UMSN_CLI_PATH) + " " + args + " >" + out_file + " 2>" + err_file;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = std::filesystem::exists(out_file) ? read_file(out_file) : "";
    r.err = std::filesystem::exists(err_file) ? read_file(err_file) : "";
    return r;
}

}  // namespace

TEST_CASE("help text lists every command and the per-command flags with defaults") {
    TempDir tmp("cli_help");
    const auto top = run_cli("--help", tmp);
    CHECK(top.code == 0);
    for (const char* cmd :
         {"synth-kernels", "synth-dataset", "train-snet", "train-stage1", "train-umsn", "deblur", "evaluate"})
        CHECK(top.out.find(cmd) != std::string::npos);

    const auto deblur = run_cli("deblur --help", tmp);
    CHECK(deblur.code == 0);
    for (const char* flag : {"--in", "--masks", "--checkpoint", "--out"})
        CHECK(deblur.out.find(flag) != std::string::npos);

    const auto evaluate = run_cli("evaluate --help", tmp);
    CHECK(evaluate.code == 0);
    for (const char* flag : {"--manifest", "--checkpoint", "--out", "--masks", "--grids", "--extractor-seed"})
        CHECK(evaluate.out.find(flag) != std::string::npos);
    CHECK(evaluate.out.find("manifest") != std::string::npos);  // default value shown

    const auto stage1 = run_cli("train-stage1 --help", tmp);
    CHECK(stage1.out.find("--class") != std::string::npos);
    CHECK(stage1.out.find("--seed") != std::string::npos);
    CHECK(stage1.out.find("--width") != std::string::npos);
}

TEST_CASE("flag errors exit 1 with a single-line diagnostic naming the flag") {
    TempDir tmp("cli_err");
    const auto missing = run_cli("train-stage1 --config nope.json --out " + tmp.sub("o"), tmp);
    CHECK(missing.code == 1);
    CHECK(missing.err.find("--class") != std::string::npos);
    CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') <= 1);

    const auto unknown = run_cli("frobnicate", tmp);
    CHECK(unknown.code == 1);

    const auto badfile = run_cli("synth-dataset --config missing.json --out " + tmp.sub("o2"), tmp);
    CHECK(badfile.code == 1);
    CHECK(!badfile.err.empty());
}

TEST_CASE("deblur with a zero-residual checkpoint is the identity on the PNG bytes") {
    TempDir tmp("cli_deblur");
    // zero-residual deblurring checkpoint
    network::UMSNConfig ncfg;
    ncfg.width_multiplier = 0.125;
    ncfg.seed = 3;
    network::UMSN umsn(ncfg);
    umsn.zero_residual_outputs();
    nn::ParamMap pm;
    umsn.collect_all(pm);
    training::CheckpointMeta meta;
    meta.phase = "umsn";
    meta.width_multiplier = 0.125;
    training::save_checkpoint(tmp.sub("zero.ckpt"), pm, meta);

    const auto face = synthesis::make_toy_face(12, 48, 48);
    save_image_png(tmp.sub("in.png"), face.image);
    save_index_png(tmp.sub("masks.png"), semantics::mask_to_index(semantics::group_labels(face.labels)));

    const auto r = run_cli("deblur --in " + tmp.sub("in.png") + " --masks " + tmp.sub("masks.png") +
                               " --checkpoint " + tmp.sub("zero.ckpt") + " --out " + tmp.sub("out.png"),
                           tmp);
    CHECK(r.code == 0);

    // byte-equal to re-encoding the decoded input
    save_image_png(tmp.sub("reencoded.png"), load_image_png(tmp.sub("in.png")));
    CHECK(read_file(tmp.sub("out.png")) == read_file(tmp.sub("reencoded.png")));
}

TEST_CASE("synth-dataset then evaluate covers every manifest id; reruns are byte-identical") {
    TempDir tmp("cli_roundtrip");
    write_file_atomic(tmp.sub("d.json"), R"({
      "count": 3, "patch_size": 32, "noise_sigma": 0.01, "master_seed": 9, "class_blurred": false,
      "kernels": {"count": 2, "side_min": 13, "side_max": 13, "steps": 32, "inertia": 0.5, "jitter": 0.2},
      "toy": {"count": 2, "size": 48}})");

    const auto synth = run_cli("synth-dataset --config " + tmp.sub("d.json") + " --out " + tmp.sub("da"), tmp);
    CHECK(synth.code == 0);
    const auto synth2 = run_cli("synth-dataset --config " + tmp.sub("d.json") + " --out " + tmp.sub("db"), tmp);
    CHECK(synth2.code == 0);
    CHECK(read_file(tmp.sub("da/manifest.json")) == read_file(tmp.sub("db/manifest.json")));
    CHECK(read_file(tmp.sub("da/blurry/s000001.png")) == read_file(tmp.sub("db/blurry/s000001.png")));

    const auto eval = run_cli("evaluate --manifest " + tmp.sub("da/manifest.json") +
                                  " --checkpoint identity --out " + tmp.sub("report"),
                              tmp);
    CHECK(eval.code == 0);
    const auto doc = nlohmann::json::parse(read_file(tmp.sub("report/report.json")));
    REQUIRE(doc.at("images").size() == 3);
    std::vector<std::string> ids;
    for (const auto& img : doc.at("images")) ids.push_back(img.at("id").get<std::string>());
    CHECK(ids == std::vector<std::string>{"s000000", "s000001", "s000002"});
    CHECK(std::filesystem::exists(tmp.sub("report/report.csv")));

    // partial failure: one missing file -> exit 2, remaining ids still scored
    std::filesystem::remove(tmp.sub("da/blurry/s000001.png"));
    const auto partial = run_cli("evaluate --manifest " + tmp.sub("da/manifest.json") +
                                     " --checkpoint identity --out " + tmp.sub("report2"),
                                 tmp);
    CHECK(partial.code == 2);
    const auto doc2 = nlohmann::json::parse(read_file(tmp.sub("report2/report.json")));
    CHECK(doc2.at("images").size() == 2);
    CHECK(doc2.at("failures").size() == 1);
}

TEST_CASE("synth-kernels writes a seeded bank with an index") {
    TempDir tmp("cli_kernels");
    write_file_atomic(tmp.sub("k.json"),
                      R"({"count": 4, "side_min": 13, "side_max": 17, "master_seed": 5})");
    const auto r = run_cli("synth-kernels --config " + tmp.sub("k.json") + " --out " + tmp.sub("bank"), tmp);
    CHECK(r.code == 0);
    const auto doc = nlohmann::json::parse(read_file(tmp.sub("bank/kernels.json")));
    CHECK(doc.at("kernels").size() == 4);
    for (const auto& k : doc.at("kernels")) {
        const int side = k.at("side").get<int>();
        CHECK(side % 2 == 1);
        CHECK(side >= 13);
        CHECK(side <= 17);
        CHECK(std::filesystem::exists(tmp.sub("bank/" + k.at("path").get<std::string>())));
    }

    // --seed overrides the config seed
    const auto r2 = run_cli("synth-kernels --config " + tmp.sub("k.json") + " --out " + tmp.sub("bank2") +
                                " --seed 5",
                            tmp);
    CHECK(r2.code == 0);
    CHECK(read_file(tmp.sub("bank/kernels.json")).find("\"master_seed\": 5") != std::string::npos);
}
