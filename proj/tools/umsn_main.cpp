#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "umsn/core/fsutil.hpp"
#include "umsn/core/image_io.hpp"
#include "umsn/eval/harness.hpp"
#include "umsn/synthesis/blur.hpp"
#include "umsn/synthesis/dataset.hpp"
#include "umsn/synthesis/toy_faces.hpp"
#include "umsn/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SeedOverride {
    bool present = false;
    std::uint64_t value = 0;
};

struct WidthOverride {
    bool present = false;
    double value = 1.0;
};

int run_synth_kernels(const std::string& config_path, const std::string& out_dir, const SeedOverride& seed) {
    const json j = json::parse(umsn::read_file(config_path));
    umsn::synthesis::KernelBankConfig cfg;
    cfg.count = j.value("count", cfg.count);
    cfg.side_min = j.value("side_min", cfg.side_min);
    cfg.side_max = j.value("side_max", cfg.side_max);
    cfg.trajectory.steps = j.value("steps", cfg.trajectory.steps);
    cfg.trajectory.inertia = j.value("inertia", cfg.trajectory.inertia);
    cfg.trajectory.jitter = j.value("jitter", cfg.trajectory.jitter);
    std::uint64_t master = j.value("master_seed", std::uint64_t{0});
    if (seed.present) master = seed.value;

    const auto bank = umsn::synthesis::build_kernel_bank(cfg, master, out_dir);
    json index = json::array();
    for (const auto& [kernel, id] : bank)
        index.push_back(json{{"id", id}, {"side", kernel.side}, {"path", "kernels/" + id + ".npy"}});
    umsn::write_file_atomic((fs::path(out_dir) / "kernels.json").string(),
                            json{{"master_seed", master}, {"kernels", index}}.dump(2) + "\n");
    std::cout << "wrote " << bank.size() << " kernels under " << out_dir << "\n";
    return 0;
}

int run_synth_dataset(const std::string& config_path, const std::string& out_dir, const SeedOverride& seed) {
    const std::string text = umsn::read_file(config_path);
    umsn::synthesis::DatasetConfig cfg = umsn::synthesis::dataset_config_from_json_text(text);
    if (seed.present) cfg.master_seed = seed.value;

    const json j = json::parse(text);
    std::string corpus = j.value("corpus", "");
    std::string masks_source = j.value("labels", j.value("masks_source", ""));
    if (j.contains("toy")) {
        const json& t = j.at("toy");
        const std::string toy_dir = (fs::path(out_dir) / "_corpus").string();
        umsn::synthesis::write_toy_corpus(toy_dir, t.value("count", 4), t.value("size", 96), t.value("size", 96),
                                          umsn::mix_seed(cfg.master_seed, 0x70FACE5ULL));
        corpus = (fs::path(toy_dir) / "clean").string();
        masks_source = (fs::path(toy_dir) / "labels").string();
    }
    if (corpus.empty() || masks_source.empty())
        throw std::runtime_error("config needs corpus+labels paths (or a toy section)");

    const auto manifest = umsn::synthesis::build_dataset(corpus, masks_source, cfg, out_dir);
    std::cout << "wrote " << manifest.samples.size() << " samples; manifest " << out_dir << "/manifest.json\n";
    return 0;
}

umsn::training::TrainConfig load_train_config(const std::string& config_path, const std::string& out_dir,
                                              const SeedOverride& seed, const WidthOverride& width) {
    auto cfg = umsn::training::TrainConfig::from_json_text(umsn::read_file(config_path));
    cfg.out_dir = out_dir;
    if (seed.present) cfg.master_seed = seed.value;
    if (width.present) cfg.width_multiplier = width.value;
    return cfg;
}

int run_train(const umsn::training::TrainConfig& cfg) {
    const auto result = umsn::training::train(cfg);
    std::cout << "phase " << cfg.phase << " done: " << result.final_checkpoint;
    if (cfg.phase == "snet" || cfg.phase == "snet_finetune")
        std::cout << " (train F-score " << result.final_f_score << ")";
    else
        std::cout << " (train PSNR " << result.final_train_psnr << " dB, input " << result.input_train_psnr
                  << " dB)";
    std::cout << "\n";
    return 0;
}

int run_deblur(const std::string& in_path, const std::string& masks_arg, const std::string& checkpoint,
               const std::string& out_path) {
    const auto model = umsn::training::DeblurModel::load(checkpoint);
    const umsn::Tensor blurry = umsn::load_image_png(in_path);
    umsn::Tensor result;
    if (masks_arg == "snet") {
        result = model.deblur(blurry, nullptr);
    } else {
        const auto masks = umsn::semantics::mask_from_index(umsn::load_index_png(masks_arg));
        result = model.deblur(blurry, &masks);
    }
    umsn::save_image_png(out_path, result);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int run_evaluate(const std::string& manifest_path, const std::string& checkpoint, const std::string& out_dir,
                 const std::string& masks_arg, bool grids, std::uint64_t extractor_seed,
                 const std::string& extractor_file) {
    const auto manifest = umsn::synthesis::DatasetManifest::load(manifest_path);
    const umsn::losses::FeatureExtractor extractor =
        extractor_file.empty() ? umsn::losses::FeatureExtractor(extractor_seed)
                               : umsn::losses::FeatureExtractor::from_file(extractor_file);

    umsn::eval::DeblurFn fn;
    std::optional<umsn::training::DeblurModel> model;
    if (checkpoint == "identity") {
        fn = [](const umsn::Tensor& blurry, const umsn::semantics::SemanticMaskSet&) { return blurry; };
    } else {
        model = umsn::training::DeblurModel::load(checkpoint);
        const bool use_snet_masks = masks_arg == "snet";
        if (use_snet_masks && !model->snet.has_value())
            throw std::runtime_error("--masks snet requires a checkpoint with a bundled segmentation network");
        fn = [&model, use_snet_masks](const umsn::Tensor& blurry, const umsn::semantics::SemanticMaskSet& masks) {
            return model->deblur(blurry, use_snet_masks ? nullptr : &masks);
        };
    }

    umsn::eval::EvalOptions options;
    options.out_dir = out_dir;
    options.write_grids = grids;
    options.config_digest = umsn::digest_hex(manifest_path + "|" + checkpoint + "|" + masks_arg);
    const auto report = umsn::eval::evaluate_dataset(fn, manifest, extractor, options);

    std::cout << "evaluated " << report.images.size() << " images: mean PSNR " << report.mean_psnr
              << " dB, mean SSIM " << report.mean_ssim << ", mean d_feat " << report.mean_d_feat << "\n";
    for (const auto& f : report.failures) std::cerr << "missing: " << f << "\n";
    return report.partial() ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UMSN face deblurring: synthetic data, three-phase training, deblurring, evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_path, manifest_path, checkpoint, in_path, masks_arg;
    int class_index = 0;
    bool grids = false;
    std::uint64_t extractor_seed = 77;
    std::string extractor_file;
    SeedOverride seed;
    WidthOverride width;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](std::uint64_t v) { seed = {true, v}; }, "Override the config master seed");
    };
    auto add_width = [&](CLI::App* cmd) {
        cmd->add_option_function<double>(
               "--width", [&](double v) { width = {true, v}; }, "Override the width multiplier");
    };

    CLI::App* synth_kernels = app.add_subcommand("synth-kernels", "Generate a seeded blur-kernel bank");
    synth_kernels->add_option("--config", config_path, "Kernel bank config (JSON)")->required();
    synth_kernels->add_option("--out", out_path, "Output directory")->required();
    add_seed(synth_kernels);

    CLI::App* synth_dataset = app.add_subcommand("synth-dataset", "Build a paired clean/blurry dataset");
    synth_dataset->add_option("--config", config_path, "Dataset config (JSON)")->required();
    synth_dataset->add_option("--out", out_path, "Output directory")->required();
    add_seed(synth_dataset);

    CLI::App* train_snet = app.add_subcommand("train-snet", "Train the segmentation network");
    train_snet->add_option("--config", config_path, "Train config (JSON)")->required();
    train_snet->add_option("--out", out_path, "Checkpoint/log directory")->required();
    add_seed(train_snet);
    add_width(train_snet);

    CLI::App* train_stage1 = app.add_subcommand("train-stage1", "Pretrain one class stream");
    train_stage1->add_option("--config", config_path, "Train config (JSON)")->required();
    train_stage1->add_option("--class", class_index, "Class index 1..4")->required();
    train_stage1->add_option("--out", out_path, "Checkpoint/log directory")->required();
    add_seed(train_stage1);
    add_width(train_stage1);

    CLI::App* train_umsn = app.add_subcommand("train-umsn", "Joint deblurring training");
    train_umsn->add_option("--config", config_path, "Train config (JSON)")->required();
    train_umsn->add_option("--out", out_path, "Checkpoint/log directory")->required();
    add_seed(train_umsn);
    add_width(train_umsn);

    CLI::App* deblur = app.add_subcommand("deblur", "Deblur one image with a trained checkpoint");
    deblur->add_option("--in", in_path, "Blurry input PNG")->required();
    deblur->add_option("--masks", masks_arg, "'snet' or a 0-3 indexed mask PNG")->required();
    deblur->add_option("--checkpoint", checkpoint, "Deblurring checkpoint")->required();
    deblur->add_option("--out", out_path, "Output PNG")->required();

    CLI::App* evaluate = app.add_subcommand("evaluate", "Metric report over a dataset manifest");
    evaluate->add_option("--manifest", manifest_path, "Dataset manifest.json")->required();
    evaluate->add_option("--checkpoint", checkpoint, "Deblurring checkpoint, or 'identity'")->required();
    evaluate->add_option("--out", out_path, "Report directory")->required();
    evaluate->add_option("--masks", masks_arg, "Mask source: manifest|snet")
        ->default_str("manifest")
        ->capture_default_str();
    evaluate->add_flag("--grids", grids, "Write blurry|deblurred|truth comparison PNGs");
    evaluate->add_option("--extractor-seed", extractor_seed, "Seed of the substitute feature extractor")
        ->capture_default_str();
    evaluate->add_option("--extractor-file", extractor_file, "Externally supplied extractor weights");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth_kernels->parsed()) return run_synth_kernels(config_path, out_path, seed);
        if (synth_dataset->parsed()) return run_synth_dataset(config_path, out_path, seed);
        if (train_snet->parsed() || train_umsn->parsed() || train_stage1->parsed()) {
            auto cfg = load_train_config(config_path, out_path, seed, width);
            if (train_stage1->parsed()) {
                cfg.phase = "stage1";
                cfg.class_index = class_index;
            }
            if (train_umsn->parsed()) cfg.phase = "umsn";
            if (train_snet->parsed() && cfg.phase != "snet" && cfg.phase != "snet_finetune") cfg.phase = "snet";
            return run_train(cfg);
        }
        if (deblur->parsed()) return run_deblur(in_path, masks_arg, checkpoint, out_path);
        if (evaluate->parsed()) {
            if (masks_arg.empty()) masks_arg = "manifest";
            return run_evaluate(manifest_path, checkpoint, out_path, masks_arg, grids, extractor_seed,
                                extractor_file);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
