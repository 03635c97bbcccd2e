#include "umsn/synthesis/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <json.hpp>

#include "umsn/core/fsutil.hpp"
#include "umsn/core/image_io.hpp"
#include "umsn/core/npy.hpp"
#include "umsn/semantics/snet.hpp"
#include "umsn/training/checkpoint.hpp"
#include "umsn/synthesis/blur.hpp"

namespace umsn::synthesis {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetConfig::validate() const {
    require(count >= 1, "dataset config: count must be >= 1");
    require(patch_size >= 16 && patch_size % 2 == 0, "dataset config: patch size must be even and >= 16");
    require(noise_sigma >= 0.0, "dataset config: noise sigma must be >= 0");
    require(kernels.count >= 1, "dataset config: kernel count must be >= 1");
    require(kernels.side_min % 2 == 1 && kernels.side_max % 2 == 1 && kernels.side_min <= kernels.side_max,
            "dataset config: kernel side range must be odd bounds with min <= max");
    require(kernels.side_max <= patch_size, "dataset config: kernels must fit inside the patch");
}

std::string DatasetManifest::resolve(const std::string& relative) const {
    return (fs::path(root) / relative).string();
}

std::vector<std::pair<BlurKernel, std::string>> build_kernel_bank(const KernelBankConfig& config,
                                                                  std::uint64_t master_seed,
                                                                  const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "kernels");
    std::vector<std::pair<BlurKernel, std::string>> bank;
    bank.reserve(static_cast<size_t>(config.count));
    const int half_span = (config.side_max - config.side_min) / 2;
    for (int j = 0; j < config.count; ++j) {
        const std::uint64_t seed = mix_seed(master_seed, 0xA0000000ULL + static_cast<std::uint64_t>(j));
        Rng side_rng(mix_seed(seed, 1));
        const int side = config.side_min + 2 * side_rng.uniform_int(0, half_span);
        BlurKernel k = generate_kernel(seed, side, config.trajectory, config.side_min, config.side_max);
        char id[16];
        std::snprintf(id, sizeof(id), "k%05d", j);
        save_npy((fs::path(out_dir) / "kernels" / (std::string(id) + ".npy")).string(), k.weights);
        bank.emplace_back(std::move(k), id);
    }
    return bank;
}

namespace {

std::vector<std::string> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a readable directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

Tensor crop(const Tensor& image, int y0, int x0, int size) {
    Tensor out({image.dim(0), size, size});
    for (int c = 0; c < image.dim(0); ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out.at(c, y, x) = image.at(c, y0 + y, x0 + x);
    return out;
}

Tensor crop2(const Tensor& map, int y0, int x0, int size) {
    Tensor out({size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out.at(y, x) = map.at(y0 + y, x0 + x);
    return out;
}

json record_to_json(const SampleRecord& r) {
    json j{{"id", r.id},           {"clean", r.clean},
           {"blurry", r.blurry},   {"masks", r.masks},
           {"kernel_id", r.kernel_id}, {"kernel_side", r.kernel_side},
           {"noise_sigma", r.noise_sigma}, {"seed", r.seed}};
    if (r.has_class_blurred()) {
        json cb;
        for (int i = 0; i < 4; ++i) cb[std::to_string(i + 1)] = r.class_blurred[static_cast<size_t>(i)];
        j["class_blurred"] = cb;
    }
    return j;
}

SampleRecord record_from_json(const json& j) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.clean = j.at("clean").get<std::string>();
    r.blurry = j.at("blurry").get<std::string>();
    r.masks = j.at("masks").get<std::string>();
    r.kernel_id = j.at("kernel_id").get<std::string>();
    r.kernel_side = j.at("kernel_side").get<int>();
    r.noise_sigma = j.at("noise_sigma").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("class_blurred"))
        for (int i = 0; i < 4; ++i)
            r.class_blurred[static_cast<size_t>(i)] = j.at("class_blurred").at(std::to_string(i + 1)).get<std::string>();
    return r;
}

json class_table() {
    json classes = json::array();
    for (int c = 1; c <= semantics::kNumClasses; ++c) {
        classes.push_back(json{{"index", c},
                               {"name", semantics::class_name(c)},
                               {"source_labels", semantics::source_labels_of_class(c)}});
    }
    return classes;
}

}  // namespace

DatasetManifest build_dataset(const std::string& clean_corpus, const std::string& masks_source,
                              const DatasetConfig& config, const std::string& out_dir) {
    config.validate();

    const std::vector<std::string> names = list_pngs(clean_corpus);
    if (names.empty()) throw std::runtime_error("corpus is empty: " + clean_corpus);

    // mask source: label directory or segmentation checkpoint
    const bool masks_from_labels = fs::is_directory(masks_source);
    semantics::SNet snet;
    if (!masks_from_labels) {
        if (!fs::is_regular_file(masks_source))
            throw std::runtime_error("masks source is neither a label directory nor a checkpoint: " + masks_source);
        snet = training::load_snet(masks_source);
    }

    struct Source {
        Tensor image;
        Tensor labels;  // empty when masks come from the model
    };
    std::vector<Source> sources;
    for (const auto& name : names) {
        Source s;
        s.image = load_image_png((fs::path(clean_corpus) / name).string());
        if (s.image.dim(1) < config.patch_size || s.image.dim(2) < config.patch_size) continue;
        if (masks_from_labels) {
            const std::string lp = (fs::path(masks_source) / name).string();
            if (!fs::exists(lp)) throw std::runtime_error("missing label map for corpus image: " + lp);
            s.labels = load_index_png(lp);
            require(s.labels.dim(0) == s.image.dim(1) && s.labels.dim(1) == s.image.dim(2),
                    "label map size differs from image: " + name);
        }
        sources.push_back(std::move(s));
    }
    if (sources.empty())
        throw std::runtime_error("no extractable patches: every corpus image is smaller than " +
                                 std::to_string(config.patch_size));

    const auto bank = build_kernel_bank(config.kernels, config.master_seed, out_dir);

    for (const char* sub : {"clean", "blurry", "masks"}) fs::create_directories(fs::path(out_dir) / sub);
    if (config.class_blurred)
        for (int i = 1; i <= 4; ++i)
            fs::create_directories(fs::path(out_dir) / "class_blurred" / std::to_string(i));

    DatasetManifest manifest;
    manifest.patch_size = config.patch_size;
    manifest.master_seed = config.master_seed;
    manifest.noise_sigma = config.noise_sigma;
    manifest.root = out_dir;

    for (int i = 0; i < config.count; ++i) {
        const std::uint64_t sample_seed = mix_seed(config.master_seed, 0xB0000000ULL + static_cast<std::uint64_t>(i));
        Rng rng(sample_seed);
        const Source& src = sources[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(sources.size()) - 1))];
        const int y0 = rng.uniform_int(0, src.image.dim(1) - config.patch_size);
        const int x0 = rng.uniform_int(0, src.image.dim(2) - config.patch_size);
        const int kidx = rng.uniform_int(0, static_cast<int>(bank.size()) - 1);
        const std::uint64_t noise_seed = rng.next_u64();

        const Tensor clean = crop(src.image, y0, x0, config.patch_size);
        semantics::SemanticMaskSet masks;
        if (masks_from_labels) {
            masks = semantics::group_labels(crop2(src.labels, y0, x0, config.patch_size));
        } else {
            masks = semantics::harden(snet.infer(clean));
        }
        const BlurKernel& kernel = bank[static_cast<size_t>(kidx)].first;
        const Tensor blurry = add_noise(blur(clean, kernel), config.noise_sigma, noise_seed);

        SampleRecord rec;
        char id[16];
        std::snprintf(id, sizeof(id), "s%06d", i);
        rec.id = id;
        rec.clean = "clean/" + rec.id + ".png";
        rec.blurry = "blurry/" + rec.id + ".png";
        rec.masks = "masks/" + rec.id + ".png";
        rec.kernel_id = bank[static_cast<size_t>(kidx)].second;
        rec.kernel_side = kernel.side;
        rec.noise_sigma = config.noise_sigma;
        rec.seed = sample_seed;

        save_image_png((fs::path(out_dir) / rec.clean).string(), clean);
        save_image_png((fs::path(out_dir) / rec.blurry).string(), blurry);
        save_index_png((fs::path(out_dir) / rec.masks).string(), semantics::mask_to_index(masks));
        if (config.class_blurred) {
            for (int c = 1; c <= 4; ++c) {
                rec.class_blurred[static_cast<size_t>(c - 1)] =
                    "class_blurred/" + std::to_string(c) + "/" + rec.id + ".png";
                save_image_png((fs::path(out_dir) / rec.class_blurred[static_cast<size_t>(c - 1)]).string(),
                               class_blur(clean, masks, c, kernel));
            }
        }
        manifest.samples.push_back(std::move(rec));
    }

    json doc;
    doc["format"] = "umsn-dataset-v1";
    doc["patch_size"] = config.patch_size;
    doc["master_seed"] = config.master_seed;
    doc["noise_sigma"] = config.noise_sigma;
    doc["classes"] = class_table();
    json samples = json::array();
    for (const auto& r : manifest.samples) samples.push_back(record_to_json(r));
    doc["samples"] = samples;
    write_file_atomic((fs::path(out_dir) / "manifest.json").string(), doc.dump(2) + "\n");
    return manifest;
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("manifest not found: " + path);
    const json doc = json::parse(read_file(path));
    DatasetManifest m;
    m.root = fs::path(path).parent_path().string();
    m.patch_size = doc.value("patch_size", 0);
    m.master_seed = doc.value("master_seed", std::uint64_t{0});
    m.noise_sigma = doc.value("noise_sigma", 0.0);
    for (const auto& j : doc.at("samples")) m.samples.push_back(record_from_json(j));
    return m;
}

std::vector<LoadedSample> load_samples(const DatasetManifest& manifest, bool need_class_blurred) {
    if (manifest.samples.empty()) throw std::runtime_error("no samples in manifest");
    std::vector<LoadedSample> out;
    out.reserve(manifest.samples.size());
    for (const auto& rec : manifest.samples) {
        LoadedSample s;
        s.id = rec.id;
        s.clean = load_image_png(manifest.resolve(rec.clean));
        s.blurry = load_image_png(manifest.resolve(rec.blurry));
        s.masks = semantics::mask_from_index(load_index_png(manifest.resolve(rec.masks)));
        s.has_class_blurred = rec.has_class_blurred();
        if (need_class_blurred) {
            if (!s.has_class_blurred)
                throw std::runtime_error("sample " + rec.id + " has no class-blurred variants; rebuild the dataset "
                                         "with class_blurred=true");
            for (int c = 0; c < 4; ++c)
                s.class_blurred[static_cast<size_t>(c)] =
                    load_image_png(manifest.resolve(rec.class_blurred[static_cast<size_t>(c)]));
        }
        out.push_back(std::move(s));
    }
    return out;
}

DatasetConfig dataset_config_from_json_text(const std::string& json_text) {
    const json j = json::parse(json_text);
    DatasetConfig c;
    c.count = j.value("count", c.count);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.class_blurred = j.value("class_blurred", c.class_blurred);
    if (j.contains("kernels")) {
        const json& k = j.at("kernels");
        c.kernels.count = k.value("count", c.kernels.count);
        c.kernels.side_min = k.value("side_min", c.kernels.side_min);
        c.kernels.side_max = k.value("side_max", c.kernels.side_max);
        c.kernels.trajectory.steps = k.value("steps", c.kernels.trajectory.steps);
        c.kernels.trajectory.inertia = k.value("inertia", c.kernels.trajectory.inertia);
        c.kernels.trajectory.jitter = k.value("jitter", c.kernels.trajectory.jitter);
    }
    return c;
}

}  // namespace umsn::synthesis
