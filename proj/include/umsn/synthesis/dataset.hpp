#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "umsn/semantics/masks.hpp"
#include "umsn/synthesis/kernel.hpp"

namespace umsn::synthesis {

struct KernelBankConfig {
    int count = 16;
    int side_min = kDefaultKernelSideMin;
    int side_max = kDefaultKernelSideMax;
    TrajectoryParams trajectory;
};

struct DatasetConfig {
    int count = 8;
    int patch_size = 64;
    double noise_sigma = 0.03;
    std::uint64_t master_seed = 0;
    KernelBankConfig kernels;
    bool class_blurred = false;

    void validate() const;
};

struct SampleRecord {
    std::string id;
    std::string clean;
    std::string blurry;
    std::string masks;
    std::string kernel_id;
    int kernel_side = 0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    std::array<std::string, 4> class_blurred;  // empty strings when not generated

    bool has_class_blurred() const { return !class_blurred[0].empty(); }
};

struct DatasetManifest {
    std::vector<SampleRecord> samples;
    int patch_size = 0;
    std::uint64_t master_seed = 0;
    double noise_sigma = 0.0;
    std::string root;  // directory holding the manifest; set when loaded

    std::string resolve(const std::string& relative) const;
    static DatasetManifest load(const std::string& path);
};

/// Generates the seeded kernel bank; writes kernels/k%05d.npy under out_dir
/// and returns (kernel, id) pairs.
std::vector<std::pair<BlurKernel, std::string>> build_kernel_bank(const KernelBankConfig& config,
                                                                  std::uint64_t master_seed,
                                                                  const std::string& out_dir);

/// Builds the paired dataset. `masks_source` is either a directory of 11-label
/// index PNGs (same file names as the corpus) or a segmentation checkpoint
/// used to infer masks from the clean patches. Fully deterministic under the
/// master seed.
DatasetManifest build_dataset(const std::string& clean_corpus, const std::string& masks_source,
                              const DatasetConfig& config, const std::string& out_dir);

struct LoadedSample {
    std::string id;
    Tensor clean;
    Tensor blurry;
    semantics::SemanticMaskSet masks;
    std::array<Tensor, 4> class_blurred;
    bool has_class_blurred = false;
};

std::vector<LoadedSample> load_samples(const DatasetManifest& manifest, bool need_class_blurred = false);

DatasetConfig dataset_config_from_json_text(const std::string& json_text);

}  // namespace umsn::synthesis
