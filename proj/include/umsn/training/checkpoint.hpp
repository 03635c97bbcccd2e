#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "umsn/core/archive.hpp"
#include "umsn/network/network.hpp"
#include "umsn/nn/optim.hpp"
#include "umsn/semantics/snet.hpp"

namespace umsn::training {

struct CheckpointMeta {
    std::string phase;
    long iteration = 0;
    std::string config_digest;
    std::uint64_t master_seed = 0;
    double width_multiplier = 1.0;
    // phase-specific extras
    int class_index = 0;                          // stage1
    std::string mask_source;                      // umsn
    bool use_streams = true, use_mask_concat = false, use_nrl = true, use_confidence = true;
    bool has_snet = false;
    real confidence_floor = 1e-6;
};

/// Writes `<path>` (parameter archive) and `<path minus .ckpt>.meta.json`.
/// Optimizer moments ride along under "adam.*" names for exact resumes.
void save_checkpoint(const std::string& path, const nn::ParamMap& params, const CheckpointMeta& meta,
                     const nn::Adam* optimizer = nullptr);

struct LoadedCheckpoint {
    TensorArchive tensors;
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Optimizer step counter stored alongside a training checkpoint (0 if none).
long checkpoint_adam_t(const std::string& path);

/// Copies archive entries into matching parameters; throws on missing names
/// or shape mismatches. Entries under "adam." are ignored here.
void apply_parameters(const TensorArchive& tensors, nn::ParamMap& params);
/// Same, but translates names: archive "from_prefix<rest>" -> param "to_prefix<rest>".
void apply_parameters_prefixed(const TensorArchive& tensors, const std::string& from_prefix,
                               const std::string& to_prefix, nn::ParamMap& params);

semantics::SNet load_snet(const std::string& path);

/// Reassembled inference bundle behind a deblurring checkpoint.
struct DeblurModel {
    network::UMSN umsn;
    std::optional<semantics::SNet> snet;
    CheckpointMeta meta;

    static DeblurModel load(const std::string& path);

    /// Clamped deblurred image. When `masks` is null the bundled
    /// segmentation network produces them (error if absent).
    Tensor deblur(const Tensor& blurry, const semantics::SemanticMaskSet* masks) const;
};

}  // namespace umsn::training
