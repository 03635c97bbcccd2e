#include "umsn/training/checkpoint.hpp"

#include <filesystem>
#include <json.hpp>

#include "umsn/core/fsutil.hpp"
#include "umsn/core/image_io.hpp"

namespace umsn::training {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string meta_path(const std::string& ckpt_path) {
    fs::path p(ckpt_path);
    p.replace_extension(".meta.json");
    return p.string();
}

json meta_to_json(const CheckpointMeta& m) {
    return json{{"phase", m.phase},
                {"iteration", m.iteration},
                {"config_digest", m.config_digest},
                {"master_seed", m.master_seed},
                {"width_multiplier", m.width_multiplier},
                {"class_index", m.class_index},
                {"mask_source", m.mask_source},
                {"use_streams", m.use_streams},
                {"use_mask_concat", m.use_mask_concat},
                {"use_nrl", m.use_nrl},
                {"use_confidence", m.use_confidence},
                {"has_snet", m.has_snet},
                {"confidence_floor", m.confidence_floor}};
}

CheckpointMeta meta_from_json(const json& j) {
    CheckpointMeta m;
    m.phase = j.value("phase", "");
    m.iteration = j.value("iteration", 0L);
    m.config_digest = j.value("config_digest", "");
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    m.width_multiplier = j.value("width_multiplier", 1.0);
    m.class_index = j.value("class_index", 0);
    m.mask_source = j.value("mask_source", "");
    m.use_streams = j.value("use_streams", true);
    m.use_mask_concat = j.value("use_mask_concat", false);
    m.use_nrl = j.value("use_nrl", true);
    m.use_confidence = j.value("use_confidence", true);
    m.has_snet = j.value("has_snet", false);
    m.confidence_floor = j.value("confidence_floor", 1e-6);
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamMap& params, const CheckpointMeta& meta,
                     const nn::Adam* optimizer) {
    TensorArchive archive;
    for (const auto& [name, var] : params.items) archive.emplace_back(name, var.value());
    json mj = meta_to_json(meta);
    if (optimizer != nullptr) {
        nn::ParamMap state;
        optimizer->collect_state(params, state);
        for (const auto& [name, var] : state.items) archive.emplace_back(name, var.value());
        mj["adam_t"] = optimizer->iteration_count();
    }
    save_archive(path, archive);
    write_file_atomic(meta_path(path), mj.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    LoadedCheckpoint out;
    out.tensors = load_archive(path);
    const std::string mp = meta_path(path);
    if (fs::exists(mp)) out.meta = meta_from_json(json::parse(read_file(mp)));
    return out;
}

long checkpoint_adam_t(const std::string& path) {
    const std::string mp = meta_path(path);
    if (!fs::exists(mp)) return 0;
    const json j = json::parse(read_file(mp));
    return j.value("adam_t", 0L);
}

void apply_parameters(const TensorArchive& tensors, nn::ParamMap& params) {
    for (auto& [name, var] : params.items) {
        const Tensor* found = nullptr;
        for (const auto& [n, t] : tensors)
            if (n == name) {
                found = &t;
                break;
            }
        if (found == nullptr) throw std::runtime_error("checkpoint is missing parameter: " + name);
        if (!found->same_shape(var.value()))
            throw std::runtime_error("checkpoint/topology mismatch for " + name + ": stored " +
                                     found->shape_str() + " vs model " + var.value().shape_str() +
                                     " (width multiplier differs?)");
        var.set_value(*found);
    }
}

void apply_parameters_prefixed(const TensorArchive& tensors, const std::string& from_prefix,
                               const std::string& to_prefix, nn::ParamMap& params) {
    for (const auto& [name, t] : tensors) {
        if (name.rfind(from_prefix, 0) != 0) continue;
        const std::string target = to_prefix + name.substr(from_prefix.size());
        nn::Var* var = params.find(target);
        if (var == nullptr) throw std::runtime_error("no parameter named " + target + " for archive entry " + name);
        if (!t.same_shape(var->value()))
            throw std::runtime_error("checkpoint/topology mismatch for " + target + ": stored " + t.shape_str() +
                                     " vs model " + var->value().shape_str() + " (width multiplier differs?)");
        var->set_value(t);
    }
}

semantics::SNet load_snet(const std::string& path) {
    const LoadedCheckpoint ck = load_checkpoint(path);
    semantics::SNet snet(ck.meta.width_multiplier, 0);
    nn::ParamMap pm;
    snet.collect(pm);
    apply_parameters(ck.tensors, pm);
    return snet;
}

DeblurModel DeblurModel::load(const std::string& path) {
    const LoadedCheckpoint ck = load_checkpoint(path);
    DeblurModel model;
    model.meta = ck.meta;
    network::UMSNConfig cfg;
    cfg.width_multiplier = ck.meta.width_multiplier;
    cfg.use_streams = ck.meta.use_streams;
    cfg.use_mask_concat = ck.meta.use_mask_concat;
    cfg.use_nrl = ck.meta.use_nrl;
    cfg.seed = 0;
    model.umsn = network::UMSN(cfg);
    nn::ParamMap pm;
    model.umsn.collect_all(pm);
    // stage-1 heads are optional in deblurring checkpoints
    nn::ParamMap required;
    for (auto& [name, var] : pm.items)
        if (name.rfind("stage1_head", 0) != 0) required.add(name, var);
    apply_parameters(ck.tensors, required);
    for (auto& [name, var] : pm.items) {
        if (name.rfind("stage1_head", 0) != 0) continue;
        for (const auto& [n, t] : ck.tensors)
            if (n == name && t.same_shape(var.value())) var.set_value(t);
    }
    if (ck.meta.has_snet) {
        semantics::SNet snet(ck.meta.width_multiplier, 0);
        nn::ParamMap sp;
        snet.collect(sp);
        apply_parameters(ck.tensors, sp);
        model.snet = std::move(snet);
    }
    return model;
}

Tensor DeblurModel::deblur(const Tensor& blurry, const semantics::SemanticMaskSet* masks) const {
    require(blurry.rank() == 3 && blurry.dim(0) == 3, "deblur: image must be {3,H,W}");
    const int h = blurry.dim(1), w = blurry.dim(2);
    semantics::SemanticMaskSet inferred;
    const semantics::SemanticMaskSet* use = masks;
    if (use == nullptr) {
        if (!snet.has_value())
            throw std::runtime_error("checkpoint carries no segmentation network; provide a mask file");
        inferred = snet->infer(blurry);
        use = &inferred;
    }
    require(use->height() == h && use->width() == w, "deblur: mask size differs from image");
    Tensor masks4 = use->planes.reshaped({1, semantics::kNumClasses, h, w});
    ad::Var out = umsn.forward(ad::Var::constant(blurry.reshaped({1, 3, h, w})), masks4);
    Tensor img = out.value().reshaped({3, h, w});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = clamp01(img[i]);
    return img;
}

}  // namespace umsn::training
