#include "umsn/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "umsn/core/image_io.hpp"
#include "umsn/eval/metrics.hpp"

namespace umsn::training {

namespace fs = std::filesystem;
using nlohmann::json;
using semantics::kNumClasses;
using synthesis::LoadedSample;

std::vector<int> batch_indices(std::uint64_t master_seed, long iteration, int sample_count, int batch_size) {
    Rng rng(mix_seed(mix_seed(master_seed, 0xBA7C4ULL), static_cast<std::uint64_t>(iteration)));
    std::vector<int> idx(static_cast<size_t>(batch_size));
    for (int& i : idx) i = rng.uniform_int(0, sample_count - 1);
    return idx;
}

namespace {

class TrainLogger {
public:
    TrainLogger(const std::string& out_dir, bool append) {
        fs::create_directories(out_dir);
        path_ = (fs::path(out_dir) / "log.jsonl").string();
        stream_.open(path_, append ? std::ios::app : std::ios::trunc);
        if (!stream_) throw std::runtime_error("cannot open training log: " + path_);
    }

    void write(const TrainRecord& r) {
        json j{{"iter", r.iter},
               {"phase", r.phase},
               {"loss", r.loss},
               {"per_class", r.per_class},
               {"C", r.confidence},
               {"lr", r.lr},
               {"wallclock", r.wallclock}};
        stream_ << j.dump() << "\n";
        stream_.flush();
    }

private:
    std::string path_;
    std::ofstream stream_;
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor batch_images(const std::vector<LoadedSample>& samples, const std::vector<int>& idx,
                    const Tensor LoadedSample::*member) {
    const Tensor& first = samples[static_cast<size_t>(idx[0])].*member;
    const int h = first.dim(1), w = first.dim(2);
    Tensor out({static_cast<int>(idx.size()), 3, h, w});
    for (size_t b = 0; b < idx.size(); ++b) {
        const Tensor& img = samples[static_cast<size_t>(idx[b])].*member;
        require(img.dim(1) == h && img.dim(2) == w, "samples have mismatched sizes");
        std::copy(img.data(), img.data() + img.size(), out.data() + static_cast<std::int64_t>(b) * img.size());
    }
    return out;
}

Tensor batch_planes(const std::vector<Tensor>& planes, const std::vector<int>& idx) {
    const Tensor& first = planes[static_cast<size_t>(idx[0])];
    Tensor out({static_cast<int>(idx.size()), first.dim(0), first.dim(1), first.dim(2)});
    for (size_t b = 0; b < idx.size(); ++b) {
        const Tensor& m = planes[static_cast<size_t>(idx[b])];
        std::copy(m.data(), m.data() + m.size(), out.data() + static_cast<std::int64_t>(b) * m.size());
    }
    return out;
}

Tensor plane_of(const Tensor& masks4, int class_index) {
    const int n = masks4.dim(0), h = masks4.dim(2), w = masks4.dim(3);
    Tensor plane({n, 1, h, w});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) plane.at(b, 0, y, x) = masks4.at(b, class_index - 1, y, x);
    return plane;
}

Tensor clamp_image(Tensor img) {
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = clamp01(img[i]);
    return img;
}

real mean_psnr(const std::vector<Tensor>& preds, const std::vector<LoadedSample>& samples) {
    real acc = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) acc += eval::psnr(preds[i], samples[i].clean).db;
    return acc / static_cast<real>(preds.size());
}

losses::FeatureExtractor make_extractor(const TrainConfig& cfg) {
    if (!cfg.extractor_file.empty()) return losses::FeatureExtractor::from_file(cfg.extractor_file);
    return losses::FeatureExtractor(cfg.extractor_seed);
}

struct ResumeState {
    long start_iter = 0;
    bool exact = false;
};

ResumeState apply_resume(const TrainConfig& cfg, nn::ParamMap& params, nn::Adam& opt) {
    ResumeState rs;
    if (cfg.resume_checkpoint.empty()) return rs;
    const LoadedCheckpoint ck = load_checkpoint(cfg.resume_checkpoint);
    if (ck.meta.width_multiplier != cfg.width_multiplier)
        throw std::runtime_error("checkpoint/topology mismatch: width multiplier differs (stored " +
                                 std::to_string(ck.meta.width_multiplier) + ", config " +
                                 std::to_string(cfg.width_multiplier) + ")");
    apply_parameters(ck.tensors, params);
    if (ck.meta.phase == cfg.phase) {
        // exact resume: restore moments and continue the iteration count
        nn::ParamMap loaded;
        for (const auto& [name, t] : ck.tensors)
            if (name.rfind("adam.", 0) == 0) loaded.add(name, nn::Var::constant(t));
        opt.restore_state(params, loaded, checkpoint_adam_t(cfg.resume_checkpoint));
        rs.start_iter = ck.meta.iteration;
        rs.exact = true;
    }
    return rs;
}

}  // namespace

// ---------------------------------------------------------------------------
// S-Net phases
// ---------------------------------------------------------------------------

TrainResult train_snet(const TrainConfig& cfg) {
    cfg.validate();
    require(cfg.phase == "snet" || cfg.phase == "snet_finetune", "train_snet: wrong phase");
    const auto manifest = synthesis::DatasetManifest::load(cfg.dataset_manifest);
    const auto samples = synthesis::load_samples(manifest);
    const bool on_blurry = cfg.phase == "snet_finetune";

    semantics::SNet model(cfg.width_multiplier, mix_seed(cfg.master_seed, 0x5345ULL));
    nn::ParamMap params;
    model.collect(params);
    nn::Adam opt(cfg.learning_rate);
    const ResumeState rs = apply_resume(cfg, params, opt);

    TrainLogger logger(cfg.out_dir, rs.exact);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    result.history.reserve(static_cast<size_t>(cfg.iterations));

    std::vector<Tensor> mask_planes;
    for (const auto& s : samples) mask_planes.push_back(s.masks.planes);

    auto train_f_scores = [&]() {
        std::array<real, 4> per{};
        for (const auto& s : samples) {
            const auto pred = semantics::harden(model.infer(on_blurry ? s.blurry : s.clean));
            for (int c = 1; c <= kNumClasses; ++c)
                per[static_cast<size_t>(c - 1)] += semantics::f_score(pred, s.masks, c);
        }
        for (auto& v : per) v /= static_cast<real>(samples.size());
        return per;
    };

    CheckpointMeta meta;
    meta.phase = cfg.phase;
    meta.config_digest = cfg.digest();
    meta.master_seed = cfg.master_seed;
    meta.width_multiplier = cfg.width_multiplier;

    for (long iter = rs.start_iter + 1; iter <= cfg.iterations; ++iter) {
        const auto idx = batch_indices(cfg.master_seed, iter, static_cast<int>(samples.size()), cfg.batch_size);
        const Tensor x = batch_images(samples, idx, on_blurry ? &LoadedSample::blurry : &LoadedSample::clean);
        const Tensor target = batch_planes(mask_planes, idx);

        params.zero_grads();
        ad::Var loss = ad::cross_entropy_softmax(model.forward_logits(ad::Var::constant(x)), target);
        loss.backward();
        opt.step(params);

        if (iter % cfg.log_every == 0 || iter == cfg.iterations) {
            TrainRecord rec;
            rec.iter = iter;
            rec.phase = cfg.phase;
            rec.loss = loss.value()[0];
            rec.per_class = train_f_scores();  // per-class train F-scores as the class diagnostic
            rec.confidence = {1.0, 1.0, 1.0, 1.0};
            rec.lr = cfg.learning_rate;
            rec.wallclock = seconds_since(t0);
            logger.write(rec);
            result.history.push_back(rec);
            result.final_f_score =
                (rec.per_class[0] + rec.per_class[1] + rec.per_class[2] + rec.per_class[3]) / 4.0;
        }
        if (iter % cfg.checkpoint_every == 0 || iter == cfg.iterations) {
            meta.iteration = iter;
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_%06ld.ckpt", iter);
            save_checkpoint((fs::path(cfg.out_dir) / name).string(), params, meta, &opt);
        }
    }
    meta.iteration = cfg.iterations;
    result.final_checkpoint = (fs::path(cfg.out_dir) / "final.ckpt").string();
    save_checkpoint(result.final_checkpoint, params, meta, &opt);
    return result;
}

// ---------------------------------------------------------------------------
// first-stage per-class pretraining
// ---------------------------------------------------------------------------

TrainResult train_stage1(const TrainConfig& cfg) {
    cfg.validate();
    require(cfg.phase == "stage1", "train_stage1: wrong phase");
    const int cls = cfg.class_index;
    const auto manifest = synthesis::DatasetManifest::load(cfg.dataset_manifest);
    const auto samples = synthesis::load_samples(manifest, /*need_class_blurred=*/true);

    Rng rng(mix_seed(cfg.master_seed, 0x573100ULL + static_cast<std::uint64_t>(cls)));
    network::FNet fnet(cfg.width_multiplier, rng);
    network::Stage1Head head(cfg.width_multiplier, rng);
    head.zero_residual_output();  // start at the identity map
    nn::ParamMap params;
    fnet.collect(params, "fnet");
    head.collect(params, "head");
    nn::Adam opt(cfg.learning_rate);
    const ResumeState rs = apply_resume(cfg, params, opt);
    const losses::FeatureExtractor extractor = make_extractor(cfg);

    std::vector<Tensor> mask_planes;
    for (const auto& s : samples) mask_planes.push_back(s.masks.planes);

    TrainLogger logger(cfg.out_dir, rs.exact);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;

    CheckpointMeta meta;
    meta.phase = "stage1";
    meta.class_index = cls;
    meta.config_digest = cfg.digest();
    meta.master_seed = cfg.master_seed;
    meta.width_multiplier = cfg.width_multiplier;

    auto class_input = [&](const LoadedSample& s) -> const Tensor& {
        return s.class_blurred[static_cast<size_t>(cls - 1)];
    };

    for (long iter = rs.start_iter + 1; iter <= cfg.iterations; ++iter) {
        const auto idx = batch_indices(cfg.master_seed, iter, static_cast<int>(samples.size()), cfg.batch_size);
        Tensor y({static_cast<int>(idx.size()), 3, manifest.patch_size, manifest.patch_size});
        for (size_t b = 0; b < idx.size(); ++b) {
            const Tensor& img = class_input(samples[static_cast<size_t>(idx[b])]);
            std::copy(img.data(), img.data() + img.size(), y.data() + static_cast<std::int64_t>(b) * img.size());
        }
        const Tensor x = batch_images(samples, idx, &LoadedSample::clean);
        const Tensor masks4 = batch_planes(mask_planes, idx);

        params.zero_grads();
        ad::Var xhat = network::stage1_forward(fnet, head, ad::Var::constant(y), plane_of(masks4, cls));
        ad::Var l1 = ad::mean_all(ad::abs(ad::sub(xhat, ad::Var::constant(x))));
        ad::Var lp = losses::perceptual_loss_graph(xhat, x, extractor);
        ad::Var loss = ad::add(l1, ad::scale(lp, cfg.loss.lambda1));
        loss.backward();
        opt.step(params);

        if (iter % cfg.log_every == 0 || iter == cfg.iterations) {
            TrainRecord rec;
            rec.iter = iter;
            rec.phase = cfg.phase;
            rec.loss = loss.value()[0];
            const auto cls_diag = losses::class_l1_graph(ad::Var::constant(xhat.value()), x, masks4);
            for (int c = 0; c < kNumClasses; ++c) {
                const Tensor& v = cls_diag.per_class[static_cast<size_t>(c)].value();
                real acc = 0.0;
                for (std::int64_t i = 0; i < v.size(); ++i) acc += v[i];
                rec.per_class[static_cast<size_t>(c)] = acc / static_cast<real>(v.size());
            }
            rec.confidence = {1.0, 1.0, 1.0, 1.0};
            rec.lr = cfg.learning_rate;
            rec.wallclock = seconds_since(t0);
            logger.write(rec);
            result.history.push_back(rec);
        }
        if (iter % cfg.checkpoint_every == 0 || iter == cfg.iterations) {
            meta.iteration = iter;
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_%06ld.ckpt", iter);
            save_checkpoint((fs::path(cfg.out_dir) / name).string(), params, meta, &opt);
        }
    }

    // train-set quality relative to the class-blurred inputs
    std::vector<Tensor> preds;
    real input_psnr = 0.0;
    for (const auto& s : samples) {
        const int h = s.clean.dim(1), w = s.clean.dim(2);
        Tensor y1 = class_input(s).reshaped({1, 3, h, w});
        Tensor plane = s.masks.plane(cls).reshaped({1, 1, h, w});
        ad::Var xhat = network::stage1_forward(fnet, head, ad::Var::constant(y1), plane);
        preds.push_back(clamp_image(xhat.value().reshaped({3, h, w})));
        input_psnr += eval::psnr(class_input(s), s.clean).db;
    }
    result.final_train_psnr = mean_psnr(preds, samples);
    result.input_train_psnr = input_psnr / static_cast<real>(samples.size());

    meta.iteration = cfg.iterations;
    result.final_checkpoint = (fs::path(cfg.out_dir) / "final.ckpt").string();
    save_checkpoint(result.final_checkpoint, params, meta, &opt);
    return result;
}

// ---------------------------------------------------------------------------
// joint phase
// ---------------------------------------------------------------------------

TrainResult train_umsn(const TrainConfig& cfg) {
    cfg.validate();
    require(cfg.phase == "umsn", "train_umsn: wrong phase");
    const auto manifest = synthesis::DatasetManifest::load(cfg.dataset_manifest);
    const auto samples = synthesis::load_samples(manifest);

    network::UMSNConfig ncfg;
    ncfg.width_multiplier = cfg.width_multiplier;
    ncfg.seed = mix_seed(cfg.master_seed, 0x554DULL);
    ncfg.use_streams = cfg.use_streams;
    ncfg.use_mask_concat = cfg.use_mask_concat;
    ncfg.use_nrl = cfg.use_nrl;
    ncfg.keep_stage1_heads = cfg.keep_stage1_heads;
    network::UMSN umsn(ncfg);
    umsn.zero_residual_outputs();  // start at the identity map
    network::ConfidenceNet cn(cfg.width_multiplier, mix_seed(cfg.master_seed, 0x434EULL),
                              cfg.loss.confidence_floor);

    nn::ParamMap all_params;  // checkpoint surface
    umsn.collect_all(all_params);
    if (cfg.use_confidence) cn.collect(all_params);

    // stage-1 initialization of the streams
    if (ncfg.use_streams) {
        for (int i = 1; i <= kNumClasses; ++i) {
            const std::string& path = cfg.stage1_checkpoints[static_cast<size_t>(i - 1)];
            if (path.empty()) continue;
            const LoadedCheckpoint ck = load_checkpoint(path);
            if (ck.meta.width_multiplier != cfg.width_multiplier)
                throw std::runtime_error("stage-1 checkpoint " + path +
                                         ": width multiplier differs from the training config");
            apply_parameters_prefixed(ck.tensors, "fnet.", "fnet" + std::to_string(i) + ".", all_params);
            if (ncfg.keep_stage1_heads)
                apply_parameters_prefixed(ck.tensors, "head.", "stage1_head" + std::to_string(i) + ".",
                                          all_params);
        }
    }

    // mask sources: stored ground truth, or frozen segmentation inference
    std::optional<semantics::SNet> snet;
    if (cfg.mask_source == "snet") snet = load_snet(cfg.snet_checkpoint);
    std::vector<Tensor> input_masks, loss_masks;
    for (const auto& s : samples) {
        if (snet.has_value()) {
            input_masks.push_back(snet->infer(s.blurry).planes);
            loss_masks.push_back(snet->infer(s.clean).planes);
        } else {
            input_masks.push_back(s.masks.planes);
            loss_masks.push_back(s.masks.planes);
        }
    }

    nn::ParamMap trainable;  // joint objective surface: UMSN (no heads) + CN
    umsn.collect(trainable);
    if (cfg.use_confidence) cn.collect(trainable);
    nn::Adam opt(cfg.learning_rate);
    const ResumeState rs = [&] {
        if (cfg.resume_checkpoint.empty()) return ResumeState{};
        const LoadedCheckpoint ck = load_checkpoint(cfg.resume_checkpoint);
        if (ck.meta.width_multiplier != cfg.width_multiplier)
            throw std::runtime_error("checkpoint/topology mismatch: width multiplier differs");
        apply_parameters(ck.tensors, all_params);
        ResumeState r;
        if (ck.meta.phase == cfg.phase) {
            nn::ParamMap loaded;
            for (const auto& [name, t] : ck.tensors)
                if (name.rfind("adam.", 0) == 0) loaded.add(name, nn::Var::constant(t));
            opt.restore_state(trainable, loaded, checkpoint_adam_t(cfg.resume_checkpoint));
            r.start_iter = ck.meta.iteration;
            r.exact = true;
        }
        return r;
    }();

    const losses::FeatureExtractor extractor = make_extractor(cfg);
    TrainLogger logger(cfg.out_dir, rs.exact);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;

    CheckpointMeta meta;
    meta.phase = "umsn";
    meta.config_digest = cfg.digest();
    meta.master_seed = cfg.master_seed;
    meta.width_multiplier = cfg.width_multiplier;
    meta.mask_source = cfg.mask_source;
    meta.use_streams = ncfg.use_streams;
    meta.use_mask_concat = ncfg.use_mask_concat;
    meta.use_nrl = ncfg.use_nrl;
    meta.use_confidence = cfg.use_confidence;
    meta.has_snet = snet.has_value();
    meta.confidence_floor = cfg.loss.confidence_floor;

    auto save_at = [&](const std::string& path, long iter) {
        meta.iteration = iter;
        nn::ParamMap store = all_params;
        if (snet.has_value()) snet->collect(store);
        save_checkpoint(path, store, meta, &opt);
    };

    for (long iter = rs.start_iter + 1; iter <= cfg.iterations; ++iter) {
        const auto idx = batch_indices(cfg.master_seed, iter, static_cast<int>(samples.size()), cfg.batch_size);
        const Tensor y = batch_images(samples, idx, &LoadedSample::blurry);
        const Tensor x = batch_images(samples, idx, &LoadedSample::clean);
        const Tensor m_in = batch_planes(input_masks, idx);
        const Tensor m_loss = batch_planes(loss_masks, idx);
        const int batch = static_cast<int>(idx.size());

        trainable.zero_grads();
        ad::Var xhat = umsn.forward(ad::Var::constant(y), m_in);

        std::array<ad::Var, 4> conf;
        if (cfg.use_confidence) {
            ad::Var xdet = ad::detach(xhat);
            ad::Var xconst = ad::Var::constant(x);
            for (int i = 1; i <= kNumClasses; ++i) {
                const Tensor plane = plane_of(m_loss, i);
                conf[static_cast<size_t>(i - 1)] =
                    cn.forward(ad::mul_plane(xdet, plane), ad::mul_plane(xconst, plane));
            }
        } else {
            for (int i = 0; i < kNumClasses; ++i)
                conf[static_cast<size_t>(i)] = ad::Var::constant(Tensor({batch}, 1.0));
        }

        losses::TotalLossGraph tl = losses::total_loss_graph(xhat, x, m_loss, conf, extractor, cfg.loss);
        tl.value.backward();
        opt.step(trainable);

        if (iter % cfg.log_every == 0 || iter == cfg.iterations) {
            TrainRecord rec;
            rec.iter = iter;
            rec.phase = cfg.phase;
            rec.loss = tl.value.value()[0];
            for (int i = 0; i < kNumClasses; ++i) {
                const Tensor& pc = tl.per_class[static_cast<size_t>(i)].value();
                const Tensor& cv = conf[static_cast<size_t>(i)].value();
                real pa = 0.0, ca = 0.0;
                for (std::int64_t b = 0; b < pc.size(); ++b) pa += pc[b];
                for (std::int64_t b = 0; b < cv.size(); ++b) ca += cv[b];
                rec.per_class[static_cast<size_t>(i)] = pa / static_cast<real>(pc.size());
                rec.confidence[static_cast<size_t>(i)] = ca / static_cast<real>(cv.size());
            }
            rec.lr = cfg.learning_rate;
            rec.wallclock = seconds_since(t0);
            logger.write(rec);
            result.history.push_back(rec);
        }
        if (iter % cfg.checkpoint_every == 0 || iter == cfg.iterations) {
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_%06ld.ckpt", iter);
            save_at((fs::path(cfg.out_dir) / name).string(), iter);
        }
    }

    // train-set quality
    std::vector<Tensor> preds;
    real input_psnr = 0.0;
    for (size_t s = 0; s < samples.size(); ++s) {
        const int h = samples[s].clean.dim(1), w = samples[s].clean.dim(2);
        Tensor y1 = samples[s].blurry.reshaped({1, 3, h, w});
        Tensor m1 = input_masks[s].reshaped({1, kNumClasses, h, w});
        ad::Var xhat = umsn.forward(ad::Var::constant(y1), m1);
        preds.push_back(clamp_image(xhat.value().reshaped({3, h, w})));
        input_psnr += eval::psnr(samples[s].blurry, samples[s].clean).db;
    }
    result.final_train_psnr = mean_psnr(preds, samples);
    result.input_train_psnr = input_psnr / static_cast<real>(samples.size());

    result.final_checkpoint = (fs::path(cfg.out_dir) / "final.ckpt").string();
    save_at(result.final_checkpoint, cfg.iterations);
    return result;
}

TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.phase == "snet" || cfg.phase == "snet_finetune") return train_snet(cfg);
    if (cfg.phase == "stage1") return train_stage1(cfg);
    return train_umsn(cfg);
}

}  // namespace umsn::training
