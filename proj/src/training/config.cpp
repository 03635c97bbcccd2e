#include "umsn/training/config.hpp"

#include <json.hpp>

#include "umsn/core/fsutil.hpp"

namespace umsn::training {

using nlohmann::json;

void TrainConfig::validate() const {
    require(phase == "snet" || phase == "snet_finetune" || phase == "stage1" || phase == "umsn",
            "train config: unknown phase '" + phase + "'");
    require(learning_rate > 0.0, "train config: learning rate must be > 0");
    require(iterations >= 1, "train config: iterations must be >= 1");
    require(batch_size >= 1, "train config: batch size must be >= 1");
    require(width_multiplier > 0.0, "train config: width multiplier must be > 0");
    require(checkpoint_every >= 1, "train config: checkpoint_every must be >= 1");
    require(log_every >= 1, "train config: log_every must be >= 1");
    require(mask_source == "ground_truth" || mask_source == "snet",
            "train config: mask_source must be ground_truth or snet");
    if (phase == "stage1")
        require(class_index >= 1 && class_index <= 4, "train config: stage1 needs class_index in 1..4");
    if (phase == "snet_finetune")
        require(!resume_checkpoint.empty(), "train config: snet_finetune needs resume_checkpoint");
    if (mask_source == "snet")
        require(!snet_checkpoint.empty(), "train config: mask_source=snet needs snet_checkpoint");
    loss.validate();
}

std::string TrainConfig::to_json_text() const {
    json j{{"phase", phase},
           {"class_index", class_index},
           {"learning_rate", learning_rate},
           {"iterations", iterations},
           {"batch_size", batch_size},
           {"master_seed", master_seed},
           {"width_multiplier", width_multiplier},
           {"loss", json{{"lambda", loss.lambda},
                         {"lambda1", loss.lambda1},
                         {"confidence_floor", loss.confidence_floor}}},
           {"checkpoint_every", checkpoint_every},
           {"dataset_manifest", dataset_manifest},
           {"out_dir", out_dir},
           {"mask_source", mask_source},
           {"snet_checkpoint", snet_checkpoint},
           {"stage1_checkpoints", stage1_checkpoints},
           {"resume_checkpoint", resume_checkpoint},
           {"extractor_seed", extractor_seed},
           {"extractor_file", extractor_file},
           {"log_every", log_every},
           {"deterministic", deterministic},
           {"use_streams", use_streams},
           {"use_mask_concat", use_mask_concat},
           {"use_nrl", use_nrl},
           {"use_confidence", use_confidence},
           {"keep_stage1_heads", keep_stage1_heads}};
    return j.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    TrainConfig c;
    c.phase = j.value("phase", "");
    c.class_index = j.value("class_index", c.class_index);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.width_multiplier = j.value("width_multiplier", c.width_multiplier);
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        c.loss.lambda = l.value("lambda", c.loss.lambda);
        c.loss.lambda1 = l.value("lambda1", c.loss.lambda1);
        c.loss.confidence_floor = l.value("confidence_floor", c.loss.confidence_floor);
    }
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.dataset_manifest = j.value("dataset_manifest", c.dataset_manifest);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.mask_source = j.value("mask_source", c.mask_source);
    c.snet_checkpoint = j.value("snet_checkpoint", c.snet_checkpoint);
    if (j.contains("stage1_checkpoints")) c.stage1_checkpoints = j.at("stage1_checkpoints");
    c.resume_checkpoint = j.value("resume_checkpoint", c.resume_checkpoint);
    c.extractor_seed = j.value("extractor_seed", c.extractor_seed);
    c.extractor_file = j.value("extractor_file", c.extractor_file);
    c.log_every = j.value("log_every", c.log_every);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.use_streams = j.value("use_streams", c.use_streams);
    c.use_mask_concat = j.value("use_mask_concat", c.use_mask_concat);
    c.use_nrl = j.value("use_nrl", c.use_nrl);
    c.use_confidence = j.value("use_confidence", c.use_confidence);
    c.keep_stage1_heads = j.value("keep_stage1_heads", c.keep_stage1_heads);
    return c;
}

std::string TrainConfig::digest_text(const std::string& text) { return digest_hex(text); }

TrainConfig default_train_config(const std::string& phase) {
    TrainConfig c;
    c.phase = phase;
    if (phase == "snet") {
        c.learning_rate = 0.0002;
        c.iterations = 60000;
    } else if (phase == "snet_finetune") {
        c.learning_rate = 0.00001;
        c.iterations = 30000;
    } else if (phase == "stage1") {
        c.learning_rate = 0.0002;
        c.iterations = 50000;
    } else if (phase == "umsn") {
        c.learning_rate = 0.0002;
        c.iterations = 100000;
        c.batch_size = 16;
        c.mask_source = "snet";
    } else {
        throw std::invalid_argument("unknown phase: " + phase);
    }
    return c;
}

}  // namespace umsn::training
