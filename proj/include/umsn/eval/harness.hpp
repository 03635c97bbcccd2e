#pragma once

#include <functional>
#include <string>
#include <vector>

#include "umsn/eval/metrics.hpp"
#include "umsn/synthesis/dataset.hpp"

namespace umsn::eval {

/// Clamped deblurred image for one (blurry, masks) pair. The identity model
/// (pass-through) serves as the no-op baseline.
using DeblurFn = std::function<Tensor(const Tensor& blurry, const semantics::SemanticMaskSet& masks)>;

struct ImageMetrics {
    std::string id;
    PsnrResult psnr;
    real ssim = 0.0;
    real d_feat = 0.0;
    std::array<ClassMetric, 4> per_class;
};

struct MetricReport {
    std::vector<ImageMetrics> images;
    std::vector<std::string> failures;  // sample ids with missing/broken files
    real mean_psnr = 0.0;               // over non-identical images
    real mean_ssim = 0.0;
    real mean_d_feat = 0.0;
    int identical_count = 0;
    std::string extractor;
    std::string config_digest;
    std::string value_domain = "float32 [0,1] after clamping";

    bool partial() const { return !failures.empty(); }
};

struct EvalOptions {
    std::string out_dir;       // report.json / report.csv / grids
    bool write_grids = false;  // blurry | deblurred | truth rows
    std::string config_digest;
};

/// Deblurs and scores every manifest sample. Missing files are listed and
/// evaluation continues; at least one scorable sample is required.
MetricReport evaluate_dataset(const DeblurFn& model, const synthesis::DatasetManifest& manifest,
                              const losses::FeatureExtractor& extractor, const EvalOptions& options);

void write_report(const MetricReport& report, const std::string& out_dir);

}  // namespace umsn::eval
