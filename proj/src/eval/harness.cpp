#include "umsn/eval/harness.hpp"

#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "umsn/core/fsutil.hpp"
#include "umsn/core/image_io.hpp"

namespace umsn::eval {

namespace fs = std::filesystem;
using nlohmann::json;

MetricReport evaluate_dataset(const DeblurFn& model, const synthesis::DatasetManifest& manifest,
                              const losses::FeatureExtractor& extractor, const EvalOptions& options) {
    if (manifest.samples.empty()) throw std::runtime_error("no samples in manifest");
    MetricReport report;
    report.extractor = extractor.describe();
    report.config_digest = options.config_digest;

    for (const auto& rec : manifest.samples) {
        Tensor clean, blurry;
        semantics::SemanticMaskSet masks;
        try {
            clean = load_image_png(manifest.resolve(rec.clean));
            blurry = load_image_png(manifest.resolve(rec.blurry));
            masks = semantics::mask_from_index(load_index_png(manifest.resolve(rec.masks)));
        } catch (const std::exception& e) {
            report.failures.push_back(rec.id + ": " + e.what());
            continue;
        }
        const Tensor deblurred = model(blurry, masks);

        ImageMetrics m;
        m.id = rec.id;
        m.psnr = psnr(deblurred, clean);
        m.ssim = ssim(deblurred, clean);
        m.d_feat = feature_distance(deblurred, clean, extractor);
        m.per_class = per_class_metrics(deblurred, clean, masks);
        report.images.push_back(m);

        if (options.write_grids && !options.out_dir.empty())
            save_image_row_png((fs::path(options.out_dir) / "grids" / (rec.id + ".png")).string(),
                               {blurry, deblurred, clean});
    }
    if (report.images.empty()) throw std::runtime_error("no evaluable samples (all files missing)");

    int finite = 0;
    for (const auto& m : report.images) {
        if (m.psnr.identical) {
            ++report.identical_count;
        } else {
            report.mean_psnr += m.psnr.db;
            ++finite;
        }
        report.mean_ssim += m.ssim;
        report.mean_d_feat += m.d_feat;
    }
    if (finite > 0) report.mean_psnr /= static_cast<real>(finite);
    report.mean_ssim /= static_cast<real>(report.images.size());
    report.mean_d_feat /= static_cast<real>(report.images.size());

    if (!options.out_dir.empty()) write_report(report, options.out_dir);
    return report;
}

void write_report(const MetricReport& report, const std::string& out_dir) {
    json per_image = json::array();
    for (const auto& m : report.images) {
        json classes = json::array();
        for (int c = 0; c < 4; ++c) {
            const ClassMetric& cm = m.per_class[static_cast<size_t>(c)];
            classes.push_back(json{{"class", c + 1},
                                   {"empty", cm.empty},
                                   {"identical", cm.identical},
                                   {"psnr", cm.psnr_db},
                                   {"ssim", cm.ssim},
                                   {"pixels", cm.pixels}});
        }
        per_image.push_back(json{{"id", m.id},
                                 {"psnr", m.psnr.db},
                                 {"identical", m.psnr.identical},
                                 {"ssim", m.ssim},
                                 {"d_feat", m.d_feat},
                                 {"per_class", classes}});
    }
    json doc{{"value_domain", report.value_domain},
             {"extractor", report.extractor},
             {"config_digest", report.config_digest},
             {"aggregate", json{{"mean_psnr", report.mean_psnr},
                                {"mean_ssim", report.mean_ssim},
                                {"mean_d_feat", report.mean_d_feat},
                                {"identical_count", report.identical_count},
                                {"images", report.images.size()},
                                {"failures", report.failures.size()}}},
             {"failures", report.failures},
             {"images", per_image}};
    write_file_atomic((fs::path(out_dir) / "report.json").string(), doc.dump(2) + "\n");

    std::ostringstream csv;
    csv << "id,psnr,identical,ssim,d_feat";
    for (int c = 1; c <= 4; ++c) csv << ",psnr_c" << c << ",ssim_c" << c;
    csv << "\n";
    csv.precision(10);
    for (const auto& m : report.images) {
        csv << m.id << "," << m.psnr.db << "," << (m.psnr.identical ? 1 : 0) << "," << m.ssim << "," << m.d_feat;
        for (int c = 0; c < 4; ++c) {
            const ClassMetric& cm = m.per_class[static_cast<size_t>(c)];
            csv << "," << cm.psnr_db << "," << cm.ssim;
        }
        csv << "\n";
    }
    write_file_atomic((fs::path(out_dir) / "report.csv").string(), csv.str());
}

}  // namespace umsn::eval
