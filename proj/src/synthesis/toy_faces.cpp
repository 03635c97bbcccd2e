#include "umsn/synthesis/toy_faces.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "umsn/core/image_io.hpp"
#include "umsn/core/rng.hpp"

namespace umsn::synthesis {

namespace {

struct Rgb {
    real r, g, b;
};

inline bool in_ellipse(real x, real y, real cx, real cy, real rx, real ry) {
    const real dx = (x - cx) / rx;
    const real dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

}  // namespace

ToyFace make_toy_face(std::uint64_t seed, int height, int width) {
    require(height >= 32 && width >= 32, "toy face needs at least 32x32 pixels");
    Rng rng(seed);

    const real cx = width * rng.uniform(0.45, 0.55);
    const real cy = height * rng.uniform(0.48, 0.56);
    const real face_rx = width * rng.uniform(0.26, 0.32);
    const real face_ry = height * rng.uniform(0.32, 0.38);
    const real hair_rx = face_rx * rng.uniform(1.25, 1.4);
    const real hair_ry = face_ry * rng.uniform(1.2, 1.35);
    const real hair_top = cy - 0.15 * face_ry;

    const real eye_dy = cy - 0.3 * face_ry;
    const real eye_dx = 0.42 * face_rx;
    const real eye_r = std::max<real>(1.5, 0.14 * face_rx);
    const real brow_dy = eye_dy - 2.2 * eye_r;
    const real nose_top = eye_dy + 1.2 * eye_r;
    const real nose_bot = cy + 0.28 * face_ry;
    const real nose_hw = std::max<real>(1.0, 0.09 * face_rx);
    const real mouth_cy = cy + 0.55 * face_ry;
    const real mouth_rx = 0.38 * face_rx;
    const real lip_h = std::max<real>(1.0, 0.05 * face_ry);

    const Rgb sky{static_cast<real>(rng.uniform(0.55, 0.75)), static_cast<real>(rng.uniform(0.65, 0.85)),
                  static_cast<real>(rng.uniform(0.85, 0.98))};
    const Rgb skin{static_cast<real>(rng.uniform(0.72, 0.88)), static_cast<real>(rng.uniform(0.52, 0.66)),
                   static_cast<real>(rng.uniform(0.42, 0.55))};
    const Rgb hair{static_cast<real>(rng.uniform(0.08, 0.35)), static_cast<real>(rng.uniform(0.05, 0.25)),
                   static_cast<real>(rng.uniform(0.02, 0.18))};
    const Rgb eye{0.95, 0.95, 0.97};
    const Rgb pupil{0.08, 0.10, 0.12};
    const Rgb brow{0.15, 0.10, 0.06};
    const Rgb nose{static_cast<real>(skin.r * 0.8), static_cast<real>(skin.g * 0.75),
                   static_cast<real>(skin.b * 0.7)};
    const Rgb lip{static_cast<real>(rng.uniform(0.6, 0.8)), static_cast<real>(rng.uniform(0.15, 0.3)),
                  static_cast<real>(rng.uniform(0.2, 0.35))};
    const Rgb teeth{0.96, 0.94, 0.9};

    ToyFace face;
    face.image = Tensor({3, height, width});
    face.labels = Tensor({height, width});

    // texture noise stream kept separate so geometry stays stable across sizes
    Rng tex(seed ^ 0x9e3779b97f4a7c15ULL);

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const real fx = static_cast<real>(x);
            const real fy = static_cast<real>(y);
            Rgb col = sky;
            int label = 0;

            // background vertical gradient + stripes for high-frequency detail
            const real grad = 0.1 * (fy / height) + 0.05 * std::sin(fx * 0.7);
            col.r = clamp01(col.r - grad);
            col.g = clamp01(col.g - grad);
            col.b = clamp01(col.b - grad * 0.5);

            if (in_ellipse(fx, fy, cx, hair_top, hair_rx, hair_ry) && fy < cy + 0.55 * face_ry) {
                col = hair;
                label = 10;
                col.r = clamp01(col.r + 0.08 * std::sin(fx * 1.3 + fy * 0.4));
            }
            if (in_ellipse(fx, fy, cx, cy, face_rx, face_ry)) {
                col = skin;
                label = 1;
                col.r = clamp01(col.r + 0.05 * std::sin(fy * 0.9));
                col.g = clamp01(col.g + 0.04 * std::sin(fx * 1.1));
            }
            // brows
            if (std::fabs(fy - brow_dy) < lip_h && std::fabs(fx - (cx - eye_dx)) < 1.6 * eye_r) {
                col = brow;
                label = 2;
            } else if (std::fabs(fy - brow_dy) < lip_h && std::fabs(fx - (cx + eye_dx)) < 1.6 * eye_r) {
                col = brow;
                label = 3;
            }
            // eyes with pupils
            if (in_ellipse(fx, fy, cx - eye_dx, eye_dy, 1.4 * eye_r, eye_r)) {
                col = in_ellipse(fx, fy, cx - eye_dx, eye_dy, 0.5 * eye_r, 0.6 * eye_r) ? pupil : eye;
                label = 4;
            } else if (in_ellipse(fx, fy, cx + eye_dx, eye_dy, 1.4 * eye_r, eye_r)) {
                col = in_ellipse(fx, fy, cx + eye_dx, eye_dy, 0.5 * eye_r, 0.6 * eye_r) ? pupil : eye;
                label = 5;
            }
            // nose wedge
            if (fy >= nose_top && fy <= nose_bot) {
                const real t = (fy - nose_top) / std::max<real>(1.0, nose_bot - nose_top);
                if (std::fabs(fx - cx) <= nose_hw * (0.4 + 0.6 * t) * 2.0) {
                    col = nose;
                    label = 6;
                }
            }
            // mouth: upper lip / teeth band / lower lip
            if (std::fabs(fx - cx) <= mouth_rx) {
                if (fy >= mouth_cy - 1.5 * lip_h && fy < mouth_cy - 0.5 * lip_h) {
                    col = lip;
                    label = 7;
                } else if (fy >= mouth_cy - 0.5 * lip_h && fy < mouth_cy + 0.5 * lip_h) {
                    col = teeth;
                    label = 8;
                } else if (fy >= mouth_cy + 0.5 * lip_h && fy <= mouth_cy + 1.5 * lip_h) {
                    col = lip;
                    label = 9;
                }
            }

            const real n = 0.01 * tex.normal();
            face.image.at(0, y, x) = clamp01(col.r + n);
            face.image.at(1, y, x) = clamp01(col.g + n);
            face.image.at(2, y, x) = clamp01(col.b + n);
            face.labels.at(y, x) = static_cast<real>(label);
        }
    }
    return face;
}

void write_toy_corpus(const std::string& dir, int count, int height, int width, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "clean");
    fs::create_directories(fs::path(dir) / "labels");
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "face%03d.png", i);
        const ToyFace face = make_toy_face(mix_seed(seed, static_cast<std::uint64_t>(i)), height, width);
        save_image_png((fs::path(dir) / "clean" / name).string(), face.image);
        save_index_png((fs::path(dir) / "labels" / name).string(), face.labels);
    }
}

}  // namespace umsn::synthesis
