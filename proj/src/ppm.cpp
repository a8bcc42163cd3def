#include "gentron/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gentron {

uint8_t quantize_latent(float v) {
    const float unit = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
    return static_cast<uint8_t>(std::lround(unit * 255.0f));
}

PpmImage latent_to_image(const TensorT<float>& latent) {
    if (latent.rank() != 3) throw ShapeError("ppm: latent must be [H,W,C]");
    const int h = latent.dim(0), w = latent.dim(1), c = latent.dim(2);
    PpmImage img;
    img.w = w;
    img.h = h;
    img.rgb.resize(static_cast<size_t>(h) * w * 3);
    for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col)
            for (int ch = 0; ch < 3; ++ch) {
                const int src = std::min(ch, c - 1);
                img.rgb[static_cast<size_t>((r * w + col) * 3 + ch)] = quantize_latent(
                    (*latent.data)[static_cast<size_t>((r * w + col) * c + src)]);
            }
    return img;
}

void write_ppm(const std::string& path, const PpmImage& img) {
    if (img.w < 1 || img.h < 1 ||
        img.rgb.size() != static_cast<size_t>(img.w) * static_cast<size_t>(img.h) * 3)
        throw ValueError("ppm: inconsistent image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("ppm: cannot write " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw IoError("ppm: short write to " + path);
}

PpmImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("ppm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (!in || magic != "P6" || maxval != 255 || w < 1 || h < 1)
        throw IoError("ppm: unsupported or corrupt header in " + path);
    in.get(); // single whitespace after maxval
    PpmImage img;
    img.w = w;
    img.h = h;
    img.rgb.resize(static_cast<size_t>(w) * static_cast<size_t>(h) * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
    if (!in) throw IoError("ppm: truncated pixel data in " + path);
    return img;
}

void write_latent_ppm(const std::string& path, const TensorT<float>& latent) {
    write_ppm(path, latent_to_image(latent));
}

std::vector<std::string> write_clip(const std::string& dir, const TensorT<float>& clip) {
    if (clip.rank() != 4) throw ShapeError("ppm: clip must be [t,H,W,C]");
    const int t = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
    fs::create_directories(dir);
    std::vector<std::string> names;
    const size_t frame_elems = static_cast<size_t>(h) * w * c;
    for (int f = 0; f < t; ++f) {
        auto frame = TensorT<float>::zeros({h, w, c});
        std::copy(clip.data->begin() + static_cast<std::ptrdiff_t>(f * frame_elems),
                  clip.data->begin() + static_cast<std::ptrdiff_t>((f + 1) * frame_elems),
                  frame.data->begin());
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03d.ppm", f);
        write_latent_ppm((fs::path(dir) / name).string(), frame);
        names.emplace_back(name);
    }
    json m;
    m["t"] = t;
    m["frames"] = names;
    std::ofstream out(fs::path(dir) / "clip.json", std::ios::binary);
    if (!out) throw IoError("ppm: cannot write clip manifest");
    out << m.dump(2) << "\n";
    if (!out) throw IoError("ppm: short write to clip manifest");
    return names;
}

} // namespace gentron
