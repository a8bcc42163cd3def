#include "gentron/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gentron/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gentron {

namespace {

constexpr const char* kClusterNames[4] = {"alpha", "beta", "gamma", "delta"};
constexpr double kClusterMeans[4] = {-0.9, -0.3, 0.3, 0.9};
constexpr double kClusterSigma = 0.1;

constexpr float kShapeBg = -0.8f;
constexpr float kShapeFg = 0.8f;
constexpr double kShapeNoise = 0.05;

// quadrant origin: vpos in {top, bottom}, hpos in {left, right} on an 8x8 grid
bool parse_shape_prompt(const std::string& prompt, bool& is_square, int& qr, int& qc) {
    std::istringstream ss(prompt);
    std::string shape, vpos, hpos, extra;
    if (!(ss >> shape >> vpos >> hpos) || (ss >> extra)) return false;
    if (shape == "square")
        is_square = true;
    else if (shape == "cross")
        is_square = false;
    else
        return false;
    if (vpos == "top")
        qr = 0;
    else if (vpos == "bottom")
        qr = 4;
    else
        return false;
    if (hpos == "left")
        qc = 0;
    else if (hpos == "right")
        qc = 4;
    else
        return false;
    return true;
}

void paint_shape(TensorT<float>& latent, bool is_square, int qr, int qc, int c) {
    const int w = 8;
    auto at = [&](int r, int col, int ch) -> float& {
        return (*latent.data)[static_cast<size_t>((r * w + col) * c + ch)];
    };
    if (is_square) {
        // solid 3x3 block anchored at the quadrant corner
        for (int r = qr; r < qr + 3; ++r)
            for (int col = qc; col < qc + 3; ++col)
                for (int ch = 0; ch < c; ++ch) at(r, col, ch) = kShapeFg;
    } else {
        // plus sign: full arm row and arm column inside the 4x4 quadrant
        for (int col = qc; col < qc + 4; ++col)
            for (int ch = 0; ch < c; ++ch) at(qr + 1, col, ch) = kShapeFg;
        for (int r = qr; r < qr + 4; ++r)
            for (int ch = 0; ch < c; ++ch) at(r, qc + 1, ch) = kShapeFg;
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("dataset: cannot write " + path.string());
    out << text;
    if (!out) throw IoError("dataset: short write to " + path.string());
}

void append_payload(std::ofstream& out, const TensorT<float>& t) {
    out.write(reinterpret_cast<const char*>(t.data->data()),
              static_cast<std::streamsize>(t.data->size() * sizeof(float)));
}

json load_manifest(const fs::path& dir, const char* expected_type) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw IoError("dataset: cannot open " + (dir / "manifest.json").string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw IoError("dataset: malformed manifest: " + std::string(e.what()));
    }
    if (!m.contains("type") || m["type"] != expected_type)
        throw IoError("dataset: manifest type mismatch");
    return m;
}

std::vector<float> read_payload(const fs::path& dir, size_t expected_floats) {
    std::ifstream in(dir / "data.bin", std::ios::binary | std::ios::ate);
    if (!in) throw IoError("dataset: cannot open " + (dir / "data.bin").string());
    const auto bytes = static_cast<size_t>(in.tellg());
    if (bytes != expected_floats * sizeof(float))
        throw IoError("dataset: data.bin size does not match manifest");
    std::vector<float> buf(expected_floats);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("dataset: short read from data.bin");
    return buf;
}

} // namespace

ImageDataset make_gaussians(int n, uint64_t seed, int h, int w, int c) {
    if (n < 1) throw ValueError("make_gaussians: n must be >= 1");
    if (h < 1 || w < 1 || c < 1) throw ValueError("make_gaussians: bad latent dims");
    Rng rng(seed);
    ImageDataset ds;
    ds.items.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int k = i % 4;
        ImageSample s;
        s.prompt = kClusterNames[k];
        s.latent = TensorT<float>::zeros({h, w, c});
        for (auto& v : *s.latent.data)
            v = static_cast<float>(kClusterMeans[k] + kClusterSigma * rng.normal());
        ds.items.push_back(std::move(s));
    }
    return ds;
}

std::vector<std::string> shapes_class_prompts() {
    std::vector<std::string> out;
    for (const char* shape : {"square", "cross"})
        for (const char* vpos : {"top", "bottom"})
            for (const char* hpos : {"left", "right"})
                out.push_back(std::string(shape) + " " + vpos + " " + hpos);
    return out;
}

TensorT<float> shapes_class_template(const std::string& prompt, int c) {
    bool is_square = false;
    int qr = 0, qc = 0;
    if (!parse_shape_prompt(prompt, is_square, qr, qc))
        throw ValueError("shapes: unknown prompt '" + prompt + "'");
    auto latent = TensorT<float>::full({8, 8, c}, kShapeBg);
    paint_shape(latent, is_square, qr, qc, c);
    return latent;
}

ImageDataset make_shapes(int n, uint64_t seed, int c) {
    if (n < 1) throw ValueError("make_shapes: n must be >= 1");
    if (c < 1) throw ValueError("make_shapes: bad channel count");
    Rng rng(seed);
    const auto prompts = shapes_class_prompts();
    ImageDataset ds;
    ds.items.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        ImageSample s;
        s.prompt = prompts[static_cast<size_t>(i) % prompts.size()];
        s.latent = shapes_class_template(s.prompt, c);
        for (auto& v : *s.latent.data) v += static_cast<float>(kShapeNoise * rng.normal());
        ds.items.push_back(std::move(s));
    }
    return ds;
}

VideoDataset make_roll_clips(const ImageDataset& images, int t_frames) {
    if (t_frames < 1) throw ValueError("make_roll_clips: t_frames must be >= 1");
    VideoDataset out;
    out.items.reserve(images.size());
    for (const auto& img : images.items) {
        if (img.latent.rank() != 3) throw ShapeError("make_roll_clips: latents must be [H,W,C]");
        const int h = img.latent.dim(0), w = img.latent.dim(1), c = img.latent.dim(2);
        VideoSample s;
        s.prompt = img.prompt;
        s.clip = TensorT<float>::zeros({t_frames, h, w, c});
        for (int f = 0; f < t_frames; ++f)
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col)
                    for (int ch = 0; ch < c; ++ch) {
                        const int src = (col - f % w + w) % w;
                        (*s.clip.data)[static_cast<size_t>(((f * h + r) * w + col) * c + ch)] =
                            (*img.latent.data)[static_cast<size_t>((r * w + src) * c + ch)];
                    }
        out.items.push_back(std::move(s));
    }
    return out;
}

void save_image_dataset(const ImageDataset& ds, const std::string& dir) {
    if (ds.empty()) throw ValueError("save_image_dataset: empty dataset");
    const auto shape = ds.items.front().latent.shape;
    fs::create_directories(dir);
    json m;
    m["type"] = "image";
    m["shape"] = shape;
    json items = json::array();
    std::ofstream bin(fs::path(dir) / "data.bin", std::ios::binary);
    if (!bin) throw IoError("dataset: cannot write data.bin");
    for (const auto& s : ds.items) {
        if (s.latent.shape != shape) throw ShapeError("save_image_dataset: ragged shapes");
        items.push_back(json{{"prompt", s.prompt}});
        append_payload(bin, s.latent);
    }
    if (!bin) throw IoError("dataset: short write to data.bin");
    bin.close();
    m["items"] = std::move(items);
    write_file(fs::path(dir) / "manifest.json", m.dump(2) + "\n");
}

ImageDataset load_image_dataset(const std::string& dir) {
    const auto m = load_manifest(dir, "image");
    if (!m.contains("shape") || !m.contains("items"))
        throw IoError("dataset: manifest missing fields");
    const auto shape = m["shape"].get<std::vector<int>>();
    if (shape.size() != 3) throw IoError("dataset: image shape must be rank 3");
    const auto& items = m["items"];
    const size_t per = static_cast<size_t>(detail::shape_numel(shape));
    const auto buf = read_payload(dir, per * items.size());
    ImageDataset ds;
    ds.items.reserve(items.size());
    size_t off = 0;
    for (const auto& it : items) {
        ImageSample s;
        s.prompt = it.at("prompt").get<std::string>();
        s.latent = TensorT<float>::zeros(shape);
        std::copy(buf.begin() + static_cast<std::ptrdiff_t>(off),
                  buf.begin() + static_cast<std::ptrdiff_t>(off + per), s.latent.data->begin());
        off += per;
        ds.items.push_back(std::move(s));
    }
    return ds;
}

void save_video_dataset(const VideoDataset& ds, const std::string& dir) {
    if (ds.empty()) throw ValueError("save_video_dataset: empty dataset");
    const auto shape = ds.items.front().clip.shape;
    fs::create_directories(dir);
    json m;
    m["type"] = "video";
    m["shape"] = shape;
    json items = json::array();
    std::ofstream bin(fs::path(dir) / "data.bin", std::ios::binary);
    if (!bin) throw IoError("dataset: cannot write data.bin");
    for (const auto& s : ds.items) {
        if (s.clip.shape != shape) throw ShapeError("save_video_dataset: ragged shapes");
        items.push_back(json{{"prompt", s.prompt}});
        append_payload(bin, s.clip);
    }
    if (!bin) throw IoError("dataset: short write to data.bin");
    bin.close();
    m["items"] = std::move(items);
    write_file(fs::path(dir) / "manifest.json", m.dump(2) + "\n");
}

VideoDataset load_video_dataset(const std::string& dir) {
    const auto m = load_manifest(dir, "video");
    if (!m.contains("shape") || !m.contains("items"))
        throw IoError("dataset: manifest missing fields");
    const auto shape = m["shape"].get<std::vector<int>>();
    if (shape.size() != 4) throw IoError("dataset: video shape must be rank 4");
    const auto& items = m["items"];
    const size_t per = static_cast<size_t>(detail::shape_numel(shape));
    const auto buf = read_payload(dir, per * items.size());
    VideoDataset ds;
    ds.items.reserve(items.size());
    size_t off = 0;
    for (const auto& it : items) {
        VideoSample s;
        s.prompt = it.at("prompt").get<std::string>();
        s.clip = TensorT<float>::zeros(shape);
        std::copy(buf.begin() + static_cast<std::ptrdiff_t>(off),
                  buf.begin() + static_cast<std::ptrdiff_t>(off + per), s.clip.data->begin());
        off += per;
        ds.items.push_back(std::move(s));
    }
    return ds;
}

} // namespace gentron
