#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gentron/tensor.hpp"

namespace gentron {

template <typename T>
struct ImageSampleT {
    TensorT<T> latent; // [H,W,C]
    std::string prompt;
};

template <typename T>
struct ImageDatasetT {
    std::vector<ImageSampleT<T>> items;
    bool empty() const { return items.empty(); }
    size_t size() const { return items.size(); }
};

template <typename T>
struct VideoSampleT {
    TensorT<T> clip; // [t,H,W,C]
    std::string prompt;
};

template <typename T>
struct VideoDatasetT {
    std::vector<VideoSampleT<T>> items;
    bool empty() const { return items.empty(); }
    size_t size() const { return items.size(); }
};

using ImageSample = ImageSampleT<float>;
using ImageDataset = ImageDatasetT<float>;
using VideoSample = VideoSampleT<float>;
using VideoDataset = VideoDatasetT<float>;

// Synthetic generators. Both are deterministic functions of (n, seed).
//
// gaussians: four labeled clusters; each latent is mu_k + sigma*noise with a
// constant per-cluster mean and the cluster name as prompt.
ImageDataset make_gaussians(int n, uint64_t seed, int h = 8, int w = 8, int c = 4);

// shapes: 8x8xC latents carrying an axis-aligned square or cross in one of the
// four quadrants; prompts follow the grammar "<shape> <vpos> <hpos>", e.g.
// "square top left". 8 classes total.
ImageDataset make_shapes(int n, uint64_t seed, int c = 4);

// The class vocabulary of make_shapes, in canonical order.
std::vector<std::string> shapes_class_prompts();

// Noise-free class template for "<shape> <vpos> <hpos>"; the centroid target
// used by nearest-centroid evaluation.
TensorT<float> shapes_class_template(const std::string& prompt, int c = 4);

// Wraps an image set into clips: frame f is the image cyclically shifted f
// pixels to the right, so every clip carries genuine motion with a per-frame
// appearance identical up to translation.
VideoDataset make_roll_clips(const ImageDataset& images, int t_frames);

// On-disk layout: <dir>/manifest.json plus <dir>/data.bin holding every
// latent's f32 little-endian payload concatenated in item order.
void save_image_dataset(const ImageDataset& ds, const std::string& dir);
ImageDataset load_image_dataset(const std::string& dir);
void save_video_dataset(const VideoDataset& ds, const std::string& dir);
VideoDataset load_video_dataset(const std::string& dir);

} // namespace gentron
