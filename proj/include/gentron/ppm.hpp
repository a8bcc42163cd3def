#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gentron/tensor.hpp"

namespace gentron {

struct PpmImage {
    int w = 0;
    int h = 0;
    std::vector<uint8_t> rgb; // 3 bytes per pixel, row-major
};

// [-1,1] -> [0,255], clamped
uint8_t quantize_latent(float v);

// First three channels become R,G,B; narrower latents replicate their last
// channel so grayscale content stays visible.
PpmImage latent_to_image(const TensorT<float>& latent); // [H,W,C]

void write_ppm(const std::string& path, const PpmImage& img);
PpmImage read_ppm(const std::string& path);
void write_latent_ppm(const std::string& path, const TensorT<float>& latent);

// clip [t,H,W,C] -> <dir>/frame_000.ppm ... plus <dir>/clip.json listing the
// frame order; returns the frame file names in order.
std::vector<std::string> write_clip(const std::string& dir, const TensorT<float>& clip);

} // namespace gentron
