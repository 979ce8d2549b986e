#pragma once

#include <cstring>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "petbench/common.hpp"
#include "petbench/volume.hpp"

namespace petbench::bridge {

/// (1, 1, h, w) float32 copy of a slice.
inline torch::Tensor to_tensor(const Image2D& img) {
    if (img.h <= 0 || img.w <= 0 || img.data.size() != img.size())
        throw ShapeError("image buffer does not match its dimensions");
    return torch::from_blob(const_cast<float*>(img.data.data()), {1, 1, img.h, img.w},
                            torch::kFloat32)
        .clone();
}

/// Accepts (h, w), (1, h, w), (1, 1, h, w); returns a float32 slice copy.
inline Image2D to_image(const torch::Tensor& t) {
    torch::Tensor v = t;
    while (v.dim() > 2) {
        if (v.size(0) != 1) throw ShapeError("tensor is not a single slice");
        v = v.squeeze(0);
    }
    if (v.dim() != 2) throw ShapeError("tensor is not a single slice");
    v = v.to(torch::kFloat32).contiguous();
    Image2D img(static_cast<int>(v.size(0)), static_cast<int>(v.size(1)));
    std::memcpy(img.data.data(), v.data_ptr<float>(), img.size() * sizeof(float));
    return img;
}

/// (n, 1, h, w) batch from equally shaped slices.
inline torch::Tensor batch_of(std::span<const Image2D* const> slices) {
    if (slices.empty()) throw ValueError("empty batch");
    std::vector<torch::Tensor> parts;
    parts.reserve(slices.size());
    for (const Image2D* img : slices) {
        if (img->h != slices.front()->h || img->w != slices.front()->w)
            throw ShapeError("batch mixes slice shapes");
        parts.push_back(to_tensor(*img));
    }
    return torch::cat(parts, 0);
}

/// Aligned (lt, ft) batches for a set of pairs.
inline std::pair<torch::Tensor, torch::Tensor> pair_batch(
    std::span<const ImagePair* const> pairs) {
    if (pairs.empty()) throw ValueError("empty batch");
    std::vector<const Image2D*> lt, ft;
    lt.reserve(pairs.size());
    ft.reserve(pairs.size());
    for (const ImagePair* p : pairs) {
        lt.push_back(&p->lt);
        ft.push_back(&p->ft);
    }
    return {batch_of(lt), batch_of(ft)};
}

}  // namespace petbench::bridge
