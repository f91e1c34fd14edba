#pragma once

#include "segsr/schedules.hpp"
#include "segsr/tensor.hpp"

namespace segsr {

// Seg Encoder/Decoder: nearest-neighbor resampling on class indices.

// full-resolution mask -> working-resolution MaskState (t = 0)
MaskState resize_codec_encode(const IntField& mask, int h_s, int w_s, int K);

// MaskState -> full-resolution class field
IntField resize_codec_decode(const MaskState& s, int H, int W);

// shared index-mapping core
IntField resize_nearest(const IntField& src, int H, int W);

}  // namespace segsr
