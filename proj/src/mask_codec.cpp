#include "segsr/mask_codec.hpp"

#include "segsr/errors.hpp"

namespace segsr {

IntField resize_nearest(const IntField& src, int H, int W) {
  require(H >= 1 && W >= 1 && src.h >= 1 && src.w >= 1, "resize: empty geometry");
  IntField out(H, W);
  for (int y = 0; y < H; ++y) {
    const int sy = int(int64_t(y) * src.h / H);
    for (int x = 0; x < W; ++x) {
      const int sx = int(int64_t(x) * src.w / W);
      out.at(y, x) = src.at(sy, sx);
    }
  }
  return out;
}

MaskState resize_codec_encode(const IntField& mask, int h_s, int w_s, int K) {
  for (int32_t c : mask.v)
    require(c >= 0 && c < K, "resize_codec_encode: class value out of range");
  MaskState s;
  s.classes = resize_nearest(mask, h_s, w_s);
  s.t = 0;
  return s;
}

IntField resize_codec_decode(const MaskState& s, int H, int W) {
  return resize_nearest(s.classes, H, W);
}

}  // namespace segsr
