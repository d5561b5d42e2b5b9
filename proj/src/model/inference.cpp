#include "abpn/error.hpp"
#include "abpn/model.hpp"

namespace abpn {

Tensor<float> image_to_tensor(const ImageBuffer& img) { return images_to_tensor({&img}); }

Tensor<float> images_to_tensor(const std::vector<const ImageBuffer*>& imgs) {
  if (imgs.empty()) throw DimensionError("images_to_tensor", "batch", "no images");
  const int h = imgs.front()->height(), w = imgs.front()->width();
  Tensor<float> t(Shape{static_cast<std::int64_t>(imgs.size()), 3, h, w});
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    const ImageBuffer& img = *imgs[n];
    if (img.height() != h || img.width() != w)
      throw DimensionError("images_to_tensor", "spatial", "batch images differ in size");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(static_cast<std::int64_t>(n), c, y, x) = static_cast<float>(img.at(y, x, c));
  }
  return t;
}

ImageBuffer tensor_to_image(const Tensor<float>& t, std::int64_t index) {
  const Shape& s = t.shape();
  if (s.c != 3) throw DimensionError("tensor_to_image", "channels", "expected 3 channels, got " + s.str());
  if (index < 0 || index >= s.n) throw DimensionError("tensor_to_image", "batch", "index out of range");
  ImageBuffer img(static_cast<int>(s.h), static_cast<int>(s.w));
  for (int c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x)
        img.at(static_cast<int>(y), static_cast<int>(x), c) = t.at(index, c, y, x);
  return img;
}

SrFunction make_sr_function(const NetworkConfig& config, const ModelWeights<float>& weights) {
  config.validate();
  return [config, weights](const ImageBuffer& lr) {
    Tape<float> tape;
    NoGradGuard<float> guard(tape);
    ForwardContext<float> ctx{tape, weights, config};
    auto out = forward(ctx, make_var(image_to_tensor(lr)));
    return tensor_to_image(out->value);
  };
}

SrFunction make_bicubic_function(int scale) {
  return [scale](const ImageBuffer& lr) { return bicubic_resize(lr, lr.height() * scale, lr.width() * scale); };
}

}  // namespace abpn
