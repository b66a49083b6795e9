#include "featsim/label_map.hpp"

#include "featsim/error.hpp"

namespace featsim {

Tensor one_hot(const LabelMap& m, std::size_t num_classes) {
    FEATSIM_REQUIRE(m.height > 0 && m.width > 0, "one_hot: empty label map");
    Tensor out(Shape{num_classes, m.height, m.width});
    const std::size_t hw = m.size();
    for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t c = m.labels[i];
        FEATSIM_REQUIRE(c < num_classes,
                        "one_hot: label " + std::to_string(c) + " is not below " + std::to_string(num_classes));
        out[c * hw + i] = 1.0f;
    }
    return out;
}

LabelMap argmax_channels(const Tensor& probs) {
    FEATSIM_REQUIRE(probs.ndim() == 3, "argmax_channels: expected (K, H, W), got " + shape_to_string(probs.shape()));
    const std::size_t k = probs.dim(0), h = probs.dim(1), w = probs.dim(2), hw = h * w;
    LabelMap out(h, w);
    for (std::size_t i = 0; i < hw; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (probs[c * hw + i] > probs[best * hw + i]) best = c;
        out.labels[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

}  // namespace featsim
