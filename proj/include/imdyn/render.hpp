#pragma once

#include <optional>
#include <vector>

#include "imdyn/dynamics.hpp"
#include "imdyn/geometry.hpp"
#include "imdyn/raster.hpp"
#include "imdyn/scene.hpp"

namespace imdyn {

using ImageRgbaf = Raster<Rgbaf>;
using AlphaMap = Raster<float>;

/// One object's image-space layer. `rgba` is premultiplied; `albedo` and
/// `normal` are straight (not premultiplied) and empty when the object
/// carries no intrinsics, in which case it is composited but never relit.
struct Layer {
    ImageRgbaf rgba;
    ImageRgbf albedo;
    NormalMap normal;
    int z_order = 0;

    bool relightable() const { return !albedo.empty() && !normal.empty(); }
    int width() const { return rgba.width(); }
    int height() const { return rgba.height(); }
};

struct FramePack {
    int step = 0;
    ImageRgbf composited;  // X_hat
    ImageRgbf relit;       // X_tilde
    ImageRgbf albedo;      // A_hat, straight; zero where nothing relightable
    NormalMap normal;      // N_hat, unit where relit_alpha > 0
    AlphaMap relit_alpha;  // coverage of relightable layers
    AlphaMap coverage;     // coverage of all layers
    /// Flow to the next sampled frame; absent on the last frame.
    std::optional<FlowField> flow;
};

/// Rotation angle of the linear part (the rotation factor of its polar
/// decomposition; exact for similarities).
double rotation_angle(const Affine2& t);

/// Builds the step-0 layer of a bundle object: input-image colors under the
/// mask with alpha 1, plus straight albedo/normals when present.
Layer make_layer(const SceneBundle& bundle, std::size_t object_index);

/// Inverse-mapped bilinear resampling of `layer` through `t`, which maps
/// source pixel coordinates to output pixel coordinates. Output defaults to
/// the source size. Normals are rotated in-plane by the angle of `t`.
Layer warp_layer(const Layer& layer, const Affine2& t);
Layer warp_layer(const Layer& layer, const Affine2& t, int out_width, int out_height);

/// Back-to-front "over" compositing in ascending z_order (stable for ties).
ImageRgbf composite_frame(const ImageRgbf& background, std::span<const Layer> layers);

/// Composited straight albedo, unit normals, relightable coverage and the
/// coverage of all layers.
struct IntrinsicComposite {
    ImageRgbf albedo;
    NormalMap normal;
    AlphaMap alpha;
    AlphaMap coverage;
};
IntrinsicComposite composite_intrinsics(int width, int height, std::span<const Layer> layers);

/// Lambertian reshading. Where alpha > 0:
///   X_tilde = X_hat + alpha * (clamp(A * (ambient + intensity * max(0, N.L))) - X_hat)
/// so fully covered pixels become the shaded albedo and everything else
/// passes through.
ImageRgbf relight(const ImageRgbf& frame, const ImageRgbf& albedo, const NormalMap& normal, const AlphaMap& alpha,
                  const DirectionalLight& light);

/// Analytic flow (T_next o T_t^-1)(p) - p on pixels whose nearest source pixel
/// through T_t^-1 lies in `mask`; zero elsewhere.
FlowField flow_field(const Mask& mask, const Affine2& t_now, const Affine2& t_next);
FlowField flow_field(const Mask& mask, const Affine2& t_now, const Affine2& t_next, int out_width, int out_height);

/// Multi-object flow: each pixel takes the flow of the top-most (highest
/// z_order) object covering it.
struct FlowObject {
    const Mask* mask = nullptr;
    Affine2 now;
    Affine2 next;
    int z_order = 0;
};
FlowField scene_flow(std::span<const FlowObject> objects, int out_width, int out_height);

/// Renders every sample: warp, composite, relight, flow to the next sample.
/// Frames are rendered in parallel; `threads` <= 0 uses the hardware count.
std::vector<FramePack> render_sequence(const SceneBundle& bundle, std::span<const FrameSample> samples,
                                       int threads = 0);

}  // namespace imdyn
