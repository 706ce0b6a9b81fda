#include "imdyn/render.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace imdyn {
namespace {

struct Tap {
    int x = 0;
    int y = 0;
    float w = 0.0f;
};

// Bilinear taps for a sample at continuous pixel coordinate q (pixel centers
// at +0.5). Zero-weight and out-of-bounds taps are dropped.
int bilinear_taps(Vec2 q, int width, int height, std::array<Tap, 4>& taps) {
    const double u = q.x - 0.5, v = q.y - 0.5;
    const double fx0 = std::floor(u), fy0 = std::floor(v);
    if (!(std::abs(fx0) < 1e9 && std::abs(fy0) < 1e9)) return 0;
    const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
    const double fx = u - fx0, fy = v - fy0;
    const double wx[2] = {1.0 - fx, fx}, wy[2] = {1.0 - fy, fy};
    int n = 0;
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
            const double w = wx[i] * wy[j];
            const int x = x0 + i, y = y0 + j;
            if (w == 0.0 || x < 0 || y < 0 || x >= width || y >= height) continue;
            taps[static_cast<std::size_t>(n++)] = {x, y, static_cast<float>(w)};
        }
    return n;
}

Vec3f normalized3(Vec3f n) {
    const float len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (len == 0.0f) return {0.0f, 0.0f, 0.0f};
    return {n[0] / len, n[1] / len, n[2] / len};
}

Vec3f rotate_normal(Vec3f n, const Rotation& r) {
    const Vec2 t = r.apply({n[0], n[1]});
    return normalized3({static_cast<float>(t.x), static_cast<float>(t.y), n[2]});
}

std::vector<std::size_t> back_to_front(std::span<const Layer> layers) {
    std::vector<std::size_t> order(layers.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return layers[a].z_order < layers[b].z_order; });
    return order;
}

ImageRgbf resample_clamped(const ImageRgbf& img, int out_w, int out_h) {
    if (img.width() == out_w && img.height() == out_h) return img;
    ImageRgbf out(out_w, out_h);
    const double sx = static_cast<double>(img.width()) / out_w, sy = static_cast<double>(img.height()) / out_h;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
            const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
            const int x0 = static_cast<int>(u), y0 = static_cast<int>(v);
            const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
            const float fx = static_cast<float>(u - x0), fy = static_cast<float>(v - y0);
            Rgbf c{};
            for (int k = 0; k < 3; ++k) {
                const float top = img(x0, y0)[k] * (1 - fx) + img(x1, y0)[k] * fx;
                const float bot = img(x0, y1)[k] * (1 - fx) + img(x1, y1)[k] * fx;
                c[k] = top * (1 - fy) + bot * fy;
            }
            out(x, y) = c;
        }
    return out;
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

double rotation_angle(const Affine2& t) { return std::atan2(t.c - t.b, t.a + t.d); }

Layer make_layer(const SceneBundle& bundle, std::size_t index) {
    const SceneObject& o = bundle.objects.at(index);
    Layer layer;
    layer.z_order = bundle.z_order(index);
    layer.rgba = ImageRgbaf(bundle.width, bundle.height);
    for (int y = 0; y < bundle.height; ++y)
        for (int x = 0; x < bundle.width; ++x) {
            if (!o.mask(x, y)) continue;
            const Rgb8 c = bundle.image(x, y);
            layer.rgba(x, y) = {c[0] / 255.0f, c[1] / 255.0f, c[2] / 255.0f, 1.0f};
        }
    if (o.relightable()) {
        layer.albedo = to_float(*o.albedo);
        layer.normal = decode_normals(*o.normal);
    }
    return layer;
}

Layer warp_layer(const Layer& layer, const Affine2& t) { return warp_layer(layer, t, layer.width(), layer.height()); }

Layer warp_layer(const Layer& layer, const Affine2& t, int out_w, int out_h) {
    const Affine2 inv = t.inverse();
    const double theta = rotation_angle(t);
    const Rotation rot = Rotation::from_angle(theta);
    const bool relight = layer.relightable();

    Layer out;
    out.z_order = layer.z_order;
    out.rgba = ImageRgbaf(out_w, out_h);
    if (relight) {
        out.albedo = ImageRgbf(out_w, out_h);
        out.normal = NormalMap(out_w, out_h);
    }
    std::array<Tap, 4> taps;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const Vec2 q = inv.apply({x + 0.5, y + 0.5});
            const int n = bilinear_taps(q, layer.width(), layer.height(), taps);
            if (n == 0) continue;
            if (n == 1 && taps[0].w == 1.0f) {
                // Sample lands on a pixel center: copy without resampling.
                const Tap& tp = taps[0];
                out.rgba(x, y) = layer.rgba(tp.x, tp.y);
                if (relight) {
                    out.albedo(x, y) = layer.albedo(tp.x, tp.y);
                    out.normal(x, y) = theta == 0.0 ? layer.normal(tp.x, tp.y) : rotate_normal(layer.normal(tp.x, tp.y), rot);
                }
                continue;
            }
            Rgbaf c{};
            Rgbf a{};
            Vec3f nn{};
            for (int k = 0; k < n; ++k) {
                const Tap& tp = taps[static_cast<std::size_t>(k)];
                const Rgbaf& s = layer.rgba(tp.x, tp.y);
                for (int ch = 0; ch < 4; ++ch) c[ch] += tp.w * s[ch];
                if (relight) {
                    const float wa = tp.w * s[3];
                    const Rgbf& sa = layer.albedo(tp.x, tp.y);
                    const Vec3f& sn = layer.normal(tp.x, tp.y);
                    for (int ch = 0; ch < 3; ++ch) {
                        a[ch] += wa * sa[ch];
                        nn[ch] += wa * sn[ch];
                    }
                }
            }
            c[3] = std::min(c[3], 1.0f);
            out.rgba(x, y) = c;
            if (relight && c[3] > 0.0f) {
                out.albedo(x, y) = {a[0] / c[3], a[1] / c[3], a[2] / c[3]};
                out.normal(x, y) = rotate_normal(normalized3(nn), rot);
            }
        }
    return out;
}

ImageRgbf composite_frame(const ImageRgbf& background, std::span<const Layer> layers) {
    ImageRgbf out = background;
    for (std::size_t i : back_to_front(layers)) {
        const Layer& l = layers[i];
        require_same_shape(background, l.rgba, "layer");
        auto dst = out.pixels();
        auto src = l.rgba.pixels();
        for (std::size_t p = 0; p < dst.size(); ++p) {
            const float alpha = src[p][3];
            if (alpha == 0.0f) continue;
            for (int ch = 0; ch < 3; ++ch) dst[p][ch] = src[p][ch] + (1.0f - alpha) * dst[p][ch];
        }
    }
    return out;
}

IntrinsicComposite composite_intrinsics(int width, int height, std::span<const Layer> layers) {
    ImageRgbf albedo(width, height);
    NormalMap normal(width, height);
    AlphaMap alpha(width, height);
    AlphaMap coverage(width, height);
    for (std::size_t i : back_to_front(layers)) {
        const Layer& l = layers[i];
        if (l.width() != width || l.height() != height) throw ShapeError("layer: raster size mismatch");
        const bool lit = l.relightable();
        for (std::size_t p = 0; p < alpha.size(); ++p) {
            const float a = l.rgba.pixels()[p][3];
            if (a == 0.0f) continue;
            const float keep = 1.0f - a;
            auto& A = albedo.pixels()[p];
            auto& N = normal.pixels()[p];
            for (int ch = 0; ch < 3; ++ch) {
                A[ch] = (lit ? a * l.albedo.pixels()[p][ch] : 0.0f) + keep * A[ch];
                N[ch] = (lit ? a * l.normal.pixels()[p][ch] : 0.0f) + keep * N[ch];
            }
            alpha.pixels()[p] = (lit ? a : 0.0f) + keep * alpha.pixels()[p];
            coverage.pixels()[p] = a + keep * coverage.pixels()[p];
        }
    }
    // Premultiplied -> straight.
    for (std::size_t p = 0; p < alpha.size(); ++p) {
        const float a = alpha.pixels()[p];
        auto& A = albedo.pixels()[p];
        auto& N = normal.pixels()[p];
        if (a > 0.0f) {
            if (a != 1.0f)
                for (float& v : A) v /= a;
            N = normalized3(N);
        } else {
            A = {};
            N = {};
        }
    }
    return {std::move(albedo), std::move(normal), std::move(alpha), std::move(coverage)};
}

ImageRgbf relight(const ImageRgbf& frame, const ImageRgbf& albedo, const NormalMap& normal, const AlphaMap& alpha,
                  const DirectionalLight& light) {
    require_same_shape(frame, albedo, "albedo");
    require_same_shape(frame, normal, "normal");
    require_same_shape(frame, alpha, "alpha");
    const auto& L = light.direction;
    ImageRgbf out = frame;
    for (std::size_t p = 0; p < out.size(); ++p) {
        const float a = alpha.pixels()[p];
        if (a <= 0.0f) continue;
        const Vec3f& n = normal.pixels()[p];
        const double ndotl = n[0] * L[0] + n[1] * L[1] + n[2] * L[2];
        const double shade = light.ambient + light.intensity * std::max(0.0, ndotl);
        for (int ch = 0; ch < 3; ++ch) {
            const float lit = static_cast<float>(std::clamp(albedo.pixels()[p][ch] * shade, 0.0, 1.0));
            float& x = out.pixels()[p][ch];
            x = a >= 1.0f ? lit : x + a * (lit - x);
        }
    }
    return out;
}

FlowField flow_field(const Mask& mask, const Affine2& t_now, const Affine2& t_next) {
    return flow_field(mask, t_now, t_next, mask.width(), mask.height());
}

FlowField flow_field(const Mask& mask, const Affine2& t_now, const Affine2& t_next, int out_w, int out_h) {
    const FlowObject obj{&mask, t_now, t_next, 0};
    return scene_flow(std::span(&obj, 1), out_w, out_h);
}

FlowField scene_flow(std::span<const FlowObject> objects, int out_w, int out_h) {
    struct Prepared {
        const Mask* mask;
        Affine2 inv;
        Affine2 motion;  // T_next o T_now^-1
        int z;
    };
    std::vector<Prepared> prep;
    for (const auto& o : objects) {
        o.next.inverse();  // validates invertibility
        const Affine2 inv = o.now.inverse();
        prep.push_back({o.mask, inv, o.next * inv, o.z_order});
    }
    std::stable_sort(prep.begin(), prep.end(), [](const Prepared& a, const Prepared& b) { return a.z > b.z; });

    FlowField flow(out_w, out_h);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const Vec2 p{x + 0.5, y + 0.5};
            for (const auto& o : prep) {
                const Vec2 q = o.inv.apply(p);
                const double fx = std::floor(q.x), fy = std::floor(q.y);
                if (fx < 0 || fy < 0 || fx >= o.mask->width() || fy >= o.mask->height()) continue;
                if (!(*o.mask)(static_cast<int>(fx), static_cast<int>(fy))) continue;
                const Vec2 d = o.motion.apply(p) - p;
                flow(x, y) = {static_cast<float>(d.x), static_cast<float>(d.y)};
                break;
            }
        }
    return flow;
}

std::vector<FramePack> render_sequence(const SceneBundle& bundle, std::span<const FrameSample> samples, int threads) {
    const int out_w = bundle.render.resolution_width, out_h = bundle.render.resolution_height;
    const Affine2 to_render =
        Affine2::scale(static_cast<double>(out_w) / bundle.width, static_cast<double>(out_h) / bundle.height);
    const std::size_t n_obj = bundle.objects.size();
    for (const auto& s : samples)
        if (s.transforms.size() != n_obj) throw ValidationError("samples", "one transform per object is required");

    std::vector<Layer> base;
    base.reserve(n_obj);
    for (std::size_t i = 0; i < n_obj; ++i) base.push_back(make_layer(bundle, i));
    const ImageRgbf background = resample_clamped(to_float(bundle.background), out_w, out_h);

    std::vector<FramePack> frames(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t k) {
        const FrameSample& s = samples[k];
        std::vector<Layer> layers;
        layers.reserve(n_obj);
        for (std::size_t i = 0; i < n_obj; ++i) layers.push_back(warp_layer(base[i], to_render * s.transforms[i], out_w, out_h));

        FramePack fp;
        fp.step = s.step;
        fp.composited = composite_frame(background, layers);
        IntrinsicComposite ic = composite_intrinsics(out_w, out_h, layers);
        fp.relit = relight(fp.composited, ic.albedo, ic.normal, ic.alpha, bundle.light);
        fp.albedo = std::move(ic.albedo);
        fp.normal = std::move(ic.normal);
        fp.relit_alpha = std::move(ic.alpha);
        fp.coverage = std::move(ic.coverage);
        if (bundle.render.emit_flow && k + 1 < samples.size()) {
            std::vector<FlowObject> objs;
            for (std::size_t i = 0; i < n_obj; ++i)
                objs.push_back({&bundle.objects[i].mask, to_render * s.transforms[i],
                                to_render * samples[k + 1].transforms[i], bundle.z_order(i)});
            fp.flow = scene_flow(objs, out_w, out_h);
        }
        frames[k] = std::move(fp);
    });
    return frames;
}

}  // namespace imdyn
