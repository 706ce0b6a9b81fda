#include "imdyn/geometry.hpp"

#include "imdyn/error.hpp"

namespace imdyn {

Affine2 Affine2::inverse(double eps) const {
    const double det = determinant();
    if (!(std::abs(det) > eps) || !std::isfinite(det)) {
        throw SingularTransform("affine transform is singular (det=" + std::to_string(det) + ")");
    }
    if (a == 1.0 && b == 0.0 && c == 0.0 && d == 1.0) return translation({-tx, -ty});
    const double inv = 1.0 / det;
    Affine2 r;
    r.a = d * inv;
    r.b = -b * inv;
    r.c = -c * inv;
    r.d = a * inv;
    r.tx = -(r.a * tx + r.b * ty);
    r.ty = -(r.c * tx + r.d * ty);
    return r;
}

}  // namespace imdyn
