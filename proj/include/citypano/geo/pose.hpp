#pragma once

#include "citypano/geo/quaternion.hpp"
#include "citypano/geo/vec3.hpp"

namespace citypano {

/// Camera position plus orientation; the orientation maps the camera's
/// forward axis (+X) into the world frame.
struct CameraPose {
    Vec3 position;
    Quaternion orientation;

    Vec3 forward() const { return orientation.rotate(Vec3::unit_x()); }
    Vec3 to_world(const Vec3& camera_dir) const { return orientation.rotate(camera_dir); }
};

} // namespace citypano
