//! Exact projective geometry for the front camera and the top-down grid.
//!
//! Everything in this module is a pure function of immutable inputs, computed
//! in `f64`. The same code annotates generated scenes and serves as the
//! reference the learned model is judged against, so the conventions are
//! pinned down precisely:
//!
//! * ego frame: `x` lateral-right, `y` forward, `z` up, meters;
//! * image frame: `u` rightward, `v` downward, origin at the top-left,
//!   principal point at the image center;
//! * grid frame: `u = anchor_u + px_per_m * x`, `v = anchor_v - px_per_m * y`,
//!   so the ego sits at the bottom-center anchor facing row 0.
//!
//! Positive `pitch_deg` tilts the optical axis down toward the ground.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Near clipping plane in meters. Points at or behind it do not project.
pub const NEAR_PLANE_M: f64 = 0.1;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("horizontal fov must lie strictly between 0 and 180 degrees, got {0}")]
    InvalidFov(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("ground plane is not visible from this camera configuration")]
    SingularConfiguration,
}

/// Wrap an angle to the half-open interval `(-pi, pi]`.
pub fn wrap_angle(rad: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = rad % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Horizontal-FOV pinhole focal length in pixels: `(width / 2) / tan(hfov / 2)`.
pub fn focal_from_fov(width_px: u32, hfov_deg: f64) -> Result<f64, GeometryError> {
    if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
        return Err(GeometryError::InvalidFov(hfov_deg));
    }
    Ok(width_px as f64 / 2.0 / (hfov_deg.to_radians() / 2.0).tan())
}

/// Pinhole camera mounted on the ego vehicle, facing forward.
///
/// Square pixels: the vertical focal length equals the horizontal one derived
/// from `hfov_deg`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraModel {
    pub width_px: u32,
    pub height_px: u32,
    pub hfov_deg: f64,
    pub cam_height_m: f64,
    pub pitch_deg: f64,
    pub focal_px: f64,
}

impl CameraModel {
    /// Builds a camera with `pitch_deg = 0` (optical axis parallel to the ground).
    pub fn new(
        width_px: u32,
        height_px: u32,
        hfov_deg: f64,
        cam_height_m: f64,
    ) -> Result<Self, GeometryError> {
        Self::with_pitch(width_px, height_px, hfov_deg, cam_height_m, 0.0)
    }

    pub fn with_pitch(
        width_px: u32,
        height_px: u32,
        hfov_deg: f64,
        cam_height_m: f64,
        pitch_deg: f64,
    ) -> Result<Self, GeometryError> {
        if width_px == 0 || height_px == 0 {
            return Err(GeometryError::InvalidCamera(format!(
                "image dimensions must be positive, got {width_px}x{height_px}"
            )));
        }
        if !(cam_height_m > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "camera height must be positive, got {cam_height_m}"
            )));
        }
        if !(pitch_deg.abs() < 90.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "pitch must lie strictly between -90 and 90 degrees, got {pitch_deg}"
            )));
        }
        let focal_px = focal_from_fov(width_px, hfov_deg)?;
        Ok(Self {
            width_px,
            height_px,
            hfov_deg,
            cam_height_m,
            pitch_deg,
            focal_px,
        })
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width_px as f64 / 2.0, self.height_px as f64 / 2.0)
    }

    /// Camera-frame coordinates (right, down, forward) of an ego-frame point.
    fn to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        let pitch = self.pitch_deg.to_radians();
        let (sp, cp) = pitch.sin_cos();
        let d = Vector3::new(p.x, p.y, p.z - self.cam_height_m);
        Vector3::new(
            d.x,
            -d.y * sp - d.z * cp, // down
            d.y * cp - d.z * sp,  // forward depth
        )
    }

    /// Projects an ego-frame point to pixel coordinates.
    ///
    /// Returns `None` when the point lies at or behind the near plane. The
    /// result is not clipped to the image bounds.
    pub fn project_point(&self, p: (f64, f64, f64)) -> Option<(f64, f64)> {
        let c = self.to_camera(Vector3::new(p.0, p.1, p.2));
        if c.z <= NEAR_PLANE_M {
            return None;
        }
        let (cx, cy) = self.principal_point();
        Some((cx + self.focal_px * c.x / c.z, cy + self.focal_px * c.y / c.z))
    }

    /// Unit ray direction (ego frame) through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let (cx, cy) = self.principal_point();
        let xc = (u - cx) / self.focal_px;
        let yc = (v - cy) / self.focal_px;
        let pitch = self.pitch_deg.to_radians();
        let (sp, cp) = pitch.sin_cos();
        // Invert the (right, down, forward) basis back into the ego frame.
        let dir = Vector3::new(xc, yc * (-sp) + cp, yc * (-cp) - sp);
        dir.normalize()
    }

    /// Intersection of the pixel ray with the ground plane `z = 0`.
    ///
    /// Returns the ego-frame ground point, or `None` for pixels at or above
    /// the horizon (the ray never reaches the ground in front of the camera).
    pub fn ground_from_pixel(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let m = self.ground_to_image_matrix();
        let inv = m.try_inverse()?;
        let g = inv * Vector3::new(u, v, 1.0);
        if g.z.abs() < 1e-12 {
            return None; // horizon: the ground point is at infinity
        }
        let x = g.x / g.z;
        let y = g.y / g.z;
        // Reject intersections behind the camera (pixels above the horizon).
        let pitch = self.pitch_deg.to_radians();
        let depth = y * pitch.cos() + self.cam_height_m * pitch.sin();
        if depth <= 1e-9 {
            return None;
        }
        Some((x, y))
    }

    /// Homogeneous map from ground-plane points `(x, y, 1)` to image pixels.
    fn ground_to_image_matrix(&self) -> Matrix3<f64> {
        let (cx, cy) = self.principal_point();
        let f = self.focal_px;
        let h = self.cam_height_m;
        let pitch = self.pitch_deg.to_radians();
        let (sp, cp) = pitch.sin_cos();
        Matrix3::new(
            f,
            cx * cp,
            cx * h * sp,
            0.0,
            -f * sp + cy * cp,
            f * h * cp + cy * h * sp,
            0.0,
            cp,
            h * sp,
        )
    }

    /// Image row of the horizon (where the ground plane vanishes).
    pub fn horizon_row(&self) -> f64 {
        let (_, cy) = self.principal_point();
        cy - self.focal_px * self.pitch_deg.to_radians().tan()
    }
}

/// Ego-anchored top-down raster. Defaults cover 50 m at 4 px/m on 200x200.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BevGrid {
    pub size_px: u32,
    pub px_per_m: f64,
    /// Pixel `(u, v)` at which the ego center sits.
    pub ego_anchor: (f64, f64),
}

impl Default for BevGrid {
    fn default() -> Self {
        Self::new(200, 4.0)
    }
}

impl BevGrid {
    /// Grid with the ego anchored at the bottom-center pixel.
    pub fn new(size_px: u32, px_per_m: f64) -> Self {
        assert!(size_px > 0 && px_per_m > 0.0, "grid parameters must be positive");
        Self {
            size_px,
            px_per_m,
            ego_anchor: (size_px as f64 / 2.0, size_px as f64 - 1.0),
        }
    }

    /// Meters of coverage along each axis.
    pub fn coverage_m(&self) -> f64 {
        self.size_px as f64 / self.px_per_m
    }

    /// Grid pixel of an ego-frame ground point.
    pub fn ground_to_grid(&self, x_lat: f64, y_fwd: f64) -> (f64, f64) {
        (
            self.ego_anchor.0 + self.px_per_m * x_lat,
            self.ego_anchor.1 - self.px_per_m * y_fwd,
        )
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        let s = self.size_px as f64;
        (0.0..=s).contains(&u) && (0.0..=s).contains(&v)
    }
}

/// Planar pose: position in meters plus heading, normalized to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_rad: f64,
}

impl Pose2 {
    pub fn new(x_m: f64, y_m: f64, yaw_rad: f64) -> Self {
        Self {
            x_m,
            y_m,
            yaw_rad: wrap_angle(yaw_rad),
        }
    }
}

/// Oriented 3D box. At `yaw = 0` the length runs along `+y` (forward), the
/// width along `x`, and for ground-contact vehicles `center.2 = height / 2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Box3 {
    pub center: (f64, f64, f64),
    pub yaw_rad: f64,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
}

impl Box3 {
    pub fn new(
        center: (f64, f64, f64),
        yaw_rad: f64,
        length_m: f64,
        width_m: f64,
        height_m: f64,
    ) -> Result<Self, GeometryError> {
        if !(length_m > 0.0 && width_m > 0.0 && height_m > 0.0) {
            return Err(GeometryError::InvalidBox(format!(
                "dimensions must be positive, got l={length_m} w={width_m} h={height_m}"
            )));
        }
        Ok(Self {
            center,
            yaw_rad: wrap_angle(yaw_rad),
            length_m,
            width_m,
            height_m,
        })
    }

    /// Box resting on the ground plane (`center.z = height / 2`).
    pub fn on_ground(
        x: f64,
        y: f64,
        yaw_rad: f64,
        length_m: f64,
        width_m: f64,
        height_m: f64,
    ) -> Result<Self, GeometryError> {
        Self::new((x, y, height_m / 2.0), yaw_rad, length_m, width_m, height_m)
    }

    /// The eight corners in the frame the box is expressed in.
    pub fn corners(&self) -> [(f64, f64, f64); 8] {
        let (s, c) = self.yaw_rad.sin_cos();
        let hw = self.width_m / 2.0;
        let hl = self.length_m / 2.0;
        let hh = self.height_m / 2.0;
        let mut out = [(0.0, 0.0, 0.0); 8];
        let mut i = 0;
        for &dx in &[-hw, hw] {
            for &dy in &[-hl, hl] {
                for &dz in &[-hh, hh] {
                    let x = self.center.0 + dx * c - dy * s;
                    let y = self.center.1 + dx * s + dy * c;
                    out[i] = (x, y, self.center.2 + dz);
                    i += 1;
                }
            }
        }
        out
    }

    /// The four ground-plane footprint corners (z dropped).
    pub fn footprint_corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.yaw_rad.sin_cos();
        let hw = self.width_m / 2.0;
        let hl = self.length_m / 2.0;
        let mut out = [(0.0, 0.0); 4];
        let mut i = 0;
        for &dx in &[-hw, hw] {
            for &dy in &[-hl, hl] {
                out[i] = (
                    self.center.0 + dx * c - dy * s,
                    self.center.1 + dx * s + dy * c,
                );
                i += 1;
            }
        }
        out
    }

    /// Re-expresses a world-frame box in the frame of the given ego pose.
    pub fn into_frame_of(&self, ego: &Pose2) -> Box3 {
        let (s, c) = ego.yaw_rad.sin_cos();
        let dx = self.center.0 - ego.x_m;
        let dy = self.center.1 - ego.y_m;
        Box3 {
            center: (dx * c + dy * s, -dx * s + dy * c, self.center.2),
            yaw_rad: wrap_angle(self.yaw_rad - ego.yaw_rad),
            ..*self
        }
    }
}

/// Axis-aligned box in PV image coordinates, stored as min/max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl PvBox {
    /// Builds a box from two opposite corners in either order.
    pub fn from_corners(a: (f64, f64), b: (f64, f64)) -> Self {
        Self {
            u_min: a.0.min(b.0),
            v_min: a.1.min(b.1),
            u_max: a.0.max(b.0),
            v_max: a.1.max(b.1),
        }
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.u_min, self.v_min, self.u_max, self.v_max]
    }
}

/// Axis-aligned box in BEV grid coordinates, stored as min/max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BevBox {
    pub fn from_corners(a: (f64, f64), b: (f64, f64)) -> Self {
        Self {
            u_min: a.0.min(b.0),
            v_min: a.1.min(b.1),
            u_max: a.0.max(b.0),
            v_max: a.1.max(b.1),
        }
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.u_min + self.u_max) / 2.0,
            (self.v_min + self.v_max) / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.u_min, self.v_min, self.u_max, self.v_max]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::from_corners((a[0], a[1]), (a[2], a[3]))
    }
}

/// Axis-aligned hull of the eight projected corners, clipped to the image.
///
/// `None` when every corner sits behind the near plane or the clipped hull
/// has zero area. Occlusion by other geometry is deliberately ignored.
pub fn project_box_pv(cam: &CameraModel, b: &Box3) -> Option<PvBox> {
    let mut u_min = f64::INFINITY;
    let mut v_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut any = false;
    for corner in b.corners() {
        if let Some((u, v)) = cam.project_point(corner) {
            any = true;
            u_min = u_min.min(u);
            v_min = v_min.min(v);
            u_max = u_max.max(u);
            v_max = v_max.max(v);
        }
    }
    if !any {
        return None;
    }
    let w = cam.width_px as f64;
    let h = cam.height_px as f64;
    let clipped = PvBox {
        u_min: u_min.clamp(0.0, w),
        v_min: v_min.clamp(0.0, h),
        u_max: u_max.clamp(0.0, w),
        v_max: v_max.clamp(0.0, h),
    };
    if clipped.width() <= 0.0 || clipped.height() <= 0.0 {
        return None;
    }
    Some(clipped)
}

/// Axis-aligned hull in grid pixels of the four footprint corners, clipped
/// to the grid. `None` when the footprint lies entirely outside the grid.
pub fn footprint_bev(grid: &BevGrid, b: &Box3) -> Option<BevBox> {
    let mut u_min = f64::INFINITY;
    let mut v_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for (x, y) in b.footprint_corners() {
        let (u, v) = grid.ground_to_grid(x, y);
        u_min = u_min.min(u);
        v_min = v_min.min(v);
        u_max = u_max.max(u);
        v_max = v_max.max(v);
    }
    clip_bev_hull(grid, u_min, v_min, u_max, v_max)
}

/// Clips a BEV hull to the grid. Degenerate hulls that already lie inside
/// the grid survive; hulls collapsed to zero extent by clipping do not.
pub(crate) fn clip_bev_hull(
    grid: &BevGrid,
    u_min: f64,
    v_min: f64,
    u_max: f64,
    v_max: f64,
) -> Option<BevBox> {
    let s = grid.size_px as f64;
    let c = BevBox {
        u_min: u_min.clamp(0.0, s),
        v_min: v_min.clamp(0.0, s),
        u_max: u_max.clamp(0.0, s),
        v_max: v_max.clamp(0.0, s),
    };
    if c.u_min > c.u_max || c.v_min > c.v_max {
        return None;
    }
    if (c.width() <= 0.0 && u_max - u_min > 0.0) || (c.height() <= 0.0 && v_max - v_min > 0.0) {
        return None;
    }
    Some(c)
}

/// 3x3 homography taking homogeneous PV pixels of ground-plane points to
/// homogeneous BEV grid pixels. Exact for `z = 0` points.
pub fn homography_matrix(cam: &CameraModel, grid: &BevGrid) -> Result<Matrix3<f64>, GeometryError> {
    let (_, cy) = cam.principal_point();
    let pitch = cam.pitch_deg.to_radians();
    // Ground is invisible when the horizon sits at or below the image bottom.
    if pitch <= -(cy / cam.focal_px).atan() {
        return Err(GeometryError::SingularConfiguration);
    }
    let m = cam.ground_to_image_matrix();
    let m_inv = m
        .try_inverse()
        .ok_or(GeometryError::SingularConfiguration)?;
    let s = grid.px_per_m;
    let g = Matrix3::new(
        s,
        0.0,
        grid.ego_anchor.0,
        0.0,
        -s,
        grid.ego_anchor.1,
        0.0,
        0.0,
        1.0,
    );
    Ok(g * m_inv)
}

/// Maps a PV pixel to its BEV grid pixel under the ground-plane assumption.
///
/// `None` for pixels at or above the horizon and for ground points that fall
/// outside the grid.
pub fn ipm_ground(cam: &CameraModel, grid: &BevGrid, uv: (f64, f64)) -> Option<(f64, f64)> {
    let (x, y) = cam.ground_from_pixel(uv.0, uv.1)?;
    let (gu, gv) = grid.ground_to_grid(x, y);
    if grid.contains(gu, gv) {
        Some((gu, gv))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam_1024() -> CameraModel {
        CameraModel::new(1024, 768, 110.0, 1.6).unwrap()
    }

    #[test]
    fn focal_matches_closed_form() {
        assert!((focal_from_fov(1024, 110.0).unwrap() - 358.505).abs() < 1e-2);
        assert!((focal_from_fov(1024, 90.0).unwrap() - 512.0).abs() < 1e-9);
        assert!((focal_from_fov(200, 53.13010235415598).unwrap() - 200.0).abs() < 1e-6);
    }

    #[test]
    fn focal_rejects_out_of_range_fov() {
        assert!(focal_from_fov(1024, 0.0).is_err());
        assert!(focal_from_fov(1024, 180.0).is_err());
        assert!(focal_from_fov(1024, -10.0).is_err());
    }

    #[test]
    fn optical_axis_projects_to_center() {
        let cam = cam_1024();
        let (u, v) = cam.project_point((0.0, 10.0, cam.cam_height_m)).unwrap();
        assert!((u - 512.0).abs() < 1e-9);
        assert!((v - 384.0).abs() < 1e-9);
    }

    #[test]
    fn ground_point_ahead_projects_below_center() {
        let cam = cam_1024();
        let (u, v) = cam.project_point((0.0, 10.0, 0.0)).unwrap();
        assert!((u - 512.0).abs() < 1e-9);
        let expected_v = 384.0 + cam.focal_px * 1.6 / 10.0;
        assert!((v - expected_v).abs() < 1e-9);
        assert!((v - 441.4).abs() < 0.1);
    }

    #[test]
    fn points_behind_camera_do_not_project() {
        let cam = cam_1024();
        assert!(cam.project_point((0.0, -5.0, 0.0)).is_none());
        assert!(cam.project_point((0.0, 0.05, 0.0)).is_none());
    }

    #[test]
    fn centerline_projection_is_monotone_in_distance() {
        let cam = cam_1024();
        let mut last_v = f64::INFINITY;
        for i in 1..200 {
            let y = 2.0 + i as f64 * 0.25;
            let (_, v) = cam.project_point((0.0, y, 0.0)).unwrap();
            assert!(v < last_v, "v must shrink as distance grows (y={y})");
            last_v = v;
        }
    }

    #[test]
    fn box_behind_camera_is_absent() {
        let cam = cam_1024();
        let b = Box3::on_ground(0.0, -20.0, 0.0, 4.0, 2.0, 1.5).unwrap();
        assert!(project_box_pv(&cam, &b).is_none());
    }

    #[test]
    fn box_on_axis_projects_symmetrically() {
        let cam = cam_1024();
        let b = Box3::on_ground(0.0, 20.0, 0.0, 4.0, 2.0, 1.5).unwrap();
        let pv = project_box_pv(&cam, &b).unwrap();
        assert!((pv.u_min + pv.u_max - 1024.0).abs() < 1e-9);
    }

    #[test]
    fn pv_hull_equals_per_corner_brute_force() {
        let cam = cam_1024();
        let b = Box3::new((0.0, 20.0, 0.75), 0.3, 4.0, 2.0, 1.5).unwrap();
        let pv = project_box_pv(&cam, &b).unwrap();
        let mut u_min = f64::INFINITY;
        let mut v_min = f64::INFINITY;
        let mut u_max = f64::NEG_INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for c in b.corners() {
            let (u, v) = cam.project_point(c).unwrap();
            u_min = u_min.min(u);
            v_min = v_min.min(v);
            u_max = u_max.max(u);
            v_max = v_max.max(v);
        }
        assert_eq!(pv.u_min, u_min.clamp(0.0, 1024.0));
        assert_eq!(pv.v_min, v_min.clamp(0.0, 768.0));
        assert_eq!(pv.u_max, u_max.clamp(0.0, 1024.0));
        assert_eq!(pv.v_max, v_max.clamp(0.0, 768.0));
    }

    #[test]
    fn footprint_of_tiny_box_ahead_hits_expected_pixel() {
        let grid = BevGrid::default();
        let b = Box3::on_ground(0.0, 10.0, 0.0, 1e-9, 1e-9, 1.0).unwrap();
        let bev = footprint_bev(&grid, &b).unwrap();
        let (cu, cv) = bev.center();
        assert!((cu - 100.0).abs() < 1e-6);
        assert!((cv - 159.0).abs() < 1e-6);
    }

    #[test]
    fn footprint_at_ego_centers_on_anchor() {
        let grid = BevGrid::default();
        let b = Box3::on_ground(0.0, 0.0, 0.0, 4.0, 2.0, 1.5).unwrap();
        let bev = footprint_bev(&grid, &b).unwrap();
        let (cu, cv) = bev.center();
        assert!((cu - grid.ego_anchor.0).abs() < 1e-9);
        assert!((cv - grid.ego_anchor.1).abs() < 1e-9);
    }

    #[test]
    fn footprint_outside_grid_is_absent() {
        let grid = BevGrid::default();
        let b = Box3::on_ground(0.0, 60.0, 0.0, 4.0, 2.0, 1.5).unwrap();
        assert!(footprint_bev(&grid, &b).is_none());
        let behind = Box3::on_ground(0.0, -10.0, 0.0, 4.0, 2.0, 1.5).unwrap();
        assert!(footprint_bev(&grid, &behind).is_none());
    }

    #[test]
    fn footprint_mirrors_with_lateral_flip() {
        let grid = BevGrid::default();
        let b = Box3::on_ground(6.0, 20.0, 0.2, 4.0, 2.0, 1.5).unwrap();
        let m = Box3::on_ground(-6.0, 20.0, -0.2, 4.0, 2.0, 1.5).unwrap();
        let bb = footprint_bev(&grid, &b).unwrap();
        let bm = footprint_bev(&grid, &m).unwrap();
        let au = grid.ego_anchor.0;
        assert!((bm.u_min - (2.0 * au - bb.u_max)).abs() < 1e-9);
        assert!((bm.u_max - (2.0 * au - bb.u_min)).abs() < 1e-9);
        assert!((bm.v_min - bb.v_min).abs() < 1e-9);
        assert!((bm.v_max - bb.v_max).abs() < 1e-9);
    }

    #[test]
    fn homography_is_invertible() {
        let cam = cam_1024();
        let grid = BevGrid::default();
        let h = homography_matrix(&cam, &grid).unwrap();
        assert!(h.determinant().abs() > 1e-12);
    }

    #[test]
    fn homography_rejects_sky_facing_camera() {
        let cam = CameraModel::with_pitch(1024, 768, 110.0, 1.6, -60.0).unwrap();
        let grid = BevGrid::default();
        assert!(matches!(
            homography_matrix(&cam, &grid),
            Err(GeometryError::SingularConfiguration)
        ));
    }

    #[test]
    fn ipm_inverts_projection_for_ground_points() {
        let cam = cam_1024();
        let grid = BevGrid::default();
        for &(x, y) in &[(0.0, 5.0), (3.0, 12.0), (-8.0, 30.0), (10.0, 45.0)] {
            let (u, v) = cam.project_point((x, y, 0.0)).unwrap();
            let (gu, gv) = ipm_ground(&cam, &grid, (u, v)).unwrap();
            let (eu, ev) = grid.ground_to_grid(x, y);
            assert!((gu - eu).abs() < 1e-9 && (gv - ev).abs() < 1e-9, "({x},{y})");
        }
    }

    #[test]
    fn horizon_pixel_is_absent() {
        let cam = cam_1024();
        let grid = BevGrid::default();
        let v_h = cam.horizon_row();
        assert!(ipm_ground(&cam, &grid, (512.0, v_h)).is_none());
        assert!(ipm_ground(&cam, &grid, (512.0, v_h - 5.0)).is_none());
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        let pi = std::f64::consts::PI;
        assert_eq!(wrap_angle(pi), pi);
        assert!((wrap_angle(-pi) - pi).abs() < 1e-12);
        assert!((wrap_angle(3.0 * pi) - pi).abs() < 1e-9);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn world_to_ego_transform_round_trips() {
        let ego = Pose2::new(5.0, -3.0, 0.7);
        let b = Box3::on_ground(8.0, 4.0, 1.2, 4.5, 2.0, 1.6).unwrap();
        let local = b.into_frame_of(&ego);
        // Transform back by composing with the inverse pose.
        let (s, c) = ego.yaw_rad.sin_cos();
        let x = local.center.0 * c - local.center.1 * s + ego.x_m;
        let y = local.center.0 * s + local.center.1 * c + ego.y_m;
        assert!((x - 8.0).abs() < 1e-12);
        assert!((y - 4.0).abs() < 1e-12);
        assert!((wrap_angle(local.yaw_rad + ego.yaw_rad) - 1.2).abs() < 1e-12);
    }
}
