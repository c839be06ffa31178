//! Per-pixel analytic ray casting against the scene primitives.

use super::{
    Scene, EFFECTOR_RADIUS, ROBOT_BASE_Y, TABLE_X, TABLE_Y, VERTICAL_FOV_DEG, WALL_HEIGHT,
};
use crate::depth::{clamp_unit, DepthFrame, LabeledFrame, SegClass, Z_MAX};

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
fn normalize(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Viewpoint on a sphere around the robot base, always aimed at the
/// workspace center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    /// Meters from the robot base.
    pub distance: f64,
}

impl Camera {
    pub fn position(&self, table_height: f64) -> V3 {
        let (sy, cy) = self.yaw_deg.to_radians().sin_cos();
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        [
            self.distance * sy * cp,
            ROBOT_BASE_Y - self.distance * cy * cp,
            table_height + self.distance * sp,
        ]
    }

    /// Unit ray through the center of pixel (`row`, `col`).
    pub fn ray(
        &self,
        table_height: f64,
        width: usize,
        height: usize,
        row: usize,
        col: usize,
    ) -> (V3, V3) {
        let origin = self.position(table_height);
        let target = [0.0, 0.0, table_height];
        let forward = normalize(sub(target, origin));
        let right = normalize(cross(forward, [0.0, 0.0, 1.0]));
        let up = cross(right, forward);
        let half = (VERTICAL_FOV_DEG.to_radians() / 2.0).tan();
        let aspect = width as f64 / height as f64;
        let u = (2.0 * (col as f64 + 0.5) / width as f64 - 1.0) * half * aspect;
        let v = (1.0 - 2.0 * (row as f64 + 0.5) / height as f64) * half;
        let dir = normalize([
            forward[0] + u * right[0] + v * up[0],
            forward[1] + u * right[1] + v * up[1],
            forward[2] + u * right[2] + v * up[2],
        ]);
        (origin, dir)
    }
}

/// Nearest surface along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub class: SegClass,
}

const EPS: f64 = 1e-9;

/// Axis-aligned rectangle in the plane `p[axis] = at`.
fn rect(origin: V3, dir: V3, axis: usize, at: f64, lo: [f64; 2], hi: [f64; 2]) -> Option<f64> {
    if dir[axis].abs() < EPS {
        return None;
    }
    let t = (at - origin[axis]) / dir[axis];
    if t <= EPS {
        return None;
    }
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let (pa, pb) = (origin[a] + t * dir[a], origin[b] + t * dir[b]);
    // lo/hi are given in (a, b) order.
    (pa >= lo[0] && pa <= hi[0] && pb >= lo[1] && pb <= hi[1]).then_some(t)
}

/// Slab test; only entry hits (camera is never inside the box).
fn aabb(origin: V3, dir: V3, lo: V3, hi: V3) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if dir[k].abs() < EPS {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - origin[k]) / dir[k];
        let b = (hi[k] - origin[k]) / dir[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 > EPS).then_some(t0)
}

fn sphere(origin: V3, dir: V3, center: V3, radius: f64) -> Option<f64> {
    let oc = sub(origin, center);
    let b = dot(oc, dir);
    let c = dot(oc, oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > EPS).then_some(t)
}

/// Casts one ray into the scene.
pub fn cast(scene: &Scene, origin: V3, dir: V3) -> Option<Hit> {
    let th = scene.table_height;
    let mut best: Option<Hit> = None;
    let mut offer = |t: Option<f64>, class: SegClass| {
        if let Some(t) = t {
            if best.is_none_or(|b| t < b.distance) {
                best = Some(Hit { distance: t, class });
            }
        }
    };
    // Table top: plane z = th, bounds on (x, y).
    offer(
        rect(
            origin,
            dir,
            2,
            th,
            [TABLE_X.0, TABLE_Y.0],
            [TABLE_X.1, TABLE_Y.1],
        ),
        SegClass::Table,
    );
    // Back wall: plane y = TABLE_Y.1, bounds on (z, x).
    offer(
        rect(
            origin,
            dir,
            1,
            TABLE_Y.1,
            [th, TABLE_X.0],
            [th + WALL_HEIGHT, TABLE_X.1],
        ),
        SegClass::Wall,
    );
    // Side wall: plane x = TABLE_X.0, bounds on (y, z).
    offer(
        rect(
            origin,
            dir,
            0,
            TABLE_X.0,
            [TABLE_Y.0, th],
            [TABLE_Y.1, th + WALL_HEIGHT],
        ),
        SegClass::Wall,
    );
    let h = scene.cube_size / 2.0;
    let c = scene.cube_center;
    offer(
        aabb(
            origin,
            dir,
            [c[0] - h, c[1] - h, c[2] - h],
            [c[0] + h, c[1] + h, c[2] + h],
        ),
        SegClass::Cube,
    );
    if let Some(e) = scene.effector_pos {
        offer(sphere(origin, dir, e, EFFECTOR_RADIUS), SegClass::Effector);
    }
    best
}

/// Renders the scene's depth and mask only.
pub fn render_frame(scene: &Scene, width: usize, height: usize) -> DepthFrame {
    let mut depth = Vec::with_capacity(width * height);
    let mut mask = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (o, d) = scene
                .camera
                .ray(scene.table_height, width, height, row, col);
            match cast(scene, o, d) {
                Some(hit) => {
                    depth.push(clamp_unit(hit.distance / Z_MAX));
                    mask.push(hit.class);
                }
                None => {
                    depth.push(1.0);
                    mask.push(SegClass::Background);
                }
            }
        }
    }
    DepthFrame::new(width, height, depth, mask).expect("render produces valid frames")
}

/// Pinhole render (vertical FOV 60 deg) labeled with the world-frame cube center.
pub fn render(scene: &Scene, width: usize, height: usize) -> LabeledFrame {
    LabeledFrame {
        frame: render_frame(scene, width, height),
        cube_position: scene.cube_center,
    }
}
