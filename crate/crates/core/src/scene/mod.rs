//! Synthetic tabletop scenes: sampling, analytic depth rendering, the hidden
//! shifted domain, and the scripted reach expert.
//!
//! World frame: meters, `z` up, the table top at `z = table_height`, the
//! workspace square centered on the origin. The robot base stands behind the
//! workspace at `y = ROBOT_BASE_Y`. The camera sits in front of it on the
//! `-y` side, placed by yaw, pitch and distance relative to the base, and
//! looks at the workspace center.

mod expert;
mod pseudo_real;
mod render;

pub use expert::{
    rollout_controller, run_episode, scripted_expert, Action, Controller, Demonstration,
    EpisodeOutcome, ExpertController, ExpertError, ReachEnv, StepOutcome, CONTROL_DT, EXPERT_GAIN,
    GRASP_RADIUS, MAX_EPISODE_STEPS, V_MAX,
};
pub use pseudo_real::{distort_pseudo_real, observe, DistortionProfile};
pub use render::{render, render_frame, Camera, Hit};

use crate::depth::{Dataset, Domain, LabeledFrame};
use crate::rng::Rng;

/// Half side of the square the cube center is drawn from.
pub const WORKSPACE_HALF: f64 = 0.30;
pub const CUBE_SIZE_RANGE: (f64, f64) = (0.03, 0.09);
pub const YAW_RANGE_DEG: (f64, f64) = (-15.0, 15.0);
pub const PITCH_RANGE_DEG: (f64, f64) = (15.0, 30.0);
pub const DISTANCE_RANGE: (f64, f64) = (1.35, 1.50);
pub const VERTICAL_FOV_DEG: f64 = 60.0;
pub const EFFECTOR_RADIUS: f64 = 0.02;
pub const DEFAULT_TABLE_HEIGHT: f64 = 0.0;
/// The robot base sits on the table this far behind the workspace center.
pub const ROBOT_BASE_Y: f64 = 0.40;

/// Table top extent (x, y), meters.
pub const TABLE_X: (f64, f64) = (-0.55, 0.55);
pub const TABLE_Y: (f64, f64) = (-0.45, 0.45);
/// Back wall lies in the plane `y = TABLE_Y.1`, the side wall in `x = TABLE_X.0`.
pub const WALL_HEIGHT: f64 = 0.80;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scene {
    pub cube_center: [f64; 3],
    pub cube_size: f64,
    pub effector_pos: Option<[f64; 3]>,
    pub camera: Camera,
    pub table_height: f64,
}

impl Scene {
    /// Checks the sampling ranges; `None` when valid.
    pub fn violation(&self) -> Option<String> {
        let [x, y, _] = self.cube_center;
        let (s0, s1) = CUBE_SIZE_RANGE;
        if x.abs() > WORKSPACE_HALF || y.abs() > WORKSPACE_HALF {
            return Some(format!("cube center ({x}, {y}) outside workspace"));
        }
        if !(s0..=s1).contains(&self.cube_size) {
            return Some(format!("cube size {} outside [{s0}, {s1}]", self.cube_size));
        }
        let c = &self.camera;
        if !(YAW_RANGE_DEG.0..=YAW_RANGE_DEG.1).contains(&c.yaw_deg)
            || !(PITCH_RANGE_DEG.0..=PITCH_RANGE_DEG.1).contains(&c.pitch_deg)
            || !(DISTANCE_RANGE.0..=DISTANCE_RANGE.1).contains(&c.distance)
        {
            return Some(format!("camera {c:?} outside sampling ranges"));
        }
        None
    }

    /// One-line text form for logs.
    pub fn describe(&self) -> String {
        let e = self
            .effector_pos
            .map(|p| format!("{:.4},{:.4},{:.4}", p[0], p[1], p[2]))
            .unwrap_or_else(|| "-".into());
        format!(
            "cube={:.4},{:.4},{:.4} size={:.4} effector={e} yaw={:.3} pitch={:.3} dist={:.4} table={:.3}",
            self.cube_center[0],
            self.cube_center[1],
            self.cube_center[2],
            self.cube_size,
            self.camera.yaw_deg,
            self.camera.pitch_deg,
            self.camera.distance,
            self.table_height
        )
    }
}

pub fn sample_camera(rng: &mut Rng) -> Camera {
    Camera {
        yaw_deg: rng.range(YAW_RANGE_DEG.0, YAW_RANGE_DEG.1),
        pitch_deg: rng.range(PITCH_RANGE_DEG.0, PITCH_RANGE_DEG.1),
        distance: rng.range(DISTANCE_RANGE.0, DISTANCE_RANGE.1),
    }
}

/// Cube resting on the table, no effector, random viewpoint.
///
/// Draw order: cube x, cube y, cube size, yaw, pitch, distance.
pub fn sample_scene(rng: &mut Rng) -> Scene {
    let x = rng.range(-WORKSPACE_HALF, WORKSPACE_HALF);
    let y = rng.range(-WORKSPACE_HALF, WORKSPACE_HALF);
    let size = rng.range(CUBE_SIZE_RANGE.0, CUBE_SIZE_RANGE.1);
    let camera = sample_camera(rng);
    Scene {
        cube_center: [x, y, DEFAULT_TABLE_HEIGHT + size / 2.0],
        cube_size: size,
        effector_pos: None,
        camera,
        table_height: DEFAULT_TABLE_HEIGHT,
    }
}

/// Scene with the effector placed above and beside the cube: horizontal
/// offset uniform in +-0.15 m per axis, height 0.08-0.20 m above the table.
pub fn sample_reach_scene(rng: &mut Rng) -> Scene {
    let mut scene = sample_scene(rng);
    let dx = rng.range(-0.15, 0.15);
    let dy = rng.range(-0.15, 0.15);
    let z = scene.table_height + rng.range(0.08, 0.20);
    scene.effector_pos = Some([scene.cube_center[0] + dx, scene.cube_center[1] + dy, z]);
    scene
}

/// `n_scenes * views_per_scene` labeled frames, scene-major.
///
/// Scene `i` draws from stream `i` of `seed`, so items do not depend on how
/// many scenes precede them. Shifted-domain frames are distorted with the
/// fixed hidden profile and their masks are blanked.
pub fn make_dataset(
    n_scenes: usize,
    views_per_scene: usize,
    domain: Domain,
    size: usize,
    seed: u64,
) -> Dataset {
    assert!(
        n_scenes >= 1 && views_per_scene >= 1,
        "empty dataset requested"
    );
    let mut items = Vec::with_capacity(n_scenes * views_per_scene);
    for i in 0..n_scenes {
        let mut rng = Rng::stream(seed, i as u64);
        let base = sample_scene(&mut rng);
        for _ in 0..views_per_scene {
            let scene = Scene {
                camera: sample_camera(&mut rng),
                ..base
            };
            let item = render(&scene, size, size);
            let item = match domain {
                Domain::Sim => item,
                Domain::PseudoReal => {
                    let mut noise = rng.split();
                    let frame = observe(&item.frame, Domain::PseudoReal, &mut noise);
                    LabeledFrame {
                        frame,
                        cube_position: item.cube_position,
                    }
                }
            };
            items.push(item);
        }
    }
    Dataset::new(items, domain, seed).expect("generated dataset is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_scenes_are_valid() {
        let mut rng = Rng::new(0);
        let mut min_pitch = f64::MAX;
        for _ in 0..10_000 {
            let s = sample_scene(&mut rng);
            assert_eq!(s.violation(), None);
            min_pitch = min_pitch.min(s.camera.pitch_deg);
        }
        assert!(min_pitch >= 15.0);
    }

    #[test]
    fn seeded_scene_repeats() {
        assert_eq!(
            sample_scene(&mut Rng::new(42)),
            sample_scene(&mut Rng::new(42))
        );
    }

    #[test]
    fn dataset_counts_and_labels() {
        let ds = make_dataset(3, 4, Domain::Sim, 16, 5);
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.domain(), Domain::Sim);
        for scene in ds.items().chunks(4) {
            assert!(scene
                .iter()
                .all(|it| it.cube_position == scene[0].cube_position));
        }
        assert_ne!(ds.items()[0].cube_position, ds.items()[4].cube_position);
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = make_dataset(2, 2, Domain::PseudoReal, 16, 9);
        let b = make_dataset(2, 2, Domain::PseudoReal, 16, 9);
        assert_eq!(
            crate::depth::encode_dataset(&a).unwrap(),
            crate::depth::encode_dataset(&b).unwrap()
        );
    }

    #[test]
    fn pseudo_real_hides_masks_but_keeps_labels() {
        let sim = make_dataset(2, 2, Domain::Sim, 16, 9);
        let real = make_dataset(2, 2, Domain::PseudoReal, 16, 9);
        for (s, r) in sim.items().iter().zip(real.items()) {
            assert_eq!(s.cube_position, r.cube_position);
            assert!(r
                .frame
                .mask()
                .iter()
                .all(|c| *c == crate::SegClass::Background));
            assert_ne!(s.frame.depth(), r.frame.depth());
        }
    }
}
