//! Closed-loop reach task: environment stepping, the scripted expert, and
//! demonstration recording.

use super::{observe, render_frame, sample_reach_scene, Scene};
use crate::depth::{DepthFrame, Domain};
use crate::rng::Rng;

/// Control period (10 Hz).
pub const CONTROL_DT: f64 = 0.1;
/// Linear speed limit, m/s.
pub const V_MAX: f64 = 0.10;
/// Proportional gain of the scripted expert, 1/s.
pub const EXPERT_GAIN: f64 = 2.0;
/// A grasp succeeds when the effector is this close to the cube center.
pub const GRASP_RADIUS: f64 = 0.03;
pub const MAX_EPISODE_STEPS: usize = 100;

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Rescales `v` to at most `limit` in Euclidean norm.
pub fn clamp_norm(v: [f64; 3], limit: f64) -> [f64; 3] {
    let n = norm(v);
    if n > limit && n > 0.0 {
        let s = limit / n;
        [v[0] * s, v[1] * s, v[2] * s]
    } else {
        v
    }
}

/// End-effector command: linear and angular velocity plus gripper state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub linear_velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
    /// `true` closes the gripper.
    pub gripper: bool,
}

impl Action {
    pub fn as_vector(&self) -> [f64; 7] {
        let [a, b, c] = self.linear_velocity;
        let [d, e, f] = self.angular_velocity;
        [a, b, c, d, e, f, if self.gripper { 1.0 } else { 0.0 }]
    }
}

/// Anything that maps the last three observed frames to an action. The
/// current scene is passed for scripted controllers; learned policies must
/// ignore it.
pub trait Controller {
    fn act(&mut self, observation: [&DepthFrame; 3], state: &Scene) -> Action;
}

/// The scripted expert as a controller: `v = clamp(k (cube - effector), v_max)`,
/// zero angular velocity, close when within the grasp radius.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExpertController;

impl Controller for ExpertController {
    fn act(&mut self, _observation: [&DepthFrame; 3], state: &Scene) -> Action {
        let e = state.effector_pos.expect("reach scenes carry an effector");
        let c = state.cube_center;
        let delta = [c[0] - e[0], c[1] - e[1], c[2] - e[2]];
        if norm(delta) < GRASP_RADIUS {
            return Action {
                linear_velocity: [0.0; 3],
                angular_velocity: [0.0; 3],
                gripper: true,
            };
        }
        let v = clamp_norm(
            [
                EXPERT_GAIN * delta[0],
                EXPERT_GAIN * delta[1],
                EXPERT_GAIN * delta[2],
            ],
            V_MAX,
        );
        Action {
            linear_velocity: v,
            angular_velocity: [0.0; 3],
            gripper: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    /// Gripper closed; `success` if it was within the grasp radius.
    Grasped {
        success: bool,
    },
    TimedOut,
}

/// One reach episode in a given observation domain.
pub struct ReachEnv {
    scene: Scene,
    domain: Domain,
    width: usize,
    height: usize,
    noise: Rng,
    history: Vec<DepthFrame>,
    steps: usize,
}

impl ReachEnv {
    /// `noise` drives the pseudo-real distortion; unused for sim.
    pub fn new(scene: Scene, domain: Domain, size: usize, noise: Rng) -> Self {
        assert!(
            scene.effector_pos.is_some(),
            "reach scenes need an effector"
        );
        let mut env = Self {
            scene,
            domain,
            width: size,
            height: size,
            noise,
            history: Vec::with_capacity(MAX_EPISODE_STEPS),
            steps: 0,
        };
        env.capture();
        env
    }

    fn capture(&mut self) {
        let raw = render_frame(&self.scene, self.width, self.height);
        let seen = observe(&raw, self.domain, &mut self.noise);
        self.history.push(seen);
    }

    /// Frames `t-2, t-1, t`; the first frame repeats at the start.
    pub fn observation(&self) -> [&DepthFrame; 3] {
        stacked(&self.history, self.history.len() - 1)
    }

    pub fn state(&self) -> &Scene {
        &self.scene
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn distance_to_cube(&self) -> f64 {
        let e = self.scene.effector_pos.unwrap();
        let c = self.scene.cube_center;
        norm([c[0] - e[0], c[1] - e[1], c[2] - e[2]])
    }

    pub fn step(&mut self, action: &Action) -> StepOutcome {
        if action.gripper {
            return StepOutcome::Grasped {
                success: self.distance_to_cube() < GRASP_RADIUS,
            };
        }
        let v = clamp_norm(action.linear_velocity, V_MAX);
        let e = self.scene.effector_pos.as_mut().unwrap();
        for k in 0..3 {
            e[k] += v[k] * CONTROL_DT;
        }
        // The effector cannot pass through the table.
        e[2] = e[2].max(self.scene.table_height);
        self.steps += 1;
        if self.steps >= MAX_EPISODE_STEPS {
            return StepOutcome::TimedOut;
        }
        self.capture();
        StepOutcome::Continue
    }

    pub(crate) fn into_frames(self) -> Vec<DepthFrame> {
        self.history
    }
}

fn stacked(frames: &[DepthFrame], t: usize) -> [&DepthFrame; 3] {
    [
        &frames[t.saturating_sub(2)],
        &frames[t.saturating_sub(1)],
        &frames[t],
    ]
}

/// Expert trajectory: `frames[t]` is the newest frame of observation `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub scene: Scene,
    pub frames: Vec<DepthFrame>,
    pub actions: Vec<Action>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn observation(&self, t: usize) -> [&DepthFrame; 3] {
        stacked(&self.frames, t)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExpertError {
    #[error("scene has no effector")]
    MissingEffector,
    #[error("expert did not reach the cube within {steps} steps (scene: {scene})")]
    Timeout { steps: usize, scene: String },
}

/// Records the scripted expert in the sim domain at `size` x `size`.
pub fn scripted_expert(scene: &Scene, size: usize) -> Result<Demonstration, ExpertError> {
    if scene.effector_pos.is_none() {
        return Err(ExpertError::MissingEffector);
    }
    let mut env = ReachEnv::new(*scene, Domain::Sim, size, Rng::new(0));
    let mut expert = ExpertController;
    let mut actions = Vec::new();
    loop {
        let a = expert.act(env.observation(), env.state());
        actions.push(a);
        match env.step(&a) {
            StepOutcome::Continue => {}
            StepOutcome::Grasped { .. } => break,
            StepOutcome::TimedOut => {
                return Err(ExpertError::Timeout {
                    steps: MAX_EPISODE_STEPS,
                    scene: scene.describe(),
                })
            }
        }
    }
    let frames = env.into_frames();
    debug_assert_eq!(frames.len(), actions.len());
    Ok(Demonstration {
        scene: *scene,
        frames,
        actions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub steps: usize,
    pub final_distance: f64,
}

pub fn run_episode(
    controller: &mut dyn Controller,
    scene: &Scene,
    domain: Domain,
    size: usize,
    noise: Rng,
) -> EpisodeOutcome {
    let mut env = ReachEnv::new(*scene, domain, size, noise);
    loop {
        let a = controller.act(env.observation(), env.state());
        let outcome = env.step(&a);
        let done = |success| EpisodeOutcome {
            success,
            steps: env.steps(),
            final_distance: env.distance_to_cube(),
        };
        match outcome {
            StepOutcome::Continue => {}
            StepOutcome::Grasped { success } => return done(success),
            StepOutcome::TimedOut => return done(false),
        }
    }
}

/// Runs `n_trials` episodes in fresh reach scenes; trial `i` uses stream `i`
/// of `seed`. Returns the number of successes.
pub fn rollout_controller(
    controller: &mut dyn Controller,
    domain: Domain,
    n_trials: usize,
    size: usize,
    seed: u64,
) -> usize {
    (0..n_trials)
        .filter(|&i| {
            let mut rng = Rng::stream(seed, i as u64);
            let scene = sample_reach_scene(&mut rng);
            run_episode(controller, &scene, domain, size, rng.split()).success
        })
        .count()
}
