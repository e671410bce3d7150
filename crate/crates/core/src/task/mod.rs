//! The finite-horizon goal-reaching task on top of the simulator.

pub mod obs;
pub mod reward;
mod vec_env;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{
    apply_push, body_frame, step_physics_detailed, ActuatorCommand, ContactPoint, RobotModel,
    RobotState, SimError, PHYSICS_DT, SUBSTEPS,
};
use crate::terrain::HeightField;
use crate::util::rng_for;
use obs::{pack_observation, pack_privileged, wheel_forces, FORCE_WINDOW};
pub use obs::{Commands, NoiseModel, OBS_DIM, PRIV_DIM};
pub use reward::RewardCoefficients;
use reward::{
    reward_face_goal, reward_pos_bias, reward_position, reward_stall, shaping_rewards, Shaping,
};
pub use vec_env::{CriticInput, VecEnv};

pub const ACTION_DIM: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushConfig {
    pub enabled: bool,
    /// m/s
    pub max_speed: f64,
    /// Time of the first push is uniform in this range (s).
    pub first: [f64; 2],
    /// Gap between consecutive pushes is uniform in this range (s).
    pub interval: [f64; 2],
}

impl Default for PushConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_speed: 0.5,
            first: [1.0, 3.0],
            interval: [3.0, 6.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Episode length T (s).
    pub horizon: f64,
    /// Terminal reward window T_r (s).
    pub reward_window: f64,
    pub physics_dt: f64,
    pub substeps: usize,
    /// Joint targets are `default_posture + action * joint_action_scale` (rad).
    pub joint_action_scale: f64,
    /// Wheel velocity targets are `action * wheel_action_scale` (rad/s).
    pub wheel_action_scale: f64,
    pub action_clip: f64,
    pub rewards: RewardCoefficients,
    /// Multiply per-tick rewards by the control period.
    pub scale_rewards_by_dt: bool,
    pub noise: NoiseModel,
    /// Chance that the actor sees the previous tick's state.
    pub delay_probability: f64,
    pub push: PushConfig,
    pub friction_range: [f64; 2],
    /// Half-width of the episode-level height-command variation (m).
    pub height_jitter: f64,
    /// Half-width of the initial joint-angle perturbation (rad).
    pub joint_init_noise: f64,
    /// Spawn distance before the first step edge (m).
    pub spawn_distance: [f64; 2],
    /// Goal distance past the last step edge (m).
    pub goal_past_edge: [f64; 2],
    /// Goal spread around the spawn on non-step terrains (m).
    pub goal_radius: f64,
    pub fall_pitch: f64,
    pub fall_clearance: f64,
    /// When false the terrain boolean is always 0.
    pub use_terrain_bool: bool,
    /// The heading bias reward switches off once the running mean episode
    /// position reward reaches this fraction of its maximum.
    pub pos_bias_cutoff: f64,
    /// Iterations in the running mean behind the cutoff.
    pub pos_bias_window: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            horizon: 6.0,
            reward_window: 2.0,
            physics_dt: PHYSICS_DT,
            substeps: SUBSTEPS,
            joint_action_scale: 0.5,
            wheel_action_scale: 10.0,
            action_clip: 5.0,
            rewards: RewardCoefficients::default(),
            scale_rewards_by_dt: true,
            noise: NoiseModel::default(),
            delay_probability: 0.5,
            push: PushConfig::default(),
            friction_range: [0.4, 1.1],
            height_jitter: 0.03,
            joint_init_noise: 0.1,
            spawn_distance: [0.3, 1.0],
            goal_past_edge: [0.4, 1.0],
            goal_radius: 1.0,
            fall_pitch: 1.2,
            fall_clearance: 0.05,
            use_terrain_bool: true,
            pos_bias_cutoff: 0.5,
            pos_bias_window: 100,
        }
    }
}

impl TaskConfig {
    pub fn control_dt(&self) -> f64 {
        self.physics_dt * self.substeps as f64
    }

    pub fn ticks_per_episode(&self) -> usize {
        (self.horizon / self.control_dt()).round() as usize
    }

    fn reward_scale(&self) -> f64 {
        if self.scale_rewards_by_dt {
            self.control_dt()
        } else {
            1.0
        }
    }

    /// Largest weighted position reward one episode can collect.
    pub fn max_episode_position_reward(&self) -> f64 {
        let ticks = self.reward_window / self.control_dt();
        self.rewards.position * ticks / self.reward_window * self.reward_scale()
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.horizon > 0.0, "horizon must be > 0"),
            (
                self.reward_window > 0.0 && self.reward_window < self.horizon,
                "reward_window must be in (0, horizon)",
            ),
            (self.physics_dt > 0.0, "physics_dt must be > 0"),
            (self.substeps > 0, "substeps must be > 0"),
            (
                (0.0..=1.0).contains(&self.delay_probability),
                "delay_probability must be in [0, 1]",
            ),
            (
                self.friction_range[0] >= 0.1
                    && self.friction_range[0] <= self.friction_range[1]
                    && self.friction_range[1] <= 2.0,
                "friction_range must be an ordered pair inside [0.1, 2]",
            ),
            (
                self.push.max_speed >= 0.0 && self.push.max_speed <= crate::sim::MAX_PUSH_SPEED,
                "push.max_speed must be in [0, 0.5]",
            ),
            (
                self.push.interval[0] >= 3.0 && self.push.interval[0] <= self.push.interval[1],
                "push.interval must start at >= 3 s",
            ),
            (
                self.spawn_distance[0] <= self.spawn_distance[1],
                "spawn_distance must be ordered",
            ),
            (
                self.goal_past_edge[0] <= self.goal_past_edge[1],
                "goal_past_edge must be ordered",
            ),
            (self.action_clip > 0.0, "action_clip must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}

/// Per-episode bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub t: f64,
    pub horizon: f64,
    pub reward_window: f64,
    pub goal: [f64; 2],
    pub goal_heading: f64,
    pub height_target: f64,
    pub terrain_bool: bool,
    /// Curriculum (row, column).
    pub cell: (usize, usize),
    pub friction: f64,
    pub next_push: f64,
    pub push_times: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub position: f64,
    pub pos_bias: f64,
    pub stall: f64,
    pub face_goal: f64,
    pub shaping: Shaping,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Timeout,
    Fall,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: Option<Termination>,
    /// Distance from the base to the goal after this tick (m).
    pub distance: f64,
}

impl StepOutcome {
    pub fn is_done(&self) -> bool {
        self.done.is_some()
    }

    pub fn is_timeout(&self) -> bool {
        self.done == Some(Termination::Timeout)
    }
}

/// Summary of a finished episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub cell: (usize, usize),
    pub termination: Termination,
    pub final_distance: f64,
    pub ret: f64,
    pub length: usize,
    /// Weighted position reward collected over the episode.
    pub position_reward: f64,
}

/// One simulated robot performing the task.
#[derive(Clone, Debug)]
pub struct Env {
    model: Arc<RobotModel>,
    cfg: Arc<TaskConfig>,
    terrain: HeightField,
    state: RobotState,
    prev_state: RobotState,
    episode: EpisodeState,
    last_action: [f64; ACTION_DIM],
    forces: [[f64; 4]; FORCE_WINDOW],
    force_head: usize,
    torques: [f64; 6],
    contacts: Vec<ContactPoint>,
    air_time: [f64; 2],
    pos_bias_active: bool,
    ep_return: f64,
    ep_len: usize,
    ep_position: f64,
    rng: ChaCha8Rng,
    obs_rng: ChaCha8Rng,
}

impl Env {
    /// The environment starts on flat ground; call [`Env::reset`] to begin an episode.
    pub fn new(model: Arc<RobotModel>, cfg: Arc<TaskConfig>, seed: u64) -> Self {
        let terrain = HeightField::flat();
        let state = RobotState::standing(&model, &terrain, 3.0);
        let h = model.nominal_height();
        Self {
            episode: EpisodeState {
                t: 0.0,
                horizon: cfg.horizon,
                reward_window: cfg.reward_window,
                goal: [state.x, state.z],
                goal_heading: 0.0,
                height_target: h,
                terrain_bool: false,
                cell: (0, 0),
                friction: terrain.friction(),
                next_push: f64::INFINITY,
                push_times: Vec::new(),
            },
            model,
            cfg,
            terrain,
            state,
            prev_state: state,
            last_action: [0.0; ACTION_DIM],
            forces: [[0.0; 4]; FORCE_WINDOW],
            force_head: 0,
            torques: [0.0; 6],
            contacts: Vec::new(),
            air_time: [0.0; 2],
            pos_bias_active: true,
            ep_return: 0.0,
            ep_len: 0,
            ep_position: 0.0,
            rng: rng_for(seed, &[1]),
            obs_rng: rng_for(seed, &[2]),
        }
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &TaskConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn episode(&self) -> &EpisodeState {
        &self.episode
    }

    pub fn terrain(&self) -> &HeightField {
        &self.terrain
    }

    pub fn last_action(&self) -> &[f64; ACTION_DIM] {
        &self.last_action
    }

    pub fn set_terrain_bool(&mut self, b: bool) {
        self.episode.terrain_bool = b;
    }

    pub fn set_goal(&mut self, goal: [f64; 2]) {
        self.episode.goal = goal;
    }

    pub fn set_height_target(&mut self, h: f64) {
        self.episode.height_target = h;
    }

    pub fn set_pos_bias_active(&mut self, on: bool) {
        self.pos_bias_active = on;
    }

    /// Contacts of the last physics substep.
    pub fn contacts(&self) -> &[ContactPoint] {
        &self.contacts
    }

    pub fn distance_to_goal(&self) -> f64 {
        (self.state.x - self.episode.goal[0]).hypot(self.state.z - self.episode.goal[1])
    }

    /// Contact forces averaged over the trailing window, `[Fx0, Fz0, Fx1, Fz1]`.
    pub fn mean_wheel_forces(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for f in &self.forces {
            for i in 0..4 {
                m[i] += f[i] / FORCE_WINDOW as f64;
            }
        }
        m
    }

    /// Starts a new episode on `terrain` for curriculum cell `cell`.
    pub fn reset(&mut self, terrain: &HeightField, cell: (usize, usize)) {
        let cfg = self.cfg.clone();
        let rng = &mut self.rng;
        let mu = uniform(rng, cfg.friction_range);
        self.terrain = terrain
            .with_friction(mu)
            .unwrap_or_else(|_| terrain.clone());
        let nominal = self.model.nominal_height();
        let height_target = nominal + uniform(rng, [-cfg.height_jitter, cfg.height_jitter]);

        let edges = terrain.step_edges();
        let (spawn_x, goal_x) = if terrain.kind().is_step_family() && !edges.is_empty() {
            let spawn = edges[0] - uniform(rng, cfg.spawn_distance);
            let goal = edges[edges.len() - 1] + uniform(rng, cfg.goal_past_edge);
            (spawn, goal)
        } else {
            let spawn = uniform(rng, [2.5, 3.5]);
            let goal = spawn + uniform(rng, [-cfg.goal_radius, cfg.goal_radius]);
            (spawn, goal.clamp(0.5, terrain.extent() - 0.5))
        };
        let goal_z = self.terrain.height_at_clamped(goal_x) + height_target;

        let mut state = RobotState {
            x: spawn_x,
            joint_pos: self.model.default_posture,
            ..Default::default()
        };
        for j in 0..4 {
            let q =
                state.joint_pos[j] + uniform(rng, [-cfg.joint_init_noise, cfg.joint_init_noise]);
            state.joint_pos[j] = self.model.clamp_joint(j, q);
        }
        state.place_on_terrain(&self.model, &self.terrain);

        let next_push = if cfg.push.enabled {
            uniform(rng, cfg.push.first)
        } else {
            f64::INFINITY
        };
        self.episode = EpisodeState {
            t: 0.0,
            horizon: cfg.horizon,
            reward_window: cfg.reward_window,
            goal: [goal_x, goal_z],
            goal_heading: 0.0,
            height_target,
            terrain_bool: cfg.use_terrain_bool && terrain.kind().is_step_family(),
            cell,
            friction: self.terrain.friction(),
            next_push,
            push_times: Vec::new(),
        };
        self.state = state;
        self.prev_state = state;
        self.last_action = [0.0; ACTION_DIM];
        self.forces = [[0.0; 4]; FORCE_WINDOW];
        self.force_head = 0;
        self.torques = [0.0; 6];
        self.contacts.clear();
        self.air_time = [0.0; 2];
        self.ep_return = 0.0;
        self.ep_len = 0;
        self.ep_position = 0.0;
    }

    fn commands(&self) -> Commands {
        Commands {
            goal: self.episode.goal,
            heading_error: 0.0,
            height_target: self.episode.height_target,
            terrain_bool: self.episode.terrain_bool,
        }
    }

    /// Noise-free actor observation of the current state.
    pub fn observe_clean(&self) -> [f64; OBS_DIM] {
        pack_observation(
            &self.state,
            &self.commands(),
            &self.model.default_posture,
            &self.last_action,
        )
    }

    /// Actor observation: possibly one tick stale, with sensor noise. Call once per tick.
    pub fn observe(&mut self) -> [f64; OBS_DIM] {
        let delayed = self.cfg.delay_probability > 0.0
            && self.obs_rng.random::<f64>() < self.cfg.delay_probability;
        let source = if delayed {
            &self.prev_state
        } else {
            &self.state
        };
        let mut o = pack_observation(
            source,
            &self.commands(),
            &self.model.default_posture,
            &self.last_action,
        );
        self.cfg.noise.apply(&mut o, &mut self.obs_rng);
        o
    }

    pub fn observe_privileged(&self) -> [f64; PRIV_DIM] {
        pack_privileged(
            &self.state,
            self.episode.goal,
            &self.terrain,
            &self.mean_wheel_forces(),
        )
    }

    /// Maps a policy action to actuator targets.
    pub fn action_to_command(&self, action: &[f64; ACTION_DIM]) -> ActuatorCommand {
        let c = self.cfg.action_clip;
        let a = action.map(|v| v.clamp(-c, c));
        let mut cmd = ActuatorCommand::default();
        for j in 0..4 {
            cmd.joint_targets[j] =
                self.model.default_posture[j] + a[j] * self.cfg.joint_action_scale;
        }
        for w in 0..2 {
            cmd.wheel_velocity[w] = a[4 + w] * self.cfg.wheel_action_scale;
        }
        cmd
    }

    /// Advances one control tick.
    pub fn step(&mut self, action: &[f64; ACTION_DIM]) -> StepOutcome {
        let action = if action.iter().all(|v| v.is_finite()) {
            action.map(|v| v.clamp(-self.cfg.action_clip, self.cfg.action_clip))
        } else {
            [f64::NAN; ACTION_DIM]
        };
        let cmd = self.action_to_command(&action);
        self.prev_state = self.state;
        let dt = self.cfg.physics_dt;
        let mut tick_force = [0.0; 4];
        let mut touchdown = [0.0; 2];
        let mut mean_torque = [0.0; 6];
        let mut failure: Option<SimError> = None;
        for _ in 0..self.cfg.substeps {
            match step_physics_detailed(&self.model, &self.state, &cmd, &self.terrain, dt) {
                Ok(r) => {
                    let f = wheel_forces(&r.contacts);
                    for i in 0..4 {
                        tick_force[i] += f[i] / self.cfg.substeps as f64;
                    }
                    for w in 0..2 {
                        let touching = r
                            .contacts
                            .iter()
                            .any(|c| c.wheel == w && c.normal_force > 0.0);
                        if touching {
                            if self.air_time[w] > 0.0 {
                                touchdown[w] = self.air_time[w];
                            }
                            self.air_time[w] = 0.0;
                        } else {
                            self.air_time[w] += dt;
                        }
                    }
                    for i in 0..6 {
                        mean_torque[i] += r.torques[i] / self.cfg.substeps as f64;
                    }
                    self.state = r.state;
                    self.contacts = r.contacts;
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        let control_dt = self.cfg.control_dt();
        self.episode.t += control_dt;
        self.ep_len += 1;
        if failure.is_some() {
            // keep the last finite state so observers never see NaNs
            if !self.state.is_finite() {
                self.state = self.prev_state;
            }
            let reward = -self.cfg.rewards.termination;
            self.ep_return += reward;
            self.last_action = [0.0; ACTION_DIM];
            return StepOutcome {
                reward,
                terms: RewardTerms::default(),
                done: Some(Termination::Diverged),
                distance: self.distance_to_goal(),
            };
        }
        self.torques = mean_torque;
        self.forces[self.force_head] = tick_force;
        self.force_head = (self.force_head + 1) % FORCE_WINDOW;

        if self.cfg.push.enabled && self.episode.t >= self.episode.next_push {
            let speed = self.rng.random_range(0.0..=self.cfg.push.max_speed);
            let dir = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            self.state = apply_push(&self.state, speed, [dir, 0.0]);
            self.episode.push_times.push(self.episode.t);
            self.episode.next_push += uniform(&mut self.rng, self.cfg.push.interval);
        }

        let s = &self.state;
        let pos = [s.x, s.z];
        let vel = [s.vx, s.vz];
        let goal = self.episode.goal;
        let shaping = shaping_rewards(
            &s.joint_vel,
            &self.prev_state.joint_vel,
            control_dt,
            &action,
            &self.last_action,
            &self.torques,
            s.pitch,
            &touchdown,
        );
        let terms = RewardTerms {
            position: reward_position(
                pos,
                goal,
                self.episode.t,
                self.episode.horizon,
                self.episode.reward_window,
            ),
            pos_bias: if self.pos_bias_active {
                reward_pos_bias(vel, pos, goal)
            } else {
                0.0
            },
            stall: reward_stall(vel, pos, goal),
            face_goal: reward_face_goal(0.0, self.episode.goal_heading, pos, goal),
            shaping,
        };
        let c = &self.cfg.rewards;
        let scale = self.cfg.reward_scale();
        let position = c.position * terms.position * scale;
        let mut reward = position
            + (c.pos_bias * terms.pos_bias
                + c.stall * terms.stall
                + c.face_goal * terms.face_goal
                + shaping.weighted(c))
                * scale;

        let done = if self.has_fallen() {
            reward -= c.termination;
            Some(Termination::Fall)
        } else if self.episode.t >= self.episode.horizon - 1e-9 {
            Some(Termination::Timeout)
        } else {
            None
        };
        self.last_action = action;
        self.ep_return += reward;
        self.ep_position += position;
        StepOutcome {
            reward,
            terms,
            done,
            distance: self.distance_to_goal(),
        }
    }

    fn has_fallen(&self) -> bool {
        let s = &self.state;
        if s.pitch.abs() > self.cfg.fall_pitch {
            return true;
        }
        if s.z < self.terrain.height_at_clamped(s.x) + self.cfg.fall_clearance {
            return true;
        }
        let frame = body_frame(&self.model, s);
        frame
            .knees
            .iter()
            .any(|k| k[1] < self.terrain.height_at_clamped(k[0]))
    }

    /// Summary of the episode that just ended with `termination`.
    pub fn summary(&self, termination: Termination) -> EpisodeSummary {
        EpisodeSummary {
            cell: self.episode.cell,
            termination,
            final_distance: self.distance_to_goal(),
            ret: self.ep_return,
            length: self.ep_len,
            position_reward: self.ep_position,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}
