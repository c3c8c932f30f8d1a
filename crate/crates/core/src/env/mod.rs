//! Batched locomotion environment around the mechanism simulator.
//!
//! One environment step is `substeps` simulator substeps. The policy output
//! is an offset from the nominal actuator positions; it passes through the
//! action delay, a Butterworth lowpass and a deadband before becoming the PD
//! target. The torso is a lumped model ([`base`]): kicks change its velocity,
//! COM offsets and hip roll/pitch set its lean.

pub mod base;
pub mod config;
pub mod filters;
pub mod latency;
pub mod obs;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod trace;

use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;

use self::base::{BaseState, Kick, KickKind};
use self::config::EnvConfig;
use self::filters::FilterBank;
use self::latency::DelayLine;
use self::obs::{obs_width, observation_vector, projected_gravity, ObsInput, ObservationWindow};
use self::policy::Policy;
use self::reward::{reward, FootState, RewardInput, TermVector, NUM_TERMS};
use self::rng::{channel, KeyedRng};
use self::trace::{DynamicsRow, Trace, TraceRecord, BASE_STATE_NAMES};
use crate::error::{DynamicsError, EnvError};
use crate::model::{Mechanism, MechanismModel, SimLayout, Simulator, VariantSpec};

pub use self::config::curriculum_stage;

/// Parameters drawn at the start of each episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeParams {
    pub mass_scale: f64,
    pub kp: Vec<f64>,
    pub com_offset: [f64; 3],
    /// Roll and pitch of the IMU mounting error (rad).
    pub imu_tilt: [f64; 2],
    pub imu_displacement: [f64; 3],
    pub foot_offsets: Vec<[f64; 3]>,
    pub terrain_heights: Vec<f64>,
    pub obs_delay: usize,
    pub action_delay: usize,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Global step counter of this environment after the step.
    pub step: u64,
    pub episode_step: u64,
    pub reward: f64,
    /// Weighted terms; masked terms are 0.
    pub terms: TermVector,
    pub done: bool,
    /// Done because the episode reached its step limit.
    pub time_limit: bool,
    pub kick: Option<Kick>,
    /// Torso state at the end of the step, before any auto-reset.
    pub base: BaseState,
}

impl Default for StepInfo {
    fn default() -> Self {
        Self {
            step: 0,
            episode_step: 0,
            reward: 0.0,
            terms: [0.0; NUM_TERMS],
            done: false,
            time_limit: false,
            kick: None,
            base: BaseState::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct FootTrack {
    mechanism: usize,
    nominal: Vector3<f64>,
    prev: Vector3<f64>,
    air: f64,
    contact: bool,
}

/// A single environment instance with its own simulator, filters and random streams.
#[derive(Debug, Clone)]
pub struct Env {
    index: u64,
    cfg: Arc<EnvConfig>,
    model: Arc<MechanismModel>,
    sim: Simulator,
    base: BaseState,
    episode: EpisodeParams,
    episode_index: u64,
    t_global: u64,
    t_episode: u64,
    command: [f64; 3],
    q_nom_act: Vec<f64>,
    hip_pairs: Vec<[usize; 2]>,
    feet: Vec<FootTrack>,
    foot_states: Vec<FootState>,
    imu_rotation: Matrix3<f64>,
    action_line: DelayLine,
    action_filter: FilterBank,
    obs_line: DelayLine,
    obs_filter: Option<FilterBank>,
    window: ObservationWindow,
    prev_action: Vec<f64>,
    action: Vec<f64>,
    target: Vec<f64>,
    q_kin: Vec<f64>,
    q_act: Vec<f64>,
    step_q_act: Vec<f64>,
    step_residual: f64,
    diagnostics: bool,
    o: Vec<f64>,
    o_delayed: Vec<f64>,
    filt: Vec<f64>,
}

impl Env {
    pub fn new(
        model: Arc<MechanismModel>,
        layout: Arc<SimLayout>,
        cfg: Arc<EnvConfig>,
        index: u64,
    ) -> Result<Self, EnvError> {
        cfg.validate()?;
        let n = model.num_actuators();
        let width = obs_width(n);
        let hz = cfg.sample_hz();
        let action_filter = FilterBank::new(n, cfg.filters.action_cutoff_hz, hz, cfg.filters.action_deadband_rad)?;
        let obs_filter = if cfg.filters.obs_cutoff_hz.is_some() || cfg.filters.obs_deadband > 0.0 {
            Some(FilterBank::new(4 + n, cfg.filters.obs_cutoff_hz, hz, cfg.filters.obs_deadband)?)
        } else {
            None
        };
        let hip_pairs = model
            .mechanisms
            .iter()
            .filter_map(|m| match m {
                Mechanism::Differential { outputs, .. } => Some(*outputs),
                _ => None,
            })
            .collect();
        let feet: Vec<FootTrack> = model
            .feet()
            .into_iter()
            .map(|(_, mechanism)| {
                let nominal = model.five_bar_endpoint(mechanism, &model.q_nom).expect("feet are five-bar endpoints");
                FootTrack { mechanism, nominal, prev: nominal, air: 0.0, contact: true }
            })
            .collect();
        let sim = Simulator::from_layout(&model, layout);
        let mut env = Self {
            index,
            q_nom_act: model.nominal_actuators(),
            q_kin: model.q_nom.clone(),
            foot_states: vec![FootState::default(); feet.len()],
            feet,
            hip_pairs,
            sim,
            base: BaseState::default(),
            episode: EpisodeParams::default(),
            episode_index: 0,
            t_global: 0,
            t_episode: 0,
            command: [0.0; 3],
            imu_rotation: Matrix3::identity(),
            action_line: DelayLine::new(0, vec![0.0; n]),
            action_filter,
            obs_line: DelayLine::new(0, vec![0.0; width]),
            obs_filter,
            window: ObservationWindow::new(cfg.history, width),
            prev_action: vec![0.0; n],
            action: vec![0.0; n],
            target: vec![0.0; n],
            q_act: vec![0.0; n],
            step_q_act: vec![0.0; n],
            step_residual: 0.0,
            diagnostics: false,
            o: vec![0.0; width],
            o_delayed: vec![0.0; width],
            filt: vec![0.0; 4 + n],
            cfg,
            model,
        };
        env.start_episode();
        Ok(env)
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn obs_len(&self) -> usize {
        self.window.flat_len()
    }

    pub fn num_actions(&self) -> usize {
        self.q_nom_act.len()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn base(&self) -> &BaseState {
        &self.base
    }

    pub fn episode(&self) -> &EpisodeParams {
        &self.episode
    }

    pub fn command(&self) -> [f64; 3] {
        self.command
    }

    /// Actuator positions at the end of the last step, before any auto-reset.
    pub fn step_actuator_positions(&self) -> &[f64] {
        &self.step_q_act
    }

    /// Largest constraint violation at the end of the last step; only
    /// tracked with diagnostics on.
    pub fn step_residual(&self) -> f64 {
        self.step_residual
    }

    pub fn set_diagnostics(&mut self, on: bool) {
        self.diagnostics = on;
    }

    /// Current stacked observation.
    pub fn observation(&self, out: &mut [f64]) {
        self.window.flatten_into(out);
    }

    /// Start a new episode and write its first stacked observation.
    pub fn reset(&mut self, obs_out: &mut [f64]) {
        self.start_episode();
        self.window.flatten_into(obs_out);
    }

    fn key(&self, step: u64, ch: u64) -> KeyedRng {
        KeyedRng::new(self.cfg.seed, self.index, step, ch)
    }

    fn draw_episode(&self) -> EpisodeParams {
        let cfg = &*self.cfg;
        let r = &cfg.randomization;
        let e = self.episode_index;
        let u = |rng: &mut KeyedRng, range: [f64; 2]| rng.uniform(range[0], range[1]);
        let mass_scale = u(&mut self.key(e, channel::MASS), r.mass_scale);
        let mut rng = self.key(e, channel::KP);
        let kp = self.model.actuators.iter().map(|a| (a.kp + u(&mut rng, r.kp_offset)).max(1.0)).collect();
        let mut rng = self.key(e, channel::COM);
        let com_offset = [0; 3].map(|_| u(&mut rng, r.com_offset_m));
        let mut rng = self.key(e, channel::IMU_TILT);
        let imu_tilt = [0; 2].map(|_| u(&mut rng, r.imu_tilt_rad));
        let mut rng = self.key(e, channel::IMU_DISPLACEMENT);
        let imu_displacement = [0; 3].map(|_| u(&mut rng, r.imu_displacement_m));
        let mut rng = self.key(e, channel::FOOT_OFFSET);
        let foot_offsets = (0..self.feet.len())
            .map(|_| [u(&mut rng, r.foot_offset_x_m), u(&mut rng, r.foot_offset_yz_m), u(&mut rng, r.foot_offset_yz_m)])
            .collect();
        let mut rng = self.key(e, channel::TERRAIN);
        let terrain_heights = (0..self.feet.len()).map(|_| u(&mut rng, r.terrain_height_m)).collect();
        let obs_delay = cfg.latency.sample_obs_delay(&mut self.key(e, channel::OBS_LATENCY), cfg.control_dt_s);
        let action_delay = cfg.latency.sample_action_delay(&mut self.key(e, channel::ACTION_LATENCY));
        EpisodeParams {
            mass_scale,
            kp,
            com_offset,
            imu_tilt,
            imu_displacement,
            foot_offsets,
            terrain_heights,
            obs_delay,
            action_delay,
        }
    }

    fn sample_command(&self, mut rng: KeyedRng) -> [f64; 3] {
        let c = &self.cfg.commands;
        [rng.uniform(c.vx[0], c.vx[1]), rng.uniform(c.vy[0], c.vy[1]), rng.uniform(c.yaw_rate[0], c.yaw_rate[1])]
    }

    fn start_episode(&mut self) {
        self.episode = self.draw_episode();
        self.command = self.sample_command(self.key(self.episode_index, channel::EPISODE_COMMAND));
        self.episode_index += 1;
        self.t_episode = 0;

        self.sim.reset();
        self.sim.set_mass_scale(self.episode.mass_scale);
        self.sim.set_kp(&self.episode.kp);
        self.base = BaseState::default();
        let [tr, tp] = self.episode.imu_tilt;
        self.imu_rotation = *Rotation3::from_euler_angles(tr, tp, 0.0).matrix();

        let n = self.q_nom_act.len();
        self.prev_action.iter_mut().for_each(|a| *a = 0.0);
        self.action_line.reset(self.episode.action_delay, &vec![0.0; n]);
        self.action_filter.reset(&vec![0.0; n]);

        self.q_kin.copy_from_slice(&self.model.q_nom);
        self.sim.actuator_positions(&mut self.q_act);
        for (f, off) in self.feet.iter_mut().zip(&self.episode.foot_offsets) {
            f.prev = f.nominal + Vector3::from(*off);
            f.air = 0.0;
            f.contact = true;
        }

        self.window.clear();
        self.clean_observation();
        self.add_noise();
        if let Some(bank) = &mut self.obs_filter {
            gather_filtered(&self.o, n, &mut self.filt);
            bank.reset(&self.filt);
        }
        self.obs_line.reset(self.episode.obs_delay, &self.o);
        self.o_delayed.copy_from_slice(&self.o);
        self.window.push(&self.o_delayed);
    }

    fn clean_observation(&mut self) {
        let r = self.base.rotation() * self.imu_rotation;
        let g = projected_gravity(&r);
        for (d, (q, q0)) in self.target.iter_mut().zip(self.q_act.iter().zip(&self.q_nom_act)) {
            *d = q - q0;
        }
        let input = ObsInput {
            yaw_rate: self.base.yaw_rate,
            gravity: [g.x, g.y, g.z],
            command: self.command,
            joint_offsets: &self.target,
            prev_action: &self.prev_action,
        };
        observation_vector(&input, &mut self.o);
    }

    fn add_noise(&mut self) {
        let mut rng = self.key(self.t_global, channel::OBS_NOISE);
        obs::add_observation_noise(&mut self.o, self.q_nom_act.len(), &self.cfg.obs_noise, &mut rng);
    }

    fn observe(&mut self, obs_out: &mut [f64]) {
        self.clean_observation();
        self.add_noise();
        let n = self.q_nom_act.len();
        if let Some(bank) = &mut self.obs_filter {
            gather_filtered(&self.o, n, &mut self.filt);
            bank.apply(&mut self.filt);
            scatter_filtered(&self.filt, n, &mut self.o);
        }
        self.obs_line.push(&self.o, &mut self.o_delayed);
        self.window.push(&self.o_delayed);
        self.window.flatten_into(obs_out);
    }

    /// Apply `action`, advance one control step, and write the next stacked
    /// observation. A finished episode is reset in place; the observation is
    /// then the first one of the new episode.
    pub fn step(&mut self, action: &[f64], obs_out: &mut [f64]) -> Result<StepInfo, EnvError> {
        let n = self.q_nom_act.len();
        if action.len() != n {
            return Err(EnvError::ActionWidth { got: action.len(), expected: n });
        }
        self.t_global += 1;
        self.t_episode += 1;
        let cfg = Arc::clone(&self.cfg);
        let dt = cfg.control_dt_s;
        let sub_dt = cfg.substep_dt();

        if let Some(i) = action.iter().position(|a| !a.is_finite()) {
            return Err(EnvError::Dynamics {
                step: self.t_global,
                source: DynamicsError::Invalid(format!("policy action {i} is not finite")),
            });
        }
        for (a, &x) in self.action.iter_mut().zip(action) {
            *a = x.clamp(-cfg.action_clip_rad, cfg.action_clip_rad);
        }
        self.action_line.push(&self.action, &mut self.target);
        self.action_filter.apply(&mut self.target);
        for (t, q0) in self.target.iter_mut().zip(&self.q_nom_act) {
            *t += q0;
        }

        let every = |interval: u64| interval > 0 && self.t_episode % interval == 0;
        if every(cfg.commands.resample_interval) {
            self.command = self.sample_command(self.key(self.t_global, channel::COMMAND));
        }
        let d = &cfg.disturbances;
        let kick = if every(d.kick_interval) {
            Some((KickKind::Large, channel::KICK, d.kick_velocity))
        } else if every(d.small_kick_interval) {
            Some((KickKind::Small, channel::SMALL_KICK, d.small_kick_velocity))
        } else {
            None
        }
        .map(|(kind, ch, range)| {
            let mut rng = self.key(self.t_global, ch);
            let speed = rng.uniform(range[0], range[1]);
            let heading = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
            self.base.kick(kind, speed, heading, &cfg.base)
        });

        self.sim
            .step(&self.target, sub_dt, cfg.substeps)
            .map_err(|source| EnvError::Dynamics { step: self.t_global, source })?;
        self.sim.joint_positions(&mut self.q_kin);
        self.sim.actuator_positions(&mut self.q_act);
        self.step_q_act.copy_from_slice(&self.q_act);
        if self.diagnostics {
            self.step_residual = self.sim.layout().constraints().max_violation(&self.sim.state.q);
        }

        let (mut roll_hip, mut pitch_hip) = (0.0, 0.0);
        if !self.hip_pairs.is_empty() {
            for [r, p] in &self.hip_pairs {
                roll_hip += self.q_kin[*r] - self.model.q_nom[*r];
                pitch_hip += self.q_kin[*p] - self.model.q_nom[*p];
            }
            roll_hip /= self.hip_pairs.len() as f64;
            pitch_hip /= self.hip_pairs.len() as f64;
        }
        let h = cfg.base.com_height_m;
        let roll_eq = -self.episode.com_offset[1] / h + cfg.base.hip_tilt_gain * roll_hip;
        let pitch_eq = self.episode.com_offset[0] / h + cfg.base.hip_tilt_gain * pitch_hip;
        self.base.advance(&cfg.base, roll_eq, pitch_eq, sub_dt, cfg.substeps);

        let t = self.t_episode as f64 * dt;
        let n_feet = self.feet.len();
        let ang_vel = self.base.ang_vel();
        for (i, f) in self.feet.iter_mut().enumerate() {
            let off = Vector3::from(self.episode.foot_offsets[i]);
            let pos = self.model.five_bar_endpoint(f.mechanism, &self.q_kin).expect("foot mechanism") + off;
            let v = (pos - f.prev) / dt + Vector3::from(self.base.lin_vel);
            f.prev = pos;
            let z = pos.z - f.nominal.z;
            let contact = z <= cfg.contact_threshold_m;
            let first_contact = contact && !f.contact;
            let mut air_time = 0.0;
            if first_contact {
                air_time = f.air;
                f.air = 0.0;
            } else if !contact {
                f.air += dt;
            }
            f.contact = contact;
            self.foot_states[i] = FootState {
                z,
                z_ref: cfg.rewards.swing_reference(t, i, n_feet),
                velocity: [v.x, v.y, v.z],
                angular_velocity: ang_vel,
                air_time,
                contact,
                first_contact,
            };
        }

        let time_limit = self.t_episode >= cfg.max_episode_steps;
        let done = time_limit || self.base.tilt() > cfg.termination_tilt_rad;
        let g = projected_gravity(&self.base.rotation());
        let input = RewardInput {
            command: self.command,
            lin_vel: self.base.local_lin_vel(),
            ang_vel,
            projected_gravity: [g.x, g.y, g.z],
            torques: self.sim.actuator_torques(),
            action: &self.action,
            prev_action: &self.prev_action,
            joint_pos: &self.q_act,
            joint_default: &self.q_nom_act,
            feet: &self.foot_states,
            done,
            t,
            t_max: cfg.max_episode_steps as f64 * dt,
        };
        let (total, terms) = reward(&input, &cfg.rewards, &cfg.reward_mask());
        let info = StepInfo {
            step: self.t_global,
            episode_step: self.t_episode,
            reward: total,
            terms,
            done,
            time_limit,
            kick,
            base: self.base,
        };
        self.prev_action.copy_from_slice(&self.action);
        if done {
            self.reset(obs_out);
        } else {
            self.observe(obs_out);
        }
        Ok(info)
    }
}

fn gather_filtered(o: &[f64], n: usize, out: &mut [f64]) {
    out[..4].copy_from_slice(&o[..4]);
    out[4..4 + n].copy_from_slice(&o[obs::JOINTS..obs::JOINTS + n]);
}

fn scatter_filtered(f: &[f64], n: usize, o: &mut [f64]) {
    o[..4].copy_from_slice(&f[..4]);
    o[obs::JOINTS..obs::JOINTS + n].copy_from_slice(&f[4..4 + n]);
}

/// Environments stepped together; each owns its state and random streams.
#[derive(Debug, Clone)]
pub struct BatchEnv {
    envs: Vec<Env>,
    indices: Vec<u64>,
    obs: Vec<f64>,
    infos: Vec<StepInfo>,
    obs_len: usize,
    n_actions: usize,
}

impl BatchEnv {
    pub fn new(model: &MechanismModel, variant: VariantSpec, cfg: &EnvConfig, n_envs: usize) -> Result<Self, EnvError> {
        Self::with_indices(model, variant, cfg, (0..n_envs as u64).collect())
    }

    /// Batch holding the environments with the given indices, in that order.
    pub fn with_indices(
        model: &MechanismModel,
        variant: VariantSpec,
        cfg: &EnvConfig,
        indices: Vec<u64>,
    ) -> Result<Self, EnvError> {
        if indices.is_empty() {
            return Err(EnvError::Config("batch needs at least one environment".into()));
        }
        cfg.validate()?;
        let model = Arc::new(model.clone());
        let layout = Arc::new(SimLayout::new(&model, variant)?);
        let cfg = Arc::new(cfg.clone());
        let envs = indices
            .par_iter()
            .map(|&i| Env::new(Arc::clone(&model), Arc::clone(&layout), Arc::clone(&cfg), i))
            .collect::<Result<Vec<_>, _>>()?;
        let obs_len = envs[0].obs_len();
        let n_actions = envs[0].num_actions();
        let mut obs = vec![0.0; obs_len * envs.len()];
        for (e, o) in envs.iter().zip(obs.chunks_mut(obs_len)) {
            e.observation(o);
        }
        let infos = vec![StepInfo::default(); envs.len()];
        Ok(Self { envs, indices, obs, infos, obs_len, n_actions })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn num_actions(&self) -> usize {
        self.n_actions
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    /// Stacked observations, one row of `obs_len` per environment.
    pub fn observations(&self) -> &[f64] {
        &self.obs
    }

    pub fn infos(&self) -> &[StepInfo] {
        &self.infos
    }

    pub fn set_diagnostics(&mut self, on: bool) {
        self.envs.iter_mut().for_each(|e| e.set_diagnostics(on));
    }

    pub fn reset(&mut self) {
        let len = self.obs_len;
        self.envs.par_iter_mut().zip(self.obs.par_chunks_mut(len)).for_each(|(e, o)| e.reset(o));
    }

    /// Step every environment with its row of `actions`. On failure the error
    /// of the first failing environment in batch order is returned.
    pub fn step(&mut self, actions: &[f64]) -> Result<(), EnvError> {
        let expected = self.n_actions * self.envs.len();
        if actions.len() != expected {
            return Err(EnvError::ActionWidth { got: actions.len(), expected });
        }
        let (len, na) = (self.obs_len, self.n_actions);
        let results: Vec<Result<(), EnvError>> = self
            .envs
            .par_iter_mut()
            .zip(self.obs.par_chunks_mut(len))
            .zip(actions.par_chunks(na))
            .zip(self.infos.par_iter_mut())
            .map(|(((e, o), a), info)| {
                *info = e.step(a, o)?;
                Ok(())
            })
            .collect();
        results.into_iter().collect()
    }

    /// Combined FNV-1a checksum of every simulator state, in batch order.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for e in &self.envs {
            for byte in e.sim.checksum().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Run `policy` on a batch with indices `0..n_envs` for `n_steps` and record everything.
pub fn rollout(
    model: &MechanismModel,
    variant: VariantSpec,
    cfg: &EnvConfig,
    policy: &mut dyn Policy,
    n_envs: usize,
    n_steps: usize,
) -> Result<Trace, EnvError> {
    rollout_with_indices(model, variant, cfg, policy, (0..n_envs as u64).collect(), n_steps)
}

pub fn rollout_with_indices(
    model: &MechanismModel,
    variant: VariantSpec,
    cfg: &EnvConfig,
    policy: &mut dyn Policy,
    indices: Vec<u64>,
    n_steps: usize,
) -> Result<Trace, EnvError> {
    let mut batch = BatchEnv::with_indices(model, variant, cfg, indices)?;
    batch.set_diagnostics(true);
    let (n_envs, obs_len, na) = (batch.len(), batch.obs_len(), batch.num_actions());
    let n_state = BASE_STATE_NAMES.len() + na;
    let mut trace = Trace {
        seed: cfg.seed,
        n_envs,
        n_steps,
        obs_len,
        n_actions: na,
        n_state,
        records: Vec::with_capacity(n_envs * n_steps),
        dynamics: Vec::with_capacity(n_steps),
    };
    let mut actions = vec![0.0; n_envs * na];
    for step in 0..n_steps {
        let obs_before = batch.observations().to_vec();
        policy.act(step as u64, batch.indices(), &obs_before, obs_len, &mut actions);
        batch.step(&actions)?;
        for (k, env) in batch.envs().iter().enumerate() {
            let info = &batch.infos()[k];
            let b = &info.base;
            let mut state = Vec::with_capacity(n_state);
            state.extend_from_slice(&b.lin_vel);
            state.extend_from_slice(&[b.roll, b.pitch, b.yaw, b.roll_rate, b.pitch_rate, b.yaw_rate]);
            state.push(env.step_residual());
            state.extend_from_slice(env.step_actuator_positions());
            trace.records.push(TraceRecord {
                step: step as u64,
                env: env.index(),
                done: info.done,
                kick: info.kick.map_or(0, |k| k.kind.code()),
                reward: info.reward,
                terms: info.terms,
                obs: obs_before[k * obs_len..(k + 1) * obs_len].to_vec(),
                action: actions[k * na..(k + 1) * na].to_vec(),
                state,
            });
        }
        let e0 = &batch.envs()[0];
        if !batch.infos()[0].done {
            trace.dynamics.push(DynamicsRow {
                t: (step + 1) as f64 * cfg.control_dt_s,
                q: e0.sim.state.q.clone(),
                qdot: e0.sim.state.qdot.clone(),
                residuals: e0.sim.constraint_residuals(),
            });
        }
    }
    Ok(trace)
}
