//! Versioned binary checkpoint of a full training run.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "DASMRCKP" | u32 version | str config (TOML)
//! u32 obs_dim | u32 action_dim
//! u32 network count, then per network:
//!     str name | u32 tensors { str name | u32 rows | u32 cols | f32[rows*cols] }
//!     u32 norms { str name | u64 steps | tensor running_mean | tensor running_var }
//! u32 optimizer count, then per optimizer:
//!     str name | u64 t | u32 k | k tensors m | k tensors v
//! tensor log_alpha | u64 critic_updates | u64 actor_updates
//! trainer counters, RNG positions, simulator state, open episode, replay buffer
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8. Unnamed tensors carry
//! only their shape.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use dasmr_core::agent::{Agent, Trainer};
use dasmr_core::environment::{DasmrEnv, SimState, StepInfo, OBS_DIM};
use dasmr_core::kinematics::{ChassisTwist, WheelState};
use dasmr_core::neural::{Adam, Mlp, Tensor};
use dasmr_core::replay::Transition;
use dasmr_core::rng::{substream, RngState, ENV_STREAM};

use crate::config::RunConfig;

pub const MAGIC: &[u8; 8] = b"DASMRCKP";
pub const FORMAT_VERSION: u32 = 1;
pub const NETWORKS: [&str; 3] = ["actor", "critic1", "critic2"];
const OPTIMIZERS: [&str; 4] = ["actor", "critic1", "critic2", "alpha"];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint config: {0}")]
    Config(String),
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn bool(&mut self, v: bool) {
        self.u8(u8::from(v));
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length fits in u32"));
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        self.len(v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        for &x in v {
            self.f64(x);
        }
    }
    fn tensor(&mut self, t: &Tensor) {
        self.len(t.rows());
        self.len(t.cols());
        for x in t.data() {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn point(&mut self, p: [f64; 2]) {
        self.f64(p[0]);
        self.f64(p[1]);
    }
    fn rng(&mut self, s: &RngState) {
        self.0.extend_from_slice(&s.seed);
        self.u64(s.stream);
        self.u128(s.word_pos);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice has length N"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("invalid flag byte {b}"))),
        }
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }
    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn f32_payload(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| corrupt("array too large"))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
    fn f32s(&mut self) -> Result<Vec<f32>> {
        let n = self.len()?;
        self.f32_payload(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn tensor(&mut self) -> Result<Tensor> {
        let (rows, cols) = (self.len()?, self.len()?);
        let data = self.f32_payload(rows.checked_mul(cols).ok_or_else(|| corrupt("array too large"))?)?;
        Tensor::from_vec(rows, cols, data).map_err(|e| corrupt(e.to_string()))
    }
    fn point(&mut self) -> Result<[f64; 2]> {
        Ok([self.f64()?, self.f64()?])
    }
    fn rng(&mut self) -> Result<RngState> {
        Ok(RngState { seed: self.array()?, stream: self.u64()?, word_pos: self.u128()? })
    }
}

fn write_network(w: &mut Writer, name: &str, net: &Mlp) {
    w.str(name);
    let names = net.param_names();
    w.len(names.len());
    for (n, t) in names.iter().zip(net.params()) {
        w.str(n);
        w.tensor(t);
    }
    let norms = net.norm_names();
    w.len(norms.len());
    for (n, bn) in norms.iter().zip(net.norms()) {
        w.str(n);
        w.u64(bn.steps);
        w.tensor(&bn.running_mean);
        w.tensor(&bn.running_var);
    }
}

fn expect_name(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(corrupt(format!("expected `{expected}`, found `{found}`")));
    }
    Ok(())
}

fn replace_tensor(slot: &mut Tensor, value: Tensor, name: &str) -> Result<()> {
    if slot.shape() != value.shape() {
        return Err(corrupt(format!("{name}: shape {:?} does not match configured {:?}", value.shape(), slot.shape())));
    }
    *slot = value;
    Ok(())
}

fn read_network(r: &mut Reader, name: &str, net: &mut Mlp) -> Result<()> {
    expect_name(&r.str()?, name)?;
    let names = net.param_names();
    if r.len()? != names.len() {
        return Err(corrupt(format!("{name}: parameter count differs from the configured network")));
    }
    for (expected, slot) in names.iter().zip(net.params_mut()) {
        expect_name(&r.str()?, expected)?;
        replace_tensor(slot, r.tensor()?, expected)?;
    }
    let norms = net.norm_names();
    if r.len()? != norms.len() {
        return Err(corrupt(format!("{name}: normalization layer count differs from the configured network")));
    }
    for (expected, bn) in norms.iter().zip(net.norms_mut()) {
        expect_name(&r.str()?, expected)?;
        bn.steps = r.u64()?;
        replace_tensor(&mut bn.running_mean, r.tensor()?, expected)?;
        replace_tensor(&mut bn.running_var, r.tensor()?, expected)?;
    }
    Ok(())
}

fn write_adam(w: &mut Writer, name: &str, opt: &Adam) {
    w.str(name);
    w.u64(opt.t);
    w.len(opt.m.len());
    for t in opt.m.iter().chain(&opt.v) {
        w.tensor(t);
    }
}

fn read_adam(r: &mut Reader, name: &str, opt: &mut Adam) -> Result<()> {
    expect_name(&r.str()?, name)?;
    opt.t = r.u64()?;
    let k = r.len()?;
    opt.m = (0..k).map(|_| r.tensor()).collect::<Result<_>>()?;
    opt.v = (0..k).map(|_| r.tensor()).collect::<Result<_>>()?;
    Ok(())
}

fn write_transition(w: &mut Writer, t: &Transition) {
    w.f32s(&t.obs);
    w.f32s(&t.action);
    w.f64(t.reward);
    w.f32s(&t.next_obs);
    w.bool(t.terminated);
    w.point(t.info.achieved_goal);
    w.f64(t.info.closest_distance);
    w.bool(t.info.in_bounds);
    w.bool(t.info.success);
    w.point(t.desired_goal);
    w.u64(t.episode_id);
    w.u32(t.step_in_episode);
}

fn read_transition(r: &mut Reader) -> Result<Transition> {
    Ok(Transition {
        obs: r.f32s()?,
        action: r.f32s()?,
        reward: r.f64()?,
        next_obs: r.f32s()?,
        terminated: r.bool()?,
        info: StepInfo {
            achieved_goal: r.point()?,
            closest_distance: r.f64()?,
            in_bounds: r.bool()?,
            success: r.bool()?,
        },
        desired_goal: r.point()?,
        episode_id: r.u64()?,
        step_in_episode: r.u32()?,
    })
}

fn write_transitions(w: &mut Writer, ts: &[Transition]) {
    w.len(ts.len());
    for t in ts {
        write_transition(w, t);
    }
}

fn read_transitions(r: &mut Reader) -> Result<Vec<Transition>> {
    let n = r.len()?;
    (0..n).map(|_| read_transition(r)).collect()
}

fn write_sim_state(w: &mut Writer, s: &SimState) {
    w.point(s.position);
    w.f64(s.theta);
    w.f64(s.twist.v);
    w.f64(s.twist.omega);
    let k = &s.wheels;
    for v in [k.phi_l, k.phi_r, k.omega_l, k.omega_r, k.phi_dot_l, k.phi_dot_r] {
        w.f64(v);
    }
    w.point(s.goal);
    w.u64(s.step_index as u64);
    w.bool(s.finished);
}

fn read_sim_state(r: &mut Reader) -> Result<SimState> {
    Ok(SimState {
        position: r.point()?,
        theta: r.f64()?,
        twist: ChassisTwist { v: r.f64()?, omega: r.f64()? },
        wheels: WheelState {
            phi_l: r.f64()?,
            phi_r: r.f64()?,
            omega_l: r.f64()?,
            omega_r: r.f64()?,
            phi_dot_l: r.f64()?,
            phi_dot_r: r.f64()?,
        },
        goal: r.point()?,
        step_index: r.u64()? as usize,
        finished: r.bool()?,
    })
}

/// Builds a fresh trainer for `config`, before any checkpoint is applied.
pub fn new_trainer(config: &RunConfig) -> anyhow::Result<Trainer<DasmrEnv>> {
    let agent_config = config.agent();
    let env = DasmrEnv::new(config.world(), config.robot(), substream(agent_config.seed, ENV_STREAM))?;
    let agent = Agent::new(agent_config, &config.network(), OBS_DIM, 2)?;
    let mut trainer = Trainer::new(env, agent, config.replay.capacity, config.her());
    trainer.log_every = config.run.log_every;
    Ok(trainer)
}

/// Serializes `trainer` together with the config that built it.
pub fn encode(config: &RunConfig, trainer: &Trainer<DasmrEnv>) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.str(&config.to_toml());

    let agent = &trainer.agent;
    w.len(agent.obs_dim);
    w.len(agent.action_dim);
    w.len(NETWORKS.len());
    for (name, net) in NETWORKS.iter().zip([&agent.actor, &agent.critic1, &agent.critic2]) {
        write_network(&mut w, name, net);
    }
    w.len(OPTIMIZERS.len());
    for (name, opt) in OPTIMIZERS.iter().zip([&agent.actor_opt, &agent.critic1_opt, &agent.critic2_opt, &agent.alpha_opt]) {
        write_adam(&mut w, name, opt);
    }
    w.tensor(&agent.log_alpha);
    w.u64(agent.critic_updates);
    w.u64(agent.actor_updates);

    w.u64(trainer.env_steps);
    w.u64(trainer.episodes);
    w.u64(trainer.log_every);
    w.f64(trainer.episode_return);
    w.f64(trainer.last_critic_loss);
    w.f64(trainer.last_actor_loss);
    w.f64(trainer.last_alpha_loss);
    w.f64s(&trainer.obs);
    w.len(trainer.outcomes.len());
    for &o in &trainer.outcomes {
        w.bool(o);
    }
    w.rng(&RngState::capture(&trainer.rng));
    w.rng(&trainer.env.rng_state());
    write_sim_state(&mut w, trainer.env.state());
    write_transitions(&mut w, &trainer.episode);

    w.u64(trainer.buffer.capacity() as u64);
    let episodes: Vec<&[Transition]> = trainer.buffer.episodes().collect();
    w.len(episodes.len());
    for e in episodes {
        write_transitions(&mut w, e);
    }
    w.0
}

/// Inverse of [`encode`].
pub fn decode(bytes: &[u8]) -> Result<(RunConfig, Trainer<DasmrEnv>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
    }
    let config = RunConfig::parse(&r.str()?).map_err(CheckpointError::Config)?;
    config.validate().map_err(|e| CheckpointError::Config(e.to_string()))?;
    let mut trainer = new_trainer(&config).map_err(|e| CheckpointError::Config(e.to_string()))?;

    let agent = &mut trainer.agent;
    let (obs_dim, action_dim) = (r.len()?, r.len()?);
    if (obs_dim, action_dim) != (agent.obs_dim, agent.action_dim) {
        return Err(corrupt(format!("dimensions {obs_dim}x{action_dim} do not match the environment")));
    }
    let count = r.len()?;
    if count != NETWORKS.len() {
        return Err(corrupt(format!("expected {} networks, found {count}", NETWORKS.len())));
    }
    for (name, net) in NETWORKS.iter().zip([&mut agent.actor, &mut agent.critic1, &mut agent.critic2]) {
        read_network(&mut r, name, net)?;
    }
    if r.len()? != OPTIMIZERS.len() {
        return Err(corrupt("unexpected optimizer count"));
    }
    for (name, opt) in OPTIMIZERS
        .iter()
        .zip([&mut agent.actor_opt, &mut agent.critic1_opt, &mut agent.critic2_opt, &mut agent.alpha_opt])
    {
        read_adam(&mut r, name, opt)?;
    }
    replace_tensor(&mut agent.log_alpha, r.tensor()?, "log_alpha")?;
    agent.critic_updates = r.u64()?;
    agent.actor_updates = r.u64()?;

    trainer.env_steps = r.u64()?;
    trainer.episodes = r.u64()?;
    trainer.log_every = r.u64()?;
    trainer.episode_return = r.f64()?;
    trainer.last_critic_loss = r.f64()?;
    trainer.last_actor_loss = r.f64()?;
    trainer.last_alpha_loss = r.f64()?;
    trainer.obs = r.f64s()?;
    let n = r.len()?;
    trainer.outcomes = (0..n).map(|_| r.bool()).collect::<Result<VecDeque<_>>>()?;
    trainer.rng = r.rng()?.restore();
    let env_rng = r.rng()?;
    let state = read_sim_state(&mut r)?;
    trainer.env.restore(state, env_rng);
    trainer.episode = read_transitions(&mut r)?;

    let capacity = r.u64()? as usize;
    if capacity != trainer.buffer.capacity() {
        return Err(corrupt("replay capacity differs from the stored config"));
    }
    let n = r.len()?;
    for _ in 0..n {
        trainer.buffer.store_episode(read_transitions(&mut r)?).map_err(|e| corrupt(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((config, trainer))
}

/// Writes through a temporary sibling and renames, so a failed write never
/// replaces an existing checkpoint.
pub fn save(path: &Path, config: &RunConfig, trainer: &Trainer<DasmrEnv>) -> Result<()> {
    let bytes = encode(config, trainer);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn load(path: &Path) -> Result<(RunConfig, Trainer<DasmrEnv>)> {
    decode(&std::fs::read(path)?)
}

/// Names of the networks stored in a checkpoint, read from its manifest
/// without rebuilding the trainer.
pub fn network_names(bytes: &[u8]) -> Result<Vec<String>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
    }
    r.str()?;
    r.len()?;
    r.len()?;
    let count = r.len()?;
    let mut names = Vec::with_capacity(count);
    for _ in 0..count {
        names.push(r.str()?);
        for _ in 0..r.len()? {
            r.str()?;
            r.tensor()?;
        }
        for _ in 0..r.len()? {
            r.str()?;
            r.u64()?;
            r.tensor()?;
            r.tensor()?;
        }
    }
    Ok(names)
}
