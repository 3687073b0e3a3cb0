//! Scenario generation, closed-loop episodes and Monte-Carlo batches.

mod batch;
pub mod metrics;
pub mod scenarios;

pub use batch::{
    run_batch, write_csv, write_summary, BatchSpec, BatchSummary, CsvRow, LayoutSummary,
};
pub use metrics::{
    arrival_steps, metric_collision, metric_discomfort, metric_success, metric_travel_time,
    DISCOMFORT_FACTOR, GOAL_RADIUS, PERSONAL_SPACE,
};
pub use scenarios::{gen_circular, gen_perpendicular, generate, DEFAULT_CIRCLE_RADIUS};

use crate::cmpc::{solve_cmpc, CmpcOptions};
use crate::crowd_sim::{SimRecord, StepRecord, World};
use crate::dmpc::{
    run_coordinator, DmpcOptions, LocalTransport, TcpTransport, ThreadedTransport, Transport,
};
use crate::error::Error;
use crate::history::PositionHistory;
use crate::objectives::{robot_contexts, RobotContext};
use crate::params::CostParams;
use crate::predictor::{
    social_predictor, ConstantVelocity, Predictor, SOCIAL_DEFAULT_GAIN, SOCIAL_DEFAULT_RADIUS,
};
use crate::scenario::{HumanSpec, Layout, RobotSpec, Scenario};
use crate::solver::SolverOptions;
use crate::types::{JointStrategy, Strategy};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cmpc,
    Dmpc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cmpc => "cmpc",
            Method::Dmpc => "dmpc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "cmpc" => Ok(Method::Cmpc),
            "dmpc" => Ok(Method::Dmpc),
            _ => Err(Error::Invalid(format!(
                "unknown method {s:?} (expected cmpc or dmpc)"
            ))),
        }
    }
}

/// How DMPC workers are reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    /// Single-threaded, deterministic.
    #[default]
    InProcess,
    Threads,
    /// Local worker threads over TCP; port 0 picks a free one.
    Tcp {
        port: u16,
    },
}

/// Built-in crowd predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictorKind {
    #[default]
    ConstantVelocity,
    Social {
        #[serde(default = "default_gain")]
        gain: f64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

fn default_gain() -> f64 {
    SOCIAL_DEFAULT_GAIN
}

fn default_radius() -> f64 {
    SOCIAL_DEFAULT_RADIUS
}

impl PredictorKind {
    pub fn social_default() -> Self {
        PredictorKind::Social {
            gain: SOCIAL_DEFAULT_GAIN,
            radius: SOCIAL_DEFAULT_RADIUS,
        }
    }

    pub fn build(&self, params: &CostParams) -> Result<Box<dyn Predictor>, Error> {
        Ok(match *self {
            PredictorKind::ConstantVelocity => Box::new(ConstantVelocity),
            PredictorKind::Social { gain, radius } => Box::new(social_predictor(
                gain,
                radius,
                params.tau,
                1.5 * params.v_max,
            )?),
        })
    }
}

/// Result of one MPC step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub strategy: JointStrategy,
    pub iterations: usize,
    pub converged: bool,
}

pub trait Planner {
    fn name(&self) -> &str;

    fn plan(
        &mut self,
        robots: &[RobotContext],
        history: &PositionHistory,
        predictor: &dyn Predictor,
        params: &CostParams,
        u_init: &JointStrategy,
    ) -> Result<PlanOutcome, Error>;
}

#[derive(Debug, Clone, Default)]
pub struct CmpcPlanner {
    pub opts: CmpcOptions,
}

impl Planner for CmpcPlanner {
    fn name(&self) -> &str {
        "cmpc"
    }

    fn plan(
        &mut self,
        robots: &[RobotContext],
        history: &PositionHistory,
        predictor: &dyn Predictor,
        params: &CostParams,
        u_init: &JointStrategy,
    ) -> Result<PlanOutcome, Error> {
        let out = solve_cmpc(robots, history, predictor, params, u_init, &self.opts)?;
        Ok(PlanOutcome {
            iterations: out.iterations(),
            converged: out.converged,
            strategy: out.strategy,
        })
    }
}

pub struct DmpcPlanner {
    pub transport: Box<dyn Transport>,
    pub opts: DmpcOptions,
}

impl DmpcPlanner {
    pub fn new(
        kind: TransportKind,
        num_robots: usize,
        solver: SolverOptions,
    ) -> Result<Self, Error> {
        let transport: Box<dyn Transport> = match kind {
            TransportKind::InProcess => Box::new(LocalTransport::with_workers(num_robots, solver)),
            TransportKind::Threads => Box::new(ThreadedTransport::with_workers(num_robots, solver)),
            TransportKind::Tcp { port } => {
                Box::new(TcpTransport::spawn_local(num_robots, port, solver)?)
            }
        };
        Ok(Self {
            transport,
            opts: DmpcOptions::default(),
        })
    }
}

impl Planner for DmpcPlanner {
    fn name(&self) -> &str {
        "dmpc"
    }

    fn plan(
        &mut self,
        robots: &[RobotContext],
        history: &PositionHistory,
        predictor: &dyn Predictor,
        params: &CostParams,
        u_init: &JointStrategy,
    ) -> Result<PlanOutcome, Error> {
        let out = run_coordinator(
            robots,
            history,
            predictor,
            params,
            u_init,
            self.transport.as_mut(),
            &self.opts,
        )?;
        Ok(PlanOutcome {
            iterations: out.iterations(),
            converged: out.converged,
            strategy: out.strategy,
        })
    }
}

pub fn make_planner(
    method: Method,
    transport: TransportKind,
    num_robots: usize,
) -> Result<Box<dyn Planner>, Error> {
    Ok(match method {
        Method::Cmpc => Box::new(CmpcPlanner::default()),
        Method::Dmpc => Box::new(DmpcPlanner::new(
            transport,
            num_robots,
            SolverOptions::default(),
        )?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub method: String,
    pub layout: Layout,
    pub seed: u64,
    pub success: bool,
    /// Seconds until the last robot arrived; `None` unless successful.
    pub travel_time: Option<f64>,
    pub collision: bool,
    pub discomfort: bool,
    pub min_distances: Vec<Option<f64>>,
    /// IBR rounds per MPC step.
    pub ibr_iterations: Vec<usize>,
}

impl EpisodeResult {
    pub fn mean_ibr_iters(&self) -> f64 {
        if self.ibr_iterations.is_empty() {
            0.0
        } else {
            self.ibr_iterations.iter().sum::<usize>() as f64 / self.ibr_iterations.len() as f64
        }
    }

    pub fn from_record(rec: &SimRecord, t_max: f64) -> Self {
        let success = metric_success(rec, t_max);
        Self {
            method: rec.header.method.clone(),
            layout: rec.header.layout,
            seed: rec.header.seed,
            success,
            travel_time: if success {
                metric_travel_time(rec)
            } else {
                None
            },
            collision: metric_collision(rec),
            discomfort: metric_discomfort(rec, DISCOMFORT_FACTOR),
            min_distances: metrics::min_distances(rec),
            ibr_iterations: rec.steps.iter().skip(1).map(|s| s.ibr_iterations).collect(),
        }
    }
}

/// Previous solution shifted by one step (last control repeated) and
/// clamped into the box; zeros when there is none.
pub fn warm_start(
    prev: Option<&JointStrategy>,
    num_robots: usize,
    params: &CostParams,
) -> JointStrategy {
    match prev {
        Some(s) => JointStrategy(
            s.shifted()
                .0
                .iter()
                .map(|x| x.clamped(params.a_max))
                .collect(),
        ),
        None => JointStrategy(vec![Strategy::zeros(params.horizon); num_robots]),
    }
}

/// Plans with `planner` and applies the first control of every robot.
/// `prev` carries the last solution between calls for warm starting.
pub fn mpc_step(
    world: &mut World,
    planner: &mut dyn Planner,
    predictor: &dyn Predictor,
    prev: &mut Option<JointStrategy>,
) -> Result<StepRecord, Error> {
    let params = world.params.clone();
    let m = world.robots.len();
    let contexts = robot_contexts(&world.robots, &world.goals, &world.u_prev, &params);
    let u_init = warm_start(prev.as_ref(), m, &params);
    let out = planner.plan(&contexts, &world.history, predictor, &params, &u_init)?;
    let controls: Vec<_> = out.strategy.0.iter().map(|s| s.controls()[0]).collect();
    let mut row = world.step_episode(&controls)?;
    row.ibr_iterations = out.iterations;
    *prev = Some(out.strategy);
    Ok(row)
}

/// Plays `steps` MPC steps without checking arrival.
pub fn run_episode_steps(
    world: &mut World,
    planner: &mut dyn Planner,
    predictor: &dyn Predictor,
    steps: usize,
) -> Result<Vec<StepRecord>, Error> {
    let mut prev = None;
    (0..steps)
        .map(|_| mpc_step(world, planner, predictor, &mut prev))
        .collect()
}

/// Runs one closed-loop episode until every robot has reached its goal
/// disc or the time limit is hit.
pub fn run_episode(
    sc: &Scenario,
    planner: &mut dyn Planner,
    predictor: &dyn Predictor,
) -> Result<(EpisodeResult, SimRecord), Error> {
    let mut world = World::from_scenario(sc)?;
    let params = sc.params.clone();
    let header = world.header(sc, planner.name());
    let mut steps = vec![world.snapshot()];
    let mut arrived: Vec<bool> = vec![false; world.robots.len()];
    let mut prev: Option<JointStrategy> = None;
    let mark = |arrived: &mut Vec<bool>, world: &World| {
        for (i, a) in arrived.iter_mut().enumerate() {
            *a |= world.robots[i].position.distance(world.goals[i]) <= GOAL_RADIUS;
        }
    };
    mark(&mut arrived, &world);
    for _ in 0..params.max_steps() {
        if arrived.iter().all(|&a| a) {
            break;
        }
        steps.push(mpc_step(&mut world, planner, predictor, &mut prev)?);
        mark(&mut arrived, &world);
    }
    let rec = SimRecord { header, steps };
    Ok((EpisodeResult::from_record(&rec, params.t_max), rec))
}

/// Experiment description shared by the CLI and the batch runner. Explicit
/// `robots`/`humans` make a fixed custom scenario; otherwise scenarios are
/// generated per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub params: CostParams,
    #[serde(default = "default_robots")]
    pub num_robots: usize,
    #[serde(default = "default_humans")]
    pub num_humans: usize,
    /// Fixed layout; batches alternate circular and perpendicular when unset.
    #[serde(default)]
    pub layout: Option<Layout>,
    #[serde(default = "default_circle")]
    pub circle_radius: f64,
    #[serde(default)]
    pub predictor: PredictorKind,
    #[serde(default)]
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub humans: Vec<HumanSpec>,
}

fn default_robots() -> usize {
    3
}

fn default_humans() -> usize {
    5
}

fn default_circle() -> f64 {
    DEFAULT_CIRCLE_RADIUS
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: CostParams::default(),
            num_robots: default_robots(),
            num_humans: default_humans(),
            layout: None,
            circle_radius: default_circle(),
            predictor: PredictorKind::default(),
            robots: Vec::new(),
            humans: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn is_custom(&self) -> bool {
        !self.robots.is_empty()
    }

    /// Layout of episode `index` in a batch.
    pub fn layout_for(&self, index: usize) -> Layout {
        match self.layout {
            Some(l) => l,
            None if self.is_custom() => Layout::Custom,
            None if index.is_multiple_of(2) => Layout::Circular,
            None => Layout::Perpendicular,
        }
    }

    pub fn scenario(&self, seed: u64, layout: Layout) -> Result<Scenario, Error> {
        let sc = if self.is_custom() || layout == Layout::Custom {
            if !self.is_custom() {
                return Err(Error::Invalid("custom layout needs explicit robots".into()));
            }
            Scenario {
                params: self.params.clone(),
                robots: self.robots.clone(),
                humans: self.humans.clone(),
                layout: Layout::Custom,
                seed,
            }
        } else {
            generate(
                &self.params,
                layout,
                seed,
                self.num_robots,
                self.num_humans,
                self.circle_radius,
            )?
        };
        sc.validate()?;
        Ok(sc)
    }
}
