//! MPC weights, physical limits and algorithm tolerances.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Per robot-pair quantity. Either one value for every pair or a full
/// `M x M` matrix (diagonal ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairMatrix {
    Uniform(f64),
    Full(Vec<Vec<f64>>),
}

impl PairMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            PairMatrix::Uniform(v) => *v,
            PairMatrix::Full(m) => m[i][j],
        }
    }

    /// Dimension of a full matrix; `None` for uniform values.
    pub fn dim(&self) -> Option<usize> {
        match self {
            PairMatrix::Uniform(_) => None,
            PairMatrix::Full(m) => Some(m.len()),
        }
    }

    fn check(&self, field: &str, strictly_positive: bool, out: &mut Vec<ParamViolation>) {
        let bad_value = |v: f64| !v.is_finite() || v < 0.0 || (strictly_positive && v == 0.0);
        match self {
            PairMatrix::Uniform(v) => {
                if bad_value(*v) {
                    out.push(ParamViolation::new(field, format!("invalid value {v}")));
                }
            }
            PairMatrix::Full(m) => {
                let n = m.len();
                if m.iter().any(|row| row.len() != n) {
                    out.push(ParamViolation::new(field, "matrix is not square"));
                    return;
                }
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        if bad_value(m[i][j]) {
                            out.push(ParamViolation::new(
                                field,
                                format!("invalid value {} at [{i}][{j}]", m[i][j]),
                            ));
                        }
                        if j > i && m[i][j] != m[j][i] {
                            out.push(ParamViolation::new(
                                field,
                                format!(
                                    "not symmetric: [{i}][{j}]={} but [{j}][{i}]={}",
                                    m[i][j], m[j][i]
                                ),
                            ));
                        }
                    }
                }
            }
        }
    }
}

impl From<f64> for PairMatrix {
    fn from(v: f64) -> Self {
        PairMatrix::Uniform(v)
    }
}

/// One failed parameter invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamViolation {
    pub field: String,
    pub message: String,
}

impl ParamViolation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// All MPC parameters. Field names in JSON follow the symbol names
/// (`H`, `L`, `tau`, `omega_goal`, ...); missing fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    /// Control/prediction horizon in steps.
    #[serde(rename = "H")]
    pub horizon: usize,
    /// Observation window of the predictor in steps.
    #[serde(rename = "L")]
    pub history_len: usize,
    pub tau: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub d_min: f64,
    /// Speed-dependent margin factor in the human clearance constraint.
    pub rho: f64,
    /// Sharpness of the smoothed max.
    pub mu: f64,
    /// Smoothing added under the square root of the flocking distance.
    pub delta_norm: f64,
    /// Offset in the goal-distance normalization.
    pub delta_goal: f64,
    /// Desired inter-robot distance.
    pub d_flock: PairMatrix,
    #[serde(rename = "omega_goal")]
    pub w_goal: f64,
    #[serde(rename = "omega_acce")]
    pub w_acce: f64,
    #[serde(rename = "omega_jerk")]
    pub w_jerk: f64,
    #[serde(rename = "omega_coll_human")]
    pub w_coll_human: f64,
    #[serde(rename = "omega_coll_robot")]
    pub w_coll_robot: PairMatrix,
    #[serde(rename = "omega_floc")]
    pub w_floc: PairMatrix,
    /// Weight of the soft per-axis speed limit.
    #[serde(rename = "omega_vel")]
    pub w_vel: f64,
    pub j_max: usize,
    /// Potential-change tolerance of the centralized loop.
    pub xi: f64,
    /// Tolerance of the epsilon-Nash tests in the distributed loop.
    pub epsilon: f64,
    /// Episode time limit in seconds.
    #[serde(rename = "T_max")]
    pub t_max: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            horizon: 4,
            history_len: 8,
            tau: 0.4,
            v_max: 1.0,
            a_max: 2.0,
            d_min: 0.8,
            rho: 0.5,
            mu: 30.0,
            delta_norm: 1e-6,
            delta_goal: 1e-3,
            d_flock: PairMatrix::Uniform(1.2),
            w_goal: 10.0,
            w_acce: 0.1,
            w_jerk: 0.1,
            w_coll_human: 1e7,
            w_coll_robot: PairMatrix::Uniform(1e7),
            w_floc: PairMatrix::Uniform(10.0),
            w_vel: 1e7,
            j_max: 10,
            xi: 1e-3,
            epsilon: 1e-3,
            t_max: 25.0,
        }
    }
}

impl CostParams {
    /// Same parameters with the flocking objective removed.
    pub fn without_flocking(&self) -> Self {
        Self {
            w_floc: PairMatrix::Uniform(0.0),
            ..self.clone()
        }
    }

    /// Number of MPC steps that fit in the time limit.
    pub fn max_steps(&self) -> usize {
        (self.t_max / self.tau).round() as usize
    }
}

/// Checks every parameter invariant and reports all violations.
/// Weights may be zero (that switches a term off); physical constants and
/// tolerances must be strictly positive.
pub fn validate_params(p: &CostParams) -> Vec<ParamViolation> {
    let mut out = Vec::new();
    let positive = |name: &str, v: f64, out: &mut Vec<ParamViolation>| {
        if !(v.is_finite() && v > 0.0) {
            out.push(ParamViolation::new(
                name,
                format!("must be finite and > 0, got {v}"),
            ));
        }
    };
    let non_negative = |name: &str, v: f64, out: &mut Vec<ParamViolation>| {
        if !(v.is_finite() && v >= 0.0) {
            out.push(ParamViolation::new(
                name,
                format!("must be finite and >= 0, got {v}"),
            ));
        }
    };
    if p.horizon == 0 {
        out.push(ParamViolation::new("H", "must be >= 1"));
    }
    if p.history_len == 0 {
        out.push(ParamViolation::new("L", "must be >= 1"));
    }
    if p.j_max == 0 {
        out.push(ParamViolation::new("j_max", "must be >= 1"));
    }
    positive("tau", p.tau, &mut out);
    positive("v_max", p.v_max, &mut out);
    positive("a_max", p.a_max, &mut out);
    positive("d_min", p.d_min, &mut out);
    positive("rho", p.rho, &mut out);
    positive("mu", p.mu, &mut out);
    positive("delta_norm", p.delta_norm, &mut out);
    positive("delta_goal", p.delta_goal, &mut out);
    positive("xi", p.xi, &mut out);
    // An infinite epsilon is meaningful: every update is rejected.
    if p.epsilon.is_nan() || p.epsilon <= 0.0 {
        out.push(ParamViolation::new(
            "epsilon",
            format!("must be > 0, got {}", p.epsilon),
        ));
    }
    positive("T_max", p.t_max, &mut out);
    non_negative("omega_goal", p.w_goal, &mut out);
    non_negative("omega_acce", p.w_acce, &mut out);
    non_negative("omega_jerk", p.w_jerk, &mut out);
    non_negative("omega_coll_human", p.w_coll_human, &mut out);
    non_negative("omega_vel", p.w_vel, &mut out);
    p.d_flock.check("d_flock", true, &mut out);
    p.w_coll_robot.check("omega_coll_robot", false, &mut out);
    p.w_floc.check("omega_floc", false, &mut out);
    out
}

/// Additional check that full pair matrices match the robot count.
pub fn validate_pair_dims(p: &CostParams, num_robots: usize) -> Vec<ParamViolation> {
    let mut out = Vec::new();
    for (name, m) in [
        ("d_flock", &p.d_flock),
        ("omega_coll_robot", &p.w_coll_robot),
        ("omega_floc", &p.w_floc),
    ] {
        if let Some(d) = m.dim() {
            if d != num_robots {
                out.push(ParamViolation::new(
                    name,
                    format!("matrix is {d}x{d} but there are {num_robots} robots"),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults_are_valid() {
        let p = CostParams::default();
        assert_eq!(p.horizon, 4);
        assert_eq!(p.history_len, 8);
        assert_eq!(p.tau, 0.4);
        assert_eq!(p.v_max, 1.0);
        assert_eq!(p.a_max, 2.0);
        assert_eq!(p.rho, 0.5);
        assert_eq!(p.d_min, 0.8);
        assert_eq!(p.mu, 30.0);
        assert_eq!(p.j_max, 10);
        assert_eq!(p.xi, 1e-3);
        assert_eq!(p.epsilon, 1e-3);
        assert_eq!(p.w_goal, 10.0);
        assert_eq!(p.w_acce, 0.1);
        assert_eq!(p.w_jerk, 0.1);
        assert_eq!(p.w_coll_human, 1e7);
        assert_eq!(p.w_coll_robot.get(0, 1), 1e7);
        assert_eq!(p.w_floc.get(0, 1), 10.0);
        assert!(validate_params(&p).is_empty());
    }

    #[test]
    fn zero_tau_is_reported() {
        let p = CostParams {
            tau: 0.0,
            ..Default::default()
        };
        let v = validate_params(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "tau");
    }

    #[test]
    fn asymmetric_flocking_weight_is_reported() {
        let p = CostParams {
            w_floc: PairMatrix::Full(vec![vec![0.0, 10.0], vec![5.0, 0.0]]),
            ..Default::default()
        };
        let v = validate_params(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "omega_floc");
        assert!(v[0].message.contains("symmetric"));
    }

    #[test]
    fn validation_is_idempotent() {
        let p = CostParams {
            tau: -1.0,
            mu: 0.0,
            w_coll_robot: PairMatrix::Full(vec![vec![0.0, 1.0], vec![2.0, 0.0]]),
            ..Default::default()
        };
        assert_eq!(validate_params(&p), validate_params(&p));
        assert_eq!(validate_params(&p).len(), 3);
    }

    #[test]
    fn pair_dims_must_match() {
        let p = CostParams {
            w_floc: PairMatrix::Full(vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
            ..Default::default()
        };
        assert!(validate_pair_dims(&p, 2).is_empty());
        assert_eq!(validate_pair_dims(&p, 3).len(), 1);
    }

    #[test]
    fn json_uses_symbol_names() {
        let p: CostParams = serde_json::from_str(
            r#"{"H": 6, "tau": 0.2, "omega_floc": [[0, 3], [3, 0]], "T_max": 10}"#,
        )
        .unwrap();
        assert_eq!(p.horizon, 6);
        assert_eq!(p.tau, 0.2);
        assert_eq!(p.w_floc.get(1, 0), 3.0);
        assert_eq!(p.t_max, 10.0);
        assert_eq!(p.v_max, 1.0);
    }

    #[test]
    fn without_flocking_only_touches_flocking_weight() {
        let p = CostParams::default();
        let q = p.without_flocking();
        assert_eq!(q.w_floc.get(0, 1), 0.0);
        assert_eq!(
            CostParams {
                w_floc: p.w_floc.clone(),
                ..q
            },
            p
        );
    }
}
