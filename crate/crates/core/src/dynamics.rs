//! Discrete double-integrator propagation.
//!
//! Two routes are provided: [`rollout`] iterates [`step`], and
//! [`RolloutMatrices`] expresses the stacked horizon state as an affine map
//! of the stacked controls. The gradient code uses the transpose of the
//! affine map to pull state sensitivities back onto the controls.

use crate::error::Error;
use crate::geom::Vec2;
use crate::types::{Control, RobotState, Strategy};

/// One period of `s' = s + tau v + tau^2/2 a`, `v' = v + tau a`.
pub fn step(x: &RobotState, u: Control, tau: f64) -> Result<RobotState, Error> {
    if !(x.is_finite() && u.is_finite() && tau.is_finite()) {
        return Err(Error::NonFinite(format!(
            "step input x={x:?} u={u:?} tau={tau}"
        )));
    }
    Ok(step_unchecked(x, u, tau))
}

#[inline]
pub(crate) fn step_unchecked(x: &RobotState, u: Control, tau: f64) -> RobotState {
    RobotState {
        position: x.position + x.velocity * tau + u * (0.5 * tau * tau),
        velocity: x.velocity + u * tau,
    }
}

/// States at `t+1 ..= t+H` obtained by applying `strat` from `x_t`.
pub fn rollout(x_t: &RobotState, strat: &Strategy, tau: f64) -> Result<Vec<RobotState>, Error> {
    let mut x = *x_t;
    let mut out = Vec::with_capacity(strat.horizon());
    for &u in strat.controls() {
        x = step(&x, u, tau)?;
        out.push(x);
    }
    Ok(out)
}

/// Rollout into a caller-provided buffer, without finiteness checks.
pub(crate) fn rollout_into(
    x_t: &RobotState,
    controls: &[Control],
    tau: f64,
    out: &mut Vec<RobotState>,
) {
    out.clear();
    let mut x = *x_t;
    for &u in controls {
        x = step_unchecked(&x, u, tau);
        out.push(x);
    }
}

/// Dense affine horizon map `X = A x_t + B U` with `X` stacked as
/// `[sx, sy, vx, vy]` per step (`4H`) and `U` as `[ax, ay]` per step (`2H`).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutMatrices {
    horizon: usize,
    /// Row-major `4H x 4`.
    a: Vec<f64>,
    /// Row-major `4H x 2H`.
    b: Vec<f64>,
}

/// Closed form of the stacked double-integrator.
pub fn build_rollout_matrices(horizon: usize, tau: f64) -> RolloutMatrices {
    assert!(horizon >= 1, "horizon must be >= 1");
    let rows = 4 * horizon;
    let cols = 2 * horizon;
    let mut a = vec![0.0; rows * 4];
    let mut b = vec![0.0; rows * cols];
    for k in 1..=horizon {
        let r = 4 * (k - 1);
        let kt = k as f64 * tau;
        // position rows
        for axis in 0..2 {
            a[(r + axis) * 4 + axis] = 1.0;
            a[(r + axis) * 4 + 2 + axis] = kt;
            a[(r + 2 + axis) * 4 + 2 + axis] = 1.0;
        }
        for m in 0..k {
            let pos_gain = tau * tau * ((k - m) as f64 - 0.5);
            for axis in 0..2 {
                b[(r + axis) * cols + 2 * m + axis] = pos_gain;
                b[(r + 2 + axis) * cols + 2 * m + axis] = tau;
            }
        }
    }
    RolloutMatrices { horizon, a, b }
}

impl RolloutMatrices {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Entry of the `4H x 4` state-transition stack.
    pub fn a(&self, row: usize, col: usize) -> f64 {
        self.a[row * 4 + col]
    }

    /// Entry of the `4H x 2H` input map.
    pub fn b(&self, row: usize, col: usize) -> f64 {
        self.b[row * 2 * self.horizon + col]
    }

    /// Stacked horizon state for stacked controls `u` (length `2H`).
    pub fn apply(&self, x_t: &RobotState, u: &[f64]) -> Vec<f64> {
        let cols = 2 * self.horizon;
        assert_eq!(u.len(), cols);
        let x0 = [
            x_t.position.x,
            x_t.position.y,
            x_t.velocity.x,
            x_t.velocity.y,
        ];
        (0..4 * self.horizon)
            .map(|r| {
                let free: f64 = (0..4).map(|c| self.a[r * 4 + c] * x0[c]).sum();
                let forced: f64 = (0..cols).map(|c| self.b[r * cols + c] * u[c]).sum();
                free + forced
            })
            .collect()
    }

    /// Same as [`apply`](Self::apply) but unpacked into states.
    pub fn apply_states(&self, x_t: &RobotState, u: &[f64]) -> Vec<RobotState> {
        self.apply(x_t, u)
            .chunks_exact(4)
            .map(|c| RobotState::new(Vec2::new(c[0], c[1]), Vec2::new(c[2], c[3])))
            .collect()
    }

    /// `out += B^T g` for a stacked state gradient `g` (length `4H`).
    pub fn accumulate_transpose(&self, g: &[f64], out: &mut [f64]) {
        let cols = 2 * self.horizon;
        debug_assert_eq!(g.len(), 4 * self.horizon);
        debug_assert_eq!(out.len(), cols);
        for k in 0..self.horizon {
            let r = 4 * k;
            // B is block-lower-triangular: only controls m <= k affect state k+1.
            for c in 0..2 * (k + 1) {
                let mut acc = 0.0;
                for d in 0..4 {
                    acc += self.b[(r + d) * cols + c] * g[r + d];
                }
                out[c] += acc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Strategy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn zero_acceleration_step() {
        let x = step(&RobotState::new(v(0.0, 0.0), v(1.0, 0.0)), v(0.0, 0.0), 0.4).unwrap();
        assert_eq!(x.position, v(0.4, 0.0));
        assert_eq!(x.velocity, v(1.0, 0.0));
    }

    #[test]
    fn accelerated_step() {
        let x = step(&RobotState::new(v(0.0, 0.0), v(1.0, 0.0)), v(2.0, 0.0), 0.4).unwrap();
        assert!((x.position.x - 0.56).abs() < 1e-15);
        assert!((x.velocity.x - 1.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_step_is_rejected() {
        let x = RobotState::new(v(f64::NAN, 0.0), v(0.0, 0.0));
        assert!(step(&x, v(0.0, 0.0), 0.4).is_err());
    }

    #[test]
    fn ballistic_rollout() {
        let traj = rollout(
            &RobotState::new(v(0.0, 0.0), v(1.0, 0.0)),
            &Strategy::zeros(4),
            0.4,
        )
        .unwrap();
        let xs: Vec<f64> = traj.iter().map(|s| s.position.x).collect();
        for (got, want) in xs.iter().zip([0.4, 0.8, 1.2, 1.6]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(traj.iter().all(|s| s.position.y == 0.0));
    }

    #[test]
    fn horizon_one_is_step() {
        let x = RobotState::new(v(0.3, -1.0), v(0.5, 0.2));
        let u = v(-1.0, 1.5);
        let traj = rollout(&x, &Strategy(vec![u]), 0.4).unwrap();
        assert_eq!(traj, vec![step(&x, u, 0.4).unwrap()]);
    }

    #[test]
    fn single_step_matrix_blocks() {
        let tau = 0.4;
        let m = build_rollout_matrices(1, tau);
        assert_eq!(m.b(0, 0), 0.5 * tau * tau);
        assert_eq!(m.b(1, 1), 0.5 * tau * tau);
        assert_eq!(m.b(0, 1), 0.0);
        assert_eq!(m.b(2, 0), tau);
        assert_eq!(m.b(3, 1), tau);
    }

    #[test]
    fn two_step_position_response() {
        let tau = 0.4;
        let m = build_rollout_matrices(2, tau);
        // hand expansion: tau*(tau*u) + tau^2/2*u at the second step
        let want = 0.5 * tau * tau + tau * tau;
        assert!((m.b(4, 0) - want).abs() < 1e-15);
        assert!((m.b(5, 1) - want).abs() < 1e-15);
    }

    #[test]
    fn input_map_is_causal() {
        let m = build_rollout_matrices(4, 0.4);
        for k in 0..4 {
            for c in 2 * (k + 1)..8 {
                for d in 0..4 {
                    assert_eq!(m.b(4 * k + d, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn iterative_and_affine_rollouts_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let h = rng.gen_range(1..8);
            let tau = rng.gen_range(0.05..1.0);
            let x = RobotState::new(
                v(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
                v(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            let u: Vec<f64> = (0..2 * h).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let iter = rollout(&x, &Strategy::from_flat(&u), tau).unwrap();
            let affine = build_rollout_matrices(h, tau).apply_states(&x, &u);
            for (a, b) in iter.iter().zip(&affine) {
                let scale = 1.0 + a.position.norm().max(a.velocity.norm());
                assert!((a.position - b.position).norm() < 1e-12 * scale);
                assert!((a.velocity - b.velocity).norm() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn transpose_matches_dense_product() {
        let m = build_rollout_matrices(3, 0.4);
        let g: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; 6];
        m.accumulate_transpose(&g, &mut out);
        for c in 0..6 {
            let want: f64 = (0..12).map(|r| m.b(r, c) * g[r]).sum();
            assert!((out[c] - want).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn rollout_is_affine(
            seed in any::<u64>(),
            lambda in 0.0f64..=1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = RobotState::new(
                v(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
                v(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            let u1: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u2: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mix: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let r1 = rollout(&x, &Strategy::from_flat(&u1), 0.4).unwrap();
            let r2 = rollout(&x, &Strategy::from_flat(&u2), 0.4).unwrap();
            let rm = rollout(&x, &Strategy::from_flat(&mix), 0.4).unwrap();
            for k in 0..4 {
                let p = r1[k].position * lambda + r2[k].position * (1.0 - lambda);
                let q = r1[k].velocity * lambda + r2[k].velocity * (1.0 - lambda);
                prop_assert!((p - rm[k].position).norm() < 1e-12 * (1.0 + p.norm()));
                prop_assert!((q - rm[k].velocity).norm() < 1e-12 * (1.0 + q.norm()));
            }
        }

        #[test]
        fn rollout_concatenates(seed in any::<u64>(), h1 in 1usize..5, h2 in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = RobotState::new(v(rng.gen_range(-5.0..5.0), 0.0), v(0.0, rng.gen_range(-1.0..1.0)));
            let u: Vec<f64> = (0..2 * (h1 + h2)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let full = rollout(&x, &Strategy::from_flat(&u), 0.4).unwrap();
            let first = rollout(&x, &Strategy::from_flat(&u[..2 * h1]), 0.4).unwrap();
            let second = rollout(first.last().unwrap(), &Strategy::from_flat(&u[2 * h1..]), 0.4).unwrap();
            let joined: Vec<_> = first.into_iter().chain(second).collect();
            for (a, b) in joined.iter().zip(&full) {
                prop_assert!((a.position - b.position).norm() < 1e-12 * (1.0 + a.position.norm()));
                prop_assert!((a.velocity - b.velocity).norm() < 1e-12 * (1.0 + a.velocity.norm()));
            }
        }
    }
}
