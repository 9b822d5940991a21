//! Continuous Navigation: a robot in a 20 m × 10 m hallway picks a heading
//! `θ ∈ [0, 2π)` and a distance `d ∈ [0, 2]`.
//!
//! The free space is discretized into 200 cells by seeded k-means. The robot
//! senses, for each of north, east, south and west, whether a wall is within
//! 2 m; the four bits give 16 observations.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::continuous::{ActionModelGenerator, ActionParams, ParamBounds};
use crate::format::format_g17;
use crate::model::{ActionModel, Belief, Pomdp, SparseRows};

pub const WIDTH: f64 = 20.0;
pub const HEIGHT: f64 = 10.0;
pub const NUM_CELLS: usize = 200;
pub const NUM_OBSERVATIONS: usize = 16;
pub const SENSOR_RANGE: f64 = 2.0;
pub const SENSOR_ACCURACY: f64 = 0.9;
pub const MAX_DISTANCE: f64 = 2.0;
pub const STEP_REWARD: f64 = -0.1;
pub const GOAL_REWARD: f64 = 10.0;
pub const DISCOUNT: f64 = 0.95;
/// Transition noise per axis is `NOISE_SCALE · d`.
pub const NOISE_SCALE: f64 = 0.25;
/// The goal is the wall-free cell closest to this point.
pub const GOAL_TARGET: (f64, f64) = (15.0, 5.0);

const KMEANS_SAMPLES: usize = 10_000;
const KMEANS_ITERATIONS: usize = 50;
const KMEANS_TOLERANCE: f64 = 1e-6;
/// Cell weights below this fraction of the largest are dropped.
const WEIGHT_CUTOFF: f64 = 1e-12;

pub const NORTH_BIT: usize = 1;
pub const EAST_BIT: usize = 2;
pub const SOUTH_BIT: usize = 4;
pub const WEST_BIT: usize = 8;

/// Wall-proximity pattern of a point.
pub fn wall_pattern(x: f64, y: f64) -> usize {
    let mut bits = 0;
    if HEIGHT - y <= SENSOR_RANGE {
        bits |= NORTH_BIT;
    }
    if WIDTH - x <= SENSOR_RANGE {
        bits |= EAST_BIT;
    }
    if y <= SENSOR_RANGE {
        bits |= SOUTH_BIT;
    }
    if x <= SENSOR_RANGE {
        bits |= WEST_BIT;
    }
    bits
}

#[derive(Debug, Clone)]
pub struct ContinuousNav {
    centers: Vec<(f64, f64)>,
    goal: usize,
    observation: Arc<SparseRows>,
    reward: Arc<[f64]>,
    bounds: ParamBounds,
    initial_belief: Belief,
}

pub fn build_continuous_nav(seed: u64) -> ContinuousNav {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans(&mut rng);
    ContinuousNav::from_centers(centers)
}

/// Lloyd iterations from the first `NUM_CELLS` of the samples. Clusters that
/// lose all their points keep their previous center.
fn kmeans<R: Rng + ?Sized>(rng: &mut R) -> Vec<(f64, f64)> {
    let points: Vec<(f64, f64)> = (0..KMEANS_SAMPLES)
        .map(|_| (rng.random::<f64>() * WIDTH, rng.random::<f64>() * HEIGHT))
        .collect();
    let mut centers: Vec<(f64, f64)> = points[..NUM_CELLS].to_vec();
    for _ in 0..KMEANS_ITERATIONS {
        let mut sums = vec![(0.0, 0.0, 0usize); NUM_CELLS];
        for &p in &points {
            let k = nearest(&centers, p);
            sums[k].0 += p.0;
            sums[k].1 += p.1;
            sums[k].2 += 1;
        }
        let mut moved: f64 = 0.0;
        for (c, &(sx, sy, n)) in centers.iter_mut().zip(&sums) {
            if n > 0 {
                let next = (sx / n as f64, sy / n as f64);
                moved = moved.max(((next.0 - c.0).powi(2) + (next.1 - c.1).powi(2)).sqrt());
                *c = next;
            }
        }
        if moved < KMEANS_TOLERANCE {
            break;
        }
    }
    centers
}

fn nearest(centers: &[(f64, f64)], p: (f64, f64)) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = (c.0 - p.0).powi(2) + (c.1 - p.1).powi(2);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// `P(lo ≤ X ≤ hi)` for `X ~ N(mean, sd²)`.
fn interval_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let z = |x: f64| (x - mean) / (sd * std::f64::consts::SQRT_2);
    0.5 * (libm::erf(z(hi)) - libm::erf(z(lo)))
}

impl ContinuousNav {
    pub fn from_centers(centers: Vec<(f64, f64)>) -> Self {
        let n = centers.len();
        let open: Vec<usize> = (0..n).filter(|&k| wall_pattern(centers[k].0, centers[k].1) == 0).collect();
        let goal = if open.is_empty() {
            nearest(&centers, GOAL_TARGET)
        } else {
            open[nearest(&open.iter().map(|&k| centers[k]).collect::<Vec<_>>(), GOAL_TARGET)]
        };
        let miss = (1.0 - SENSOR_ACCURACY) / (NUM_OBSERVATIONS - 1) as f64;
        let observation = Arc::new(SparseRows::from_rows(
            centers.iter().map(|&(x, y)| {
                let truth = wall_pattern(x, y);
                (0..NUM_OBSERVATIONS).map(move |o| (o, if o == truth { SENSOR_ACCURACY } else { miss }))
            }),
            NUM_OBSERVATIONS,
        ));
        let mut reward = vec![STEP_REWARD; n];
        reward[goal] = GOAL_REWARD;
        Self {
            centers,
            goal,
            observation,
            reward: reward.into(),
            bounds: ParamBounds {
                lower: vec![0.0, 0.0],
                upper: vec![2.0 * PI, MAX_DISTANCE],
                periodic: vec![true, false],
            },
            initial_belief: Belief::uniform(n),
        }
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn nearest_cell(&self, x: f64, y: f64) -> usize {
        nearest(&self.centers, (x, y))
    }

    pub fn true_observation(&self, cell: usize) -> usize {
        let (x, y) = self.centers[cell];
        wall_pattern(x, y)
    }

    /// Cell centers as `x,y` lines.
    pub fn centers_csv(&self) -> String {
        let mut out = String::new();
        for &(x, y) in &self.centers {
            let _ = writeln!(out, "{},{}", format_g17(x), format_g17(y));
        }
        out
    }

    /// Successor distribution from `cell` under `(θ, d)`.
    ///
    /// The displaced point is blurred by an isotropic Gaussian. The part of
    /// that Gaussian inside the hallway is spread over the cells in
    /// proportion to the density at their centers; the part outside leaves
    /// the robot where it was.
    pub fn transition_row(&self, cell: usize, theta: f64, d: f64) -> Vec<(usize, f64)> {
        let (cx, cy) = self.centers[cell];
        let target = (cx + d * theta.cos(), cy + d * theta.sin());
        let sd = NOISE_SCALE * d;
        if !(sd > 0.0) {
            return vec![(nearest(&self.centers, target), 1.0)];
        }
        let inside = interval_mass(target.0, sd, 0.0, WIDTH) * interval_mass(target.1, sd, 0.0, HEIGHT);
        let log_w: Vec<f64> = self
            .centers
            .iter()
            .map(|c| -((c.0 - target.0).powi(2) + (c.1 - target.1).powi(2)) / (2.0 * sd * sd))
            .collect();
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = top + WEIGHT_CUTOFF.ln();
        let weights: Vec<(usize, f64)> = log_w
            .iter()
            .enumerate()
            .filter(|(_, &l)| l >= floor)
            .map(|(k, &l)| (k, (l - top).exp()))
            .collect();
        let total: f64 = weights.iter().map(|w| w.1).sum();
        let mut row: Vec<(usize, f64)> = weights.into_iter().map(|(k, w)| (k, inside * w / total)).collect();
        let outside = 1.0 - inside;
        if outside > 0.0 {
            match row.iter_mut().find(|e| e.0 == cell) {
                Some(e) => e.1 += outside,
                None => {
                    row.push((cell, outside));
                    row.sort_by_key(|e| e.0);
                }
            }
        }
        row.retain(|e| e.1 > 0.0);
        row
    }

    /// A finite model with the given headings (evenly spaced from 0) crossed
    /// with `distances`, for export and discrete solvers.
    pub fn discretize(&self, headings: usize, distances: &[f64]) -> Pomdp {
        let actions = distances
            .iter()
            .flat_map(|&d| (0..headings).map(move |h| ActionParams::new(vec![2.0 * PI * h as f64 / headings as f64, d])))
            .map(|p| self.generate(&p))
            .collect();
        Pomdp::new(actions, DISCOUNT, self.initial_belief.clone()).expect("generated tables are stochastic")
    }
}

impl ActionModelGenerator for ContinuousNav {
    fn num_states(&self) -> usize {
        self.centers.len()
    }

    fn num_observations(&self) -> usize {
        NUM_OBSERVATIONS
    }

    fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    fn discount(&self) -> f64 {
        DISCOUNT
    }

    fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    fn min_reward(&self) -> f64 {
        STEP_REWARD.min(GOAL_REWARD)
    }

    /// Ordinary cells follow [`ContinuousNav::transition_row`]; the goal cell
    /// resets the robot to a uniformly random cell.
    fn generate(&self, params: &ActionParams) -> ActionModel {
        let (theta, d) = (params.values()[0], params.values()[1]);
        let n = self.centers.len();
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|s| {
                if s == self.goal {
                    (0..n).map(|k| (k, 1.0 / n as f64)).collect()
                } else {
                    self.transition_row(s, theta, d)
                }
            })
            .collect();
        ActionModel {
            transition: SparseRows::from_rows(rows, n),
            observation: Arc::clone(&self.observation),
            reward: Arc::clone(&self.reward),
        }
    }
}
