//! Reference discrete-time systems used to generate snapshot data.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::empirical::SnapshotSet;
use crate::error::{KoopmanError, Result};
use crate::matrix_serde::real_matrix;

/// The one-step map `x+ = S(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemKind {
    /// `x+ = A x`
    Linear {
        #[serde(rename = "A", with = "real_matrix")]
        a: DMatrix<f64>,
    },
    /// `x+ = sum_i coefficients[i] x^i` on a scalar state.
    ScalarPoly { coefficients: Vec<f64> },
    /// `x1' = x2, x2' = mu (1 - x1^2) x2 - x1`, one RK4 step of size `dt`.
    VanDerPol { mu: f64, dt: f64 },
    /// `x1' = x2, x2' = -delta x2 - alpha x1 - beta x1^3`, one RK4 step.
    Duffing { alpha: f64, beta: f64, delta: f64, dt: f64 },
    /// `x+ = rho R(theta) x`
    Rotation { rho: f64, theta: f64 },
}

/// `y = g(x)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputMap {
    #[default]
    FullState,
    Linear {
        #[serde(rename = "C", with = "real_matrix")]
        c: DMatrix<f64>,
    },
    /// Output `j` is `x[index_j]^power_j`.
    ComponentPowers { terms: Vec<(usize, u32)> },
    /// Each basis function of the dictionary is one output.
    Custom { dictionary: Dictionary },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSystem {
    pub system: SystemKind,
    #[serde(default)]
    pub output_map: OutputMap,
}

impl ReferenceSystem {
    pub fn new(system: SystemKind, output_map: OutputMap) -> Result<Self> {
        let sys = Self { system, output_map };
        sys.validate()?;
        Ok(sys)
    }

    pub fn full_state(system: SystemKind) -> Result<Self> {
        Self::new(system, OutputMap::FullState)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.system {
            SystemKind::Linear { a } => {
                if a.nrows() != a.ncols() || a.nrows() == 0 {
                    return Err(KoopmanError::config("linear system matrix must be square and non-empty"));
                }
            }
            SystemKind::ScalarPoly { coefficients } => {
                if coefficients.is_empty() {
                    return Err(KoopmanError::config("scalar polynomial needs coefficients"));
                }
            }
            SystemKind::VanDerPol { dt, .. } | SystemKind::Duffing { dt, .. } => {
                if !(dt.is_finite() && *dt > 0.0) {
                    return Err(KoopmanError::config(format!("dt must be positive, got {dt}")));
                }
            }
            SystemKind::Rotation { .. } => {}
        }
        let n = self.state_dim();
        match &self.output_map {
            OutputMap::FullState => {}
            OutputMap::Linear { c } => {
                if c.ncols() != n {
                    return Err(KoopmanError::config(format!(
                        "output matrix has {} columns, state dimension is {n}",
                        c.ncols()
                    )));
                }
            }
            OutputMap::ComponentPowers { terms } => {
                if let Some((i, _)) = terms.iter().find(|(i, _)| *i >= n) {
                    return Err(KoopmanError::config(format!("output component {i} out of range")));
                }
            }
            OutputMap::Custom { dictionary } => {
                if dictionary.state_dim() != n {
                    return Err(KoopmanError::config("output dictionary state dimension mismatch"));
                }
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match &self.system {
            SystemKind::Linear { a } => a.nrows(),
            SystemKind::ScalarPoly { .. } => 1,
            _ => 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.output_map {
            OutputMap::FullState => self.state_dim(),
            OutputMap::Linear { c } => c.nrows(),
            OutputMap::ComponentPowers { terms } => terms.len(),
            OutputMap::Custom { dictionary } => dictionary.len(),
        }
    }

    /// One application of the map.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.state_dim();
        if x.len() != n {
            return Err(KoopmanError::shape(format!(
                "state has length {}, system expects {n}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KoopmanError::Divergence("state is not finite".into()));
        }
        let next = match &self.system {
            SystemKind::Linear { a } => (0..n)
                .map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum())
                .collect(),
            SystemKind::ScalarPoly { coefficients } => {
                // Horner
                let v = coefficients.iter().rev().fold(0.0, |acc, c| acc * x[0] + c);
                vec![v]
            }
            SystemKind::VanDerPol { mu, dt } => {
                let mu = *mu;
                rk4(x, *dt, |s| [s[1], mu * (1.0 - s[0] * s[0]) * s[1] - s[0]])
            }
            SystemKind::Duffing { alpha, beta, delta, dt } => {
                let (a, b, d) = (*alpha, *beta, *delta);
                rk4(x, *dt, |s| [s[1], -d * s[1] - a * s[0] - b * s[0] * s[0] * s[0]])
            }
            SystemKind::Rotation { rho, theta } => {
                let (s, c) = theta.sin_cos();
                vec![rho * (c * x[0] - s * x[1]), rho * (s * x[0] + c * x[1])]
            }
        };
        if next.iter().any(|v: &f64| !v.is_finite()) {
            return Err(KoopmanError::Divergence(format!("step from {x:?} left the finite range")));
        }
        Ok(next)
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match &self.output_map {
            OutputMap::FullState => x.to_vec(),
            OutputMap::Linear { c } => (0..c.nrows())
                .map(|i| (0..c.ncols()).map(|j| c[(i, j)] * x[j]).sum())
                .collect(),
            OutputMap::ComponentPowers { terms } => {
                terms.iter().map(|&(i, p)| x[i].powi(p as i32)).collect()
            }
            OutputMap::Custom { dictionary } => dictionary.evaluate(x)?.iter().copied().collect(),
        })
    }
}

/// Classical fourth-order Runge-Kutta step for a planar vector field.
fn rk4(x: &[f64], h: f64, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let s = [x[0], x[1]];
    let k1 = f(s);
    let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
    let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
    let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1]]);
    (0..2)
        .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Initial conditions for trajectory generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStates {
    Given(Vec<Vec<f64>>),
    /// `count` states drawn uniformly from the box `[low, high]`.
    Random { count: usize, low: Vec<f64>, high: Vec<f64> },
}

impl InitialStates {
    pub fn resolve(&self, state_dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        match self {
            InitialStates::Given(states) => {
                if let Some(bad) = states.iter().find(|s| s.len() != state_dim) {
                    return Err(KoopmanError::shape(format!(
                        "initial state {bad:?} does not have dimension {state_dim}"
                    )));
                }
                Ok(states.clone())
            }
            InitialStates::Random { count, low, high } => {
                if low.len() != state_dim || high.len() != state_dim {
                    return Err(KoopmanError::shape("random box bounds must match state dimension"));
                }
                if low.iter().zip(high).any(|(l, h)| !(l <= h)) {
                    return Err(KoopmanError::config("random box needs low <= high"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..*count)
                    .map(|_| {
                        low.iter()
                            .zip(high)
                            .map(|(&l, &h)| if h > l { rng.random_range(l..h) } else { l })
                            .collect()
                    })
                    .collect())
            }
        }
    }
}

/// Generated snapshots plus one warning per truncated trajectory.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: SnapshotSet,
    /// Number of snapshot pairs contributed by each trajectory.
    pub pairs_per_trajectory: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Simulates `steps` steps from each initial state and stacks the consecutive
/// pairs. Outputs `Y` and successor outputs `Y+` come from the output map.
pub fn generate_snapshots(
    sys: &ReferenceSystem,
    initial: &InitialStates,
    steps: usize,
    seed: u64,
) -> Result<Generated> {
    sys.validate()?;
    if steps < 1 {
        return Err(KoopmanError::config("steps per trajectory must be at least 1"));
    }
    let n = sys.state_dim();
    let starts = initial.resolve(n, seed)?;

    let mut x = Vec::new();
    let mut xp = Vec::new();
    let mut y = Vec::new();
    let mut yp = Vec::new();
    let mut pairs_per_trajectory = Vec::with_capacity(starts.len());
    let mut warnings = Vec::new();

    for (t, x0) in starts.iter().enumerate() {
        let mut current = x0.clone();
        let mut current_y = match sys.output(&current) {
            Ok(v) => v,
            Err(e) => return Err(e),
        };
        let mut pairs = 0;
        for k in 0..steps {
            let next = match sys.step(&current) {
                Ok(v) => v,
                Err(KoopmanError::Divergence(msg)) => {
                    warnings.push(format!("trajectory {t} truncated after {k} steps: {msg}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            let next_y = sys.output(&next)?;
            x.extend_from_slice(&current);
            xp.extend_from_slice(&next);
            y.extend_from_slice(&current_y);
            yp.extend_from_slice(&next_y);
            pairs += 1;
            current = next;
            current_y = next_y;
        }
        pairs_per_trajectory.push(pairs);
    }

    let m = pairs_per_trajectory.iter().sum::<usize>();
    if m == 0 {
        return Err(KoopmanError::Divergence("every trajectory diverged immediately".into()));
    }
    let p = sys.output_dim();
    let data = SnapshotSet::with_outputs(
        DMatrix::from_row_slice(m, n, &x),
        DMatrix::from_row_slice(m, n, &xp),
        Some(DMatrix::from_row_slice(m, p, &y)),
        Some(DMatrix::from_row_slice(m, p, &yp)),
    )?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Generated { data, pairs_per_trajectory, warnings })
}
