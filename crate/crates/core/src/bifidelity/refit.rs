//! Least-squares refits of the last branch and trunk layers of a DeepONet.
//!
//! The output is linear in either last layer when everything else is held
//! fixed, and on a shared time grid the normal equations factor into a
//! velocity part and a time part. Both layers are refit alternately under a
//! curvature penalty along velocity; the penalty weight is chosen by k-fold
//! cross-validation over trajectories.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::data::TripletDataset;
use crate::error::Result;
use crate::operator::{DeepOnetModel, Operator};

const ROUNDS: usize = 4;
const FOLDS: usize = 5;
const RIDGE: f64 = 1e-10;
const PENALTIES: [f64; 8] = [0.0, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
const FINE_GRID: usize = 401;

fn with_ones(a: &Array2<f64>) -> DMatrix<f64> {
    let w = a.ncols();
    DMatrix::from_fn(a.nrows(), w + 1, |i, j| if j < w { a[[i, j]] } else { 1.0 })
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Solves `(gram + ridge) x = rhs` with a ridge relative to the mean diagonal.
fn spd_solve(gram: DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = gram.nrows();
    let scale = (gram.trace() / n as f64).max(f64::MIN_POSITIVE);
    let chol = (gram + DMatrix::identity(n, n) * (RIDGE * scale)).cholesky()?;
    Some(chol.solve(rhs))
}

/// Everything the refit needs, in matrix form.
struct Problem {
    /// Branch features with a ones column, one row per trajectory.
    h: DMatrix<f64>,
    /// Second differences of the branch features along a fine velocity grid.
    p: DMatrix<f64>,
    /// Trunk features with a ones column, one row per time.
    g: DMatrix<f64>,
    /// Targets, trajectories by times.
    y: DMatrix<f64>,
    /// Makes penalty weights comparable across models.
    penalty_scale: f64,
}

/// Last-layer parameters: `m` maps branch features to coefficients
/// ((features + 1) x p), `n` maps trunk features to basis functions
/// (p x (features + 1)).
#[derive(Clone)]
struct Heads {
    m: DMatrix<f64>,
    n: DMatrix<f64>,
}

impl Heads {
    fn from_model(model: &DeepOnetModel) -> Self {
        let b = model.branch().layers().last().unwrap();
        let t = model.trunk().layers().last().unwrap();
        let (p, wb) = b.weight.dim();
        let wt = t.weight.ncols();
        Self {
            m: DMatrix::from_fn(wb + 1, p, |j, k| if j < wb { b.weight[[k, j]] } else { b.bias[k] }),
            n: DMatrix::from_fn(p, wt + 1, |k, j| if j < wt { t.weight[[k, j]] } else { t.bias[k] }),
        }
    }

    fn write_to(&self, model: &mut DeepOnetModel) {
        let b = model.branch_mut().layers_mut().last_mut().unwrap();
        let wb = b.weight.ncols();
        for k in 0..self.m.ncols() {
            for j in 0..wb {
                b.weight[[k, j]] = self.m[(j, k)];
            }
            b.bias[k] = self.m[(wb, k)];
        }
        let t = model.trunk_mut().layers_mut().last_mut().unwrap();
        let wt = t.weight.ncols();
        for k in 0..self.n.nrows() {
            for j in 0..wt {
                t.weight[[k, j]] = self.n[(k, j)];
            }
            t.bias[k] = self.n[(k, wt)];
        }
    }

    fn is_finite(&self) -> bool {
        self.m.iter().chain(self.n.iter()).all(|v| v.is_finite())
    }
}

impl Problem {
    fn new(model: &DeepOnetModel, ds: &TripletDataset) -> Result<Self> {
        let times = ds.trajectories()[0].times.clone();
        let velocities = ds.velocities();
        let (lo, hi) = model.normalization().velocity_domain();
        let lo = velocities.iter().copied().fold(lo, f64::min);
        let hi = velocities.iter().copied().fold(hi, f64::max);
        let fine: Vec<f64> = (0..FINE_GRID)
            .map(|i| lo + (hi - lo) * i as f64 / (FINE_GRID - 1) as f64)
            .collect();
        let hf = with_ones(&model.branch_features(&fine));
        let p = DMatrix::from_fn(FINE_GRID - 2, hf.ncols(), |i, j| hf[(i, j)] - 2.0 * hf[(i + 1, j)] + hf[(i + 2, j)]);
        let h = with_ones(&model.branch_features(&velocities));
        let penalty_scale = h.norm_squared() / p.norm_squared().max(f64::MIN_POSITIVE);
        Ok(Self {
            h,
            p,
            g: with_ones(&model.trunk_features(&times)?),
            y: DMatrix::from_fn(velocities.len(), times.len(), |i, j| ds.trajectories()[i].values[j]),
            penalty_scale,
        })
    }

    /// Block coordinate descent on
    /// `|H M Tᵀ - Y|² + λ |P M Tᵀ|²` with `T = G Nᵀ`, over trajectories `idx`.
    fn fit(&self, start: &Heads, idx: &[usize], penalty: f64) -> Option<Heads> {
        let h = rows(&self.h, idx);
        let y = rows(&self.y, idx);
        let lambda = penalty * self.penalty_scale;
        let gram_p = self.p.transpose() * &self.p * lambda;
        let gram_g = self.g.transpose() * &self.g;
        let mut heads = start.clone();
        for _ in 0..ROUNDS {
            // branch head
            let t = &self.g * heads.n.transpose();
            let left = spd_solve(h.transpose() * &h + &gram_p, &(h.transpose() * &y * &t))?;
            heads.m = spd_solve(t.transpose() * &t, &left.transpose())?.transpose();
            // trunk head
            let phi = &h * &heads.m;
            let q = &self.p * &heads.m;
            let gram_phi = phi.transpose() * &phi + q.transpose() * &q * lambda;
            let right = spd_solve(gram_g.clone(), &(self.g.transpose() * y.transpose() * &phi))?;
            heads.n = spd_solve(gram_phi, &right.transpose())?;
        }
        heads.is_finite().then_some(heads)
    }

    fn error(&self, heads: &Heads, idx: &[usize]) -> f64 {
        let pred = rows(&self.h, idx) * &heads.m * (&self.g * heads.n.transpose()).transpose();
        (pred - rows(&self.y, idx)).norm_squared()
    }
}

fn mse_of(model: &DeepOnetModel, ds: &TripletDataset) -> Result<f64> {
    super::trainer::dataset_mse(&Operator::DataDriven(model.clone()), ds)
}

/// Refits both output layers of `model` on `train`. The model is left
/// unchanged unless the refit lowers the error on `validation`. Returns the
/// validation error of the result.
pub fn refit_output_layers(model: &mut DeepOnetModel, train: &TripletDataset, validation: &TripletDataset) -> Result<f64> {
    let current = mse_of(model, validation)?;
    let n = train.num_trajectories();
    if !train.shared_time_grid() || n < FOLDS {
        return Ok(current);
    }
    let problem = Problem::new(model, train)?;
    let start = Heads::from_model(model);

    // folds interleave trajectories sorted by velocity
    let mut order: Vec<usize> = (0..n).collect();
    let velocities = train.velocities();
    order.sort_by(|&a, &b| velocities[a].total_cmp(&velocities[b]));
    let mut best: Option<(f64, f64)> = None;
    for penalty in PENALTIES {
        let mut cv = 0.0;
        for fold in 0..FOLDS {
            let (held, kept): (Vec<usize>, Vec<usize>) = (0..n).map(|r| order[r]).partition(|&i| {
                order.iter().position(|&o| o == i).unwrap() % FOLDS == fold
            });
            cv += match problem.fit(&start, &kept, penalty) {
                Some(heads) => problem.error(&heads, &held),
                None => f64::INFINITY,
            };
        }
        log::debug!("output refit: penalty {penalty:.0e}, cross-validation sse {cv:.3e}");
        if cv.is_finite() && best.is_none_or(|(_, b)| cv < b) {
            best = Some((penalty, cv));
        }
    }
    let Some((penalty, _)) = best else {
        return Ok(current);
    };
    let all: Vec<usize> = (0..n).collect();
    let Some(heads) = problem.fit(&start, &all, penalty) else {
        return Ok(current);
    };
    let mut candidate = model.clone();
    heads.write_to(&mut candidate);
    let refit = mse_of(&candidate, validation)?;
    log::debug!("output refit: penalty {penalty:.0e}, validation mse {current:.3e} -> {refit:.3e}");
    if refit < current {
        *model = candidate;
        Ok(refit)
    } else {
        Ok(current)
    }
}
