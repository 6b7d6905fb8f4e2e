use rand::Rng;
use rand_distr::StandardNormal;

/// Adaptive Gaussian random-walk proposal for one parameter block.
///
/// During burn-in the log scale follows a Robbins-Monro recursion towards
/// the target acceptance rate and the proposal shape tracks the running
/// covariance of the block. [`RandomWalk::freeze`] stops both.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    dim: usize,
    log_scale: f64,
    /// Lower Cholesky factor of the proposal shape, row major.
    chol: Vec<f64>,
    target: f64,
    frozen: bool,
    shape_adapted: bool,
    n_adapt: usize,
    scratch: Vec<f64>,
    // running moments of the visited states
    n_seen: usize,
    mean: Vec<f64>,
    comoment: Vec<f64>,
    // acceptance counters
    window_accepted: usize,
    window_proposed: usize,
    accepted: u64,
    proposed: u64,
}

impl RandomWalk {
    /// Blocks of dimension one target 0.44 and larger blocks `target_multi`.
    pub fn new(dim: usize, initial_sd: f64, target_multi: f64, target_scalar: f64) -> Self {
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            chol[i * dim + i] = initial_sd;
        }
        Self {
            dim,
            log_scale: (2.38 / (dim as f64).sqrt()).ln(),
            chol,
            target: if dim == 1 { target_scalar } else { target_multi },
            frozen: false,
            shape_adapted: false,
            n_adapt: 0,
            scratch: vec![0.0; dim],
            n_seen: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
            window_accepted: 0,
            window_proposed: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Scale and shape as one vector, for freeze checks.
    pub fn fingerprint(&self) -> Vec<f64> {
        let mut v = vec![self.log_scale];
        v.extend_from_slice(&self.chol);
        v
    }

    pub fn propose<R: Rng + ?Sized>(&mut self, current: &[f64], rng: &mut R, out: &mut [f64]) {
        let s = self.scale();
        let d = self.dim;
        for e in self.scratch.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut step = 0.0;
            for j in 0..=i {
                step += self.chol[i * d + j] * self.scratch[j];
            }
            out[i] = current[i] + s * step;
        }
    }

    /// Metropolis accept/reject on a log ratio.
    pub fn accept<R: Rng + ?Sized>(&mut self, log_ratio: f64, rng: &mut R) -> bool {
        let ok = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        self.record(ok);
        ok
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if self.frozen {
            return;
        }
        self.window_proposed += 1;
        self.window_accepted += accepted as usize;
        self.n_adapt += 1;
        let gain = (self.n_adapt as f64).powf(-0.6);
        self.log_scale += gain * (accepted as u8 as f64 - self.target);
        self.log_scale = self.log_scale.clamp(-30.0, 10.0);
    }

    /// Adds a visited state to the running covariance.
    pub fn observe(&mut self, state: &[f64]) {
        if self.frozen {
            return;
        }
        let d = self.dim;
        self.n_seen += 1;
        let n = self.n_seen as f64;
        for i in 0..d {
            self.scratch[i] = state[i] - self.mean[i];
            self.mean[i] += self.scratch[i] / n;
        }
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] += self.scratch[i] * (state[j] - self.mean[j]);
            }
        }
    }

    /// Ends an adaptation window: refreshes the proposal shape from the
    /// running covariance and shrinks the scale if nothing was accepted.
    /// Returns `true` when the window had no acceptances.
    pub fn end_window(&mut self) -> bool {
        if self.frozen {
            return false;
        }
        let stuck = self.window_proposed > 0 && self.window_accepted == 0;
        if stuck {
            self.log_scale -= std::f64::consts::LN_2;
        }
        self.window_accepted = 0;
        self.window_proposed = 0;
        let d = self.dim;
        if self.n_seen > 10 * d + 10 {
            let n = (self.n_seen - 1) as f64;
            let mut cov: Vec<f64> = self.comoment.iter().map(|c| c / n).collect();
            let ridge = 1e-10 + 1e-6 * (0..d).map(|i| cov[i * d + i]).fold(0.0, f64::max);
            for i in 0..d {
                cov[i * d + i] += ridge;
            }
            if let Some(l) = cholesky(&cov, d) {
                self.chol = l;
                if !self.shape_adapted {
                    // The first empirical shape replaces a guess; restart the
                    // scale at the usual optimum for Gaussian targets.
                    self.shape_adapted = true;
                    self.log_scale = (2.38 / (d as f64).sqrt()).ln();
                }
            }
        }
        stuck
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
        self.accepted = 0;
        self.proposed = 0;
    }

    /// Acceptance rate since the last freeze (or since creation).
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Dense Cholesky of a small symmetric matrix; `None` if not positive
/// definite.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}
