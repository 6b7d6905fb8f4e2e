//! One Markov chain: precomputed sufficient statistics and the sweep.
//!
//! With `M = I − τA` symmetric, every quadratic form the outcome model needs
//! expands as `uᵀMᵀMv = u·v − 2τ u·Av + τ² Au·Av`, so the three inner products
//! are precomputed once and each τ proposal costs O(1) for the quadratic part
//! plus O(N) for the cached-spectrum log-determinant.

use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::{cholesky, RandomWalk};
use super::{ChainReport, SamplerConfig, SamplerError};
use crate::model::{half_cauchy_logpdf, lkj2_logpdf, log1p_exp, FitData, ModelKind, ParamDraw, PriorConfig};
use crate::rng::SimRng;

/// Statistics that do not change during sampling.
pub(crate) struct Precomp<'a> {
    data: &'a FitData,
    kind: ModelKind,
    sar: bool,
    n: usize,
    p: usize,
    q: usize,
    m: usize,
    members: Vec<Vec<usize>>,
    sub_of: Vec<usize>,
    /// `G` components for XᵀMᵀMX, each p × p.
    xtx: Vec<f64>,
    xtax: Vec<f64>,
    axtax: Vec<f64>,
    /// AX, N × p (SAR only).
    ax: Vec<f64>,
    /// Per node `w_i`, `(Aw)_i` and `(A²w)_i`.
    w: Vec<f64>,
    aw: Vec<f64>,
    aaw: Vec<f64>,
    /// Per subgraph wᵀw, wᵀAw and ‖Aw‖².
    w_ww: Vec<f64>,
    w_waw: Vec<f64>,
    w_awaw: Vec<f64>,
    shift_y: bool,
    shift_z: bool,
}

fn apply_a(data: &FitData, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = data.network.neighbors(i).iter().map(|&j| v[j]).sum();
    }
}

impl<'a> Precomp<'a> {
    pub(crate) fn new(data: &'a FitData) -> Self {
        let n = data.n_nodes();
        let p = data.n_beta();
        let q = data.n_gamma();
        let m = data.n_subgraphs();
        let sar = data.spec.sar;
        let members: Vec<Vec<usize>> = (0..m).map(|s| data.network.members(s).to_vec()).collect();
        let sub_of = data.network.subgraph_assignment().to_vec();
        let x = &data.x_obs;
        let gram = |a: &[f64], b: &[f64]| {
            let mut g = vec![0.0; p * p];
            for i in 0..n {
                let (ra, rb) = (&a[i * p..(i + 1) * p], &b[i * p..(i + 1) * p]);
                for j in 0..p {
                    for k in 0..p {
                        g[j * p + k] += ra[j] * rb[k];
                    }
                }
            }
            g
        };
        let xtx = gram(x, x);
        let (ax, xtax, axtax) = if sar {
            let mut ax = vec![0.0; n * p];
            for i in 0..n {
                for &j in data.network.neighbors(i) {
                    for c in 0..p {
                        ax[i * p + c] += x[j * p + c];
                    }
                }
            }
            let xtax = gram(x, &ax);
            let axtax = gram(&ax, &ax);
            (ax, xtax, axtax)
        } else {
            (Vec::new(), vec![0.0; p * p], vec![0.0; p * p])
        };
        let w = data.w.clone();
        let mut aw = vec![0.0; n];
        let mut aaw = vec![0.0; n];
        if sar {
            apply_a(data, &w, &mut aw);
            apply_a(data, &aw, &mut aaw);
        }
        let per_sub = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
            members.iter().map(|mem| mem.iter().map(|&i| f(i)).sum()).collect()
        };
        let w_ww = per_sub(&|i| w[i] * w[i]);
        let w_waw = per_sub(&|i| w[i] * aw[i]);
        let w_awaw = per_sub(&|i| aw[i] * aw[i]);
        let kind = data.spec.kind;
        let shift_y = data.spec.intercept && kind.has_outcome_re() && data.w.iter().all(|&v| v == 1.0);
        let shift_z =
            data.spec.exposure_intercept && kind.has_exposure_model() && q > 0 && data.u.iter().all(|&v| v == 1.0);
        Self {
            data,
            kind,
            sar,
            n,
            p,
            q,
            m,
            members,
            sub_of,
            xtx,
            xtax,
            axtax,
            ax,
            w,
            aw,
            aaw,
            w_ww,
            w_waw,
            w_awaw,
            shift_y,
            shift_z,
        }
    }

    fn log_abs_det(&self, tau: f64) -> Option<f64> {
        match &self.data.sar_blocks {
            None => Some(0.0),
            Some(blocks) => blocks.iter().map(|b| b.log_abs_det(tau)).sum(),
        }
    }
}

/// Named random-walk blocks of one chain.
struct Blocks {
    gamma: Option<RandomWalk>,
    noise: Option<RandomWalk>,
    re_cov: Option<RandomWalk>,
    re_cov_nc: Option<RandomWalk>,
    b: Vec<RandomWalk>,
}

impl Blocks {
    fn all_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut RandomWalk)> {
        let named: [(&'static str, Option<&mut RandomWalk>); 4] = [("gamma", self.gamma.as_mut()), ("sigma_tau", self.noise.as_mut()), ("re_cov", self.re_cov.as_mut()), ("re_cov_nc", self.re_cov_nc.as_mut())];
        named
            .into_iter()
            .filter_map(|(n, b)| b.map(|b| (n, b)))
            .chain(self.b.iter_mut().map(|b| ("b", b)))
    }

    fn fingerprint(&mut self) -> Vec<f64> {
        self.all_mut().flat_map(|(_, b)| b.fingerprint()).collect()
    }
}

pub(crate) struct Chain<'a> {
    pc: &'a Precomp<'a>,
    priors: &'a PriorConfig,
    cfg: &'a SamplerConfig,
    draw: ParamDraw,
    /// y − Xβ
    r0: Vec<f64>,
    /// X^z γ
    eta0: Vec<f64>,
    /// Exposure log-likelihood per subgraph at the current state.
    exp_ll: Vec<f64>,
    blocks: Blocks,
    gibbs_sweeps: u64,
    rng: SimRng,
    // scratch
    eta_prop: Vec<f64>,
    exp_prop: Vec<f64>,
    tmp_n: Vec<f64>,
    tmp_n2: Vec<f64>,
}

fn normal_log_kernel(x: f64, var: f64) -> f64 {
    -0.5 * x * x / var
}

impl<'a> Chain<'a> {
    pub(crate) fn new(
        pc: &'a Precomp<'a>,
        priors: &'a PriorConfig,
        cfg: &'a SamplerConfig,
        init: ParamDraw,
        rng: SimRng,
    ) -> Self {
        let (tm, ts) = (cfg.target_accept, cfg.target_accept_scalar);
        let noise_dim = cfg.fixed_sigma_eps.is_none() as usize + pc.sar as usize;
        let re_dim = match pc.kind {
            ModelKind::Jmm => 3,
            ModelKind::Lmm => 1,
            ModelKind::Fem => 0,
        };
        let blocks = Blocks {
            gamma: (pc.q > 0).then(|| RandomWalk::new(pc.q, 0.1, tm, ts)),
            noise: (noise_dim > 0).then(|| RandomWalk::new(noise_dim, 0.05, tm, ts)),
            re_cov: (re_dim > 0).then(|| RandomWalk::new(re_dim, 0.2, tm, ts)),
            re_cov_nc: (re_dim > 0 && pc.m > 0).then(|| RandomWalk::new(re_dim, 0.1, tm, ts)),
            b: if pc.kind == ModelKind::Jmm {
                (0..pc.m).map(|_| RandomWalk::new(2, 0.3, tm, ts)).collect()
            } else {
                Vec::new()
            },
        };
        let mut chain = Self {
            pc,
            priors,
            cfg,
            draw: init,
            r0: vec![0.0; pc.n],
            eta0: vec![0.0; pc.n],
            exp_ll: vec![0.0; pc.m],
            blocks,
            gibbs_sweeps: 0,
            rng,
            eta_prop: vec![0.0; pc.n],
            exp_prop: vec![0.0; pc.m],
            tmp_n: vec![0.0; pc.n],
            tmp_n2: vec![0.0; pc.n],
        };
        if let Some(s) = cfg.fixed_sigma_eps {
            chain.draw.sigma_eps = s;
        }
        chain.refresh_caches();
        chain
    }

    fn refresh_caches(&mut self) {
        let d = self.pc.data;
        for i in 0..self.pc.n {
            self.r0[i] = d.y[i] - d.fixed_mean(i, &self.draw.beta);
        }
        if let Some(e) = &d.exposure {
            for i in 0..self.pc.n {
                self.eta0[i] = e.linear(i, &self.draw.gamma);
            }
        }
        let (eta0, b) = (&self.eta0, &self.draw.b);
        let exp_ll = self.pc.members.iter().enumerate().map(|(s, mem)| self.exposure_ll_sub(mem, eta0, b[s][1])).collect();
        self.exp_ll = exp_ll;
    }

    fn exposure_ll_sub(&self, mem: &[usize], eta0: &[f64], bz: f64) -> f64 {
        if !self.pc.kind.has_exposure_model() {
            return 0.0;
        }
        let d = self.pc.data;
        mem.iter()
            .map(|&i| {
                let e = eta0[i] + d.u[i] * bz;
                if d.z[i] { e - log1p_exp(e) } else { -log1p_exp(e) }
            })
            .sum()
    }

    pub(crate) fn draw(&self) -> &ParamDraw {
        &self.draw
    }

    pub(crate) fn sweep(&mut self) -> Result<(), SamplerError> {
        self.update_beta()?;
        self.update_gamma();
        self.update_noise();
        for _ in 0..3 {
            self.update_re_cov();
        }
        self.update_re_cov_noncentered();
        self.update_b();
        self.shift_intercepts();
        self.gibbs_sweeps += 1;
        Ok(())
    }

    pub(crate) fn end_window(&mut self) {
        for (name, block) in self.blocks.all_mut() {
            if block.end_window() && name != "b" {
                log::warn!("{name} block rejected every proposal in an adaptation window; shrinking its scale");
            }
        }
    }

    pub(crate) fn freeze(&mut self) -> Vec<f64> {
        for (_, b) in self.blocks.all_mut() {
            b.freeze();
        }
        self.blocks.fingerprint()
    }

    pub(crate) fn report(&mut self, frozen: Vec<f64>) -> ChainReport {
        let mut acceptance: Vec<(String, f64)> = vec![("beta".into(), 1.0)];
        let mut b_rates = Vec::new();
        for (name, block) in self.blocks.all_mut() {
            if name == "b" {
                b_rates.push(block.acceptance_rate());
            } else {
                acceptance.push((name.into(), block.acceptance_rate()));
            }
        }
        if !b_rates.is_empty() {
            acceptance.push(("b".into(), b_rates.iter().sum::<f64>() / b_rates.len() as f64));
        }
        ChainReport { acceptance, frozen_fingerprint: frozen, final_fingerprint: self.blocks.fingerprint() }
    }

    fn tau(&self) -> f64 {
        if self.pc.sar {
            self.draw.tau
        } else {
            0.0
        }
    }

    /// `Σ_i w_i (ww-weighted) r0` through the MᵀM expansion, per subgraph.
    fn re_linear(&self, s: usize, tau: f64) -> f64 {
        let pc = self.pc;
        pc.members[s]
            .iter()
            .map(|&i| self.r0[i] * (pc.w[i] - 2.0 * tau * pc.aw[i] + tau * tau * pc.aaw[i]))
            .sum()
    }

    fn re_quadratic(&self, s: usize, tau: f64) -> f64 {
        let pc = self.pc;
        pc.w_ww[s] - 2.0 * tau * pc.w_waw[s] + tau * tau * pc.w_awaw[s]
    }

    /// Exact Gaussian full conditional of β.
    fn update_beta(&mut self) -> Result<(), SamplerError> {
        let pc = self.pc;
        let d = pc.data;
        let p = pc.p;
        let tau = self.tau();
        let s2 = self.draw.sigma_eps * self.draw.sigma_eps;
        let use_re = pc.kind.has_outcome_re();
        for i in 0..pc.n {
            let re = if use_re { pc.w[i] * self.draw.b[pc.sub_of[i]][0] } else { 0.0 };
            self.tmp_n[i] = d.y[i] - re;
        }
        let mut lin = vec![0.0; p];
        for i in 0..pc.n {
            let row = d.x_row(i);
            for c in 0..p {
                lin[c] += row[c] * self.tmp_n[i];
            }
        }
        if pc.sar {
            apply_a(d, &self.tmp_n, &mut self.tmp_n2);
            for i in 0..pc.n {
                let (row, arow) = (d.x_row(i), &pc.ax[i * p..(i + 1) * p]);
                for c in 0..p {
                    lin[c] += -2.0 * tau * row[c] * self.tmp_n2[i] + tau * tau * arow[c] * self.tmp_n2[i];
                }
            }
        }
        let mut prec = vec![0.0; p * p];
        for j in 0..p * p {
            let xmx = pc.xtx[j] - tau * (pc.xtax[j] + pc.xtax[(j % p) * p + j / p]) + tau * tau * pc.axtax[j];
            prec[j] = xmx / s2;
        }
        for c in 0..p {
            prec[c * p + c] += 1.0 / self.priors.coef_prior_var;
            lin[c] /= s2;
        }
        let l = cholesky(&prec, p).ok_or_else(|| SamplerError::Numerical("beta precision not positive definite".into()))?;
        // mean = Q⁻¹ lin; draw = mean + L⁻ᵀ ε
        let mut y = forward(&l, p, &lin);
        for v in y.iter_mut() {
            *v += self.rng.sample::<f64, _>(StandardNormal);
        }
        let beta = backward(&l, p, &y);
        self.draw.beta = beta;
        for i in 0..pc.n {
            self.r0[i] = d.y[i] - d.fixed_mean(i, &self.draw.beta);
        }
        Ok(())
    }

    fn update_gamma(&mut self) {
        let pc = self.pc;
        let Some(block) = self.blocks.gamma.as_mut() else { return };
        let Some(exp) = &pc.data.exposure else { return };
        let mut prop = vec![0.0; pc.q];
        block.propose(&self.draw.gamma, &mut self.rng, &mut prop);
        for i in 0..pc.n {
            self.eta_prop[i] = exp.linear(i, &prop);
        }
        let mut new_total = 0.0;
        let mut old_total = 0.0;
        for (s, mem) in pc.members.iter().enumerate() {
            let v = {
                let d = pc.data;
                mem.iter()
                    .map(|&i| {
                        let e = self.eta_prop[i] + d.u[i] * self.draw.b[s][1];
                        if d.z[i] { e - log1p_exp(e) } else { -log1p_exp(e) }
                    })
                    .sum::<f64>()
            };
            self.exp_prop[s] = v;
            new_total += v;
            old_total += self.exp_ll[s];
        }
        let v = self.priors.coef_prior_var;
        let prior = |g: &[f64]| g.iter().map(|&x| normal_log_kernel(x, v)).sum::<f64>();
        let ratio = new_total + prior(&prop) - old_total - prior(&self.draw.gamma);
        let block = self.blocks.gamma.as_mut().expect("checked above");
        if block.accept(ratio, &mut self.rng) {
            self.draw.gamma = prop;
            std::mem::swap(&mut self.eta0, &mut self.eta_prop);
            std::mem::swap(&mut self.exp_ll, &mut self.exp_prop);
        }
        block.observe(&self.draw.gamma);
    }

    /// Random walk on `(log σ_ε, τ)`, either coordinate dropped when fixed or
    /// absent.
    fn update_noise(&mut self) {
        let pc = self.pc;
        let fixed = self.cfg.fixed_sigma_eps.is_some();
        if self.blocks.noise.is_none() {
            return;
        }
        let use_re = pc.kind.has_outcome_re();
        for i in 0..pc.n {
            let re = if use_re { pc.w[i] * self.draw.b[pc.sub_of[i]][0] } else { 0.0 };
            self.tmp_n[i] = self.r0[i] - re;
        }
        let ee: f64 = self.tmp_n.iter().map(|v| v * v).sum();
        let (eae, aeae) = if pc.sar {
            apply_a(pc.data, &self.tmp_n, &mut self.tmp_n2);
            let eae: f64 = self.tmp_n.iter().zip(&self.tmp_n2).map(|(a, b)| a * b).sum();
            let aeae: f64 = self.tmp_n2.iter().map(|v| v * v).sum();
            (eae, aeae)
        } else {
            (0.0, 0.0)
        };
        let n = pc.n as f64;
        let hc = self.priors.half_cauchy_scale;
        let (tlo, thi) = self.priors.tau_bounds;
        let target = |log_sigma: f64, tau: f64| -> f64 {
            if pc.sar && !(tlo..=thi).contains(&tau) {
                return f64::NEG_INFINITY;
            }
            let Some(ld) = (if pc.sar { pc.log_abs_det(tau) } else { Some(0.0) }) else {
                return f64::NEG_INFINITY;
            };
            let sigma = log_sigma.exp();
            let ss = ee - 2.0 * tau * eae + tau * tau * aeae;
            let jac_prior = if fixed { 0.0 } else { half_cauchy_logpdf(sigma, hc) + log_sigma };
            -n * log_sigma + ld - ss / (2.0 * sigma * sigma) + jac_prior
        };
        let cur_ls = self.draw.sigma_eps.ln();
        let cur_tau = self.tau();
        let mut cur = Vec::with_capacity(2);
        if !fixed {
            cur.push(cur_ls);
        }
        if pc.sar {
            cur.push(cur_tau);
        }
        let mut prop = vec![0.0; cur.len()];
        let block = self.blocks.noise.as_mut().expect("checked above");
        block.propose(&cur, &mut self.rng, &mut prop);
        let (ls, tau) = match (fixed, pc.sar) {
            (false, true) => (prop[0], prop[1]),
            (false, false) => (prop[0], 0.0),
            (true, _) => (cur_ls, prop[0]),
        };
        let ratio = target(ls, tau) - target(cur_ls, cur_tau);
        if block.accept(ratio, &mut self.rng) {
            self.draw.sigma_eps = ls.exp();
            if pc.sar {
                self.draw.tau = tau;
            }
            block.observe(&prop);
        } else {
            block.observe(&cur);
        }
    }

    /// Random walk on `(log σ_by, log σ_bz, atanh ρ)` (JMM) or `log σ_by`
    /// (LMM) using the scatter matrix of the current random effects.
    fn update_re_cov(&mut self) {
        let pc = self.pc;
        if self.blocks.re_cov.is_none() {
            return;
        }
        let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
        for b in &self.draw.b {
            s11 += b[0] * b[0];
            s12 += b[0] * b[1];
            s22 += b[1] * b[1];
        }
        let m = pc.m as f64;
        let hc = self.priors.half_cauchy_scale;
        let eta = self.priors.lkj_eta;
        let kind = pc.kind;
        let target = |x: &[f64]| -> f64 {
            match kind {
                ModelKind::Lmm => {
                    let sy = x[0].exp();
                    -m * x[0] - s11 / (2.0 * sy * sy) + half_cauchy_logpdf(sy, hc) + x[0]
                }
                _ => {
                    let (sy, sz, rho) = (x[0].exp(), x[1].exp(), x[2].tanh());
                    let one_m = 1.0 - rho * rho;
                    if !(one_m > 0.0) {
                        return f64::NEG_INFINITY;
                    }
                    let det = sy * sy * sz * sz * one_m;
                    let tr = (sz * sz * s11 - 2.0 * rho * sy * sz * s12 + sy * sy * s22) / det;
                    -0.5 * m * det.ln() - 0.5 * tr
                        + half_cauchy_logpdf(sy, hc)
                        + half_cauchy_logpdf(sz, hc)
                        + lkj2_logpdf(rho, eta)
                        + x[0]
                        + x[1]
                        + one_m.ln()
                }
            }
        };
        let cur: Vec<f64> = match kind {
            ModelKind::Lmm => vec![self.draw.sigma_by.ln()],
            _ => vec![self.draw.sigma_by.ln(), self.draw.sigma_bz.ln(), self.draw.rho.atanh()],
        };
        let mut prop = vec![0.0; cur.len()];
        let block = self.blocks.re_cov.as_mut().expect("checked above");
        block.propose(&cur, &mut self.rng, &mut prop);
        let ratio = target(&prop) - target(&cur);
        if block.accept(ratio, &mut self.rng) {
            self.draw.sigma_by = prop[0].exp();
            if kind == ModelKind::Jmm {
                self.draw.sigma_bz = prop[1].exp();
                self.draw.rho = prop[2].tanh();
            }
            block.observe(&prop);
        } else {
            block.observe(&cur);
        }
    }

    /// Hyperprior of the unconstrained random-effect parameters, including
    /// the Jacobian of the log and atanh transforms.
    fn re_hyperprior(&self, x: &[f64]) -> f64 {
        let hc = self.priors.half_cauchy_scale;
        match self.pc.kind {
            ModelKind::Lmm => half_cauchy_logpdf(x[0].exp(), hc) + x[0],
            _ => {
                let rho = x[2].tanh();
                let one_m = 1.0 - rho * rho;
                if !(one_m > 0.0) {
                    return f64::NEG_INFINITY;
                }
                half_cauchy_logpdf(x[0].exp(), hc)
                    + half_cauchy_logpdf(x[1].exp(), hc)
                    + lkj2_logpdf(rho, self.priors.lkj_eta)
                    + x[0]
                    + x[1]
                    + one_m.ln()
            }
        }
    }

    /// Non-centered update of the random-effect covariance: the whitened
    /// effects `L⁻¹ b_ν` are held fixed while `Σ = LLᵀ` moves, so `b` moves
    /// with it. The transform's Jacobian cancels the change in the density
    /// of `b`, leaving likelihood and hyperprior terms. Together with the
    /// centered move this mixes well whether the data pin `b` down or not.
    fn update_re_cov_noncentered(&mut self) {
        let pc = self.pc;
        if self.blocks.re_cov_nc.is_none() {
            return;
        }
        let jmm = pc.kind == ModelKind::Jmm;
        let cur: Vec<f64> = if jmm {
            vec![self.draw.sigma_by.ln(), self.draw.sigma_bz.ln(), self.draw.rho.atanh()]
        } else {
            vec![self.draw.sigma_by.ln()]
        };
        let mut prop = vec![0.0; cur.len()];
        let block = self.blocks.re_cov_nc.as_mut().expect("checked above");
        block.propose(&cur, &mut self.rng, &mut prop);
        let prior_ratio = self.re_hyperprior(&prop) - self.re_hyperprior(&cur);
        if !prior_ratio.is_finite() {
            let block = self.blocks.re_cov_nc.as_mut().expect("checked above");
            block.record(false);
            block.observe(&cur);
            return;
        }
        // Lower Cholesky factors [[l11, 0], [l21, l22]].
        let chol = |x: &[f64]| -> [f64; 3] {
            if jmm {
                let (sy, sz, rho) = (x[0].exp(), x[1].exp(), x[2].tanh());
                [sy, rho * sz, sz * (1.0 - rho * rho).sqrt()]
            } else {
                [x[0].exp(), 0.0, 1.0]
            }
        };
        let (lo, ln_) = (chol(&cur), chol(&prop));
        let tau = self.tau();
        let s2 = self.draw.sigma_eps * self.draw.sigma_eps;
        let mut new_b = self.draw.b.clone();
        let mut ratio = prior_ratio;
        for s in 0..pc.m {
            let b = self.draw.b[s];
            let u0 = b[0] / lo[0];
            let u1 = if jmm { (b[1] - lo[1] * u0) / lo[2] } else { 0.0 };
            let nb = if jmm { [ln_[0] * u0, ln_[1] * u0 + ln_[2] * u1] } else { [ln_[0] * u0, b[1]] };
            let (qd, lin) = (self.re_quadratic(s, tau), self.re_linear(s, tau));
            let outcome = |by: f64| -(qd * by * by - 2.0 * lin * by) / (2.0 * s2);
            ratio += outcome(nb[0]) - outcome(b[0]);
            if jmm {
                self.exp_prop[s] = self.exposure_ll_sub(&pc.members[s], &self.eta0, nb[1]);
                ratio += self.exp_prop[s] - self.exp_ll[s];
            }
            new_b[s] = nb;
        }
        let block = self.blocks.re_cov_nc.as_mut().expect("checked above");
        if block.accept(ratio, &mut self.rng) {
            self.draw.b = new_b;
            self.draw.sigma_by = prop[0].exp();
            if jmm {
                self.draw.sigma_bz = prop[1].exp();
                self.draw.rho = prop[2].tanh();
                self.exp_ll.copy_from_slice(&self.exp_prop);
            }
            block.observe(&prop);
        } else {
            block.observe(&cur);
        }
    }

    /// Inverse of the random-effect covariance as `(a, c, d)` for
    /// `[[a, c], [c, d]]`.
    fn re_precision(&self) -> (f64, f64, f64) {
        let [[a, c], [_, d]] = self.draw.re_covariance();
        let det = a * d - c * c;
        (d / det, -c / det, a / det)
    }

    fn update_b(&mut self) {
        let pc = self.pc;
        if !pc.kind.has_outcome_re() {
            return;
        }
        let tau = self.tau();
        let s2 = self.draw.sigma_eps * self.draw.sigma_eps;
        match pc.kind {
            ModelKind::Lmm => {
                let prior_prec = 1.0 / (self.draw.sigma_by * self.draw.sigma_by);
                for s in 0..pc.m {
                    let (qd, ln) = (self.re_quadratic(s, tau), self.re_linear(s, tau));
                    let prec = qd / s2 + prior_prec;
                    let mean = ln / s2 / prec;
                    self.draw.b[s][0] = mean + self.rng.sample::<f64, _>(StandardNormal) / prec.sqrt();
                }
            }
            ModelKind::Jmm => {
                let (pa, pc_, pd) = self.re_precision();
                let prior = |b: [f64; 2]| -0.5 * (pa * b[0] * b[0] + 2.0 * pc_ * b[0] * b[1] + pd * b[1] * b[1]);
                let mut prop = [0.0; 2];
                for s in 0..pc.m {
                    let (qd, ln) = (self.re_quadratic(s, tau), self.re_linear(s, tau));
                    let outcome = |by: f64| -(qd * by * by - 2.0 * ln * by) / (2.0 * s2);
                    let cur = self.draw.b[s];
                    self.blocks.b[s].propose(&cur, &mut self.rng, &mut prop);
                    let new_exp = self.exposure_ll_sub(&pc.members[s], &self.eta0, prop[1]);
                    let ratio = outcome(prop[0]) + new_exp + prior(prop) - outcome(cur[0]) - self.exp_ll[s] - prior(cur);
                    if self.blocks.b[s].accept(ratio, &mut self.rng) {
                        self.draw.b[s] = prop;
                        self.exp_ll[s] = new_exp;
                    }
                    // Exact refresh of b^y given b^z.
                    let bz = self.draw.b[s][1];
                    let prec = qd / s2 + pa;
                    let mean = (ln / s2 - pc_ * bz) / prec;
                    self.draw.b[s][0] = mean + self.rng.sample::<f64, _>(StandardNormal) / prec.sqrt();
                    let state = self.draw.b[s];
                    self.blocks.b[s].observe(&state);
                }
            }
            ModelKind::Fem => {}
        }
    }

    /// Exact Gibbs move along the ridge `β_0 + b^y_ν` (and `γ_0 + b^z_ν`):
    /// shifting the intercept up and every random effect down by the same
    /// amount leaves both likelihoods unchanged, so the shift has a Gaussian
    /// full conditional from the priors alone.
    fn shift_intercepts(&mut self) {
        let pc = self.pc;
        if pc.m == 0 || !(pc.shift_y || pc.shift_z) {
            return;
        }
        let v = self.priors.coef_prior_var;
        let m = pc.m as f64;
        let (sum_y, sum_z) = self.draw.b.iter().fold((0.0, 0.0), |acc, b| (acc.0 + b[0], acc.1 + b[1]));
        let (shift_y, shift_z) = match pc.kind {
            ModelKind::Lmm => {
                let pp = 1.0 / (self.draw.sigma_by * self.draw.sigma_by);
                let prec = m * pp + 1.0 / v;
                let lin = pp * sum_y - self.draw.beta[0] / v;
                (lin / prec + self.rng.sample::<f64, _>(StandardNormal) / prec.sqrt(), 0.0)
            }
            ModelKind::Jmm => {
                let (a, c, d) = self.re_precision();
                let g_y = a * sum_y + c * sum_z - self.draw.beta[0] / v;
                let gamma0 = self.draw.gamma.first().copied().unwrap_or(0.0);
                let g_z = c * sum_y + d * sum_z - gamma0 / v;
                match (pc.shift_y, pc.shift_z) {
                    (true, true) => {
                        let q = [m * a + 1.0 / v, m * c, m * c, m * d + 1.0 / v];
                        let l = cholesky(&q, 2).expect("positive definite");
                        let mut y = forward(&l, 2, &[g_y, g_z]);
                        for yv in y.iter_mut() {
                            *yv += self.rng.sample::<f64, _>(StandardNormal);
                        }
                        let x = backward(&l, 2, &y);
                        (x[0], x[1])
                    }
                    (true, false) => {
                        let prec = m * a + 1.0 / v;
                        (g_y / prec + self.rng.sample::<f64, _>(StandardNormal) / prec.sqrt(), 0.0)
                    }
                    (false, true) => {
                        let prec = m * d + 1.0 / v;
                        (0.0, g_z / prec + self.rng.sample::<f64, _>(StandardNormal) / prec.sqrt())
                    }
                    (false, false) => (0.0, 0.0),
                }
            }
            ModelKind::Fem => return,
        };
        if pc.shift_y {
            self.draw.beta[0] += shift_y;
            for b in self.draw.b.iter_mut() {
                b[0] -= shift_y;
            }
            for r in self.r0.iter_mut() {
                *r -= shift_y;
            }
        }
        if pc.shift_z {
            self.draw.gamma[0] += shift_z;
            for b in self.draw.b.iter_mut() {
                b[1] -= shift_z;
            }
            for e in self.eta0.iter_mut() {
                *e += shift_z;
            }
        }
    }
}

/// Solves `L y = b` for lower-triangular `L`.
pub(crate) fn forward(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    y
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub(crate) fn backward(l: &[f64], d: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    x
}
