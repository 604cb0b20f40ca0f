//! Primal-dual interior-point solver for standard-form conic programs
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x + s = b,   s ∈ K
//! ```
//!
//! where `K` is a product of zero cones, nonnegative orthants and
//! second-order cones. The method is a homogeneous self-dual embedding with
//! Nesterov–Todd scaling and a Mehrotra predictor-corrector step.

mod cones;
mod kkt;
mod ldl;
mod sparse;
pub mod testing;

use std::fmt;
use std::io::Write;

pub use cones::{project_soc, Cone};
pub use sparse::CscMatrix;

use cones::{add_identity, circ, dot, inv_circ, min_eigenvalue, norm, step_length, Scaling};
use kkt::KktSystem;

use crate::socp::ConicProgram;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<T> {
    pub feas_tol: T,
    pub gap_tol: T,
    pub max_iters: usize,
    pub step_fraction: T,
    /// Relative threshold for the infeasibility certificates.
    pub infeas_tol: T,
    pub static_reg: T,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            feas_tol: T::lit(1e-7),
            gap_tol: T::lit(1e-7),
            max_iters: 100,
            step_fraction: T::lit(0.99),
            infeas_tol: T::lit(1e-8),
            static_reg: T::lit(1e-8),
        }
    }
}

impl<T: Real> SolverSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.feas_tol > T::zero() && self.gap_tol > T::zero() && self.infeas_tol > T::zero()) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.step_fraction > T::zero() && self.step_fraction < T::one()) {
            return Err(Error::Config("step_fraction must lie in (0, 1)".into()));
        }
        if !(self.static_reg >= T::zero()) {
            return Err(Error::Config("static_reg must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    /// A Farkas-type certificate was found; see [`Infeasibility`].
    InfeasibleDetected(Infeasibility),
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    Primal,
    Dual,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::InfeasibleDetected(_) => "infeasible-detected",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, SolveStatus::Optimal)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub primal_objective: T,
    pub dual_objective: T,
    pub gap: T,
    pub primal_residual: T,
    pub dual_residual: T,
    pub mu: T,
    pub step: T,
}

#[derive(Debug, Clone)]
pub struct ConicSolution<T> {
    pub primal: Vec<T>,
    pub dual: Vec<T>,
    pub slacks: Vec<T>,
    pub status: SolveStatus,
    pub primal_residual: T,
    pub dual_residual: T,
    pub duality_gap: T,
    pub primal_objective: T,
    pub dual_objective: T,
    pub iterations: usize,
    pub log: Vec<IterationRecord<T>>,
    /// Diagnostic text for non-optimal exits.
    pub message: String,
}

impl<T: Real> ConicSolution<T> {
    /// Writes the iteration log as CSV.
    pub fn write_log_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "iteration,primal_objective,dual_objective,gap,primal_residual,dual_residual,mu,step"
        )?;
        for r in &self.log {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.iteration,
                r.primal_objective,
                r.dual_objective,
                r.gap,
                r.primal_residual,
                r.dual_residual,
                r.mu,
                r.step
            )?;
        }
        Ok(())
    }
}

/// Structural checks run before any iteration.
pub fn validate_program<T: Real>(program: &ConicProgram<T>) -> Result<()> {
    let n = program.objective.len();
    let p = program.b_eq.len();
    let a = &program.a_eq;
    if a.ncols != n || a.nrows != p {
        return Err(Error::InvalidProgram(format!(
            "A is {}x{}, expected {p}x{n}",
            a.nrows, a.ncols
        )));
    }
    if a.colptr.len() != n + 1 || a.colptr[n] != a.rowval.len() || a.rowval.len() != a.nzval.len() {
        return Err(Error::InvalidProgram("malformed CSC storage".into()));
    }
    if a.rowval.iter().any(|&r| r >= p) {
        return Err(Error::InvalidProgram("row index out of range".into()));
    }
    let total: usize = program.cones.iter().map(Cone::dim).sum();
    if total != p {
        return Err(Error::InvalidProgram(format!(
            "cone dimensions sum to {total}, constraint rows {p}"
        )));
    }
    if program.cones.iter().any(|c| c.dim() == 0) {
        return Err(Error::InvalidProgram("empty cone".into()));
    }
    let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
    if !finite(&program.objective) || !finite(&program.b_eq) || !finite(&a.nzval) {
        return Err(Error::InvalidProgram("non-finite data".into()));
    }
    Ok(())
}

struct Blocks<'a> {
    cones: &'a [Cone],
    offsets: Vec<usize>,
}

impl<'a> Blocks<'a> {
    fn new(cones: &'a [Cone]) -> Self {
        let mut offsets = Vec::with_capacity(cones.len() + 1);
        let mut o = 0;
        for c in cones {
            offsets.push(o);
            o += c.dim();
        }
        offsets.push(o);
        Self { cones, offsets }
    }

    fn iter(&self) -> impl Iterator<Item = (&'a Cone, std::ops::Range<usize>)> + '_ {
        self.cones
            .iter()
            .enumerate()
            .map(move |(i, c)| (c, self.offsets[i]..self.offsets[i + 1]))
    }
}

/// Solves the program. Structural problems are returned as errors;
/// numerical trouble during the iteration ends in a non-optimal status.
pub fn solve<T: Real>(program: &ConicProgram<T>, settings: &SolverSettings<T>) -> Result<ConicSolution<T>> {
    settings.validate()?;
    validate_program(program)?;
    let mut ipm = Ipm::new(program, settings)?;
    Ok(ipm.run())
}

struct Ipm<'a, T: Real> {
    prog: &'a ConicProgram<T>,
    set: &'a SolverSettings<T>,
    blocks: Blocks<'a>,
    kkt: KktSystem<T>,
    n: usize,
    p: usize,
    degree: usize,
    x: Vec<T>,
    s: Vec<T>,
    z: Vec<T>,
    tau: T,
    kappa: T,
}

struct Direction<T> {
    x: Vec<T>,
    s: Vec<T>,
    z: Vec<T>,
    tau: T,
    kappa: T,
}

impl<'a, T: Real> Ipm<'a, T> {
    fn new(prog: &'a ConicProgram<T>, set: &'a SolverSettings<T>) -> Result<Self> {
        let n = prog.objective.len();
        let p = prog.b_eq.len();
        let kkt = KktSystem::new(&prog.a_eq, &prog.cones, set.static_reg)?;
        let degree = prog.cones.iter().map(Cone::degree).sum();
        Ok(Self {
            prog,
            set,
            blocks: Blocks::new(&prog.cones),
            kkt,
            n,
            p,
            degree,
            x: vec![T::zero(); n],
            s: vec![T::zero(); p],
            z: vec![T::zero(); p],
            tau: T::one(),
            kappa: T::one(),
        })
    }

    fn identity_scalings(&self) -> Vec<Scaling<T>> {
        self.prog.cones.iter().map(Scaling::identity).collect()
    }

    fn initialize(&mut self) -> Result<()> {
        let scalings = self.identity_scalings();
        self.kkt.update(&scalings)?;
        let zeros_n = vec![T::zero(); self.n];
        let zeros_p = vec![T::zero(); self.p];
        let mut tmp = vec![T::zero(); self.p];
        // least-squares primal: A x − r = b, Aᵀ r = 0, s = −r
        let mut x = vec![T::zero(); self.n];
        self.kkt.solve(&zeros_n, &self.prog.b_eq, &mut x, &mut tmp);
        let mut s: Vec<T> = tmp.iter().map(|&v| -v).collect();
        // minimum-norm dual: Aᵀ z = −c
        let neg_c: Vec<T> = self.prog.objective.iter().map(|&v| -v).collect();
        let mut xd = vec![T::zero(); self.n];
        let mut z = vec![T::zero(); self.p];
        self.kkt.solve(&neg_c, &zeros_p, &mut xd, &mut z);
        for (cone, r) in self.blocks.iter() {
            if let Cone::Zero(_) = cone {
                s[r].iter_mut().for_each(|v| *v = T::zero());
                continue;
            }
            for v in [&mut s[r.clone()], &mut z[r.clone()]] {
                let e = min_eigenvalue(cone, v);
                if e < T::lit(1e-8) {
                    add_identity(cone, v, T::one() - e);
                }
            }
        }
        self.x = x;
        self.s = s;
        self.z = z;
        self.tau = T::one();
        self.kappa = T::one();
        Ok(())
    }

    fn run(&mut self) -> ConicSolution<T> {
        let mut log = Vec::new();
        if let Err(e) = self.initialize() {
            return self.finish(SolveStatus::NumericalFailure, 0, log, format!("initialization: {e}"));
        }
        let (n, p) = (self.n, self.p);
        let c = &self.prog.objective;
        let b = &self.prog.b_eq;
        let a = &self.prog.a_eq;
        let norm_b = norm(b);
        let norm_c = norm(c);
        let nu = T::from_usize_lossy(self.degree);

        let mut rx = vec![T::zero(); n];
        let mut rz = vec![T::zero(); p];
        let mut x1 = vec![T::zero(); n];
        let mut z1 = vec![T::zero(); p];
        let mut last_step = T::zero();
        let mut small_steps = 0;

        for iter in 0..=self.set.max_iters {
            // residuals
            a.gemv_t(&self.z, &mut rx, T::one(), T::zero());
            for j in 0..n {
                rx[j] += c[j] * self.tau;
            }
            a.gemv(&self.x, &mut rz, T::one(), T::zero());
            for i in 0..p {
                rz[i] += self.s[i] - b[i] * self.tau;
            }
            let cx = dot(c, &self.x);
            let bz = dot(b, &self.z);
            let rtau = cx + bz + self.kappa;

            let pres = norm(&rz) / self.tau / (T::one() + norm_b);
            let dres = norm(&rx) / self.tau / (T::one() + norm_c);
            let pobj = cx / self.tau;
            let dobj = -bz / self.tau;
            let gap = (pobj - dobj).abs() / (T::one() + pobj.abs());
            let mu = (dot(&self.s, &self.z) + self.tau * self.kappa) / (nu + T::one());

            log.push(IterationRecord {
                iteration: iter,
                primal_objective: pobj,
                dual_objective: dobj,
                gap,
                primal_residual: pres,
                dual_residual: dres,
                mu,
                step: last_step,
            });
            if !(pres.is_finite() && dres.is_finite() && gap.is_finite() && mu.is_finite()) {
                return self.finish(SolveStatus::NumericalFailure, iter, log, "non-finite iterate".into());
            }
            if pres <= self.set.feas_tol && dres <= self.set.feas_tol && gap <= self.set.gap_tol {
                return self.finish(SolveStatus::Optimal, iter, log, String::new());
            }
            // certificates on the unnormalised iterate
            let tol = self.set.infeas_tol;
            if bz < T::zero() {
                let mut atz = vec![T::zero(); n];
                a.gemv_t(&self.z, &mut atz, T::one(), T::zero());
                if norm(&atz) <= -bz * tol && self.tau < self.kappa {
                    return self.finish(
                        SolveStatus::InfeasibleDetected(Infeasibility::Primal),
                        iter,
                        log,
                        "primal infeasibility certificate".into(),
                    );
                }
            }
            if cx < T::zero() {
                let mut axs = self.s.clone();
                a.gemv(&self.x, &mut axs, T::one(), T::one());
                if norm(&axs) <= -cx * tol && self.tau < self.kappa {
                    return self.finish(
                        SolveStatus::InfeasibleDetected(Infeasibility::Dual),
                        iter,
                        log,
                        "dual infeasibility certificate".into(),
                    );
                }
            }
            if iter == self.set.max_iters {
                return self.finish(SolveStatus::MaxIters, iter, log, "iteration limit".into());
            }

            // scaling and factorisation
            let mut scalings = Vec::with_capacity(self.prog.cones.len());
            for (cone, r) in self.blocks.iter() {
                match Scaling::compute(cone, &self.s[r.clone()], &self.z[r]) {
                    Some(w) => scalings.push(w),
                    None => {
                        return self.finish(
                            SolveStatus::NumericalFailure,
                            iter,
                            log,
                            "iterate left the cone interior".into(),
                        )
                    }
                }
            }
            let mut lambda = vec![T::zero(); p];
            for ((cone, r), w) in self.blocks.iter().zip(&scalings) {
                if !matches!(cone, Cone::Zero(_)) {
                    w.mul_w(&self.z[r.clone()], &mut lambda[r]);
                }
            }
            if let Err(e) = self.kkt.update(&scalings) {
                return self.finish(SolveStatus::NumericalFailure, iter, log, format!("factorisation: {e}"));
            }
            self.kkt.solve(&c.iter().map(|&v| -v).collect::<Vec<_>>(), b, &mut x1, &mut z1);
            let denom_base = dot(c, &x1) + dot(b, &z1);

            // predictor
            let mut ds = vec![T::zero(); p];
            for (cone, r) in self.blocks.iter() {
                circ(cone, &lambda[r.clone()], &lambda[r.clone()], &mut ds[r.clone()]);
                ds[r].iter_mut().for_each(|v| *v = -*v);
            }
            let dkappa = -self.tau * self.kappa;
            let aff = self.direction(&scalings, &lambda, &rx, &rz, rtau, T::one(), &ds, dkappa, &x1, &z1, denom_base);
            let alpha_aff = self.max_step(&aff, T::one());
            let sigma = (T::one() - alpha_aff).powi(3).max(T::zero()).min(T::one());

            // corrector
            let mut ws = vec![T::zero(); p];
            let mut wz = vec![T::zero(); p];
            let mut cross = vec![T::zero(); p];
            for ((cone, r), w) in self.blocks.iter().zip(&scalings) {
                if matches!(cone, Cone::Zero(_)) {
                    continue;
                }
                w.mul_winv(&aff.s[r.clone()], &mut ws[r.clone()]);
                w.mul_w(&aff.z[r.clone()], &mut wz[r.clone()]);
                circ(cone, &ws[r.clone()], &wz[r.clone()], &mut cross[r.clone()]);
                for k in r.clone() {
                    ds[k] -= cross[k];
                }
                add_identity(cone, &mut ds[r], sigma * mu);
            }
            let dkappa = -self.tau * self.kappa - aff.tau * aff.kappa + sigma * mu;
            let dir = self.direction(
                &scalings,
                &lambda,
                &rx,
                &rz,
                rtau,
                T::one() - sigma,
                &ds,
                dkappa,
                &x1,
                &z1,
                denom_base,
            );
            let alpha_max = self.max_step(&dir, T::one() / self.set.step_fraction);
            let alpha = (self.set.step_fraction * alpha_max).min(T::one());
            if !alpha.is_finite() || dir.x.iter().chain(&dir.z).chain(&dir.s).any(|v| !v.is_finite()) {
                return self.finish(SolveStatus::NumericalFailure, iter, log, "non-finite direction".into());
            }
            if alpha < T::lit(1e-10) {
                small_steps += 1;
                if small_steps >= 3 {
                    return self.finish(SolveStatus::NumericalFailure, iter, log, "step length stalled".into());
                }
            } else {
                small_steps = 0;
            }
            for (v, d) in self.x.iter_mut().zip(&dir.x) {
                *v += alpha * *d;
            }
            for (v, d) in self.s.iter_mut().zip(&dir.s) {
                *v += alpha * *d;
            }
            for (v, d) in self.z.iter_mut().zip(&dir.z) {
                *v += alpha * *d;
            }
            self.tau += alpha * dir.tau;
            self.kappa += alpha * dir.kappa;
            last_step = alpha;
        }
        unreachable!("loop returns on the final iteration")
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &mut self,
        scalings: &[Scaling<T>],
        lambda: &[T],
        rx: &[T],
        rz: &[T],
        rtau: T,
        eta: T,
        ds: &[T],
        dkappa: T,
        x1: &[T],
        z1: &[T],
        denom_base: T,
    ) -> Direction<T> {
        let (n, p) = (self.n, self.p);
        let mut tmp = vec![T::zero(); p];
        let mut wtmp = vec![T::zero(); p];
        for ((cone, r), w) in self.blocks.iter().zip(scalings) {
            if matches!(cone, Cone::Zero(_)) {
                continue;
            }
            inv_circ(cone, &lambda[r.clone()], &ds[r.clone()], &mut tmp[r.clone()]);
            w.mul_w(&tmp[r.clone()], &mut wtmp[r]);
        }
        let rhs_x: Vec<T> = rx.iter().map(|&v| -eta * v).collect();
        let rhs_z: Vec<T> = rz.iter().zip(&wtmp).map(|(&v, &w)| -eta * v - w).collect();
        let mut x2 = vec![T::zero(); n];
        let mut z2 = vec![T::zero(); p];
        self.kkt.solve(&rhs_x, &rhs_z, &mut x2, &mut z2);
        let c = &self.prog.objective;
        let b = &self.prog.b_eq;
        let dtau = (-eta * rtau - dot(c, &x2) - dot(b, &z2) - dkappa / self.tau)
            / (denom_base - self.kappa / self.tau);
        let dx: Vec<T> = x2.iter().zip(x1).map(|(&a, &b)| a + dtau * b).collect();
        let dz: Vec<T> = z2.iter().zip(z1).map(|(&a, &b)| a + dtau * b).collect();
        let mut dsv = vec![T::zero(); p];
        for ((cone, r), w) in self.blocks.iter().zip(scalings) {
            if matches!(cone, Cone::Zero(_)) {
                continue;
            }
            w.mul_h(&dz[r.clone()], &mut tmp[r.clone()]);
            for k in r {
                dsv[k] = wtmp[k] - tmp[k];
            }
        }
        let dk = (dkappa - self.kappa * dtau) / self.tau;
        Direction {
            x: dx,
            s: dsv,
            z: dz,
            tau: dtau,
            kappa: dk,
        }
    }

    fn max_step(&self, d: &Direction<T>, amax: T) -> T {
        let mut a = amax;
        for (cone, r) in self.blocks.iter() {
            a = a.min(step_length(cone, &self.s[r.clone()], &d.s[r.clone()], a));
            a = a.min(step_length(cone, &self.z[r.clone()], &d.z[r], a));
        }
        if d.tau < T::zero() {
            a = a.min(-self.tau / d.tau);
        }
        if d.kappa < T::zero() {
            a = a.min(-self.kappa / d.kappa);
        }
        a.max(T::zero())
    }

    fn finish(
        &self,
        status: SolveStatus,
        iterations: usize,
        log: Vec<IterationRecord<T>>,
        message: String,
    ) -> ConicSolution<T> {
        let last = log.last().copied();
        let scale = match status {
            SolveStatus::InfeasibleDetected(_) => T::one(),
            _ => T::one() / self.tau,
        };
        let primal: Vec<T> = self.x.iter().map(|&v| v * scale).collect();
        let dual: Vec<T> = self.z.iter().map(|&v| v * scale).collect();
        let slacks: Vec<T> = self.s.iter().map(|&v| v * scale).collect();
        let nan = T::nan();
        ConicSolution {
            primal,
            dual,
            slacks,
            status,
            primal_residual: last.map_or(nan, |r| r.primal_residual),
            dual_residual: last.map_or(nan, |r| r.dual_residual),
            duality_gap: last.map_or(nan, |r| r.gap),
            primal_objective: last.map_or(nan, |r| r.primal_objective),
            dual_objective: last.map_or(nan, |r| r.dual_objective),
            iterations,
            log,
            message,
        }
    }
}
