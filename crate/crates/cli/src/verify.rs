//! Self-checks of one instance: global solver consistency, nilpotency, the
//! cascade against the global solver, the analytic gradient and `β*`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simcascade::model::assemble_gamma;
use simcascade::network::{self, Nilpotency, NILPOTENCY_TOL, RESIDUAL_TOL};
use simcascade::optimizer::{beta_star, gradient, loss, output_matrix, TrainingSet};
use simcascade::{cascade, linalg, Complex64, ControlVector, GlobalScattering, ScatteringBlocks, SimError};

pub const EQUIVALENCE_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-6;
const BETA_PROBE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Inapplicable,
    /// Reported without a verdict.
    Info,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inapplicable => "INAPPLICABLE",
            Status::Info => "INFO",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub max_error: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: Status,
    pub note: String,
}

impl Check {
    fn measured(name: &'static str, err: f64, tol: f64, note: impl Into<String>) -> Self {
        Self {
            name,
            max_error: Some(err),
            tolerance: Some(tol),
            status: if err <= tol { Status::Pass } else { Status::Fail },
            note: note.into(),
        }
    }

    fn flagged(name: &'static str, status: Status, note: impl Into<String>) -> Self {
        Self {
            name,
            max_error: None,
            tolerance: None,
            status,
            note: note.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<13} {:<28}", self.status.to_string(), self.name)?;
        if let Some(e) = self.max_error {
            write!(f, " max_err={e:.3e}")?;
        }
        if let Some(t) = self.tolerance {
            write!(f, " tol={t:.0e}")?;
        }
        if !self.note.is_empty() {
            write!(f, "  {}", self.note)?;
        }
        Ok(())
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.status != Status::Fail)
}

fn error_check(name: &'static str, e: SimError) -> Check {
    Check::flagged(name, Status::Fail, e.to_string())
}

fn oracle_consistency(g: &GlobalScattering, gamma: &simcascade::CMat) -> Check {
    const NAME: &str = "global solver residual";
    let l = g.s_st.ncols();
    match network::solve_waves(g, gamma, &simcascade::CMat::identity(l, l)) {
        Err(e) => error_check(NAME, e),
        Ok(w) => {
            let lhs = &w.b_s - &g.s_ss * &w.a_s;
            let note = if linalg::max_abs(gamma) == 0.0 { "Γ = 0: e2e = S_RT" } else { "" };
            Check::measured(NAME, linalg::rel_fro_err(&lhs, &g.s_st), RESIDUAL_TOL, note)
        }
    }
}

fn nilpotency(blocks: &ScatteringBlocks, g: &GlobalScattering, gamma: &simcascade::CMat) -> Check {
    const NAME: &str = "nilpotency of S_SS Γ";
    let q = blocks.topology.layers;
    let verdict = match network::nilpotency_check(&g.s_ss, gamma, &blocks.topology) {
        Ok(v) => v,
        Err(e) => return error_check(NAME, e),
    };
    let power = network::loop_power_max_abs(&g.s_ss, gamma, q + 1);
    match (blocks.is_feed_forward(), verdict) {
        (true, Nilpotency::Index(m)) => {
            Check::measured(NAME, power, NILPOTENCY_TOL, format!("index {m} <= Q+1 = {}", q + 1))
        }
        (true, Nilpotency::NotNilpotent) => Check::measured(NAME, power, NILPOTENCY_TOL, "not nilpotent"),
        (false, Nilpotency::NotNilpotent) => Check::flagged(
            NAME,
            Status::Info,
            format!("not nilpotent (coupling beyond adjacent arrays), |(S_SS Γ)^(Q+1)| = {power:.3e}"),
        ),
        (false, Nilpotency::Index(m)) => Check::flagged(NAME, Status::Info, format!("index {m} despite extra coupling")),
    }
}

const NOT_FEED_FORWARD: &str = "coupling beyond adjacent arrays";

fn equivalence(blocks: &ScatteringBlocks, ctrl: &ControlVector, g: &GlobalScattering, gamma: &simcascade::CMat) -> Check {
    const NAME: &str = "cascade vs global solver";
    if !blocks.is_feed_forward() {
        return Check::flagged(NAME, Status::Inapplicable, NOT_FEED_FORWARD);
    }
    let global = match network::e2e_global(g, gamma) {
        Ok(h) => h,
        Err(e) => return error_check(NAME, e),
    };
    match cascade::e2e_structured(blocks, ctrl) {
        Ok(h) => Check::measured(NAME, linalg::rel_fro_err(&(h + &blocks.s_rt), &global), EQUIVALENCE_TOL, ""),
        Err(e) => error_check(NAME, e),
    }
}

fn gradient_check(blocks: &ScatteringBlocks, ctrl: &ControlVector, training: &TrainingSet, beta: Complex64) -> Check {
    const NAME: &str = "gradient vs central diff";
    if !blocks.is_feed_forward() {
        return Check::flagged(NAME, Status::Inapplicable, NOT_FEED_FORWARD);
    }
    let analytic = match gradient(blocks, ctrl, training, beta) {
        Ok(g) => g,
        Err(e) => return error_check(NAME, e),
    };
    let mut worst = 0.0f64;
    for (p, a) in analytic.iter().enumerate() {
        let mut plus = ctrl.clone();
        plus.phases[p] += FD_STEP;
        let mut minus = ctrl.clone();
        minus.phases[p] -= FD_STEP;
        let fd = match (loss(blocks, &plus, training, beta), loss(blocks, &minus, training, beta)) {
            (Ok(lp), Ok(lm)) => (lp - lm) / (2.0 * FD_STEP),
            (Err(e), _) | (_, Err(e)) => return error_check(NAME, e),
        };
        let rel = if *a == fd { 0.0 } else { (a - fd).abs() / fd.abs() };
        worst = worst.max(rel);
    }
    Check::measured(NAME, worst, GRADIENT_TOL, format!("{} components, fixed β", analytic.len()))
}

fn beta_check(blocks: &ScatteringBlocks, ctrl: &ControlVector, training: &TrainingSet) -> Check {
    const NAME: &str = "β* optimality";
    if !blocks.is_feed_forward() {
        return Check::flagged(NAME, Status::Inapplicable, NOT_FEED_FORWARD);
    }
    let xhat = match output_matrix(blocks, ctrl, &training.excitations) {
        Ok(x) => x,
        Err(e) => return error_check(NAME, e),
    };
    let beta = match beta_star(&xhat, &training.target) {
        Ok(b) => b,
        Err(SimError::DegenerateOutput) => return Check::measured(NAME, 0.0, 0.0, "zero output, β arbitrary"),
        Err(e) => return error_check(NAME, e),
    };
    let energy = |b: Complex64| linalg::fro_sq(&(&xhat * b - &training.target));
    let base = energy(beta);
    let h = BETA_PROBE * beta.norm().max(f64::MIN_POSITIVE);
    let worst = [Complex64::new(h, 0.0), Complex64::new(-h, 0.0), Complex64::new(0.0, h), Complex64::new(0.0, -h)]
        .into_iter()
        .map(|d| (base - energy(beta + d)).max(0.0))
        .fold(0.0, f64::max);
    Check::measured(NAME, worst, 0.0, "largest loss decrease over ±1e-4|β*| probes")
}

/// Runs every check on `blocks` at the phases `ctrl`. `seed` picks the fixed
/// `β` of the gradient check.
pub fn verify_instance(blocks: &ScatteringBlocks, ctrl: &ControlVector, training: &TrainingSet, seed: u64) -> Vec<Check> {
    let topo = &blocks.topology;
    let (g, gamma) = match GlobalScattering::assemble(blocks).and_then(|g| Ok((g, assemble_gamma(ctrl, topo)?))) {
        Ok(x) => x,
        Err(e) => return vec![error_check("assembly", e)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let beta = Complex64::new(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0));
    vec![
        oracle_consistency(&g, &gamma),
        nilpotency(blocks, &g, &gamma),
        equivalence(blocks, ctrl, &g, &gamma),
        gradient_check(blocks, ctrl, training, beta),
        beta_check(blocks, ctrl, training),
    ]
}

pub fn render(checks: &[Check]) -> String {
    let mut out: String = checks.iter().map(|c| format!("{c}\n")).collect();
    out.push_str(if all_passed(checks) { "overall: PASS\n" } else { "overall: FAIL\n" });
    out
}
