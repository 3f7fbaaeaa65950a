//! Global multi-port closure, solved without exploiting any structure.
//!
//! This is the reference path the cascade is checked against. It factors
//! `I − S_SS Γ` with a partially pivoted LU, gates the result on a 1-norm
//! condition estimate and never forms an explicit inverse. Its cost is
//! `O(N³)` in the number of SIM ports.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::linalg::{self, count_macs, CMat, ONE, ZERO};
use crate::model::{GlobalScattering, SimTopology};

/// Relative residual allowed on the fixed-point equation for `b_S`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Absolute threshold under which a matrix power counts as zero.
pub const NILPOTENCY_TOL: f64 = 1e-12;
/// Largest 1-norm condition estimate accepted for `I − S_SS Γ`.
pub const MAX_CONDITION: f64 = 1e12;

/// Incident and reflected waves at every port for one excitation matrix.
/// `a_R` is identically zero (matched receiver) and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub a_t: CMat,
    pub a_s: CMat,
    pub b_s: CMat,
    pub b_r: CMat,
}

/// `P A = L U` with unit-diagonal `L` stored below the diagonal.
struct LuFactors {
    lu: CMat,
    /// `perm[i]` is the row of `A` that ended up in row `i`.
    perm: Vec<usize>,
}

impl LuFactors {
    fn factor(a: &CMat) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for j in 0..n {
            let (p, pmax) = (j..n)
                .map(|i| (i, lu[(i, j)].norm()))
                .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(SimError::Numerical(format!("singular system: zero pivot in column {j}")));
            }
            if p != j {
                lu.swap_rows(p, j);
                perm.swap(p, j);
            }
            let inv = ONE / lu[(j, j)];
            for i in j + 1..n {
                lu[(i, j)] *= inv;
            }
            count_macs(n - j - 1);
            for c in j + 1..n {
                let u = lu[(j, c)];
                for i in j + 1..n {
                    let l = lu[(i, j)];
                    lu[(i, c)] -= l * u;
                }
            }
            count_macs((n - j - 1) * (n - j - 1));
        }
        Ok(Self { lu, perm })
    }

    fn n(&self) -> usize {
        self.lu.nrows()
    }

    /// Solves `A X = B`.
    fn solve(&self, b: &CMat) -> CMat {
        let n = self.n();
        let mut x = CMat::from_fn(n, b.ncols(), |i, c| b[(self.perm[i], c)]);
        for mut col in x.column_iter_mut() {
            for j in 0..n {
                let v = col[j];
                for i in j + 1..n {
                    col[i] -= self.lu[(i, j)] * v;
                }
            }
            for j in (0..n).rev() {
                col[j] /= self.lu[(j, j)];
                let v = col[j];
                for i in 0..j {
                    col[i] -= self.lu[(i, j)] * v;
                }
            }
        }
        count_macs(n * n * b.ncols());
        x
    }

    /// Solves `Aᴴ X = B`, using `Aᴴ = Uᴴ Lᴴ P`.
    fn solve_adjoint(&self, b: &CMat) -> CMat {
        let n = self.n();
        let mut z = b.clone();
        for mut col in z.column_iter_mut() {
            // Uᴴ is lower triangular
            for i in 0..n {
                let mut s = col[i];
                for j in 0..i {
                    s -= self.lu[(j, i)].conj() * col[j];
                }
                col[i] = s / self.lu[(i, i)].conj();
            }
            // Lᴴ is unit upper triangular
            for i in (0..n).rev() {
                let mut s = col[i];
                for j in i + 1..n {
                    s -= self.lu[(j, i)].conj() * col[j];
                }
                col[i] = s;
            }
        }
        count_macs(n * n * b.ncols());
        let mut x = CMat::zeros(n, b.ncols());
        for i in 0..n {
            x.set_row(self.perm[i], &z.row(i));
        }
        x
    }

    /// Hager–Higham estimate of `‖A⁻¹‖₁`.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n();
        let mut x = CMat::from_element(n, 1, Complex64::new(1.0 / n as f64, 0.0));
        let mut est = 0.0_f64;
        for iter in 0..5 {
            let y = self.solve(&x);
            let new_est: f64 = y.iter().map(|z| z.norm()).sum();
            if iter > 0 && new_est <= est {
                break;
            }
            est = new_est;
            let xi = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { ONE });
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let zx: f64 = z.iter().zip(x.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            if iter > 0 && zmax <= zx {
                break;
            }
            x.fill(ZERO);
            x[(j, 0)] = ONE;
        }
        let alt = CMat::from_fn(n, 1, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let ramp = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            Complex64::new(sign * (1.0 + ramp), 0.0)
        });
        let alt_est = 2.0 * self.solve(&alt).iter().map(|z| z.norm()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

fn norm1(a: &CMat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_square(name: &str, m: &CMat, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(SimError::arg(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Factored `I − S_SS Γ` together with `S_SS Γ` itself.
struct ClosedLoop {
    loop_gain: CMat,
    lu: LuFactors,
}

impl ClosedLoop {
    fn new(s_ss: &CMat, gamma: &CMat) -> Result<Self> {
        let n = s_ss.nrows();
        check_square("S_SS", s_ss, n)?;
        check_square("Γ", gamma, n)?;
        let loop_gain = linalg::matmul(s_ss, gamma);
        let system = CMat::identity(n, n) - &loop_gain;
        if !linalg::is_finite(&system) {
            return Err(SimError::Numerical("non-finite entries in I − S_SS Γ".into()));
        }
        let lu = LuFactors::factor(&system)?;
        let cond = norm1(&system) * lu.inverse_norm1_estimate();
        if !(cond <= MAX_CONDITION) {
            return Err(SimError::Numerical(format!(
                "I − S_SS Γ is ill-conditioned (condition estimate {cond:.3e})"
            )));
        }
        Ok(Self { loop_gain, lu })
    }

    /// `[I − S_SS Γ]⁻¹ rhs`, checked against the fixed-point equation.
    fn solve(&self, rhs: &CMat) -> Result<CMat> {
        let b = self.lu.solve(rhs);
        let residual = (&b - rhs - linalg::matmul(&self.loop_gain, &b)).norm();
        let scale = b.norm().max(rhs.norm());
        if !(residual <= RESIDUAL_TOL * scale) {
            return Err(SimError::Numerical(format!(
                "fixed-point residual {residual:.3e} exceeds tolerance (scale {scale:.3e})"
            )));
        }
        Ok(b)
    }
}

/// Reflected waves `b_S = [I − S_SS Γ]⁻¹ S_ST a_T` at the SIM ports. `a_t`
/// may hold several excitations as columns.
pub fn solve_sim_waves(s: &GlobalScattering, gamma: &CMat, a_t: &CMat) -> Result<CMat> {
    if a_t.nrows() != s.s_st.ncols() {
        return Err(SimError::arg("excitation length does not match transmitter ports"));
    }
    let closed = ClosedLoop::new(&s.s_ss, gamma)?;
    closed.solve(&linalg::matmul(&s.s_st, a_t))
}

/// All port waves for the given excitations.
pub fn solve_waves(s: &GlobalScattering, gamma: &CMat, a_t: &CMat) -> Result<WaveState> {
    let b_s = solve_sim_waves(s, gamma, a_t)?;
    let a_s = linalg::matmul(gamma, &b_s);
    let b_r = linalg::matmul(&s.s_rt, a_t) + linalg::matmul(&s.s_rs, &a_s);
    Ok(WaveState {
        a_t: a_t.clone(),
        a_s,
        b_s,
        b_r,
    })
}

/// Internal propagation operator `T_S = Γ [I − S_SS Γ]⁻¹`, obtained from the
/// adjoint system `(I − S_SS Γ)ᴴ T_Sᴴ = Γᴴ`.
pub fn internal_operator(s_ss: &CMat, gamma: &CMat) -> Result<CMat> {
    let closed = ClosedLoop::new(s_ss, gamma)?;
    Ok(closed.lu.solve_adjoint(&gamma.adjoint()).adjoint())
}

/// End-to-end transfer `S_RT + S_RS T_S S_ST`.
pub fn e2e_global(s: &GlobalScattering, gamma: &CMat) -> Result<CMat> {
    let closed = ClosedLoop::new(&s.s_ss, gamma)?;
    let b_s = closed.solve(&s.s_st)?;
    let a_s = linalg::matmul(gamma, &b_s);
    Ok(&s.s_rt + linalg::matmul(&s.s_rs, &a_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nilpotency {
    /// Smallest `m` with `(S_SS Γ)^m = 0`.
    Index(usize),
    NotNilpotent,
}

/// Smallest power of `S_SS Γ` whose entries all fall below
/// [`NILPOTENCY_TOL`], searched up to `N`.
pub fn nilpotency_check(s_ss: &CMat, gamma: &CMat, topo: &SimTopology) -> Result<Nilpotency> {
    let n = topo.sim_ports();
    check_square("S_SS", s_ss, n)?;
    check_square("Γ", gamma, n)?;
    let p = linalg::matmul(s_ss, gamma);
    let mut power = p.clone();
    for m in 1..=n {
        if linalg::max_abs(&power) <= NILPOTENCY_TOL {
            return Ok(Nilpotency::Index(m));
        }
        if m < n {
            power = linalg::matmul(&power, &p);
        }
    }
    Ok(Nilpotency::NotNilpotent)
}

/// `max |(S_SS Γ)^p|`, the quantity bounded by the nilpotency tolerance.
pub fn loop_power_max_abs(s_ss: &CMat, gamma: &CMat, p: usize) -> f64 {
    let base = s_ss * gamma;
    let mut acc = CMat::identity(base.nrows(), base.ncols());
    for _ in 0..p {
        acc = &acc * &base;
    }
    linalg::max_abs(&acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_gamma, ControlVector, ScatteringBlocks};
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn instance(q: usize, k: usize, l: usize, m: usize, seed: u64) -> (GlobalScattering, CMat, SimTopology) {
        let t = SimTopology::new(q, k, l, m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = synthetic::random_blocks(&t, true, &mut rng);
        let ctrl = synthetic::random_control(&t, 1.3, &mut rng);
        (GlobalScattering::assemble(&b).unwrap(), assemble_gamma(&ctrl, &t).unwrap(), t)
    }

    #[test]
    fn lu_solves_dense_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = synthetic::complex_gaussian(7, 7, 1.0, &mut rng) + CMat::identity(7, 7) * c(3.0, 0.0);
        let b = synthetic::complex_gaussian(7, 2, 1.0, &mut rng);
        let lu = LuFactors::factor(&a).unwrap();
        assert!((&a * lu.solve(&b) - &b).norm() < 1e-12);
        assert!((a.adjoint() * lu.solve_adjoint(&b) - &b).norm() < 1e-12);
    }

    #[test]
    fn condition_estimate_is_close_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = synthetic::complex_gaussian(6, 6, 1.0, &mut rng);
        let lu = LuFactors::factor(&a).unwrap();
        let exact = norm1(&a.clone().try_inverse().unwrap());
        let est = lu.inverse_norm1_estimate();
        assert!(est <= exact * (1.0 + 1e-10));
        assert!(est >= exact / 10.0, "estimate {est} too far below {exact}");
    }

    #[test]
    fn singular_system_is_a_numerical_error() {
        // S_SS Γ = I makes I − S_SS Γ identically zero.
        let i2 = CMat::identity(2, 2);
        assert!(matches!(ClosedLoop::new(&i2, &i2), Err(SimError::Numerical(_))));
    }

    #[test]
    fn ill_conditioned_system_is_rejected() {
        let mut p = CMat::identity(2, 2);
        p[(0, 0)] = c(1.0 - 1e-14, 0.0);
        assert!(matches!(ClosedLoop::new(&p, &CMat::identity(2, 2)), Err(SimError::Numerical(_))));
    }

    #[test]
    fn zero_gamma_passes_source_through() {
        let (s, gamma, t) = instance(3, 2, 2, 2, 4);
        let zero = CMat::zeros(gamma.nrows(), gamma.ncols());
        let a = CMat::from_fn(2, 1, |i, _| c(1.0 + i as f64, -0.5));
        let b = solve_sim_waves(&s, &zero, &a).unwrap();
        assert!((b - &s.s_st * &a).norm() < 1e-15);
        assert_eq!(internal_operator(&s.s_ss, &zero).unwrap(), CMat::zeros(t.sim_ports(), t.sim_ports()));
        assert_eq!(e2e_global(&s, &zero).unwrap(), s.s_rt);
    }

    #[test]
    fn zero_coupling_passes_source_through() {
        let (mut s, gamma, _) = instance(2, 3, 2, 2, 5);
        s.s_ss.fill(ZERO);
        let a = CMat::from_element(2, 1, c(0.3, 0.1));
        assert!((solve_sim_waves(&s, &gamma, &a).unwrap() - &s.s_st * &a).norm() < 1e-15);
        assert!((internal_operator(&s.s_ss, &gamma).unwrap() - &gamma).norm() < 1e-15);
    }

    #[test]
    fn waves_match_truncated_neumann_sum() {
        let (s, gamma, t) = instance(3, 2, 2, 2, 6);
        let a = CMat::from_fn(2, 1, |i, _| c(0.7, i as f64));
        let b = solve_sim_waves(&s, &gamma, &a).unwrap();
        let p = &s.s_ss * &gamma;
        let mut term = &s.s_st * &a;
        let mut sum = term.clone();
        for _ in 0..t.layers {
            term = &p * term;
            sum += &term;
        }
        assert!((b - sum).norm() <= 1e-12);
    }

    #[test]
    fn waves_satisfy_fixed_point() {
        let (s, gamma, _) = instance(4, 3, 2, 3, 7);
        let a = CMat::from_element(2, 3, c(1.0, 1.0));
        let w = solve_waves(&s, &gamma, &a).unwrap();
        let res = &w.b_s - &s.s_st * &a - &s.s_ss * &w.a_s;
        assert!(res.norm() <= RESIDUAL_TOL * w.b_s.norm());
        assert!((&w.b_r - e2e_global(&s, &gamma).unwrap() * &a).norm() < 1e-12);
    }

    #[test]
    fn scalar_chain_internal_operator() {
        // Single port pair: Γ = [[0,0],[γ,0]], S_SS = [[s11, s12],[s21, s22]].
        let g = c(0.8, 0.6);
        let (s11, s12, s21, s22) = (c(0.2, 0.1), c(0.3, -0.2), c(-0.1, 0.4), c(0.05, 0.0));
        let gamma = CMat::from_row_slice(2, 2, &[ZERO, ZERO, g, ZERO]);
        let sss = CMat::from_row_slice(2, 2, &[s11, s12, s21, s22]);
        // I − S Γ = [[1 − s12 γ, 0], [−s22 γ, 1]] so
        // Γ (I − S Γ)⁻¹ = [[0, 0], [γ / (1 − s12 γ), 0]].
        let ts = internal_operator(&sss, &gamma).unwrap();
        let expected = g / (ONE - s12 * g);
        assert!((ts[(1, 0)] - expected).norm() < 1e-15);
        assert!(ts[(0, 0)].norm() + ts[(0, 1)].norm() + ts[(1, 1)].norm() < 1e-15);
    }

    #[test]
    fn scalar_e2e_is_cell_gain() {
        let t = SimTopology::new(1, 1, 1, 1).unwrap();
        let one = CMat::from_element(1, 1, ONE);
        let b = ScatteringBlocks::new(t, vec![], one.clone(), one).unwrap();
        let ctrl = ControlVector::new(vec![0.9], 1.5).unwrap();
        let s = GlobalScattering::assemble(&b).unwrap();
        let h = e2e_global(&s, &assemble_gamma(&ctrl, &t).unwrap()).unwrap();
        assert!((h[(0, 0)] - Complex64::from_polar(1.5, 0.9)).norm() < 1e-15);
    }

    #[test]
    fn nilpotency_examples() {
        let (s, gamma, t) = instance(2, 1, 1, 1, 8);
        let zero = CMat::zeros(gamma.nrows(), gamma.ncols());
        assert_eq!(nilpotency_check(&s.s_ss, &zero, &t).unwrap(), Nilpotency::Index(1));
        match nilpotency_check(&s.s_ss, &gamma, &t).unwrap() {
            Nilpotency::Index(m) => assert!(m <= 3),
            other => panic!("expected nilpotent, got {other:?}"),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dense = synthetic::complex_gaussian(4, 4, 1.0, &mut rng);
        assert_eq!(nilpotency_check(&dense, &gamma, &t).unwrap(), Nilpotency::NotNilpotent);
    }

    #[test]
    fn structured_loop_power_vanishes() {
        for (q, k, seed) in [(1, 3, 1), (3, 4, 2), (5, 8, 3)] {
            let (s, gamma, t) = instance(q, k, 2, 2, seed);
            assert!(loop_power_max_abs(&s.s_ss, &gamma, t.layers + 1) <= NILPOTENCY_TOL);
        }
    }
}
