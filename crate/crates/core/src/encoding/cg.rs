use serde::{Deserialize, Serialize};

use crate::encoding::{adjoint_decode, normal_apply, CoilSensitivities, KSpaceData};
use crate::error::{Error, Result};
use crate::numerics::ComplexImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    /// Ridge weight in `½‖MFSx − y‖² + λ‖x‖²`.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once `‖b − Qx‖ ≤ tol · ‖b‖`.
    pub tol: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            max_iters: 50,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgResult {
    pub image: ComplexImage,
    pub iterations: usize,
    pub converged: bool,
    /// Relative normal-equation residual after each iteration (entry 0 is the start).
    pub residuals: Vec<f64>,
    /// Objective value after each iteration (entry 0 is the start).
    pub objective: Vec<f64>,
}

/// Ridge-regularized SENSE by conjugate gradients on
/// `(A^H A + 2λ I) x = A^H y`, starting from zero.
pub fn cg_sense(y: &KSpaceData, s: &CoilSensitivities, cfg: &CgConfig) -> Result<CgResult> {
    if !(cfg.lambda >= 0.0) {
        return Err(Error::Config(format!(
            "lambda must be ≥ 0, got {}",
            cfg.lambda
        )));
    }
    let m = &y.mask;
    let b = adjoint_decode(y, s)?;
    let y_energy: f64 = y.coils.iter().map(|k| k.norm_sqr()).sum();
    let b_norm = b.norm();
    let q = |v: &ComplexImage| -> Result<ComplexImage> {
        let mut out = normal_apply(v, s, m)?;
        out.add_assign(&v.scaled(2.0 * cfg.lambda))?;
        Ok(out)
    };
    let objective = |x: &ComplexImage, r: &ComplexImage| -> Result<f64> {
        Ok(-0.5 * x.inner(&b)?.0 - 0.5 * x.inner(r)?.0 + 0.5 * y_energy)
    };

    let mut x = ComplexImage::zeros(b.height, b.width);
    if b_norm == 0.0 {
        return Ok(CgResult {
            image: x,
            iterations: 0,
            converged: true,
            residuals: vec![0.0],
            objective: vec![0.5 * y_energy],
        });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.norm_sqr();
    let mut residuals = vec![1.0];
    let mut objectives = vec![objective(&x, &r)?];
    let mut best = (objectives[0], x.clone());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        if rs.sqrt() <= cfg.tol * b_norm {
            converged = true;
            break;
        }
        let qp = q(&p)?;
        let curvature = p.inner(&qp)?.0;
        if curvature <= 0.0 {
            break;
        }
        let alpha = rs / curvature;
        x.add_assign(&p.scaled(alpha))?;
        r.add_assign(&qp.scaled(-alpha))?;
        let rs_new = r.norm_sqr();
        let mut next = r.clone();
        next.add_assign(&p.scaled(rs_new / rs))?;
        p = next;
        rs = rs_new;
        iterations += 1;
        residuals.push(rs.sqrt() / b_norm);
        let f = objective(&x, &r)?;
        objectives.push(f);
        if f <= best.0 {
            best = (f, x.clone());
        }
    }
    if !converged && rs.sqrt() <= cfg.tol * b_norm {
        converged = true;
    }
    Ok(CgResult {
        image: best.1,
        iterations,
        converged,
        residuals,
        objective: objectives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{forward_encode, make_mask, SamplingMask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| {
            (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn maps(c: usize, n: usize, seed: u64) -> CoilSensitivities {
        CoilSensitivities::normalized(
            (0..c)
                .map(|i| random_image(n, n, seed + i as u64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn full_sampling_exact_recovery() {
        let x = random_image(16, 16, 1);
        let s = maps(3, 16, 2);
        let y = forward_encode(&x, &s, &SamplingMask::full(16, 16), 0.0, 0).unwrap();
        let res = cg_sense(
            &y,
            &s,
            &CgConfig {
                lambda: 0.0,
                max_iters: 20,
                tol: 1e-14,
            },
        )
        .unwrap();
        assert!(res.image.max_abs_diff(&x) <= 1e-8);
    }

    #[test]
    fn strong_ridge_shrinks_to_zero() {
        let x = random_image(16, 16, 3);
        let s = maps(2, 16, 4);
        let m = make_mask(16, 16, 2.0, 4, 1).unwrap();
        let y = forward_encode(&x, &s, &m, 0.0, 0).unwrap();
        let weak = cg_sense(
            &y,
            &s,
            &CgConfig {
                lambda: 1e-3,
                max_iters: 50,
                tol: 1e-10,
            },
        )
        .unwrap();
        let strong = cg_sense(
            &y,
            &s,
            &CgConfig {
                lambda: 1e6,
                max_iters: 50,
                tol: 1e-10,
            },
        )
        .unwrap();
        assert!(strong.image.norm() < 1e-5 * weak.image.norm());
    }

    #[test]
    fn objective_never_increases() {
        let x = random_image(16, 16, 5);
        let s = maps(4, 16, 6);
        let m = make_mask(16, 16, 4.0, 2, 2).unwrap();
        let y = forward_encode(&x, &s, &m, 0.01, 3).unwrap();
        let res = cg_sense(
            &y,
            &s,
            &CgConfig {
                lambda: 1e-2,
                max_iters: 30,
                tol: 1e-12,
            },
        )
        .unwrap();
        for pair in res.objective.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs());
        }
        assert_eq!(res.objective.len(), res.iterations + 1);
    }

    #[test]
    fn negative_lambda_rejected() {
        let s = maps(1, 8, 0);
        let y = forward_encode(
            &random_image(8, 8, 0),
            &s,
            &SamplingMask::full(8, 8),
            0.0,
            0,
        )
        .unwrap();
        assert!(cg_sense(
            &y,
            &s,
            &CgConfig {
                lambda: -1.0,
                max_iters: 1,
                tol: 0.0
            }
        )
        .is_err());
    }

    /// Explicit encoding matrix from the centered DFT kernel, normal equations
    /// solved by complex Gaussian elimination.
    #[test]
    fn matches_dense_least_squares() {
        use num_complex::Complex64 as C;
        let n = 16;
        let lambda = 1e-3;
        let x = random_image(n, n, 7);
        let s = maps(2, n, 8);
        let m = make_mask(n, n, 2.0, 4, 3).unwrap();
        let y = forward_encode(&x, &s, &m, 0.01, 4).unwrap();
        let np = n * n;
        let kernel = |k: usize, p: usize| {
            let a =
                std::f64::consts::TAU * (k as f64 - n as f64 / 2.0) * (p as f64 - n as f64 / 2.0)
                    / n as f64;
            C::from_polar(1.0, -a)
        };
        let mut rows: Vec<Vec<C>> = Vec::new();
        let mut rhs: Vec<C> = Vec::new();
        for (c, map) in s.maps.iter().enumerate() {
            for (u, _) in m.rows.iter().enumerate().filter(|(_, on)| **on) {
                for v in 0..n {
                    let row = (0..np)
                        .map(|p| {
                            let sc = C::new(map.re.data()[p], map.im.data()[p]);
                            kernel(u, p / n) * kernel(v, p % n) * sc / n as f64
                        })
                        .collect();
                    rows.push(row);
                    rhs.push(C::new(
                        y.coils[c].re.data()[u * n + v],
                        y.coils[c].im.data()[u * n + v],
                    ));
                }
            }
        }
        let mut a = vec![vec![C::new(0.0, 0.0); np + 1]; np];
        for (row, &yv) in rows.iter().zip(&rhs) {
            for i in 0..np {
                let ci = row[i].conj();
                for j in 0..np {
                    a[i][j] += ci * row[j];
                }
                a[i][np] += ci * yv;
            }
        }
        for (i, r) in a.iter_mut().enumerate() {
            r[i] += 2.0 * lambda;
        }
        for col in 0..np {
            let piv = (col..np)
                .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
                .unwrap();
            a.swap(col, piv);
            let pivot = a[col].clone();
            for r in a.iter_mut().skip(col + 1) {
                let f = r[col] / pivot[col];
                for j in col..=np {
                    r[j] -= f * pivot[j];
                }
            }
        }
        let mut sol = vec![C::new(0.0, 0.0); np];
        for i in (0..np).rev() {
            let acc: C = (i + 1..np).map(|j| a[i][j] * sol[j]).sum();
            sol[i] = (a[i][np] - acc) / a[i][i];
        }
        let res = cg_sense(
            &y,
            &s,
            &CgConfig {
                lambda,
                max_iters: 400,
                tol: 1e-13,
            },
        )
        .unwrap();
        let err = (0..np)
            .map(|p| (C::new(res.image.re.data()[p], res.image.im.data()[p]) - sol[p]).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "max deviation {err}");
    }
}
