//! Straight-line FORMDA, FORMDA-NS and SGDA on a quadratic saddle over
//! boxes, written against the problem matrices and the RNG only. The solver
//! must reproduce these trajectories bit-for-bit, so the arithmetic below
//! follows the same evaluation order: per-sample sums in index order, batch
//! mean, then the `-rho y` shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::FeasibleSet;
use crate::oracle::{QuadraticSaddle, StochasticOracle};
use crate::schedules::ScheduleConfig;

/// `(x_k, y_k)`
pub type Point = (Vec<f64>, Vec<f64>);

fn box_bounds(set: &FeasibleSet) -> Result<(Vec<f64>, Vec<f64>)> {
    match set {
        FeasibleSet::Box { lower, upper } => Ok((lower.clone(), upper.clone())),
        _ => Err(Error::Unsupported("the transcription handles box constraints only".into())),
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Saddle<'a> {
    q: &'a QuadraticSaddle,
    dx: usize,
    dy: usize,
    xl: Vec<f64>,
    xu: Vec<f64>,
    yl: Vec<f64>,
    yu: Vec<f64>,
}

impl<'a> Saddle<'a> {
    fn new(q: &'a QuadraticSaddle) -> Result<Self> {
        let (xl, xu) = box_bounds(q.x_set())?;
        let (yl, yu) = box_bounds(q.y_set())?;
        Ok(Saddle { q, dx: xl.len(), dy: yl.len(), xl, xu, yl, yu })
    }

    fn draw(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut n = Vec::with_capacity(self.dx + self.dy);
            for _ in 0..self.dx + self.dy {
                let e: f64 = rng.sample(StandardNormal);
                n.push(e);
            }
            out.push(n);
        }
        out
    }

    /// Minibatch gradient of `g - rho/2 ||y||^2`; `rho = None` skips the shift.
    fn gradient(&self, noise: &[Vec<f64>], x: &[f64], y: &[f64], rho: Option<f64>) -> Point {
        let (a, b, c, s) = (self.q.a(), self.q.b(), self.q.c(), self.q.noise_std());
        let mut gx = vec![0.0; self.dx];
        let mut gy = vec![0.0; self.dy];
        for n in noise {
            for i in 0..self.dx {
                let mut ax = 0.0;
                for j in 0..self.dx {
                    ax += a[(i, j)] * x[j];
                }
                let mut by = 0.0;
                for j in 0..self.dy {
                    by += b[(i, j)] * y[j];
                }
                gx[i] += ax + by + s * n[i];
            }
            for i in 0..self.dy {
                let mut btx = 0.0;
                for j in 0..self.dx {
                    btx += b[(j, i)] * x[j];
                }
                let mut cy = 0.0;
                for j in 0..self.dy {
                    cy += c[(i, j)] * y[j];
                }
                gy[i] += btx - cy + s * n[self.dx + i];
            }
        }
        let m = noise.len() as f64;
        for v in gx.iter_mut().chain(gy.iter_mut()) {
            *v /= m;
        }
        if let Some(r) = rho {
            for i in 0..self.dy {
                gy[i] -= r * y[i];
            }
        }
        (gx, gy)
    }
}

/// FORMDA (`lambda = (0, 0)`) or FORMDA-NS with `lambda.0 ||x||_1` and
/// `lambda.1 ||y||_1`, theorem-mode schedule. Returns `z_1, ..., z_{steps+1}`.
pub fn formda(
    q: &QuadraticSaddle,
    schedule: &ScheduleConfig,
    lambda: (f64, f64),
    x1: &[f64],
    y1: &[f64],
    seed: u64,
    steps: u64,
) -> Result<Vec<Point>> {
    if schedule.manual.is_some() {
        return Err(Error::Unsupported("the transcription uses theorem-mode schedules".into()));
    }
    let p = Saddle::new(q)?;
    let (l, beta, b) = (schedule.lipschitz, schedule.beta, schedule.batch);
    let (a4, a5, a6) = (schedule.a4, schedule.a5, schedule.a6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x1.to_vec();
    let mut y = y1.to_vec();
    let mut out = vec![(x.clone(), y.clone())];
    // (x_{k-1}, y_{k-1}, v_{k-1}, w_{k-1}, rho_{k-1}, gamma_{k-1}, theta_{k-1})
    let mut prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64, f64)> = None;

    for k in 1..=steps {
        let kf = k as f64;
        let eta = (kf + 2.0).powf(-5.0 / 13.0);
        let alpha = a4 * (kf + 2.0).powf(-4.0 / 13.0);
        let rho = l * (kf + 1.0).powf(-2.0 / 13.0);
        let gamma = (a5 * (kf + 2.0).powf(-12.0 / 13.0)).min(1.0);
        let theta = (a6 * (kf + 2.0).powf(-8.0 / 13.0)).min(1.0);

        let noise = p.draw(b, &mut rng);
        let (gx, gy) = p.gradient(&noise, &x, &y, Some(rho));
        let (v, w) = match &prev {
            None => (gx, gy),
            Some((px, py, pv, pw, prho, pgamma, ptheta)) => {
                let (ox, oy) = p.gradient(&noise, px, py, Some(*prho));
                let mut v = vec![0.0; p.dx];
                for i in 0..p.dx {
                    v[i] = gx[i] + (1.0 - pgamma) * (pv[i] - ox[i]);
                }
                let mut w = vec![0.0; p.dy];
                for i in 0..p.dy {
                    w[i] = gy[i] + (1.0 - ptheta) * (pw[i] - oy[i]);
                }
                (v, w)
            }
        };

        let mut xn = vec![0.0; p.dx];
        for i in 0..p.dx {
            let mut t = x[i] - alpha * v[i];
            if lambda.0 > 0.0 {
                t = shrink(t, lambda.0 * alpha);
            }
            let xt = clamp(t, p.xl[i], p.xu[i]);
            xn[i] = x[i] + eta * (xt - x[i]);
        }
        let mut yn = vec![0.0; p.dy];
        for i in 0..p.dy {
            let mut t = y[i] + beta * w[i];
            if lambda.1 > 0.0 {
                t = shrink(t, lambda.1 * beta);
            }
            let yt = clamp(t, p.yl[i], p.yu[i]);
            yn[i] = y[i] + eta * (yt - y[i]);
        }

        prev = Some((x, y, v, w, rho, gamma, theta));
        x = xn;
        y = yn;
        out.push((x.clone(), y.clone()));
    }
    Ok(out)
}

/// Projected SGDA with constant stepsizes and a fresh batch per step.
#[allow(clippy::too_many_arguments)]
pub fn sgda(
    q: &QuadraticSaddle,
    alpha: f64,
    beta: f64,
    batch: usize,
    x1: &[f64],
    y1: &[f64],
    seed: u64,
    steps: u64,
) -> Result<Vec<Point>> {
    let p = Saddle::new(q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x1.to_vec();
    let mut y = y1.to_vec();
    let mut out = vec![(x.clone(), y.clone())];
    for _ in 0..steps {
        let noise = p.draw(batch, &mut rng);
        let (gx, gy) = p.gradient(&noise, &x, &y, None);
        let mut xn = vec![0.0; p.dx];
        for i in 0..p.dx {
            xn[i] = clamp(x[i] - alpha * gx[i], p.xl[i], p.xu[i]);
        }
        let mut yn = vec![0.0; p.dy];
        for i in 0..p.dy {
            yn[i] = clamp(y[i] + beta * gy[i], p.yl[i], p.yu[i]);
        }
        x = xn;
        y = yn;
        out.push((x.clone(), y.clone()));
    }
    Ok(out)
}
