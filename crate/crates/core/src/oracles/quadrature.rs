//! Deterministic expectations over the direction laws, used to recover the
//! conditional mean of the two-point estimator when no closed form is known.

use std::sync::OnceLock;

use crate::point::Point;

/// Gauss–Hermite nodes and weights for the weight `exp(-x^2)`, by Newton
/// iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const HERMITE_NODES: usize = 48;
const CIRCLE_NODES: usize = 512;

/// Nodes and probability weights for a standard normal variable.
fn normal_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_hermite(HERMITE_NODES);
        let s = std::f64::consts::PI.sqrt();
        (
            x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            w.iter().map(|v| v / s).collect(),
        )
    })
}

/// `E[g(u)]` for `u ~ N(0, I_d)`, `d <= 2`. Returns `None` for larger `d`.
pub fn gaussian_expectation(dim: usize, g: impl Fn(&Point) -> Point) -> Option<Point> {
    let (nodes, weights) = normal_rule();
    let mut acc: Option<Point> = None;
    let mut add = |w: f64, u: Point| {
        let v = g(&u).scale(w);
        acc = Some(match acc.take() {
            Some(a) => &a + &v,
            None => v,
        });
    };
    match dim {
        1 => {
            for (z, w) in nodes.iter().zip(weights) {
                add(*w, Point::from_vec(vec![*z]));
            }
        }
        2 => {
            for (z1, w1) in nodes.iter().zip(weights) {
                for (z2, w2) in nodes.iter().zip(weights) {
                    add(w1 * w2, Point::from_vec(vec![*z1, *z2]));
                }
            }
        }
        _ => return None,
    }
    acc
}

/// `E[g(u)]` for `u = sqrt(d) * v` with `v` uniform on the unit sphere, `d <= 2`.
pub fn scaled_sphere_expectation(dim: usize, g: impl Fn(&Point) -> Point) -> Option<Point> {
    match dim {
        1 => {
            let a = g(&Point::from_vec(vec![1.0]));
            let b = g(&Point::from_vec(vec![-1.0]));
            Some((&a + &b).scale(0.5))
        }
        2 => {
            let r = std::f64::consts::SQRT_2;
            let mut acc: Option<Point> = None;
            for k in 0..CIRCLE_NODES {
                let th = 2.0 * std::f64::consts::PI * k as f64 / CIRCLE_NODES as f64;
                let v = g(&Point::from_vec(vec![r * th.cos(), r * th.sin()]));
                acc = Some(match acc {
                    Some(a) => &a + &v,
                    None => v,
                });
            }
            acc.map(|a| a.scale(1.0 / CIRCLE_NODES as f64))
        }
        _ => None,
    }
}
