#![allow(dead_code)]

use curvlab::discriminant::SymBilinear;
use curvlab::linalg::{CMat, CVec};
use curvlab::C64;
use std::f64::consts::PI;

/// Downhill simplex minimisation.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], step: f64, iters: usize) -> (f64, Vec<f64>) {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let centroid: Vec<f64> = (0..dim).map(|k| simplex[..dim].iter().map(|p| p[k]).sum::<f64>() / dim as f64).collect();
        let towards = |t: f64| -> Vec<f64> { (0..dim).map(|k| centroid[k] + t * (simplex[dim][k] - centroid[k])).collect() };
        let refl = towards(-1.0);
        let fr = f(&refl);
        if fr < vals[0] {
            let exp = towards(-2.0);
            let fe = f(&exp);
            if fe < fr {
                simplex[dim] = exp;
                vals[dim] = fe;
            } else {
                simplex[dim] = refl;
                vals[dim] = fr;
            }
        } else if fr < vals[dim - 1] {
            simplex[dim] = refl;
            vals[dim] = fr;
        } else {
            let con = towards(0.5);
            let fc = f(&con);
            if fc < vals[dim] {
                simplex[dim] = con;
                vals[dim] = fc;
            } else {
                for i in 1..=dim {
                    simplex[i] = (0..dim).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=dim).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (vals[best], simplex[best].clone())
}

/// Radical inverse of i in the given base.
pub fn halton(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Unit representative (cos t, e^{i f} sin t) of a point of CP^1.
pub fn cp1_point(theta: f64, phi: f64) -> CVec {
    CVec::from_vec(vec![C64::from(theta.cos()), C64::from_polar(theta.sin(), phi)])
}

/// L^2 distance from T, seen as a section of O(1,1)^r over CP^{p-1} x CP^{p-1}
/// (monomials X_j Y_k orthogonal of norm 1/p), to the sections vanishing at
/// ([x], [y]); computed as a least-squares projection onto the constraint
/// rows without using the structure of the constraint.
pub fn distance_to_sections_vanishing_at(t: &SymBilinear, x: &CVec, y: &CVec) -> f64 {
    let p = t.p();
    // constraint functional on vec(B) (row-major), B -> x^T B y
    let a = CMat::from_fn(1, p * p, |_, idx| x[idx / p] * y[idx % p]);
    let gram = &a * a.adjoint();
    let inv = gram.try_inverse().expect("nonzero constraint");
    let mut total = 0.0;
    for m in t.mats() {
        let v = CVec::from_fn(p * p, |idx, _| m[(idx / p, idx % p)]);
        // component of v in the row space of a (orthogonal complement of the constraint set)
        let proj = a.adjoint() * (&inv * (&a * &v));
        total += proj.norm_squared();
    }
    total.sqrt() / p as f64
}

/// Nearest-point search over pairs of points of CP^1 (p = 2): coarse grid
/// followed by simplex polishing from the best grid points.
pub fn nearest_point_distance(t: &SymBilinear) -> f64 {
    assert_eq!(t.p(), 2);
    let eval = |q: &[f64]| distance_to_sections_vanishing_at(t, &cp1_point(q[0], q[1]), &cp1_point(q[2], q[3]));
    let g = 12;
    let mut cands: Vec<(f64, Vec<f64>)> = Vec::new();
    for a in 0..=g {
        for b in 0..g {
            for c in 0..=g {
                for d in 0..g {
                    let q = vec![
                        PI / 2.0 * a as f64 / g as f64,
                        2.0 * PI * b as f64 / g as f64,
                        PI / 2.0 * c as f64 / g as f64,
                        2.0 * PI * d as f64 / g as f64,
                    ];
                    cands.push((eval(&q), q));
                }
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    cands
        .iter()
        .take(6)
        .map(|(_, q)| {
            let (v1, q1) = nelder_mead(eval, q, 0.05, 1500);
            let (v2, _) = nelder_mead(eval, &q1, 1e-3, 1500);
            v1.min(v2)
        })
        .fold(f64::INFINITY, f64::min)
}
