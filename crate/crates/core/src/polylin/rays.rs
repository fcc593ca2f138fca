//! Double description over the coefficient space of a subspace.

use nalgebra::{DMatrix, DVector};

use super::{inf_normalize, rank, SubspaceBasis};
use crate::error::{ReachError, Result};

pub const MAX_RAY_DIM: usize = 6;

const ZERO_TOL: f64 = 1e-10;

/// Generators of `{b ∈ subspace : h·b ≤ 0}`: the cone equals
/// `cone(rays) + span(lines)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtremeRays {
    pub rays: Vec<DVector<f64>>,
    pub lines: Vec<DVector<f64>>,
}

impl ExtremeRays {
    /// Conic generators only, with each line split into `±` rays.
    pub fn as_rays(&self) -> Vec<DVector<f64>> {
        let mut out = self.rays.clone();
        for l in &self.lines {
            out.push(l.clone());
            out.push(-l);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.rays.is_empty() && self.lines.is_empty()
    }
}

pub fn extreme_rays(normals: &[DVector<f64>], subspace: &SubspaceBasis) -> Result<ExtremeRays> {
    let k = subspace.dim();
    if k > MAX_RAY_DIM {
        return Err(ReachError::DimensionTooLarge {
            dim: k,
            max: MAX_RAY_DIM,
        });
    }
    if k == 0 {
        return Ok(ExtremeRays::default());
    }
    let q = subspace.matrix();
    let constraints: Vec<DVector<f64>> = normals
        .iter()
        .map(|h| q.tr_mul(h))
        .filter(|a| a.norm() > 1e-12)
        .map(|a| a.normalize())
        .collect();

    let mut lines: Vec<DVector<f64>> = (0..k)
        .map(|i| {
            let mut e = DVector::zeros(k);
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rays: Vec<DVector<f64>> = Vec::new();
    let mut seen: Vec<DVector<f64>> = Vec::new();

    for a in &constraints {
        let pivot = lines
            .iter()
            .enumerate()
            .map(|(i, l)| (i, a.dot(l)))
            .filter(|(_, d)| d.abs() > ZERO_TOL)
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()));

        if let Some((pi, d)) = pivot {
            let p = if d > 0.0 { -&lines[pi] } else { lines[pi].clone() };
            let ap = a.dot(&p);
            lines.remove(pi);
            for l in lines.iter_mut() {
                let f = a.dot(l) / ap;
                l.axpy(-f, &p, 1.0);
            }
            for r in rays.iter_mut() {
                let f = a.dot(r) / ap;
                r.axpy(-f, &p, 1.0);
                *r = inf_normalize(r);
            }
            rays.push(inf_normalize(&p));
            rays = dedup(rays);
        } else {
            let vals: Vec<f64> = rays.iter().map(|r| a.dot(r)).collect();
            let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] > ZERO_TOL).collect();
            let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] < -ZERO_TOL).collect();
            let mut next: Vec<DVector<f64>> = (0..rays.len())
                .filter(|&i| vals[i] <= ZERO_TOL)
                .map(|i| rays[i].clone())
                .collect();
            let target = k.saturating_sub(lines.len() + 2);
            for &ip in &pos {
                for &ineg in &neg {
                    let tight: Vec<&DVector<f64>> = seen
                        .iter()
                        .filter(|s| {
                            s.dot(&rays[ip]).abs() <= ZERO_TOL
                                && s.dot(&rays[ineg]).abs() <= ZERO_TOL
                        })
                        .collect();
                    let adjacent = if target == 0 {
                        true
                    } else if tight.len() < target {
                        false
                    } else {
                        let m = DMatrix::from_fn(tight.len(), k, |r, c| tight[r][c]);
                        rank(&m, 1e-9) == target
                    };
                    if adjacent {
                        let r = &rays[ineg] * vals[ip] - &rays[ip] * vals[ineg];
                        if r.amax() > 1e-12 {
                            next.push(inf_normalize(&r));
                        }
                    }
                }
            }
            rays = dedup(next);
        }
        seen.push(a.clone());
    }

    // An unconstrained pointed part of dimension 1 can leave a ray and its
    // negative; fold such pairs back into a line.
    let mut out_rays: Vec<DVector<f64>> = Vec::new();
    let mut used = vec![false; rays.len()];
    for i in 0..rays.len() {
        if used[i] {
            continue;
        }
        let partner = (i + 1..rays.len()).find(|&j| !used[j] && (&rays[i] + &rays[j]).amax() < 1e-9);
        if let Some(j) = partner {
            used[j] = true;
            lines.push(rays[i].clone());
        } else {
            out_rays.push(rays[i].clone());
        }
        used[i] = true;
    }

    let map = |v: &DVector<f64>| inf_normalize(&(q * v));
    Ok(ExtremeRays {
        rays: out_rays.iter().map(map).collect(),
        lines: orthonormal_lines(&lines).iter().map(map).collect(),
    })
}

fn dedup(rays: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for r in rays {
        let r = inf_normalize(&r);
        if r.amax() <= 1e-12 {
            continue;
        }
        if !out.iter().any(|o| (o - &r).amax() < 1e-9) {
            out.push(r);
        }
    }
    out
}

fn orthonormal_lines(lines: &[DVector<f64>]) -> Vec<DVector<f64>> {
    if lines.is_empty() {
        return Vec::new();
    }
    let m = DMatrix::from_columns(lines);
    let basis = super::image_basis(&m);
    (0..basis.dim()).map(|i| basis.column(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn unconstrained_plane_is_two_lines() {
        let r = extreme_rays(&[], &SubspaceBasis::full(2)).unwrap();
        assert!(r.rays.is_empty());
        assert_eq!(r.lines.len(), 2);
        assert_eq!(r.as_rays().len(), 4);
    }

    #[test]
    fn half_plane() {
        let r = extreme_rays(&[dvector![0.0, 1.0]], &SubspaceBasis::full(2)).unwrap();
        assert_eq!(r.lines.len(), 1);
        assert!(r.lines[0][1].abs() < 1e-12 && (r.lines[0][0].abs() - 1.0).abs() < 1e-12);
        assert_eq!(r.rays.len(), 1);
        assert!((&r.rays[0] - dvector![0.0, -1.0]).amax() < 1e-12);
    }

    #[test]
    fn positive_orthant_3d() {
        let normals = vec![
            dvector![-1.0, 0.0, 0.0],
            dvector![0.0, -1.0, 0.0],
            dvector![0.0, 0.0, -1.0],
        ];
        let r = extreme_rays(&normals, &SubspaceBasis::full(3)).unwrap();
        assert!(r.lines.is_empty());
        assert_eq!(r.rays.len(), 3);
    }

    #[test]
    fn square_pyramid() {
        // Cone over a square: 4 extreme rays (±1, ±1, 1).
        let normals = vec![
            dvector![1.0, 0.0, -1.0],
            dvector![-1.0, 0.0, -1.0],
            dvector![0.0, 1.0, -1.0],
            dvector![0.0, -1.0, -1.0],
        ];
        let r = extreme_rays(&normals, &SubspaceBasis::full(3)).unwrap();
        assert_eq!(r.rays.len(), 4);
        for ray in &r.rays {
            assert!((ray[2] - 1.0).abs() < 1e-12);
            assert!((ray[0].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pointed_zero_cone() {
        let normals = vec![dvector![1.0], dvector![-1.0]];
        let r = extreme_rays(&normals, &SubspaceBasis::full(1)).unwrap();
        assert!(r.is_zero());
    }

    #[test]
    fn too_large() {
        assert!(matches!(
            extreme_rays(&[], &SubspaceBasis::full(7)),
            Err(ReachError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn subspace_coordinates() {
        let sub = SubspaceBasis::from_columns(&dmatrix![1.0; 1.0; 0.0]);
        let r = extreme_rays(&[dvector![1.0, 0.0, 0.0]], &sub).unwrap();
        assert_eq!(r.rays.len(), 1);
        assert!((&r.rays[0] - dvector![-1.0, -1.0, 0.0]).amax() < 1e-12);
    }
}
